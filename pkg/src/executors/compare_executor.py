# -*- coding: utf-8 -*-
"""
策略对比执行器模块。
"""
from ..compare import STRATEGY_ORDER, compare_strategies
from ..errors import ConfigError
from .common import load_config_from_args, notify_done, parse_comma_list, print_task_header


def execute_compare(args):
    """
    执行三种训练方式的对比实验。

    Args:
        args: argparse 解析后的参数对象
    """
    print_task_header("训练方式对比")
    config = load_config_from_args(args)
    seeds = None
    if getattr(args, 'seeds', ''):
        try:
            seeds = [int(s) for s in parse_comma_list(args.seeds)]
        except ValueError:
            raise ConfigError(f"--seeds 必须是逗号分隔的整数: {args.seeds}") from None
    if getattr(args, 'workers', 1) < 1:
        raise ConfigError(f"--workers 至少为 1: {args.workers}")

    report = compare_strategies(
        config,
        seeds=seeds,
        workers=args.workers,
        with_finetune=not getattr(args, 'no_finetune', False),
    )

    print("\n" + "=" * 50)
    print("报告预览:")
    print("=" * 50)
    print(report.format_text())
    notify_done(config, "训练方式对比", {
        s.value: round(report.median_forgetting(s), 4) for s in STRATEGY_ORDER
    })
