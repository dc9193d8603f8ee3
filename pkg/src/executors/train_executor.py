# -*- coding: utf-8 -*-
"""
训练执行器模块：预训练与检查点评估。
"""
import os

from colorama import Fore, Style

from ..pretrain import evaluate_checkpoint, run_pretrain
from ..utils import write_json
from .common import load_config_from_args, notify_done, print_task_header

EVAL_RESULT_FILE = "eval_result.json"


def execute_pretrain(args):
    """
    执行多阶段预训练任务。

    Args:
        args: argparse 解析后的参数对象
    """
    print_task_header("持续多任务预训练")
    config = load_config_from_args(args)
    print(f"[输出目录] {config.output_dir}")
    print(f"[训练方式] {config.schedule.strategy}, 任务: {', '.join(config.schedule.tasks)}")

    result = run_pretrain(config, resume=getattr(args, 'resume', None))

    final = result.metric_table().get(result.plan.stage_count - 1, {})
    print(f"\n{'='*50}")
    print(f"{Fore.GREEN}[完成]{Style.RESET_ALL} 共 {len(result.trace.records)} 次迭代")
    print(f"  最终检查点: {result.final_checkpoint}")
    notify_done(config, "预训练", {
        "strategy": config.schedule.strategy,
        "iterations": len(result.trace.records),
        "final_metrics": {str(k): round(v, 4) for k, v in sorted(final.items())},
    })


def execute_eval(args):
    """评估检查点携带的每个预训练头，结果写入 eval_result.json。"""
    print_task_header("检查点评估")
    config = load_config_from_args(args)

    scores = evaluate_checkpoint(config, args.checkpoint)

    for name, value in scores.items():
        print(f"  {name:<24} {value:.4f}")
    path = os.path.join(config.output_dir, EVAL_RESULT_FILE)
    write_json(path, {"checkpoint": os.path.abspath(args.checkpoint), "metrics": scores})
    print(f"\n{Fore.GREEN}[成功]{Style.RESET_ALL} 评估结果: {path}")
