# -*- coding: utf-8 -*-
"""
微调执行器模块。
"""
from ..finetune import run_finetune
from .common import load_config_from_args, notify_done, print_task_header


def execute_finetune(args):
    """
    执行下游分类微调任务。

    Args:
        args: argparse 解析后的参数对象
    """
    print_task_header("下游微调")
    config = load_config_from_args(args)

    result = run_finetune(config, getattr(args, 'checkpoint', None), init=getattr(args, 'init', None))

    print(f"  微调检查点: {result.checkpoint}")
    notify_done(config, "微调", {"name": result.name, "accuracy": round(result.accuracy, 4), "init": result.init})
