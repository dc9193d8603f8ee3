# -*- coding: utf-8 -*-
"""
执行器模块包：每个子命令对应一个执行函数，参数为 argparse 解析结果。
"""

from .common import print_task_header

from .data_executor import (
    execute_gen_data,
    execute_list_tasks,
)

from .train_executor import (
    execute_pretrain,
    execute_eval,
)

from .finetune_executor import execute_finetune

from .compare_executor import execute_compare


__all__ = [
    # 共用
    "print_task_header",
    # 数据
    "execute_gen_data",
    "execute_list_tasks",
    # 训练
    "execute_pretrain",
    "execute_eval",
    # 微调
    "execute_finetune",
    # 对比
    "execute_compare",
]
