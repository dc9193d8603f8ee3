# -*- coding: utf-8 -*-
"""
执行器共用模块：包含各执行器共享的辅助函数。
"""
from typing import List

from colorama import Fore, Style

from ..log_utils import setup_logging
from ..notify import send_run_notification
from ..run_config import RunConfig, apply_overrides, load_run_config
from ..utils import ensure_dir


def print_task_header(task_name: str):
    """
    打印任务开始的标题栏。

    Args:
        task_name: 任务名称
    """
    print(f"\n{'='*50}")
    print(f"{Fore.CYAN}【{task_name}】{Style.RESET_ALL}")
    print(f"{'='*50}\n")


def parse_comma_list(value: str) -> List[str]:
    """
    解析逗号分隔的字符串，保留顺序并去重。

    Args:
        value: 逗号分隔的字符串 (如 "1,2,3")
    """
    if not value or not value.strip():
        return []
    items = []
    for item in value.split(','):
        item = item.strip()
        if item and item not in items:
            items.append(item)
    return items


def load_config_from_args(args) -> RunConfig:
    """读取 --config 并应用 --seed / --output-dir / --strategy，随后把日志切到输出目录。"""
    config = load_run_config(getattr(args, 'config', None))
    apply_overrides(
        config,
        seed=getattr(args, 'seed', None),
        output_dir=getattr(args, 'output_dir', None),
        strategy=getattr(args, 'strategy', None),
    )
    setup_logging(ensure_dir(config.output_dir), config.log_level)
    return config


def notify_done(config: RunConfig, task_name: str, summary: dict):
    """运行结束后按配置发送通知 (未启用时什么也不做)。"""
    send_run_notification(config.notify, task_name, summary)
