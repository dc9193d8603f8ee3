# -*- coding: utf-8 -*-
"""
小雪预训练工坊 (XiaoXue Pretrain Lab) - 桌面规模的持续多任务预训练实验

纯 numpy 实现的小型 Transformer，按三种训练方式 (持续学习 / 多任务 / 持续多任务)
依次引入预训练任务，并用合成语料和下游微调比较它们的效果。

项目结构:
- main.py: 命令行入口
- src/executors/: 各子命令执行器
- src/numerics.py, src/optim.py: 自动求导与优化器
- src/corpus.py, src/tasks.py, src/streams.py: 语料与预训练任务
- src/model.py, src/checkpoint.py: 模型与检查点
- src/scheduler.py: 迭代分配与阶段执行
- src/pretrain.py, src/finetune.py, src/compare.py: 实验流程
"""

import json
import sys

from src.log_utils import setup_logging

logger = setup_logging()

from colorama import Fore, Style, init as colorama_init

colorama_init()

from src.cli_parsers import build_parser
from src.errors import PretrainError
from src.executors import (
    execute_compare,
    execute_eval,
    execute_finetune,
    execute_gen_data,
    execute_list_tasks,
    execute_pretrain,
)

COMMANDS = {
    "gen-data": execute_gen_data,
    "pretrain": execute_pretrain,
    "finetune": execute_finetune,
    "eval": execute_eval,
    "compare-strategies": execute_compare,
    "list-tasks": execute_list_tasks,
}


def _report_error(payload: dict):
    print(json.dumps(payload, ensure_ascii=False, sort_keys=True), file=sys.stderr)
    print(f"{Fore.RED}[错误] {payload['message']}{Style.RESET_ALL}", file=sys.stderr)


def main(argv=None) -> int:
    """主入口函数。成功返回 0，业务错误返回 1 (参数错误由 argparse 以 2 退出)。"""
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except PretrainError as e:
        logger.error(f"{args.command} 失败: {e}")
        _report_error(e.to_dict())
        return 1
    except (OSError, ValueError) as e:
        logger.exception(f"{args.command} 失败")
        _report_error({"error": type(e).__name__, "message": str(e), "context": {}})
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
