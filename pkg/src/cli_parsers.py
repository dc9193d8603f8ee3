# -*- coding: utf-8 -*-
"""
命令行子命令定义：每个子命令的参数注册放在独立函数中，main.py 只负责组装与分发。
"""
import argparse

from .scheduler import Strategy


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """所有运行类子命令共用的参数 (覆盖配置文件中的同名项)。"""
    group = parser.add_argument_group("通用设置")
    group.add_argument("--config", metavar="配置文件", default=None, help="JSON 运行配置；不给时全部使用默认值")
    group.add_argument("--seed", type=int, default=None, help="覆盖配置中的 seed")
    group.add_argument("--output-dir", dest="output_dir", default=None, help="覆盖配置中的 output_dir")
    group.add_argument(
        "--strategy",
        choices=[s.value for s in Strategy],
        default=None,
        help="覆盖配置中的训练方式",
    )


def register_gen_data_parser(subs) -> None:
    """注册 gen-data 子命令。"""
    parser = subs.add_parser("gen-data", help="生成合成语料 (预训练 + 微调)")
    _add_common_arguments(parser)
    parser.add_argument("--out", metavar="输出目录", default=None, help="默认为 <output_dir>/data")


def register_pretrain_parser(subs) -> None:
    """注册 pretrain 子命令。"""
    parser = subs.add_parser("pretrain", help="按配置执行多阶段预训练")
    _add_common_arguments(parser)
    parser.add_argument("--resume", metavar="检查点", default=None, help="从某个阶段检查点继续训练")


def register_finetune_parser(subs) -> None:
    """注册 finetune 子命令。"""
    parser = subs.add_parser("finetune", help="在预训练检查点上微调分类任务")
    _add_common_arguments(parser)
    parser.add_argument("--checkpoint", metavar="检查点", default=None, help="预训练检查点 (random 初始化时可省略)")
    parser.add_argument("--init", choices=["pretrained", "random"], default=None, help="覆盖 finetune.init")


def register_eval_parser(subs) -> None:
    """注册 eval 子命令。"""
    parser = subs.add_parser("eval", help="在评估集上评估检查点携带的全部预训练头")
    _add_common_arguments(parser)
    parser.add_argument("--checkpoint", metavar="检查点", required=True)


def register_compare_parser(subs) -> None:
    """注册 compare-strategies 子命令。"""
    parser = subs.add_parser("compare-strategies", help="相同预算下比较三种训练方式")
    _add_common_arguments(parser)
    parser.add_argument("--seeds", default="", help="逗号分隔的种子列表，覆盖 compare_seeds (如 1,2,3)")
    parser.add_argument("--workers", type=int, default=1, help="并行进程数 (默认串行)")
    parser.add_argument("--no-finetune", dest="no_finetune", action="store_true", help="跳过每次运行后的微调")


def register_list_tasks_parser(subs) -> None:
    """注册 list-tasks 子命令。"""
    subs.add_parser("list-tasks", help="列出预训练任务及其适用语料")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xiaoxue-pretrain",
        description="小雪预训练工坊：桌面规模的持续多任务预训练实验",
    )
    subs = parser.add_subparsers(dest="command", metavar="子命令")
    subs.required = True
    register_gen_data_parser(subs)
    register_pretrain_parser(subs)
    register_finetune_parser(subs)
    register_eval_parser(subs)
    register_compare_parser(subs)
    register_list_tasks_parser(subs)
    return parser
