# -*- coding: utf-8 -*-
"""
数据执行器模块：合成语料生成与任务列表。
"""
import os

from colorama import Fore, Style

from ..corpus import CorpusTag
from ..synthetic import MANIFEST_NAME, gen_synthetic_corpus
from ..tasks import TASK_SPECS, applicable_tasks
from .common import load_config_from_args, print_task_header


def execute_gen_data(args):
    """
    执行合成语料生成任务。

    Args:
        args: argparse 解析后的参数对象
    """
    print_task_header("生成合成语料")
    config = load_config_from_args(args)
    out_dir = os.path.abspath(args.out) if getattr(args, 'out', None) else os.path.join(config.output_dir, "data")

    manifest = gen_synthetic_corpus(config.synthetic, config.seed, out_dir)

    print(f"\n[数据清单] {os.path.join(out_dir, MANIFEST_NAME)}")
    for split in ("train", "heldout"):
        print(f"  {split}: {', '.join(sorted(manifest[split])) or '无'}")
    print(f"\n在运行配置中设置 data.manifest = \"{out_dir}\" 即可使用这批数据")


def execute_list_tasks(args):
    """打印任务注册表与 任务 × 语料 适用矩阵。"""
    print_task_header("预训练任务")
    for spec in sorted(TASK_SPECS.values(), key=lambda s: s.task_id):
        arity = spec.arity if spec.arity is not None else "运行时确定"
        print(f"  {Fore.CYAN}{spec.task_id}{Style.RESET_ALL} {spec.name:<24} {spec.display_name:<8} "
              f"{spec.family.value:<16} {spec.level.value:<9} 类别数: {arity}")

    print("\n[任务 × 语料]")
    tags = list(CorpusTag)
    print("  " + " " * 24 + " ".join(f"{t.value[:8]:>9}" for t in tags))
    for spec in sorted(TASK_SPECS.values(), key=lambda s: s.task_id):
        cells = ["✓" if spec in applicable_tasks(t) else "·" for t in tags]
        print(f"  {spec.name:<24}" + " ".join(f"{c:>9}" for c in cells))
