# -*- coding: utf-8 -*-
"""
策略对比：三种训练方式 × 多个种子，从相同的初始参数出发、使用相同的迭代预算。

输出:
    <output_dir>/<strategy>/seed_<n>/...     每次运行的完整预训练输出
    comparison_report.txt                    按 策略 × 任务 × 阶段 排版的表格
    comparison_report.json                   同样内容的结构化版本
"""
import copy
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from colorama import Fore, Style

from .errors import ConfigError, ScheduleError
from .finetune import resolve_finetune_paths, run_finetune
from .log_utils import WORKER_ENV, setup_logging
from .pretrain import run_pretrain
from .run_config import RunConfig
from .scheduler import STRATEGY_LABELS, Strategy, build_schedule, metric_name
from .tasks import get_task_spec
from .utils import ensure_dir, write_json

logger = logging.getLogger(__name__)

STRATEGY_ORDER = (Strategy.CONTINUAL, Strategy.MULTITASK, Strategy.CONTINUAL_MULTITASK)
REPORT_TEXT = "comparison_report.txt"
REPORT_JSON = "comparison_report.json"


@dataclass
class StrategyRun:
    """一次 (策略, 种子) 运行的结果。"""
    strategy: str
    seed: int
    allocation: List[List[int]]
    task_counts: Dict[int, int]
    # 阶段 -> {task id -> 指标}
    metrics: Dict[int, Dict[int, float]]
    finetune: Optional[float] = None
    output_dir: str = ""

    def final_metrics(self) -> Dict[int, float]:
        return self.metrics[max(self.metrics)] if self.metrics else {}

    def forgetting(self, task_id: int) -> float:
        """该任务从历史最高点到计划结束的下降量。"""
        values = [stage[task_id] for _, stage in sorted(self.metrics.items()) if task_id in stage]
        if not values:
            return 0.0
        return max(values) - values[-1]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "allocation": self.allocation,
            "task_counts": {str(k): v for k, v in sorted(self.task_counts.items())},
            "metrics": {
                str(s): {str(t): v for t, v in sorted(row.items())} for s, row in sorted(self.metrics.items())
            },
            "finetune": self.finetune,
        }


@dataclass
class ComparisonReport:
    tasks: List[int]
    seeds: List[int]
    per_task_budget: int
    runs: List[StrategyRun] = field(default_factory=list)

    def runs_for(self, strategy: Strategy) -> List[StrategyRun]:
        return [r for r in self.runs if r.strategy == strategy.value]

    def median_metric(self, strategy: Strategy, stage: int, task_id: int) -> Optional[float]:
        values = [r.metrics[stage][task_id] for r in self.runs_for(strategy)
                  if stage in r.metrics and task_id in r.metrics[stage]]
        return float(np.median(values)) if values else None

    def median_final(self, strategy: Strategy, task_id: int) -> Optional[float]:
        values = [r.final_metrics()[task_id] for r in self.runs_for(strategy) if task_id in r.final_metrics()]
        return float(np.median(values)) if values else None

    def median_forgetting(self, strategy: Strategy, task_id: Optional[int] = None) -> float:
        task_id = self.tasks[0] if task_id is None else task_id
        return float(np.median([r.forgetting(task_id) for r in self.runs_for(strategy)]))

    def median_finetune(self, strategy: Strategy) -> Optional[float]:
        values = [r.finetune for r in self.runs_for(strategy) if r.finetune is not None]
        return float(np.median(values)) if values else None

    def to_dict(self) -> dict:
        summary = {}
        for strategy in STRATEGY_ORDER:
            summary[strategy.value] = {
                "final": {str(t): self.median_final(strategy, t) for t in self.tasks},
                "forgetting_first_task": self.median_forgetting(strategy),
                "finetune": self.median_finetune(strategy),
            }
        return {
            "tasks": self.tasks,
            "seeds": self.seeds,
            "per_task_budget": self.per_task_budget,
            "runs": [r.to_dict() for r in self.runs],
            "median": summary,
        }

    def format_text(self) -> str:
        names = {t: get_task_spec(t).name for t in self.tasks}
        lines = [
            "策略对比报告",
            f"任务: {', '.join(names[t] for t in self.tasks)}",
            f"每任务迭代数 N={self.per_task_budget}; 种子: {', '.join(map(str, self.seeds))} (取中位数)",
            "",
        ]
        for strategy in STRATEGY_ORDER:
            runs = self.runs_for(strategy)
            if not runs:
                continue
            lines.append(f"== {strategy.value} ({STRATEGY_LABELS[strategy]}) ==")
            stages = len(runs[0].allocation)
            header = ["task", "metric"] + [f"stage {s + 1}" for s in range(stages)]
            lines.append("\t".join(header))
            for i, task_id in enumerate(self.tasks):
                counts = [str(row[i]) if row[i] else "-" for row in runs[0].allocation]
                lines.append("\t".join([names[task_id], "iterations"] + counts))
                cells = []
                for s in range(stages):
                    value = self.median_metric(strategy, s, task_id)
                    cells.append("-" if value is None else f"{value:.4f}")
                lines.append("\t".join([names[task_id], metric_name(task_id)] + cells))
            finetune = self.median_finetune(strategy)
            lines.append(f"fine-tune accuracy: {'-' if finetune is None else f'{finetune:.4f}'}")
            lines.append(f"first-task forgetting: {self.median_forgetting(strategy):.4f}")
            lines.append("")
        return "\n".join(lines)


def check_equal_budgets(config: RunConfig) -> Dict[str, List[List[int]]]:
    """
    三种方式的迭代分配，并确认每个任务的总迭代数相同。

    Raises:
        ScheduleError: 某任务在不同方式下的总迭代数不一致
    """
    s = config.schedule
    plans = {
        strategy: build_schedule(s.tasks, s.per_task_budget, strategy=strategy, reserve=s.reserve)
        for strategy in STRATEGY_ORDER
    }
    reference = plans[STRATEGY_ORDER[0]]
    for strategy, plan in plans.items():
        for task_id in plan.tasks:
            if plan.task_total(task_id) != reference.task_total(task_id):
                raise ScheduleError(
                    f"{strategy.value} 下任务 {get_task_spec(task_id).name} 的总迭代数与其他方式不同",
                    {"strategy": strategy.value, "task_id": task_id},
                )
    return {strategy.value: [list(row) for row in plan.allocation] for strategy, plan in plans.items()}


def _finetune_available(config: RunConfig) -> bool:
    try:
        resolve_finetune_paths(config)
    except ConfigError as e:
        logger.warning(f"[对比] 跳过微调: {e.message}")
        return False
    return True


def _run_one(config: RunConfig, strategy: str, seed: int, with_finetune: bool) -> StrategyRun:
    run_config = copy.deepcopy(config)
    run_config.seed = seed
    run_config.schedule.strategy = strategy
    run_config.output_dir = os.path.join(config.output_dir, strategy, f"seed_{seed}")
    print(f"{Fore.CYAN}[对比]{Style.RESET_ALL} {strategy} / seed {seed}")
    result = run_pretrain(run_config)
    finetune = None
    if with_finetune and result.final_checkpoint:
        finetune = run_finetune(run_config, result.final_checkpoint, init="pretrained").accuracy
    return StrategyRun(
        strategy=strategy,
        seed=seed,
        allocation=[list(row) for row in result.plan.allocation],
        task_counts=result.trace.counts(),
        metrics=result.metric_table(),
        finetune=finetune,
        output_dir=result.output_dir,
    )


def _worker_init(log_dir: str, level: str):
    os.environ[WORKER_ENV] = "1"
    setup_logging(log_dir, level)


def compare_strategies(
    config: RunConfig,
    seeds: Optional[Sequence[int]] = None,
    workers: int = 1,
    with_finetune: bool = True,
) -> ComparisonReport:
    """
    在相同预算下比较三种训练方式。

    同一种子下三种方式的初始参数完全相同 (都由该种子初始化)。
    workers > 1 时各次运行放到独立进程中执行，结果与串行一致。
    """
    seeds = list(seeds or config.compare_seeds)
    allocations = check_equal_budgets(config)
    out_dir = ensure_dir(config.output_dir)
    with_finetune = with_finetune and _finetune_available(config)
    jobs = [(strategy.value, seed) for seed in seeds for strategy in STRATEGY_ORDER]
    logger.info(f"[对比] 共 {len(jobs)} 次运行, workers={workers}")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=(out_dir, config.log_level)) as pool:
            futures = [pool.submit(_run_one, config, strategy, seed, with_finetune) for strategy, seed in jobs]
            runs = [f.result() for f in futures]
    else:
        runs = [_run_one(config, strategy, seed, with_finetune) for strategy, seed in jobs]

    tasks = [get_task_spec(name).task_id for name in config.schedule.tasks]
    report = ComparisonReport(tasks, seeds, config.schedule.per_task_budget, runs)
    for run in runs:
        if run.allocation != allocations[run.strategy]:
            raise ScheduleError(f"{run.strategy} 的实际分配与计划不一致", {"seed": run.seed})

    with open(os.path.join(out_dir, REPORT_TEXT), "w", encoding="utf-8", newline="\n") as f:
        f.write(report.format_text() + "\n")
    write_json(os.path.join(out_dir, REPORT_JSON), report.to_dict())
    print(f"{Fore.GREEN}[成功]{Style.RESET_ALL} 对比报告: {os.path.join(out_dir, REPORT_TEXT)}")
    return report
