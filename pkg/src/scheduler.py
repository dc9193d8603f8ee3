# -*- coding: utf-8 -*-
"""
训练调度模块：三种持续预训练方式的迭代分配与阶段执行。

CONTINUAL            每个阶段只训练新引入的任务，N 次迭代全部放在引入阶段
MULTITASK            单一阶段，所有任务同时训练，各 N 次
CONTINUAL_MULTITASK  每阶段引入一个新任务，旧任务每阶段保留 reserve 次迭代，
                     新任务在引入阶段拿到 N - reserve × (之后的阶段数)

例: 4 个任务，N=50k，reserve=10k 时各任务在 4 个阶段上的迭代数为
    (20k,10k,10k,10k) / (-,30k,10k,10k) / (-,-,40k,10k) / (-,-,-,50k)
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from colorama import Fore, Style

from .checkpoint import save_checkpoint
from .errors import ConfigError, EmptyHeldoutError, PretrainError, ScheduleError
from .model import ModelParams, head_level, loss_and_grads, predict
from .optim import OptimizerState, adam_step, noam_lr
from .streams import TaskStream, collate
from .tasks import TASK_SPECS, LossLevel, TaskInstance, get_task_spec

logger = logging.getLogger(__name__)


class Strategy(Enum):
    CONTINUAL = "continual"
    MULTITASK = "multitask"
    CONTINUAL_MULTITASK = "continual_multitask"


STRATEGY_LABELS = {
    Strategy.CONTINUAL: "持续学习",
    Strategy.MULTITASK: "多任务学习",
    Strategy.CONTINUAL_MULTITASK: "持续多任务学习",
}


def parse_strategy(value: Union[str, Strategy]) -> Strategy:
    if isinstance(value, Strategy):
        return value
    try:
        return Strategy(str(value).strip().lower().replace("-", "_"))
    except ValueError:
        raise ConfigError(
            f"未知训练方式: {value} (可选: {', '.join(s.value for s in Strategy)})", {"strategy": value}
        ) from None


class StageComplete(Exception):
    """当前阶段的迭代配额已全部用完。"""


# ---------------------------------------------------------------------------
# 迭代分配
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StagePlan:
    """
    迭代分配矩阵。

    tasks 与 intro_stages 一一对应；allocation[s][i] 是第 i 个任务在阶段 s 的迭代数。
    """
    strategy: Strategy
    tasks: Tuple[int, ...]
    intro_stages: Tuple[int, ...]
    per_task_budget: int
    stage_count: int
    reserve: int
    allocation: Tuple[Tuple[int, ...], ...]

    def stage_allocation(self, stage: int) -> Dict[int, int]:
        """阶段 stage 中配额大于 0 的任务 -> 迭代数。"""
        if not 0 <= stage < self.stage_count:
            raise ScheduleError(f"阶段越界: {stage} (共 {self.stage_count} 个阶段)")
        return {t: n for t, n in zip(self.tasks, self.allocation[stage]) if n > 0}

    def task_total(self, task_id: int) -> int:
        index = self.tasks.index(task_id)
        return sum(row[index] for row in self.allocation)

    def stage_total(self, stage: int) -> int:
        return sum(self.allocation[stage])

    @property
    def total_iterations(self) -> int:
        return sum(sum(row) for row in self.allocation)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "tasks": list(self.tasks),
            "intro_stages": list(self.intro_stages),
            "per_task_budget": self.per_task_budget,
            "stage_count": self.stage_count,
            "reserve": self.reserve,
            "allocation": [list(row) for row in self.allocation],
        }

    def format_table(self) -> str:
        """按 任务 × 阶段 排版，未引入的阶段显示为 -。"""
        header = ["task"] + [f"stage {s + 1}" for s in range(self.stage_count)]
        lines = ["\t".join(header)]
        for i, task_id in enumerate(self.tasks):
            cells = [get_task_spec(task_id).name]
            for s in range(self.stage_count):
                cells.append("-" if s < self.intro_stages[i] else str(self.allocation[s][i]))
            lines.append("\t".join(cells))
        return "\n".join(lines)


def _resolve_task_ids(tasks: Sequence[Union[int, str]]) -> Tuple[int, ...]:
    ids = tuple(get_task_spec(t).task_id for t in tasks)
    if not ids:
        raise ScheduleError("任务列表为空")
    if len(set(ids)) != len(ids):
        raise ScheduleError(f"任务列表有重复: {list(tasks)}")
    return ids


def build_schedule(
    tasks: Sequence[Union[int, str]],
    per_task_budget: int,
    stage_count: Optional[int] = None,
    strategy: Union[str, Strategy] = Strategy.CONTINUAL_MULTITASK,
    reserve: int = 0,
) -> StagePlan:
    """
    计算迭代分配矩阵。

    Args:
        tasks: 按引入顺序排列的任务 (名称或 id)，第 i 个任务在阶段 i 引入
        per_task_budget: 每个任务的总迭代数 N
        stage_count: 阶段数 S；持续类方式必须等于任务数 (None 表示取任务数)，
                     多任务方式固定为 1 个阶段
        strategy: 训练方式
        reserve: 持续多任务方式下旧任务每阶段保留的迭代数

    Raises:
        ScheduleError: 参数不合法，或 reserve 过大导致某任务在引入阶段的配额为负
    """
    strategy = parse_strategy(strategy)
    task_ids = _resolve_task_ids(tasks)
    count = len(task_ids)
    if per_task_budget < 1:
        raise ScheduleError(f"每个任务的迭代数 N 至少为 1: {per_task_budget}")
    if reserve < 0:
        raise ScheduleError(f"reserve 不能为负: {reserve}")

    if strategy == Strategy.MULTITASK:
        return StagePlan(
            strategy, task_ids, (0,) * count, per_task_budget, 1, 0,
            ((per_task_budget,) * count,),
        )

    stages = count if stage_count is None else stage_count
    if stages != count:
        raise ScheduleError(
            f"每阶段引入一个新任务，阶段数 ({stages}) 必须等于任务数 ({count})",
            {"stage_count": stages, "task_count": count},
        )
    allocation = [[0] * count for _ in range(stages)]
    for i, task_id in enumerate(task_ids):
        if strategy == Strategy.CONTINUAL:
            allocation[i][i] = per_task_budget
            continue
        later_stages = stages - 1 - i
        intro_share = per_task_budget - reserve * later_stages
        if intro_share < 0:
            name = get_task_spec(task_id).name
            raise ScheduleError(
                f"reserve 过大: 任务 {name} 需要 {reserve} × {later_stages} 次保留迭代，超过 N={per_task_budget}",
                {"task": name, "task_id": task_id, "reserve": reserve, "later_stages": later_stages},
            )
        allocation[i][i] = intro_share
        for s in range(i + 1, stages):
            allocation[s][i] = reserve
    plan = StagePlan(
        strategy, task_ids, tuple(range(count)), per_task_budget, stages,
        reserve if strategy == Strategy.CONTINUAL_MULTITASK else 0,
        tuple(tuple(row) for row in allocation),
    )
    logger.info(f"[调度] {strategy.value}: {count} 个任务, N={per_task_budget}, S={stages}, reserve={plan.reserve}")
    return plan


def next_task(plan: StagePlan, stage: int, remaining: Dict[int, int]) -> int:
    """
    从阶段剩余配额中选出下一个任务并把它的剩余数减 1。

    选剩余比例 (剩余 / 阶段初始配额) 最大的任务，相同时取 task id 最小者。

    Raises:
        StageComplete: 本阶段配额已用完
    """
    initial = plan.stage_allocation(stage)
    best, best_ratio = None, None
    for task_id in sorted(remaining):
        left = remaining[task_id]
        if left <= 0:
            continue
        if task_id not in initial:
            raise ScheduleError(f"任务 {task_id} 不在阶段 {stage} 的分配中")
        ratio = Fraction(left, initial[task_id])
        if best_ratio is None or ratio > best_ratio:
            best, best_ratio = task_id, ratio
    if best is None:
        raise StageComplete(stage)
    remaining[best] -= 1
    return best


def stage_sequence(plan: StagePlan, stage: int) -> List[int]:
    """阶段 stage 的完整任务序列。"""
    remaining = dict(plan.stage_allocation(stage))
    sequence = []
    while True:
        try:
            sequence.append(next_task(plan, stage, remaining))
        except StageComplete:
            return sequence


# ---------------------------------------------------------------------------
# 训练记录
# ---------------------------------------------------------------------------

@dataclass
class TraceRecord:
    global_step: int
    stage: int
    task_id: int
    loss: float
    lr: float


@dataclass
class MetricRecord:
    stage: int
    task_id: int
    metric: str
    value: float


@dataclass
class StageTrace:
    """逐迭代记录 + 各阶段检查点 + 各阶段评估结果。"""
    records: List[TraceRecord] = field(default_factory=list)
    checkpoints: Dict[int, str] = field(default_factory=dict)
    metrics: List[MetricRecord] = field(default_factory=list)

    def counts(self) -> Dict[int, int]:
        result: Dict[int, int] = {}
        for r in self.records:
            result[r.task_id] = result.get(r.task_id, 0) + 1
        return result

    def stage_counts(self, stage: int) -> Dict[int, int]:
        result: Dict[int, int] = {}
        for r in self.records:
            if r.stage == stage:
                result[r.task_id] = result.get(r.task_id, 0) + 1
        return result

    def losses(self, task_id: int) -> List[float]:
        return [r.loss for r in self.records if r.task_id == task_id]

    def metric(self, stage: int, task_id: int) -> Optional[float]:
        for m in self.metrics:
            if m.stage == stage and m.task_id == task_id:
                return m.value
        return None

    def extend(self, other: "StageTrace"):
        self.records.extend(other.records)
        self.checkpoints.update(other.checkpoints)
        self.metrics.extend(other.metrics)


def append_jsonl(path: Optional[str], rows: Sequence[dict]):
    """追加写入 JSON 行 (键排序，保证同样的输入字节一致)。"""
    if not path or not rows:
        return
    with open(path, "a", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path: str) -> List[dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


# ---------------------------------------------------------------------------
# 阶段执行
# ---------------------------------------------------------------------------

@dataclass
class TrainState:
    """跨阶段传递的训练状态。"""
    params: ModelParams
    optimizer: OptimizerState
    global_step: int = 0
    next_stage: int = 0
    task_steps: Dict[int, int] = field(default_factory=dict)


@dataclass
class StageOptions:
    """
    阶段执行参数。

    early_stop_patience 为 0 时严格执行分配的迭代数；大于 0 时若连续 patience 个窗口的
    平均 loss 没有下降超过 early_stop_min_delta，则提前结束该阶段。
    """
    batch_size: int = 8
    per_task_warmup: bool = False
    reset_moments_each_stage: bool = False
    fused_heads: bool = False
    head_weights: Dict[str, float] = field(default_factory=dict)
    checkpoint_dir: Optional[str] = None
    trace_path: Optional[str] = None
    log_every: int = 50
    early_stop_patience: int = 0
    early_stop_window: int = 50
    early_stop_min_delta: float = 1e-3
    # 附加写入检查点元数据的内容 (词表等)
    extra_metadata: Dict[str, object] = field(default_factory=dict)

    def validate(self) -> tuple[bool, str]:
        if self.batch_size < 1:
            return False, f"batch_size 至少为 1: {self.batch_size}"
        if self.early_stop_patience < 0 or self.early_stop_window < 1:
            return False, "提前结束参数非法"
        return True, ""


def _enabled_heads(task_id: int, params: ModelParams, options: StageOptions) -> List[str]:
    name = get_task_spec(task_id).name
    heads = [name]
    if options.fused_heads and name == "knowledge_masking" and "capitalization" in params.config.head_arities:
        heads.append("capitalization")
    return heads


class _PlateauDetector:
    def __init__(self, options: StageOptions):
        self.window = options.early_stop_window
        self.patience = options.early_stop_patience
        self.min_delta = options.early_stop_min_delta
        self.buffer: List[float] = []
        self.best = None
        self.stale = 0

    def update(self, loss: float) -> bool:
        """加入一个 loss，返回是否应提前结束。"""
        if self.patience <= 0:
            return False
        self.buffer.append(loss)
        if len(self.buffer) < self.window:
            return False
        mean = float(np.mean(self.buffer))
        self.buffer.clear()
        if self.best is None or mean < self.best - self.min_delta:
            self.best, self.stale = mean, 0
            return False
        self.stale += 1
        return self.stale >= self.patience


def checkpoint_metadata(
    state: TrainState,
    plan: StagePlan,
    streams: Dict[int, TaskStream],
    stage: int,
    extra: Optional[dict] = None,
) -> dict:
    metadata = dict(extra or {})
    metadata.update({
        "stage": stage,
        "next_stage": state.next_stage,
        "global_step": state.global_step,
        "task_steps": {str(k): v for k, v in sorted(state.task_steps.items())},
        "plan": plan.to_dict(),
        "streams": {str(k): s.state_dict() for k, s in sorted(streams.items())},
    })
    return metadata


def run_stage(
    plan: StagePlan,
    stage: int,
    state: TrainState,
    streams: Dict[int, TaskStream],
    options: StageOptions,
) -> Tuple[TrainState, StageTrace, Optional[str]]:
    """
    执行一个阶段。

    每次迭代从被调度任务的样本流取一个 batch，只计算该任务 (融合模式下加上附带的
    token 头) 的 loss 并做一次 Adam 更新。阶段结束写出检查点。

    Returns:
        (更新后的状态, 本阶段记录, 检查点路径)
    """
    ok, msg = options.validate()
    if not ok:
        raise ConfigError(msg)
    allocation = plan.stage_allocation(stage)
    missing = sorted(set(allocation) - set(streams))
    if missing:
        raise ScheduleError(f"阶段 {stage} 缺少任务样本流: {missing}", {"stage": stage})

    trace = StageTrace()
    if stage > 0 and options.reset_moments_each_stage:
        state.optimizer.reset_moments()
        logger.info(f"[调度] 阶段 {stage + 1}: 已清空 Adam 动量")

    names = ", ".join(f"{get_task_spec(t).name}×{n}" for t, n in allocation.items()) or "无"
    print(f"{Fore.CYAN}[阶段 {stage + 1}/{plan.stage_count}]{Style.RESET_ALL} {names}")

    remaining = dict(allocation)
    plateau = _PlateauDetector(options)
    while True:
        try:
            task_id = next_task(plan, stage, remaining)
        except StageComplete:
            break
        try:
            batch = streams[task_id].next_batch(options.batch_size)
            heads = _enabled_heads(task_id, state.params, options)
            loss, grads = loss_and_grads(state.params, batch, heads, options.head_weights)
            task_step = state.task_steps.get(task_id, 0) + 1
            lr_step = task_step if options.per_task_warmup else state.global_step + 1
            state.params.tensors = adam_step(state.params.tensors, grads, state.optimizer, lr_step=lr_step)
        except PretrainError as e:
            raise e.with_context(stage=stage, global_step=state.global_step + 1, task_id=task_id)
        state.global_step += 1
        state.task_steps[task_id] = task_step
        record = TraceRecord(state.global_step, stage, task_id, loss, noam_lr(state.optimizer, lr_step))
        trace.records.append(record)
        append_jsonl(options.trace_path, [asdict(record)])
        if options.log_every and state.global_step % options.log_every == 0:
            logger.info(f"[训练] step {state.global_step} stage {stage + 1} {get_task_spec(task_id).name} loss={loss:.4f}")
        if plateau.update(loss):
            logger.warning(f"[调度] 阶段 {stage + 1} 的 loss 已平稳，提前结束 (剩余 {sum(remaining.values())} 次)")
            print(f"{Fore.YELLOW}[警告] 阶段 {stage + 1} 提前结束{Style.RESET_ALL}")
            break

    state.next_stage = stage + 1
    path = None
    if options.checkpoint_dir:
        path = os.path.join(options.checkpoint_dir, f"stage_{stage + 1}.ckpt")
        metadata = checkpoint_metadata(state, plan, streams, stage, options.extra_metadata)
        save_checkpoint(path, state.params, metadata, state.optimizer)
        trace.checkpoints[stage] = path
    return state, trace, path


# ---------------------------------------------------------------------------
# 评估
# ---------------------------------------------------------------------------

def metric_name(task_id: int) -> str:
    spec = get_task_spec(task_id)
    if spec.name == "knowledge_masking":
        return "masked_token_accuracy"
    return "token_accuracy" if spec.level == LossLevel.TOKEN else "accuracy"


def evaluate_task(
    params: ModelParams,
    name: str,
    instances: Sequence[TaskInstance],
    batch_size: int = 32,
    task_id: Optional[int] = None,
) -> float:
    """
    在评估集上计算准确率 (token 级头按 mask 位置计)。

    Args:
        name: 输出头名称
        task_id: 覆盖输入的任务嵌入 id (微调头使用)
    """
    if not instances:
        raise EmptyHeldoutError(f"任务 {name} 的评估集为空", {"task": name})
    spec = TASK_SPECS.get(name)
    label_task = spec.task_id if spec is not None else None
    sentence_level = head_level(name) == LossLevel.SENTENCE
    correct, total = 0, 0
    for start in range(0, len(instances), batch_size):
        chunk = list(instances[start: start + batch_size])
        predictions = predict(params, collate(chunk, task_id=task_id), name)
        for inst, pred in zip(chunk, predictions):
            if sentence_level:
                gold = np.array([inst.sentence_label], dtype=np.int64)
            else:
                labels = inst.labels_for(label_task)
                gold = np.array([labels[p] for p, on in enumerate(inst.mask_for(label_task)) if on], dtype=np.int64)
            correct += int((pred == gold).sum())
            total += len(gold)
    if total == 0:
        raise EmptyHeldoutError(f"任务 {name} 的评估集没有可评估位置", {"task": name})
    return correct / total


def evaluate_all_tasks(
    params: ModelParams,
    heldout: Dict[int, Sequence[TaskInstance]],
    batch_size: int = 32,
) -> Dict[int, float]:
    """
    对每个任务的评估集计算指标。

    Returns:
        task id -> 准确率 (知识掩码为被掩位置的还原准确率)
    """
    result = {}
    for task_id in sorted(heldout):
        name = get_task_spec(task_id).name
        result[task_id] = evaluate_task(params, name, heldout[task_id], batch_size)
    return result
