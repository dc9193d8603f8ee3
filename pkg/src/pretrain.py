# -*- coding: utf-8 -*-
"""
预训练流程：读数据 -> 建词表与模型 -> 计算迭代分配 -> 逐阶段训练并评估。

输出目录结构:
    run_config.json      本次运行的完整配置
    plan.json            迭代分配矩阵
    trace.jsonl          逐迭代记录 (global_step, stage, task_id, loss, lr)
    metrics.jsonl        每个阶段结束时各任务在评估集上的指标
    checkpoints/stage_{s}.ckpt
    run_timing.json      各阶段耗时 (唯一含时间的文件)
"""
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

from colorama import Fore, Style

from ._version import __version__
from .checkpoint import load_checkpoint
from .corpus import RelationVocabulary, Vocabulary
from .errors import ConfigError, EmptyHeldoutError, PretrainError, TaskConstructionError
from .model import ModelParams, build_model_config, init_params
from .run_config import RunConfig, resolve_data_paths
from .scheduler import (
    MetricRecord,
    StagePlan,
    StageTrace,
    TraceRecord,
    TrainState,
    append_jsonl,
    build_schedule,
    evaluate_all_tasks,
    metric_name,
    read_jsonl,
    run_stage,
)
from .streams import HELDOUT_SALT, TRAIN_SALT, PretrainData, TaskStream, build_task_streams, load_pretrain_data
from .tasks import TASK_SPECS, TaskConfig, TaskInstance, get_task_spec
from .utils import ensure_dir, format_duration, write_json

logger = logging.getLogger(__name__)

TRACE_FILE = "trace.jsonl"
METRICS_FILE = "metrics.jsonl"
PLAN_FILE = "plan.json"
RUN_CONFIG_FILE = "run_config.json"
TIMING_FILE = "run_timing.json"
CHECKPOINT_DIR = "checkpoints"


@dataclass
class PretrainContext:
    """一次预训练需要的全部输入 (不含训练状态)。"""
    config: RunConfig
    data: PretrainData
    task_config: TaskConfig
    plan: StagePlan
    streams: Dict[int, TaskStream]
    heldout: Dict[int, List[TaskInstance]]
    initial_params: ModelParams

    def vocab_metadata(self) -> dict:
        return {
            "vocab": self.data.vocab.to_list(),
            "relations": self.data.relations.to_list() if self.data.relations is not None else [],
        }


@dataclass
class PretrainResult:
    output_dir: str
    plan: StagePlan
    trace: StageTrace
    params: ModelParams
    checkpoints: Dict[int, str] = field(default_factory=dict)

    @property
    def final_checkpoint(self) -> Optional[str]:
        if not self.checkpoints:
            return None
        return self.checkpoints[max(self.checkpoints)]

    def metric_table(self) -> Dict[int, Dict[int, float]]:
        """阶段 -> {task id -> 指标}。"""
        table: Dict[int, Dict[int, float]] = {}
        for m in self.trace.metrics:
            table.setdefault(m.stage, {})[m.task_id] = m.value
        return table


def vocab_from_metadata(metadata: dict) -> tuple:
    """从检查点元数据恢复 (词表, 篇章关系词表)。"""
    if "vocab" not in metadata:
        raise ConfigError("检查点中没有词表，无法编码文本 (不是预训练流程写出的检查点?)")
    relations = metadata.get("relations") or []
    return Vocabulary(metadata["vocab"]), (RelationVocabulary(relations) if relations else None)


def model_task_names(config: RunConfig) -> List[str]:
    """模型需要的预训练头；融合模式下知识掩码样本附带大小写标签。"""
    names = list(config.schedule.tasks)
    if config.schedule.fused_heads and "knowledge_masking" in names and "capitalization" not in names:
        names.append("capitalization")
    return names


def build_heldout_sets(
    config: RunConfig,
    train_data: PretrainData,
    heldout_paths: Dict[str, str],
    task_config: TaskConfig,
    tasks: Optional[List[str]] = None,
) -> Dict[int, List[TaskInstance]]:
    """
    为每个任务 (默认为调度任务) 生成固定的评估集。

    评估语料中缺少某任务所需的数据时，改用训练语料在评估种子域下生成，并给出警告。
    """
    heldout_data = None
    if heldout_paths:
        heldout_data = load_pretrain_data(heldout_paths, vocab=train_data.vocab, relations=train_data.relations)

    result = {}
    for name in (tasks or config.schedule.tasks):
        spec = get_task_spec(name)
        stream = None
        if heldout_data is not None:
            try:
                stream = TaskStream(spec, heldout_data, task_config, config.seed, HELDOUT_SALT)
            except TaskConstructionError:
                logger.warning(f"[评估] 评估语料不含任务 {name} 的数据，改用训练语料生成")
        if stream is None:
            stream = TaskStream(spec, train_data, task_config, config.seed, HELDOUT_SALT)
        instances = stream.fixed_set(config.eval.heldout_size)
        if not instances:
            raise EmptyHeldoutError(f"任务 {name} 的评估集为空", {"task": name})
        result[spec.task_id] = instances
    return result


def prepare_pretrain(config: RunConfig, initial_params: Optional[ModelParams] = None) -> PretrainContext:
    """
    读取数据并建立模型、样本流、评估集与迭代分配。

    Args:
        config: 运行配置
        initial_params: 给定时使用这组初始参数 (策略对比保证各策略从同一起点出发)
    """
    paths = resolve_data_paths(config)
    data = load_pretrain_data(paths["train"], min_count=config.data.min_count)
    task_config = config.task_config(len(data.vocab))
    schedule = config.schedule
    plan = build_schedule(schedule.tasks, schedule.per_task_budget, strategy=schedule.strategy, reserve=schedule.reserve)

    model_config = build_model_config(config.model_base(), len(data.vocab), model_task_names(config), data.relation_count)
    if initial_params is None:
        initial_params = init_params(model_config, config.seed)
    elif initial_params.config.to_dict() != model_config.to_dict():
        raise ConfigError("给定的初始参数与当前模型配置不一致")

    streams = build_task_streams(
        data, schedule.tasks, task_config, config.seed, TRAIN_SALT, fused=schedule.fused_heads
    )
    heldout = build_heldout_sets(config, data, paths["heldout"], task_config)
    return PretrainContext(config, data, task_config, plan, streams, heldout, initial_params.copy())


def _restore_state(ctx: PretrainContext, resume_path: str) -> TrainState:
    ckpt = load_checkpoint(resume_path, expect=ctx.initial_params.config)
    meta = ckpt.metadata
    if meta.get("plan") != ctx.plan.to_dict():
        raise ConfigError("检查点的迭代分配与当前配置不一致，无法续训", {"path": resume_path})
    if ckpt.optimizer is None:
        raise ConfigError("检查点没有保存优化器状态，无法续训", {"path": resume_path})
    for key, stream_state in meta.get("streams", {}).items():
        ctx.streams[int(key)].load_state_dict(stream_state)
    return TrainState(
        params=ckpt.params,
        optimizer=ckpt.optimizer,
        global_step=int(meta["global_step"]),
        next_stage=int(meta["next_stage"]),
        task_steps={int(k): int(v) for k, v in meta.get("task_steps", {}).items()},
    )


def _rewrite_jsonl(path: str, keep) -> List[dict]:
    """只保留满足 keep 的行 (续训时丢弃断点之后的记录)。"""
    rows = read_jsonl(path) if os.path.exists(path) else []
    kept = [row for row in rows if keep(row)]
    if os.path.exists(path):
        os.remove(path)
    append_jsonl(path, kept)
    return kept


def snapshot_metrics(ctx: PretrainContext, params: ModelParams, stage: int) -> List[MetricRecord]:
    """阶段结束时评估截至该阶段已引入的全部任务。"""
    introduced = {t: ctx.heldout[t] for t, s in zip(ctx.plan.tasks, ctx.plan.intro_stages) if s <= stage}
    scores = evaluate_all_tasks(params, introduced, ctx.config.eval.batch_size)
    return [MetricRecord(stage, task_id, metric_name(task_id), value) for task_id, value in sorted(scores.items())]


def run_pretrain(
    config: RunConfig,
    resume: Optional[str] = None,
    initial_params: Optional[ModelParams] = None,
    context: Optional[PretrainContext] = None,
) -> PretrainResult:
    """
    执行完整的预训练计划。

    Args:
        config: 运行配置
        resume: 从该阶段检查点继续 (之后的阶段重新执行，结果与不中断时一致)
        initial_params: 指定初始参数
        context: 已准备好的上下文 (不给则由 config 准备)

    Raises:
        PretrainError: 任一环节失败，附带阶段 / 步数上下文
    """
    out_dir = ensure_dir(config.output_dir)
    ckpt_dir = ensure_dir(os.path.join(out_dir, CHECKPOINT_DIR))
    trace_path = os.path.join(out_dir, TRACE_FILE)
    metrics_path = os.path.join(out_dir, METRICS_FILE)

    ctx = context or prepare_pretrain(config, initial_params)
    plan = ctx.plan
    print(f"{Fore.CYAN}[计划]{Style.RESET_ALL} {plan.strategy.value}, 共 {plan.total_iterations} 次迭代")
    print(plan.format_table())

    trace = StageTrace()
    if resume:
        state = _restore_state(ctx, resume)
        kept = _rewrite_jsonl(trace_path, lambda r: r["global_step"] <= state.global_step)
        trace.records = [TraceRecord(**r) for r in kept]
        kept = _rewrite_jsonl(metrics_path, lambda r: r["stage"] < state.next_stage)
        trace.metrics = [MetricRecord(**r) for r in kept]
        for s in range(state.next_stage):
            path = os.path.join(ckpt_dir, f"stage_{s + 1}.ckpt")
            if os.path.exists(path):
                trace.checkpoints[s] = path
        logger.info(f"[续训] 从 {resume} 继续: 阶段 {state.next_stage + 1}, global_step {state.global_step}")
    else:
        for path in (trace_path, metrics_path):
            if os.path.exists(path):
                os.remove(path)
        state = TrainState(ctx.initial_params.copy(), config.optimizer.new_state())

    write_json(os.path.join(out_dir, RUN_CONFIG_FILE), config.to_dict())
    write_json(os.path.join(out_dir, PLAN_FILE), plan.to_dict())

    options = config.stage_options(checkpoint_dir=ckpt_dir, trace_path=trace_path)
    options.extra_metadata = ctx.vocab_metadata()
    timing = {"version": __version__, "stages": {}}
    started = time.time()
    for stage in range(state.next_stage, plan.stage_count):
        stage_start = time.time()
        try:
            state, stage_trace, _ = run_stage(plan, stage, state, ctx.streams, options)
            stage_trace.metrics = snapshot_metrics(ctx, state.params, stage)
        except PretrainError as e:
            raise e.with_context(stage=stage, global_step=state.global_step)
        append_jsonl(metrics_path, [asdict(m) for m in stage_trace.metrics])
        trace.extend(stage_trace)
        elapsed = time.time() - stage_start
        timing["stages"][str(stage + 1)] = round(elapsed, 3)
        scores = ", ".join(f"{get_task_spec(m.task_id).name}={m.value:.3f}" for m in stage_trace.metrics)
        print(f"{Fore.GREEN}[成功]{Style.RESET_ALL} 阶段 {stage + 1} 完成 ({format_duration(elapsed)}): {scores}")

    timing["total_seconds"] = round(time.time() - started, 3)
    write_json(os.path.join(out_dir, TIMING_FILE), timing)
    return PretrainResult(out_dir, plan, trace, state.params, dict(trace.checkpoints))


def evaluate_checkpoint(config: RunConfig, checkpoint_path: str) -> Dict[str, float]:
    """
    用检查点自带的词表重建评估集，评估它携带的每个预训练头。

    Returns:
        任务名 -> 指标
    """
    ckpt = load_checkpoint(checkpoint_path)
    vocab, relations = vocab_from_metadata(ckpt.metadata)
    heads = [name for name in ckpt.params.config.head_arities if name in TASK_SPECS]
    if not heads:
        raise ConfigError("检查点没有预训练任务头", {"path": checkpoint_path})
    paths = resolve_data_paths(config)
    data = load_pretrain_data(paths["train"], vocab=vocab, relations=relations)
    task_config = config.task_config(len(vocab))
    task_config.max_seq_len = ckpt.params.config.max_seq_len
    task_config.max_segments = ckpt.params.config.max_segments
    ordered = [get_task_spec(name).name for name in sorted(heads, key=lambda n: get_task_spec(n).task_id)]
    heldout = build_heldout_sets(config, data, paths["heldout"], task_config, tasks=ordered)
    scores = evaluate_all_tasks(ckpt.params, heldout, config.eval.batch_size)
    return {get_task_spec(task_id).name: value for task_id, value in scores.items()}
