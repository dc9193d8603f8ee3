# -*- coding: utf-8 -*-
"""
运行配置模块：读取 JSON 运行配置，补全预设默认值并做校验。

配置文件中未出现的键取 presets.py 中的默认值；出现未知键直接报错。
相对路径一律相对于配置文件所在目录解析。
"""
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

from .errors import ConfigError
from .notify import NotifyConfig
from .optim import OptimizerState
from .presets import (
    DEFAULT_COMPARE_SEEDS,
    DEFAULT_FINETUNE_PRESET,
    DEFAULT_MODEL_PRESET,
    DEFAULT_TASK_ORDER,
    FINETUNE_PRESETS,
    MODEL_PRESETS,
    OPTIMIZER_PRESETS,
    SCHEDULE_DEFAULTS,
)
from .scheduler import StageOptions, parse_strategy
from .synthetic import SyntheticSpec, load_manifest
from .tasks import OVERFLOW_POLICIES, TASK_SPECS, MaskingConfig, TaskConfig
from .utils import read_json, resolve_path

logger = logging.getLogger(__name__)

_DESK_OPT = OPTIMIZER_PRESETS["desk"]
_FT = FINETUNE_PRESETS[DEFAULT_FINETUNE_PRESET]


@dataclass
class DataConfig:
    """数据路径。manifest 指向 gen-data 的输出目录或清单文件，train/heldout 中的条目优先。"""
    manifest: str = ""
    train: Dict[str, str] = field(default_factory=dict)
    heldout: Dict[str, str] = field(default_factory=dict)
    min_count: int = 1


@dataclass
class OptimizerConfig:
    peak_lr: float = _DESK_OPT["peak_lr"]
    warmup_steps: int = _DESK_OPT["warmup_steps"]
    beta1: float = _DESK_OPT["beta1"]
    beta2: float = _DESK_OPT["beta2"]
    epsilon: float = _DESK_OPT["epsilon"]
    # 每个任务前若干次迭代重新 warmup
    per_task_warmup: bool = False
    reset_moments_each_stage: bool = False

    def new_state(self) -> OptimizerState:
        return OptimizerState(
            peak_lr=self.peak_lr,
            warmup_steps=self.warmup_steps,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
        )


@dataclass
class ScheduleConfig:
    strategy: str = SCHEDULE_DEFAULTS["strategy"]
    tasks: List[str] = field(default_factory=lambda: list(DEFAULT_TASK_ORDER))
    per_task_budget: int = SCHEDULE_DEFAULTS["per_task_budget"]
    reserve: int = SCHEDULE_DEFAULTS["reserve"]
    batch_size: int = SCHEDULE_DEFAULTS["batch_size"]
    fused_heads: bool = False
    head_weights: Dict[str, float] = field(default_factory=dict)
    log_every: int = 50
    early_stop_patience: int = 0
    early_stop_window: int = 50
    early_stop_min_delta: float = 1e-3


@dataclass
class EvalConfig:
    heldout_size: int = SCHEDULE_DEFAULTS["heldout_size"]
    batch_size: int = SCHEDULE_DEFAULTS["eval_batch_size"]


@dataclass
class FineTuneConfig:
    """
    微调任务。train / dev 为 TSV (label \\t text_a [\\t text_b])；为空时取数据清单中的微调文件。
    init: "pretrained" 从检查点初始化，"random" 随机初始化 (用于对照)。
    """
    name: str = "classifier"
    train: str = ""
    dev: str = ""
    classes: int = 0
    epochs: int = _FT["epochs"]
    lr: float = _FT["lr"]
    batch_size: int = _FT["batch_size"]
    warmup_steps: int = _FT["warmup_steps"]
    task_id: int = _FT["task_id"]
    init: str = "pretrained"


@dataclass
class RunConfig:
    """一次运行的全部参数。"""
    seed: int = 1
    output_dir: str = "runs/default"
    log_level: str = "INFO"
    model_preset: str = DEFAULT_MODEL_PRESET
    model: Dict[str, object] = field(default_factory=dict)
    overflow: str = "split"
    masking: MaskingConfig = field(default_factory=MaskingConfig)
    data: DataConfig = field(default_factory=DataConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    finetune: FineTuneConfig = field(default_factory=FineTuneConfig)
    notify: NotifyConfig = field(default_factory=NotifyConfig)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    compare_seeds: List[int] = field(default_factory=lambda: list(DEFAULT_COMPARE_SEEDS))

    def model_base(self) -> dict:
        """预设结构参数 + 配置中的覆盖项。"""
        if self.model_preset not in MODEL_PRESETS:
            raise ConfigError(f"未知模型预设: {self.model_preset} (可选: {', '.join(MODEL_PRESETS)})")
        base = dict(MODEL_PRESETS[self.model_preset])
        base.update(self.model)
        return base

    def task_config(self, vocab_size: int) -> TaskConfig:
        base = self.model_base()
        return TaskConfig(
            vocab_size=vocab_size,
            max_seq_len=int(base["max_seq_len"]),
            max_segments=int(base["max_segments"]),
            masking=self.masking,
            overflow=self.overflow,
        )

    def stage_options(self, checkpoint_dir: Optional[str] = None, trace_path: Optional[str] = None) -> StageOptions:
        s = self.schedule
        return StageOptions(
            batch_size=s.batch_size,
            per_task_warmup=self.optimizer.per_task_warmup,
            reset_moments_each_stage=self.optimizer.reset_moments_each_stage,
            fused_heads=s.fused_heads,
            head_weights=dict(s.head_weights),
            checkpoint_dir=checkpoint_dir,
            trace_path=trace_path,
            log_every=s.log_every,
            early_stop_patience=s.early_stop_patience,
            early_stop_window=s.early_stop_window,
            early_stop_min_delta=s.early_stop_min_delta,
        )

    def validate(self) -> tuple[bool, str]:
        if self.model_preset not in MODEL_PRESETS:
            return False, f"未知模型预设: {self.model_preset}"
        if self.overflow not in OVERFLOW_POLICIES:
            return False, f"overflow 只能为 {'/'.join(OVERFLOW_POLICIES)}: {self.overflow}"
        ok, msg = self.masking.validate()
        if not ok:
            return False, msg
        try:
            parse_strategy(self.schedule.strategy)
        except ConfigError as e:
            return False, e.message
        for name in self.schedule.tasks:
            if name not in TASK_SPECS:
                return False, f"未知预训练任务: {name}"
        if not self.schedule.tasks or len(set(self.schedule.tasks)) != len(self.schedule.tasks):
            return False, "schedule.tasks 不能为空或重复"
        if self.schedule.per_task_budget < 1 or self.schedule.reserve < 0 or self.schedule.batch_size < 1:
            return False, "schedule 中 per_task_budget / reserve / batch_size 取值非法"
        for head in self.schedule.head_weights:
            if head not in TASK_SPECS:
                return False, f"head_weights 中的未知头: {head}"
        opt = self.optimizer.new_state()
        ok, msg = opt.validate()
        if not ok:
            return False, msg
        if self.eval.heldout_size < 1 or self.eval.batch_size < 1:
            return False, "eval.heldout_size / eval.batch_size 至少为 1"
        ft = self.finetune
        if ft.epochs < 0 or ft.lr <= 0 or ft.batch_size < 1 or ft.warmup_steps < 1:
            return False, "finetune 中 epochs / lr / batch_size / warmup_steps 取值非法"
        if ft.init not in ("pretrained", "random"):
            return False, f"finetune.init 只能为 pretrained / random: {ft.init}"
        if ft.classes == 1 or ft.classes < 0:
            return False, f"finetune.classes 至少为 2: {ft.classes}"
        ok, msg = self.notify.validate()
        if not ok:
            return False, msg
        ok, msg = self.synthetic.validate()
        if not ok:
            return False, msg
        if not self.compare_seeds:
            return False, "compare_seeds 不能为空"
        return True, ""

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data, section: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"配置段 {section} 必须是对象")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"配置段 {section} 包含未知字段: {', '.join(sorted(unknown))}", {"section": section})
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"配置段 {section} 无效: {e}", {"section": section}) from None


_SECTIONS = {
    "masking": MaskingConfig,
    "data": DataConfig,
    "optimizer": OptimizerConfig,
    "schedule": ScheduleConfig,
    "eval": EvalConfig,
    "finetune": FineTuneConfig,
    "notify": NotifyConfig,
    "synthetic": SyntheticSpec,
}


def run_config_from_dict(data: dict, base_dir: str = ".") -> RunConfig:
    """由字典构建 RunConfig，相对路径相对 base_dir 解析。"""
    data = dict(data or {})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"运行配置包含未知字段: {', '.join(sorted(unknown))}")
    sections = {name: _build(cls, data.pop(name, None), name) for name, cls in _SECTIONS.items()}
    config = RunConfig(**data, **sections)

    config.output_dir = resolve_path(config.output_dir, base_dir)
    config.data.manifest = resolve_path(config.data.manifest, base_dir)
    config.data.train = {k: resolve_path(v, base_dir) for k, v in config.data.train.items()}
    config.data.heldout = {k: resolve_path(v, base_dir) for k, v in config.data.heldout.items()}
    config.finetune.train = resolve_path(config.finetune.train, base_dir)
    config.finetune.dev = resolve_path(config.finetune.dev, base_dir)

    ok, msg = config.validate()
    if not ok:
        raise ConfigError(msg)
    return config


def load_run_config(path: Optional[str] = None) -> RunConfig:
    """
    读取运行配置。

    Args:
        path: JSON 配置文件；None 时全部使用默认值 (相对路径相对当前目录)
    """
    if path is None:
        return run_config_from_dict({}, os.getcwd())
    if not os.path.isfile(path):
        raise ConfigError(f"配置文件不存在: {path}", {"path": path})
    try:
        data = read_json(path)
    except ValueError as e:
        raise ConfigError(f"配置文件不是合法 JSON: {e}", {"path": path}) from None
    logger.info(f"[配置] 已读取运行配置: {path}")
    return run_config_from_dict(data, os.path.dirname(os.path.abspath(path)))


def apply_overrides(
    config: RunConfig,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
    strategy: Optional[str] = None,
) -> RunConfig:
    """命令行参数覆盖配置文件中的值。"""
    if seed is not None:
        config.seed = int(seed)
    if output_dir:
        config.output_dir = os.path.abspath(output_dir)
    if strategy:
        config.schedule.strategy = parse_strategy(strategy).value
    return config


def resolve_data_paths(config: RunConfig) -> Dict[str, Dict[str, str]]:
    """
    汇总 train / heldout 语料路径 (清单 + 显式条目) 与微调文件。

    Raises:
        ConfigError: 没有任何训练语料，或引用的文件不存在
    """
    train, heldout, finetune = {}, {}, {}
    if config.data.manifest:
        manifest = load_manifest(config.data.manifest)
        train.update(manifest.get("train", {}))
        heldout.update(manifest.get("heldout", {}))
        finetune = dict(manifest.get("finetune", {}))
    train.update(config.data.train)
    heldout.update(config.data.heldout)
    if config.finetune.train:
        finetune["train"] = config.finetune.train
    if config.finetune.dev:
        finetune["dev"] = config.finetune.dev

    if not train:
        raise ConfigError("没有配置训练语料 (data.manifest 或 data.train)")
    for split, paths in (("train", train), ("heldout", heldout)):
        for tag, path in paths.items():
            if not os.path.isfile(path):
                raise ConfigError(f"{split} 语料文件不存在: {path}", {"split": split, "tag": tag, "path": path})
    return {"train": train, "heldout": heldout, "finetune": finetune}
