# -*- coding: utf-8 -*-
"""
下游微调：在预训练检查点 (或随机初始化) 上挂接 [CLS] 分类头并训练。

数据文件为 TSV，每行 label \\t text_a [\\t text_b]，label 为 0 起的整数。
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from colorama import Fore, Style

from .checkpoint import check_structure, load_checkpoint, save_checkpoint
from .corpus import Vocabulary, build_vocab, read_text_lines
from .errors import ConfigError, CorpusFormatError, LabelError, PretrainError
from .model import ModelConfig, ModelParams, add_head, init_params, loss_and_grads
from .optim import OptimizerState, adam_step
from .pretrain import vocab_from_metadata
from .run_config import RunConfig
from .scheduler import evaluate_task
from .streams import collate
from .synthetic import load_manifest
from .tasks import TaskInstance, make_classification_instance
from .utils import ensure_dir, write_json

logger = logging.getLogger(__name__)

RESULT_FILE = "finetune_result.json"


@dataclass
class FineTuneExample:
    label: int
    text_a: str
    text_b: Optional[str] = None


@dataclass
class FineTuneResult:
    name: str
    accuracy: float
    class_count: int
    init: str
    epochs: int
    steps: int
    params: ModelParams
    checkpoint: Optional[str] = None
    losses: List[float] = field(default_factory=list)

    @property
    def chance(self) -> float:
        return 1.0 / self.class_count

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "accuracy": self.accuracy,
            "class_count": self.class_count,
            "init": self.init,
            "epochs": self.epochs,
            "steps": self.steps,
            "checkpoint": self.checkpoint,
        }


def load_finetune_examples(path: str) -> List[FineTuneExample]:
    """
    读取微调 TSV (单句 2 列，句对 3 列；同一文件内列数须一致)。

    Raises:
        CorpusFormatError: 列数不对或列数混杂
        LabelError: 标签不是非负整数
    """
    examples = []
    width = None
    for line_no, line in enumerate(read_text_lines(path), start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) not in (2, 3):
            raise CorpusFormatError(f"应有 2 或 3 列，实际 {len(parts)} 列", {"path": path, "line": line_no})
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise CorpusFormatError("单句与句对样本不能混在同一文件", {"path": path, "line": line_no})
        if not parts[0].isdigit():
            raise LabelError(f"分类标签必须为非负整数: {parts[0]!r}", {"path": path, "line": line_no})
        examples.append(FineTuneExample(int(parts[0]), parts[1], parts[2] if width == 3 else None))
    logger.info(f"[微调] {path}: {len(examples)} 条样本")
    return examples


def resolve_finetune_paths(config: RunConfig) -> Dict[str, object]:
    """微调文件：配置中的显式路径优先，否则取数据清单中的 finetune 段。"""
    ft = config.finetune
    found: Dict[str, object] = {}
    if config.data.manifest:
        found.update(load_manifest(config.data.manifest).get("finetune", {}))
    if ft.train:
        found["train"] = ft.train
    if ft.dev:
        found["dev"] = ft.dev
    if ft.classes:
        found["classes"] = ft.classes
    for key in ("train", "dev"):
        if not found.get(key):
            raise ConfigError(f"没有配置微调{'训练' if key == 'train' else '验证'}文件 (finetune.{key})")
        if not os.path.isfile(found[key]):
            raise ConfigError(f"微调文件不存在: {found[key]}", {"path": found[key]})
    return found


def encode_examples(
    examples: List[FineTuneExample],
    vocab: Vocabulary,
    config: RunConfig,
    max_seq_len: int,
    max_segments: int,
) -> List[TaskInstance]:
    task_config = config.task_config(len(vocab))
    task_config.max_seq_len = max_seq_len
    task_config.max_segments = max_segments
    return [
        make_classification_instance(e.text_a, e.text_b, e.label, vocab, task_config, config.finetune.task_id)
        for e in examples
    ]


def _base_params(
    config: RunConfig,
    checkpoint_path: Optional[str],
    init: str,
    train_examples: List[FineTuneExample],
) -> tuple:
    """返回 (初始参数, 词表)。"""
    if checkpoint_path:
        ckpt = load_checkpoint(checkpoint_path)
        vocab, _ = vocab_from_metadata(ckpt.metadata)
        expected = ModelConfig.from_dict(config.model_base())
        expected.vocab_size = len(vocab)
        check_structure(ckpt.params.config, expected, checkpoint_path)
        if init == "random":
            return init_params(ckpt.params.config, config.seed), vocab
        return ckpt.params, vocab

    if init == "pretrained":
        raise ConfigError("pretrained 初始化需要给出预训练检查点")
    texts = [t for e in train_examples for t in (e.text_a, e.text_b) if t]
    vocab = build_vocab([], min_count=config.data.min_count, extra_texts=texts)
    model_config = ModelConfig.from_dict(config.model_base())
    model_config.vocab_size = len(vocab)
    return init_params(model_config, config.seed), vocab


def run_finetune(
    config: RunConfig,
    checkpoint_path: Optional[str] = None,
    init: Optional[str] = None,
    output_dir: Optional[str] = None,
    save: bool = True,
) -> FineTuneResult:
    """
    微调并在验证集上报告准确率。

    Args:
        config: 运行配置 (finetune 段给出文件与超参数)
        checkpoint_path: 预训练检查点
        init: 覆盖 config.finetune.init
        output_dir: 结果输出目录，默认 config.output_dir
        save: 是否写出微调后的检查点与结果文件

    Raises:
        CheckpointError: 检查点结构与当前模型配置不一致
    """
    ft = config.finetune
    init = init or ft.init
    paths = resolve_finetune_paths(config)
    train_examples = load_finetune_examples(paths["train"])
    dev_examples = load_finetune_examples(paths["dev"])
    if not train_examples or not dev_examples:
        raise ConfigError("微调训练集或验证集为空")
    class_count = int(paths.get("classes") or max(e.label for e in train_examples + dev_examples) + 1)
    if class_count < 2:
        raise ConfigError(f"微调类别数至少为 2: {class_count}")
    out_of_range = [e.label for e in train_examples + dev_examples if e.label >= class_count]
    if out_of_range:
        raise LabelError(f"标签超出类别数 {class_count}: {out_of_range[0]}", {"classes": class_count})

    base, vocab = _base_params(config, checkpoint_path, init, train_examples)
    params = add_head(base, ft.name, class_count, config.seed)
    max_seq_len, max_segments = params.config.max_seq_len, params.config.max_segments
    train_set = encode_examples(train_examples, vocab, config, max_seq_len, max_segments)
    dev_set = encode_examples(dev_examples, vocab, config, max_seq_len, max_segments)

    optimizer = OptimizerState(
        peak_lr=ft.lr,
        warmup_steps=ft.warmup_steps,
        beta1=config.optimizer.beta1,
        beta2=config.optimizer.beta2,
        epsilon=config.optimizer.epsilon,
    )
    print(f"{Fore.CYAN}[微调]{Style.RESET_ALL} {ft.name}: {len(train_set)} 条训练 / {len(dev_set)} 条验证, "
          f"{class_count} 类, {ft.epochs} 个 epoch, 初始化: {init}")

    losses = []
    for epoch in range(ft.epochs):
        epoch_losses = []
        order = np.random.default_rng([config.seed, epoch]).permutation(len(train_set))
        for start in range(0, len(order), ft.batch_size):
            chunk = [train_set[i] for i in order[start: start + ft.batch_size]]
            try:
                loss, grads = loss_and_grads(params, collate(chunk, task_id=ft.task_id), [ft.name])
            except PretrainError as e:
                raise e.with_context(epoch=epoch, step=optimizer.step + 1)
            params.tensors = adam_step(params.tensors, grads, optimizer)
            epoch_losses.append(loss)
        losses.extend(epoch_losses)
        logger.info(f"[微调] epoch {epoch + 1}/{ft.epochs} 平均 loss={np.mean(epoch_losses):.4f}")

    accuracy = evaluate_task(params, ft.name, dev_set, config.eval.batch_size, task_id=ft.task_id)
    result = FineTuneResult(ft.name, accuracy, class_count, init, ft.epochs, optimizer.step, params, losses=losses)

    if save:
        out_dir = ensure_dir(output_dir or config.output_dir)
        result.checkpoint = os.path.join(out_dir, f"finetune_{ft.name}_{init}.ckpt")
        metadata = {"vocab": vocab.to_list(), "finetune": result.to_dict()}
        save_checkpoint(result.checkpoint, params, metadata)
        write_json(os.path.join(out_dir, RESULT_FILE), result.to_dict())
    print(f"{Fore.GREEN}[成功]{Style.RESET_ALL} {ft.name} 验证集准确率: {accuracy:.4f} (随机水平 {result.chance:.2f})")
    return result
