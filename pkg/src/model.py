# -*- coding: utf-8 -*-
"""
模型模块：任务嵌入 + post-norm Transformer 编码器 + 各任务输出头。

输入嵌入 = token + segment + position + task 四张表查表求和，再做 layer norm。
token 级头读取每个位置，句子级头只读取 [CLS] (位置 0) 经 pooler 后的向量。
知识掩码头默认与 token 嵌入表共享权重。
"""
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import numerics as nx
from .errors import ConfigError, EmptyLossMaskError, GraphError, LabelError
from .numerics import Graph, Tensor, resolve_dtype
from .streams import Batch
from .tasks import TASK_COUNT, TASK_SPECS, LossLevel, get_task_spec, resolve_arity

logger = logging.getLogger(__name__)

# 注意力中屏蔽 pad 的加性偏置，exp 后精确为 0
ATTENTION_MASK_VALUE = -1e9
MASKING_HEAD = "knowledge_masking"


@dataclass
class ModelConfig:
    """
    模型结构参数。

    head_arities: 头名称 -> 输出类别数；预训练头使用任务名，微调头使用自定义名称
    """
    layers: int = 2
    heads: int = 4
    d_model: int = 64
    d_ff: int = 256
    max_seq_len: int = 64
    vocab_size: int = 0
    max_segments: int = 3
    task_count: int = TASK_COUNT
    head_arities: Dict[str, int] = field(default_factory=dict)
    tie_mlm_weights: bool = True
    init_std: float = 0.02
    precision: str = "float32"

    def validate(self) -> tuple[bool, str]:
        if self.layers < 1:
            return False, f"layers 至少为 1: {self.layers}"
        if self.heads < 1 or self.d_model % self.heads != 0:
            return False, f"d_model ({self.d_model}) 必须能被 heads ({self.heads}) 整除"
        if self.d_ff < 1:
            return False, f"d_ff 至少为 1: {self.d_ff}"
        if self.vocab_size < 1:
            return False, f"vocab_size 未设置: {self.vocab_size}"
        if self.max_seq_len < 2:
            return False, f"max_seq_len 至少为 2: {self.max_seq_len}"
        if self.max_segments < 1:
            return False, f"max_segments 至少为 1: {self.max_segments}"
        if self.task_count < TASK_COUNT:
            return False, f"task_count ({self.task_count}) 少于已注册任务数 {TASK_COUNT}"
        for name, arity in self.head_arities.items():
            if arity < 1:
                return False, f"头 {name} 的类别数非法: {arity}"
        try:
            resolve_dtype(self.precision)
        except ValueError as e:
            return False, str(e)
        return True, ""

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    def to_dict(self) -> dict:
        data = asdict(self)
        data["head_arities"] = dict(sorted(self.head_arities.items()))
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"模型配置包含未知字段: {', '.join(sorted(unknown))}")
        config = cls(**{k: v for k, v in data.items()})
        config.head_arities = {str(k): int(v) for k, v in config.head_arities.items()}
        return config


def build_model_config(
    base: dict,
    vocab_size: int,
    task_names: Sequence[str],
    relation_count: int = 0,
) -> ModelConfig:
    """在预设结构参数上补全词表大小与各任务头的类别数。"""
    config = ModelConfig.from_dict(dict(base))
    config.vocab_size = vocab_size
    config.head_arities = {
        name: resolve_arity(get_task_spec(name), vocab_size, config.max_segments, relation_count)
        for name in task_names
    }
    ok, msg = config.validate()
    if not ok:
        raise ConfigError(msg)
    return config


def head_level(name: str) -> LossLevel:
    """预训练头按任务注册表决定级别；其余 (微调分类头) 一律为句子级。"""
    spec = TASK_SPECS.get(name)
    return spec.level if spec is not None else LossLevel.SENTENCE


def _label_task_id(name: str) -> Optional[int]:
    spec = TASK_SPECS.get(name)
    return spec.task_id if spec is not None else None


# ---------------------------------------------------------------------------
# 参数
# ---------------------------------------------------------------------------

@dataclass
class ModelParams:
    """配置 + 参数表 (参数名 -> 数组)。"""
    config: ModelConfig
    tensors: Dict[str, np.ndarray]

    def names(self) -> List[str]:
        return sorted(self.tensors)

    def copy(self) -> "ModelParams":
        return ModelParams(ModelConfig.from_dict(self.config.to_dict()), {k: v.copy() for k, v in self.tensors.items()})

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))


def _head_shapes(config: ModelConfig, name: str, arity: int) -> Dict[str, Tuple[Tuple[int, ...], str]]:
    d = config.d_model
    prefix = f"head.{name}"
    if name == MASKING_HEAD:
        shapes = {
            f"{prefix}.transform.w": ((d, d), "normal"),
            f"{prefix}.transform.b": ((d,), "zeros"),
            f"{prefix}.ln.gamma": ((d,), "ones"),
            f"{prefix}.ln.beta": ((d,), "zeros"),
            f"{prefix}.bias": ((arity,), "zeros"),
        }
        if not config.tie_mlm_weights:
            shapes[f"{prefix}.w"] = ((d, arity), "normal")
        return shapes
    return {
        f"{prefix}.w": ((d, arity), "normal"),
        f"{prefix}.b": ((arity,), "zeros"),
    }


def parameter_shapes(config: ModelConfig) -> Dict[str, Tuple[Tuple[int, ...], str]]:
    """全部参数的形状与初始化方式 (normal / zeros / ones)。"""
    d, f = config.d_model, config.d_ff
    shapes = {
        "embed.token": ((config.vocab_size, d), "normal"),
        "embed.segment": ((config.max_segments, d), "normal"),
        "embed.position": ((config.max_seq_len, d), "normal"),
        "embed.task": ((config.task_count, d), "normal"),
        "embed.ln.gamma": ((d,), "ones"),
        "embed.ln.beta": ((d,), "zeros"),
        "pooler.w": ((d, d), "normal"),
        "pooler.b": ((d,), "zeros"),
    }
    for i in range(config.layers):
        p = f"layer{i}"
        for proj in ("q", "k", "v", "o"):
            shapes[f"{p}.attn.w{proj}"] = ((d, d), "normal")
            shapes[f"{p}.attn.b{proj}"] = ((d,), "zeros")
        shapes[f"{p}.ln1.gamma"] = ((d,), "ones")
        shapes[f"{p}.ln1.beta"] = ((d,), "zeros")
        shapes[f"{p}.ffn.w1"] = ((d, f), "normal")
        shapes[f"{p}.ffn.b1"] = ((f,), "zeros")
        shapes[f"{p}.ffn.w2"] = ((f, d), "normal")
        shapes[f"{p}.ffn.b2"] = ((d,), "zeros")
        shapes[f"{p}.ln2.gamma"] = ((d,), "ones")
        shapes[f"{p}.ln2.beta"] = ((d,), "zeros")
    for name in sorted(config.head_arities):
        shapes.update(_head_shapes(config, name, config.head_arities[name]))
    return shapes


def _init_tensor(shape, kind: str, rng: np.random.Generator, std: float, dtype) -> np.ndarray:
    if kind == "ones":
        return np.ones(shape, dtype=dtype)
    if kind == "zeros":
        return np.zeros(shape, dtype=dtype)
    return (rng.standard_normal(shape) * std).astype(dtype)


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """按参数名排序依次初始化，同一种子得到完全相同的参数。"""
    ok, msg = config.validate()
    if not ok:
        raise ConfigError(msg)
    rng = np.random.default_rng(seed)
    dtype = resolve_dtype(config.precision)
    shapes = parameter_shapes(config)
    tensors = {
        name: _init_tensor(shapes[name][0], shapes[name][1], rng, config.init_std, dtype)
        for name in sorted(shapes)
    }
    logger.info(f"[模型] 初始化完成: {len(tensors)} 个张量, {sum(v.size for v in tensors.values())} 个参数")
    return ModelParams(config, tensors)


def add_head(params: ModelParams, name: str, arity: int, seed: int) -> ModelParams:
    """挂接 (或替换) 一个句子级分类头，用于微调。"""
    if arity < 2:
        raise ConfigError(f"分类头 {name} 的类别数至少为 2: {arity}")
    result = params.copy()
    result.config.head_arities[name] = arity
    rng = np.random.default_rng(seed)
    dtype = resolve_dtype(result.config.precision)
    for tensor_name, (shape, kind) in sorted(_head_shapes(result.config, name, arity).items()):
        result.tensors[tensor_name] = _init_tensor(shape, kind, rng, result.config.init_std, dtype)
    return result


# ---------------------------------------------------------------------------
# 前向
# ---------------------------------------------------------------------------

def _p(graph: Graph, params: ModelParams, name: str) -> Tensor:
    """按需把参数登记进计算图 (未用到的头不会出现在梯度里)。"""
    if name not in params.tensors:
        raise GraphError(f"缺少参数: {name}", {"param": name})
    return graph.param(name, params.tensors[name])


def embed(graph: Graph, params: ModelParams, batch: Batch) -> Tensor:
    """四张嵌入表求和后做 layer norm，输出 [B, L, d]。"""
    config = params.config
    if batch.seq_len > config.max_seq_len:
        raise GraphError(f"序列长度 {batch.seq_len} 超过 max_seq_len {config.max_seq_len}")
    token = nx.embedding_lookup(_p(graph, params, "embed.token"), batch.token_ids, "token")
    segment = nx.embedding_lookup(_p(graph, params, "embed.segment"), batch.segment_ids, "segment")
    position = nx.embedding_lookup(_p(graph, params, "embed.position"), batch.position_ids, "position")
    task = nx.embedding_lookup(_p(graph, params, "embed.task"), batch.task_ids, "task")
    task = nx.reshape(task, (batch.size, 1, config.d_model))
    summed = nx.add(nx.add(nx.add(token, segment), position), task)
    return nx.layer_norm(summed, _p(graph, params, "embed.ln.gamma"), _p(graph, params, "embed.ln.beta"))


def attention_bias(attention_lengths: np.ndarray, seq_len: int, dtype) -> np.ndarray:
    """[B, 1, 1, L] 的加性偏置：真实位置 0，pad 位置 ATTENTION_MASK_VALUE。"""
    keys = np.arange(seq_len)[None, :]
    bias = np.where(keys < np.asarray(attention_lengths)[:, None], 0.0, ATTENTION_MASK_VALUE)
    return bias.astype(dtype)[:, None, None, :]


def _linear(graph: Graph, params: ModelParams, x: Tensor, w: str, b: str) -> Tensor:
    return nx.add(nx.matmul(x, _p(graph, params, w)), _p(graph, params, b))


def _split_heads(x: Tensor, batch: int, seq_len: int, heads: int, head_dim: int) -> Tensor:
    return nx.transpose(nx.reshape(x, (batch, seq_len, heads, head_dim)), (0, 2, 1, 3))


def encode(
    graph: Graph,
    params: ModelParams,
    embedded: Tensor,
    attention_lengths: np.ndarray,
    attention_maps: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """
    post-norm Transformer 编码。

    Args:
        embedded: [B, L, d]
        attention_lengths: 每条样本的真实长度，之后的 key 被屏蔽
        attention_maps: 传入列表时按层追加注意力权重 [B, H, L, L] (调试/测试用)

    Returns:
        [B, L, d]
    """
    config = params.config
    batch, seq_len, d = embedded.shape
    h, dh = config.heads, config.head_dim
    bias = graph.constant(attention_bias(attention_lengths, seq_len, graph.dtype), "attention_bias")
    x = embedded
    for i in range(config.layers):
        p = f"layer{i}"
        q = _split_heads(_linear(graph, params, x, f"{p}.attn.wq", f"{p}.attn.bq"), batch, seq_len, h, dh)
        k = _linear(graph, params, x, f"{p}.attn.wk", f"{p}.attn.bk")
        k_t = nx.transpose(nx.reshape(k, (batch, seq_len, h, dh)), (0, 2, 3, 1))
        v = _split_heads(_linear(graph, params, x, f"{p}.attn.wv", f"{p}.attn.bv"), batch, seq_len, h, dh)
        scores = nx.add(nx.scale(nx.matmul(q, k_t), 1.0 / math.sqrt(dh)), bias)
        weights = nx.softmax(scores, axis=-1)
        if attention_maps is not None:
            attention_maps.append(weights.numpy())
        context = nx.reshape(nx.transpose(nx.matmul(weights, v), (0, 2, 1, 3)), (batch, seq_len, d))
        attended = _linear(graph, params, context, f"{p}.attn.wo", f"{p}.attn.bo")
        x = nx.layer_norm(nx.add(x, attended), _p(graph, params, f"{p}.ln1.gamma"), _p(graph, params, f"{p}.ln1.beta"))
        hidden = nx.gelu(_linear(graph, params, x, f"{p}.ffn.w1", f"{p}.ffn.b1"))
        hidden = _linear(graph, params, hidden, f"{p}.ffn.w2", f"{p}.ffn.b2")
        x = nx.layer_norm(nx.add(x, hidden), _p(graph, params, f"{p}.ln2.gamma"), _p(graph, params, f"{p}.ln2.beta"))
    return x


def _check_head(params: ModelParams, name: str):
    if name not in params.config.head_arities:
        raise GraphError(f"模型没有输出头: {name}", {"head": name, "heads": sorted(params.config.head_arities)})


def _token_logits(graph: Graph, params: ModelParams, name: str, hidden: Tensor) -> Tensor:
    """hidden: [..., d] -> [..., arity]"""
    prefix = f"head.{name}"
    if name != MASKING_HEAD:
        return _linear(graph, params, hidden, f"{prefix}.w", f"{prefix}.b")
    transformed = nx.gelu(_linear(graph, params, hidden, f"{prefix}.transform.w", f"{prefix}.transform.b"))
    transformed = nx.layer_norm(transformed, _p(graph, params, f"{prefix}.ln.gamma"), _p(graph, params, f"{prefix}.ln.beta"))
    if params.config.tie_mlm_weights:
        out_w = nx.transpose(_p(graph, params, "embed.token"), (1, 0))
    else:
        out_w = _p(graph, params, f"{prefix}.w")
    return nx.add(nx.matmul(transformed, out_w), _p(graph, params, f"{prefix}.bias"))


def pooled_cls(graph: Graph, params: ModelParams, encoded: Tensor) -> Tensor:
    """读取 [CLS] 位置并经过 tanh pooler，输出 [B, d]。"""
    cls = nx.select(encoded, 0, axis=1)
    return nx.tanh(_linear(graph, params, cls, "pooler.w", "pooler.b"))


def head_logits(graph: Graph, params: ModelParams, name: str, encoded: Tensor) -> Tensor:
    """
    输出头的 logits。

    token 级头: [B, L, arity]；句子级头: [B, arity] (只依赖 [CLS] 位置)。
    """
    _check_head(params, name)
    if head_level(name) == LossLevel.TOKEN:
        return _token_logits(graph, params, name, encoded)
    prefix = f"head.{name}"
    return _linear(graph, params, pooled_cls(graph, params, encoded), f"{prefix}.w", f"{prefix}.b")


def _token_targets(name: str, batch: Batch) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """收集 token 级头的 (扁平位置, 标签, 权重)，每条样本的权重和为 1。"""
    task_id = _label_task_id(name)
    rows, labels, weights = [], [], []
    for i, inst in enumerate(batch.instances):
        inst_labels = inst.labels_for(task_id)
        if inst_labels is None:
            raise LabelError(f"样本缺少任务 {name} 的 token 标签", {"head": name, "row": i})
        positions = [pos for pos, on in enumerate(inst.mask_for(task_id)) if on]
        if not positions:
            raise EmptyLossMaskError(f"任务 {name} 的 loss_mask 为空", {"head": name, "row": i})
        rows.extend(i * batch.seq_len + pos for pos in positions)
        labels.extend(inst_labels[pos] for pos in positions)
        weights.extend([1.0 / len(positions)] * len(positions))
    return np.asarray(rows, dtype=np.int64), np.asarray(labels, dtype=np.int64), np.asarray(weights)


def _sentence_targets(name: str, batch: Batch) -> np.ndarray:
    labels = []
    for i, inst in enumerate(batch.instances):
        if inst.sentence_label is None:
            raise LabelError(f"样本缺少任务 {name} 的句子标签", {"head": name, "row": i})
        labels.append(inst.sentence_label)
    return np.asarray(labels, dtype=np.int64)


def _gather_rows(encoded: Tensor, rows: np.ndarray) -> Tensor:
    batch, seq_len, d = encoded.shape
    return nx.embedding_lookup(nx.reshape(encoded, (batch * seq_len, d)), rows, "positions")


def head_loss(graph: Graph, params: ModelParams, name: str, encoded: Tensor, batch: Batch) -> Tensor:
    """
    单个头的交叉熵。

    token 级: 先对每条样本在 loss_mask 位置上取平均，再对 batch 取平均；
    句子级: [CLS] logits 上的 batch 平均。
    """
    _check_head(params, name)
    if head_level(name) == LossLevel.TOKEN:
        rows, labels, weights = _token_targets(name, batch)
        logits = _token_logits(graph, params, name, _gather_rows(encoded, rows))
        return nx.cross_entropy(logits, labels, weights)
    return nx.cross_entropy(head_logits(graph, params, name, encoded), _sentence_targets(name, batch))


def combined_loss(
    graph: Graph,
    params: ModelParams,
    encoded: Tensor,
    batch: Batch,
    enabled_heads: Sequence[str],
    weights: Optional[Dict[str, float]] = None,
) -> Tensor:
    """多个头的加权和 (默认权重 1.0)；同一样本最多启用一个句子级头。"""
    if not enabled_heads:
        raise GraphError("至少需要启用一个输出头")
    sentence_heads = [h for h in enabled_heads if head_level(h) == LossLevel.SENTENCE]
    if len(sentence_heads) > 1:
        raise GraphError(f"同一样本只能启用一个句子级头: {sentence_heads}", {"heads": sentence_heads})
    weights = weights or {}
    total = None
    for name in enabled_heads:
        loss = head_loss(graph, params, name, encoded, batch)
        w = float(weights.get(name, 1.0))
        if w != 1.0:
            loss = nx.scale(loss, w)
        total = loss if total is None else nx.add(total, loss)
    return total


def forward(params: ModelParams, batch: Batch, graph: Optional[Graph] = None) -> Tuple[Graph, Tensor]:
    """embed + encode，返回 (计算图, 编码结果)。"""
    graph = graph or Graph(params.config.precision)
    encoded = encode(graph, params, embed(graph, params, batch), batch.attention_lengths)
    return graph, encoded


def loss_and_grads(
    params: ModelParams,
    batch: Batch,
    enabled_heads: Sequence[str],
    weights: Optional[Dict[str, float]] = None,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """一次前向 + 反向，返回 (loss 值, 实际参与计算的参数的梯度)。"""
    graph, encoded = forward(params, batch)
    loss = combined_loss(graph, params, encoded, batch, enabled_heads, weights)
    return loss.item(), nx.backward(graph, loss)


def predict(params: ModelParams, batch: Batch, name: str) -> List[np.ndarray]:
    """
    预测结果 (argmax)。

    句子级头: 每条样本一个长度为 1 的数组；token 级头: 每条样本在其 mask 位置上的预测。
    """
    graph, encoded = forward(params, batch)
    logits = head_logits(graph, params, name, encoded).numpy()
    if head_level(name) == LossLevel.SENTENCE:
        return [np.array([int(v)]) for v in logits.argmax(axis=-1)]
    task_id = _label_task_id(name)
    result = []
    for i, inst in enumerate(batch.instances):
        positions = [pos for pos, on in enumerate(inst.mask_for(task_id)) if on]
        result.append(logits[i, positions].argmax(axis=-1) if positions else np.zeros(0, dtype=np.int64))
    return result
