# -*- coding: utf-8 -*-
"""
数值计算模块：基于 numpy 的稠密张量与反向模式自动微分。

采用 define-by-run 方式：每个 batch 新建一个 Graph，算子按调用顺序把节点
追加到 Graph.nodes，节点列表天然满足拓扑序，反向传播只需逆序遍历一次。

算子族: add / mul / scale / matmul / transpose / reshape / select /
layer_norm / gelu / tanh / softmax / embedding_lookup / cross_entropy /
sum_all / mean_all。每个算子输出都会做有限性检查。
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    GraphError,
    IdOutOfRangeError,
    NumericOverflowError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

# layer_norm 的方差平滑项
LAYER_NORM_EPS = 1e-5

# 训练默认 32 位，梯度校验使用 64 位
DTYPES = {
    "float32": np.float32,
    "float64": np.float64,
}

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


def resolve_dtype(precision: str) -> np.dtype:
    """把配置中的精度名称转换为 numpy dtype。"""
    if precision not in DTYPES:
        raise ValueError(f"不支持的精度: {precision} (可选: {', '.join(DTYPES)})")
    return np.dtype(DTYPES[precision])


class Tensor:
    """
    图中的一个值。

    data 为只读 numpy 数组；graph / node_id 指向产生它的节点。
    """

    __slots__ = ("data", "graph", "node_id", "name")

    def __init__(self, data: np.ndarray, graph: "Graph", node_id: int, name: str = ""):
        self.data = data
        self.graph = graph
        self.node_id = node_id
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise GraphError(f"item() 只能用于标量张量，当前形状 {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor(node={self.node_id}{label}, shape={self.shape}, dtype={self.data.dtype})"


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Node:
    """一条算子记录。inputs 中的节点编号都小于自身编号。"""
    op: str
    inputs: Tuple[int, ...]
    output: Tensor
    backward: Optional[BackwardFn]
    requires_grad: bool


class Graph:
    """
    一次前向计算的有序算子记录。

    Args:
        precision: "float32" 或 "float64"，所有叶子和中间结果都使用该精度。
    """

    def __init__(self, precision: str = "float32"):
        self.dtype = resolve_dtype(precision)
        self.nodes: List[Node] = []
        self.params: Dict[str, int] = {}

    def __len__(self):
        return len(self.nodes)

    def param(self, name: str, value: np.ndarray) -> Tensor:
        """登记一个可训练参数叶子节点 (同名参数只登记一次)。"""
        if name in self.params:
            return self.nodes[self.params[name]].output
        data = np.array(value, dtype=self.dtype)
        tensor = self._append("param", (), data, None, requires_grad=True, name=name)
        self.params[name] = tensor.node_id
        return tensor

    def constant(self, value, name: str = "") -> Tensor:
        """登记一个不需要梯度的常量 (mask、偏置等)。"""
        data = np.array(value, dtype=self.dtype)
        return self._append("const", (), data, None, requires_grad=False, name=name)

    def _append(
        self,
        op: str,
        inputs: Tuple[int, ...],
        data: np.ndarray,
        backward: Optional[BackwardFn],
        requires_grad: bool,
        name: str = "",
    ) -> Tensor:
        if not np.all(np.isfinite(data)):
            raise NumericOverflowError(
                f"{op}: 输出包含 NaN/Inf",
                {"op": op, "node": len(self.nodes), "shape": list(data.shape)},
            )
        data.flags.writeable = False
        tensor = Tensor(data, self, len(self.nodes), name)
        self.nodes.append(Node(op, inputs, tensor, backward, requires_grad))
        return tensor

    def record(self, op: str, inputs: Sequence[Tensor], data: np.ndarray, backward: BackwardFn) -> Tensor:
        """算子实现调用：检查输入同属本图后追加节点。"""
        for t in inputs:
            if not isinstance(t, Tensor) or t.graph is not self:
                raise GraphError(f"{op}: 输入张量不属于当前计算图", {"op": op})
        requires_grad = any(self.nodes[t.node_id].requires_grad for t in inputs)
        data = np.asarray(data, dtype=self.dtype)
        return self._append(
            op,
            tuple(t.node_id for t in inputs),
            data,
            backward if requires_grad else None,
            requires_grad,
        )


def _graph_of(*tensors: Tensor) -> Graph:
    graph = tensors[0].graph
    if graph is None:
        raise GraphError("张量未绑定计算图")
    return graph


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """把广播后的梯度求和还原到原始形状。"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape, "无法广播") from None


# ---------------------------------------------------------------------------
# 逐元素算子
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)
    a_shape, b_shape = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

    return _graph_of(a).record("add", (a, b), a.data + b.data, backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)
    a_data, b_data = a.data, b.data

    def backward(g):
        return _unbroadcast(g * b_data, a_data.shape), _unbroadcast(g * a_data, b_data.shape)

    return _graph_of(a).record("mul", (a, b), a_data * b_data, backward)


def scale(a: Tensor, factor: float) -> Tensor:
    def backward(g):
        return (g * factor,)

    return _graph_of(a).record("scale", (a,), a.data * factor, backward)


def gelu(x: Tensor) -> Tensor:
    """GELU (tanh 近似)。"""
    xd = x.data
    u = _GELU_C * (xd + _GELU_K * xd ** 3)
    t = np.tanh(u)
    out = 0.5 * xd * (1.0 + t)

    def backward(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_K * xd ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du),)

    return _graph_of(x).record("gelu", (x,), out, backward)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _graph_of(x).record("tanh", (x,), out, backward)


# ---------------------------------------------------------------------------
# 形状相关
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """numpy.matmul 语义，支持前导维广播 (如 [B,L,d] @ [d,k])。"""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape, "内维不一致")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatchError("matmul", a.shape, b.shape, "批维无法广播") from None
    a_data, b_data = a.data, b.data

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b_data, -1, -2))
        gb = np.matmul(np.swapaxes(a_data, -1, -2), g)
        return _unbroadcast(ga, a_data.shape), _unbroadcast(gb, b_data.shape)

    return _graph_of(a).record("matmul", (a, b), np.matmul(a_data, b_data), backward)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeMismatchError("transpose", x.shape, axes, "轴排列非法")
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _graph_of(x).record("transpose", (x,), np.transpose(x.data, axes), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    original = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", original, shape, "元素个数不一致") from None

    def backward(g):
        return (g.reshape(original),)

    return _graph_of(x).record("reshape", (x,), out, backward)


def select(x: Tensor, index: int, axis: int) -> Tensor:
    """取某一轴上的单个下标并去掉该轴 (句子级头读取 [CLS] 位置)。"""
    if not -x.shape[axis] <= index < x.shape[axis]:
        raise ShapeMismatchError("select", x.shape, (index,), f"axis={axis} 下标越界")
    original = x.shape

    def backward(g):
        full = np.zeros(original, dtype=g.dtype)
        sl = [slice(None)] * len(original)
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return _graph_of(x).record("select", (x,), np.take(x.data, index, axis=axis), backward)


def sum_all(x: Tensor) -> Tensor:
    original = x.shape

    def backward(g):
        return (np.broadcast_to(g, original).copy(),)

    return _graph_of(x).record("sum", (x,), np.asarray(x.data.sum()), backward)


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / max(x.data.size, 1))


# ---------------------------------------------------------------------------
# 归一化 / 激活 / 查表 / 损失
# ---------------------------------------------------------------------------

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """最后一维上的 layer norm；常数向量归一化后为 0 (eps 保证不除零)。"""
    width = x.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise ShapeMismatchError("layer_norm", x.shape, gamma.shape, "gamma/beta 须与最后一维等长")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    gamma_data = gamma.data
    out = xhat * gamma_data + beta.data

    def backward(g):
        gxhat = g * gamma_data
        gx = inv_std / width * (
            width * gxhat
            - gxhat.sum(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return gx, _unbroadcast(g * xhat, gamma_data.shape), _unbroadcast(g, gamma_data.shape)

    return _graph_of(x).record("layer_norm", (x, gamma, beta), out, backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _graph_of(x).record("softmax", (x,), out, backward)


def embedding_lookup(table: Tensor, ids, table_name: str = "") -> Tensor:
    """按整数 id 查表。越界时报错并指明是哪张表。"""
    ids = np.asarray(ids, dtype=np.int64)
    rows = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        bad = int(ids.max()) if ids.max() >= rows else int(ids.min())
        name = table_name or table.name or "embedding"
        raise IdOutOfRangeError(
            f"{name}: id {bad} 超出表大小 {rows}",
            {"table": name, "id": bad, "rows": rows},
        )
    table_shape = table.shape

    def backward(g):
        grad = np.zeros(table_shape, dtype=g.dtype)
        np.add.at(grad, ids, g)
        return (grad,)

    return _graph_of(table).record("embedding_lookup", (table,), table.data[ids], backward)


def cross_entropy(logits: Tensor, labels, weights=None) -> Tensor:
    """
    加权平均交叉熵。

    Args:
        logits: [N, C] (或单条 [C])
        labels: [N] 整数标签 (或单个整数)
        weights: [N] 非负权重，None 表示全 1；损失 = Σ w·nll / Σ w

    Returns:
        标量张量
    """
    data = logits.data
    single = data.ndim == 1
    if single:
        data = data.reshape(1, -1)
    if data.ndim != 2:
        raise ShapeMismatchError("cross_entropy", logits.shape, np.shape(labels), "logits 须为 1 维或 2 维")
    n, classes = data.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != n:
        raise ShapeMismatchError("cross_entropy", logits.shape, labels.shape, "标签个数与 logits 行数不一致")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ShapeMismatchError("cross_entropy", logits.shape, labels.shape, f"标签超出 [0, {classes})")
    if weights is None:
        w = np.ones(n, dtype=data.dtype)
    else:
        w = np.asarray(weights, dtype=data.dtype).reshape(-1)
        if w.shape[0] != n:
            raise ShapeMismatchError("cross_entropy", logits.shape, w.shape, "权重个数与 logits 行数不一致")
    total = w.sum()
    if total <= 0:
        raise GraphError("cross_entropy: 权重之和为 0，没有可计算损失的位置")

    shifted = data - data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.arange(n)
    nll = -log_probs[rows, labels]
    loss = np.asarray((w * nll).sum() / total)
    logits_shape = logits.shape

    def backward(g):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        grad *= (w / total)[:, None] * g
        return (grad.reshape(logits_shape),)

    return _graph_of(logits).record("cross_entropy", (logits,), loss, backward)


# ---------------------------------------------------------------------------
# 反向传播
# ---------------------------------------------------------------------------

def backward(graph: Graph, loss: Tensor) -> Dict[str, np.ndarray]:
    """
    从标量 loss 出发逆序遍历计算图。

    Returns:
        每个已登记参数的梯度 (与 loss 不连通的参数梯度为全零)
    """
    if loss.graph is not graph:
        raise GraphError("loss 不属于给定计算图")
    if loss.data.size != 1:
        raise GraphError(f"loss 必须是标量，当前形状 {loss.shape}", {"shape": list(loss.shape)})

    grads: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for node in reversed(graph.nodes[: loss.node_id + 1]):
        g = grads.get(node.output.node_id)
        if g is None or node.backward is None:
            continue
        input_grads = node.backward(g)
        for input_id, input_grad in zip(node.inputs, input_grads):
            if input_grad is None or not graph.nodes[input_id].requires_grad:
                continue
            if input_id in grads:
                grads[input_id] = grads[input_id] + input_grad
            else:
                grads[input_id] = input_grad

    result = {}
    for name, node_id in graph.params.items():
        value = graph.nodes[node_id].output.data
        result[name] = np.asarray(grads.get(node_id, np.zeros_like(value)), dtype=value.dtype)
    return result
