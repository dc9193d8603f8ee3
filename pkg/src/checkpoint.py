# -*- coding: utf-8 -*-
"""
检查点读写。

二进制格式 (全部小端):
    b"XXCK" + u8 版本号 (1)
    u32 长度 + 模型配置 JSON (UTF-8, 键排序)
    u32 长度 + 元数据 JSON (阶段、各任务已完成迭代数、样本流位置、优化器标量等)
    u32 张量个数，随后按名称排序的每个张量:
        u16 名称长度 + 名称 (UTF-8)
        u8 dtype (1 = float32, 2 = float64)
        u8 维数 k, k × u32 各维大小
        原始数据 (小端, C 顺序)

优化器一阶/二阶矩以 "opt.m.<参数名>" / "opt.v.<参数名>" 的名称放在同一张量表中。
"""
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from .errors import CheckpointError, ConfigError
from .model import ModelConfig, ModelParams, parameter_shapes
from .optim import OptimizerState

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"XXCK"
CHECKPOINT_VERSION = 1

_DTYPE_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}
_CODE_DTYPES = {1: "<f4", 2: "<f8"}

# 载入时必须与期望配置一致的结构字段
STRUCTURE_FIELDS = ("layers", "heads", "d_model", "d_ff", "max_seq_len", "vocab_size", "max_segments", "task_count")

_FIRST_MOMENT = "opt.m."
_SECOND_MOMENT = "opt.v."


@dataclass
class Checkpoint:
    params: ModelParams
    metadata: Dict[str, Any] = field(default_factory=dict)
    optimizer: Optional[OptimizerState] = None


def _json_block(obj) -> bytes:
    raw = json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _tensor_block(name: str, value: np.ndarray) -> bytes:
    dtype = np.dtype(value.dtype)
    if dtype not in _DTYPE_CODES:
        raise CheckpointError(f"不支持的张量类型: {name} ({dtype})")
    encoded = name.encode("utf-8")
    header = struct.pack("<H", len(encoded)) + encoded
    header += struct.pack("<BB", _DTYPE_CODES[dtype], value.ndim)
    header += struct.pack(f"<{value.ndim}I", *value.shape)
    return header + np.ascontiguousarray(value).astype(_CODE_DTYPES[_DTYPE_CODES[dtype]]).tobytes()


def save_checkpoint(
    path: str,
    params: ModelParams,
    metadata: Optional[Dict[str, Any]] = None,
    optimizer: Optional[OptimizerState] = None,
):
    """
    保存检查点 (同样的输入写出的字节完全相同)。

    Args:
        path: 输出路径
        params: 模型参数
        metadata: 可 JSON 序列化的元数据
        optimizer: 需要断点续训时一并保存的优化器状态
    """
    metadata = dict(metadata or {})
    tensors = dict(params.tensors)
    if optimizer is not None:
        metadata["optimizer"] = {
            "peak_lr": optimizer.peak_lr,
            "warmup_steps": optimizer.warmup_steps,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "epsilon": optimizer.epsilon,
            "step": optimizer.step,
            "moment_step": optimizer.moment_step,
        }
        for name, value in optimizer.first_moments.items():
            tensors[_FIRST_MOMENT + name] = value
        for name, value in optimizer.second_moments.items():
            tensors[_SECOND_MOMENT + name] = value

    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<B", CHECKPOINT_VERSION),
        _json_block(params.config.to_dict()),
        _json_block(metadata),
        struct.pack("<I", len(tensors)),
    ]
    parts.extend(_tensor_block(name, tensors[name]) for name in sorted(tensors))

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = path + ".tmp"
    with open(tmp_path, "wb") as f:
        f.write(b"".join(parts))
    os.replace(tmp_path, path)
    logger.info(f"[检查点] 已保存: {path} ({len(tensors)} 个张量)")


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError("检查点文件被截断", {"path": self.path, "offset": self.offset})
        chunk = self.data[self.offset: self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def json(self):
        (length,) = self.unpack("<I")
        try:
            return json.loads(self.take(length).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"检查点 JSON 段损坏: {e}", {"path": self.path}) from None


def check_structure(config: ModelConfig, expect: ModelConfig, path: str):
    mismatched = {
        name: {"checkpoint": getattr(config, name), "expected": getattr(expect, name)}
        for name in STRUCTURE_FIELDS
        if getattr(config, name) != getattr(expect, name)
    }
    if mismatched:
        raise CheckpointError(
            f"检查点配置与当前模型不一致: {', '.join(mismatched)}", {"path": path, "mismatch": mismatched}
        )


def load_checkpoint(path: str, expect: Optional[ModelConfig] = None) -> Checkpoint:
    """
    读取检查点。

    Args:
        path: 检查点路径
        expect: 期望的模型配置；给出时逐项比对结构字段

    Raises:
        CheckpointError: magic / 版本 / 结构 / 张量形状不符，或文件损坏
    """
    if not os.path.exists(path):
        raise CheckpointError(f"检查点不存在: {path}", {"path": path})
    with open(path, "rb") as f:
        reader = _Reader(f.read(), path)

    if reader.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError("不是检查点文件 (magic 不符)", {"path": path})
    (version,) = reader.unpack("<B")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"不支持的检查点版本: {version}", {"path": path, "version": version})
    try:
        config = ModelConfig.from_dict(reader.json())
    except (ConfigError, TypeError) as e:
        raise CheckpointError(f"检查点中的模型配置无效: {e}", {"path": path}) from None
    metadata = reader.json()
    if expect is not None:
        check_structure(config, expect, path)

    (count,) = reader.unpack("<I")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        code, ndim = reader.unpack("<BB")
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"未知 dtype 代码: {code}", {"path": path, "tensor": name})
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        dtype = np.dtype(_CODE_DTYPES[code])
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        value = np.frombuffer(reader.take(size), dtype=dtype).reshape(shape)
        tensors[name] = value.astype(dtype.newbyteorder("="))
    if reader.offset != len(reader.data):
        raise CheckpointError("检查点末尾有多余数据", {"path": path})

    first = {k[len(_FIRST_MOMENT):]: tensors.pop(k) for k in sorted(tensors) if k.startswith(_FIRST_MOMENT)}
    second = {k[len(_SECOND_MOMENT):]: tensors.pop(k) for k in sorted(tensors) if k.startswith(_SECOND_MOMENT)}

    expected_shapes = parameter_shapes(config)
    missing = sorted(set(expected_shapes) - set(tensors))
    if missing:
        raise CheckpointError(f"检查点缺少参数: {', '.join(missing[:5])}", {"path": path, "missing": missing})
    for name, value in tensors.items():
        want = expected_shapes.get(name)
        if want is None:
            raise CheckpointError(f"检查点包含未知参数: {name}", {"path": path})
        if tuple(value.shape) != want[0]:
            raise CheckpointError(
                f"参数 {name} 形状不符: {value.shape} != {want[0]}",
                {"path": path, "tensor": name, "shape": list(value.shape), "expected": list(want[0])},
            )

    optimizer = None
    opt_meta = metadata.pop("optimizer", None)
    if opt_meta is not None:
        optimizer = OptimizerState(**opt_meta)
        optimizer.first_moments = first
        optimizer.second_moments = second
    logger.info(f"[检查点] 已载入: {path}")
    return Checkpoint(ModelParams(config, tensors), metadata, optimizer)
