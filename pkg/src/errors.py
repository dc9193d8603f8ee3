# -*- coding: utf-8 -*-
"""
异常模块：预训练流程中所有可预期错误的统一基类与子类。

每个异常都带一个 context 字典，CLI 层用 to_dict() 输出结构化错误信息。
"""
from typing import Any, Dict, Optional


class PretrainError(Exception):
    """所有业务错误的基类。"""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = dict(context or {})

    def with_context(self, **extra) -> "PretrainError":
        """追加上下文 (如 stage / global_step) 后返回自身，便于 raise ... from。"""
        self.context.update(extra)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "context": self.context,
        }

    def __str__(self):
        if not self.context:
            return self.message
        ctx = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} ({ctx})"


# ---- numerics ----

class ShapeMismatchError(PretrainError, ValueError):
    """算子输入形状不匹配，context 中包含双方形状。"""

    def __init__(self, op: str, left_shape, right_shape, detail: str = ""):
        message = f"{op}: 形状不匹配 {tuple(left_shape)} vs {tuple(right_shape)}"
        if detail:
            message += f" ({detail})"
        super().__init__(message, {
            "op": op,
            "left_shape": list(left_shape),
            "right_shape": list(right_shape),
        })


class NumericOverflowError(PretrainError, ArithmeticError):
    """算子输出出现 NaN/Inf。"""


class GraphError(PretrainError, ValueError):
    """计算图使用错误 (非标量 loss、跨图张量等)。"""


class IdOutOfRangeError(PretrainError, IndexError):
    """embedding 查表越界，context 中包含表名。"""


# ---- corpus / tasks ----

class CorpusFormatError(PretrainError, ValueError):
    """语料文件格式错误，context 中包含文件路径与行号。"""


class VocabularyError(PretrainError, ValueError):
    pass


class LabelError(PretrainError, ValueError):
    """标签取值非法 (未知关系、越界的排列编号等)。"""


class TaskConstructionError(PretrainError, ValueError):
    """无法从给定语料构造训练样本。"""


class SequenceTooLongError(TaskConstructionError):
    pass


# ---- model ----

class EmptyLossMaskError(PretrainError, ValueError):
    pass


class CheckpointError(PretrainError, ValueError):
    pass


# ---- scheduler / harness ----

class ScheduleError(PretrainError, ValueError):
    pass


class EmptyHeldoutError(PretrainError, ValueError):
    pass


class ConfigError(PretrainError, ValueError):
    pass
