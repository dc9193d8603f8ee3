# -*- coding: utf-8 -*-
"""
优化器模块：Adam (带偏差修正) 与 noam 学习率调度。

noam 曲线以 peak_lr 为锚点：lr(step) = peak_lr * min(sqrt(warmup/step), step/warmup)，
在 step == warmup 时恰好等于 peak_lr，之前线性上升，之后按 step^-0.5 衰减。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from .errors import ConfigError, ShapeMismatchError

logger = logging.getLogger(__name__)

ADAM_EPSILON = 1e-8


@dataclass
class OptimizerState:
    """Adam 状态。moment 字典按参数名存放，形状与参数一致。"""
    peak_lr: float = 5e-5
    warmup_steps: int = 4000
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = ADAM_EPSILON
    step: int = 0
    # 偏差修正计数，随 moments 一起清零
    moment_step: int = 0
    first_moments: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moments: Dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self) -> tuple[bool, str]:
        if self.peak_lr <= 0:
            return False, f"peak_lr 必须为正数: {self.peak_lr}"
        if self.warmup_steps < 1:
            return False, f"warmup_steps 至少为 1: {self.warmup_steps}"
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            return False, f"beta 取值须在 [0, 1): beta1={self.beta1}, beta2={self.beta2}"
        if self.step < 0:
            return False, f"step 不能为负: {self.step}"
        return True, ""

    def reset_moments(self):
        """清空一阶/二阶矩 (阶段切换时可选)，step 保留。"""
        self.first_moments.clear()
        self.second_moments.clear()
        self.moment_step = 0


def noam_lr(state: OptimizerState, step: Optional[int] = None) -> float:
    """
    计算 noam 学习率。

    Args:
        state: 优化器状态 (提供 peak_lr / warmup_steps / step)
        step: 覆盖 state.step，用于按任务重新 warmup

    Returns:
        当前学习率
    """
    step = state.step if step is None else step
    if step < 1:
        raise ConfigError(f"noam_lr 要求 step >= 1，当前 step={step}", {"step": step})
    warmup = state.warmup_steps
    return state.peak_lr * min(math.sqrt(warmup / step), step / warmup)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    lr_step: Optional[int] = None,
) -> Dict[str, np.ndarray]:
    """
    执行一次 Adam 更新，state.step 恰好加 1。

    只更新 grads 中出现的参数；其余参数原样返回 (不会被动量带偏)。

    Args:
        params: 参数名 -> 数组
        grads: 参数名 -> 梯度 (形状须一致)
        state: 优化器状态 (原地更新 step 与 moments)
        lr_step: 学习率调度使用的步数，默认等于更新后的 state.step

    Returns:
        新的参数字典 (未更新的参数与输入为同一对象)
    """
    for name, grad in grads.items():
        if name not in params:
            raise ShapeMismatchError("adam_step", (), grad.shape, f"未知参数 {name}")
        if params[name].shape != grad.shape:
            raise ShapeMismatchError("adam_step", params[name].shape, grad.shape, f"参数 {name}")

    state.step += 1
    state.moment_step += 1
    lr = noam_lr(state, state.step if lr_step is None else lr_step)
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.moment_step
    correction2 = 1.0 - b2 ** state.moment_step

    updated = dict(params)
    for name, grad in grads.items():
        value = params[name]
        m = state.first_moments.get(name)
        v = state.second_moments.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        state.first_moments[name] = m
        state.second_moments[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = (value - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(value.dtype)
    return updated
