# -*- coding: utf-8 -*-
"""
排列编码模块：Lehmer 码排名/反排名，以及句子重排任务的标签空间。

重排标签 = offset(n) + rank(p)，其中 offset(n) = Σ_{j=1..n-1} j!，
m 个片段上限时共有 Σ_{n=1..m} n! 个类别。
"""
from dataclasses import dataclass
from math import factorial
from typing import List, Sequence, Tuple

from .errors import LabelError


def _check_permutation(perm: Sequence[int]) -> List[int]:
    perm = [int(v) for v in perm]
    if sorted(perm) != list(range(len(perm))):
        raise LabelError(f"不是合法排列: {perm}")
    return perm


def encode_permutation(perm: Sequence[int]) -> int:
    """
    计算排列的 Lehmer 排名 (恒等排列为 0)。

    Args:
        perm: 0..n-1 的一个排列

    Returns:
        [0, n!) 内的整数
    """
    perm = _check_permutation(perm)
    n = len(perm)
    rank = 0
    for i, value in enumerate(perm):
        smaller_after = sum(1 for later in perm[i + 1:] if later < value)
        rank += smaller_after * factorial(n - 1 - i)
    return rank


def decode_permutation(n: int, rank: int) -> Tuple[int, ...]:
    """encode_permutation 的逆运算。rank 不在 [0, n!) 时报错。"""
    if n < 1:
        raise LabelError(f"排列长度至少为 1: {n}")
    if not 0 <= rank < factorial(n):
        raise LabelError(f"排名越界: rank={rank}, n={n}", {"n": n, "rank": rank})
    remaining = list(range(n))
    perm = []
    for i in range(n):
        block = factorial(n - 1 - i)
        digit, rank = divmod(rank, block)
        perm.append(remaining.pop(digit))
    return tuple(perm)


def reordering_class_count(m: int) -> int:
    """Σ_{n=1..m} n!"""
    if m < 1:
        raise LabelError(f"片段上限 m 至少为 1: {m}")
    return sum(factorial(n) for n in range(1, m + 1))


def reordering_offset(n: int) -> int:
    """n 个片段的标签起点 Σ_{j=1..n-1} j!"""
    return sum(factorial(j) for j in range(1, n))


def encode_reordering_label(perm: Sequence[int]) -> int:
    return reordering_offset(len(perm)) + encode_permutation(perm)


def decode_reordering_label(label: int, m: int) -> Tuple[int, ...]:
    """标签 -> 展示顺序 perm (展示的第 i 段是原来的第 perm[i] 段)。"""
    if not 0 <= label < reordering_class_count(m):
        raise LabelError(f"重排标签越界: {label} (m={m})", {"label": label, "m": m})
    n = 1
    while reordering_offset(n + 1) <= label:
        n += 1
    return decode_permutation(n, label - reordering_offset(n))


def restore_order(shown: Sequence, perm: Sequence[int]) -> list:
    """按 perm 把展示顺序还原为原始顺序。"""
    original = [None] * len(perm)
    for position, source_index in enumerate(perm):
        original[source_index] = shown[position]
    return original


@dataclass(frozen=True)
class ReorderingLabelSpace:
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise LabelError(f"片段上限 m 至少为 1: {self.m}")

    @property
    def class_count(self) -> int:
        return reordering_class_count(self.m)

    def encode(self, perm: Sequence[int]) -> int:
        if len(perm) > self.m:
            raise LabelError(f"片段数 {len(perm)} 超过上限 m={self.m}")
        return encode_reordering_label(perm)

    def decode(self, label: int) -> Tuple[int, ...]:
        return decode_reordering_label(label, self.m)
