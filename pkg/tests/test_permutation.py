# -*- coding: utf-8 -*-
"""
排列编码测试用例。

测试 src/permutation.py 中 Lehmer 编码与重排标签空间。
"""
import itertools

import pytest

from src.errors import LabelError
from src.permutation import (
    ReorderingLabelSpace,
    decode_permutation,
    decode_reordering_label,
    encode_permutation,
    encode_reordering_label,
    reordering_class_count,
    reordering_offset,
    restore_order,
)


class TestLehmerCode:
    """测试排列排名与反排名"""

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_bijection(self, n):
        """测试 n<=5 时所有排列与 [0, n!) 一一对应"""
        ranks = set()
        for perm in itertools.permutations(range(n)):
            rank = encode_permutation(perm)
            assert decode_permutation(n, rank) == perm
            ranks.add(rank)
        assert ranks == set(range(len(ranks)))

    def test_identity_is_zero_and_reverse_is_last(self):
        """测试恒等排列排名为 0，逆序排列排名为 n!-1"""
        assert encode_permutation([0, 1, 2, 3]) == 0
        assert encode_permutation([3, 2, 1, 0]) == 23

    def test_lexicographic_order(self):
        """测试排名与字典序一致"""
        perms = list(itertools.permutations(range(4)))
        assert [encode_permutation(p) for p in perms] == list(range(24))

    @pytest.mark.parametrize("perm", [[0, 0, 1], [1, 2, 3], []])
    def test_invalid_permutation(self, perm):
        """测试非法排列"""
        if not perm:
            assert encode_permutation(perm) == 0
            return
        with pytest.raises(LabelError):
            encode_permutation(perm)

    def test_rank_out_of_range(self):
        """测试排名越界"""
        with pytest.raises(LabelError):
            decode_permutation(3, 6)


class TestReorderingLabels:
    """测试句子重排任务的标签空间"""

    @pytest.mark.parametrize("m, expected", [(1, 1), (2, 3), (3, 9), (4, 33), (5, 153), (6, 873)])
    def test_class_count(self, m, expected):
        """测试 m 个片段上限对应的类别数"""
        assert reordering_class_count(m) == expected
        assert ReorderingLabelSpace(m).class_count == expected

    def test_offsets(self):
        """测试各长度的标签起点"""
        assert [reordering_offset(n) for n in range(1, 6)] == [0, 1, 3, 9, 33]

    def test_all_classes_round_trip_for_m4(self):
        """测试 m=4 时 33 个标签全部可以解码再编码回去"""
        space = ReorderingLabelSpace(4)
        seen = set()
        for label in range(space.class_count):
            perm = space.decode(label)
            assert 1 <= len(perm) <= 4
            assert space.encode(perm) == label
            seen.add(perm)
        assert len(seen) == 33

    def test_single_segment_label(self):
        """测试只有一个片段时标签为 0"""
        assert encode_reordering_label([0]) == 0
        assert decode_reordering_label(0, 3) == (0,)

    def test_label_out_of_range(self):
        """测试标签越界"""
        with pytest.raises(LabelError):
            decode_reordering_label(9, 3)
        with pytest.raises(LabelError):
            ReorderingLabelSpace(2).encode([2, 0, 1])

    def test_restore_order(self):
        """测试按标签还原原始顺序"""
        original = ["a", "b", "c"]
        perm = (2, 0, 1)
        shown = [original[i] for i in perm]
        assert restore_order(shown, perm) == original

    def test_zero_m_rejected(self):
        """测试 m=0"""
        with pytest.raises(LabelError):
            ReorderingLabelSpace(0)
