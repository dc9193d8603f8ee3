# -*- coding: utf-8 -*-
"""
合成语料测试用例。

测试 src/synthetic.py 的文件布局、逐字节确定性以及埋入规律。
"""
import os

import numpy as np
import pytest

from src.corpus import load_corpus, load_discourse_pairs, load_ir_pairs
from src.errors import ConfigError
from src.finetune import load_finetune_examples
from src.streams import load_pretrain_data
from src.synthetic import MANIFEST_NAME, ORDINALS, SyntheticSpec, gen_synthetic_corpus, load_manifest
from src.tasks import TaskConfig, make_token_document_relation

from conftest import SMALL_SYNTHETIC


def read_tree(root):
    """目录下所有文件 -> 字节内容。"""
    result = {}
    for dirpath, _, filenames in os.walk(root):
        for name in filenames:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as f:
                result[os.path.relpath(path, root)] = f.read()
    return result


def token_document_positive_rate(out_dir):
    data = load_pretrain_data(load_manifest(out_dir)["train"])
    config = TaskConfig(vocab_size=len(data.vocab), max_seq_len=64)
    labels = []
    for doc in data.documents:
        for index in range(len(doc.sentences)):
            labels.extend(make_token_document_relation(doc, index, config).token_labels[2][1:-1])
    return float(np.mean(labels))


class TestGenerate:
    """测试生成结果"""

    def test_manifest_layout(self, synthetic_dir):
        """测试清单列出的文件都存在"""
        manifest = load_manifest(synthetic_dir)
        assert set(manifest["train"]) == {"encyclopedia", "books", "news", "dialog", "ir_relevance", "discourse"}
        for split in ("train", "heldout"):
            for path in manifest[split].values():
                assert os.path.isfile(path)
        assert manifest["finetune"]["classes"] == 2
        assert os.path.isfile(os.path.join(synthetic_dir, MANIFEST_NAME))

    def test_split_sizes(self, synthetic_dir):
        """测试 train / heldout 按比例切分"""
        manifest = load_manifest(synthetic_dir)
        assert len(load_corpus(manifest["train"]["encyclopedia"])) == 18
        assert len(load_corpus(manifest["heldout"]["encyclopedia"])) == 6
        assert len(load_ir_pairs(manifest["heldout"]["ir_relevance"])) == 15
        assert len(load_discourse_pairs(manifest["train"]["discourse"])) == 45
        assert len(load_finetune_examples(manifest["finetune"]["dev"])) == 40

    def test_same_seed_identical_bytes(self, tmp_path):
        """测试相同种子生成的全部文件逐字节相同"""
        spec = SyntheticSpec.from_dict(SMALL_SYNTHETIC)
        gen_synthetic_corpus(spec, 5, str(tmp_path / "a"))
        gen_synthetic_corpus(spec, 5, str(tmp_path / "b"))
        gen_synthetic_corpus(spec, 6, str(tmp_path / "c"))
        a, b, c = (read_tree(str(tmp_path / d)) for d in "abc")
        assert a == b
        assert a != c

    def test_zero_documents(self, tmp_path):
        """测试文档数为 0 时写出合法的空语料"""
        spec = SyntheticSpec.from_dict({"documents": {"news": 0}, "ir_pairs": 0, "discourse_pairs": 0,
                                        "finetune_train": 0, "finetune_dev": 0})
        manifest = gen_synthetic_corpus(spec, 1, str(tmp_path))
        path = os.path.join(str(tmp_path), manifest["train"]["news"])
        assert os.path.getsize(path) == 0
        assert load_corpus(path) == []

    def test_order_markers_and_entities(self, synthetic_dir):
        """测试第 i 句以第 i 个序数词开头，实体首字母大写"""
        docs = load_corpus(load_manifest(synthetic_dir)["train"]["books"])
        for doc in docs:
            for i, sentence in enumerate(doc.sentences):
                assert sentence.tokens[0].surface == ORDINALS[i].capitalize()
                for tok in sentence.tokens:
                    if tok.span_tag.kind.value == "entity":
                        assert tok.was_capitalized

    def test_topical_density_drives_relation_labels(self, tmp_path):
        """测试主题密度为 0 时词-文档关系标签大多为 0，密度高时正例明显增多"""
        sparse = dict(SMALL_SYNTHETIC, topical_density=0.0)
        dense = dict(SMALL_SYNTHETIC, topical_density=0.9)
        gen_synthetic_corpus(SyntheticSpec.from_dict(sparse), 3, str(tmp_path / "sparse"))
        gen_synthetic_corpus(SyntheticSpec.from_dict(dense), 3, str(tmp_path / "dense"))
        sparse_rate = token_document_positive_rate(str(tmp_path / "sparse"))
        dense_rate = token_document_positive_rate(str(tmp_path / "dense"))
        assert sparse_rate < 0.2
        assert dense_rate > sparse_rate + 0.2

    def test_ir_labels_follow_overlap(self, synthetic_dir):
        """测试 IR 标签 0 的 title 包含全部 query 主题词"""
        pairs = load_ir_pairs(load_manifest(synthetic_dir)["train"]["ir_relevance"])
        for pair in pairs:
            query_topic_words = pair.query.split()[:2]
            title = pair.title.split()
            if pair.label == 0:
                assert all(w in title for w in query_topic_words)
            else:
                assert not all(w in title for w in query_topic_words)


class TestSpec:
    """测试合成数据参数"""

    @pytest.mark.parametrize("override", [
        {"documents": {"poetry": 3}},
        {"documents": {"ir_relevance": 3}},
        {"sentences_min": 4, "sentences_max": 2},
        {"sentences_max": 11},
        {"entity_rate": 0.7, "phrase_rate": 0.5},
        {"topic_count": 1},
        {"unknown_key": 1},
    ])
    def test_invalid(self, override):
        """测试非法参数"""
        with pytest.raises(ConfigError):
            SyntheticSpec.from_dict(override)
