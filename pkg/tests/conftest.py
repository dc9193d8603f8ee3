# -*- coding: utf-8 -*-
"""
pytest 配置和通用 fixtures。
"""
from typing import List, Sequence

import numpy as np
import pytest

from src.corpus import (
    CorpusTag,
    Document,
    Sentence,
    SpanKind,
    SpanTag,
    Token,
    build_vocab,
    index_documents,
    is_capitalized,
)
from src.presets import MODEL_PRESETS
from src.streams import load_pretrain_data
from src.synthetic import SyntheticSpec, gen_synthetic_corpus, load_manifest
from src.tasks import TaskConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 学习效果 / 遗忘方向等耗时实验 (pytest -m \"not slow\" 跳过)")


def make_document(
    doc_id: str,
    sentences: Sequence[str],
    tag: CorpusTag = CorpusTag.ENCYCLOPEDIA,
    entities: Sequence[tuple] = (),
    phrases: Sequence[tuple] = (),
) -> Document:
    """
    由空格分词的句子构造文档。

    entities / phrases: (句下标, 起始, 结束) 三元组
    """
    parsed = [
        Sentence([Token(surface=w, was_capitalized=is_capitalized(w)) for w in s.split()])
        for s in sentences
    ]
    for kind, spans in ((SpanKind.ENTITY, entities), (SpanKind.PHRASE, phrases)):
        for index, (s_idx, start, end) in enumerate(spans):
            for tok in parsed[s_idx].tokens[start:end]:
                tok.span_tag = SpanTag(kind, index)
    return Document(id=doc_id, sentences=parsed, source_corpus=tag)


TOY_SENTENCES = [
    ["Alice Smith visited the old harbor", "the harbor was quiet today", "Alice bought fresh bread", "then she went home"],
    ["Rivers flow into the sea", "the sea is salty", "Fish live in rivers and seas"],
    ["Bob likes chess", "he plays every evening", "chess clubs meet on Friday", "Bob won twice", "the club gave him a cup"],
    ["Snow fell in Oslo", "children built a snowman"],
    ["Markets opened early", "prices rose quickly", "traders were happy"],
]


RANDOM_WORDS = [f"w{i}" for i in range(30)] + [f"Name{i}" for i in range(10)]
_RANDOM_TAGS = (CorpusTag.ENCYCLOPEDIA, CorpusTag.BOOKS, CorpusTag.NEWS, CorpusTag.DIALOG)


def random_documents(count: int, seed: int, max_sentences: int = 6, max_words: int = 9) -> List[Document]:
    """随机小文档 (未编号)，句数与句长均匀分布，用于暴力比对。"""
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(count):
        sentences = [
            " ".join(rng.choice(RANDOM_WORDS, size=int(rng.integers(1, max_words + 1))))
            for _ in range(int(rng.integers(1, max_sentences + 1)))
        ]
        docs.append(make_document(f"rand-{i}", sentences, _RANDOM_TAGS[i % len(_RANDOM_TAGS)]))
    return docs


@pytest.fixture
def toy_documents() -> List[Document]:
    """五篇带实体/短语标注、已编号的小文档。"""
    docs = [
        make_document("toy-0", TOY_SENTENCES[0], entities=[(0, 0, 2)], phrases=[(0, 4, 6)]),
        make_document("toy-1", TOY_SENTENCES[1], CorpusTag.BOOKS, phrases=[(0, 3, 5)]),
        make_document("toy-2", TOY_SENTENCES[2], CorpusTag.NEWS, entities=[(0, 0, 1), (3, 0, 1)]),
        make_document("toy-3", TOY_SENTENCES[3], CorpusTag.DIALOG, entities=[(0, 3, 4)]),
        make_document("toy-4", TOY_SENTENCES[4], CorpusTag.NEWS),
    ]
    vocab = build_vocab([docs])
    return index_documents(docs, vocab)


@pytest.fixture
def toy_vocab(toy_documents):
    return build_vocab([toy_documents])


@pytest.fixture
def task_config(toy_vocab) -> TaskConfig:
    return TaskConfig(vocab_size=len(toy_vocab), max_seq_len=32, max_segments=3)


@pytest.fixture
def tiny_model_base() -> dict:
    """梯度校验用的最小结构 (2 层, d=16)。"""
    return dict(MODEL_PRESETS["tiny"])


SMALL_SYNTHETIC = {
    "documents": {"encyclopedia": 24, "books": 12, "news": 16, "dialog": 8},
    "ir_pairs": 60,
    "discourse_pairs": 60,
    "finetune_train": 80,
    "finetune_dev": 40,
}


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory) -> str:
    """整个测试会话共用的一份小型合成数据 (seed=7)。"""
    out = str(tmp_path_factory.mktemp("synthetic"))
    gen_synthetic_corpus(SyntheticSpec.from_dict(SMALL_SYNTHETIC), 7, out)
    return out


@pytest.fixture
def run_config_dict(synthetic_dir, tmp_path):
    """在 tiny 结构上跑得很快的运行配置 (JSON 字典形式)。"""
    return {
        "seed": 3,
        "output_dir": str(tmp_path / "run"),
        "model_preset": "tiny",
        "data": {"manifest": synthetic_dir},
        "optimizer": {"warmup_steps": 5},
        "schedule": {
            "strategy": "continual_multitask",
            "tasks": ["knowledge_masking", "capitalization", "sentence_distance", "ir_relevance"],
            "per_task_budget": 6,
            "reserve": 1,
            "batch_size": 4,
            "log_every": 0,
        },
        "eval": {"heldout_size": 12, "batch_size": 8},
        "finetune": {"epochs": 1, "batch_size": 8},
    }


@pytest.fixture(scope="session")
def synthetic_data(synthetic_dir):
    """合成数据训练部分，已构建词表并编号。"""
    return load_pretrain_data(load_manifest(synthetic_dir)["train"])
