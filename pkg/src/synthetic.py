# -*- coding: utf-8 -*-
"""
合成语料生成模块：为桌面规模实验生成可学习的预训练 / 微调数据。

埋入的规律:
    - 每篇文档有一个主题，句子以 topical_density 的概率使用该主题词 (词-文档关系、掩码)
    - 每篇文档有两个人物 (首字母大写的两词实体)，人名和句首序数词大写 (大小写预测)
    - 第 i 句以第 i 个序数词开头 (句子重排、句子距离)
    - IR 句对按 query 词与 title 的重合程度分三档
    - 篇章关系句对的第二句以关系对应的连接词开头
    - 微调数据按主题分组二分类，线性可分
同一种子生成的所有文件逐字节相同。
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Sequence, Tuple

import numpy as np
from colorama import Fore, Style

from .corpus import DOCUMENT_TAGS, CorpusTag, Document, Sentence, SpanKind, SpanTag, Token, write_corpus
from .errors import ConfigError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "data_manifest.json"

ORDINALS = ("first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth")

DISCOURSE_CONNECTIVES = {
    "cause": "because",
    "condition": "if",
    "contrast": "but",
    "result": "so",
    "sequence": "afterwards",
}

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class SyntheticSpec:
    """合成数据参数。"""
    documents: Dict[str, int] = field(default_factory=lambda: {
        "encyclopedia": 120, "books": 60, "news": 80, "dialog": 40,
    })
    heldout_fraction: float = 0.25
    sentences_min: int = 3
    sentences_max: int = 5
    words_min: int = 3
    words_max: int = 6
    topic_count: int = 8
    topic_words: int = 10
    topical_density: float = 0.35
    entity_rate: float = 0.12
    phrase_rate: float = 0.10
    filler_vocab: int = 300
    phrase_pool: int = 30
    name_pool: int = 40
    order_markers: bool = True
    ir_pairs: int = 300
    discourse_pairs: int = 300
    finetune_train: int = 200
    finetune_dev: int = 100

    def validate(self) -> tuple[bool, str]:
        for tag, count in self.documents.items():
            try:
                parsed = CorpusTag(tag)
            except ValueError:
                return False, f"未知语料标签: {tag}"
            if parsed not in DOCUMENT_TAGS:
                return False, f"{tag} 不是文档类语料"
            if count < 0:
                return False, f"{tag} 文档数不能为负: {count}"
        if not 0.0 <= self.heldout_fraction < 1.0:
            return False, f"heldout_fraction 须在 [0, 1): {self.heldout_fraction}"
        if not 1 <= self.sentences_min <= self.sentences_max:
            return False, f"句数范围非法: {self.sentences_min}..{self.sentences_max}"
        if self.order_markers and self.sentences_max > len(ORDINALS):
            return False, f"开启序数词时每篇最多 {len(ORDINALS)} 句"
        if not 1 <= self.words_min <= self.words_max:
            return False, f"词数范围非法: {self.words_min}..{self.words_max}"
        for name in ("topical_density", "entity_rate", "phrase_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                return False, f"{name} 须在 [0, 1]: {value}"
        if self.entity_rate + self.phrase_rate > 1.0:
            return False, "entity_rate + phrase_rate 不能超过 1"
        if self.topic_count < 2 or self.topic_words < 3:
            return False, "至少需要 2 个主题、每个主题 3 个词"
        if min(self.filler_vocab, self.phrase_pool, self.name_pool) < 2:
            return False, "词池过小"
        for name in ("ir_pairs", "discourse_pairs", "finetune_train", "finetune_dev"):
            if getattr(self, name) < 0:
                return False, f"{name} 不能为负"
        return True, ""

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"合成数据配置包含未知字段: {', '.join(sorted(unknown))}")
        spec = cls(**data)
        ok, msg = spec.validate()
        if not ok:
            raise ConfigError(msg)
        return spec

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class WordPools:
    """由种子决定的互不相交的词池。"""
    topics: List[List[str]]
    filler: List[str]
    phrases: List[Tuple[str, str]]
    names: List[str]


def build_word_pools(spec: SyntheticSpec, seed: int) -> WordPools:
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
    words = [a + b for a in syllables for b in syllables]
    needed = spec.topic_count * spec.topic_words + spec.filler_vocab + 2 * spec.phrase_pool + spec.name_pool
    if needed > len(words):
        raise ConfigError(f"词池需求 {needed} 超过可生成的词数 {len(words)}")
    order = np.random.default_rng([seed, 0]).permutation(len(words))
    shuffled = [words[i] for i in order]

    cursor = 0

    def take(count):
        nonlocal cursor
        chunk = shuffled[cursor: cursor + count]
        cursor += count
        return chunk

    topics = [take(spec.topic_words) for _ in range(spec.topic_count)]
    filler = take(spec.filler_vocab)
    phrase_words = take(2 * spec.phrase_pool)
    phrases = [(phrase_words[2 * i], phrase_words[2 * i + 1]) for i in range(spec.phrase_pool)]
    names = [w.capitalize() for w in take(spec.name_pool)]
    return WordPools(topics, filler, phrases, names)


def _pick(rng: np.random.Generator, items: Sequence):
    return items[int(rng.integers(len(items)))]


class _DocumentBuilder:
    def __init__(self, spec: SyntheticSpec, pools: WordPools, rng: np.random.Generator):
        self.spec = spec
        self.pools = pools
        self.rng = rng

    def _name(self) -> Tuple[str, str]:
        return _pick(self.rng, self.pools.names), _pick(self.rng, self.pools.names)

    def build(self, doc_id: str, tag: CorpusTag) -> Document:
        spec, rng, pools = self.spec, self.rng, self.pools
        topic = int(rng.integers(spec.topic_count))
        characters = [self._name(), self._name()]
        doc_phrases = [_pick(rng, pools.phrases) for _ in range(2)]
        sentence_count = int(rng.integers(spec.sentences_min, spec.sentences_max + 1))
        entity_index, phrase_index = 0, 0
        sentences = []
        for i in range(sentence_count):
            tokens: List[Token] = []
            if spec.order_markers:
                tokens.append(Token(ORDINALS[i].capitalize(), was_capitalized=True))
            for _ in range(int(rng.integers(spec.words_min, spec.words_max + 1))):
                draw = rng.random()
                topical = rng.random() < spec.topical_density
                if draw < spec.entity_rate:
                    first, last = _pick(rng, characters) if topical else self._name()
                    tag_ = SpanTag(SpanKind.ENTITY, entity_index)
                    entity_index += 1
                    tokens.append(Token(first, was_capitalized=True, span_tag=tag_))
                    tokens.append(Token(last, was_capitalized=True, span_tag=tag_))
                elif draw < spec.entity_rate + spec.phrase_rate:
                    left, right = _pick(rng, doc_phrases) if topical else _pick(rng, pools.phrases)
                    tag_ = SpanTag(SpanKind.PHRASE, phrase_index)
                    phrase_index += 1
                    tokens.append(Token(left, span_tag=tag_))
                    tokens.append(Token(right, span_tag=tag_))
                elif topical:
                    tokens.append(Token(_pick(rng, pools.topics[topic])))
                else:
                    tokens.append(Token(_pick(rng, pools.filler)))
            if not spec.order_markers and not tokens[0].was_capitalized:
                tokens[0] = Token(tokens[0].surface.capitalize(), was_capitalized=True, span_tag=tokens[0].span_tag)
            sentences.append(Sentence(tokens))
        return Document(id=doc_id, sentences=sentences, source_corpus=tag)


def generate_documents(spec: SyntheticSpec, seed: int, tag: CorpusTag, count: int, split: str, pools: WordPools) -> List[Document]:
    stream = 1 + DOCUMENT_TAGS.index(tag) * 2 + (1 if split == "heldout" else 0)
    builder = _DocumentBuilder(spec, pools, np.random.default_rng([seed, stream]))
    return [builder.build(f"{tag.value}-{split}-{i:05d}", tag) for i in range(count)]


def _words(rng: np.random.Generator, pool: Sequence[str], count: int) -> List[str]:
    return [_pick(rng, pool) for _ in range(count)]


def generate_ir_pairs(spec: SyntheticSpec, pools: WordPools, rng: np.random.Generator, count: int) -> List[Tuple[str, str, int]]:
    """0: title 含全部 query 词；1: 同主题但不含 query 词；2: 其它主题。"""
    rows = []
    for i in range(count):
        label = i % 3
        topic = int(rng.integers(spec.topic_count))
        words = pools.topics[topic]
        picks = [int(v) for v in rng.choice(len(words), size=3, replace=False)]
        query = [words[picks[0]], words[picks[1]]]
        if label == 0:
            title = query + [words[picks[2]]] + _words(rng, pools.filler, 2)
            title = [title[int(j)] for j in rng.permutation(len(title))]
        elif label == 1:
            others = [w for w in words if w not in query]
            title = _words(rng, others, 2) + _words(rng, pools.filler, 2)
        else:
            other_topic = (topic + 1 + int(rng.integers(spec.topic_count - 1))) % spec.topic_count
            title = _words(rng, pools.topics[other_topic], 2) + _words(rng, pools.filler, 2)
        rows.append((" ".join(query + _words(rng, pools.filler, 1)), " ".join(title), label))
    return [rows[int(j)] for j in rng.permutation(len(rows))]


def generate_discourse_pairs(spec: SyntheticSpec, pools: WordPools, rng: np.random.Generator, count: int) -> List[Tuple[str, str, str]]:
    relations = sorted(DISCOURSE_CONNECTIVES)
    rows = []
    for _ in range(count):
        relation = _pick(rng, relations)
        topic = pools.topics[int(rng.integers(spec.topic_count))]
        first = _words(rng, topic, 2) + _words(rng, pools.filler, 3)
        second = [DISCOURSE_CONNECTIVES[relation]] + _words(rng, topic, 1) + _words(rng, pools.filler, 3)
        rows.append((" ".join(first).capitalize(), " ".join(second), relation))
    return rows


def generate_finetune_rows(spec: SyntheticSpec, pools: WordPools, rng: np.random.Generator, count: int) -> List[Tuple[int, str]]:
    """主题前一半为类别 0，后一半为类别 1。"""
    half = spec.topic_count // 2
    rows = []
    for i in range(count):
        label = i % 2
        topic = int(rng.integers(half)) if label == 0 else half + int(rng.integers(spec.topic_count - half))
        words = _words(rng, pools.topics[topic], 3) + _words(rng, pools.filler, 4)
        words = [words[int(j)] for j in rng.permutation(len(words))]
        rows.append((label, " ".join(words)))
    return [rows[int(j)] for j in rng.permutation(len(rows))]


def _write_tsv(path: str, rows: Sequence[Sequence]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write("\t".join(str(cell) for cell in row) + "\n")


def _split_count(total: int, fraction: float) -> Tuple[int, int]:
    heldout = int(round(total * fraction))
    return total - heldout, heldout


def gen_synthetic_corpus(spec: SyntheticSpec, seed: int, out_dir: str) -> Dict:
    """
    生成全部合成数据并写出清单文件。

    Args:
        spec: 生成参数
        seed: 随机种子
        out_dir: 输出目录

    Returns:
        清单 (路径均相对于 out_dir)
    """
    ok, msg = spec.validate()
    if not ok:
        raise ConfigError(msg)
    pools = build_word_pools(spec, seed)
    manifest = {"seed": seed, "spec": spec.to_dict(), "train": {}, "heldout": {}, "finetune": {}}
    for split in ("train", "heldout"):
        os.makedirs(os.path.join(out_dir, split), exist_ok=True)

    for tag_name in sorted(spec.documents):
        tag = CorpusTag(tag_name)
        train_count, heldout_count = _split_count(spec.documents[tag_name], spec.heldout_fraction)
        for split, count in (("train", train_count), ("heldout", heldout_count)):
            documents = generate_documents(spec, seed, tag, count, split, pools)
            rel = f"{split}/{tag.value}.jsonl"
            write_corpus(os.path.join(out_dir, rel), documents)
            manifest[split][tag.value] = rel

    extra_stream = 1 + 2 * len(DOCUMENT_TAGS)
    if spec.ir_pairs:
        rng = np.random.default_rng([seed, extra_stream])
        rows = generate_ir_pairs(spec, pools, rng, spec.ir_pairs)
        train_count, _ = _split_count(len(rows), spec.heldout_fraction)
        for split, part in (("train", rows[:train_count]), ("heldout", rows[train_count:])):
            rel = f"{split}/{CorpusTag.IR_RELEVANCE.value}.tsv"
            _write_tsv(os.path.join(out_dir, rel), part)
            manifest[split][CorpusTag.IR_RELEVANCE.value] = rel
    if spec.discourse_pairs:
        rng = np.random.default_rng([seed, extra_stream + 1])
        rows = generate_discourse_pairs(spec, pools, rng, spec.discourse_pairs)
        train_count, _ = _split_count(len(rows), spec.heldout_fraction)
        for split, part in (("train", rows[:train_count]), ("heldout", rows[train_count:])):
            rel = f"{split}/{CorpusTag.DISCOURSE.value}.tsv"
            _write_tsv(os.path.join(out_dir, rel), part)
            manifest[split][CorpusTag.DISCOURSE.value] = rel
    if spec.finetune_train or spec.finetune_dev:
        rng = np.random.default_rng([seed, extra_stream + 2])
        for name, count in (("train", spec.finetune_train), ("dev", spec.finetune_dev)):
            rel = f"finetune_{name}.tsv"
            _write_tsv(os.path.join(out_dir, rel), generate_finetune_rows(spec, pools, rng, count))
            manifest["finetune"][name] = rel
        manifest["finetune"]["classes"] = 2

    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")

    total_docs = sum(spec.documents.values())
    print(f"{Fore.GREEN}[成功] 合成数据已生成: {out_dir}{Style.RESET_ALL}")
    print(f"  文档 {total_docs} 篇, IR 句对 {spec.ir_pairs}, 篇章句对 {spec.discourse_pairs}, "
          f"微调 {spec.finetune_train}/{spec.finetune_dev}")
    logger.info(f"[合成数据] seed={seed} 输出到 {out_dir}")
    return manifest


def load_manifest(path: str) -> Dict:
    """读取清单并把相对路径解析为绝对路径。"""
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(path):
        raise ConfigError(f"数据清单不存在: {path}", {"path": path})
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    for split in ("train", "heldout"):
        manifest[split] = {k: os.path.join(base, v) for k, v in manifest.get(split, {}).items()}
    finetune = manifest.get("finetune", {})
    for name in ("train", "dev"):
        if name in finetune:
            finetune[name] = os.path.join(base, finetune[name])
    return manifest
