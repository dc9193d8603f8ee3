# -*- coding: utf-8 -*-
"""
预训练任务模块：任务注册表、任务与语料的对应关系，以及七种样本构造器。

词级任务 (token 级损失):  知识掩码、大小写预测、词-文档关系
结构任务 (句子级损失):    句子重排、句子距离
语义任务 (句子级损失):    篇章关系、IR 相关性

所有构造器都是 (输入记录, rng) 的纯函数：同一种子产生完全相同的样本。
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from .corpus import (
    CLS_ID,
    DOCUMENT_TAGS,
    MASK_ID,
    NUM_SPECIAL,
    SEP_ID,
    CorpusTag,
    DiscoursePair,
    Document,
    RelationVocabulary,
    Sentence,
    SpanKind,
    Vocabulary,
    parse_corpus_tag,
    tokenize,
)
from .errors import LabelError, SequenceTooLongError, TaskConstructionError
from .permutation import encode_reordering_label, reordering_class_count

logger = logging.getLogger(__name__)


class LossLevel(Enum):
    TOKEN = "token"
    SENTENCE = "sentence"


class TaskFamily(Enum):
    WORD = "word_aware"
    STRUCTURE = "structure_aware"
    SEMANTIC = "semantic_aware"


@dataclass(frozen=True)
class TaskSpec:
    """
    预训练任务的身份信息。

    arity 为 None 表示类别数依赖运行时 (词表大小、片段上限、关系词表)。
    """
    name: str
    task_id: int
    level: LossLevel
    family: TaskFamily
    corpora: FrozenSet[CorpusTag]
    arity: Optional[int] = None
    display_name: str = ""


_DOC_CORPORA = frozenset(DOCUMENT_TAGS)

TASK_SPECS: Dict[str, TaskSpec] = {
    spec.name: spec for spec in (
        TaskSpec("knowledge_masking", 0, LossLevel.TOKEN, TaskFamily.WORD, _DOC_CORPORA, None, "知识掩码"),
        TaskSpec("capitalization", 1, LossLevel.TOKEN, TaskFamily.WORD, _DOC_CORPORA, 2, "大小写预测"),
        TaskSpec("token_document_relation", 2, LossLevel.TOKEN, TaskFamily.WORD, _DOC_CORPORA, 2, "词-文档关系"),
        TaskSpec("sentence_reordering", 3, LossLevel.SENTENCE, TaskFamily.STRUCTURE, _DOC_CORPORA, None, "句子重排"),
        TaskSpec("sentence_distance", 4, LossLevel.SENTENCE, TaskFamily.STRUCTURE, _DOC_CORPORA, 3, "句子距离"),
        TaskSpec("discourse_relation", 5, LossLevel.SENTENCE, TaskFamily.SEMANTIC,
                 frozenset({CorpusTag.DISCOURSE}), None, "篇章关系"),
        TaskSpec("ir_relevance", 6, LossLevel.SENTENCE, TaskFamily.SEMANTIC,
                 frozenset({CorpusTag.IR_RELEVANCE}), 3, "IR 相关性"),
    )
}

TASK_COUNT = len(TASK_SPECS)
_TASKS_BY_ID = {spec.task_id: spec for spec in TASK_SPECS.values()}


def get_task_spec(key: Union[str, int]) -> TaskSpec:
    """按名称或 id 查找任务。"""
    spec = _TASKS_BY_ID.get(key) if isinstance(key, int) else TASK_SPECS.get(key)
    if spec is None:
        raise TaskConstructionError(f"未知预训练任务: {key} (可选: {', '.join(TASK_SPECS)})")
    return spec


def applicable_tasks(corpus_tag) -> FrozenSet[TaskSpec]:
    """
    某类语料可以构造哪些任务。

    百科/书籍/新闻/对话 -> 前五种任务；IR 数据 -> 仅 IR 相关性；篇章数据 -> 仅篇章关系。
    """
    tag = parse_corpus_tag(corpus_tag)
    return frozenset(spec for spec in TASK_SPECS.values() if tag in spec.corpora)


def resolve_arity(spec: TaskSpec, vocab_size: int, max_segments: int, relation_count: int = 0) -> int:
    """计算任务头的输出类别数。"""
    if spec.arity is not None:
        return spec.arity
    if spec.name == "knowledge_masking":
        return vocab_size
    if spec.name == "sentence_reordering":
        return reordering_class_count(max_segments)
    if spec.name == "discourse_relation":
        if relation_count < 1:
            raise TaskConstructionError("篇章关系任务需要非空的关系词表")
        return relation_count
    raise TaskConstructionError(f"无法确定任务 {spec.name} 的类别数")


# ---------------------------------------------------------------------------
# 样本
# ---------------------------------------------------------------------------

@dataclass
class TaskInstance:
    """
    一条训练样本。

    token_labels: 任务 id -> 与序列等长的标签 (仅在对应 mask 为真的位置有意义)
    loss_mask:    本任务的损失位置；句子级任务只有位置 0 ([CLS]) 为真
    head_masks:   融合模式下附加 token 头各自的 mask
    """
    task_id: int
    token_ids: List[int]
    segment_ids: List[int]
    position_ids: List[int]
    attention_length: int
    loss_mask: List[bool]
    token_labels: Optional[Dict[int, List[int]]] = None
    sentence_label: Optional[int] = None
    head_masks: Dict[int, List[bool]] = field(default_factory=dict)

    @property
    def seq_len(self) -> int:
        return len(self.token_ids)

    def mask_for(self, task_id: int) -> List[bool]:
        if task_id in self.head_masks:
            return self.head_masks[task_id]
        return self.loss_mask

    def labels_for(self, task_id: int) -> Optional[List[int]]:
        if not self.token_labels:
            return None
        return self.token_labels.get(task_id)

    def validate(self, max_seq_len: int, max_segments: int, vocab_size: int) -> tuple[bool, str]:
        """检查样本是否满足类型约束。"""
        n = self.seq_len
        if not (len(self.segment_ids) == len(self.position_ids) == len(self.loss_mask) == n):
            return False, "序列长度不一致"
        if n > max_seq_len:
            return False, f"序列长度 {n} 超过上限 {max_seq_len}"
        if n < 2 or self.token_ids[0] != CLS_ID or self.token_ids[-1] != SEP_ID:
            return False, "序列必须以 [CLS] 开头、[SEP] 结尾"
        if self.attention_length != n:
            return False, "attention_length 与序列长度不一致"
        if any(not 0 <= t < vocab_size for t in self.token_ids):
            return False, "token id 越界"
        if any(not 0 <= s < max_segments for s in self.segment_ids):
            return False, "segment id 越界"
        if list(self.position_ids) != list(range(n)):
            return False, "position id 必须为 0..n-1"
        if not self.token_labels and self.sentence_label is None:
            return False, "token_labels 与 sentence_label 不能同时为空"
        for head_id, labels in (self.token_labels or {}).items():
            if len(labels) != n or len(self.mask_for(head_id)) != n:
                return False, f"任务 {head_id} 的标签/mask 长度不一致"
            mask = self.mask_for(head_id)
            if mask[0] or mask[-1]:
                return False, f"任务 {head_id} 的 mask 覆盖了 [CLS]/[SEP]"
        return True, ""


@dataclass
class MaskingConfig:
    """知识掩码参数 (15% 预算，80/10/10 替换)。"""
    budget: float = 0.15
    mask_prob: float = 0.8
    random_prob: float = 0.1

    def validate(self) -> tuple[bool, str]:
        if not 0.0 < self.budget < 1.0:
            return False, f"掩码比例须在 (0, 1): {self.budget}"
        if self.mask_prob < 0 or self.random_prob < 0 or self.mask_prob + self.random_prob > 1.0:
            return False, f"替换概率非法: mask={self.mask_prob}, random={self.random_prob}"
        return True, ""


OVERFLOW_POLICIES = ("split", "reject")


@dataclass
class TaskConfig:
    """样本构造共用参数。"""
    vocab_size: int
    max_seq_len: int = 64
    max_segments: int = 3
    masking: MaskingConfig = field(default_factory=MaskingConfig)
    overflow: str = "split"
    # 句子距离三类的采样比例 (默认均分)
    distance_weights: Tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    @property
    def document_budget(self) -> int:
        """单篇文档可用的 token 数 ([CLS] + 每段一个 [SEP])。"""
        return self.max_seq_len - 1 - self.max_segments


def _pack_segments(segments: Sequence[Sequence[int]], config: TaskConfig) -> Tuple[List[int], List[int], List[int]]:
    """[CLS] seg0 [SEP] seg1 [SEP] ...，segment id 为片段序号。"""
    token_ids, segment_ids = [CLS_ID], [0]
    for index, segment in enumerate(segments):
        token_ids.extend(segment)
        token_ids.append(SEP_ID)
        segment_ids.extend([index] * (len(segment) + 1))
    if len(token_ids) > config.max_seq_len:
        raise SequenceTooLongError(
            f"序列长度 {len(token_ids)} 超过上限 {config.max_seq_len}",
            {"length": len(token_ids), "max_seq_len": config.max_seq_len},
        )
    if len(segments) > config.max_segments:
        raise TaskConstructionError(f"片段数 {len(segments)} 超过上限 {config.max_segments}")
    return token_ids, segment_ids, list(range(len(token_ids)))


def _instance(task_id, token_ids, segment_ids, position_ids, loss_mask, token_labels=None, sentence_label=None):
    return TaskInstance(
        task_id=task_id,
        token_ids=token_ids,
        segment_ids=segment_ids,
        position_ids=position_ids,
        attention_length=len(token_ids),
        loss_mask=loss_mask,
        token_labels=token_labels,
        sentence_label=sentence_label,
    )


def _sentence_mask(length: int) -> List[bool]:
    mask = [False] * length
    mask[0] = True
    return mask


def split_document(doc: Document, config: TaskConfig) -> List[Document]:
    """
    处理超长文档。

    split: 切成若干段连续句子，每段不超过 document_budget；单句超长时截断。
    reject: 直接报错。
    """
    budget = config.document_budget
    if doc.token_count <= budget:
        return [doc]
    if config.overflow == "reject":
        raise SequenceTooLongError(
            f"文档 {doc.id} 共 {doc.token_count} 个 token，超过上限 {budget}",
            {"doc_id": doc.id, "tokens": doc.token_count, "budget": budget},
        )
    chunks, current, used = [], [], 0
    for sentence in doc.sentences:
        if len(sentence) > budget:
            sentence = Sentence(sentence.tokens[:budget])
        if current and used + len(sentence) > budget:
            chunks.append(current)
            current, used = [], 0
        current.append(sentence)
        used += len(sentence)
    if current:
        chunks.append(current)
    return [
        Document(id=f"{doc.id}#{i}", sentences=sentences, source_corpus=doc.source_corpus)
        for i, sentences in enumerate(chunks)
    ]


def _ensure_fits(doc: Document, extra: int, config: TaskConfig):
    if doc.token_count + extra > config.max_seq_len:
        raise SequenceTooLongError(
            f"文档 {doc.id} 放不进 {config.max_seq_len} 的序列",
            {"doc_id": doc.id, "tokens": doc.token_count},
        )


# ---------------------------------------------------------------------------
# 词级任务
# ---------------------------------------------------------------------------

def masking_units(doc: Document) -> List[Tuple[SpanKind, List[int]]]:
    """
    把文档切成掩码单元：实体片段、短语片段、单个词。

    返回的位置是文档内扁平下标 (不含 [CLS] 偏移)。
    """
    units: List[Tuple[SpanKind, List[int]]] = []
    flat = 0
    for sentence in doc.sentences:
        current_tag, current = None, []
        for tok in sentence.tokens:
            tag = tok.span_tag
            if tag.kind != SpanKind.NONE and tag == current_tag:
                current.append(flat)
            else:
                if current:
                    units.append((current_tag.kind, current))
                current_tag, current = tag, [flat]
                if tag.kind == SpanKind.NONE:
                    units.append((SpanKind.NONE, current))
                    current_tag, current = None, []
            flat += 1
        if current:
            units.append((current_tag.kind, current))
    return units


_UNIT_PRIORITY = (SpanKind.ENTITY, SpanKind.PHRASE, SpanKind.NONE)


def make_knowledge_masking(doc: Document, rng: np.random.Generator, config: TaskConfig) -> TaskInstance:
    """
    知识掩码：按整片段选中约 15% 的 token (实体 > 短语 > 单词)，
    被选位置 80% 换成 [MASK]、10% 换成随机词、10% 保持不变。
    """
    spec = TASK_SPECS["knowledge_masking"]
    _ensure_fits(doc, 2, config)
    tokens = doc.tokens()
    n = len(tokens)
    masking = config.masking
    # 随机舍入，使期望掩码比例恰为 budget
    budget = int(np.floor(masking.budget * n + rng.random()))

    units = masking_units(doc)
    selected: List[int] = []
    for kind in _UNIT_PRIORITY:
        candidates = [positions for unit_kind, positions in units if unit_kind == kind]
        for index in rng.permutation(len(candidates)):
            positions = candidates[index]
            if len(selected) + len(positions) <= budget:
                selected.extend(positions)

    token_ids, segment_ids, position_ids = _pack_segments([[t.vocab_id for t in tokens]], config)
    labels = [0] * len(token_ids)
    loss_mask = [False] * len(token_ids)
    random_low = NUM_SPECIAL if config.vocab_size > NUM_SPECIAL else 0
    for flat in sorted(selected):
        pos = flat + 1
        labels[pos] = token_ids[pos]
        loss_mask[pos] = True
        draw = rng.random()
        if draw < masking.mask_prob:
            token_ids[pos] = MASK_ID
        elif draw < masking.mask_prob + masking.random_prob:
            token_ids[pos] = int(rng.integers(random_low, config.vocab_size))
    return _instance(spec.task_id, token_ids, segment_ids, position_ids, loss_mask, token_labels={spec.task_id: labels})


def make_capitalization(doc: Document, config: TaskConfig) -> TaskInstance:
    """大小写预测：每个真实 token 的标签为 was_capitalized。"""
    spec = TASK_SPECS["capitalization"]
    _ensure_fits(doc, 2, config)
    tokens = doc.tokens()
    token_ids, segment_ids, position_ids = _pack_segments([[t.vocab_id for t in tokens]], config)
    labels = [0] + [int(t.was_capitalized) for t in tokens] + [0]
    loss_mask = [False] + [True] * len(tokens) + [False]
    return _instance(spec.task_id, token_ids, segment_ids, position_ids, loss_mask, token_labels={spec.task_id: labels})


def make_token_document_relation(doc: Document, segment_index: int, config: TaskConfig) -> TaskInstance:
    """
    词-文档关系：输入为文档中的一个片段 (句子)，
    标签为该 token 的 vocab id 是否出现在同文档的其它片段中。
    """
    spec = TASK_SPECS["token_document_relation"]
    if len(doc.sentences) < 2:
        raise TaskConstructionError(f"文档 {doc.id} 只有 1 个片段，无法构造词-文档关系样本", {"doc_id": doc.id})
    if not 0 <= segment_index < len(doc.sentences):
        raise TaskConstructionError(f"片段下标越界: {segment_index}", {"doc_id": doc.id})
    others = {
        tok.vocab_id
        for i, sentence in enumerate(doc.sentences) if i != segment_index
        for tok in sentence.tokens
    }
    # 单句超长时截断 (reject 策略在切分阶段已报错)
    segment = doc.sentences[segment_index].tokens[: config.max_seq_len - 2]
    token_ids, segment_ids, position_ids = _pack_segments([[t.vocab_id for t in segment]], config)
    labels = [0] + [int(t.vocab_id in others) for t in segment] + [0]
    loss_mask = [False] + [True] * len(segment) + [False]
    return _instance(spec.task_id, token_ids, segment_ids, position_ids, loss_mask, token_labels={spec.task_id: labels})


def make_fused_instance(doc: Document, rng: np.random.Generator, config: TaskConfig) -> TaskInstance:
    """融合样本：知识掩码输入上同时带大小写标签，供 combined_loss 多头训练。"""
    instance = make_knowledge_masking(doc, rng, config)
    capital = make_capitalization(doc, config)
    cap_id = TASK_SPECS["capitalization"].task_id
    instance.token_labels[cap_id] = capital.token_labels[cap_id]
    instance.head_masks[cap_id] = capital.loss_mask
    return instance


# ---------------------------------------------------------------------------
# 结构任务
# ---------------------------------------------------------------------------

def make_sentence_reordering(doc: Document, m: int, rng: np.random.Generator, config: TaskConfig) -> TaskInstance:
    """
    句子重排：把文档随机切成 n (1..min(m, 句数)) 段连续句子并打乱，
    标签 = offset(n) + Lehmer(perm)，展示的第 i 段是原来的第 perm[i] 段。
    """
    spec = TASK_SPECS["sentence_reordering"]
    if m < 1:
        raise TaskConstructionError(f"片段上限 m 至少为 1: {m}")
    if m > config.max_segments:
        raise TaskConstructionError(f"m={m} 超过 segment 表大小 {config.max_segments}")
    sentence_count = len(doc.sentences)
    n = int(rng.integers(1, min(m, sentence_count) + 1))
    cuts = sorted(int(c) for c in rng.choice(np.arange(1, sentence_count), size=n - 1, replace=False)) if n > 1 else []
    bounds = [0] + cuts + [sentence_count]
    groups = [
        [tok.vocab_id for sentence in doc.sentences[bounds[i]:bounds[i + 1]] for tok in sentence.tokens]
        for i in range(n)
    ]
    perm = [int(p) for p in rng.permutation(n)]
    shown = [groups[p] for p in perm]
    token_ids, segment_ids, position_ids = _pack_segments(shown, config)
    label = encode_reordering_label(perm)
    return _instance(spec.task_id, token_ids, segment_ids, position_ids, _sentence_mask(len(token_ids)), sentence_label=label)


@dataclass(frozen=True)
class SentencePairDraw:
    """句子距离采样结果 (文档下标 + 句子下标)。"""
    doc_a: int
    sentence_a: int
    doc_b: int
    sentence_b: int
    label: int


_DISTANCE_CLASS_NAMES = ("相邻 (0)", "同文档不相邻 (1)", "跨文档 (2)")


def sample_sentence_pair(
    corpus: Sequence[Document],
    rng: np.random.Generator,
    label: Optional[int] = None,
    weights: Sequence[float] = (1 / 3, 1 / 3, 1 / 3),
) -> SentencePairDraw:
    """按类别采样一对句子；语料无法提供该类别时报错。"""
    if label is None:
        p = np.asarray(weights, dtype=np.float64)
        label = int(rng.choice(3, p=p / p.sum()))
    if label not in (0, 1, 2):
        raise LabelError(f"句子距离标签必须为 0/1/2: {label}")

    if label == 0:
        pool = [i for i, d in enumerate(corpus) if len(d.sentences) >= 2]
        if not pool:
            raise TaskConstructionError(f"语料无法提供类别 {_DISTANCE_CLASS_NAMES[0]}", {"class": 0})
        doc = pool[int(rng.integers(len(pool)))]
        first = int(rng.integers(len(corpus[doc].sentences) - 1))
        return SentencePairDraw(doc, first, doc, first + 1, 0)
    if label == 1:
        pool = [i for i, d in enumerate(corpus) if len(d.sentences) >= 3]
        if not pool:
            raise TaskConstructionError(f"语料无法提供类别 {_DISTANCE_CLASS_NAMES[1]}", {"class": 1})
        doc = pool[int(rng.integers(len(pool)))]
        count = len(corpus[doc].sentences)
        pairs = [(i, j) for i in range(count) for j in range(i + 2, count)]
        first, second = pairs[int(rng.integers(len(pairs)))]
        return SentencePairDraw(doc, first, doc, second, 1)
    if len(corpus) < 2:
        raise TaskConstructionError(f"语料无法提供类别 {_DISTANCE_CLASS_NAMES[2]}", {"class": 2})
    doc_a, doc_b = (int(v) for v in rng.choice(len(corpus), size=2, replace=False))
    return SentencePairDraw(
        doc_a, int(rng.integers(len(corpus[doc_a].sentences))),
        doc_b, int(rng.integers(len(corpus[doc_b].sentences))),
        2,
    )


def _pair_instance(task_id: int, first: Sequence[int], second: Sequence[int], label: int, config: TaskConfig) -> TaskInstance:
    half = (config.max_seq_len - 3) // 2
    if len(first) + len(second) + 3 > config.max_seq_len:
        first, second = list(first)[:half], list(second)[:half]
    token_ids, segment_ids, position_ids = _pack_segments([list(first), list(second)], config)
    return _instance(task_id, token_ids, segment_ids, position_ids, _sentence_mask(len(token_ids)), sentence_label=label)


def make_sentence_distance(
    corpus: Sequence[Document],
    rng: np.random.Generator,
    config: TaskConfig,
    label: Optional[int] = None,
) -> TaskInstance:
    """句子距离：0 同文档相邻，1 同文档不相邻，2 不同文档。"""
    spec = TASK_SPECS["sentence_distance"]
    draw = sample_sentence_pair(corpus, rng, label, config.distance_weights)
    first = [t.vocab_id for t in corpus[draw.doc_a].sentences[draw.sentence_a].tokens]
    second = [t.vocab_id for t in corpus[draw.doc_b].sentences[draw.sentence_b].tokens]
    return _pair_instance(spec.task_id, first, second, draw.label, config)


# ---------------------------------------------------------------------------
# 语义任务
# ---------------------------------------------------------------------------

def _encode_text(text: str, vocab: Vocabulary) -> List[int]:
    return [vocab.id_of(t.surface) for t in tokenize(text)]


def make_discourse_relation(
    record: DiscoursePair,
    relations: RelationVocabulary,
    vocab: Vocabulary,
    config: TaskConfig,
) -> TaskInstance:
    """篇章关系：两句话为两个片段，标签为关系 id。"""
    spec = TASK_SPECS["discourse_relation"]
    label = relations.id_of(record.relation)
    return _pair_instance(
        spec.task_id, _encode_text(record.sentence1, vocab), _encode_text(record.sentence2, vocab), label, config
    )


def make_ir_relevance(query: str, title: str, label: int, vocab: Vocabulary, config: TaskConfig) -> TaskInstance:
    """IR 相关性：query 为第一段、title 为第二段；0 强相关 / 1 弱相关 / 2 无关。"""
    spec = TASK_SPECS["ir_relevance"]
    if label not in (0, 1, 2):
        raise LabelError(f"IR 标签必须为 0/1/2: {label}", {"label": label})
    return _pair_instance(spec.task_id, _encode_text(query, vocab), _encode_text(title, vocab), int(label), config)


def make_classification_instance(
    text_a: str,
    text_b: Optional[str],
    label: int,
    vocab: Vocabulary,
    config: TaskConfig,
    task_id: int = 0,
) -> TaskInstance:
    """
    下游分类样本：单句为 [CLS] a [SEP]，句对为 [CLS] a [SEP] b [SEP]；超长时截断。

    Args:
        task_id: 输入使用的任务嵌入 id (微调时可任选)
    """
    if label < 0:
        raise LabelError(f"分类标签不能为负: {label}", {"label": label})
    first = _encode_text(text_a, vocab)
    if text_b is not None:
        return _pair_instance(task_id, first, _encode_text(text_b, vocab), int(label), config)
    token_ids, segment_ids, position_ids = _pack_segments([first[: config.max_seq_len - 2]], config)
    return _instance(task_id, token_ids, segment_ids, position_ids, _sentence_mask(len(token_ids)), sentence_label=int(label))
