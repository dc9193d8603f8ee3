# -*- coding: utf-8 -*-
"""
样本流模块：把语料变成按任务划分、可无限循环的样本流，并负责 batch 拼接。

每个任务流按 epoch 动态生成样本：第 e 个 epoch 中第 u 个单元 (文档 / 片段 / 句对)
使用种子 (run seed, salt, task_id, e, u) 构造，epoch 内顺序由 (run seed, salt, task_id, e)
决定。流用尽时自动进入下一个 epoch 并重新打乱，不会报错。
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .corpus import (
    DOCUMENT_TAGS,
    PAD_ID,
    CorpusTag,
    DiscoursePair,
    Document,
    IRPair,
    RelationVocabulary,
    Vocabulary,
    build_relation_vocab,
    build_vocab,
    index_documents,
    load_corpus,
    load_discourse_pairs,
    load_ir_pairs,
    parse_corpus_tag,
)
from .errors import ConfigError, TaskConstructionError
from .tasks import (
    TaskConfig,
    TaskInstance,
    TaskSpec,
    get_task_spec,
    make_capitalization,
    make_discourse_relation,
    make_fused_instance,
    make_ir_relevance,
    make_knowledge_masking,
    make_sentence_distance,
    make_sentence_reordering,
    make_token_document_relation,
    split_document,
)

logger = logging.getLogger(__name__)

# 训练流与评估集使用不同的种子域
TRAIN_SALT = 0
HELDOUT_SALT = 1

WHOLE_DOCUMENT_TASKS = frozenset({"token_document_relation", "sentence_distance"})


@dataclass
class PretrainData:
    """一份已编号的预训练数据 (文档语料 + IR 句对 + 篇章关系句对)。"""
    documents: List[Document] = field(default_factory=list)
    ir_pairs: List[IRPair] = field(default_factory=list)
    discourse_pairs: List[DiscoursePair] = field(default_factory=list)
    vocab: Optional[Vocabulary] = None
    relations: Optional[RelationVocabulary] = None

    @property
    def relation_count(self) -> int:
        return len(self.relations) if self.relations is not None else 0


def load_pretrain_data(
    corpora: Dict[str, str],
    vocab: Optional[Vocabulary] = None,
    relations: Optional[RelationVocabulary] = None,
    min_count: int = 1,
) -> PretrainData:
    """
    按语料标签读取文件并完成编号。

    Args:
        corpora: 语料标签 -> 文件路径；文档类标签读 jsonl，ir_relevance / discourse 读 TSV
        vocab: 已有词表 (评估集复用训练词表)；None 时由本批数据构建
        relations: 已有篇章关系词表；None 时由本批数据构建
        min_count: 构建词表时的最低频次

    Returns:
        PretrainData
    """
    documents: List[Document] = []
    ir_pairs: List[IRPair] = []
    discourse_pairs: List[DiscoursePair] = []
    for key in sorted(corpora):
        tag = parse_corpus_tag(key)
        path = corpora[key]
        if tag in DOCUMENT_TAGS:
            documents.extend(load_corpus(path, "jsonl"))
        elif tag == CorpusTag.IR_RELEVANCE:
            ir_pairs.extend(load_ir_pairs(path))
        else:
            discourse_pairs.extend(load_discourse_pairs(path))

    if vocab is None:
        texts = [t for p in ir_pairs for t in (p.query, p.title)]
        texts += [t for p in discourse_pairs for t in (p.sentence1, p.sentence2)]
        vocab = build_vocab([documents], min_count=min_count, extra_texts=texts)
    if relations is None and discourse_pairs:
        relations = build_relation_vocab(discourse_pairs)
    return PretrainData(
        documents=index_documents(documents, vocab),
        ir_pairs=ir_pairs,
        discourse_pairs=discourse_pairs,
        vocab=vocab,
        relations=relations,
    )


# ---------------------------------------------------------------------------
# batch
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    """右侧补 [PAD] 对齐后的一批样本。"""
    instances: List[TaskInstance]
    token_ids: np.ndarray
    segment_ids: np.ndarray
    position_ids: np.ndarray
    task_ids: np.ndarray
    attention_lengths: np.ndarray

    @property
    def size(self) -> int:
        return len(self.instances)

    @property
    def seq_len(self) -> int:
        return int(self.token_ids.shape[1])


def collate(instances: Sequence[TaskInstance], task_id: Optional[int] = None) -> Batch:
    """
    拼接样本。pad 位置的 token 为 [PAD]，segment / position 为 0。

    Args:
        instances: 样本列表 (至少 1 条)
        task_id: 覆盖样本自带的 task id (微调时可选任意 task 嵌入)
    """
    if not instances:
        raise TaskConstructionError("collate: 样本列表为空")
    width = max(inst.seq_len for inst in instances)
    size = len(instances)
    token_ids = np.full((size, width), PAD_ID, dtype=np.int64)
    segment_ids = np.zeros((size, width), dtype=np.int64)
    position_ids = np.zeros((size, width), dtype=np.int64)
    for row, inst in enumerate(instances):
        n = inst.seq_len
        token_ids[row, :n] = inst.token_ids
        segment_ids[row, :n] = inst.segment_ids
        position_ids[row, :n] = inst.position_ids
    task_ids = np.array([inst.task_id if task_id is None else task_id for inst in instances], dtype=np.int64)
    lengths = np.array([inst.attention_length for inst in instances], dtype=np.int64)
    return Batch(list(instances), token_ids, segment_ids, position_ids, task_ids, lengths)


# ---------------------------------------------------------------------------
# 任务样本流
# ---------------------------------------------------------------------------

def _has_targets(instance: TaskInstance) -> bool:
    """短文档的知识掩码样本可能一个位置都没选中，这类样本直接跳过。"""
    return instance.sentence_label is not None or any(instance.loss_mask)


class TaskStream:
    """
    单个任务的样本流。

    Args:
        spec: 任务
        data: 已编号数据
        config: 样本构造参数
        seed: 运行种子
        salt: 种子域 (训练 / 评估)
        fused: 知识掩码样本是否附带大小写标签
    """

    def __init__(
        self,
        spec: TaskSpec,
        data: PretrainData,
        config: TaskConfig,
        seed: int,
        salt: int = TRAIN_SALT,
        fused: bool = False,
    ):
        self.spec = spec
        self.data = data
        self.config = config
        self.seed = int(seed)
        self.salt = int(salt)
        self.fused = fused
        self.epoch = 0
        self.cursor = 0

        # 超长文档的切分只用于整篇入序列的任务；词-文档关系与句子距离
        # 每条样本只放一到两句，标签依赖整篇原文档
        whole = [doc for doc in data.documents if doc.source_corpus in spec.corpora]
        chunks = [chunk for doc in whole for chunk in split_document(doc, config)]
        documents = whole if spec.name in WHOLE_DOCUMENT_TASKS else chunks
        self._documents = documents
        if spec.name == "token_document_relation":
            self._units = [(d, s) for d, doc in enumerate(documents) if len(doc.sentences) >= 2 for s in range(len(doc.sentences))]
        elif spec.name == "ir_relevance":
            self._units = list(range(len(data.ir_pairs)))
        elif spec.name == "discourse_relation":
            if data.relations is None:
                raise TaskConstructionError("篇章关系任务缺少关系词表 (没有篇章数据)")
            self._units = list(range(len(data.discourse_pairs)))
        else:
            self._units = list(range(len(documents)))
        if not self._units:
            raise TaskConstructionError(
                f"语料无法为任务 {spec.name} 提供样本", {"task": spec.name, "task_id": spec.task_id}
            )
        self._order = self._epoch_order(0)

    def __len__(self):
        return len(self._units)

    @property
    def documents(self) -> List[Document]:
        """流使用的文档：整篇 (词-文档关系 / 句子距离) 或切分后的片段。"""
        return self._documents

    @property
    def units(self) -> list:
        """单元列表：文档下标、(文档下标, 句下标) 或句对下标。"""
        return list(self._units)

    def _rng(self, *keys: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.salt, self.spec.task_id, *keys])

    def _epoch_order(self, epoch: int) -> np.ndarray:
        return self._rng(epoch).permutation(len(self._units))

    def make(self, unit_index: int, epoch: int) -> TaskInstance:
        """构造第 epoch 轮第 unit_index 个单元的样本 (纯函数)。"""
        rng = self._rng(epoch, unit_index + 1)
        unit = self._units[unit_index]
        name = self.spec.name
        config = self.config
        if name == "knowledge_masking":
            doc = self._documents[unit]
            return make_fused_instance(doc, rng, config) if self.fused else make_knowledge_masking(doc, rng, config)
        if name == "capitalization":
            return make_capitalization(self._documents[unit], config)
        if name == "token_document_relation":
            doc_index, segment_index = unit
            return make_token_document_relation(self._documents[doc_index], segment_index, config)
        if name == "sentence_reordering":
            return make_sentence_reordering(self._documents[unit], config.max_segments, rng, config)
        if name == "sentence_distance":
            return make_sentence_distance(self._documents, rng, config)
        if name == "discourse_relation":
            return make_discourse_relation(self.data.discourse_pairs[unit], self.data.relations, self.data.vocab, config)
        pair = self.data.ir_pairs[unit]
        return make_ir_relevance(pair.query, pair.title, pair.label, self.data.vocab, config)

    def next_instances(self, count: int) -> List[TaskInstance]:
        """取出接下来的 count 条样本，跨 epoch 时重新打乱。"""
        result = []
        skipped = 0
        while len(result) < count:
            if self.cursor >= len(self._units):
                self.epoch += 1
                self.cursor = 0
                self._order = self._epoch_order(self.epoch)
                logger.debug(f"[样本流] {self.spec.name} 进入第 {self.epoch} 轮")
            instance = self.make(int(self._order[self.cursor]), self.epoch)
            self.cursor += 1
            if _has_targets(instance):
                result.append(instance)
                skipped = 0
            else:
                skipped += 1
                if skipped > 4 * len(self._units):
                    raise TaskConstructionError(
                        f"任务 {self.spec.name} 连续生成空样本，文档可能过短", {"task": self.spec.name}
                    )
        return result

    def next_batch(self, batch_size: int) -> Batch:
        return collate(self.next_instances(batch_size))

    def fixed_set(self, limit: Optional[int] = None) -> List[TaskInstance]:
        """第 0 轮的前 limit 条样本，用作评估集 (不影响流的位置)。"""
        order = self._epoch_order(0)
        if limit is not None:
            order = order[:limit]
        instances = (self.make(int(i), 0) for i in order)
        return [inst for inst in instances if _has_targets(inst)]

    def state_dict(self) -> Dict[str, int]:
        return {"epoch": self.epoch, "cursor": self.cursor}

    def load_state_dict(self, state: Dict[str, int]):
        self.epoch = int(state["epoch"])
        self.cursor = int(state["cursor"])
        self._order = self._epoch_order(self.epoch)


def build_task_streams(
    data: PretrainData,
    task_names: Iterable[str],
    config: TaskConfig,
    seed: int,
    salt: int = TRAIN_SALT,
    fused: bool = False,
) -> Dict[int, TaskStream]:
    """为给定任务列表建立样本流，键为 task id。"""
    streams = {}
    for name in task_names:
        spec = get_task_spec(name)
        if spec.task_id in streams:
            raise ConfigError(f"任务重复: {name}")
        streams[spec.task_id] = TaskStream(spec, data, config, seed, salt, fused)
        logger.info(f"[样本流] {spec.name}: {len(streams[spec.task_id])} 个单元")
    return streams
