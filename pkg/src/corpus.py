# -*- coding: utf-8 -*-
"""
语料模块：文档模型、分词、语料文件读取与词表构建。

语料文件 (jsonl) 每行一篇文档:
    {"id": "doc-1", "corpus_tag": "encyclopedia",
     "sentences": [[["Paris", true], ["is", false]], ...],
     "entity_spans": [[句下标, 起始, 结束(不含)]], "phrase_spans": [...]}
token 也可以直接写成字符串，此时大小写标记由首字母判断。

IR 对文件:      query \\t title \\t label{0,1,2}
篇章关系对文件: sentence1 \\t sentence2 \\t relation
"""
import json
import logging
import os
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from colorama import Fore, Style

from .errors import CorpusFormatError, LabelError, VocabularyError

try:
    import chardet
except ImportError:
    chardet = None

logger = logging.getLogger(__name__)


class CorpusTag(Enum):
    """语料来源类型"""
    ENCYCLOPEDIA = "encyclopedia"
    BOOKS = "books"
    NEWS = "news"
    DIALOG = "dialog"
    IR_RELEVANCE = "ir_relevance"
    DISCOURSE = "discourse"


# 以文档形式存储的语料
DOCUMENT_TAGS = (CorpusTag.ENCYCLOPEDIA, CorpusTag.BOOKS, CorpusTag.NEWS, CorpusTag.DIALOG)


def parse_corpus_tag(value) -> CorpusTag:
    """字符串 -> CorpusTag，未知标签报错。"""
    if isinstance(value, CorpusTag):
        return value
    try:
        return CorpusTag(str(value).strip().lower())
    except ValueError:
        known = ", ".join(t.value for t in CorpusTag)
        raise CorpusFormatError(f"未知语料标签: {value} (可选: {known})", {"corpus_tag": value}) from None


class SpanKind(Enum):
    NONE = "none"
    ENTITY = "entity"
    PHRASE = "phrase"


@dataclass(frozen=True)
class SpanTag:
    """token 所属的实体/短语片段，index 为片段在文档内的编号。"""
    kind: SpanKind = SpanKind.NONE
    index: int = -1


NO_SPAN = SpanTag()

# 保留 id 0..4
SPECIAL_TOKENS = ("[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]")
PAD_ID, CLS_ID, SEP_ID, MASK_ID, UNK_ID = range(len(SPECIAL_TOKENS))
NUM_SPECIAL = len(SPECIAL_TOKENS)


@dataclass
class Token:
    surface: str
    vocab_id: int = UNK_ID
    was_capitalized: bool = False
    span_tag: SpanTag = NO_SPAN

    @property
    def key(self) -> str:
        """入词表的小写形式"""
        return self.surface.lower()


@dataclass
class Sentence:
    tokens: List[Token]

    def __len__(self):
        return len(self.tokens)


@dataclass
class Document:
    id: str
    sentences: List[Sentence]
    source_corpus: CorpusTag = CorpusTag.ENCYCLOPEDIA

    @property
    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def tokens(self) -> List[Token]:
        return [tok for s in self.sentences for tok in s.tokens]


@dataclass(frozen=True)
class IRPair:
    query: str
    title: str
    label: int


@dataclass(frozen=True)
class DiscoursePair:
    sentence1: str
    sentence2: str
    relation: str


# ---------------------------------------------------------------------------
# 分词
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def is_capitalized(surface: str) -> bool:
    return bool(surface) and surface[0].isupper()


def tokenize(text: str) -> List[Token]:
    """空白 + 标点切分；大小写标记在小写化之前记录。"""
    return [Token(surface=s, was_capitalized=is_capitalized(s)) for s in _TOKEN_RE.findall(text)]


# ---------------------------------------------------------------------------
# 文件读取
# ---------------------------------------------------------------------------

def detect_encoding(file_path: str) -> str:
    """
    检测文本文件编码。

    Args:
        file_path: 文件路径

    Returns:
        编码名称 (检测失败时为 utf-8)
    """
    with open(file_path, "rb") as f:
        raw = f.read()
    if not raw:
        return "utf-8"
    try:
        raw.decode("utf-8")
        return "utf-8"
    except UnicodeDecodeError:
        pass
    if chardet:
        result = chardet.detect(raw)
        encoding = result.get("encoding") or "utf-8"
        logger.info(f"[编码检测] {file_path}: {encoding} (置信度: {result.get('confidence', 0):.1%})")
        return encoding
    return "utf-8"


def read_text_lines(path: str, encoding: Optional[str] = None) -> List[str]:
    """按检测到的编码读取文本文件的全部行。"""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"语料文件不存在: {path}")
    encoding = encoding or detect_encoding(path)
    with open(path, "r", encoding=encoding, errors="strict") as f:
        return f.read().splitlines()


def _parse_token(raw, path: str, line_no: int) -> Token:
    if isinstance(raw, str):
        return Token(surface=raw, was_capitalized=is_capitalized(raw))
    if isinstance(raw, (list, tuple)) and len(raw) == 2 and isinstance(raw[0], str):
        return Token(surface=raw[0], was_capitalized=bool(raw[1]))
    raise CorpusFormatError(f"token 格式错误: {raw!r}", {"path": path, "line": line_no})


def _apply_spans(sentences: List[Sentence], spans, kind: SpanKind, path: str, line_no: int):
    for index, span in enumerate(spans or []):
        if not isinstance(span, (list, tuple)) or len(span) != 3:
            raise CorpusFormatError(f"{kind.value} 片段格式错误: {span!r}", {"path": path, "line": line_no})
        try:
            s_idx, start, end = (int(v) for v in span)
        except (TypeError, ValueError):
            raise CorpusFormatError(
                f"{kind.value} 片段下标必须为整数: {span!r}", {"path": path, "line": line_no}
            ) from None
        if not (0 <= s_idx < len(sentences)) or not (0 <= start < end <= len(sentences[s_idx])):
            raise CorpusFormatError(
                f"{kind.value} 片段越界: {span!r}", {"path": path, "line": line_no}
            )
        for tok in sentences[s_idx].tokens[start:end]:
            if tok.span_tag.kind != SpanKind.NONE:
                raise CorpusFormatError(
                    f"片段重叠: {span!r}", {"path": path, "line": line_no}
                )
            tok.span_tag = SpanTag(kind, index)


def _parse_document_line(line: str, path: str, line_no: int) -> Document:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"JSON 解析失败: {e.msg}", {"path": path, "line": line_no}) from None
    if not isinstance(record, dict):
        raise CorpusFormatError("每行必须是一个 JSON 对象", {"path": path, "line": line_no})
    for key in ("id", "corpus_tag", "sentences"):
        if key not in record:
            raise CorpusFormatError(f"缺少字段: {key}", {"path": path, "line": line_no})
    try:
        tag = parse_corpus_tag(record["corpus_tag"])
    except CorpusFormatError as e:
        raise e.with_context(path=path, line=line_no)

    sentences = []
    for raw_sentence in record["sentences"]:
        if not isinstance(raw_sentence, list) or not raw_sentence:
            raise CorpusFormatError("句子必须是非空 token 列表", {"path": path, "line": line_no})
        sentences.append(Sentence([_parse_token(t, path, line_no) for t in raw_sentence]))
    if not sentences:
        raise CorpusFormatError("文档至少需要 1 个句子", {"path": path, "line": line_no})

    # 实体优先登记，与短语重叠时报错
    _apply_spans(sentences, record.get("entity_spans"), SpanKind.ENTITY, path, line_no)
    _apply_spans(sentences, record.get("phrase_spans"), SpanKind.PHRASE, path, line_no)
    return Document(id=str(record["id"]), sentences=sentences, source_corpus=tag)


def _parse_text_corpus(lines: List[str], path: str, tag: CorpusTag) -> List[Document]:
    """纯文本格式：空行分隔文档，每行一个句子。"""
    documents, current = [], []
    for line in lines + [""]:
        if line.strip():
            tokens = tokenize(line.strip())
            if tokens:
                current.append(Sentence(tokens))
        elif current:
            doc_id = f"{os.path.splitext(os.path.basename(path))[0]}-{len(documents)}"
            documents.append(Document(id=doc_id, sentences=current, source_corpus=tag))
            current = []
    return documents


CORPUS_FORMATS = ("jsonl", "text")


def load_corpus(path: str, format: str = "jsonl", corpus_tag=None) -> List[Document]:
    """
    读取文档语料。

    Args:
        path: 文件路径
        format: "jsonl" (带标注) 或 "text" (空行分隔文档、每行一句)
        corpus_tag: text 格式下文档的来源标签

    Returns:
        Document 列表 (空文件返回空列表)

    Raises:
        CorpusFormatError: 行格式错误 (带行号)、未知标签、重复 id
    """
    if format not in CORPUS_FORMATS:
        raise CorpusFormatError(f"未知语料格式: {format}", {"path": path})
    lines = read_text_lines(path)

    if format == "text":
        tag = parse_corpus_tag(corpus_tag or CorpusTag.ENCYCLOPEDIA)
        documents = _parse_text_corpus(lines, path, tag)
    else:
        documents = []
        seen_ids = set()
        for line_no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            doc = _parse_document_line(line, path, line_no)
            if doc.id in seen_ids:
                raise CorpusFormatError(f"文档 id 重复: {doc.id}", {"path": path, "line": line_no})
            seen_ids.add(doc.id)
            documents.append(doc)

    logger.info(f"[语料] {path}: {len(documents)} 篇文档")
    return documents


def _split_tsv(line: str, expected: int, path: str, line_no: int) -> List[str]:
    parts = line.split("\t")
    if len(parts) != expected:
        raise CorpusFormatError(
            f"应有 {expected} 列，实际 {len(parts)} 列", {"path": path, "line": line_no}
        )
    return [p.strip() for p in parts]


def load_ir_pairs(path: str) -> List[IRPair]:
    """读取 query \\t title \\t label 文件，label 必须为 0/1/2。"""
    pairs = []
    for line_no, line in enumerate(read_text_lines(path), start=1):
        if not line.strip():
            continue
        query, title, label = _split_tsv(line, 3, path, line_no)
        if label not in ("0", "1", "2"):
            raise LabelError(f"IR 标签必须为 0/1/2: {label!r}", {"path": path, "line": line_no})
        pairs.append(IRPair(query, title, int(label)))
    logger.info(f"[语料] {path}: {len(pairs)} 条 IR 样本")
    return pairs


def load_discourse_pairs(path: str) -> List[DiscoursePair]:
    """读取 sentence1 \\t sentence2 \\t relation 文件。"""
    pairs = []
    for line_no, line in enumerate(read_text_lines(path), start=1):
        if not line.strip():
            continue
        s1, s2, relation = _split_tsv(line, 3, path, line_no)
        if not relation:
            raise CorpusFormatError("关系标签为空", {"path": path, "line": line_no})
        pairs.append(DiscoursePair(s1, s2, relation))
    logger.info(f"[语料] {path}: {len(pairs)} 条篇章关系样本")
    return pairs


def write_corpus(path: str, documents: Sequence[Document]):
    """把文档写回 jsonl (键排序，保证相同输入字节一致)。"""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc in documents:
            f.write(json.dumps(document_to_record(doc), ensure_ascii=False, sort_keys=True) + "\n")


def document_to_record(doc: Document) -> Dict:
    entities: Dict[int, List[int]] = {}
    phrases: Dict[int, List[int]] = {}
    for s_idx, sentence in enumerate(doc.sentences):
        for t_idx, tok in enumerate(sentence.tokens):
            kind = tok.span_tag.kind
            if kind == SpanKind.NONE:
                continue
            target = entities if kind == SpanKind.ENTITY else phrases
            if tok.span_tag.index not in target:
                target[tok.span_tag.index] = [s_idx, t_idx, t_idx + 1]
            else:
                target[tok.span_tag.index][2] = t_idx + 1
    return {
        "id": doc.id,
        "corpus_tag": doc.source_corpus.value,
        "sentences": [[[t.surface, t.was_capitalized] for t in s.tokens] for s in doc.sentences],
        "entity_spans": [entities[k] for k in sorted(entities)],
        "phrase_spans": [phrases[k] for k in sorted(phrases)],
    }


# ---------------------------------------------------------------------------
# 词表
# ---------------------------------------------------------------------------

class Vocabulary:
    """
    词表：id 0..4 为保留符号，其余按词频降序、同频按字典序排列。
    """

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:NUM_SPECIAL]) != SPECIAL_TOKENS:
            raise VocabularyError(f"词表前 {NUM_SPECIAL} 项必须是 {SPECIAL_TOKENS}")
        if len(set(tokens)) != len(tokens):
            raise VocabularyError("词表中存在重复项")
        self._tokens = tokens
        self._index = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, surface: str):
        return surface.lower() in self._index

    def id_of(self, surface: str) -> int:
        return self._index.get(surface.lower(), UNK_ID)

    def token_of(self, vocab_id: int) -> str:
        if not 0 <= vocab_id < len(self._tokens):
            raise VocabularyError(f"词表 id 越界: {vocab_id}", {"size": len(self._tokens)})
        return self._tokens[vocab_id]

    def to_list(self) -> List[str]:
        return list(self._tokens)

    def encode_tokens(self, tokens: Iterable[Token]) -> List[Token]:
        return [replace(t, vocab_id=self.id_of(t.surface)) for t in tokens]


def build_vocab(
    corpora: Iterable[Sequence[Document]],
    min_count: int = 1,
    extra_texts: Iterable[str] = (),
) -> Vocabulary:
    """
    统计语料 (小写形式) 构建词表。

    Args:
        corpora: 若干文档序列
        min_count: 低于该频次的词不入表 (映射为 [UNK])
        extra_texts: 额外的原始文本 (IR / 篇章关系对)

    Returns:
        Vocabulary
    """
    counts: Counter = Counter()
    for documents in corpora:
        for doc in documents:
            for tok in doc.tokens():
                counts[tok.key] += 1
    for text in extra_texts:
        for tok in tokenize(text):
            counts[tok.key] += 1
    for special in SPECIAL_TOKENS:
        counts.pop(special.lower(), None)

    ordered = sorted(
        (word for word, c in counts.items() if c >= min_count),
        key=lambda w: (-counts[w], w),
    )
    vocab = Vocabulary(list(SPECIAL_TOKENS) + ordered)
    logger.info(f"[词表] 共 {len(vocab)} 项 (min_count={min_count})")
    return vocab


def index_documents(documents: Sequence[Document], vocab: Vocabulary) -> List[Document]:
    """返回填好 vocab_id 的文档副本。"""
    return [
        replace(doc, sentences=[Sentence(vocab.encode_tokens(s.tokens)) for s in doc.sentences])
        for doc in documents
    ]


class RelationVocabulary:
    """篇章关系词表，按字典序编号。"""

    def __init__(self, relations: Iterable[str]):
        self._relations = sorted(set(relations))
        if not self._relations:
            raise VocabularyError("篇章关系词表为空")
        self._index = {r: i for i, r in enumerate(self._relations)}

    def __len__(self):
        return len(self._relations)

    def id_of(self, relation: str) -> int:
        if relation not in self._index:
            raise LabelError(f"未知篇章关系: {relation}", {"known": self._relations})
        return self._index[relation]

    def relation_of(self, relation_id: int) -> str:
        if not 0 <= relation_id < len(self._relations):
            raise LabelError(f"篇章关系 id 越界: {relation_id}")
        return self._relations[relation_id]

    def to_list(self) -> List[str]:
        return list(self._relations)


def build_relation_vocab(pairs: Iterable[DiscoursePair]) -> RelationVocabulary:
    return RelationVocabulary(p.relation for p in pairs)


def summarize_corpus(documents: Sequence[Document]) -> Dict[str, int]:
    """统计文档数、句子数、token 数及片段数 (用于控制台输出)。"""
    entities, phrases = set(), set()
    for doc in documents:
        for tok in doc.tokens():
            if tok.span_tag.kind == SpanKind.ENTITY:
                entities.add((doc.id, tok.span_tag.index))
            elif tok.span_tag.kind == SpanKind.PHRASE:
                phrases.add((doc.id, tok.span_tag.index))
    summary = {
        "documents": len(documents),
        "sentences": sum(len(d.sentences) for d in documents),
        "tokens": sum(d.token_count for d in documents),
        "entity_spans": len(entities),
        "phrase_spans": len(phrases),
    }
    print(
        f"{Fore.CYAN}[语料统计]{Style.RESET_ALL} 文档 {summary['documents']} | 句子 {summary['sentences']}"
        f" | token {summary['tokens']} | 实体 {summary['entity_spans']} | 短语 {summary['phrase_spans']}"
    )
    return summary
