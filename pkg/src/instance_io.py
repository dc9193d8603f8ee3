# -*- coding: utf-8 -*-
"""
样本文件读写：二进制 (默认) 与 JSON 行文本 (调试用) 两种模式。

二进制格式 (全部小端):
    文件头: b"XXTI" + u8 版本号 (1)
    每条记录: u32 payload 长度 + payload
    payload:
        u16 task_id, u16 seq_len (n), u16 attention_length, i32 sentence_label (-1 表示无)
        n × u32 token_ids, n × u8 segment_ids, n × u16 position_ids, n × u8 loss_mask
        u8 token 头个数 k，随后每个头:
            u16 头的 task_id, u8 是否带独立 mask, n × i32 labels, [n × u8 mask]

文本格式: 首行 {"format": "xiaoxue-instances", "version": 1}，之后每行一条样本的 JSON。
"""
import json
import logging
import struct
from typing import Iterable, List

import numpy as np

from .errors import CorpusFormatError
from .tasks import TaskInstance

logger = logging.getLogger(__name__)

INSTANCE_MAGIC = b"XXTI"
INSTANCE_VERSION = 1
TEXT_FORMAT_NAME = "xiaoxue-instances"

_HEADER = struct.Struct("<HHHi")
_LENGTH = struct.Struct("<I")


def _encode_record(inst: TaskInstance) -> bytes:
    n = inst.seq_len
    parts = [
        _HEADER.pack(inst.task_id, n, inst.attention_length, -1 if inst.sentence_label is None else inst.sentence_label),
        np.asarray(inst.token_ids, dtype="<u4").tobytes(),
        np.asarray(inst.segment_ids, dtype="u1").tobytes(),
        np.asarray(inst.position_ids, dtype="<u2").tobytes(),
        np.asarray(inst.loss_mask, dtype="u1").tobytes(),
    ]
    heads = sorted((inst.token_labels or {}).items())
    parts.append(struct.pack("<B", len(heads)))
    for head_id, labels in heads:
        own_mask = head_id in inst.head_masks
        parts.append(struct.pack("<HB", head_id, int(own_mask)))
        parts.append(np.asarray(labels, dtype="<i4").tobytes())
        if own_mask:
            parts.append(np.asarray(inst.head_masks[head_id], dtype="u1").tobytes())
    return b"".join(parts)


def _decode_record(payload: bytes, path: str, index: int) -> TaskInstance:
    try:
        task_id, n, attention_length, sentence_label = _HEADER.unpack_from(payload, 0)
        offset = _HEADER.size

        def take(dtype, count):
            nonlocal offset
            arr = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
            offset += arr.nbytes
            return arr

        token_ids = take("<u4", n).tolist()
        segment_ids = take("u1", n).tolist()
        position_ids = take("<u2", n).tolist()
        loss_mask = take("u1", n).astype(bool).tolist()
        (head_count,) = struct.unpack_from("<B", payload, offset)
        offset += 1
        token_labels, head_masks = {}, {}
        for _ in range(head_count):
            head_id, own_mask = struct.unpack_from("<HB", payload, offset)
            offset += 3
            token_labels[head_id] = take("<i4", n).tolist()
            if own_mask:
                head_masks[head_id] = take("u1", n).astype(bool).tolist()
    except (struct.error, ValueError) as e:
        raise CorpusFormatError(f"样本记录损坏: {e}", {"path": path, "record": index}) from None
    if offset != len(payload):
        raise CorpusFormatError("样本记录长度不符", {"path": path, "record": index})
    return TaskInstance(
        task_id=task_id,
        token_ids=token_ids,
        segment_ids=segment_ids,
        position_ids=position_ids,
        attention_length=attention_length,
        loss_mask=loss_mask,
        token_labels=token_labels or None,
        sentence_label=None if sentence_label < 0 else sentence_label,
        head_masks=head_masks,
    )


def instance_to_dict(inst: TaskInstance) -> dict:
    return {
        "task_id": inst.task_id,
        "token_ids": list(inst.token_ids),
        "segment_ids": list(inst.segment_ids),
        "position_ids": list(inst.position_ids),
        "attention_length": inst.attention_length,
        "loss_mask": [bool(v) for v in inst.loss_mask],
        "token_labels": {str(k): list(v) for k, v in sorted((inst.token_labels or {}).items())},
        "sentence_label": inst.sentence_label,
        "head_masks": {str(k): [bool(b) for b in v] for k, v in sorted(inst.head_masks.items())},
    }


def instance_from_dict(record: dict) -> TaskInstance:
    return TaskInstance(
        task_id=int(record["task_id"]),
        token_ids=list(record["token_ids"]),
        segment_ids=list(record["segment_ids"]),
        position_ids=list(record["position_ids"]),
        attention_length=int(record["attention_length"]),
        loss_mask=list(record["loss_mask"]),
        token_labels={int(k): list(v) for k, v in record.get("token_labels", {}).items()} or None,
        sentence_label=record.get("sentence_label"),
        head_masks={int(k): list(v) for k, v in record.get("head_masks", {}).items()},
    )


def write_instances(path: str, instances: Iterable[TaskInstance], mode: str = "binary") -> int:
    """
    写出样本文件。

    Args:
        path: 输出路径
        instances: 样本序列
        mode: "binary" 或 "text"

    Returns:
        写出的样本数
    """
    count = 0
    if mode == "binary":
        with open(path, "wb") as f:
            f.write(INSTANCE_MAGIC + struct.pack("<B", INSTANCE_VERSION))
            for inst in instances:
                payload = _encode_record(inst)
                f.write(_LENGTH.pack(len(payload)))
                f.write(payload)
                count += 1
    elif mode == "text":
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps({"format": TEXT_FORMAT_NAME, "version": INSTANCE_VERSION}) + "\n")
            for inst in instances:
                f.write(json.dumps(instance_to_dict(inst), sort_keys=True) + "\n")
                count += 1
    else:
        raise ValueError(f"未知样本文件模式: {mode}")
    logger.info(f"[样本] 已写出 {count} 条样本到 {path} ({mode})")
    return count


def read_instances(path: str) -> List[TaskInstance]:
    """按文件头自动识别二进制/文本格式并读取。"""
    with open(path, "rb") as f:
        data = f.read()
    if data.startswith(INSTANCE_MAGIC):
        if len(data) < 5 or data[4] != INSTANCE_VERSION:
            raise CorpusFormatError(f"不支持的样本文件版本", {"path": path})
        offset, index, result = 5, 0, []
        while offset < len(data):
            if offset + _LENGTH.size > len(data):
                raise CorpusFormatError("样本文件被截断", {"path": path, "record": index})
            (length,) = _LENGTH.unpack_from(data, offset)
            offset += _LENGTH.size
            payload = data[offset: offset + length]
            if len(payload) != length:
                raise CorpusFormatError("样本文件被截断", {"path": path, "record": index})
            result.append(_decode_record(payload, path, index))
            offset += length
            index += 1
        return result

    lines = data.decode("utf-8").splitlines()
    if not lines:
        raise CorpusFormatError("样本文件为空或缺少文件头", {"path": path})
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        header = None
    if not isinstance(header, dict) or header.get("format") != TEXT_FORMAT_NAME:
        raise CorpusFormatError("无法识别的样本文件格式 (magic/文件头不符)", {"path": path})
    if header.get("version") != INSTANCE_VERSION:
        raise CorpusFormatError("不支持的样本文件版本", {"path": path, "version": header.get("version")})
    result = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            result.append(instance_from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise CorpusFormatError(f"样本行解析失败: {e}", {"path": path, "line": line_no}) from None
    return result
