# -*- coding: utf-8 -*-
"""
工具函数模块：路径处理、JSON 读写、耗时格式化等。
"""
import json
import os
import sys
from typing import Any, Optional


def get_base_dir() -> str:
    """
    获取应用程序根目录。
    - 如果是打包后的 exe，返回 exe 所在目录。
    - 如果是脚本运行，返回项目根目录。
    """
    if getattr(sys, 'frozen', False):
        return os.path.dirname(sys.executable)
    else:
        return os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def ensure_dir(path: str) -> str:
    """创建目录 (已存在则忽略)，返回绝对路径。"""
    path = os.path.abspath(path)
    os.makedirs(path, exist_ok=True)
    return path


def resolve_path(path: Optional[str], base_dir: str) -> Optional[str]:
    """相对路径按 base_dir 解析；None 原样返回。"""
    if not path:
        return path
    if os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


def write_json(path: str, obj: Any):
    """
    写出 JSON 文件。
    键排序 + 固定换行，保证同样的内容写出的字节完全一致。
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def format_duration(seconds: float) -> str:
    """
    把秒数格式化为易读字符串。
    例如: 75.2 -> "1分15秒"，3.4 -> "3.4秒"
    """
    if seconds < 60:
        return f"{seconds:.1f}秒"
    minutes, secs = divmod(int(round(seconds)), 60)
    if minutes < 60:
        return f"{minutes}分{secs}秒"
    hours, minutes = divmod(minutes, 60)
    return f"{hours}小时{minutes}分{secs}秒"
