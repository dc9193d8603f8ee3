# -*- coding: utf-8 -*-
"""
版本号：有 git tag 时取最近的 tag，否则使用 _FALLBACK。
预训练输出的 run_timing.json 中会记录该版本号。
"""
import subprocess

_FALLBACK = "0.1.0-dev"


def read_git_tag(cwd=None) -> str:
    """最近的 tag (去掉前缀 v)；不在 git 仓库或没装 git 时返回空串。"""
    try:
        tag = subprocess.run(
            ["git", "describe", "--tags", "--abbrev=0"],
            cwd=cwd,
            capture_output=True,
            text=True,
            check=True,
        ).stdout.strip()
    except (OSError, subprocess.CalledProcessError):
        return ""
    return tag[1:] if tag.startswith("v") else tag


__version__: str = read_git_tag() or _FALLBACK
