# -*- coding: utf-8 -*-
"""
日志工具模块
每次运行把日志写进输出目录 (滚动文件) 并同时打到控制台。
策略对比的子进程各写各的文件：RotatingFileHandler 不能跨进程共享。
"""
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import Optional

from .utils import get_base_dir

LOG_FILENAME = "xiaoxue_pretrain.log"
LOG_MAX_BYTES = 2 * 1024 * 1024
LOG_BACKUPS = 1

# 策略对比的子进程通过该环境变量标记自己
WORKER_ENV = "XIAOXUE_PRETRAIN_WORKER"

# requests 的连接日志对实验没有意义
_NOISY_LOGGERS = ("urllib3", "chardet", "charset_normalizer")


def get_log_dir() -> str:
    """默认日志目录：项目根目录 (打包后为 exe 同级目录)"""
    return get_base_dir()


def is_worker() -> bool:
    return bool(os.environ.get(WORKER_ENV))


def log_file_path(log_dir: str) -> str:
    """主进程写 xiaoxue_pretrain.log，子进程写 xiaoxue_pretrain.worker-<pid>.log。"""
    if not is_worker():
        return os.path.join(log_dir, LOG_FILENAME)
    stem, ext = os.path.splitext(LOG_FILENAME)
    return os.path.join(log_dir, f"{stem}.worker-{os.getpid()}{ext}")


def fix_sys_io(logger: logging.Logger):
    """
    强制 stdout/stderr 使用 UTF-8。
    Windows 默认 GBK 控制台打印中文状态行时可能崩溃。
    """
    for stream_name in ("stdout", "stderr"):
        stream = getattr(sys, stream_name)
        reconfigure = getattr(stream, "reconfigure", None)
        if reconfigure is None:
            continue
        try:
            reconfigure(encoding="utf-8")
        except (ValueError, OSError) as e:
            logger.debug(f"sys.{stream_name} 无法切换到 utf-8: {e}")


def setup_logging(log_dir: Optional[str] = None, level: str = "INFO") -> logging.Logger:
    """
    (重新) 初始化根日志器，可重复调用：CLI 启动时先写项目根目录，读到配置后切到运行输出目录。

    Args:
        log_dir: 日志目录 (一般为本次运行的输出目录)，None 时使用项目根目录
        level: 日志级别
    """
    log_dir = log_dir or get_log_dir()
    os.makedirs(log_dir, exist_ok=True)
    log_path = log_file_path(log_dir)

    root = logging.getLogger()
    root.setLevel(getattr(logging, level.upper(), logging.INFO))
    for handler in list(root.handlers):
        handler.close()
        root.removeHandler(handler)

    mark = "[WORKER]" if is_worker() else "[MAIN]"
    formatter = logging.Formatter(f"%(asctime)s %(levelname)s {mark} %(message)s", "%Y-%m-%d %H:%M:%S")
    handlers = [
        RotatingFileHandler(log_path, mode="a", maxBytes=LOG_MAX_BYTES, backupCount=LOG_BACKUPS, encoding="utf-8"),
        logging.StreamHandler(sys.stdout),
    ]
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    for name in _NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    fix_sys_io(root)
    root.info(f"XiaoXue Pretrain Lab 日志: {log_path} (Python {sys.version.split()[0]})")
    return root
