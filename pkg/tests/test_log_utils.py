# -*- coding: utf-8 -*-
"""
日志初始化测试
"""
import logging
import os
from unittest.mock import patch

from src.log_utils import LOG_FILENAME, WORKER_ENV, log_file_path, setup_logging


class TestLogFilePath:
    """主进程与子进程的日志文件名"""

    def test_main_process(self, tmp_path):
        with patch.dict(os.environ, {}, clear=False):
            os.environ.pop(WORKER_ENV, None)
            assert log_file_path(str(tmp_path)) == os.path.join(str(tmp_path), LOG_FILENAME)

    def test_worker_process_has_own_file(self, tmp_path):
        with patch.dict(os.environ, {WORKER_ENV: "1"}):
            path = log_file_path(str(tmp_path))
        assert os.path.basename(path) == f"xiaoxue_pretrain.worker-{os.getpid()}.log"


class TestSetupLogging:

    def test_writes_into_log_dir(self, tmp_path):
        with patch.dict(os.environ, {}, clear=False):
            os.environ.pop(WORKER_ENV, None)
            logger = setup_logging(str(tmp_path), "DEBUG")
            logger.info("hello")
            for handler in logger.handlers:
                handler.flush()
        assert logger.level == logging.DEBUG
        assert "hello" in (tmp_path / LOG_FILENAME).read_text(encoding="utf-8")

    def test_repeated_calls_replace_handlers(self, tmp_path):
        """重复调用不会叠加 handler"""
        setup_logging(str(tmp_path / "a"))
        logger = setup_logging(str(tmp_path / "b"))
        assert len(logger.handlers) == 2
        assert logging.getLogger("urllib3").level == logging.WARNING
