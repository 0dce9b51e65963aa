# -*- coding: utf-8 -*-
"""
日志配置模块

配置日志系统，包括控制台输出、错误日志文件轮转以及独立的 metrics 日志。
"""

import os
import logging
import logging.handlers
import tempfile
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

_HANDLER_TAG = '_vdlreg_handler'


def _resolve_log_dir(log_dir: Optional[str]) -> str:
    candidates = [log_dir] if log_dir else []
    candidates += [os.path.expanduser('~/.cache/vdlreg/logs'),
                   os.path.join(tempfile.gettempdir(), 'vdlreg_logs')]
    for candidate in candidates:
        try:
            os.makedirs(candidate, exist_ok=True)
            return candidate
        except OSError:
            continue
    raise OSError("无法创建日志目录")


def _rotating(path: str, max_bytes: int, backups: int, level: int) -> logging.Handler:
    handler = logging.handlers.RotatingFileHandler(
        path, maxBytes=max_bytes, backupCount=backups, encoding='utf-8')
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, DATE_FORMAT))
    setattr(handler, _HANDLER_TAG, True)
    return handler


def _drop_own_handlers(target: logging.Logger):
    for handler in list(target.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            target.removeHandler(handler)
            handler.close()


def setup_logging(log_dir: Optional[str] = None, level: int = logging.INFO) -> logging.Logger:
    """设置日志：控制台 + error.log（5MB x 3）+ metrics.log（2MB x 2）

    可重复调用；再次调用时替换此前挂载的文件处理器。
    """
    logging.basicConfig(level=level, format=LOG_FORMAT, datefmt=DATE_FORMAT)

    vdlreg_logger = logging.getLogger('vdlreg')
    vdlreg_logger.setLevel(level)
    metrics_logger = logging.getLogger('vdlreg.metrics')
    _drop_own_handlers(vdlreg_logger)
    _drop_own_handlers(metrics_logger)

    directory = _resolve_log_dir(log_dir)
    vdlreg_logger.addHandler(
        _rotating(os.path.join(directory, 'error.log'), 5 * 1024 * 1024, 3, logging.ERROR))
    metrics_logger.addHandler(
        _rotating(os.path.join(directory, 'metrics.log'), 2 * 1024 * 1024, 2, logging.INFO))
    metrics_logger.setLevel(logging.INFO)
    return vdlreg_logger


logger = logging.getLogger('vdlreg')
metrics_logger = logging.getLogger('vdlreg.metrics')
