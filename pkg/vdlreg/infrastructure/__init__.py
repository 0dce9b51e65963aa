# -*- coding: utf-8 -*-
"""
vdlreg 基础设施层模块

包含日志配置、进程池以及产出文件读写等技术实现细节。
"""

from .logging_config import setup_logging, logger, metrics_logger
from .worker_pool import WorkerPool
from .artifacts import (atomic_output, write_csv, write_json, read_json,
                        write_fit_dir, read_fit_dir)

__all__ = [
    'setup_logging', 'logger', 'metrics_logger',
    'WorkerPool',
    'atomic_output', 'write_csv', 'write_json', 'read_json', 'write_fit_dir', 'read_fit_dir',
]
