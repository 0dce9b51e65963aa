# -*- coding: utf-8 -*-
"""
进程池模块

以 ProcessPoolExecutor 执行相互独立的任务（链、重复实验单元），
结果按提交顺序返回，输出与调度顺序无关。max_workers == 1 时在当前进程内执行。
"""

import threading
from concurrent.futures import Future, ProcessPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional

from vdlreg.core.metrics import metrics
from vdlreg.infrastructure.logging_config import logger, metrics_logger


class WorkerPool:
    """有界进程池管理器

    用法：
        with WorkerPool(max_workers=4) as pool:
            results = pool.map_ordered(run_chain_task, tasks)
    """
    def __init__(self, max_workers: int = 1):
        if max_workers < 1:
            raise ValueError("max_workers 必须 >= 1")
        self.max_workers = max_workers
        self._executor: Optional[ProcessPoolExecutor] = None
        self._failed_count = 0
        self._submitted_count = 0
        self._lock = threading.Lock()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()

    @property
    def inline(self) -> bool:
        return self.max_workers == 1

    def _ensure_executor(self) -> ProcessPoolExecutor:
        if self._executor is None:
            self._executor = ProcessPoolExecutor(max_workers=self.max_workers)
        return self._executor

    def submit(self, fn: Callable, *args, callback: Optional[Callable] = None, **kwargs) -> Future:
        """提交单个任务

        callback 接收 (result, exception)。内联模式下立即执行并返回已完成的 Future。
        """
        with self._lock:
            self._submitted_count += 1
        metrics.increment("pool_task_submitted")
        if self.inline:
            future: Future = Future()
            try:
                future.set_result(fn(*args, **kwargs))
            except Exception as e:
                self._record_failure(e)
                future.set_exception(e)
        else:
            future = self._ensure_executor().submit(fn, *args, **kwargs)
            future.add_done_callback(self._check_failure)
        if callback is not None:
            future.add_done_callback(lambda f: callback(
                None if f.exception() else f.result(), f.exception()))
        return future

    def _check_failure(self, future: Future):
        exc = future.exception()
        if exc is not None:
            self._record_failure(exc)

    def _record_failure(self, exc: BaseException):
        with self._lock:
            self._failed_count += 1
        metrics.increment("pool_task_failed")
        logger.error("任务执行失败: %s", exc)

    def map_ordered(self, fn: Callable, items: Iterable[Any]) -> List[Any]:
        """对每个元素执行 fn，按输入顺序返回结果；任何任务失败则抛出首个异常"""
        futures = [self.submit(fn, item) for item in items]
        return [f.result() for f in futures]

    def shutdown(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
        if self._submitted_count:
            metrics_logger.info("进程池统计: %s", self.get_stats())

    def get_stats(self) -> Dict[str, int]:
        """获取进程池统计信息"""
        return {
            'max_workers': self.max_workers,
            'submitted_tasks': self._submitted_count,
            'failed_tasks': self._failed_count,
        }
