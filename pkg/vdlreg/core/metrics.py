# -*- coding: utf-8 -*-
"""
采样诊断指标

统计各类提议的接受次数、切片/椭圆切片采样器的函数调用次数以及各阶段耗时。
每条链持有独立实例，随抽样结果以快照形式跨进程返回；全局实例 metrics 用于 CLI 命令计时。
"""

import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Dict, Iterator


@dataclass
class Timer:
    """time_operation 产出的计时结果（秒）"""
    elapsed: float = 0.0


class MetricsCollector:
    """链内诊断计数器

    提议/接受计数以 ``<move>_proposed`` / ``<move>_accepted`` 成对存放；
    阶段耗时只累计次数与总秒数。
    """

    def __init__(self):
        self._counters: Dict[str, int] = {}
        self._stage_seconds: Dict[str, float] = {}
        self._stage_calls: Dict[str, int] = {}
        self._lock = threading.Lock()

    def increment(self, name: str, value: int = 1):
        with self._lock:
            self._counters[name] = self._counters.get(name, 0) + value

    def record_proposal(self, move: str, accepted: bool):
        """记录一次提议及其结果"""
        self.increment(f"{move}_proposed")
        if accepted:
            self.increment(f"{move}_accepted")

    @contextmanager
    def time_operation(self, name: str) -> Iterator[Timer]:
        """计时上下文；退出时累加到阶段 name"""
        timer = Timer()
        start = time.perf_counter()
        try:
            yield timer
        finally:
            timer.elapsed = time.perf_counter() - start
            with self._lock:
                self._stage_seconds[name] = self._stage_seconds.get(name, 0.0) + timer.elapsed
                self._stage_calls[name] = self._stage_calls.get(name, 0) + 1

    def get_counter(self, name: str) -> int:
        with self._lock:
            return self._counters.get(name, 0)

    def acceptance_rates(self) -> Dict[str, float]:
        """各提议类型的接受率，均位于 [0, 1]"""
        with self._lock:
            counters = dict(self._counters)
        rates = {}
        for key, proposed in counters.items():
            if key.endswith('_proposed') and proposed:
                move = key[:-len('_proposed')]
                rates[move] = counters.get(f"{move}_accepted", 0) / proposed
        return dict(sorted(rates.items()))

    def stage_summary(self, name: str) -> Dict[str, float]:
        """阶段 name 的调用次数、总耗时与平均耗时；从未计时返回空字典"""
        with self._lock:
            calls = self._stage_calls.get(name, 0)
            total = self._stage_seconds.get(name, 0.0)
        if not calls:
            return {}
        return {'calls': calls, 'total': total, 'mean': total / calls}

    def snapshot(self) -> Dict[str, Any]:
        """可序列化快照"""
        with self._lock:
            counters = dict(sorted(self._counters.items()))
            stages = dict(sorted(self._stage_seconds.items()))
        return {'counters': counters, 'acceptance': self.acceptance_rates(), 'stages': stages}

    def reset(self):
        with self._lock:
            self._counters.clear()
            self._stage_seconds.clear()
            self._stage_calls.clear()


# 全局指标收集器实例
metrics = MetricsCollector()
