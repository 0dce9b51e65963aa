# -*- coding: utf-8 -*-
"""
分区状态模块

维护聚类标签、成员列表以及每个 (簇, 协变量) 单元的观测充分统计量
(计数, 和, 平方和)，并按需惰性计算簇内 plug-in 标准化统计量。

内部标签从 0 开始；对外导出（CSV）时加 1。
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from vdlreg.core.data import Dataset
from vdlreg.core.errors import StateError

logger = logging.getLogger('vdlreg.partition')


@dataclass(frozen=True)
class PluginPriors:
    """plug-in 估计的先验猜测与权重"""
    mu0_x: float = 0.0
    s0sq_x: float = 1.0
    nu: float = 1.0
    nu_s: float = 1.0

    def __post_init__(self):
        if not (self.nu > 0 and self.nu_s > 0 and self.s0sq_x > 0):
            raise ValueError("plug-in 先验要求 nu, nu_s, s0sq_x > 0")


def plugin_stats(n, s1, s2, priors: PluginPriors):
    """簇内 plug-in 均值与方差（后验均值 / 调和均值形式）

    n, s1, s2 为观测计数、和、平方和，可为标量或数组；n=0 时返回 (mu0_x, s0sq_x)。
    """
    n = np.asarray(n, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    nu, nu_s = priors.nu, priors.nu_s
    safe_n = np.where(n > 0, n, 1.0)
    xbar = np.where(n > 0, s1 / safe_n, 0.0)
    ss = np.maximum(s2 - n * xbar * xbar, 0.0)
    mu_hat = (nu * priors.mu0_x + s1) / (nu + n)
    dev = xbar - priors.mu0_x
    s2_hat = (nu_s * priors.s0sq_x + ss + (nu * n / (nu + n)) * dev * dev) / (nu_s + n)
    if mu_hat.ndim == 0:
        return float(mu_hat), float(s2_hat)
    return mu_hat, s2_hat


def standardized_covariate(x, mu_hat, s2_hat):
    """z = (x - mu_hat) / sqrt(s2_hat)"""
    return (x - mu_hat) / np.sqrt(s2_hat)


@dataclass(frozen=True)
class MoveResult:
    """apply_move 的结果

    vacated: 被清空的槽位；relocated_from: 被搬入 vacated 的原最后一个簇。
    调用方据此同步簇参数数组。
    """
    old: int
    new: int
    created: bool = False
    vacated: Optional[int] = None
    relocated_from: Optional[int] = None

    @property
    def changed(self) -> bool:
        return self.old != self.new or self.created


class PartitionState:
    """单条链的可变分区状态（单写者）"""

    def __init__(self, dataset: Dataset, labels, priors: PluginPriors):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (dataset.m,):
            raise StateError(f"标签长度 {labels.shape} 与 m={dataset.m} 不一致")
        self.dataset = dataset
        self.priors = priors
        m, p = dataset.m, dataset.p
        self._cap = m + 1
        self.labels = np.empty(m, dtype=np.int64)
        self.members: List[List[int]] = []
        self.cnt = np.zeros((self._cap, p))
        self.s1 = np.zeros((self._cap, p))
        self.s2 = np.zeros((self._cap, p))
        self._mu_hat = np.zeros((self._cap, p))
        self._s2_hat = np.ones((self._cap, p))
        self._dirty = np.ones((self._cap, p), dtype=bool)
        self.k = 0
        self._assign(labels)

    # ------------------------------------------------------------ construction

    def _assign(self, labels: np.ndarray):
        """按出现顺序把任意标签压缩为 0..k-1"""
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        self.labels[:] = order[inverse]
        self.k = int(self.labels.max()) + 1 if labels.size else 0
        self.members = [[] for _ in range(self.k)]
        for i, j in enumerate(self.labels):
            self.members[j].append(i)
        self.recompute_stats()

    def recompute_stats(self):
        """从头重算充分统计量"""
        X, mask = self.dataset.X, self.dataset.mask
        self.cnt[:] = 0.0
        self.s1[:] = 0.0
        self.s2[:] = 0.0
        for j in range(self.k):
            rows = self.members[j]
            self.cnt[j] = mask[rows].sum(axis=0)
            xs = X[rows]
            self.s1[j] = xs.sum(axis=0)
            self.s2[j] = (xs * xs).sum(axis=0)
        self._dirty[:] = True

    def copy(self) -> 'PartitionState':
        return PartitionState(self.dataset, self.labels.copy(), self.priors)

    # ------------------------------------------------------------ queries

    def size(self, j: int) -> int:
        return len(self.members[j])

    def sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.members], dtype=np.int64)

    def cell_stats(self, j: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.cnt[j], self.s1[j], self.s2[j]

    def stats_with(self, j: int, i: int, sign: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """假设把 i 加入 (sign=+1) 或移出 (sign=-1) 簇 j 后的统计量，不修改状态"""
        obs = self.dataset.mask[i]
        x = self.dataset.X[i]
        return (self.cnt[j] + sign * obs,
                self.s1[j] + sign * x,
                self.s2[j] + sign * x * x)

    def plugins(self, j: int) -> Tuple[np.ndarray, np.ndarray]:
        """簇 j 的 plug-in (mu_hat, s2_hat)，只重算脏单元"""
        dirty = self._dirty[j]
        if dirty.any():
            mu_hat, s2_hat = plugin_stats(self.cnt[j, dirty], self.s1[j, dirty],
                                          self.s2[j, dirty], self.priors)
            self._mu_hat[j, dirty] = mu_hat
            self._s2_hat[j, dirty] = s2_hat
            dirty[:] = False
        return self._mu_hat[j], self._s2_hat[j]

    def standardized_row(self, i: int, j: int) -> np.ndarray:
        """观测 i 在簇 j 的 plug-in 下的 z（缺失位置为 0）"""
        mu_hat, s2_hat = self.plugins(j)
        obs = self.dataset.mask[i]
        z = standardized_covariate(self.dataset.X[i], mu_hat, s2_hat)
        return np.where(obs, z, 0.0)

    def z_value(self, i: int, l: int) -> float:
        """单个 z_{il}；对缺失项调用属于逻辑错误"""
        if not self.dataset.mask[i, l]:
            raise StateError(f"观测 {i} 的协变量 {l} 缺失，不能标准化")
        j = self.labels[i]
        mu_hat, s2_hat = self.plugins(j)
        return float(standardized_covariate(self.dataset.X[i, l], mu_hat[l], s2_hat[l]))

    # ------------------------------------------------------------ mutation

    def apply_move(self, i: int, j_new: int) -> MoveResult:
        """把观测 i 移到簇 j_new（j_new == k 表示新建簇）

        空簇被删除，最后一个簇搬入空出的槽位以保持标签连续。
        """
        if not 0 <= j_new <= self.k:
            raise StateError(f"目标簇 {j_new} 超出范围 [0, {self.k}]")
        old = int(self.labels[i])
        if j_new == old:
            return MoveResult(old=old, new=old)
        created = j_new == self.k
        if created:
            self.members.append([])
            self.k += 1

        obs = self.dataset.mask[i]
        x = self.dataset.X[i]
        xx = x * x
        self.cnt[j_new] += obs
        self.s1[j_new] += x
        self.s2[j_new] += xx
        self.members[j_new].append(i)
        self.cnt[old] -= obs
        self.s1[old] -= x
        self.s2[old] -= xx
        empty = self.cnt[old] == 0
        self.s1[old, empty] = 0.0
        self.s2[old, empty] = 0.0
        self.members[old].remove(i)
        self._dirty[j_new] |= obs
        self._dirty[old] |= obs
        self.labels[i] = j_new

        if self.members[old]:
            return MoveResult(old=old, new=j_new, created=created)

        last = self.k - 1
        self.cnt[old] = 0.0
        self.s1[old] = 0.0
        self.s2[old] = 0.0
        relocated = None
        if old != last:
            self.cnt[old] = self.cnt[last]
            self.s1[old] = self.s1[last]
            self.s2[old] = self.s2[last]
            self._mu_hat[old] = self._mu_hat[last]
            self._s2_hat[old] = self._s2_hat[last]
            self._dirty[old] = self._dirty[last]
            self.members[old] = self.members[last]
            self.labels[self.members[old]] = old
            relocated = last
        self.members.pop()
        self.cnt[last] = 0.0
        self.s1[last] = 0.0
        self.s2[last] = 0.0
        self._dirty[last] = True
        self.k -= 1
        return MoveResult(old=old, new=int(self.labels[i]), created=created,
                          vacated=old, relocated_from=relocated)

    # ------------------------------------------------------------ checks

    def check_consistency(self, atol: float = 1e-10):
        """校验分区不变量以及增量统计量与重算结果一致"""
        m = self.dataset.m
        if len(self.members) != self.k:
            raise StateError(f"成员列表数 {len(self.members)} != k={self.k}")
        seen = np.zeros(m, dtype=int)
        for j, rows in enumerate(self.members):
            if not rows:
                raise StateError(f"簇 {j} 为空")
            if np.any(self.labels[rows] != j):
                raise StateError(f"簇 {j} 的成员标签不一致")
            seen[rows] += 1
        if np.any(seen != 1):
            raise StateError("簇不是对观测的划分")
        if self.k and (self.labels.min() != 0 or self.labels.max() != self.k - 1):
            raise StateError("标签不连续")
        X, mask = self.dataset.X, self.dataset.mask
        for j, rows in enumerate(self.members):
            xs = X[rows]
            expected = (mask[rows].sum(axis=0), xs.sum(axis=0), (xs * xs).sum(axis=0))
            for name, got, want in zip(('cnt', 's1', 's2'), self.cell_stats(j), expected):
                if not np.allclose(got, want, rtol=0.0, atol=atol):
                    raise StateError(f"簇 {j} 的 {name} 与重算结果不一致")
