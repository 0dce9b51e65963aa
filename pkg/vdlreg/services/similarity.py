# -*- coding: utf-8 -*-
"""
分区先验模块

DP 形式的凝聚函数、三类共轭相似度函数（NN / NNIG / NNSIχ²）的闭式对数边缘密度，
以及在给定协变量下的分区对数先验和两观测共聚类概率。

所有相似度都只依赖 (n, sum, sumsq) 充分统计量；空集的相似度为 1（对数为 0）。
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit, gammaln

from vdlreg.core.config import SIMILARITY_DEFAULTS, SimilarityConfig
from vdlreg.core.data import Dataset

LOG_2PI = math.log(2.0 * math.pi)


def log_cohesion(size, M: float):
    """log c(S|M) = log M + log Γ(|S|)"""
    size = np.asarray(size)
    if np.any(size < 1):
        raise ValueError("簇大小必须 >= 1")
    if not M > 0:
        raise ValueError("M 必须 > 0")
    out = math.log(M) + gammaln(size)
    return float(out) if out.ndim == 0 else out


def _as_stats(n, s1, s2):
    n = np.asarray(n, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    safe = np.where(n > 0, n, 1.0)
    xbar = s1 / safe
    ss = np.maximum(s2 - s1 * xbar, 0.0)
    return n, xbar, ss


def _finish(out, n):
    out = np.where(n > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NormalNormal:
    """x | t ~ N(t, kernel_var)，t ~ N(mean0, var0)"""
    mean0: float = 0.0
    var0: float = 25.0
    kernel_var: float = 1.0

    def __post_init__(self):
        if not (self.var0 > 0 and self.kernel_var > 0):
            raise ValueError("NN 相似度要求 var0, kernel_var > 0")

    def log_marginal(self, n, s1, s2):
        n, xbar, ss = _as_stats(n, s1, s2)
        s2k, v0 = self.kernel_var, self.var0
        total = s2k + n * v0
        dev = xbar - self.mean0
        out = (-0.5 * n * LOG_2PI - 0.5 * (n - 1.0) * math.log(s2k) - 0.5 * np.log(total)
               - 0.5 * ss / s2k - 0.5 * n * dev * dev / total)
        return _finish(out, n)


@dataclass(frozen=True)
class NormalNormalInverseGamma:
    """x | t, s² ~ N(t, s²)，t | s² ~ N(mean0, s²/kappa)，s² ~ IG(a, b)"""
    mean0: float = 0.0
    kappa: float = 0.1
    a: float = 2.0
    b: float = 1.0

    def __post_init__(self):
        if not (self.kappa > 0 and self.a > 0 and self.b > 0):
            raise ValueError("NNIG 相似度要求 kappa, a, b > 0")

    def log_marginal(self, n, s1, s2):
        n, xbar, ss = _as_stats(n, s1, s2)
        kappa_n = self.kappa + n
        a_n = self.a + 0.5 * n
        dev = xbar - self.mean0
        b_n = self.b + 0.5 * (ss + self.kappa * n / kappa_n * dev * dev)
        out = (gammaln(a_n) - gammaln(self.a) + self.a * math.log(self.b) - a_n * np.log(b_n)
               + 0.5 * np.log(self.kappa / kappa_n) - 0.5 * n * LOG_2PI)
        return _finish(out, n)


class NormalScaledInvChi2(NormalNormalInverseGamma):
    """NNIG 的 scaled-inverse-χ² 参数化：s² ~ Scaled-Inv-χ²(nu, s0sq)"""

    def __init__(self, mu0: float = 0.0, kappa: float = 0.1, nu: float = 4.0, s0sq: float = 0.04):
        if not (nu > 0 and s0sq > 0):
            raise ValueError("NNSIχ² 相似度要求 nu, s0sq > 0")
        object.__setattr__(self, 'nu', nu)
        object.__setattr__(self, 's0sq', s0sq)
        super().__init__(mean0=mu0, kappa=kappa, a=0.5 * nu, b=0.5 * nu * s0sq)

    def __repr__(self):
        return (f"NormalScaledInvChi2(mu0={self.mean0}, kappa={self.kappa}, "
                f"nu={self.nu}, s0sq={self.s0sq})")


FAMILIES = {
    'nn': NormalNormal,
    'nnig': NormalNormalInverseGamma,
    'nnsichi2': NormalScaledInvChi2,
}


def make_family(name: str, params: Optional[Dict[str, float]] = None):
    """按名称构造相似度族，缺省参数取内置默认值"""
    if name not in FAMILIES:
        raise ValueError(f"未知相似度族 {name!r}")
    merged = dict(SIMILARITY_DEFAULTS[name])
    merged.update(params or {})
    return FAMILIES[name](**merged)


class SimilarityModel:
    """每个协变量一个相似度族；共享同一族对象的列一起向量化计算"""

    def __init__(self, families: Sequence):
        self.families = tuple(families)
        groups: Dict[int, Tuple[object, List[int]]] = {}
        for l, fam in enumerate(self.families):
            groups.setdefault(id(fam), (fam, []))[1].append(l)
        self._groups = [(fam, np.array(cols)) for fam, cols in groups.values()]

    @property
    def p(self) -> int:
        return len(self.families)

    @classmethod
    def shared(cls, family, p: int) -> 'SimilarityModel':
        return cls([family] * p)

    @classmethod
    def from_config(cls, cfg: SimilarityConfig, col_names: Sequence[str]) -> 'SimilarityModel':
        base = make_family(cfg.family, cfg.params)
        families = []
        for name in col_names:
            override = cfg.overrides.get(name)
            families.append(base if override is None
                            else make_family(override['family'], override['params']))
        return cls(families)

    def log_marginal(self, n, s1, s2) -> np.ndarray:
        """逐单元的对数相似度，输入形状 (..., p)"""
        n = np.asarray(n, dtype=float)
        out = np.zeros(n.shape)
        if len(self._groups) == 1:
            fam, _ = self._groups[0]
            return np.asarray(fam.log_marginal(n, s1, s2), dtype=float).reshape(n.shape)
        s1 = np.asarray(s1, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        for fam, cols in self._groups:
            out[..., cols] = fam.log_marginal(n[..., cols], s1[..., cols], s2[..., cols])
        return out

    def log_marginal_cols(self, cols, n, s1, s2) -> np.ndarray:
        """只对列子集 cols 计算（最后一维与 cols 对齐）"""
        cols = np.asarray(cols, dtype=int)
        n = np.asarray(n, dtype=float)
        if len(self._groups) == 1:
            fam, _ = self._groups[0]
            return np.asarray(fam.log_marginal(n, s1, s2), dtype=float).reshape(n.shape)
        s1 = np.asarray(s1, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        out = np.zeros(n.shape)
        for t, l in enumerate(cols):
            out[..., t] = self.families[l].log_marginal(n[..., t], s1[..., t], s2[..., t])
        return out

    def log_singleton(self, x: np.ndarray, cols) -> float:
        """log tg({x})：单个观测在其观测列上的相似度之和"""
        x = np.asarray(x, dtype=float)
        return float(np.sum(self.log_marginal_cols(cols, np.ones(x.shape), x, x * x)))


def log_similarity(values, family) -> float:
    """一组观测值的对数相似度（空集返回 0）

    使用 math.fsum 累加，结果与值的排列无关。
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(values)):
        raise ValueError("相似度输入必须为有限值")
    if values.size == 0:
        return 0.0
    s1 = math.fsum(values)
    s2 = math.fsum(values * values)
    return float(family.log_marginal(values.size, s1, s2))


def log_similarity_ratio(n, s1, s2, new_value, family):
    """log tg(V ∪ {x}) - log tg(V)，由 V 的充分统计量增量计算"""
    if not np.all(np.isfinite(new_value)):
        raise ValueError("相似度输入必须为有限值")
    x = np.asarray(new_value, dtype=float)
    return family.log_marginal(np.asarray(n) + 1.0, np.asarray(s1) + x, np.asarray(s2) + x * x) \
        - family.log_marginal(n, s1, s2)


def log_partition_prior(labels, dataset, M: float, similarity: SimilarityModel) -> float:
    """Σ_j [log c(S_j|M) + Σ_l log tg(观测值)]（未归一化），从头计算"""
    labels = np.asarray(labels)
    X, mask = dataset.X, dataset.mask
    total = []
    for j in np.unique(labels):
        rows = labels == j
        n = mask[rows].sum(axis=0)
        xs = np.where(mask[rows], X[rows], 0.0)
        cells = similarity.log_marginal(n, xs.sum(axis=0), (xs * xs).sum(axis=0))
        total.append(log_cohesion(int(rows.sum()), M))
        total.extend(np.atleast_1d(cells).tolist())
    return math.fsum(total)


def _raw_pair(X, mask):
    return Dataset(y=np.zeros(2), X=np.where(mask, X, 0.0), mask=mask,
                   col_names=tuple(f"x{l + 1}" for l in range(X.shape[1])))


def co_cluster_probability(x1, mask1, x2, mask2, M: float, similarity: SimilarityModel) -> float:
    """两观测先验共聚类概率 w12 / (w12 + w1·w2)"""
    pair = _raw_pair(np.vstack([np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)]),
                     np.vstack([np.asarray(mask1, dtype=bool), np.asarray(mask2, dtype=bool)]))
    together = log_partition_prior([0, 0], pair, M, similarity)
    apart = log_partition_prior([0, 1], pair, M, similarity)
    return float(expit(together - apart))


def co_cluster_grid(grid1, grid2, M: float, similarity: SimilarityModel) -> pd.DataFrame:
    """第一观测固定在 (0, 0)，第二观测遍历网格

    列：x1, x2, prob_observed（两协变量都观测）, prob_x2_missing, difference。
    """
    if similarity.p != 2:
        raise ValueError("共聚类网格需要两个协变量")
    origin, full = np.zeros(2), np.ones(2, dtype=bool)
    x2_missing = np.array([True, False])
    rows = []
    for a in np.asarray(grid1, dtype=float):
        missing = co_cluster_probability(origin, full, [a, 0.0], x2_missing, M, similarity)
        for b in np.asarray(grid2, dtype=float):
            observed = co_cluster_probability(origin, full, [a, b], full, M, similarity)
            rows.append((a, b, observed, missing, observed - missing))
    return pd.DataFrame(rows, columns=['x1', 'x2', 'prob_observed', 'prob_x2_missing', 'difference'])
