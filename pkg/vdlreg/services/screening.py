# -*- coding: utf-8 -*-
"""
局部线性筛查模块

完整观测上的 (y, x) 高斯混合聚类（BIC 选择簇数），逐簇 OLS，
再按簇大小加权汇总 p 值 / R² / 调整 R² 指标。
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.exceptions import ConvergenceWarning
from sklearn.mixture import GaussianMixture

from vdlreg.core.data import Dataset
from vdlreg.core.errors import DataError

logger = logging.getLogger('vdlreg.screening')

MEASURES = ('pvalue', 'r2', 'adj_r2')
DEFAULT_K_RANGE = range(1, 10)

# screen 命令的退出码
EXIT_LINEAR_SIGNAL = 0
EXIT_NO_SIGNAL = 3
EXIT_INDETERMINATE = 4


def complete_cases(dataset: Dataset) -> Dataset:
    """去掉任何协变量缺失的行"""
    keep = np.flatnonzero(dataset.mask.all(axis=1))
    if keep.size == 0:
        raise DataError("没有完整观测的行，无法筛查")
    return dataset.subset(keep)


def ridge_for(data: np.ndarray) -> float:
    """协方差对角线的正则项 1e-6 · trace(Σ) / dim"""
    data = np.asarray(data, dtype=float)
    dim = data.shape[1]
    cov = np.atleast_2d(np.cov(data, rowvar=False))
    ridge = 1e-6 * float(np.trace(cov)) / dim
    return ridge if ridge > 0 else 1e-6


@dataclass
class GmmModel:
    """BIC 最优的全协方差高斯混合"""
    k: int
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    bic: float
    labels: np.ndarray
    converged: bool = True
    bic_by_k: Dict[int, float] = field(default_factory=dict)


def gmm_fit_bic(data, k_range: Sequence[int] = DEFAULT_K_RANGE, n_init: int = 10,
                seed: int = 0, max_iter: int = 500) -> GmmModel:
    """对每个 k 做多次重启的 EM，取 BIC 最小的模型；硬分配取后验责任最大的分量"""
    data = np.asarray(data, dtype=float)
    n, dim = data.shape
    if n <= dim + 1:
        raise DataError(f"完整观测数 {n} 不足以拟合 {dim} 维高斯混合")
    reg = ridge_for(data)
    best: Optional[GaussianMixture] = None
    best_bic = np.inf
    best_converged = True
    bic_by_k: Dict[int, float] = {}
    for k in k_range:
        if k > n:
            continue
        gm = GaussianMixture(n_components=k, covariance_type='full', n_init=n_init,
                             reg_covar=reg, max_iter=max_iter, random_state=seed)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always', ConvergenceWarning)
            gm.fit(data)
        converged = bool(gm.converged_) and not any(
            issubclass(w.category, ConvergenceWarning) for w in caught)
        if not converged:
            logger.warning("k=%d 的 EM 在 %d 次迭代内未收敛，使用当前最优结果", k, max_iter)
        bic = float(gm.bic(data))
        bic_by_k[k] = bic
        if bic < best_bic:
            best, best_bic, best_converged = gm, bic, converged
    if best is None:
        raise DataError(f"k_range {list(k_range)} 中没有可拟合的簇数")
    return GmmModel(k=best.n_components, weights=best.weights_, means=best.means_,
                    covariances=best.covariances_, bic=best_bic,
                    labels=np.argmax(best.predict_proba(data), axis=1),
                    converged=best_converged, bic_by_k=bic_by_k)


@dataclass
class ClusterFit:
    """单个簇的 OLS 结果（系数第一项为截距）"""
    cluster: int
    size: int
    coefficients: np.ndarray
    r2: float
    adj_r2: float
    pvalue: float

    def measure(self, name: str) -> float:
        return {'pvalue': self.pvalue, 'r2': self.r2, 'adj_r2': self.adj_r2}[name]


def ols_fit(y, X, cluster: int = 0) -> ClusterFit:
    """带截距的最小二乘；R̄² = 1 - (1 - R²)(n - 1)/(n - p)，整体 F 检验 p 值"""
    y = np.asarray(y, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, p = X.shape
    if p == 0:
        raise DataError("OLS 至少需要一个协变量")
    if n < p + 2:
        raise DataError(f"簇 {cluster} 只有 {n} 个观测，少于 p + 2 = {p + 2}")
    design = np.column_stack([np.ones(n), X])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rss = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - p)
    dof = n - p - 1
    if tss <= 0:
        pvalue = 1.0
    elif rss <= 0:
        pvalue = 0.0
    else:
        f_stat = ((tss - rss) / p) / (rss / dof)
        pvalue = float(stats.f.sf(f_stat, p, dof))
    return ClusterFit(cluster=cluster, size=n, coefficients=coef, r2=r2, adj_r2=adj_r2, pvalue=pvalue)


def weighted_indicator(sizes, values) -> float:
    """Σ|S_j| q_j / Σ|S_j|"""
    sizes = np.asarray(sizes, dtype=float)
    values = np.asarray(values, dtype=float)
    return float(sizes @ values / sizes.sum())


@dataclass
class LinearityReport:
    """筛查结果；没有合格簇时 indeterminate 为真，指标为 None"""
    k: int
    m_tilde: int
    clusters: List[ClusterFit]
    indicators: Dict[str, Optional[float]]
    gmm: GmmModel

    @property
    def indeterminate(self) -> bool:
        return not self.clusters

    def table(self) -> pd.DataFrame:
        return pd.DataFrame([{'cluster': c.cluster + 1, 'size': c.size, 'r2': c.r2,
                              'adj_r2': c.adj_r2, 'pvalue': c.pvalue} for c in self.clusters],
                            columns=['cluster', 'size', 'r2', 'adj_r2', 'pvalue'])

    def to_dict(self) -> Dict[str, object]:
        return {
            'k': self.k, 'm_tilde': self.m_tilde, 'indeterminate': self.indeterminate,
            'indicators': self.indicators, 'converged': self.gmm.converged,
            'bic_by_k': {str(k): v for k, v in self.gmm.bic_by_k.items()},
            'clusters': [{'cluster': c.cluster + 1, 'size': c.size, 'r2': c.r2, 'adj_r2': c.adj_r2,
                          'pvalue': c.pvalue, 'coefficients': c.coefficients.tolist()}
                         for c in self.clusters],
        }


def linearity_indicator(dataset: Dataset, k_range: Sequence[int] = DEFAULT_K_RANGE,
                        n_init: int = 10, seed: int = 0) -> LinearityReport:
    """完整观测上的局部线性指标，同时给出三种度量

    只有 |S_j| > p + 2 的簇参与加权。
    """
    reduced = complete_cases(dataset)
    y, X = reduced.raw_y(), reduced.raw_X()
    m_tilde, p = X.shape
    gmm = gmm_fit_bic(np.column_stack([y, X]), k_range=k_range, n_init=n_init, seed=seed)
    fits = []
    for j in range(gmm.k):
        rows = np.flatnonzero(gmm.labels == j)
        if rows.size > p + 2:
            fits.append(ols_fit(y[rows], X[rows], cluster=j))
    indicators: Dict[str, Optional[float]] = {}
    for name in MEASURES:
        indicators[name] = (weighted_indicator([f.size for f in fits], [f.measure(name) for f in fits])
                            if fits else None)
    logger.info("筛查: m̃=%d, k̃=%d, 合格簇 %d 个, 指标 %s", m_tilde, gmm.k, len(fits), indicators)
    return LinearityReport(k=gmm.k, m_tilde=m_tilde, clusters=fits, indicators=indicators, gmm=gmm)


def screen_decision(report: LinearityReport, threshold: float = 0.05) -> int:
    """加权 p 值低于阈值为线性信号（0），否则无信号（3），无合格簇为不确定（4）"""
    if report.indeterminate:
        return EXIT_INDETERMINATE
    return EXIT_LINEAR_SIGNAL if report.indicators['pvalue'] < threshold else EXIT_NO_SIGNAL
