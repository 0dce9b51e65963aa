# -*- coding: utf-8 -*-
"""
似然模块

投影、动态中心化的高斯抽样模型：观测协变量进入均值，缺失协变量把 β² 加到方差上；
以及 Dirichlet–Laplace 先验密度。MCMC 与预测模块评估的全部密度都在这里。
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import gammaln

from vdlreg.core.data import Dataset
from vdlreg.core.partition import PluginPriors, plugin_stats, standardized_covariate

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class ClusterParams:
    """单个簇的抽样模型参数与 DL 增广变量"""
    mu: float
    sigma: float
    beta: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    tau: float

    @classmethod
    def flat(cls, mu: float, sigma: float, p: int, tau: float = 0.2) -> 'ClusterParams':
        """β = 0，增广变量取先验均值"""
        return cls(mu=mu, sigma=sigma, beta=np.zeros(p), psi=np.full(p, 2.0),
                   phi=np.full(p, 1.0 / p) if p else np.zeros(0), tau=tau)


@dataclass
class Baseline:
    mu0: float
    sigma0: float


def gaussian_logpdf(y, mean, var):
    y = np.asarray(y, dtype=float)
    r = y - mean
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * r * r / var


def projected_moments(z, observed, mu: float, sigma: float, beta: np.ndarray):
    """投影后的均值与方差

    z: (..., p) 标准化协变量（缺失位置任意，不被读取）；observed: 同形状布尔掩码。
    """
    z = np.where(observed, z, 0.0)
    mean = mu + z @ beta
    var = sigma * sigma + (~np.asarray(observed, dtype=bool)).astype(float) @ (beta * beta)
    return mean, var


def obs_loglik(y: float, z, observed, params: ClusterParams) -> float:
    """单个观测的对数似然：N(μ + Σ_obs β z, σ² + Σ_miss β²)"""
    values = (params.mu, params.sigma, *np.atleast_1d(params.beta))
    if not np.all(np.isfinite(values)):
        raise ValueError("簇参数必须为有限值")
    mean, var = projected_moments(np.asarray(z, dtype=float), np.asarray(observed, dtype=bool),
                                  params.mu, params.sigma, np.asarray(params.beta, dtype=float))
    return float(gaussian_logpdf(y, mean, var))


def member_stats(rows, dataset: Dataset) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """成员集合的 (计数, 和, 平方和)"""
    xs = dataset.X[rows]
    return dataset.mask[rows].sum(axis=0).astype(float), xs.sum(axis=0), (xs * xs).sum(axis=0)


def cluster_loglik(rows, params: ClusterParams, dataset: Dataset, priors: PluginPriors,
                   stats: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None) -> float:
    """簇内对数似然之和

    plug-in 统计量由假设的成员集合 rows 决定（stats 缺省时从 rows 重算），
    因此成员变化会改变所有成员的 z。
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        return 0.0
    if stats is None:
        stats = member_stats(rows, dataset)
    mu_hat, s2_hat = plugin_stats(*stats, priors)
    observed = dataset.mask[rows]
    z = standardized_covariate(dataset.X[rows], mu_hat, s2_hat)
    mean, var = projected_moments(z, observed, params.mu, params.sigma, params.beta)
    return float(np.sum(gaussian_logpdf(dataset.y[rows], mean, var)))


def dl_logprior(beta, psi, phi, tau: float, sigma: float, tau0: float) -> float:
    """Dirichlet–Laplace 先验的对数密度

    β ~ N(0, σ²τ² diag(ψ φ²))，ψ_l ~ Exp(1/2)，φ ~ Dir(1/p)，τ ~ Exp(1/(2τ0))。
    φ 不在单纯形上时报错；支撑边界上返回 -inf。
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    p = beta.size
    if p and (abs(phi.sum() - 1.0) > 1e-8 or np.any(phi < 0)):
        raise ValueError(f"φ 不在单纯形上: {phi}")
    if not (tau > 0 and sigma > 0) or np.any(psi <= 0) or np.any(phi <= 0):
        return -math.inf
    rate = 1.0 / (2.0 * tau0)
    out = math.log(rate) - rate * tau
    if p == 0:
        return out
    var = (sigma * tau * phi) ** 2 * psi
    out += float(np.sum(gaussian_logpdf(beta, 0.0, var)))
    out += float(np.sum(math.log(0.5) - 0.5 * psi))
    if p > 1:
        a = 1.0 / p
        out += float(gammaln(1.0) - p * gammaln(a) + (a - 1.0) * np.sum(np.log(phi)))
    return out


@dataclass
class MarginalizationCheck:
    """蒙特卡罗边缘化与投影似然的比较结果"""
    y_grid: np.ndarray
    gaps: np.ndarray
    std_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def max_gap(self) -> float:
        return float(np.max(np.abs(self.gaps))) if self.gaps.size else 0.0

    @property
    def max_z(self) -> float:
        """|gap| / SE 的最大值"""
        if not self.gaps.size or not np.any(self.std_errors > 0):
            return 0.0
        return float(np.max(np.abs(self.gaps) / np.where(self.std_errors > 0, self.std_errors, np.inf)))


def marginalization_check(params: ClusterParams, z, observed, y_grid, n_draws: int = 1_000_000,
                          rng: Optional[np.random.Generator] = None,
                          chunk: int = 200_000) -> MarginalizationCheck:
    """把缺失的 z_l ~ N(0, 1) 用蒙特卡罗积分掉，与 obs_loglik 比较

    全部观测时无需积分，差值恰为 0。
    """
    y_grid = np.atleast_1d(np.asarray(y_grid, dtype=float))
    observed = np.asarray(observed, dtype=bool)
    z = np.where(observed, np.asarray(z, dtype=float), 0.0)
    if observed.all():
        zeros = np.zeros(y_grid.size)
        return MarginalizationCheck(y_grid=y_grid, gaps=zeros, std_errors=zeros.copy())
    rng = rng if rng is not None else np.random.default_rng()
    beta = np.asarray(params.beta, dtype=float)
    base = params.mu + z[observed] @ beta[observed]
    beta_miss = beta[~observed]
    var = params.sigma ** 2
    total = np.zeros(y_grid.size)
    total_sq = np.zeros(y_grid.size)
    done = 0
    while done < n_draws:
        size = min(chunk, n_draws - done)
        means = base + rng.standard_normal((size, beta_miss.size)) @ beta_miss
        dens = np.exp(gaussian_logpdf(y_grid[None, :], means[:, None], var))
        total += dens.sum(axis=0)
        total_sq += (dens * dens).sum(axis=0)
        done += size
    mc_mean = total / n_draws
    mc_var = np.maximum(total_sq / n_draws - mc_mean ** 2, 0.0)
    se_log = np.sqrt(mc_var / n_draws) / mc_mean
    exact = np.array([obs_loglik(y, z, observed, params) for y in y_grid])
    return MarginalizationCheck(y_grid=y_grid, gaps=np.log(mc_mean) - exact, std_errors=se_log)
