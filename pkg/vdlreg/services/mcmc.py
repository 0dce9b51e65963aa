# -*- coding: utf-8 -*-
"""
MCMC 模块

完整的 Gibbs 采样器：
  - 分配更新：改进的 Algorithm 7 Metropolis–Hastings（默认），或带一个辅助参数的全 Gibbs 更新；
  - 簇参数：μ* 共轭正态，σ* 有界切片，β* 椭圆切片，DL 增广变量分块 Gibbs；
  - 基线：μ0 共轭正态，σ0 有界切片。

扫描顺序：分配 → 逐簇 (μ*, σ*, β*, DL) → 基线。
每条链一个独立的 ChainState，随机数由主种子 + 链号派生。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from vdlreg.core.config import McmcConfig, ModelConfig
from vdlreg.core.data import Dataset
from vdlreg.core.errors import SamplerError, StateError
from vdlreg.core.metrics import MetricsCollector
from vdlreg.core.partition import MoveResult, PartitionState, plugin_stats
from vdlreg.services.likelihood import ClusterParams, Baseline, dl_logprior, gaussian_logpdf
from vdlreg.services.samplers import elliptical_slice, gig_sample, invgauss_sample, slice_sample
from vdlreg.services.similarity import SimilarityModel, log_cohesion

logger = logging.getLogger('vdlreg.mcmc')
metrics_logger = logging.getLogger('vdlreg.metrics')

BETA_FLOOR = 1e-10
TINY = np.finfo(float).tiny


def chain_rng(seed: int, chain: int = 0) -> np.random.Generator:
    """主种子 + 链号 → 独立的随机数流"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chain,)))


def _sample_log_weights(rng: np.random.Generator, log_w: np.ndarray) -> int:
    w = np.exp(log_w - np.max(log_w))
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, rng.uniform() * cum[-1], side='right'))
    return min(idx, log_w.size - 1)


def draw_prior_params(rng: np.random.Generator, baseline: Baseline, model: ModelConfig, p: int) -> ClusterParams:
    """新簇参数的先验抽样：μ ~ N(μ0, σ0²)，σ ~ U(0, a_σ)，启用回归时 DL 增广与 β 来自先验

    不启用回归时 β = 0、增广变量取先验均值，且不消耗随机数。
    """
    mu = rng.normal(baseline.mu0, baseline.sigma0)
    sigma = 0.0
    while sigma <= 0.0:
        sigma = rng.uniform(0.0, model.a_sigma)
    if not model.regression_active:
        return ClusterParams.flat(mu, sigma, p, tau=2.0 * model.tau0)
    psi = rng.exponential(2.0, size=p)
    if p:
        # T_l ~ Gamma(1/p, 2τ0) 独立，τ = ΣT ~ Exp(1/(2τ0))，φ = T/τ ~ Dir(1/p)
        t = np.maximum(rng.gamma(1.0 / p, 2.0 * model.tau0, size=p), TINY)
        tau = float(t.sum())
        phi = t / tau
        beta = rng.normal(0.0, sigma * tau * np.sqrt(psi) * phi)
    else:
        tau = rng.exponential(2.0 * model.tau0)
        phi = beta = np.zeros(0)
    return ClusterParams(mu=mu, sigma=sigma, beta=beta, psi=psi, phi=phi, tau=tau)


class ChainState:
    """单条链的全部可变状态

    簇参数按槽位存放在与分区同容量的数组中，槽位 j 对应分区中的簇 j。
    theta_factory 可替换新簇参数的先验抽样（用于固定参数的分配链检验）。
    """

    def __init__(self, dataset: Dataset, model: ModelConfig, mcmc: McmcConfig,
                 rng: np.random.Generator, similarity: Optional[SimilarityModel] = None,
                 labels=None, metrics: Optional[MetricsCollector] = None,
                 theta_factory: Optional[Callable[['ChainState'], ClusterParams]] = None):
        if not model.is_resolved:
            model = model.resolve(dataset.y)
        self.dataset = dataset
        self.model = model
        self.mcmc = mcmc
        self.rng = rng
        self.similarity = similarity or SimilarityModel.from_config(model.similarity, dataset.col_names)
        if self.similarity.p != dataset.p:
            raise StateError(f"相似度列数 {self.similarity.p} 与 p={dataset.p} 不一致")
        self.metrics = metrics or MetricsCollector()
        self.theta_factory = theta_factory
        self.flat = model.model == 'vdreg'
        self.active = model.regression_active
        m, p = dataset.m, dataset.p
        if labels is None:
            if mcmc.init == 'random':
                labels = rng.integers(min(mcmc.init_clusters, m), size=m)
            else:
                labels = np.zeros(m, dtype=np.int64)
        self.partition = PartitionState(dataset, labels, model.plugin_priors)
        cap = m + 1
        self.mu = np.zeros(cap)
        self.sigma = np.full(cap, 0.5 * model.a_sigma)
        self.beta = np.zeros((cap, p))
        self.psi = np.full((cap, p), 2.0)
        self.phi = np.full((cap, p), 1.0 / p if p else 0.0)
        self.tau = np.full(cap, 2.0 * model.tau0)
        self.baseline = Baseline(mu0=float(model.m0), sigma0=0.5 * float(model.a_sigma0))
        self.iteration = 0

    # ------------------------------------------------------------ accessors

    @property
    def k(self) -> int:
        return self.partition.k

    def params(self, j: int) -> ClusterParams:
        return ClusterParams(mu=float(self.mu[j]), sigma=float(self.sigma[j]),
                             beta=self.beta[j].copy(), psi=self.psi[j].copy(),
                             phi=self.phi[j].copy(), tau=float(self.tau[j]))

    def set_params(self, j: int, theta: ClusterParams):
        self.mu[j] = theta.mu
        self.sigma[j] = theta.sigma
        self.beta[j] = theta.beta
        self.psi[j] = theta.psi
        self.phi[j] = theta.phi
        self.tau[j] = theta.tau

    def set_response(self, y):
        """替换响应向量（Geweke 检验中交替模拟数据）"""
        d = self.dataset
        self.dataset = Dataset(y=np.asarray(y, dtype=float), X=d.X, mask=d.mask, col_names=d.col_names,
                               response_name=d.response_name, x_center=d.x_center, x_scale=d.x_scale,
                               y_center=d.y_center, y_scale=d.y_scale, standardized=d.standardized)
        self.partition.dataset = self.dataset

    def _after_move(self, res: MoveResult):
        if res.relocated_from is None:
            return
        v, r = res.vacated, res.relocated_from
        self.mu[v] = self.mu[r]
        self.sigma[v] = self.sigma[r]
        self.tau[v] = self.tau[r]
        self.beta[v] = self.beta[r]
        self.psi[v] = self.psi[r]
        self.phi[v] = self.phi[r]

    def move(self, i: int, j_new: int, theta: Optional[ClusterParams] = None) -> MoveResult:
        """移动观测并同步簇参数；新建簇时 theta 写入新槽位"""
        if j_new == self.k:
            if theta is None:
                raise StateError("新建簇需要参数")
            self.set_params(self.k, theta)
        res = self.partition.apply_move(i, j_new)
        self._after_move(res)
        return res

    # ------------------------------------------------------------ likelihood

    def shift_var(self, rows, beta: np.ndarray, stats=None, j: Optional[int] = None):
        """成员的均值偏移 Σ_obs β z 与方差增量 Σ_miss β²

        stats 给出假设成员集合的充分统计量；否则使用簇 j 的当前 plug-in。
        """
        n = len(rows)
        if self.flat:
            return np.zeros(n), np.zeros(n)
        if stats is None:
            mu_hat, s2_hat = self.partition.plugins(j)
        else:
            mu_hat, s2_hat = plugin_stats(*stats, self.partition.priors)
        observed = self.dataset.mask[rows]
        z = np.where(observed, (self.dataset.X[rows] - mu_hat) / np.sqrt(s2_hat), 0.0)
        return z @ beta, (~observed).astype(float) @ (beta * beta)

    def cluster_ll(self, rows, mu: float, sigma: float, beta: np.ndarray,
                   stats=None, j: Optional[int] = None) -> float:
        if len(rows) == 0:
            return 0.0
        shift, missvar = self.shift_var(rows, beta, stats=stats, j=j)
        return float(np.sum(gaussian_logpdf(self.dataset.y[rows], mu + shift, sigma * sigma + missvar)))

    def _ll_slot(self, rows, j: int, stats=None) -> float:
        return self.cluster_ll(rows, self.mu[j], self.sigma[j], self.beta[j], stats=stats,
                               j=None if stats is not None else j)

    def _singleton_stats(self, i: int):
        x = self.dataset.X[i]
        return self.dataset.mask[i].astype(float), x, x * x

    # ------------------------------------------------------------ prior draws

    def draw_new_theta(self) -> ClusterParams:
        """新簇参数：μ ~ N(μ0, σ0²)，σ ~ U(0, a_σ)，启用回归时 DL 增广与 β 来自先验"""
        if self.theta_factory is not None:
            return self.theta_factory(self)
        return draw_prior_params(self.rng, self.baseline, self.model, self.dataset.p)

    # ------------------------------------------------------------ allocation helpers

    def log_omega(self, i: int) -> np.ndarray:
        """去掉 i 后各簇的先验分配权重 log(|S_h^{-i}|) + Σ_{l∈O_i} 相似度比"""
        part = self.partition
        obs = self.dataset.patterns[i]
        k = part.k
        c = part.labels[i]
        sizes = part.sizes().astype(float)
        sizes[c] -= 1.0
        with np.errstate(divide='ignore'):
            out = np.log(sizes)
        if obs.size:
            x = self.dataset.X[i, obs]
            cnt = part.cnt[:k][:, obs].copy()
            s1 = part.s1[:k][:, obs].copy()
            s2 = part.s2[:k][:, obs].copy()
            cnt[c] -= 1.0
            s1[c] -= x
            s2[c] -= x * x
            empty = cnt[c] == 0
            s1[c, empty] = 0.0
            s2[c, empty] = 0.0
            sim = self.similarity
            ratio = sim.log_marginal_cols(obs, cnt + 1.0, s1 + x, s2 + x * x) \
                - sim.log_marginal_cols(obs, cnt, s1, s2)
            out = out + ratio.sum(axis=1)
        return out

    def log_new_weight(self, i: int) -> float:
        """log M + log tg({x_i})"""
        obs = self.dataset.patterns[i]
        return math.log(self.model.M) + self.similarity.log_singleton(self.dataset.X[i, obs], obs)


# ============================================================ per-cluster updates

def update_mu_star(state: ChainState, j: int) -> float:
    """μ*_j 的共轭正态更新（异方差精度 1/(σ² + Σ_miss β²)）"""
    rng, b = state.rng, state.baseline
    rows = state.partition.members[j]
    prior_prec = 1.0 / (b.sigma0 * b.sigma0)
    if not rows:
        state.mu[j] = rng.normal(b.mu0, b.sigma0)
        return state.mu[j]
    shift, missvar = state.shift_var(rows, state.beta[j], j=j)
    sigma = state.sigma[j]
    prec = 1.0 / (sigma * sigma + missvar)
    resid = state.dataset.y[rows] - shift
    post_prec = prior_prec + prec.sum()
    mean = (b.mu0 * prior_prec + (prec * resid).sum()) / post_prec
    state.mu[j] = rng.normal(mean, 1.0 / math.sqrt(post_prec))
    return state.mu[j]


def _beta_log_prior(beta, sigma, tau, psi, phi) -> float:
    var = (sigma * tau * phi) ** 2 * psi
    return float(np.sum(gaussian_logpdf(beta, 0.0, var)))


def update_sigma_star(state: ChainState, j: int) -> float:
    """σ*_j 在 (0, a_σ) 上的收缩切片更新；启用回归时目标包含 β 的先验项"""
    rows = state.partition.members[j]
    y = state.dataset.y[rows]
    mu, beta = state.mu[j], state.beta[j]
    if rows:
        shift, missvar = state.shift_var(rows, beta, j=j)
        mean = mu + shift
    include_beta = state.active and state.dataset.p > 0
    tau, psi, phi = state.tau[j], state.psi[j], state.phi[j]

    def logpdf(s):
        out = 0.0
        if rows:
            out += float(np.sum(gaussian_logpdf(y, mean, s * s + missvar)))
        if include_beta:
            out += _beta_log_prior(beta, s, tau, psi, phi)
        return out

    new, evals = slice_sample(logpdf, float(state.sigma[j]), state.rng,
                              bounds=(0.0, state.model.a_sigma), width=state.mcmc.slice_width,
                              max_doublings=state.mcmc.slice_max_doublings)
    state.metrics.increment('slice_sigma_evals', evals)
    state.sigma[j] = new
    return new


def update_beta_star(state: ChainState, j: int) -> np.ndarray:
    """β*_j 的椭圆切片更新，先验 N(0, σ²τ² diag(ψ φ²))"""
    if not state.active or state.dataset.p == 0:
        return state.beta[j]
    rows = state.partition.members[j]
    mu, sigma = state.mu[j], state.sigma[j]
    prior_sd = sigma * state.tau[j] * np.sqrt(state.psi[j]) * state.phi[j]
    if rows:
        y = state.dataset.y[rows]
        mu_hat, s2_hat = state.partition.plugins(j)
        observed = state.dataset.mask[rows]
        z = np.where(observed, (state.dataset.X[rows] - mu_hat) / np.sqrt(s2_hat), 0.0)
        missing = (~observed).astype(float)

        def loglik(b):
            return float(np.sum(gaussian_logpdf(y, mu + z @ b, sigma * sigma + missing @ (b * b))))
    else:
        def loglik(b):
            return 0.0

    new, _, shrinks = elliptical_slice(state.beta[j], prior_sd, loglik, state.rng,
                                       max_shrink=state.mcmc.ess_max_shrink)
    state.metrics.increment('ess_shrinks', shrinks)
    if shrinks >= state.mcmc.ess_max_shrink:
        state.metrics.increment('ess_capped')
    state.beta[j] = new
    return new


def _tau_log_target(u: float, p: int, tau0: float, chi: float) -> float:
    """log τ 坐标下 τ 条件分布的对数密度（含 Jacobian）"""
    return (1.0 - p) * u - 0.5 * (math.exp(u) / tau0 + chi * math.exp(-u))


def update_dl_hypers(state: ChainState, j: int):
    """DL 增广变量 (φ, τ, ψ) 的分块 Gibbs 更新，θ = β/σ

    φ | θ：T_l ~ GIG(1/p - 1, 1/τ0, 2|θ_l|)，φ = T/ΣT；
    τ | φ, θ：GIG(1 - p, 1/τ0, 2Σ|θ_l|/φ_l)（或 log τ 上的切片更新）；
    ψ | φ, τ, θ：1/ψ_l ~ IG(φ_l τ / |θ_l|, 1)。
    """
    p = state.dataset.p
    if not state.active or p == 0:
        return state.psi[j], state.phi[j], state.tau[j]
    rng, tau0 = state.rng, state.model.tau0
    theta = np.maximum(np.abs(state.beta[j]) / state.sigma[j], BETA_FLOOR)
    if p > 1:
        t = np.maximum(np.atleast_1d(gig_sample(1.0 / p - 1.0, 1.0 / tau0, 2.0 * theta, rng)), TINY)
        phi = t / t.sum()
    else:
        phi = np.ones(1)
    chi = 2.0 * float(np.sum(theta / phi))
    if state.mcmc.tau_update == 'slice':
        u, evals = slice_sample(lambda v: _tau_log_target(v, p, tau0, chi), math.log(state.tau[j]),
                                rng, width=state.mcmc.slice_width,
                                max_doublings=state.mcmc.slice_max_doublings)
        state.metrics.increment('slice_tau_evals', evals)
        tau = math.exp(u)
    else:
        tau = float(gig_sample(1.0 - p, 1.0 / tau0, chi, rng))
    w = invgauss_sample(phi * tau / theta, 1.0, rng)
    psi = 1.0 / np.maximum(w, TINY)
    state.phi[j] = phi
    state.tau[j] = tau
    state.psi[j] = psi
    return psi, phi, tau


def update_baseline(state: ChainState) -> Baseline:
    """μ0 共轭正态，σ0 在 (0, a_σ0) 上的切片更新"""
    rng, model = state.rng, state.model
    k = state.k
    mus = state.mu[:k]
    b = state.baseline
    prior_prec = 1.0 / (model.v * model.v)
    data_prec = k / (b.sigma0 * b.sigma0)
    post_prec = prior_prec + data_prec
    mean = (model.m0 * prior_prec + mus.sum() / (b.sigma0 * b.sigma0)) / post_prec
    mu0 = rng.normal(mean, 1.0 / math.sqrt(post_prec))

    def logpdf(s):
        return float(np.sum(gaussian_logpdf(mus, mu0, s * s)))

    sigma0, evals = slice_sample(logpdf, b.sigma0, rng, bounds=(0.0, model.a_sigma0),
                                 width=state.mcmc.slice_width,
                                 max_doublings=state.mcmc.slice_max_doublings)
    state.metrics.increment('slice_sigma0_evals', evals)
    state.baseline = Baseline(mu0=float(mu0), sigma0=float(sigma0))
    return state.baseline


# ============================================================ allocation updates

def _accept(state: ChainState, log_a: float, move: str) -> bool:
    if math.isnan(log_a):
        raise SamplerError(f"{move} 接受率为 NaN", {'iteration': state.iteration, 'k': state.k})
    log_a = min(0.0, log_a)
    accepted = -state.rng.exponential() < log_a
    state.metrics.record_proposal(move, accepted)
    return accepted


def _alg7_step(state: ChainState, i: int):
    part, rng = state.partition, state.rng
    c = int(part.labels[i])
    singleton = part.size(c) == 1
    type1 = rng.uniform() < state.mcmc.proposal_prob
    if not type1 and singleton:
        return
    if part.k == 1 and (singleton or not type1):
        return
    log_w = state.log_omega(i)
    members = part.members

    if type1 and singleton:
        others = np.array([h for h in range(part.k) if h != c])
        lw = log_w[others]
        target = int(others[_sample_log_weights(rng, lw)])
        stats_plus = part.stats_with(target, i, +1)
        ll_plus = state._ll_slot(members[target] + [i], target, stats=stats_plus)
        ll_target = state._ll_slot(members[target], target)
        ll_i = state._ll_slot([i], c)
        log_a = logsumexp(lw) + ll_plus - (state.log_new_weight(i) + ll_i + ll_target)
        if _accept(state, log_a, 'alloc_1a'):
            state.move(i, target)
        return

    rest = [r for r in members[c] if r != i]
    stats_minus = part.stats_with(c, i, -1)
    ll_c = state._ll_slot(members[c], c)
    ll_c_minus = state._ll_slot(rest, c, stats=stats_minus)

    if type1:
        theta = state.draw_new_theta()
        ll_new = state.cluster_ll([i], theta.mu, theta.sigma, theta.beta, stats=state._singleton_stats(i))
        log_a = state.log_new_weight(i) + ll_new + ll_c_minus - logsumexp(log_w) - ll_c
        if _accept(state, log_a, 'alloc_1b'):
            state.move(i, part.k, theta)
        return

    others = np.array([h for h in range(part.k) if h != c])
    target = int(others[_sample_log_weights(rng, log_w[others])])
    keep = np.ones(part.k, dtype=bool)
    keep[target] = False
    stats_plus = part.stats_with(target, i, +1)
    ll_plus = state._ll_slot(members[target] + [i], target, stats=stats_plus)
    ll_target = state._ll_slot(members[target], target)
    log_a = (logsumexp(log_w[others]) + ll_plus + ll_c_minus
             - logsumexp(log_w[keep]) - ll_target - ll_c)
    if _accept(state, log_a, 'alloc_2'):
        state.move(i, target)


def _gibbs_step(state: ChainState, i: int):
    """全条件 Gibbs 分配（一个辅助新簇参数；单点簇时复用其自身参数）"""
    part, rng = state.partition, state.rng
    c = int(part.labels[i])
    singleton = part.size(c) == 1
    theta = state.params(c) if singleton else state.draw_new_theta()
    log_w = state.log_omega(i)
    members = part.members
    candidates, scores = [], []
    for h in range(part.k):
        if h == c:
            if singleton:
                continue
            rest = [r for r in members[c] if r != i]
            gain = state._ll_slot(members[c], c) - state._ll_slot(rest, c, stats=part.stats_with(c, i, -1))
        else:
            gain = (state._ll_slot(members[h] + [i], h, stats=part.stats_with(h, i, +1))
                    - state._ll_slot(members[h], h))
        candidates.append(h)
        scores.append(log_w[h] + gain)
    ll_new = state.cluster_ll([i], theta.mu, theta.sigma, theta.beta, stats=state._singleton_stats(i))
    candidates.append(-1)
    scores.append(state.log_new_weight(i) + ll_new)
    choice = candidates[_sample_log_weights(rng, np.array(scores))]
    if choice == -1:
        if singleton:
            state.metrics.record_proposal('alloc_gibbs', False)
            return
        state.move(i, part.k, theta)
    else:
        state.move(i, choice)
    state.metrics.record_proposal('alloc_gibbs', choice != c)


def update_allocations(state: ChainState) -> ChainState:
    """按随机排列逐个更新分配"""
    step = _gibbs_step if state.mcmc.allocation == 'gibbs' else _alg7_step
    for i in state.rng.permutation(state.dataset.m):
        step(state, int(i))
    return state


# ============================================================ scan + log posterior

def log_posterior(state: ChainState) -> float:
    """联合后验密度的对数（至分区归一化常数）"""
    part, model, b = state.partition, state.model, state.baseline
    k = part.k
    terms = [float(np.sum(log_cohesion(part.sizes(), model.M)))]
    if state.dataset.p:
        terms.append(float(np.sum(state.similarity.log_marginal(part.cnt[:k], part.s1[:k], part.s2[:k]))))
    for j in range(k):
        terms.append(state._ll_slot(part.members[j], j))
        terms.append(float(gaussian_logpdf(state.mu[j], b.mu0, b.sigma0 ** 2)))
        terms.append(-math.log(model.a_sigma))
        if state.active:
            terms.append(dl_logprior(state.beta[j], state.psi[j], state.phi[j], state.tau[j],
                                     state.sigma[j], model.tau0))
    terms.append(float(gaussian_logpdf(b.mu0, model.m0, model.v ** 2)))
    terms.append(-math.log(model.a_sigma0))
    return math.fsum(terms)


def scan(state: ChainState) -> ChainState:
    """一次完整扫描"""
    update_allocations(state)
    for j in range(state.k):
        update_mu_star(state, j)
        update_sigma_star(state, j)
        if state.active:
            update_beta_star(state, j)
            update_dl_hypers(state, j)
    update_baseline(state)
    state.iteration += 1
    if state.mcmc.debug_checks:
        state.partition.check_consistency()
    return state


def simulate_response(state: ChainState) -> np.ndarray:
    """给定当前分区与参数，从投影抽样模型生成新的响应"""
    y = np.empty(state.dataset.m)
    for j in range(state.k):
        rows = state.partition.members[j]
        shift, missvar = state.shift_var(rows, state.beta[j], j=j)
        sd = np.sqrt(state.sigma[j] ** 2 + missvar)
        y[rows] = state.mu[j] + shift + sd * state.rng.standard_normal(len(rows))
    return y


# ============================================================ posterior samples

@dataclass
class PosteriorSamples:
    """稀疏化后的后验抽样；标签按首次出现顺序规范化为 0..k-1"""
    labels: np.ndarray
    mu: List[np.ndarray]
    sigma: List[np.ndarray]
    beta: List[np.ndarray]
    tau: List[np.ndarray]
    mu0: np.ndarray
    sigma0: np.ndarray
    log_posterior: np.ndarray
    cocluster: np.ndarray
    chain: np.ndarray
    col_names: Sequence[str] = ()
    metrics: Dict[str, object] = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.labels.shape[0]

    @property
    def k(self) -> np.ndarray:
        return np.array([mu.size for mu in self.mu], dtype=np.int64)

    def cocluster_probability(self) -> np.ndarray:
        return self.cocluster / max(self.n_draws, 1)

    @classmethod
    def merge(cls, parts: Sequence['PosteriorSamples']) -> 'PosteriorSamples':
        """按链号顺序合并多条链"""
        parts = list(parts)
        return cls(
            labels=np.vstack([s.labels for s in parts]),
            mu=[a for s in parts for a in s.mu],
            sigma=[a for s in parts for a in s.sigma],
            beta=[a for s in parts for a in s.beta],
            tau=[a for s in parts for a in s.tau],
            mu0=np.concatenate([s.mu0 for s in parts]),
            sigma0=np.concatenate([s.sigma0 for s in parts]),
            log_posterior=np.concatenate([s.log_posterior for s in parts]),
            cocluster=sum(s.cocluster for s in parts),
            chain=np.concatenate([s.chain for s in parts]),
            col_names=parts[0].col_names,
            metrics={f"chain{n}": s.metrics for n, s in enumerate(parts)},
        )

    def to_frames(self) -> Dict[str, pd.DataFrame]:
        """samples / labels / trace / cocluster 四张表（标签对外从 1 开始）"""
        within = pd.Series(self.chain).groupby(self.chain).cumcount().to_numpy()
        rows = []
        beta_cols = [f"beta_{name}" for name in self.col_names]
        for d in range(self.n_draws):
            sizes = np.bincount(self.labels[d], minlength=self.mu[d].size)
            for j in range(self.mu[d].size):
                rows.append([int(self.chain[d]), int(within[d]), j + 1, int(sizes[j]),
                             self.mu[d][j], self.sigma[d][j], self.tau[d][j], *self.beta[d][j]])
        samples = pd.DataFrame(rows, columns=['chain', 'draw', 'cluster', 'size', 'mu', 'sigma', 'tau',
                                              *beta_cols])
        labels = pd.DataFrame(self.labels + 1, columns=[f"obs{i + 1}" for i in range(self.labels.shape[1])])
        labels.insert(0, 'draw', within)
        labels.insert(0, 'chain', self.chain)
        trace = pd.DataFrame({'chain': self.chain, 'draw': within, 'k': self.k, 'mu0': self.mu0,
                              'sigma0': self.sigma0, 'log_posterior': self.log_posterior})
        names = [f"obs{i + 1}" for i in range(self.cocluster.shape[0])]
        cocluster = pd.DataFrame(self.cocluster_probability(), columns=names)
        cocluster.insert(0, 'obs', names)
        return {'samples': samples, 'labels': labels, 'trace': trace, 'cocluster': cocluster}

    @classmethod
    def from_frames(cls, frames: Dict[str, pd.DataFrame], col_names: Sequence[str]) -> 'PosteriorSamples':
        trace, labels_frame, samples = frames['trace'], frames['labels'], frames['samples']
        labels = labels_frame.drop(columns=['chain', 'draw']).to_numpy(dtype=np.int64) - 1
        beta_cols = [f"beta_{name}" for name in col_names]
        grouped = {key: g for key, g in samples.groupby(['chain', 'draw'], sort=False)}
        mu, sigma, beta, tau = [], [], [], []
        for c, d in zip(trace['chain'], trace['draw']):
            g = grouped[(c, d)].sort_values('cluster')
            mu.append(g['mu'].to_numpy(dtype=float))
            sigma.append(g['sigma'].to_numpy(dtype=float))
            tau.append(g['tau'].to_numpy(dtype=float))
            beta.append(g[beta_cols].to_numpy(dtype=float).reshape(len(g), len(beta_cols)))
        m = labels.shape[1]
        co = np.zeros((m, m), dtype=np.int64)
        for row in labels:
            co += row[:, None] == row[None, :]
        return cls(labels=labels, mu=mu, sigma=sigma, beta=beta, tau=tau,
                   mu0=trace['mu0'].to_numpy(dtype=float), sigma0=trace['sigma0'].to_numpy(dtype=float),
                   log_posterior=trace['log_posterior'].to_numpy(dtype=float), cocluster=co,
                   chain=trace['chain'].to_numpy(dtype=np.int64), col_names=tuple(col_names))


class _Recorder:
    def __init__(self, m: int, chain: int, col_names):
        self.chain = chain
        self.col_names = tuple(col_names)
        self.labels, self.mu, self.sigma, self.beta, self.tau = [], [], [], [], []
        self.mu0, self.sigma0, self.log_post = [], [], []
        self.co = np.zeros((m, m), dtype=np.int64)

    def record(self, state: ChainState, log_post: float):
        labels = state.partition.labels
        _, first = np.unique(labels, return_index=True)
        order = np.argsort(first)
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        self.labels.append(rank[labels])
        self.mu.append(state.mu[order].copy())
        self.sigma.append(state.sigma[order].copy())
        self.beta.append(state.beta[order].copy())
        self.tau.append(state.tau[order].copy())
        self.mu0.append(state.baseline.mu0)
        self.sigma0.append(state.baseline.sigma0)
        self.log_post.append(log_post)
        self.co += labels[:, None] == labels[None, :]

    def result(self, metrics: Dict[str, object]) -> PosteriorSamples:
        n = len(self.labels)
        m = self.co.shape[0]
        return PosteriorSamples(
            labels=np.array(self.labels, dtype=np.int64).reshape(n, m), mu=self.mu, sigma=self.sigma,
            beta=self.beta, tau=self.tau, mu0=np.array(self.mu0), sigma0=np.array(self.sigma0),
            log_posterior=np.array(self.log_post), cocluster=self.co,
            chain=np.full(n, self.chain, dtype=np.int64), col_names=self.col_names, metrics=metrics,
        )


def initial_state(dataset: Dataset, model: ModelConfig, mcmc: McmcConfig, chain: int = 0,
                  similarity: Optional[SimilarityModel] = None) -> ChainState:
    rng = chain_rng(mcmc.seed, chain)
    return ChainState(dataset, model, mcmc, rng, similarity=similarity)


def run_chain(dataset: Dataset, model: ModelConfig, mcmc: McmcConfig, chain: int = 0,
              similarity: Optional[SimilarityModel] = None) -> PosteriorSamples:
    """运行一条链，返回保留的抽样

    同一种子与链号下结果逐位一致；对数后验非有限时以 SamplerError 终止并附诊断信息。
    """
    mcmc.validate()
    state = initial_state(dataset, model, mcmc, chain, similarity)
    recorder = _Recorder(dataset.m, chain, dataset.col_names)
    report_every = max(1, mcmc.n_iter // 10)
    with state.metrics.time_operation('chain') as timer:
        for it in range(mcmc.n_iter):
            scan(state)
            if it >= mcmc.n_burn and (it - mcmc.n_burn) % mcmc.thin == 0:
                lp = log_posterior(state)
                if not math.isfinite(lp):
                    raise SamplerError(f"第 {it} 次迭代对数后验非有限: {lp}", {
                        'iteration': it, 'chain': chain, 'k': state.k,
                        'sizes': state.partition.sizes().tolist(),
                        'mu0': state.baseline.mu0, 'sigma0': state.baseline.sigma0,
                        'sigma': state.sigma[:state.k].tolist(), 'tau': state.tau[:state.k].tolist(),
                    })
                recorder.record(state, lp)
            if (it + 1) % report_every == 0:
                logger.info("链 %d: 迭代 %d/%d, k=%d", chain, it + 1, mcmc.n_iter, state.k)
    snapshot = state.metrics.snapshot()
    snapshot['seconds'] = timer.elapsed
    metrics_logger.info("链 %d 接受率: %s", chain, snapshot['acceptance'])
    return recorder.result(snapshot)


def run_chain_task(task) -> PosteriorSamples:
    """进程池入口：task = (dataset, model, mcmc, chain)"""
    dataset, model, mcmc, chain = task
    return run_chain(dataset, model, mcmc, chain)
