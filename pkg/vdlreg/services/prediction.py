# -*- coding: utf-8 -*-
"""
预测模块

把查询点视为第 m+1 个观测：由凝聚函数与相似度比得到分配权重，
各已有簇给出投影后的高斯分量（plug-in 只用训练成员），新簇分量用先验 plug-in
与每个后验抽样各自新抽的簇参数。对所有后验抽样平均得到预测分布。

多个查询点彼此独立处理；输出换回原始尺度。
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.special import logsumexp, ndtr

from vdlreg.core.config import ModelConfig
from vdlreg.core.data import Dataset, QueryData
from vdlreg.core.partition import PluginPriors, plugin_stats
from vdlreg.services.likelihood import Baseline, ClusterParams, gaussian_logpdf
from vdlreg.services.mcmc import PosteriorSamples, draw_prior_params
from vdlreg.services.similarity import SimilarityModel

logger = logging.getLogger('vdlreg.prediction')

DEFAULT_QUANTILES = (0.025, 0.5, 0.975)


@dataclass
class PredictiveMixture:
    """高斯混合：权重、分量均值与方差"""
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights < 0):
            raise ValueError(f"混合权重不在单纯形上: 和为 {self.weights.sum()!r}")
        if np.any(self.variances <= 0):
            raise ValueError("分量方差必须 > 0")

    @property
    def sds(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide='ignore'):
            log_w = np.log(self.weights)
        comp = gaussian_logpdf(y[..., None], self.means, self.variances)
        return logsumexp(log_w + comp, axis=-1)

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.sum(self.weights * ndtr((y[..., None] - self.means) / self.sds), axis=-1)

    def mean(self) -> float:
        return float(self.weights @ self.means)

    def var(self) -> float:
        mean = self.mean()
        return float(self.weights @ (self.variances + self.means ** 2) - mean * mean)

    def quantile(self, prob: float) -> float:
        """CDF 求根；prob 必须位于 (0, 1)"""
        if not 0.0 < prob < 1.0:
            raise ValueError(f"分位点概率必须位于 (0, 1)，收到 {prob}")
        lo = float(np.min(self.means - 40.0 * self.sds))
        hi = float(np.max(self.means + 40.0 * self.sds))
        return brentq(lambda t: float(self.cdf(t)) - prob, lo, hi, xtol=1e-12, rtol=1e-12)

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        comps = rng.choice(self.weights.size, size=size, p=self.weights)
        return rng.normal(self.means[comps], self.sds[comps])

    @classmethod
    def average(cls, mixtures: Sequence['PredictiveMixture']) -> 'PredictiveMixture':
        """多个混合的等权平均（分量拼接，权重除以个数）"""
        weights = np.concatenate([mx.weights for mx in mixtures]) / len(mixtures)
        return cls(weights=weights / weights.sum(),
                   means=np.concatenate([mx.means for mx in mixtures]),
                   variances=np.concatenate([mx.variances for mx in mixtures]))


@dataclass
class DrawSnapshot:
    """单个后验抽样：簇大小、协变量充分统计量与簇参数"""
    sizes: np.ndarray
    cnt: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    beta: np.ndarray
    baseline: Baseline

    @property
    def k(self) -> int:
        return self.sizes.size

    @classmethod
    def from_labels(cls, dataset: Dataset, labels, mu, sigma, beta, baseline: Baseline) -> 'DrawSnapshot':
        labels = np.asarray(labels, dtype=np.int64)
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        k, m = mu.size, dataset.m
        onehot = np.zeros((k, m))
        onehot[labels, np.arange(m)] = 1.0
        return cls(sizes=onehot.sum(axis=1), cnt=onehot @ dataset.mask.astype(float),
                   s1=onehot @ dataset.X, s2=onehot @ (dataset.X * dataset.X),
                   mu=mu, sigma=np.atleast_1d(np.asarray(sigma, dtype=float)),
                   beta=np.asarray(beta, dtype=float).reshape(k, dataset.p), baseline=baseline)

    @classmethod
    def empty(cls, p: int, baseline: Baseline) -> 'DrawSnapshot':
        """m = 0：只有新簇"""
        zeros = np.zeros((0, p))
        return cls(sizes=np.zeros(0), cnt=zeros, s1=zeros, s2=zeros, mu=np.zeros(0),
                   sigma=np.zeros(0), beta=zeros, baseline=baseline)


def predictive_weights(x, observed, snapshot: DrawSnapshot, M: float,
                       similarity: SimilarityModel) -> np.ndarray:
    """分配权重 w（长度 k+1，最后一个为新簇），在对数空间归一化"""
    x = np.asarray(x, dtype=float)
    cols = np.flatnonzero(np.asarray(observed, dtype=bool))
    xo = x[cols]
    with np.errstate(divide='ignore'):
        log_w = np.log(snapshot.sizes)
    if cols.size and snapshot.k:
        n, s1, s2 = snapshot.cnt[:, cols], snapshot.s1[:, cols], snapshot.s2[:, cols]
        ratio = similarity.log_marginal_cols(cols, n + 1.0, s1 + xo, s2 + xo * xo) \
            - similarity.log_marginal_cols(cols, n, s1, s2)
        log_w = log_w + ratio.sum(axis=1)
    log_new = math.log(M) + similarity.log_singleton(xo, cols)
    log_w = np.append(log_w, log_new)
    return np.exp(log_w - logsumexp(log_w))


def predictive_mixture(x, observed, snapshot: DrawSnapshot, theta_new: ClusterParams, M: float,
                       similarity: SimilarityModel, priors: PluginPriors,
                       include_query: bool = False) -> PredictiveMixture:
    """单个后验抽样下的预测混合

    分量 j：均值 μ*_j + Σ_obs β*_jl z_l，方差 σ*_j² + Σ_miss β*_jl²。
    z 用训练成员的 plug-in；include_query 为真时 plug-in 也包含查询点本身。
    """
    x = np.asarray(x, dtype=float)
    observed = np.asarray(observed, dtype=bool)
    obs = observed.astype(float)
    xo = np.where(observed, x, 0.0)
    weights = predictive_weights(x, observed, snapshot, M, similarity)

    cnt, s1, s2 = snapshot.cnt, snapshot.s1, snapshot.s2
    new_stats = (np.zeros_like(obs), np.zeros_like(xo), np.zeros_like(xo))
    if include_query:
        cnt, s1, s2 = cnt + obs, s1 + xo, s2 + xo * xo
        new_stats = (obs, xo, xo * xo)
    mu_hat, s2_hat = plugin_stats(cnt, s1, s2, priors)
    new_mu_hat, new_s2_hat = plugin_stats(*new_stats, priors)

    p = x.size
    mu_hat = np.vstack([np.reshape(mu_hat, (snapshot.k, p)), np.reshape(new_mu_hat, (1, p))])
    s2_hat = np.vstack([np.reshape(s2_hat, (snapshot.k, p)), np.reshape(new_s2_hat, (1, p))])
    beta = np.vstack([np.reshape(snapshot.beta, (snapshot.k, p)), np.reshape(theta_new.beta, (1, p))])
    mu = np.append(snapshot.mu, theta_new.mu)
    sigma = np.append(snapshot.sigma, theta_new.sigma)

    z = np.where(observed, (xo - mu_hat) / np.sqrt(s2_hat), 0.0)
    means = mu + np.sum(z * beta, axis=1)
    variances = sigma * sigma + (beta * beta) @ (~observed).astype(float)
    return PredictiveMixture(weights=weights, means=means, variances=variances)


def predictive_mean(mixture: PredictiveMixture) -> float:
    """Σ_j w_j · mean_j"""
    return mixture.mean()


@dataclass
class PointPrediction:
    """单个查询点：逐抽样混合 + 平均混合"""
    per_draw: List[PredictiveMixture]
    averaged: PredictiveMixture

    def mean_log_density(self, y: float) -> float:
        """逐抽样对数预测密度的后验均值"""
        return math.fsum(float(mx.logpdf(y)) for mx in self.per_draw) / len(self.per_draw)


def point_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


class PosteriorPredictor:
    """后验预测器：对 PosteriorSamples 只读"""

    def __init__(self, samples: PosteriorSamples, dataset: Dataset, model: ModelConfig,
                 similarity: Optional[SimilarityModel] = None, include_query: bool = False):
        if samples.n_draws == 0:
            raise ValueError("后验抽样为空")
        if not model.is_resolved:
            model = model.resolve(dataset.y)
        self.dataset = dataset
        self.model = model
        self.similarity = similarity or SimilarityModel.from_config(model.similarity, dataset.col_names)
        self.include_query = include_query
        self.snapshots = [
            DrawSnapshot.from_labels(dataset, samples.labels[d], samples.mu[d], samples.sigma[d],
                                     samples.beta[d], Baseline(float(samples.mu0[d]), float(samples.sigma0[d])))
            for d in range(samples.n_draws)
        ]

    @property
    def n_draws(self) -> int:
        return len(self.snapshots)

    def point(self, x, observed, rng: np.random.Generator) -> PointPrediction:
        """每个后验抽样各抽一次新簇参数"""
        p, model = self.dataset.p, self.model
        per_draw = []
        for snap in self.snapshots:
            theta = draw_prior_params(rng, snap.baseline, model, p)
            per_draw.append(predictive_mixture(x, observed, snap, theta, model.M, self.similarity,
                                               model.plugin_priors, self.include_query))
        return PointPrediction(per_draw=per_draw, averaged=PredictiveMixture.average(per_draw))

    def predict_frame(self, query: QueryData, seed: int = 0,
                      quantiles: Sequence[float] = DEFAULT_QUANTILES, start: int = 0) -> pd.DataFrame:
        """逐点输出原始尺度的均值、标准差、分位数；给出 y 时加上对数密度与分位残差

        start 为第一个查询点的全局下标（分块并行时保持随机数流不变）。
        """
        d = self.dataset
        log_scale = math.log(d.y_scale)
        rows = []
        for t in range(query.n):
            pred = self.point(query.X[t], query.mask[t], point_rng(seed, start + t))
            mx = pred.averaged
            row = {'point': start + t + 1,
                   'mean': float(d.raw_y(predictive_mean(mx))),
                   'sd': math.sqrt(max(mx.var(), 0.0)) * d.y_scale}
            for prob in quantiles:
                row[f"q{prob:g}"] = float(d.raw_y(mx.quantile(prob)))
            if query.y is not None:
                y = float(query.y[t])
                row['y'] = float(d.raw_y(y))
                row['log_density'] = pred.mean_log_density(y) - log_scale
                row['quantile_residual'] = float(mx.cdf(y))
            rows.append(row)
        return pd.DataFrame(rows)

    def density_grid(self, query: QueryData, y_grid_raw, seed: int = 0) -> pd.DataFrame:
        """平均预测密度在原始尺度 y 网格上的取值"""
        d = self.dataset
        y_grid_raw = np.asarray(y_grid_raw, dtype=float)
        y_grid = d.transform_y(y_grid_raw)
        frames = []
        for t in range(query.n):
            pred = self.point(query.X[t], query.mask[t], point_rng(seed, t))
            frames.append(pd.DataFrame({'point': t + 1, 'y': y_grid_raw,
                                        'density': pred.averaged.pdf(y_grid) / d.y_scale}))
        return pd.concat(frames, ignore_index=True)


def sample_predictive(x, observed, predictor: PosteriorPredictor, n_draws: int = 1,
                      seed: int = 0) -> np.ndarray:
    """每个后验抽样：新抽新簇参数，按 w 抽分配，再从对应分量抽 y（内部尺度）

    返回长度 n_draws × 后验抽样数 的数组。
    """
    rng = np.random.default_rng(seed)
    model, p = predictor.model, predictor.dataset.p
    out = []
    for snap in predictor.snapshots:
        theta = draw_prior_params(rng, snap.baseline, model, p)
        mx = predictive_mixture(x, observed, snap, theta, model.M, predictor.similarity,
                                model.plugin_priors, predictor.include_query)
        out.append(mx.sample(rng, n_draws))
    return np.concatenate(out)


def quantile_residual(y_obs: float, x, observed, predictor: PosteriorPredictor, seed: int = 0) -> float:
    """后验平均预测 CDF 在 y_obs 处的值（内部尺度）"""
    pred = predictor.point(x, observed, np.random.default_rng(seed))
    return float(pred.averaged.cdf(y_obs))


def predict_task(task) -> pd.DataFrame:
    """进程池入口：task = (predictor, query, seed, quantiles, start)"""
    predictor, query, seed, quantiles, start = task
    return predictor.predict_frame(query, seed=seed, quantiles=quantiles, start=start)
