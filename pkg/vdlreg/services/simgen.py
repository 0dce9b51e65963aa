# -*- coding: utf-8 -*-
"""
模拟数据模块

Friedman 函数数据、阶梯/分段线性基准数据、三个筛查情景、三簇示例数据，
以及 MCAR / MNAR 缺失生成。所有生成器都由种子决定，同一种子逐位一致。
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from vdlreg.core.data import Dataset
from vdlreg.core.errors import DataError

logger = logging.getLogger('vdlreg.simgen')

FRIEDMAN_P = 10
BENCH_CENTERS = np.array([-3.0, -1.0, 1.0, 3.0])
BENCH_MISSING = 0.2
SCENARIO_M = 200
SCENARIO_SD = {1: (10.0, 6.0, 10.0, 8.0), 2: (10.0, 6.0, 10.0, 8.0), 3: (10.0, 8.0, 10.0, 8.0)}
ILLUSTRATION_SIZES = (167, 167, 166)
ILLUSTRATION_MEANS = np.array([[0.0, 0.0], [-3.0, -1.5], [1.0, 3.0]])
ILLUSTRATION_MU = np.array([1.5, 2.5, -5.0])
ILLUSTRATION_BETA = np.array([[-0.9, 2.0], [-0.3, -1.0], [0.7, 0.0]])
ILLUSTRATION_SIGMA = np.array([1.2, 0.5, 0.8])
ILLUSTRATION_MISSING = 0.25


@dataclass(frozen=True, eq=False)
class SimulatedData:
    """模拟数据集 + 真实簇标签（若有）+ 生成参数"""
    dataset: Dataset
    labels: Optional[np.ndarray] = None
    truth: Dict[str, Any] = field(default_factory=dict)


def friedman_mean(X) -> np.ndarray:
    """f(x) = 10 sin(π x1 x2) + 20 (x3 - 0.5)² + 10 x4 + 5 x5"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20.0 * (X[:, 2] - 0.5) ** 2
            + 10.0 * X[:, 3] + 5.0 * X[:, 4])


def friedman(m: int, heteroscedastic: bool = False, seed=0) -> SimulatedData:
    """p = 10 个 U(0,1) 协变量，后五个为噪声；异方差时 ε ~ N(0, exp(x1))"""
    if m < 1:
        raise DataError("m 必须 >= 1")
    rng = np.random.default_rng(seed)
    X = rng.random((m, FRIEDMAN_P))
    eps = rng.standard_normal(m)
    if heteroscedastic:
        eps = eps * np.sqrt(np.exp(X[:, 0]))
    y = friedman_mean(X) + eps
    return SimulatedData(dataset=Dataset.from_arrays(y, X),
                         truth={'kind': 'friedman', 'heteroscedastic': heteroscedastic})


def _guard_columns(miss: np.ndarray, mask: np.ndarray, redraw) -> np.ndarray:
    """保证每列至少一个观测：整列缺失时重抽一次，仍缺失则报错"""
    for l in range(mask.shape[1]):
        if not np.any(mask[:, l] & ~miss[:, l]):
            miss[:, l] = redraw(l)
            if not np.any(mask[:, l] & ~miss[:, l]):
                raise DataError(f"缺失生成后第 {l + 1} 列全部缺失")
    return miss


def ampute_mcar(dataset: Dataset, rate: float, seed=0) -> Dataset:
    """每个协变量项以概率 rate 独立缺失；响应不受影响"""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"缺失率必须位于 [0, 1)，收到 {rate}")
    if rate == 0.0:
        return dataset
    rng = np.random.default_rng(seed)
    m, p = dataset.m, dataset.p
    miss = rng.random((m, p)) < rate
    miss = _guard_columns(miss, dataset.mask, lambda l: rng.random(m) < rate)
    return dataset.with_mask(~miss)


def _column_intercept(x_std: np.ndarray, rate: float, steepness: float) -> float:
    def gap(alpha):
        return float(np.mean(expit(alpha + steepness * x_std))) - rate
    try:
        return brentq(gap, -50.0, 50.0, xtol=1e-12)
    except ValueError as e:
        raise DataError(f"MNAR 截距求解失败（steepness={steepness}）: {e}") from e


def ampute_mnar(dataset: Dataset, rate: float, steepness: float = 2.0, seed=0) -> Dataset:
    """项 (i, l) 以 logistic(α_l + steepness · x_std) 的概率缺失

    α_l 按列求根，使期望缺失比例等于 rate；steepness = 0 时与同种子的 MCAR 完全相同。
    """
    if not 0.0 < rate < 1.0:
        raise ValueError(f"缺失率必须位于 (0, 1)，收到 {rate}")
    rng = np.random.default_rng(seed)
    m, p = dataset.m, dataset.p
    prob = np.full((m, p), rate)
    if steepness != 0.0:
        X = dataset.raw_X()
        for l in range(p):
            obs = dataset.mask[:, l]
            values = X[obs, l]
            sd = values.std(ddof=1) if values.size > 1 else 1.0
            x_std = (values - values.mean()) / (sd if sd > 0 else 1.0)
            alpha = _column_intercept(x_std, rate, steepness)
            prob[obs, l] = expit(alpha + steepness * x_std)
    miss = rng.random((m, p)) < prob
    miss = _guard_columns(miss, dataset.mask, lambda l: rng.random(m) < prob[:, l])
    return dataset.with_mask(~miss)


def bench_data(kind: str, m: int, p: int, seed=0, slope: float = 1.0,
               missing_rate: float = BENCH_MISSING) -> SimulatedData:
    """4 个等大的簇，协变量均值 (-3, -1, 1, 3)

    step：簇内常数均值 (-3, -1, 1, 3)；linear：另加前 min(2, p) 个协变量上 ±slope 的斜率
    （按簇奇偶交替）。噪声为单位方差，最后施加 20% MCAR。
    """
    if kind not in ('step', 'linear'):
        raise ValueError(f"未知基准数据类型 {kind!r}")
    if m % 4 != 0 or m < 4:
        raise DataError(f"m={m} 不能均分为 4 个簇")
    if p < 1:
        raise DataError("p 必须 >= 1")
    rng = np.random.default_rng(seed)
    groups = np.repeat(np.arange(4), m // 4)
    centers = BENCH_CENTERS[groups]
    X = centers[:, None] + rng.standard_normal((m, p))
    slopes = np.zeros((4, p))
    if kind == 'linear':
        sign = np.where(np.arange(4) % 2 == 0, 1.0, -1.0)
        slopes[:, :min(2, p)] = slope * sign[:, None]
    y = BENCH_CENTERS[groups] + np.sum(slopes[groups] * (X - centers[:, None]), axis=1) \
        + rng.standard_normal(m)
    dataset = ampute_mcar(Dataset.from_arrays(y, X), missing_rate, rng)
    return SimulatedData(dataset=dataset, labels=groups,
                         truth={'kind': kind, 'means': BENCH_CENTERS.tolist(), 'slopes': slopes.tolist(),
                                'missing_rate': missing_rate})


def scenario_mean(scenario: int, group, x1, x2, x3):
    """筛查情景的簇均值函数"""
    group = np.asarray(group)
    if scenario == 2:
        return np.array([20.0, -20.0, 30.0, -30.0])[group] + 0.0 * np.asarray(x1)
    a, b = (x1, x2) if scenario == 1 else (x2, x3)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    means = [1.0 + 10.0 * a ** 2 + 0.5 * b,
             2.0 + 10.0 * a ** 2 - b,
             -1.0 - 20.0 * a ** 2 + 2.0 * b,
             -2.0 + 20.0 * a ** 2 - 2.0 * b]
    return np.choose(group, means)


def screening_scenarios(scenario: int, seed=0) -> SimulatedData:
    """n = 200；x1 在 [-2, 2] 等距，按子区间分 4 簇；x2 ~ U(-3, 3)，x3 ~ U(0, 1)"""
    if scenario not in SCENARIO_SD:
        raise ValueError(f"情景必须为 1/2/3，收到 {scenario}")
    rng = np.random.default_rng(seed)
    x1 = np.linspace(-2.0, 2.0, SCENARIO_M)
    groups = np.digitize(x1, [-1.0, 0.0, 1.0])
    x2 = rng.uniform(-3.0, 3.0, SCENARIO_M)
    x3 = rng.random(SCENARIO_M)
    sd = np.array(SCENARIO_SD[scenario])[groups]
    y = scenario_mean(scenario, groups, x1, x2, x3) + sd * rng.standard_normal(SCENARIO_M)
    dataset = Dataset.from_arrays(y, np.column_stack([x1, x2, x3]))
    return SimulatedData(dataset=dataset, labels=groups,
                         truth={'kind': f'scenario{scenario}', 'sd': list(SCENARIO_SD[scenario])})


def illustration_data(seed=0) -> SimulatedData:
    """三簇示例：m = 500，中心化协变量的局部线性响应，25% MCAR"""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(3), ILLUSTRATION_SIZES)
    m = labels.size
    centers = ILLUSTRATION_MEANS[labels]
    X = centers + rng.standard_normal((m, 2))
    z = X - centers
    y = ILLUSTRATION_MU[labels] + np.sum(ILLUSTRATION_BETA[labels] * z, axis=1) \
        + ILLUSTRATION_SIGMA[labels] * rng.standard_normal(m)
    dataset = ampute_mcar(Dataset.from_arrays(y, X), ILLUSTRATION_MISSING, rng)
    return SimulatedData(dataset=dataset, labels=labels, truth={
        'kind': 'illustration', 'means': ILLUSTRATION_MEANS.tolist(), 'mu': ILLUSTRATION_MU.tolist(),
        'beta': ILLUSTRATION_BETA.tolist(), 'sigma': ILLUSTRATION_SIGMA.tolist(),
        'missing_rate': ILLUSTRATION_MISSING})


SIM_KINDS = ('friedman', 'bench-step', 'bench-linear', 'scenario1', 'scenario2', 'scenario3',
             'illustration')


def simulate(kind: str, m: int = 100, p: int = 5, seed=0, heteroscedastic: bool = False) -> SimulatedData:
    """按名称生成（simulate 命令使用）"""
    if kind == 'friedman':
        return friedman(m, heteroscedastic=heteroscedastic, seed=seed)
    if kind in ('bench-step', 'bench-linear'):
        return bench_data(kind.split('-', 1)[1], m, p, seed=seed)
    if kind.startswith('scenario') and kind in SIM_KINDS:
        return screening_scenarios(int(kind[-1]), seed=seed)
    if kind == 'illustration':
        return illustration_data(seed=seed)
    raise ValueError(f"未知模拟类型 {kind!r}，可选 {SIM_KINDS}")
