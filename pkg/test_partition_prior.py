#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
分区先验测试：凝聚函数、相似度闭式解、分区先验与共聚类概率
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import gammaln

from vdlreg.core.config import SimilarityConfig
from vdlreg.core.data import Dataset
from vdlreg.services.similarity import (NormalNormal, NormalNormalInverseGamma, NormalScaledInvChi2,
                                        SimilarityModel, co_cluster_grid, co_cluster_probability,
                                        log_cohesion, log_partition_prior, log_similarity,
                                        log_similarity_ratio, make_family)

FAMILIES = [
    NormalNormal(mean0=0.3, var0=2.0, kernel_var=0.7),
    NormalNormalInverseGamma(mean0=-0.2, kappa=0.5, a=2.5, b=1.5),
    NormalScaledInvChi2(mu0=0.0, kappa=0.1, nu=4.0, s0sq=0.5),
]


# ============ 测试 1: 凝聚函数 ============

def test_log_cohesion():
    assert log_cohesion(1, 1.0) == 0.0
    assert log_cohesion(4, 1.0) == pytest.approx(math.log(6.0))
    assert log_cohesion(3, 2.0) == pytest.approx(math.log(2.0) + math.log(2.0))
    np.testing.assert_allclose(log_cohesion(np.array([1, 2, 3]), 1.0), [0.0, 0.0, math.log(2.0)])
    with pytest.raises(ValueError):
        log_cohesion(0, 1.0)
    with pytest.raises(ValueError):
        log_cohesion(2, 0.0)


# ============ 测试 2: 相似度闭式解 ============

def test_reference_values():
    assert log_similarity([0.0], make_family('nnsichi2')) == pytest.approx(-0.5703, abs=1e-3)
    assert log_similarity([0.0], make_family('nn')) == pytest.approx(-2.5480, abs=1e-3)
    for fam in FAMILIES:
        assert log_similarity([], fam) == 0.0


def test_nn_matches_quadrature():
    fam = FAMILIES[0]
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.normal(0.0, 1.5, size=rng.integers(1, 4))

        def integrand(t):
            return math.exp(np.sum(stats.norm.logpdf(x, t, math.sqrt(fam.kernel_var)))
                            + stats.norm.logpdf(t, fam.mean0, math.sqrt(fam.var0)))

        value, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13)
        assert log_similarity(x, fam) == pytest.approx(math.log(value), abs=1e-6)


def _log_norm(x, mean, var):
    return -0.5 * (math.log(2.0 * math.pi * var) + (x - mean) ** 2 / var)


def test_nnig_matches_quadrature():
    fam = FAMILIES[1]
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = rng.normal(0.0, 1.0, size=rng.integers(1, 4))
        n = x.size
        # t | s² 的条件后验中心，内层积分区间取 ±12 个标准差
        center = (fam.kappa * fam.mean0 + x.sum()) / (fam.kappa + n)

        def given_s2(s2):
            half = 12.0 * math.sqrt(s2 / (fam.kappa + n))

            def f(t):
                return math.exp(sum(_log_norm(v, t, s2) for v in x) + _log_norm(t, fam.mean0, s2 / fam.kappa))

            inner, _ = integrate.quad(f, center - half, center + half, epsabs=0.0, epsrel=1e-11, limit=200)
            log_ig = fam.a * math.log(fam.b) - gammaln(fam.a) - (fam.a + 1.0) * math.log(s2) - fam.b / s2
            return inner * math.exp(log_ig)

        head, _ = integrate.quad(given_s2, 0.0, 5.0, epsabs=0.0, epsrel=1e-10, limit=200)
        tail, _ = integrate.quad(given_s2, 5.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)
        assert log_similarity(x, fam) == pytest.approx(math.log(head + tail), abs=1e-6)


def test_nnig_singleton_is_student_t():
    fam = FAMILIES[1]
    scale = math.sqrt(fam.b * (fam.kappa + 1.0) / (fam.a * fam.kappa))
    for x in (-2.0, 0.0, 1.3):
        expected = stats.t.logpdf(x, 2.0 * fam.a, loc=fam.mean0, scale=scale)
        assert log_similarity([x], fam) == pytest.approx(expected, abs=1e-10)


def test_scaled_inv_chi2_is_nnig_reparametrization():
    chi2 = NormalScaledInvChi2(mu0=0.5, kappa=0.1, nu=10.0, s0sq=0.04)
    nnig = NormalNormalInverseGamma(mean0=0.5, kappa=0.1, a=5.0, b=0.2)
    x = np.array([0.1, 0.7, 0.4])
    assert log_similarity(x, chi2) == pytest.approx(log_similarity(x, nnig), abs=1e-12)
    with pytest.raises(ValueError):
        NormalScaledInvChi2(nu=0.0)


@pytest.mark.parametrize('fam', FAMILIES, ids=['nn', 'nnig', 'nnsichi2'])
def test_predictive_integrates_to_previous(fam):
    values = np.array([0.4, -0.3, 1.1])
    base = log_similarity(values, fam)

    def integrand(x):
        return math.exp(log_similarity(np.append(values, x), fam) - base)

    total, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-12, limit=200)
    assert total == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize('fam', FAMILIES, ids=['nn', 'nnig', 'nnsichi2'])
def test_permutation_invariance_and_ratio(fam):
    x = np.array([2.0, -1.0, 0.5, 0.25])
    assert log_similarity(x, fam) == log_similarity(x[::-1], fam)
    n, s1, s2 = 3, x[:3].sum(), (x[:3] ** 2).sum()
    ratio = log_similarity_ratio(n, s1, s2, x[3], fam)
    assert ratio == pytest.approx(log_similarity(x, fam) - log_similarity(x[:3], fam), abs=1e-10)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        log_similarity([1.0, np.nan], FAMILIES[0])
    with pytest.raises(ValueError):
        NormalNormal(var0=0.0)
    with pytest.raises(ValueError):
        make_family('gamma')


# ============ 测试 3: 相似度模型与分区先验 ============

def test_similarity_model_from_config_overrides():
    cfg = SimilarityConfig(family='nn', params={'mean0': 0.0, 'var0': 25.0, 'kernel_var': 1.0},
                           overrides={'x2': {'family': 'nnig', 'params': {'mean0': 0.0, 'kappa': 0.1,
                                                                           'a': 2.0, 'b': 1.0}}})
    sim = SimilarityModel.from_config(cfg, ('x1', 'x2', 'x3'))
    assert sim.p == 3
    assert isinstance(sim.families[1], NormalNormalInverseGamma)
    assert sim.families[0] is sim.families[2]
    n = np.array([2.0, 1.0, 0.0])
    s1 = np.array([1.0, 0.5, 0.0])
    s2 = np.array([0.7, 0.25, 0.0])
    cells = sim.log_marginal(n, s1, s2)
    assert cells[2] == 0.0
    assert cells[0] == pytest.approx(sim.families[0].log_marginal(2.0, 1.0, 0.7))
    assert cells[1] == pytest.approx(log_similarity([0.5], sim.families[1]))


def test_log_partition_prior_manual_sum():
    X = np.array([[0.0, 1.0], [0.5, np.nan], [3.0, 2.0]])
    ds = Dataset.from_arrays(np.zeros(3), X)
    fam = make_family('nnsichi2')
    sim = SimilarityModel.shared(fam, 2)
    got = log_partition_prior([0, 0, 1], ds, 2.0, sim)
    expected = (log_cohesion(2, 2.0) + log_similarity([0.0, 0.5], fam) + log_similarity([1.0], fam)
                + log_cohesion(1, 2.0) + log_similarity([3.0], fam) + log_similarity([2.0], fam))
    assert got == pytest.approx(expected, abs=1e-12)


# ============ 测试 4: 共聚类概率 ============

def test_co_cluster_both_missing_is_half():
    sim = SimilarityModel.shared(make_family('nn'), 2)
    none = np.zeros(2, dtype=bool)
    assert co_cluster_probability([1.0, 2.0], none, [-5.0, 3.0], none, 1.0, sim) == 0.5


def test_co_cluster_decreases_with_distance():
    sim = SimilarityModel.shared(make_family('nn'), 2)
    full = np.ones(2, dtype=bool)
    near = co_cluster_probability([0.0, 0.0], full, [0.1, 0.0], full, 1.0, sim)
    far = co_cluster_probability([0.0, 0.0], full, [3.0, 0.0], full, 1.0, sim)
    assert 0.0 < far < near < 1.0


def test_co_cluster_grid_layout():
    grid = np.linspace(-1.0, 1.0, 3)
    for name in ('nn', 'nnig'):
        frame = co_cluster_grid(grid, grid, 1.0, SimilarityModel.shared(make_family(name), 2))
        assert list(frame.columns) == ['x1', 'x2', 'prob_observed', 'prob_x2_missing', 'difference']
        assert len(frame) == 9
        assert frame['prob_observed'].between(0.0, 1.0).all()
        np.testing.assert_allclose(frame['difference'], frame['prob_observed'] - frame['prob_x2_missing'])
    with pytest.raises(ValueError):
        co_cluster_grid(grid, grid, 1.0, SimilarityModel.shared(make_family('nn'), 3))
