#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MCMC 测试：分配链的精确枚举检验、Geweke 联合分布检验、VDReg 嵌套一致性与可复现性
"""

import math
from collections import Counter

import numpy as np
import pytest
from scipy.special import logsumexp

from vdlreg.core.config import McmcConfig, ModelConfig
from vdlreg.core.data import Dataset
from vdlreg.core.errors import SamplerError
from vdlreg.services import mcmc as mcmc_mod
from vdlreg.services.likelihood import Baseline, ClusterParams, cluster_loglik
from vdlreg.services.mcmc import (ChainState, PosteriorSamples, draw_prior_params, initial_state,
                                  log_posterior, run_chain, scan, simulate_response, update_allocations,
                                  update_dl_hypers)
from vdlreg.services.similarity import SimilarityModel, log_partition_prior
from vdlreg.services.simgen import bench_data


def set_partitions(m):
    """m 个元素的全部划分（受限增长串）"""
    out = []

    def grow(prefix, top):
        if len(prefix) == m:
            out.append(tuple(prefix))
            return
        for v in range(top + 2):
            grow(prefix + [v], max(top, v))

    grow([0], 0)
    return out


def canonical(labels):
    seen = {}
    return tuple(seen.setdefault(int(v), len(seen)) for v in labels)


# ============ 测试 1: 分配链 vs. 精确枚举 ============

def _oracle_setup():
    X = np.array([[-1.0, 0.5], [-0.8, np.nan], [1.0, -0.3], [1.2, 0.1]])
    ds = Dataset.from_arrays([0.2, 0.5, 1.5, 1.1], X)
    model = ModelConfig().resolve(ds.y)
    theta0 = ClusterParams(mu=0.8, sigma=0.7, beta=np.array([0.4, -0.3]), psi=np.full(2, 2.0),
                           phi=np.full(2, 0.5), tau=0.2)
    return ds, model, theta0


def _exact_posterior(ds, model, theta0):
    sim = SimilarityModel.from_config(model.similarity, ds.col_names)
    parts = set_partitions(ds.m)
    logp = []
    for labels in parts:
        lab = np.array(labels)
        lp = log_partition_prior(lab, ds, model.M, sim)
        for j in np.unique(lab):
            lp += cluster_loglik(np.flatnonzero(lab == j), theta0, ds, model.plugin_priors)
        logp.append(lp)
    logp = np.array(logp)
    return dict(zip(parts, np.exp(logp - logsumexp(logp))))


def _allocation_tv(allocation, n_scans, seed):
    """簇参数冻结为 θ0（新簇也取 θ0）时，分配链的分区频率与精确后验的全变差"""
    ds, model, theta0 = _oracle_setup()
    exact = _exact_posterior(ds, model, theta0)
    mcmc = McmcConfig(n_iter=n_scans, n_burn=0, seed=seed, allocation=allocation).validate()
    state = ChainState(ds, model, mcmc, np.random.default_rng(seed), theta_factory=lambda s: theta0)
    state.set_params(0, theta0)
    counts = Counter()
    for _ in range(n_scans):
        update_allocations(state)
        counts[canonical(state.partition.labels)] += 1
    assert set(counts) <= set(exact)
    return 0.5 * sum(abs(counts.get(part, 0) / n_scans - prob) for part, prob in exact.items())


def test_set_partitions_count():
    assert len(set_partitions(4)) == 15
    assert len(set_partitions(5)) == 52


@pytest.mark.parametrize('allocation', ['alg7', 'gibbs'])
def test_allocation_chain_matches_enumeration(allocation):
    assert _allocation_tv(allocation, 20_000, seed=3) < 0.06


@pytest.mark.slow
@pytest.mark.parametrize('allocation', ['alg7', 'gibbs'])
def test_allocation_chain_matches_enumeration_full(allocation):
    assert _allocation_tv(allocation, 200_000, seed=4) < 0.05


# ============ 测试 2: Geweke 联合分布检验 ============

GEWEKE_MODEL = dict(m0=0.0, v=1.0, a_sigma0=2.0, a_sigma=1.0, tau0=0.5)


def _geweke_data(m):
    rng = np.random.default_rng(21)
    X = rng.normal(size=(m, 2))
    X[1, 0] = np.nan
    X[5, 1] = np.nan
    return Dataset.from_arrays(np.zeros(m), X)


def _prior_expectations(ds, model):
    """先验下各监测量的期望；E[k] 由全部分区枚举得到"""
    sim = SimilarityModel.from_config(model.similarity, ds.col_names)
    parts = set_partitions(ds.m)
    logp = np.array([log_partition_prior(np.array(lab), ds, model.M, sim) for lab in parts])
    probs = np.exp(logp - logsumexp(logp))
    ks = np.array([max(lab) + 1 for lab in parts])
    p = ds.p
    alpha = 1.0 / p
    e_phi_sq = alpha * (1.0 - alpha) / 2.0 + alpha ** 2
    e_beta_sq = (model.a_sigma ** 2 / 3.0) * 2.0 * (2.0 * model.tau0) ** 2 * p * 2.0 * e_phi_sq
    return {
        'mu0': model.m0,
        'sigma0': model.a_sigma0 / 2.0,
        'k': float(probs @ ks),
        'sigma': model.a_sigma / 2.0,
        'tau': 2.0 * model.tau0,
        'beta_sq': e_beta_sq,
    }


def _functionals(state):
    k = state.k
    return {
        'mu0': state.baseline.mu0,
        'sigma0': state.baseline.sigma0,
        'k': float(k),
        'sigma': float(np.mean(state.sigma[:k])),
        'tau': float(np.mean(state.tau[:k])),
        'beta_sq': float(np.mean(np.sum(state.beta[:k] ** 2, axis=1))),
    }


def _geweke_z(n_iter, n_burn, seed, batches=20):
    ds = _geweke_data(8)
    model = ModelConfig(**GEWEKE_MODEL).validate()
    mcmc = McmcConfig(n_iter=n_iter, n_burn=0, seed=seed).validate()
    state = ChainState(ds, model, mcmc, np.random.default_rng(seed))
    state.set_response(simulate_response(state))
    trace = []
    for it in range(n_burn + n_iter):
        scan(state)
        state.set_response(simulate_response(state))
        if it >= n_burn:
            trace.append(_functionals(state))
    expected = _prior_expectations(ds, model)
    z = {}
    for name, target in expected.items():
        values = np.array([t[name] for t in trace])
        means = values[: len(values) // batches * batches].reshape(batches, -1).mean(axis=1)
        se = means.std(ddof=1) / math.sqrt(batches)
        z[name] = (values.mean() - target) / se
    return z


def test_geweke_reduced():
    z = _geweke_z(n_iter=4000, n_burn=300, seed=17)
    assert all(abs(v) < 5.0 for v in z.values()), z


@pytest.mark.slow
def test_geweke_full():
    z = _geweke_z(n_iter=100_000, n_burn=2000, seed=18, batches=50)
    assert all(abs(v) < 4.0 for v in z.values()), z


# ============ 测试 3: VDReg 嵌套 ============

def test_fixed_beta_reproduces_vdreg_bit_for_bit():
    ds = bench_data('step', 40, 3, seed=2).dataset.standardize()
    mcmc = McmcConfig(n_iter=60, n_burn=10, seed=5).validate()
    flat = run_chain(ds, ModelConfig(model='vdreg'), mcmc)
    fixed = run_chain(ds, ModelConfig(model='vdlreg', fix_beta=True), mcmc)
    np.testing.assert_array_equal(flat.labels, fixed.labels)
    for a, b in zip(flat.mu, fixed.mu):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(flat.log_posterior, fixed.log_posterior)
    assert all(np.all(b == 0.0) for b in fixed.beta)


def test_flat_prior_draw_skips_regression_terms():
    rng_a, rng_b = np.random.default_rng(1), np.random.default_rng(1)
    theta = draw_prior_params(rng_a, Baseline(0.0, 1.0), ModelConfig(model='vdreg').resolve([0.0, 1.0]), 3)
    np.testing.assert_array_equal(theta.beta, np.zeros(3))
    assert theta.tau == pytest.approx(0.2)
    rng_b.normal(0.0, 1.0)
    rng_b.uniform(0.0, 0.5)
    assert rng_a.random() == rng_b.random()


def test_prior_draw_moments():
    rng = np.random.default_rng(6)
    model = ModelConfig(tau0=0.25).resolve([0.0, 1.0])
    draws = [draw_prior_params(rng, Baseline(1.0, 0.5), model, 3) for _ in range(20_000)]
    taus = np.array([d.tau for d in draws])
    phis = np.array([d.phi for d in draws])
    sigmas = np.array([d.sigma for d in draws])
    np.testing.assert_allclose(phis.sum(axis=1), 1.0)
    assert taus.mean() == pytest.approx(0.5, abs=0.02)
    assert np.all((sigmas > 0) & (sigmas < model.a_sigma))
    assert np.mean([d.mu for d in draws]) == pytest.approx(1.0, abs=0.02)


# ============ 测试 4: 链运行与后验样本 ============

def _small_chain(**mcmc_kwargs):
    ds = bench_data('linear', 32, 2, seed=7).dataset.standardize()
    settings = dict(n_iter=40, n_burn=10, thin=3, seed=11)
    settings.update(mcmc_kwargs)
    mcmc = McmcConfig(**settings).validate()
    return ds, mcmc, run_chain(ds, ModelConfig(), mcmc)


def test_run_chain_is_deterministic():
    ds, mcmc, first = _small_chain()
    second = run_chain(ds, ModelConfig(), mcmc)
    np.testing.assert_array_equal(first.labels, second.labels)
    np.testing.assert_array_equal(first.log_posterior, second.log_posterior)
    for a, b in zip(first.beta, second.beta):
        np.testing.assert_array_equal(a, b)
    assert first.n_draws == mcmc.n_draws == 10
    assert np.all(np.isfinite(first.log_posterior))
    assert np.all(first.k >= 1)
    np.testing.assert_array_equal(np.diag(first.cocluster), np.full(ds.m, first.n_draws))
    rates = first.metrics['acceptance']
    assert rates and all(0.0 <= r <= 1.0 for r in rates.values())
    assert first.metrics['seconds'] >= 0.0


def test_labels_are_canonical():
    _, _, samples = _small_chain()
    for row in samples.labels:
        assert canonical(row) == tuple(row)
        assert row.max() + 1 == len(set(row.tolist()))


@pytest.mark.parametrize('options', [
    {'allocation': 'gibbs'},
    {'tau_update': 'slice'},
    {'init': 'random', 'init_clusters': 4},
    {'debug_checks': True},
])
def test_chain_variants_run(options):
    _, _, samples = _small_chain(**options)
    assert np.all(np.isfinite(samples.log_posterior))
    for tau in samples.tau:
        assert np.all(tau > 0)


def test_frames_round_trip_and_merge():
    ds, mcmc, first = _small_chain()
    second = run_chain(ds, ModelConfig(), mcmc, chain=1)
    merged = PosteriorSamples.merge([first, second])
    assert merged.n_draws == 20
    assert merged.chain.tolist() == [0] * 10 + [1] * 10
    assert set(merged.metrics) == {'chain0', 'chain1'}
    frames = merged.to_frames()
    assert list(frames['trace'].columns) == ['chain', 'draw', 'k', 'mu0', 'sigma0', 'log_posterior']
    assert frames['labels'].shape == (20, ds.m + 2)
    assert frames['labels']['draw'].tolist() == list(range(10)) * 2
    assert 'beta_x1' in frames['samples'].columns
    probs = frames['cocluster'].drop(columns='obs').to_numpy()
    np.testing.assert_allclose(np.diag(probs), 1.0)

    back = PosteriorSamples.from_frames(frames, ds.col_names)
    np.testing.assert_array_equal(back.labels, merged.labels)
    np.testing.assert_array_equal(back.cocluster, merged.cocluster)
    for a, b in zip(back.beta, merged.beta):
        np.testing.assert_array_equal(a, b)


def test_dl_update_stays_on_support():
    ds = bench_data('linear', 16, 3, seed=1).dataset.standardize()
    state = initial_state(ds, ModelConfig(), McmcConfig(seed=2).validate())
    state.beta[0] = np.array([0.5, 0.0, -1.5])
    for _ in range(50):
        psi, phi, tau = update_dl_hypers(state, 0)
        assert phi.sum() == pytest.approx(1.0)
        assert np.all(phi > 0) and np.all(psi > 0) and tau > 0
    assert math.isfinite(log_posterior(state))


def test_nan_acceptance_raises():
    ds = bench_data('step', 8, 1, seed=0).dataset
    state = initial_state(ds, ModelConfig(), McmcConfig(seed=0).validate())
    with pytest.raises(SamplerError):
        mcmc_mod._accept(state, float('nan'), 'alloc_2')
