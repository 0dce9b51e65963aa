#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
模拟数据测试：Friedman、基准数据、筛查情景、示例数据与缺失生成
"""

import numpy as np
import pytest

from vdlreg.core.errors import DataError
from vdlreg.services.simgen import (SIM_KINDS, ampute_mcar, ampute_mnar, bench_data, friedman, friedman_mean,
                                    illustration_data, scenario_mean, screening_scenarios, simulate)


# ============ 测试 1: 生成器 ============

def test_friedman_shape_and_mean():
    sim = friedman(120, seed=1)
    ds = sim.dataset
    assert (ds.m, ds.p) == (120, 10)
    assert ds.mask.all()
    X = ds.raw_X()
    assert np.all((X >= 0.0) & (X < 1.0))
    resid = ds.raw_y() - friedman_mean(X)
    assert abs(resid.mean()) < 0.4 and 0.7 < resid.std() < 1.3
    assert friedman_mean([[0.5, 1.0, 0.5, 0.0, 0.0]])[0] == pytest.approx(10.0)


def test_generators_are_seeded():
    a = friedman(30, heteroscedastic=True, seed=7).dataset
    b = friedman(30, heteroscedastic=True, seed=7).dataset
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.y, friedman(30, seed=8).dataset.y)


def test_bench_data_layout():
    sim = bench_data('linear', 40, 3, seed=2)
    assert np.bincount(sim.labels).tolist() == [10, 10, 10, 10]
    assert sim.dataset.p == 3
    assert 0.05 < 1.0 - sim.dataset.mask.mean() < 0.4
    assert sim.truth['slopes'][0] == [1.0, 1.0, 0.0]
    assert sim.truth['slopes'][1] == [-1.0, -1.0, 0.0]
    step = bench_data('step', 40, 3, seed=2)
    assert np.all(np.array(step.truth['slopes']) == 0.0)
    with pytest.raises(DataError):
        bench_data('step', 42, 3)
    with pytest.raises(ValueError):
        bench_data('wave', 40, 3)


def test_screening_scenarios():
    sim = screening_scenarios(1, seed=0)
    assert sim.dataset.m == 200
    assert np.bincount(sim.labels).tolist() == [50, 50, 50, 50]
    x1 = sim.dataset.raw_X()[:, 0]
    assert x1[0] == -2.0 and x1[-1] == 2.0
    np.testing.assert_array_equal(scenario_mean(2, [0, 1, 2, 3], 0.0, 0.0, 0.0), [20.0, -20.0, 30.0, -30.0])
    assert scenario_mean(3, [0], 5.0, 1.0, 2.0)[0] == pytest.approx(1.0 + 10.0 + 1.0)
    with pytest.raises(ValueError):
        screening_scenarios(4)


def test_illustration_data():
    sim = illustration_data(seed=3)
    assert sim.dataset.m == 500
    assert np.bincount(sim.labels).tolist() == [167, 167, 166]
    assert 0.2 < 1.0 - sim.dataset.mask.mean() < 0.3


def test_simulate_dispatch():
    for kind in SIM_KINDS:
        sim = simulate(kind, m=40, p=2, seed=0)
        assert sim.dataset.m > 0
    with pytest.raises(ValueError):
        simulate('scenario9')


# ============ 测试 2: 缺失生成 ============

def test_mcar_rate_and_identity():
    ds = friedman(400, seed=4).dataset
    out = ampute_mcar(ds, 0.3, seed=1)
    assert 1.0 - out.mask.mean() == pytest.approx(0.3, abs=0.02)
    np.testing.assert_array_equal(out.y, ds.y)
    assert np.all(out.X[~out.mask] == 0.0)
    assert ampute_mcar(ds, 0.0, seed=1) is ds
    with pytest.raises(ValueError):
        ampute_mcar(ds, 1.0)


def test_mnar_zero_steepness_equals_mcar():
    ds = friedman(200, seed=5).dataset
    np.testing.assert_array_equal(ampute_mnar(ds, 0.2, steepness=0.0, seed=9).mask,
                                  ampute_mcar(ds, 0.2, seed=9).mask)
    with pytest.raises(ValueError):
        ampute_mnar(ds, 0.0)


def test_mnar_prefers_large_values():
    ds = friedman(2000, seed=6).dataset
    out = ampute_mnar(ds, 0.3, steepness=2.0, seed=2)
    assert 1.0 - out.mask.mean() == pytest.approx(0.3, abs=0.02)
    X = ds.raw_X()
    for l in range(ds.p):
        missing = ~out.mask[:, l]
        assert X[missing, l].mean() > X[~missing, l].mean()


def test_missingness_never_empties_a_column():
    out = ampute_mcar(friedman(40, seed=0).dataset, 0.5, seed=11)
    assert out.mask.any(axis=0).all()
    with pytest.raises(DataError):
        ampute_mcar(friedman(1, seed=0).dataset, 0.99, seed=11)
