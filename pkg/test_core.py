#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
vdlreg 核心层测试：配置管理、数据模型、分区状态、监控指标、进程池
"""

import os

import numpy as np
import pytest

from vdlreg.core.config import (ConfigManager, McmcConfig, ModelConfig, SimilarityConfig,
                                config_to_dict, model_config_from_dict)
from vdlreg.core.data import (Dataset, dataset_from_internal, internal_frame, load_dataset, load_query,
                              standardization_meta)
from vdlreg.core.errors import ConfigError, DataError, SchemaError, StateError, UserError, InternalError
from vdlreg.core.metrics import MetricsCollector
from vdlreg.core.partition import PartitionState, PluginPriors, plugin_stats
from vdlreg.infrastructure.artifacts import write_csv
from vdlreg.infrastructure.worker_pool import WorkerPool

TRAIN_CSV = """y,x1,x2
1.5,0.2,NA
2.0,0.4,3.0
-0.5,NA,1.0
3.5,1.2,2.5
0.0,0.9,0.5
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return str(path)


# ============ 测试 1: 配置文件管理器 ============

def test_config_defaults():
    cfg = ConfigManager()
    model = cfg.model_config()
    assert model.model == 'vdlreg'
    assert model.a_sigma == 0.5
    assert model.tau0 == 0.1
    assert model.similarity.family == 'nnsichi2'
    assert model.similarity.params == {'mu0': 0.0, 'kappa': 0.1, 'nu': 4.0, 's0sq': 0.04}
    assert not model.is_resolved
    mcmc = cfg.mcmc_config()
    assert mcmc.allocation == 'alg7'
    assert mcmc.tau_update == 'gig'
    assert cfg.run_config().n_chains == 1
    assert cfg.data_config().path is None


def test_config_file_overrides(tmp_path):
    path = _write(tmp_path, 'run.ini', """[model]
model = vdreg
M = 2.5
m0 = 1.0

[similarity]
family = nn
var0 = 4

[similarity.x2]
family = nnig
a = 3

[mcmc]
n_iter = 200
n_burn = 50
thin = 3
""")
    cfg = ConfigManager(path)
    model = cfg.model_config()
    assert model.model == 'vdreg'
    assert model.M == 2.5
    assert model.m0 == 1.0 and model.v is None
    assert model.similarity.family == 'nn'
    assert model.similarity.params['var0'] == 4.0
    assert model.similarity.overrides['x2']['family'] == 'nnig'
    assert model.similarity.overrides['x2']['params']['a'] == 3.0
    assert model.similarity.overrides['x2']['params']['b'] == 1.0
    mcmc = cfg.mcmc_config()
    assert mcmc.n_draws == 50


def test_config_validation_reports_field(tmp_path):
    path = _write(tmp_path, 'bad.ini', "[mcmc]\nthin = 0\n")
    with pytest.raises(ConfigError) as exc:
        ConfigManager(path).mcmc_config()
    assert exc.value.field == 'mcmc.thin'
    assert str(exc.value).startswith('mcmc.thin')

    path = _write(tmp_path, 'bad2.ini', "[model]\ntau0 = abc\n")
    with pytest.raises(ConfigError):
        ConfigManager(path).model_config()

    with pytest.raises(ConfigError):
        ConfigManager(str(tmp_path / 'missing.ini'))

    with pytest.raises(ConfigError):
        McmcConfig(n_iter=10, n_burn=10).validate()


def test_config_set_and_pooled_scope():
    cfg = ConfigManager()
    cfg.set('data', 'standardize_scope', 'pooled')
    with pytest.raises(ConfigError):
        cfg.data_config()
    cfg.set('data', 'pooled_with', 'test.csv')
    assert cfg.data_config().pooled_with == 'test.csv'
    cfg.set('mcmc', 'debug_checks', True)
    assert cfg.mcmc_config().debug_checks is True


def test_model_resolve_and_round_trip():
    y = np.array([1.0, 2.0, 3.0, 6.0])
    model = ModelConfig(similarity=SimilarityConfig('nn', {'mean0': 0.0, 'var0': 25.0, 'kernel_var': 1.0}))
    resolved = model.resolve(y)
    sd = np.std(y, ddof=1)
    assert resolved.m0 == pytest.approx(3.0)
    assert resolved.v == pytest.approx(2.0 * sd)
    assert resolved.a_sigma0 == pytest.approx(5.0 * sd)
    assert resolved.is_resolved

    restored = model_config_from_dict(config_to_dict(resolved)['model'])
    assert restored == resolved
    assert restored.regression_active
    assert not ModelConfig(model='vdreg').regression_active
    assert not ModelConfig(fix_beta=True).regression_active


def test_error_hierarchy():
    assert issubclass(DataError, UserError)
    assert issubclass(SchemaError, UserError)
    assert issubclass(ConfigError, UserError)
    assert issubclass(StateError, InternalError)
    assert not issubclass(StateError, UserError)


# ============ 测试 2: 数据读取与标准化 ============

def test_load_dataset_mask_and_standardization(tmp_path):
    path = _write(tmp_path, 'train.csv', TRAIN_CSV)
    ds = load_dataset(path)
    assert (ds.m, ds.p) == (5, 2)
    assert ds.col_names == ('x1', 'x2')
    assert ds.mask.tolist() == [[True, False], [True, True], [False, True], [True, True], [True, True]]
    assert np.all(ds.X[~ds.mask] == 0.0)
    assert ds.standardized
    assert np.mean(ds.y) == pytest.approx(0.0, abs=1e-12)
    assert np.std(ds.y, ddof=1) == pytest.approx(1.0)
    obs = ds.X[ds.mask[:, 0], 0]
    assert np.mean(obs) == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(ds.raw_y(), [1.5, 2.0, -0.5, 3.5, 0.0])
    np.testing.assert_array_equal(ds.observed(0), [0])
    assert [p.tolist() for p in ds.patterns] == [[0], [0, 1], [1], [0, 1], [0, 1]]


def test_load_dataset_errors(tmp_path):
    with pytest.raises(DataError):
        load_dataset(_write(tmp_path, 'a.csv', "y,x1\nNA,1.0\n2.0,3.0\n"))
    with pytest.raises(DataError):
        load_dataset(_write(tmp_path, 'b.csv', "y,x1\n1.0,NA\n2.0,NA\n"))
    with pytest.raises(DataError):
        load_dataset(_write(tmp_path, 'c.csv', "y,x1\n1.0,abc\n2.0,3.0\n"))
    with pytest.raises(DataError):
        load_dataset(_write(tmp_path, 'd.csv', "z,x1\n1.0,1.0\n"))
    with pytest.raises(DataError):
        load_dataset(str(tmp_path / 'nope.csv'))


def test_custom_missing_token(tmp_path):
    path = _write(tmp_path, 'dot.csv', "y,x1\n1.0,.\n2.0,3.0\n4.0,5.0\n")
    ds = load_dataset(path, missing_token='.', standardize=False)
    assert ds.mask[:, 0].tolist() == [False, True, True]


def test_load_query_uses_training_scale(tmp_path):
    ds = load_dataset(_write(tmp_path, 'train.csv', TRAIN_CSV))
    query = load_query(_write(tmp_path, 'q.csv', "x2,x1\n3.0,0.4\nNA,1.2\n"), ds)
    assert query.y is None
    assert query.n == 2
    np.testing.assert_allclose(query.X[0], ds.X[1])
    assert query.mask[1].tolist() == [True, False]
    with pytest.raises(SchemaError):
        load_query(_write(tmp_path, 'q2.csv', "x1\n0.4\n"), ds)


def test_pooled_standardization(tmp_path):
    train = _write(tmp_path, 'train.csv', TRAIN_CSV)
    other = _write(tmp_path, 'other.csv', "y,x1,x2\n10.0,5.0,5.0\n")
    pooled = load_dataset(train, pooled_with=other)
    alone = load_dataset(train)
    assert pooled.y_center > alone.y_center
    np.testing.assert_allclose(pooled.raw_y(), alone.raw_y())


def test_internal_frame_round_trip(tmp_path):
    ds = load_dataset(_write(tmp_path, 'train.csv', TRAIN_CSV))
    path = str(tmp_path / 'internal.csv')
    write_csv(internal_frame(ds), path)
    back = dataset_from_internal(path, standardization_meta(ds))
    np.testing.assert_array_equal(back.mask, ds.mask)
    np.testing.assert_allclose(back.X, ds.X, rtol=0, atol=1e-15)
    np.testing.assert_allclose(back.y, ds.y, rtol=0, atol=1e-15)
    assert back.y_scale == ds.y_scale
    meta = standardization_meta(ds)
    meta['columns'] = ['x1', 'other']
    with pytest.raises(SchemaError):
        dataset_from_internal(path, meta)


def test_standardize_copy_and_with_mask():
    raw = Dataset.from_arrays([1.0, 2.0, 4.0], [[1.0], [np.nan], [3.0]])
    assert raw.mask[:, 0].tolist() == [True, False, True]
    std = raw.standardize()
    assert std.standardized
    np.testing.assert_allclose(std.raw_y(), raw.y)
    np.testing.assert_allclose(std.raw_X()[[0, 2]], raw.raw_X()[[0, 2]])
    thinned = raw.with_mask(np.array([[False], [True], [True]]))
    assert thinned.mask[:, 0].tolist() == [False, False, True]
    assert thinned.X[0, 0] == 0.0


# ============ 测试 3: 分区状态 ============

def _partition_data():
    X = np.array([[0.0, 1.0], [1.0, np.nan], [2.0, 3.0], [np.nan, 4.0], [5.0, 0.5]])
    return Dataset.from_arrays(np.arange(5.0), X)


def test_plugin_stats_formula():
    priors = PluginPriors(mu0_x=0.5, s0sq_x=2.0, nu=1.0, nu_s=3.0)
    assert plugin_stats(0, 0.0, 0.0, priors) == pytest.approx((0.5, 2.0))
    x = np.array([1.0, 2.0, 4.0])
    mu_hat, s2_hat = plugin_stats(3, x.sum(), (x * x).sum(), priors)
    xbar = x.mean()
    ss = np.sum((x - xbar) ** 2)
    assert mu_hat == pytest.approx((0.5 + x.sum()) / 4.0)
    assert s2_hat == pytest.approx((3.0 * 2.0 + ss + 3.0 / 4.0 * (xbar - 0.5) ** 2) / 6.0)


def test_partition_moves_keep_invariants():
    ds = _partition_data()
    part = PartitionState(ds, [7, 7, 3, 3, 9], PluginPriors())
    assert part.k == 3
    assert part.labels.tolist() == [0, 0, 1, 1, 2]
    part.check_consistency()

    res = part.apply_move(4, part.k)
    assert res.created and part.k == 3
    assert res.vacated == 2 and res.relocated_from == 3
    assert part.labels[4] == 2
    part.check_consistency()

    res = part.apply_move(0, 1)
    assert not res.created and res.vacated is None
    part.apply_move(1, 2)
    assert part.k == 2
    assert res.changed
    part.check_consistency()
    assert sorted(part.sizes().tolist()) == [2, 3]
    assert part.cnt[part.labels[3], 0] == np.sum(ds.mask[part.members[part.labels[3]], 0])

    with pytest.raises(StateError):
        part.apply_move(0, part.k + 1)
    with pytest.raises(StateError):
        part.z_value(3, 0)
    with pytest.raises(StateError):
        PartitionState(ds, [0, 0], PluginPriors())


def test_partition_plugins_track_moves():
    ds = _partition_data()
    part = PartitionState(ds, [0, 0, 0, 1, 1], PluginPriors())
    before = part.plugins(0)[0].copy()
    part.apply_move(2, 1)
    after = part.plugins(0)[0]
    expected, _ = plugin_stats(*(np.asarray(s) for s in part.cell_stats(0)), PluginPriors())
    np.testing.assert_allclose(after, expected)
    assert not np.allclose(before, after)
    z = part.standardized_row(1, part.labels[1])
    assert z[1] == 0.0


# ============ 测试 4: 监控指标 ============

def test_metrics_acceptance_rates():
    collector = MetricsCollector()
    for accepted in (True, False, False, True):
        collector.record_proposal('alloc_2', accepted)
    collector.record_proposal('alloc_1b', False)
    rates = collector.acceptance_rates()
    assert rates == {'alloc_1b': 0.0, 'alloc_2': 0.5}
    assert all(0.0 <= r <= 1.0 for r in rates.values())
    with collector.time_operation('block') as timer:
        sum(range(100))
    assert timer.elapsed >= 0.0
    summary = collector.stage_summary('block')
    assert summary['calls'] == 1 and summary['mean'] == summary['total']
    assert collector.stage_summary('never') == {}
    assert collector.get_counter('alloc_2_accepted') == 2
    assert collector.get_counter('alloc_1b_accepted') == 0
    snap = collector.snapshot()
    assert snap['counters']['alloc_2_proposed'] == 4
    assert 'block' in snap['stages']
    collector.reset()
    assert collector.acceptance_rates() == {}


# ============ 测试 5: 进程池 ============

def _halve(x):
    if x < 0:
        raise ValueError("负数")
    return x / 2


def test_worker_pool_inline_stats():
    with WorkerPool(max_workers=1) as pool:
        assert pool.inline
        assert pool.map_ordered(_halve, [4, 2, 8]) == [2.0, 1.0, 4.0]
        with pytest.raises(ValueError):
            pool.map_ordered(_halve, [1, -1])
        assert pool.get_stats() == {'max_workers': 1, 'submitted_tasks': 5, 'failed_tasks': 1}
    with pytest.raises(ValueError):
        WorkerPool(max_workers=0)
