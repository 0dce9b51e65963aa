# -*- coding: utf-8 -*-
"""
命令行应用模块

vdlreg 命令行入口，协调配置、数据、进程池与产出文件：
simulate → screen → fit → predict → metrics，另有 benchmark、replicate-friedman、cocluster。

退出码：0 成功，1 用户错误（配置/数据/模式），2 内部错误；screen 另用 3（无线性信号）与 4（不确定）。
"""

import argparse
import logging
import os
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from vdlreg.version import VERSION
from vdlreg.core.config import (ConfigManager, McmcConfig, ModelConfig, SimilarityConfig,
                                config_to_dict, model_config_from_dict)
from vdlreg.core.data import (Dataset, QueryData, dataset_from_internal, internal_frame, load_dataset,
                              load_query, standardization_meta)
from vdlreg.core.errors import ConfigError, DataError, SamplerError, UserError
from vdlreg.core.metrics import metrics
from vdlreg.infrastructure.artifacts import read_fit_dir, read_json, write_csv, write_fit_dir, write_json
from vdlreg.infrastructure.logging_config import logger, setup_logging
from vdlreg.infrastructure.worker_pool import WorkerPool
from vdlreg.services.evaluation import ks_uniform, mspe, predictive_deviance, summarize_predictions
from vdlreg.services.mcmc import PosteriorSamples, initial_state, run_chain, run_chain_task, scan
from vdlreg.services.prediction import DEFAULT_QUANTILES, PosteriorPredictor, predict_task
from vdlreg.services.screening import linearity_indicator, screen_decision
from vdlreg.services.similarity import SimilarityModel, co_cluster_grid, make_family
from vdlreg.services.simgen import SIM_KINDS, ampute_mcar, ampute_mnar, bench_data, friedman, simulate

FIT_TABLES = ('samples', 'labels', 'trace')
TRAIN_FILE = 'train.csv'

# 模拟研究设置：相似度 ξ = (0.5, 0.1, 10, 0.2²)，τ0 = 0.1，a_σ = 2，数据不标准化
FRIEDMAN_SIMILARITY = {'mu0': 0.5, 'kappa': 0.1, 'nu': 10.0, 's0sq': 0.04}


def derive_seed(seed: int, *keys: int) -> int:
    """主种子 + 键 → 独立的子种子"""
    return int(np.random.SeedSequence(seed, spawn_key=tuple(keys)).generate_state(1)[0])


def ampute(dataset: Dataset, rate: float, mechanism: str, steepness: float, seed: int) -> Dataset:
    if rate <= 0.0:
        return dataset
    if mechanism == 'mcar':
        return ampute_mcar(dataset, rate, seed)
    if mechanism == 'mnar':
        return ampute_mnar(dataset, rate, steepness, seed)
    raise ConfigError('mechanism', f"未知缺失机制 {mechanism!r}")


def friedman_model_config(model: str) -> ModelConfig:
    return ModelConfig(model=model, similarity=SimilarityConfig('nnsichi2', dict(FRIEDMAN_SIMILARITY)),
                       a_sigma=2.0, tau0=0.1, mu0_x=0.5, s0sq_x=0.04).validate()


def friedman_cell_task(task: Dict[str, Any]) -> List[Dict[str, Any]]:
    """一个重复 × 因子单元：两种模型各拟合一次并在测试集上评估

    种子只依赖 (重复, 噪声, 缺失率)，与缺失机制无关。
    """
    seed, r, noise_idx, rate_idx = task['seed'], task['replicate'], task['noise_idx'], task['rate_idx']
    hetero = task['noise'] == 'hetero'
    train = friedman(task['m'], heteroscedastic=hetero, seed=derive_seed(seed, r, noise_idx, 0)).dataset
    test = friedman(task['m_test'], heteroscedastic=hetero, seed=derive_seed(seed, r, noise_idx, 1)).dataset
    train = ampute(train, task['rate'], task['mechanism'], task['steepness'],
                   derive_seed(seed, r, noise_idx, rate_idx, 2))
    test = ampute(test, task['rate'], task['mechanism'], task['steepness'],
                  derive_seed(seed, r, noise_idx, rate_idx, 3))
    mcmc = McmcConfig(n_iter=task['n_iter'], n_burn=task['n_burn'], thin=task['thin'],
                      seed=derive_seed(seed, r, noise_idx, rate_idx, 4)).validate()
    query = QueryData(X=test.X, mask=test.mask, y=test.y)
    rows = []
    for name in ('vdreg', 'vdlreg'):
        model = friedman_model_config(name).resolve(train.y)
        samples = run_chain(train, model, mcmc)
        pred = PosteriorPredictor(samples, train, model).predict_frame(query, seed=mcmc.seed)
        rows.append({
            'replicate': r + 1, 'm': task['m'], 'missing_rate': task['rate'],
            'mechanism': task['mechanism'], 'noise': task['noise'], 'model': name,
            'mspe': mspe(pred['y'], pred['mean']),
            'deviance': predictive_deviance(pred['log_density'].to_numpy()),
            'ks': ks_uniform(pred['quantile_residual'].to_numpy()),
            'median_k': float(np.median(samples.k)),
        })
    logger.info("重复 %d (%s, %s, %.2f) 完成", r + 1, task['noise'], task['mechanism'], task['rate'])
    return rows


def benchmark_cell(kind: str, m: int, p: int, model_name: str, blocks: int, block_iter: int,
                   seed: int) -> List[float]:
    """同一条链上连续 blocks 段、每段 block_iter 次迭代的耗时（秒）"""
    dataset = bench_data(kind, m, p, seed=seed).dataset.standardize()
    model = ModelConfig(model=model_name).resolve(dataset.y)
    mcmc = McmcConfig(n_iter=blocks * block_iter, n_burn=0, seed=seed).validate()
    state = initial_state(dataset, model, mcmc)
    times = []
    for _ in range(blocks):
        with state.metrics.time_operation('benchmark_block') as timer:
            for _ in range(block_iter):
                scan(state)
        times.append(timer.elapsed)
    return times


class VdlregApp:
    """vdlreg 命令协调器"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.seed = args.seed if args.seed is not None else 0
        self.threads = args.threads

    def run(self) -> int:
        handler = {
            'simulate': self.cmd_simulate,
            'screen': self.cmd_screen,
            'fit': self.cmd_fit,
            'predict': self.cmd_predict,
            'metrics': self.cmd_metrics,
            'benchmark': self.cmd_benchmark,
            'replicate-friedman': self.cmd_replicate_friedman,
            'cocluster': self.cmd_cocluster,
        }[self.args.command]
        with metrics.time_operation(f"cmd_{self.args.command}") as timer:
            code = handler()
        logger.info("%s 完成，用时 %.2f 秒", self.args.command, timer.elapsed)
        return code

    def _out(self, default: str) -> str:
        return self.args.out or default

    # ------------------------------------------------------------ simulate

    def cmd_simulate(self) -> int:
        a = self.args
        out_dir = self._out('sim_out')
        m_test = a.m_test if a.m_test is not None else a.m
        train = simulate(a.kind, a.m, a.p, derive_seed(self.seed, 0), a.heteroscedastic)
        test = simulate(a.kind, m_test, a.p, derive_seed(self.seed, 1), a.heteroscedastic)
        train_ds = ampute(train.dataset, a.rate, a.mechanism, a.steepness, derive_seed(self.seed, 2))
        test_ds = ampute(test.dataset, a.rate, a.mechanism, a.steepness, derive_seed(self.seed, 3))
        write_csv(train_ds.to_frame(a.missing_token), os.path.join(out_dir, 'train.csv'))
        write_csv(test_ds.to_frame(a.missing_token), os.path.join(out_dir, 'test.csv'))
        truth = {
            'kind': a.kind, 'seed': self.seed, 'm': train_ds.m, 'm_test': test_ds.m, 'p': train_ds.p,
            'missing_rate': a.rate, 'mechanism': a.mechanism, 'steepness': a.steepness,
            'heteroscedastic': a.heteroscedastic, 'generator': train.truth,
            'train_labels': None if train.labels is None else (train.labels + 1).tolist(),
            'test_labels': None if test.labels is None else (test.labels + 1).tolist(),
        }
        write_json(truth, os.path.join(out_dir, 'truth.json'))
        logger.info("模拟数据 %s 已写入 %s (训练 %d 行, 测试 %d 行)", a.kind, out_dir, train_ds.m, test_ds.m)
        return 0

    # ------------------------------------------------------------ screen

    def cmd_screen(self) -> int:
        a = self.args
        dataset = load_dataset(a.data, a.response, a.missing_token, standardize=False)
        report = linearity_indicator(dataset, k_range=range(1, a.k_max + 1), n_init=a.n_init, seed=self.seed)
        code = screen_decision(report, a.threshold)
        payload = report.to_dict()
        payload.update({'threshold': a.threshold, 'exit_code': code,
                        'decision': {0: 'linear-signal', 3: 'no-signal', 4: 'indeterminate'}[code]})
        write_json(payload, self._out('screen.json'))
        logger.info("筛查结论: %s", payload['decision'])
        return code

    # ------------------------------------------------------------ fit

    def _fit_config(self) -> ConfigManager:
        a = self.args
        cfg = ConfigManager(a.config)
        if a.data:
            cfg.set('data', 'path', a.data)
        if a.seed is not None:
            cfg.set('mcmc', 'seed', a.seed)
        if a.threads is not None:
            cfg.set('run', 'threads', a.threads)
        if a.out:
            cfg.set('run', 'out_dir', a.out)
        if a.chains is not None:
            cfg.set('run', 'n_chains', a.chains)
        if a.model:
            cfg.set('model', 'model', a.model)
        return cfg

    def cmd_fit(self) -> int:
        cfg = self._fit_config()
        data_cfg, run_cfg = cfg.data_config(), cfg.run_config()
        model, mcmc = cfg.model_config(), cfg.mcmc_config()
        if data_cfg.path is None:
            raise ConfigError('data.path', "未指定训练数据文件")
        dataset = load_dataset(data_cfg.path, data_cfg.response, data_cfg.missing_token,
                               standardize=data_cfg.standardize,
                               pooled_with=data_cfg.pooled_with if data_cfg.standardize_scope == 'pooled' else None)
        model = model.resolve(dataset.y)
        tasks = [(dataset, model, mcmc, c) for c in range(run_cfg.n_chains)]
        started = time.perf_counter()
        with WorkerPool(max_workers=min(run_cfg.threads, run_cfg.n_chains)) as pool:
            parts = pool.map_ordered(run_chain_task, tasks)
        wall = time.perf_counter() - started
        samples = PosteriorSamples.merge(parts)
        frames = samples.to_frames()
        manifest = {
            'version': VERSION,
            'command': 'fit',
            'seed': mcmc.seed,
            'config': config_to_dict(data_cfg, model, mcmc, run_cfg),
            'standardization': standardization_meta(dataset),
            'n_draws': samples.n_draws,
            'chains': samples.metrics,
            'wall_seconds': wall,
        }
        write_fit_dir(run_cfg.out_dir, frames, manifest)
        write_csv(internal_frame(dataset, data_cfg.missing_token), os.path.join(run_cfg.out_dir, TRAIN_FILE))
        logger.info("拟合完成: %d 条链, %d 个抽样, 用时 %.1f 秒", run_cfg.n_chains, samples.n_draws, wall)
        return 0

    # ------------------------------------------------------------ predict

    def _load_fit(self, fit_dir: str):
        frames, manifest = read_fit_dir(fit_dir, FIT_TABLES)
        missing_token = manifest['config']['data']['missing_token']
        dataset = dataset_from_internal(os.path.join(fit_dir, TRAIN_FILE), manifest['standardization'],
                                        missing_token)
        model = model_config_from_dict(manifest['config']['model'])
        samples = PosteriorSamples.from_frames(frames, dataset.col_names)
        return dataset, model, samples, missing_token

    def cmd_predict(self) -> int:
        a = self.args
        dataset, model, samples, missing_token = self._load_fit(a.fit)
        query = load_query(a.query, dataset, a.missing_token or missing_token)
        if query.n == 0:
            raise DataError(f"查询数据为空: {a.query}")
        predictor = PosteriorPredictor(samples, dataset, model, include_query=a.include_query)
        quantiles = tuple(a.quantiles)
        workers = max(1, min(self.threads or 1, query.n))
        tasks = []
        for idx in np.array_split(np.arange(query.n), workers):
            if idx.size == 0:
                continue
            chunk = QueryData(X=query.X[idx], mask=query.mask[idx],
                              y=None if query.y is None else query.y[idx])
            tasks.append((predictor, chunk, self.seed, quantiles, int(idx[0])))
        with WorkerPool(max_workers=len(tasks)) as pool:
            frame = pd.concat(pool.map_ordered(predict_task, tasks), ignore_index=True)
        write_csv(frame, self._out('predictions.csv'))
        if a.density_grid:
            lo, hi, n = a.density_grid
            grid = predictor.density_grid(query, np.linspace(float(lo), float(hi), int(n)), seed=self.seed)
            write_csv(grid, a.density_out or os.path.splitext(self._out('predictions.csv'))[0] + '_density.csv')
        return 0

    # ------------------------------------------------------------ metrics

    def cmd_metrics(self) -> int:
        frames = []
        for path in self.args.predictions:
            if not os.path.exists(path):
                raise DataError(f"预测文件不存在: {path}")
            frames.append(pd.read_csv(path, float_precision='round_trip'))
        summary = summarize_predictions(frames, self.args.predictions)
        write_csv(summary, self._out('metrics.csv'))
        return 0

    # ------------------------------------------------------------ benchmark

    def cmd_benchmark(self) -> int:
        a = self.args
        rows = []
        for kind in a.kinds:
            for m in a.sizes:
                for p in a.dims:
                    for model_name in ('vdreg', 'vdlreg'):
                        times = benchmark_cell(kind, m, p, model_name, a.blocks, a.block_iter,
                                               derive_seed(self.seed, m, p))
                        rows.append({'data': kind, 'm': m, 'model': model_name, 'p': p,
                                     'median': float(np.median(times)),
                                     'sd': float(np.std(times, ddof=1)) if len(times) > 1 else 0.0})
                        logger.info("基准 %s m=%d p=%d %s: 中位数 %.3f 秒", kind, m, p, model_name,
                                    rows[-1]['median'])
        write_csv(pd.DataFrame(rows), self._out('benchmark.csv'))
        return 0

    # ------------------------------------------------------------ replicate-friedman

    def cmd_replicate_friedman(self) -> int:
        a = self.args
        tasks = []
        for r in range(a.replicates):
            for noise_idx, noise in enumerate(a.noise):
                for rate_idx, rate in enumerate(a.rates):
                    for mechanism in a.mechanisms:
                        tasks.append({'seed': self.seed, 'replicate': r, 'noise_idx': noise_idx,
                                      'noise': noise, 'rate_idx': rate_idx, 'rate': rate,
                                      'mechanism': mechanism, 'steepness': a.steepness,
                                      'm': a.m, 'm_test': a.m_test if a.m_test is not None else a.m,
                                      'n_iter': a.n_iter, 'n_burn': a.n_burn, 'thin': a.thin})
        with WorkerPool(max_workers=self.threads or 1) as pool:
            results = pool.map_ordered(friedman_cell_task, tasks)
        frame = pd.DataFrame([row for rows in results for row in rows])
        write_csv(frame, self._out('friedman_metrics.csv'))
        return 0

    # ------------------------------------------------------------ cocluster

    def cmd_cocluster(self) -> int:
        a = self.args
        grid = np.linspace(a.grid_min, a.grid_max, a.grid_n)
        frames = []
        for family in a.families:
            similarity = SimilarityModel.shared(make_family(family), 2)
            frame = co_cluster_grid(grid, grid, a.M, similarity)
            frame.insert(0, 'family', family)
            frames.append(frame)
        write_csv(pd.concat(frames, ignore_index=True), self._out('cocluster_grid.csv'))
        return 0


class _Parser(argparse.ArgumentParser):
    """参数错误按用户错误处理（退出码 1）"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: 错误: {message}\n")


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(',') if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument('--seed', type=int, default=None, help='主随机种子')
    common.add_argument('--threads', type=int, default=None, help='并行进程数')
    common.add_argument('--out', default=None, help='输出路径（文件或目录，视命令而定）')
    common.add_argument('--config', default=None, help='INI 配置文件')
    common.add_argument('--log-dir', default=None, help='日志目录')
    common.add_argument('-v', '--verbose', action='store_true', help='输出调试日志')

    parser = _Parser(prog='vdlreg', description='变维协变量局部回归（VDLReg / VDReg）')
    parser.add_argument('--version', action='version', version=f'%(prog)s {VERSION}')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', parents=[common], help='生成模拟数据')
    p.add_argument('--kind', choices=SIM_KINDS, default='friedman')
    p.add_argument('--m', type=int, default=150)
    p.add_argument('--m-test', type=int, default=None)
    p.add_argument('--p', type=int, default=5, help='基准数据的协变量数')
    p.add_argument('--rate', type=float, default=0.0, help='缺失率')
    p.add_argument('--mechanism', choices=('mcar', 'mnar'), default='mcar')
    p.add_argument('--steepness', type=float, default=2.0)
    p.add_argument('--heteroscedastic', action='store_true')
    p.add_argument('--missing-token', default='NA')

    p = sub.add_parser('screen', parents=[common], help='局部线性筛查')
    p.add_argument('data')
    p.add_argument('--response', default='y')
    p.add_argument('--missing-token', default='NA')
    p.add_argument('--threshold', type=float, default=0.05)
    p.add_argument('--k-max', type=int, default=9)
    p.add_argument('--n-init', type=int, default=10)

    p = sub.add_parser('fit', parents=[common], help='拟合模型')
    p.add_argument('--data', default=None, help='覆盖 [data] path')
    p.add_argument('--chains', type=int, default=None, help='覆盖 [run] n_chains')
    p.add_argument('--model', choices=('vdlreg', 'vdreg'), default=None)

    p = sub.add_parser('predict', parents=[common], help='后验预测')
    p.add_argument('fit', help='拟合目录')
    p.add_argument('query', help='查询 CSV')
    p.add_argument('--missing-token', default=None)
    p.add_argument('--quantiles', type=_floats, default=list(DEFAULT_QUANTILES))
    p.add_argument('--include-query', action='store_true', help='plug-in 统计量包含查询点')
    p.add_argument('--density-grid', nargs=3, metavar=('LO', 'HI', 'N'), default=None)
    p.add_argument('--density-out', default=None)

    p = sub.add_parser('metrics', parents=[common], help='汇总预测指标')
    p.add_argument('predictions', nargs='+')

    p = sub.add_parser('benchmark', parents=[common], help='运行时间基准')
    p.add_argument('--kinds', nargs='+', choices=('step', 'linear'), default=['step', 'linear'])
    p.add_argument('--sizes', nargs='+', type=int, default=[100, 300])
    p.add_argument('--dims', nargs='+', type=int, default=[5, 10])
    p.add_argument('--blocks', type=int, default=10)
    p.add_argument('--block-iter', type=int, default=1000)

    p = sub.add_parser('replicate-friedman', parents=[common], help='Friedman 模拟研究')
    p.add_argument('--replicates', type=int, default=10)
    p.add_argument('--m', type=int, default=150)
    p.add_argument('--m-test', type=int, default=None)
    p.add_argument('--rates', type=_floats, default=[0.0, 0.1, 0.25, 0.5])
    p.add_argument('--mechanisms', nargs='+', choices=('mcar', 'mnar'), default=['mcar', 'mnar'])
    p.add_argument('--noise', nargs='+', choices=('homo', 'hetero'), default=['homo', 'hetero'])
    p.add_argument('--steepness', type=float, default=2.0)
    p.add_argument('--n-iter', type=int, default=20000)
    p.add_argument('--n-burn', type=int, default=10000)
    p.add_argument('--thin', type=int, default=10)

    p = sub.add_parser('cocluster', parents=[common], help='先验共聚类概率网格')
    p.add_argument('--families', nargs='+', choices=('nn', 'nnig', 'nnsichi2'), default=['nn', 'nnig'])
    p.add_argument('--grid-min', type=float, default=-3.0)
    p.add_argument('--grid-max', type=float, default=3.0)
    p.add_argument('--grid-n', type=int, default=61)
    p.add_argument('--M', type=float, default=1.0)
    return parser


def _log_dir(args: argparse.Namespace) -> Optional[str]:
    if args.log_dir:
        return args.log_dir
    if args.command in ('fit', 'simulate'):
        return args.out
    return os.path.dirname(os.path.abspath(args.out)) if args.out else None


def main(argv: Optional[Sequence[str]] = None) -> int:
    """主函数，返回退出码"""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        setup_logging(_log_dir(args), logging.DEBUG if args.verbose else logging.INFO)
        if args.threads is not None and args.threads < 1:
            raise ConfigError('run.threads', "必须 >= 1")
        return VdlregApp(args).run()
    except UserError as e:
        logger.error("%s", e)
        print(f"vdlreg: 错误: {e}", file=sys.stderr)
        return 1
    except SamplerError as e:
        logger.exception("采样失败: %s; 诊断: %s", e, e.diagnostics)
        return 2
    except Exception as e:
        logger.exception("内部错误: %s", e)
        return 2


if __name__ == '__main__':
    sys.exit(main())
