# -*- coding: utf-8 -*-
"""
配置管理模块

单个 INI 文件，分节 [data] [model] [similarity] [mcmc] [run]，
缺省键由内置默认值补齐，并转换为带校验的不可变数据类。
"""

import os
import configparser
from dataclasses import dataclass, field, asdict, replace
from typing import Any, Dict, Optional

import numpy as np

from vdlreg.core.errors import ConfigError
from vdlreg.core.partition import PluginPriors


# 相似度族及其默认超参数
SIMILARITY_DEFAULTS: Dict[str, Dict[str, float]] = {
    'nnsichi2': {'mu0': 0.0, 'kappa': 0.1, 'nu': 4.0, 's0sq': 0.04},
    'nn': {'mean0': 0.0, 'var0': 25.0, 'kernel_var': 1.0},
    'nnig': {'mean0': 0.0, 'kappa': 0.1, 'a': 2.0, 'b': 1.0},
}

MODELS = ('vdlreg', 'vdreg')
ALLOCATIONS = ('alg7', 'gibbs')
TAU_UPDATES = ('gig', 'slice')
INITS = ('single', 'random')
AUTO = 'auto'


@dataclass(frozen=True)
class SimilarityConfig:
    """相似度配置：共享族 + 按列覆盖"""
    family: str = 'nnsichi2'
    params: Dict[str, float] = field(default_factory=lambda: dict(SIMILARITY_DEFAULTS['nnsichi2']))
    overrides: Dict[str, Dict[str, Any]] = field(default_factory=dict)


@dataclass(frozen=True)
class DataConfig:
    path: Optional[str] = None
    response: str = 'y'
    missing_token: str = 'NA'
    standardize: bool = True
    standardize_scope: str = 'train'
    pooled_with: Optional[str] = None


@dataclass(frozen=True)
class ModelConfig:
    """模型超参数

    m0、v、a_sigma0 取 None 表示 auto，由 resolve() 依据响应变量确定。
    """
    model: str = 'vdlreg'
    fix_beta: bool = False
    M: float = 1.0
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    m0: Optional[float] = None
    v: Optional[float] = None
    a_sigma0: Optional[float] = None
    a_sigma: float = 0.5
    tau0: float = 0.1
    nu: float = 1.0
    nu_s: float = 1.0
    mu0_x: float = 0.0
    s0sq_x: float = 1.0

    @property
    def regression_active(self) -> bool:
        """是否对 β* 及 DL 增广变量进行采样"""
        return self.model == 'vdlreg' and not self.fix_beta

    @property
    def plugin_priors(self) -> PluginPriors:
        return PluginPriors(mu0_x=self.mu0_x, s0sq_x=self.s0sq_x, nu=self.nu, nu_s=self.nu_s)

    @property
    def is_resolved(self) -> bool:
        return None not in (self.m0, self.v, self.a_sigma0)

    def resolve(self, y) -> 'ModelConfig':
        """把 auto 超参数替换为 mean(y)、2·sd(y)、5·sd(y)"""
        y = np.asarray(y, dtype=float)
        sd = float(np.std(y, ddof=1)) if y.size > 1 else 1.0
        if not sd > 0:
            sd = 1.0
        return replace(
            self,
            m0=float(np.mean(y)) if self.m0 is None else self.m0,
            v=2.0 * sd if self.v is None else self.v,
            a_sigma0=5.0 * sd if self.a_sigma0 is None else self.a_sigma0,
        )

    def validate(self) -> 'ModelConfig':
        if self.model not in MODELS:
            raise ConfigError('model.model', f"未知模型 {self.model!r}，可选 {MODELS}")
        for name in ('M', 'a_sigma', 'tau0', 'nu', 'nu_s', 's0sq_x'):
            if not getattr(self, name) > 0:
                raise ConfigError(f'model.{name}', "必须 > 0")
        for name in ('v', 'a_sigma0'):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f'model.{name}', "必须 > 0")
        if self.similarity.family not in SIMILARITY_DEFAULTS:
            raise ConfigError('similarity.family', f"未知相似度族 {self.similarity.family!r}")
        return self


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 5000
    n_burn: int = 1000
    thin: int = 1
    seed: int = 0
    proposal_prob: float = 0.5
    slice_width: float = 1.0
    slice_max_doublings: int = 20
    ess_max_shrink: int = 100
    allocation: str = 'alg7'
    tau_update: str = 'gig'
    init: str = 'single'
    init_clusters: int = 5
    debug_checks: bool = False

    @property
    def n_draws(self) -> int:
        return -(-(self.n_iter - self.n_burn) // self.thin)

    def validate(self) -> 'McmcConfig':
        if self.n_iter < 1:
            raise ConfigError('mcmc.n_iter', "必须 >= 1")
        if not 0 <= self.n_burn < self.n_iter:
            raise ConfigError('mcmc.n_burn', "必须满足 0 <= n_burn < n_iter")
        if self.thin < 1:
            raise ConfigError('mcmc.thin', "必须 >= 1")
        if not 0.0 < self.proposal_prob < 1.0:
            raise ConfigError('mcmc.proposal_prob', "必须位于 (0, 1)")
        if not self.slice_width > 0:
            raise ConfigError('mcmc.slice_width', "必须 > 0")
        if self.slice_max_doublings < 0:
            raise ConfigError('mcmc.slice_max_doublings', "必须 >= 0")
        if self.ess_max_shrink < 1:
            raise ConfigError('mcmc.ess_max_shrink', "必须 >= 1")
        if self.allocation not in ALLOCATIONS:
            raise ConfigError('mcmc.allocation', f"可选 {ALLOCATIONS}")
        if self.tau_update not in TAU_UPDATES:
            raise ConfigError('mcmc.tau_update', f"可选 {TAU_UPDATES}")
        if self.init not in INITS:
            raise ConfigError('mcmc.init', f"可选 {INITS}")
        if self.init_clusters < 1:
            raise ConfigError('mcmc.init_clusters', "必须 >= 1")
        return self


@dataclass(frozen=True)
class RunConfig:
    out_dir: str = 'vdlreg_out'
    n_chains: int = 1
    threads: int = 1

    def validate(self) -> 'RunConfig':
        if self.n_chains < 1:
            raise ConfigError('run.n_chains', "必须 >= 1")
        if self.threads < 1:
            raise ConfigError('run.threads', "必须 >= 1")
        return self


def _str(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if value is None:
        return AUTO
    return str(value)


class ConfigManager:
    """配置文件管理器

    读取 INI 配置，缺失的节和键由默认值补齐；data_config() 等方法返回校验后的数据类。
    """

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = config_path
        self.config = configparser.ConfigParser()
        self.config.optionxform = str  # 保留键的大小写（M）
        self.load_config()

    def load_config(self):
        """加载配置；文件不存在时报错，未指定路径时仅使用默认值"""
        self.create_default_config()
        if self.config_path is None:
            return
        if not os.path.exists(self.config_path):
            raise ConfigError('config', f"配置文件不存在: {self.config_path}")
        try:
            self.config.read(self.config_path, encoding='utf-8')
        except configparser.Error as e:
            raise ConfigError('config', f"无法解析 {self.config_path}: {e}") from e

    def create_default_config(self):
        """写入内置默认值"""
        self.config['data'] = {k: _str(v) for k, v in asdict(DataConfig()).items()}
        model = asdict(ModelConfig())
        model.pop('similarity')
        self.config['model'] = {k: _str(v) for k, v in model.items()}
        self.config['similarity'] = {'family': 'nnsichi2'}
        self.config['mcmc'] = {k: _str(v) for k, v in asdict(McmcConfig()).items()}
        self.config['run'] = {k: _str(v) for k, v in asdict(RunConfig()).items()}

    def save_config(self, path: str):
        """保存配置到文件"""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            self.config.write(f)

    def get(self, section: str, key: str, fallback=None):
        """获取配置值"""
        return self.config.get(section, key, fallback=fallback)

    def getint(self, section: str, key: str, fallback=0):
        """获取整数配置值"""
        try:
            return self.config.getint(section, key, fallback=fallback)
        except ValueError as e:
            raise ConfigError(f'{section}.{key}', f"需要整数: {e}") from e

    def getfloat(self, section: str, key: str, fallback=0.0):
        """获取浮点数配置值"""
        try:
            return self.config.getfloat(section, key, fallback=fallback)
        except ValueError as e:
            raise ConfigError(f'{section}.{key}', f"需要数值: {e}") from e

    def getboolean(self, section: str, key: str, fallback=False):
        """获取布尔配置值"""
        try:
            return self.config.getboolean(section, key, fallback=fallback)
        except ValueError as e:
            raise ConfigError(f'{section}.{key}', f"需要布尔值: {e}") from e

    def get_auto(self, section: str, key: str) -> Optional[float]:
        """数值或 auto（返回 None）"""
        raw = self.get(section, key, fallback=AUTO)
        if raw is None or raw.strip().lower() == AUTO:
            return None
        return self.getfloat(section, key)

    def set(self, section: str, key: str, value):
        """设置配置值"""
        if section not in self.config:
            self.config[section] = {}
        self.config[section][key] = _str(value)

    # ---------------------------------------------------------------- builders

    def data_config(self) -> DataConfig:
        scope = self.get('data', 'standardize_scope', fallback='train')
        if scope not in ('train', 'pooled'):
            raise ConfigError('data.standardize_scope', "可选 train / pooled")
        pooled_with = self.get('data', 'pooled_with', fallback=AUTO)
        pooled_with = None if pooled_with in (AUTO, '', None) else pooled_with
        if scope == 'pooled' and pooled_with is None:
            raise ConfigError('data.pooled_with', "standardize_scope = pooled 时必须给出")
        path = self.get('data', 'path', fallback=AUTO)
        return DataConfig(
            path=None if path in (AUTO, '') else path,
            response=self.get('data', 'response', fallback='y'),
            missing_token=self.get('data', 'missing_token', fallback='NA'),
            standardize=self.getboolean('data', 'standardize', fallback=True),
            standardize_scope=scope,
            pooled_with=pooled_with,
        )

    def similarity_config(self) -> SimilarityConfig:
        family = self.get('similarity', 'family', fallback='nnsichi2')
        if family not in SIMILARITY_DEFAULTS:
            raise ConfigError('similarity.family', f"未知相似度族 {family!r}")
        params = self._family_params('similarity', family)
        overrides = {}
        for section in self.config.sections():
            if not section.startswith('similarity.'):
                continue
            column = section[len('similarity.'):]
            fam = self.get(section, 'family', fallback=family)
            if fam not in SIMILARITY_DEFAULTS:
                raise ConfigError(f'{section}.family', f"未知相似度族 {fam!r}")
            base = params if fam == family else dict(SIMILARITY_DEFAULTS[fam])
            overrides[column] = {'family': fam, 'params': self._family_params(section, fam, base)}
        return SimilarityConfig(family=family, params=params, overrides=overrides)

    def _family_params(self, section: str, family: str, base=None) -> Dict[str, float]:
        params = dict(base if base is not None else SIMILARITY_DEFAULTS[family])
        for key in params:
            if self.config.has_option(section, key):
                params[key] = self.getfloat(section, key)
        return params

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            model=self.get('model', 'model', fallback='vdlreg'),
            fix_beta=self.getboolean('model', 'fix_beta', fallback=False),
            M=self.getfloat('model', 'M', fallback=1.0),
            similarity=self.similarity_config(),
            m0=self.get_auto('model', 'm0'),
            v=self.get_auto('model', 'v'),
            a_sigma0=self.get_auto('model', 'a_sigma0'),
            a_sigma=self.getfloat('model', 'a_sigma', fallback=0.5),
            tau0=self.getfloat('model', 'tau0', fallback=0.1),
            nu=self.getfloat('model', 'nu', fallback=1.0),
            nu_s=self.getfloat('model', 'nu_s', fallback=1.0),
            mu0_x=self.getfloat('model', 'mu0_x', fallback=0.0),
            s0sq_x=self.getfloat('model', 's0sq_x', fallback=1.0),
        ).validate()

    def mcmc_config(self) -> McmcConfig:
        return McmcConfig(
            n_iter=self.getint('mcmc', 'n_iter', fallback=5000),
            n_burn=self.getint('mcmc', 'n_burn', fallback=1000),
            thin=self.getint('mcmc', 'thin', fallback=1),
            seed=self.getint('mcmc', 'seed', fallback=0),
            proposal_prob=self.getfloat('mcmc', 'proposal_prob', fallback=0.5),
            slice_width=self.getfloat('mcmc', 'slice_width', fallback=1.0),
            slice_max_doublings=self.getint('mcmc', 'slice_max_doublings', fallback=20),
            ess_max_shrink=self.getint('mcmc', 'ess_max_shrink', fallback=100),
            allocation=self.get('mcmc', 'allocation', fallback='alg7'),
            tau_update=self.get('mcmc', 'tau_update', fallback='gig'),
            init=self.get('mcmc', 'init', fallback='single'),
            init_clusters=self.getint('mcmc', 'init_clusters', fallback=5),
            debug_checks=self.getboolean('mcmc', 'debug_checks', fallback=False),
        ).validate()

    def run_config(self) -> RunConfig:
        return RunConfig(
            out_dir=self.get('run', 'out_dir', fallback='vdlreg_out'),
            n_chains=self.getint('run', 'n_chains', fallback=1),
            threads=self.getint('run', 'threads', fallback=1),
        ).validate()


def config_to_dict(*configs) -> Dict[str, Any]:
    """把若干配置数据类合并为可写入清单的字典"""
    out: Dict[str, Any] = {}
    names = {DataConfig: 'data', ModelConfig: 'model', McmcConfig: 'mcmc', RunConfig: 'run'}
    for cfg in configs:
        out[names[type(cfg)]] = asdict(cfg)
    return out


def model_config_from_dict(values: Dict[str, Any]) -> ModelConfig:
    """由清单中的字典重建 ModelConfig"""
    values = dict(values)
    sim = values.pop('similarity', None) or {}
    return ModelConfig(similarity=SimilarityConfig(**sim), **values).validate()
