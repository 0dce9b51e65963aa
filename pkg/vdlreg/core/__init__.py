# -*- coding: utf-8 -*-
"""
vdlreg 核心层模块

包含异常层次、配置管理、监控指标、数据模型与分区状态
"""

from .errors import (VdlregError, UserError, DataError, ConfigError, SchemaError,
                     InternalError, StateError, SamplerError)
from .config import (ConfigManager, DataConfig, ModelConfig, McmcConfig, RunConfig,
                     SimilarityConfig)
from .metrics import MetricsCollector, metrics
from .data import Dataset, QueryData, load_dataset, load_query
from .partition import (PartitionState, PluginPriors, MoveResult, plugin_stats,
                        standardized_covariate)

__all__ = [
    'VdlregError', 'UserError', 'DataError', 'ConfigError', 'SchemaError',
    'InternalError', 'StateError', 'SamplerError',
    'ConfigManager', 'DataConfig', 'ModelConfig', 'McmcConfig', 'RunConfig', 'SimilarityConfig',
    'MetricsCollector', 'metrics',
    'Dataset', 'QueryData', 'load_dataset', 'load_query',
    'PartitionState', 'PluginPriors', 'MoveResult', 'plugin_stats', 'standardized_covariate',
]
