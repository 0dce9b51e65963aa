# -*- coding: utf-8 -*-
"""
vdlreg - 变维协变量局部回归（VDLReg / VDReg）
基于 numpy + scipy + pandas + scikit-learn 开发
"""

from .version import VERSION, __version__
from .core import Dataset, ModelConfig, McmcConfig, load_dataset
from .services import PosteriorSamples, PosteriorPredictor, run_chain, linearity_indicator
from .cli import VdlregApp, main

__all__ = ['VdlregApp', 'main', 'VERSION', '__version__', 'Dataset', 'ModelConfig', 'McmcConfig',
           'load_dataset', 'PosteriorSamples', 'PosteriorPredictor', 'run_chain', 'linearity_indicator']
