# -*- coding: utf-8 -*-
"""
vdlreg 服务层模块

包含分区先验、似然、采样器、预测、评估指标、筛查与模拟数据等统计服务。
"""

from .similarity import (SimilarityModel, NormalNormal, NormalNormalInverseGamma, NormalScaledInvChi2,
                         make_family, log_cohesion, log_similarity, log_similarity_ratio,
                         log_partition_prior, co_cluster_probability, co_cluster_grid)
from .likelihood import ClusterParams, Baseline, obs_loglik, cluster_loglik, dl_logprior, marginalization_check
from .samplers import gig_sample, invgauss_sample, slice_sample, elliptical_slice
from .mcmc import (ChainState, PosteriorSamples, run_chain, run_chain_task, initial_state, scan,
                   update_allocations, update_mu_star, update_sigma_star, update_beta_star,
                   update_dl_hypers, update_baseline, log_posterior, draw_prior_params)
from .prediction import (PredictiveMixture, DrawSnapshot, PosteriorPredictor, predictive_weights,
                         predictive_mixture, predictive_mean, sample_predictive, quantile_residual)
from .evaluation import mspe, predictive_deviance, ks_uniform, summarize_predictions
from .screening import (GmmModel, ClusterFit, LinearityReport, complete_cases, gmm_fit_bic, ols_fit,
                        linearity_indicator, screen_decision)
from .simgen import (SimulatedData, friedman, ampute_mcar, ampute_mnar, bench_data,
                     screening_scenarios, illustration_data, simulate)

__all__ = [
    'SimilarityModel', 'NormalNormal', 'NormalNormalInverseGamma', 'NormalScaledInvChi2',
    'make_family', 'log_cohesion', 'log_similarity', 'log_similarity_ratio',
    'log_partition_prior', 'co_cluster_probability', 'co_cluster_grid',
    'ClusterParams', 'Baseline', 'obs_loglik', 'cluster_loglik', 'dl_logprior', 'marginalization_check',
    'gig_sample', 'invgauss_sample', 'slice_sample', 'elliptical_slice',
    'ChainState', 'PosteriorSamples', 'run_chain', 'run_chain_task', 'initial_state', 'scan',
    'update_allocations', 'update_mu_star', 'update_sigma_star', 'update_beta_star',
    'update_dl_hypers', 'update_baseline', 'log_posterior', 'draw_prior_params',
    'PredictiveMixture', 'DrawSnapshot', 'PosteriorPredictor', 'predictive_weights',
    'predictive_mixture', 'predictive_mean', 'sample_predictive', 'quantile_residual',
    'mspe', 'predictive_deviance', 'ks_uniform', 'summarize_predictions',
    'GmmModel', 'ClusterFit', 'LinearityReport', 'complete_cases', 'gmm_fit_bic', 'ols_fit',
    'linearity_indicator', 'screen_decision',
    'SimulatedData', 'friedman', 'ampute_mcar', 'ampute_mnar', 'bench_data',
    'screening_scenarios', 'illustration_data', 'simulate',
]
