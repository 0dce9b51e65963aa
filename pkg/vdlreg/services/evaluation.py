# -*- coding: utf-8 -*-
"""
评估指标模块

样本外比较的三个指标：MSPE、预测偏差、分位残差一致性的 K-S 统计量。
"""

import math
from typing import Iterable, Sequence

import numpy as np
import pandas as pd


def mspe(y_true, y_hat) -> float:
    """均方预测误差 m'^-1 Σ(y_i - ŷ_i)²"""
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=float).reshape(-1)
    if y_true.shape != y_hat.shape:
        raise ValueError(f"长度不一致: {y_true.size} vs {y_hat.size}")
    if y_true.size == 0:
        raise ValueError("输入为空")
    r = y_true - y_hat
    return math.fsum(r * r) / r.size


def predictive_deviance(log_density) -> float:
    """-2 × 各点（后验抽样平均的对数预测密度）的均值

    log_density：形状 (点数, 抽样数) 的逐抽样对数密度，或每点一个已平均的值。
    先对抽样求均值，再对点求均值。
    """
    values = np.asarray(log_density, dtype=float)
    if values.size == 0:
        raise ValueError("输入为空")
    if values.ndim == 1:
        values = values[:, None]
    per_point = [math.fsum(row) / row.size for row in values]
    return -2.0 * math.fsum(per_point) / len(per_point)


def ks_uniform(q) -> float:
    """经验 CDF 与均匀分布 CDF 的上确界距离"""
    q = np.sort(np.asarray(q, dtype=float).reshape(-1))
    if q.size == 0:
        raise ValueError("输入为空")
    if np.any(~np.isfinite(q)) or np.any(q < 0.0) or np.any(q > 1.0):
        raise ValueError("分位残差必须位于 [0, 1]")
    n = q.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - q), np.max(q - (i - 1) / n)))


def summarize_predictions(frames: Iterable[pd.DataFrame], names: Sequence[str]) -> pd.DataFrame:
    """每个预测表一行：n、mspe、deviance、ks"""
    rows = []
    for name, frame in zip(names, frames):
        row = {'source': name, 'n': len(frame)}
        if 'y' in frame.columns:
            row['mspe'] = mspe(frame['y'], frame['mean'])
        if 'log_density' in frame.columns:
            row['deviance'] = predictive_deviance(frame['log_density'].to_numpy())
        if 'quantile_residual' in frame.columns:
            row['ks'] = ks_uniform(frame['quantile_residual'].to_numpy())
        rows.append(row)
    return pd.DataFrame(rows)
