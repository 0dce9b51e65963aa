# -*- coding: utf-8 -*-
"""
数据模型模块

Dataset：响应向量 + 协变量矩阵 + 观测掩码 + 标准化元数据。
缺失项在 X 中置 0 且只由掩码标识，任何计算都不读取缺失项。
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from vdlreg.core.errors import DataError, SchemaError

logger = logging.getLogger('vdlreg.data')


@dataclass(frozen=True, eq=False)
class Dataset:
    """不可变数据集，可在线程/进程间共享"""
    y: np.ndarray
    X: np.ndarray
    mask: np.ndarray
    col_names: Tuple[str, ...]
    response_name: str = 'y'
    x_center: Optional[np.ndarray] = None
    x_scale: Optional[np.ndarray] = None
    y_center: float = 0.0
    y_scale: float = 1.0
    standardized: bool = False

    def __post_init__(self):
        p = self.X.shape[1]
        if self.x_center is None:
            object.__setattr__(self, 'x_center', np.zeros(p))
        if self.x_scale is None:
            object.__setattr__(self, 'x_scale', np.ones(p))
        for arr in (self.y, self.X, self.mask, self.x_center, self.x_scale):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def observed(self, i: int) -> np.ndarray:
        """第 i 行的观测协变量下标（升序）"""
        return np.flatnonzero(self.mask[i])

    @property
    def patterns(self) -> List[np.ndarray]:
        """ObservedPattern：每行一个升序下标数组"""
        cached = self.__dict__.get('_patterns')
        if cached is None:
            cached = [np.flatnonzero(row) for row in self.mask]
            object.__setattr__(self, '_patterns', cached)
        return cached

    # ------------------------------------------------------------ transforms

    def raw_X(self) -> np.ndarray:
        """逆标准化后的协变量，缺失项为 NaN"""
        out = self.X * self.x_scale + self.x_center
        return np.where(self.mask, out, np.nan)

    def raw_y(self, values=None) -> np.ndarray:
        values = self.y if values is None else np.asarray(values, dtype=float)
        return values * self.y_scale + self.y_center

    def transform_X(self, X_raw: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """用本数据集的标准化参数变换新的协变量"""
        out = (np.asarray(X_raw, dtype=float) - self.x_center) / self.x_scale
        return np.where(mask, out, 0.0)

    def transform_y(self, y_raw) -> np.ndarray:
        return (np.asarray(y_raw, dtype=float) - self.y_center) / self.y_scale

    def subset(self, rows) -> 'Dataset':
        rows = np.asarray(rows)
        return Dataset(
            y=self.y[rows].copy(), X=self.X[rows].copy(), mask=self.mask[rows].copy(),
            col_names=self.col_names, response_name=self.response_name,
            x_center=self.x_center.copy(), x_scale=self.x_scale.copy(),
            y_center=self.y_center, y_scale=self.y_scale, standardized=self.standardized,
        )

    def with_mask(self, mask: np.ndarray) -> 'Dataset':
        """替换观测掩码（缺失项清零）"""
        mask = np.asarray(mask, dtype=bool) & self.mask
        return Dataset(
            y=self.y.copy(), X=np.where(mask, self.X, 0.0), mask=mask,
            col_names=self.col_names, response_name=self.response_name,
            x_center=self.x_center.copy(), x_scale=self.x_scale.copy(),
            y_center=self.y_center, y_scale=self.y_scale, standardized=self.standardized,
        )

    def standardize(self) -> 'Dataset':
        """原始尺度数据按本身的均值与标准差标准化后的副本"""
        return Dataset.from_arrays(self.raw_y(), self.raw_X(), mask=self.mask, col_names=self.col_names,
                                   response_name=self.response_name, standardize=True)

    def to_frame(self, missing_token: str = 'NA') -> pd.DataFrame:
        """原始尺度的 DataFrame（缺失项写为 missing_token）"""
        raw = self.raw_X()
        frame = pd.DataFrame({self.response_name: self.raw_y()})
        for l, name in enumerate(self.col_names):
            frame[name] = pd.Series(raw[:, l], dtype=object).where(self.mask[:, l], missing_token)
        return frame

    @classmethod
    def from_arrays(cls, y, X, mask=None, col_names: Optional[Sequence[str]] = None,
                    response_name: str = 'y', standardize: bool = False) -> 'Dataset':
        """由数组构造；mask 缺省时以 NaN 表示缺失"""
        y = np.asarray(y, dtype=float).reshape(-1)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X 行数 {X.shape[0]} 与 y 长度 {y.shape[0]} 不一致")
        if mask is None:
            mask = ~np.isnan(X)
        mask = np.asarray(mask, dtype=bool)
        if col_names is None:
            col_names = [f"x{l + 1}" for l in range(X.shape[1])]
        X = np.where(mask, X, 0.0)
        return _build(y, X, mask, tuple(col_names), response_name, standardize)


def _column_stats(values: np.ndarray) -> Tuple[float, float]:
    center = float(np.mean(values))
    scale = float(np.std(values, ddof=1)) if values.size > 1 else 1.0
    if not scale > 0:
        scale = 1.0
    return center, scale


def _standardization(y, X, mask, pooled: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None):
    ys, Xs, ms = y, X, mask
    if pooled is not None:
        ys = np.concatenate([y, pooled[0]])
        Xs = np.vstack([X, pooled[1]])
        ms = np.vstack([mask, pooled[2]])
    y_center, y_scale = _column_stats(ys)
    p = X.shape[1]
    x_center, x_scale = np.zeros(p), np.ones(p)
    for l in range(p):
        x_center[l], x_scale[l] = _column_stats(Xs[ms[:, l], l])
    return y_center, y_scale, x_center, x_scale


def _build(y, X, mask, col_names, response_name, standardize, pooled=None) -> Dataset:
    if y.shape[0] < 1:
        raise DataError("数据集为空")
    for l, name in enumerate(col_names):
        if not mask[:, l].any():
            raise DataError(f"列 {name!r} 全部缺失")
    if not standardize:
        return Dataset(y=y, X=X, mask=mask, col_names=col_names, response_name=response_name)
    y_center, y_scale, x_center, x_scale = _standardization(y, X, mask, pooled)
    Xs = np.where(mask, (X - x_center) / x_scale, 0.0)
    return Dataset(
        y=(y - y_center) / y_scale, X=Xs, mask=mask, col_names=col_names,
        response_name=response_name, x_center=x_center, x_scale=x_scale,
        y_center=y_center, y_scale=y_scale, standardized=True,
    )


def _parse_frame(source, missing_token: str):
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, na_values=[])
    except FileNotFoundError as e:
        raise DataError(f"数据文件不存在: {source}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"无法解析 CSV {source}: {e}") from e
    values = np.zeros(frame.shape)
    observed = np.ones(frame.shape, dtype=bool)
    for c, name in enumerate(frame.columns):
        cells = frame[name].str.strip()
        missing = (cells == missing_token).to_numpy()
        parsed = pd.to_numeric(cells.where(~missing, '0'), errors='coerce').to_numpy(dtype=float)
        bad = ~np.isfinite(parsed) & ~missing
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DataError(f"第 {row + 1} 行列 {name!r} 的值 {frame[name].iloc[row]!r} 不是有限数值")
        values[:, c] = np.where(missing, 0.0, parsed)
        observed[:, c] = ~missing
    return frame, values, observed


def read_table(source, response_name: str, missing_token: str = 'NA', require_response: bool = True):
    """读取 CSV，返回 (y 或 None, X, mask, col_names)"""
    frame, values, observed = _parse_frame(source, missing_token)
    columns = list(frame.columns)
    y = None
    if response_name in columns:
        r = columns.index(response_name)
        if not observed[:, r].all():
            row = int(np.flatnonzero(~observed[:, r])[0])
            raise DataError(f"第 {row + 1} 行响应变量 {response_name!r} 缺失")
        y = values[:, r].copy()
        keep = [c for c in range(len(columns)) if c != r]
    elif require_response:
        raise DataError(f"响应列 {response_name!r} 不存在，可用列: {columns}")
    else:
        keep = list(range(len(columns)))
    X = values[:, keep]
    mask = observed[:, keep]
    return y, np.where(mask, X, 0.0), mask, tuple(columns[c] for c in keep)


def load_dataset(source, response_name: str = 'y', missing_token: str = 'NA',
                 standardize: bool = True, pooled_with=None) -> Dataset:
    """读取训练数据 CSV 并（可选）标准化

    pooled_with 给出第二个 CSV 时，标准化参数在两份数据的并集上计算。
    """
    y, X, mask, col_names = read_table(source, response_name, missing_token)
    pooled = None
    if standardize and pooled_with is not None:
        py, pX, pmask, pcols = read_table(pooled_with, response_name, missing_token)
        if pcols != col_names:
            raise SchemaError(f"合并标准化数据列 {pcols} 与训练数据列 {col_names} 不一致")
        pooled = (py, pX, pmask)
    dataset = _build(y, X, mask, col_names, response_name, standardize, pooled)
    logger.info("载入数据 %s: m=%d, p=%d, 缺失比例 %.3f",
                source, dataset.m, dataset.p, 1.0 - dataset.mask.mean() if dataset.p else 0.0)
    return dataset


@dataclass(frozen=True, eq=False)
class QueryData:
    """预测用的查询数据，已按训练数据的标准化参数变换"""
    X: np.ndarray
    mask: np.ndarray
    y: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.X.shape[0]


def load_query(source, train: Dataset, missing_token: str = 'NA') -> QueryData:
    """读取查询 CSV；列必须覆盖训练协变量，响应列可选"""
    y, X, mask, col_names = read_table(source, train.response_name, missing_token,
                                       require_response=False)
    missing = [name for name in train.col_names if name not in col_names]
    if missing:
        raise SchemaError(f"查询数据缺少列 {missing}")
    order = [col_names.index(name) for name in train.col_names]
    X, mask = X[:, order], mask[:, order]
    return QueryData(
        X=train.transform_X(X, mask), mask=mask,
        y=None if y is None else train.transform_y(y),
    )


def standardization_meta(dataset: Dataset) -> Dict[str, Any]:
    """标准化参数（写入清单）"""
    return {
        'standardized': dataset.standardized,
        'response': dataset.response_name,
        'columns': list(dataset.col_names),
        'x_center': dataset.x_center.tolist(),
        'x_scale': dataset.x_scale.tolist(),
        'y_center': dataset.y_center,
        'y_scale': dataset.y_scale,
    }


def internal_frame(dataset: Dataset, missing_token: str = 'NA') -> pd.DataFrame:
    """内部（标准化）尺度的数据表，配合 standardization_meta 可无损还原"""
    frame = pd.DataFrame({dataset.response_name: dataset.y})
    for l, name in enumerate(dataset.col_names):
        frame[name] = pd.Series(dataset.X[:, l], dtype=object).where(dataset.mask[:, l], missing_token)
    return frame


def dataset_from_internal(source, meta: Dict[str, Any], missing_token: str = 'NA') -> Dataset:
    """由 internal_frame 写出的 CSV 与标准化参数重建 Dataset"""
    y, X, mask, col_names = read_table(source, meta['response'], missing_token)
    if list(col_names) != list(meta['columns']):
        raise SchemaError(f"训练数据列 {col_names} 与清单 {meta['columns']} 不一致")
    return Dataset(
        y=y, X=X, mask=mask, col_names=tuple(col_names), response_name=meta['response'],
        x_center=np.asarray(meta['x_center'], dtype=float), x_scale=np.asarray(meta['x_scale'], dtype=float),
        y_center=float(meta['y_center']), y_scale=float(meta['y_scale']),
        standardized=bool(meta['standardized']),
    )
