# -*- coding: utf-8 -*-
"""
产出文件模块

原子写入（临时文件 + rename），确定性的 CSV/JSON 序列化，以及拟合目录的读写。
同一配置与种子下的 CSV 产物逐字节一致；耗时只写入清单 JSON。
"""

import json
import os
import tempfile
from contextlib import contextmanager
from typing import Any, Dict, Iterable

import numpy as np
import pandas as pd

from vdlreg.core.errors import DataError
from vdlreg.infrastructure.logging_config import logger

FLOAT_FORMAT = '%.17g'
MANIFEST = 'manifest.json'


@contextmanager
def atomic_output(path: str, mode: str = 'w'):
    """原子文件写入上下文管理器

    成功时把临时文件重命名为目标路径；异常时删除临时文件，目标文件保持原样。

    Example:
        with atomic_output('samples.csv') as f:
            frame.to_csv(f, index=False)
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp_', suffix=os.path.basename(path))
    handle = None
    try:
        handle = os.fdopen(fd, mode, encoding='utf-8', newline='') if 'b' not in mode else os.fdopen(fd, mode)
        yield handle
        handle.close()
        handle = None
        os.replace(tmp_path, path)  # 成功时提交
    except Exception:
        if handle is not None:
            try:
                handle.close()
            except OSError:
                pass  # 关闭失败时忽略
        try:
            os.remove(tmp_path)  # 异常时回滚
        except OSError:
            pass
        raise


def write_csv(frame: pd.DataFrame, path: str):
    """确定性 CSV：固定浮点格式与换行符"""
    with atomic_output(path) as f:
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.debug("写入 %s (%d 行)", path, len(frame))


def _to_jsonable(value: Any):
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(payload: Dict[str, Any], path: str):
    with atomic_output(path) as f:
        json.dump(_to_jsonable(payload), f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')


def read_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise DataError(f"文件不存在: {path}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"无法解析 JSON {path}: {e}") from e


def write_fit_dir(out_dir: str, frames: Dict[str, pd.DataFrame], manifest: Dict[str, Any]):
    """写出拟合目录：<name>.csv 若干 + manifest.json"""
    os.makedirs(out_dir, exist_ok=True)
    for name, frame in frames.items():
        write_csv(frame, os.path.join(out_dir, f"{name}.csv"))
    write_json(manifest, os.path.join(out_dir, MANIFEST))
    logger.info("拟合结果已写入 %s", out_dir)


def read_fit_dir(fit_dir: str, names: Iterable[str]):
    """读取拟合目录，返回 (frames, manifest)"""
    if not os.path.isdir(fit_dir):
        raise DataError(f"拟合目录不存在: {fit_dir}")
    manifest = read_json(os.path.join(fit_dir, MANIFEST))
    frames = {}
    for name in names:
        path = os.path.join(fit_dir, f"{name}.csv")
        if not os.path.exists(path):
            raise DataError(f"拟合目录缺少 {name}.csv: {fit_dir}")
        frames[name] = pd.read_csv(path, float_precision='round_trip')
    return frames, manifest
