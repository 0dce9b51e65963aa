# -*- coding: utf-8 -*-
"""
采样原语模块

广义逆高斯、逆高斯随机数，单变量切片采样（有界支撑用收缩、无界支撑用加倍），
以及对角高斯先验下的椭圆切片采样。
"""

import math
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import stats

from vdlreg.core.errors import SamplerError

MAX_SHRINK_STEPS = 10_000


def gig_sample(lam: float, a: float, b: float, rng: np.random.Generator, size=None):
    """GIG(λ, a, b)：密度 ∝ x^(λ-1) exp(-(a x + b / x) / 2)，参数可广播"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(a > 0) and np.all(b > 0)):
        raise ValueError(f"GIG 参数要求 a, b > 0，收到 a={a}, b={b}")
    omega = np.sqrt(a * b)
    scale = np.sqrt(b / a)
    return stats.geninvgauss.rvs(lam, omega, scale=scale, size=size, random_state=rng)


def invgauss_sample(mean, shape, rng: np.random.Generator, size=None):
    """逆高斯 IG(mean, shape)"""
    if np.any(np.asarray(mean) <= 0) or np.any(np.asarray(shape) <= 0):
        raise ValueError("逆高斯参数要求 mean, shape > 0")
    return rng.wald(mean, shape, size=size)


def slice_sample(logpdf: Callable[[float], float], x0: float, rng: np.random.Generator,
                 bounds: Tuple[float, float] = (-math.inf, math.inf), width: float = 1.0,
                 max_doublings: int = 20, logpdf_x0: Optional[float] = None) -> Tuple[float, int]:
    """单变量切片采样，返回 (新值, 目标函数调用次数)

    两端都有界时，从整个区间开始收缩；否则用加倍法确定区间并做可接受性检验。
    返回点的目标值总不低于切片水平。
    """
    lo, hi = bounds
    if not lo < x0 < hi:
        raise ValueError(f"初始点 {x0} 不在支撑 ({lo}, {hi}) 内")
    if not width > 0:
        raise ValueError("切片宽度必须 > 0")
    evals = 0

    def f(x):
        nonlocal evals
        if not lo < x < hi:
            return -math.inf
        evals += 1
        return logpdf(x)

    fx0 = f(x0) if logpdf_x0 is None else logpdf_x0
    if not math.isfinite(fx0):
        raise SamplerError(f"切片采样初始点的目标值非有限: {fx0}", {'x0': x0})
    level = fx0 - rng.exponential()

    bounded = math.isfinite(lo) and math.isfinite(hi)
    if bounded:
        left, right = lo, hi
    else:
        left = x0 - width * rng.uniform()
        right = left + width
        f_left, f_right = f(left), f(right)
        k = max_doublings
        while k > 0 and (level < f_left or level < f_right):
            if rng.uniform() < 0.5:
                left -= right - left
                f_left = f(left)
            else:
                right += right - left
                f_right = f(right)
            k -= 1

    a, b = left, right
    for _ in range(MAX_SHRINK_STEPS):
        x1 = a + rng.uniform() * (b - a)
        f1 = f(x1)
        if level < f1 and (bounded or _doubling_accept(f, x0, x1, left, right, width, level)):
            return x1, evals
        if x1 < x0:
            a = x1
        else:
            b = x1
    raise SamplerError("切片采样收缩步数超限", {'x0': x0, 'interval': (a, b)})


def _doubling_accept(f, x0: float, x1: float, left: float, right: float,
                     width: float, level: float) -> bool:
    """加倍法的可接受性检验：x0 能否从 x1 出发加倍得到同一区间"""
    differ = False
    while right - left > 1.1 * width:
        mid = 0.5 * (left + right)
        if (x0 < mid) != (x1 < mid):
            differ = True
        if x1 < mid:
            right = mid
        else:
            left = mid
        if differ and level >= f(left) and level >= f(right):
            return False
    return True


def elliptical_slice(x0: np.ndarray, prior_sd: np.ndarray, loglik: Callable[[np.ndarray], float],
                     rng: np.random.Generator, cur_loglik: Optional[float] = None,
                     max_shrink: int = 100) -> Tuple[np.ndarray, float, int]:
    """零均值对角高斯先验 N(0, diag(prior_sd²)) 下的椭圆切片采样

    返回 (新值, 新值的对数似然, 收缩次数)；超过 max_shrink 时保持原值。
    """
    x0 = np.asarray(x0, dtype=float)
    if cur_loglik is None:
        cur_loglik = loglik(x0)
    nu = prior_sd * rng.standard_normal(x0.shape)
    level = cur_loglik - rng.exponential()
    phi = rng.uniform(0.0, 2.0 * math.pi)
    phi_min, phi_max = phi - 2.0 * math.pi, phi
    for shrinks in range(max_shrink):
        x1 = x0 * math.cos(phi) + nu * math.sin(phi)
        ll = loglik(x1)
        if ll > level:
            return x1, ll, shrinks
        if phi < 0.0:
            phi_min = phi
        else:
            phi_max = phi
        phi = rng.uniform(phi_min, phi_max)
    return x0, cur_loglik, max_shrink
