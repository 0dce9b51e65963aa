# -*- coding: utf-8 -*-
"""
异常层次模块

用户错误（数据、配置、模式不匹配）与内部错误（采样器、状态不变量）分开，
CLI 据此映射退出码 1 / 2。
"""

from typing import Any, Dict, Optional


class VdlregError(Exception):
    """vdlreg 所有异常的基类"""


class UserError(VdlregError):
    """由输入引起、用户可以修正的错误（退出码 1）"""


class DataError(UserError):
    """CSV 解析、缺失响应、全缺失列等数据问题"""


class ConfigError(UserError):
    """配置校验失败，消息中带有字段路径，例如 ``mcmc.thin``"""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class SchemaError(UserError):
    """查询数据的列与训练数据不一致"""


class InternalError(VdlregError):
    """程序内部逻辑错误（退出码 2）"""


class StateError(InternalError):
    """分区状态不变量被破坏或非法移动"""


class SamplerError(InternalError):
    """采样过程中出现非有限对数后验等异常，附带诊断信息"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
