# -*- coding: utf-8 -*-
"""
vdlreg 命令行层模块

包含命令协调器与参数解析入口。
"""

from .app import VdlregApp, build_parser, main

__all__ = ['VdlregApp', 'build_parser', 'main']
