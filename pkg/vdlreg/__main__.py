#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
入口点模块

支持 python -m vdlreg 方式启动
"""

import sys

from vdlreg.cli.app import main

if __name__ == '__main__':
    sys.exit(main())
