"""
测试公共设置

把 src 目录加入 Python 路径，并提供 --runslow 选项：标记为 slow 的测试默认跳过。
"""

import sys
import os

import numpy as np
import pytest

# 添加src目录到Python路径
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="运行耗时较长的测试")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 耗时较长的测试（需要 --runslow）")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="需要 --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_square():
    from heatgfem.core.grid import Rectangle
    return Rectangle(0.0, 0.0, 1.0, 1.0)


@pytest.fixture
def small_local_problem():
    """4×4 单元、3 个时间步、α ≡ 1 的过采样局部问题"""
    from heatgfem.core.grid import Rectangle
    from heatgfem.core.coefficients import CoefficientField, field_box
    from heatgfem.core.transfer import build_local_problem

    outer = Rectangle(0.0, 0.0, 1.0, 1.0)
    inner = Rectangle(0.25, 0.25, 0.75, 0.75)
    alpha = CoefficientField.constant(field_box(1.0, outer))
    return build_local_problem(inner, outer, alpha, T=1.0, nsteps=3, h=0.25)
