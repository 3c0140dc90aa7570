"""
热传导系数与热源测试
"""

import sys
import os
import math

import numpy as np
import pytest

# 添加src目录到Python路径
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from heatgfem.core.exceptions import InvalidArgumentError
from heatgfem.core.grid import Rectangle, build_grid, grid_for_rectangle
from heatgfem.core.coefficients import (CoefficientField, SourceField, SwitchedRegion, FieldFamily, field_box,
                                        eval_alpha, eval_source, cellwise_alpha, cellwise_source)


@pytest.fixture
def example1_box():
    return field_box(1.0, Rectangle(0.0, 0.0, 0.75, 0.75))


@pytest.fixture
def example4_box():
    return field_box(0.5, Rectangle(0.0, 0.0, 5.0, 5.0))


def test_channels(example1_box):
    """通道内 10³，通道外 1"""
    alpha = CoefficientField.channels(example1_box, count=3)
    assert eval_alpha(alpha, 0.5, 0.335, 0.3) == 1e3
    assert eval_alpha(alpha, 0.5, 0.2, 0.3) == 1.0
    assert isinstance(alpha(0.5, 0.2, 0.3), float)
    assert (alpha.alpha0, alpha.alpha1) == (1.0, 1e3)

    # 只启用第一条通道
    one = CoefficientField.channels(example1_box, count=1)
    assert one(0.5, 0.375, 0.3) == 1.0
    assert CoefficientField.channels(example1_box, count=0).alpha1 == 1.0
    with pytest.raises(InvalidArgumentError):
        CoefficientField.channels(example1_box, count=4)


def test_multiscale():
    """ε=1 时 α(0,0,·) = 19"""
    box = field_box(0.4, Rectangle(0.0, 0.0, 0.9, 0.9))
    alpha = CoefficientField.multiscale(box, 1.0)
    assert alpha(0.0, 0.0, 0.5) == pytest.approx(19.0)
    assert alpha(0.0, 1.0 * 0.9, 0.0) == pytest.approx(10 + 8 * math.cos(0.9 * math.pi) + 1)
    with pytest.raises(InvalidArgumentError):
        CoefficientField.multiscale(box, 0.0)


def test_constant_and_bounds(example1_box):
    """常系数与上下界校验"""
    alpha = CoefficientField.constant(example1_box)
    assert alpha(0.3, 0.1, 0.7) == 1.0
    assert alpha.family == FieldFamily.CONSTANT
    with pytest.raises(InvalidArgumentError):
        CoefficientField.constant(example1_box, 0.0)


def test_out_of_box_query(example1_box):
    """定义域外查询报错"""
    alpha = CoefficientField.constant(example1_box)
    with pytest.raises(InvalidArgumentError):
        alpha(0.5, 0.8, 0.1)
    with pytest.raises(InvalidArgumentError):
        alpha(1.5, 0.1, 0.1)
    values = alpha(np.array([0.1, 0.2]), np.array([0.1, 0.2]), 0.3)
    assert values.shape == (2,)


def test_example3_source(example4_box):
    """中心点 t=0 处 f = π"""
    source = SourceField.example3(example4_box)
    assert eval_source(source, 0.0, 2.5, 2.5) == pytest.approx(math.pi)
    assert source(0.3, 0.0, 2.5) == pytest.approx(0.0)


def test_example4_source(example4_box):
    """加热区 1，冷却区 −1，其余 0"""
    source = SourceField.example4(example4_box)
    assert source(0.1, 2.0, 0.7) == -1.0
    assert source(0.1, 2.0, 4.3) == 1.0
    assert source(0.1, 2.0, 2.0) == 0.0
    assert SourceField.zero(example4_box)(0.2, 1.0, 1.0) == 0.0


def test_example4_alpha(example4_box):
    """通道关闭时 10⁻²，开启时 1；默认时间窗来源被记录"""
    alpha = CoefficientField.example4(example4_box)
    assert alpha.params["schedule_source"] == "default-windows"
    assert alpha(0.05, 2.5, 2.5) == pytest.approx(1e-2)
    assert alpha(0.3, 2.5, 2.5) == 1.0
    assert alpha(0.3, 2.0, 4.3) == 1.0
    assert alpha(0.3, 1.5, 2.5) == pytest.approx(1e-2)

    grid = grid_for_rectangle(example4_box.rect, 0.1, 0.5, 10)
    values = cellwise_alpha(alpha, grid)
    assert set(np.unique(values).tolist()) == {1.0, 1e-2}
    f = cellwise_source(SourceField.example4(example4_box), grid)
    assert set(np.unique(f).tolist()) <= {-1.0, 0.0, 1.0}

    custom = CoefficientField.example4(example4_box, [{"x": [2.4, 2.6], "y": [1.0, 4.0], "windows": []}])
    assert custom.params["schedule_source"] == "config"
    assert custom(0.05, 2.5, 2.5) == 1.0


def test_switched_region_windows():
    """空间开矩形，时间半开区间 [t_on, t_off)"""
    region = SwitchedRegion.from_dict({"x": [0, 1], "y": [0, 1], "windows": [[0.2, 0.4]]})
    assert region.active(0.2, 0.5, 0.5)
    assert not region.active(0.4, 0.5, 0.5)
    assert not region.active(0.3, 0.0, 0.5)
    assert SwitchedRegion.from_dict(region.to_dict()) == region
    with pytest.raises(InvalidArgumentError):
        SwitchedRegion.from_dict({"x": [0, 1], "y": [0, 1], "windows": [[0.4, 0.2]]})


def test_cellwise_alpha_constant():
    """常系数的中点采样恰为常数"""
    box = field_box(1.0, Rectangle(0, 0, 1, 1))
    grid = build_grid((0, 0), (1, 1), (3, 2), 1.0, 4)
    values = cellwise_alpha(CoefficientField.constant(box, 2.5), grid)
    assert values.shape == (4 * 6,)
    assert np.all(values == 2.5)
    assert np.all(cellwise_source(None, grid) == 0.0)
    with pytest.raises(InvalidArgumentError):
        cellwise_alpha(CoefficientField.constant(box), grid, subsamples=0)


def test_cellwise_alpha_layout():
    """时间片优先，同一时间片内单元按 y 再 x 排列"""
    box = field_box(1.0, Rectangle(0, 0, 1, 1))
    field = CoefficientField(FieldFamily.MULTISCALE, 0.5, 3.0, box, lambda t, x, y: 1.0 + x + t)
    grid = build_grid((0, 0), (1, 1), (2, 2), 1.0, 2)
    values = cellwise_alpha(field, grid).reshape(2, 4)
    assert values[0, 0] == pytest.approx(1.0 + 0.25 + 0.25)
    assert values[0, 1] == pytest.approx(1.0 + 0.75 + 0.25)
    assert values[1, 2] == pytest.approx(1.0 + 0.25 + 0.75)


def test_multiscale_bounds_on_cells():
    """ε=0.01 的逐单元取值落在 [α0, α1] 内"""
    box = field_box(0.4, Rectangle(0.0, 0.0, 0.9, 0.9))
    alpha = CoefficientField.multiscale(box, 0.01)
    grid = grid_for_rectangle(box.rect, 0.005, 0.4, 4)
    values = cellwise_alpha(alpha, grid)
    assert values.min() >= alpha.alpha0 and values.max() <= alpha.alpha1
    xm, _ = grid.cell_midpoints()
    expected = 10 + 8 * np.cos(np.pi * xm / 0.01) + np.cos(np.pi * 0.05 / 0.01)
    assert np.allclose(values[: grid.n_cells], expected)


def test_subsample_average():
    """s×s 子点平均"""
    box = field_box(1.0, Rectangle(0, 0, 1, 1))
    field = CoefficientField(FieldFamily.CONSTANT, 0.1, 10.0, box, lambda t, x, y: 1.0 + x ** 2)
    grid = build_grid((0, 0), (1, 1), (1, 1), 1.0, 1)
    midpoint = cellwise_alpha(field, grid, 1)
    averaged = cellwise_alpha(field, grid, 2)
    assert midpoint[0] == pytest.approx(1.25)
    assert averaged[0] == pytest.approx(1.0 + (0.25 ** 2 + 0.75 ** 2) / 2)


if __name__ == "__main__":
    pytest.main([__file__])
