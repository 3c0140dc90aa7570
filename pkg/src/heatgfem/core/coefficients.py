"""
热传导系数与热源

为所有实验族提供 α(t,x,y) 与 f(t,x,y) 的求值器，并声明一致上下界 α0 ≤ α ≤ α1。
组装阶段使用单元中点（时间取时间片中点）的逐单元取值。
"""

from typing import Dict, Any, Optional, Sequence, Tuple, Callable
from dataclasses import dataclass, field
from enum import Enum
import logging

import numpy as np

from .exceptions import InvalidArgumentError
from .grid import Rectangle, TensorGrid

logger = logging.getLogger("heatgfem.coefficients")

Evaluator = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

# 例 1 的高导通道（x 区间），y ∈ (0, 0.75)
EXAMPLE1_CHANNELS: Tuple[Tuple[float, float], ...] = ((0.33, 0.34), (0.37, 0.38), (0.41, 0.42))
EXAMPLE1_CHANNEL_HEIGHT = (0.0, 0.75)

# 例 4 的加热/冷却区域与通道开关时间窗
EXAMPLE4_HEAT = Rectangle(0.4, 4.0, 4.6, 4.6)
EXAMPLE4_COOL = Rectangle(0.4, 0.4, 4.6, 1.0)
EXAMPLE4_CHANNEL_SCHEDULE: Tuple[Dict[str, Any], ...] = (
    {"x": (0.6, 0.8), "y": (1.0, 4.0), "windows": ((0.0, 0.2), (0.35, 0.5))},
    {"x": (2.4, 2.6), "y": (1.0, 4.0), "windows": ((0.15, 0.45),)},
    {"x": (4.2, 4.4), "y": (1.0, 4.0), "windows": ((0.0, 0.2), (0.35, 0.5))},
)


class FieldFamily(str, Enum):
    """系数族"""
    CONSTANT = "constant"
    CHANNELS = "channels"
    MULTISCALE = "multiscale"
    SWITCHED_REGIONS = "switched-regions"


class SourceFamily(str, Enum):
    """热源族"""
    ZERO = "zero"
    CONSTANT_REGIONS = "constant-regions"
    ANALYTIC = "analytic"


@dataclass(frozen=True)
class SpaceTimeBox:
    """定义域 [t0, t1] × 矩形"""
    t0: float
    t1: float
    rect: Rectangle

    def check(self, t, x, y) -> None:
        tol = 1e-12 * max(1.0, self.t1 - self.t0, self.rect.diam)
        t, x, y = np.asarray(t, float), np.asarray(x, float), np.asarray(y, float)
        inside = (t >= self.t0 - tol) & (t <= self.t1 + tol) & self.rect.contains(x, y, tol)
        if not np.all(inside):
            bad = np.flatnonzero(~np.broadcast_to(inside, np.broadcast(t, x, y).shape).ravel())[0]
            tb, xb, yb = (np.broadcast_to(a, np.broadcast(t, x, y).shape).ravel()[bad] for a in (t, x, y))
            raise InvalidArgumentError(f"Point (t={tb}, x={xb}, y={yb}) lies outside the field box")

    def contains(self, t, x, y) -> np.ndarray:
        tol = 1e-12 * max(1.0, self.t1 - self.t0, self.rect.diam)
        return (t >= self.t0 - tol) & (t <= self.t1 + tol) & self.rect.contains(x, y, tol)

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {"t0": self.t0, "t1": self.t1, "rect": self.rect.to_dict()}


@dataclass(frozen=True)
class SwitchedRegion:
    """空间开矩形 + 时间窗并集；windows 为空表示始终开启"""
    rect: Rectangle
    windows: Tuple[Tuple[float, float], ...] = ()

    def active(self, t, x, y) -> np.ndarray:
        inside = (x > self.rect.x0) & (x < self.rect.x1) & (y > self.rect.y0) & (y < self.rect.y1)
        if not self.windows:
            return inside
        on = np.zeros(np.broadcast(t, x, y).shape, dtype=bool)
        for t_on, t_off in self.windows:
            on |= (t >= t_on) & (t < t_off)
        return inside & on

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {"rect": self.rect.to_dict(), "windows": [list(w) for w in self.windows]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SwitchedRegion":
        """从字典创建实例，也接受 {x: [a, b], y: [c, d], windows: [...]} 写法"""
        if "rect" in data:
            rect = Rectangle.from_dict(data["rect"])
        else:
            rect = Rectangle.from_bounds(data["x"], data["y"])
        windows = tuple((float(a), float(b)) for a, b in data.get("windows", ()))
        for a, b in windows:
            if not b > a:
                raise InvalidArgumentError(f"Empty time window ({a}, {b})")
        return cls(rect=rect, windows=windows)


def _evaluate(evaluator: Evaluator, box: SpaceTimeBox, t, x, y):
    box.check(t, x, y)
    scalar = np.ndim(t) == 0 and np.ndim(x) == 0 and np.ndim(y) == 0
    t, x, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float), np.asarray(y, float))
    values = np.asarray(evaluator(t, x, y), dtype=float)
    values = np.broadcast_to(values, t.shape)
    return float(values) if scalar else np.array(values)


@dataclass(frozen=True)
class CoefficientField:
    """热传导系数 α(t,x,y)"""
    family: FieldFamily
    alpha0: float
    alpha1: float
    box: SpaceTimeBox
    evaluator: Evaluator = field(repr=False, compare=False)
    params: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (0 < self.alpha0 <= self.alpha1):
            raise InvalidArgumentError(f"Invalid bounds alpha0={self.alpha0}, alpha1={self.alpha1}")

    def __call__(self, t, x, y):
        return eval_alpha(self, t, x, y)

    @classmethod
    def constant(cls, box: SpaceTimeBox, value: float = 1.0) -> "CoefficientField":
        """常系数"""
        return cls(FieldFamily.CONSTANT, value, value, box,
                   lambda t, x, y: np.full(np.shape(t), value, dtype=float), {"value": value})

    @classmethod
    def channels(cls, box: SpaceTimeBox, count: int = 3, contrast: float = 1e3,
                 positions: Sequence[Tuple[float, float]] = EXAMPLE1_CHANNELS,
                 height: Tuple[float, float] = EXAMPLE1_CHANNEL_HEIGHT) -> "CoefficientField":
        """高对比度通道：通道内 α = contrast，其余 1；前 count 条通道生效"""
        if not 0 <= count <= len(positions):
            raise InvalidArgumentError(f"Channel count must lie in [0, {len(positions)}], got {count}")
        regions = [SwitchedRegion(Rectangle(a, height[0], b, height[1])) for a, b in positions[:count]]

        def evaluate(t, x, y):
            mask = np.zeros(np.shape(x), dtype=bool)
            for region in regions:
                mask |= region.active(t, x, y)
            return np.where(mask, contrast, 1.0)

        upper = contrast if count > 0 else 1.0
        return cls(FieldFamily.CHANNELS, min(1.0, upper), max(1.0, upper), box, evaluate,
                   {"count": count, "contrast": contrast, "positions": [list(p) for p in positions[:count]]})

    @classmethod
    def multiscale(cls, box: SpaceTimeBox, eps: float) -> "CoefficientField":
        """α_ε = 10 + 8 cos(πx/ε) + cos(πt/ε)"""
        if not eps > 0:
            raise InvalidArgumentError(f"Scale parameter must be positive, got {eps}")

        def evaluate(t, x, y):
            return 10.0 + 8.0 * np.cos(np.pi * x / eps) + np.cos(np.pi * t / eps)

        return cls(FieldFamily.MULTISCALE, 1.0, 19.0, box, evaluate, {"eps": eps})

    @classmethod
    def switched_regions(cls, box: SpaceTimeBox, regions: Sequence[SwitchedRegion],
                         on_value: float = 1.0, off_value: float = 1e-2,
                         schedule_source: str = "config") -> "CoefficientField":
        """分区开关系数：任一区域激活时取 on_value，否则 off_value"""
        regions = tuple(regions)

        def evaluate(t, x, y):
            mask = np.zeros(np.broadcast(t, x, y).shape, dtype=bool)
            for region in regions:
                mask |= region.active(t, x, y)
            return np.where(mask, on_value, off_value)

        return cls(FieldFamily.SWITCHED_REGIONS, min(on_value, off_value), max(on_value, off_value), box,
                   evaluate, {"regions": [r.to_dict() for r in regions], "schedule_source": schedule_source})

    @classmethod
    def example4(cls, box: SpaceTimeBox,
                 schedule: Optional[Sequence[Dict[str, Any]]] = None) -> "CoefficientField":
        """加热/冷却区与可开关通道内 α = 1，其余 10⁻²"""
        source = "default-windows" if schedule is None else "config"
        channels = [SwitchedRegion.from_dict(item) for item in (schedule or EXAMPLE4_CHANNEL_SCHEDULE)]
        logger.info(f"Example 4 channel schedule source: {source}")
        regions = [SwitchedRegion(EXAMPLE4_HEAT), SwitchedRegion(EXAMPLE4_COOL)] + channels
        return cls.switched_regions(box, regions, 1.0, 1e-2, schedule_source=source)

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {"family": self.family.value, "alpha0": self.alpha0, "alpha1": self.alpha1,
                "box": self.box.to_dict(), "params": self.params}


@dataclass(frozen=True)
class SourceField:
    """热源 f(t,x,y)"""
    family: SourceFamily
    box: SpaceTimeBox
    evaluator: Evaluator = field(repr=False, compare=False)
    params: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __call__(self, t, x, y):
        return eval_source(self, t, x, y)

    @property
    def is_zero(self) -> bool:
        return self.family == SourceFamily.ZERO

    @classmethod
    def zero(cls, box: SpaceTimeBox) -> "SourceField":
        return cls(SourceFamily.ZERO, box, lambda t, x, y: np.zeros(np.shape(t)))

    @classmethod
    def constant_regions(cls, box: SpaceTimeBox,
                         regions: Sequence[Tuple[SwitchedRegion, float]]) -> "SourceField":
        """分区常值热源，区域重叠时后者覆盖前者"""
        regions = tuple(regions)

        def evaluate(t, x, y):
            values = np.zeros(np.broadcast(t, x, y).shape)
            for region, value in regions:
                values = np.where(region.active(t, x, y), value, values)
            return values

        return cls(SourceFamily.CONSTANT_REGIONS, box, evaluate,
                   {"regions": [dict(r.to_dict(), value=v) for r, v in regions]})

    @classmethod
    def example3(cls, box: SpaceTimeBox) -> "SourceField":
        """f = [π cos(πt) + 2π²/25 sin(πt)] sin(πx/5) sin(πy/5)"""

        def evaluate(t, x, y):
            temporal = np.pi * np.cos(np.pi * t) + 2.0 * np.pi ** 2 / 25.0 * np.sin(np.pi * t)
            return temporal * np.sin(np.pi * x / 5.0) * np.sin(np.pi * y / 5.0)

        return cls(SourceFamily.ANALYTIC, box, evaluate, {"name": "example3"})

    @classmethod
    def example4(cls, box: SpaceTimeBox) -> "SourceField":
        """加热区 f = 1，冷却区 f = −1"""
        return cls.constant_regions(box, [(SwitchedRegion(EXAMPLE4_HEAT), 1.0),
                                          (SwitchedRegion(EXAMPLE4_COOL), -1.0)])

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {"family": self.family.value, "box": self.box.to_dict(), "params": self.params}


def eval_alpha(field: CoefficientField, t, x, y):
    """在定义域内求 α 的值"""
    return _evaluate(field.evaluator, field.box, t, x, y)


def eval_source(field: SourceField, t, x, y):
    """在定义域内求 f 的值"""
    return _evaluate(field.evaluator, field.box, t, x, y)


def _cell_samples(evaluate: Callable, box: SpaceTimeBox, grid: TensorGrid, subsamples: int) -> np.ndarray:
    if subsamples < 1:
        raise InvalidArgumentError(f"subsamples must be >= 1, got {subsamples}")
    bounds = grid.bounds()
    box.check(np.array([0.0, grid.T]), np.array([bounds.x0, bounds.x1]), np.array([bounds.y0, bounds.y1]))

    xm, ym = grid.cell_midpoints()
    offsets = ((np.arange(subsamples) + 0.5) / subsamples - 0.5)
    ox, oy = np.meshgrid(offsets * grid.hx, offsets * grid.hy)
    px = (xm[None, :] + ox.ravel()[:, None])
    py = (ym[None, :] + oy.ravel()[:, None])

    values = np.empty((grid.nsteps, grid.n_cells))
    for n, t in enumerate(grid.slab_midpoints):
        samples = evaluate(np.full(px.shape, t), px, py)
        values[n] = np.mean(samples, axis=0)
    return values.ravel()


def cellwise_alpha(field: CoefficientField, grid: TensorGrid, subsamples: int = 1) -> np.ndarray:
    """每个 (时间片 × 空间单元) 一个 α 值，长度 nsteps·nx·ny

    subsamples=1 为单元时空中点取值；s>1 时在 s×s 子点上取算术平均。
    """
    return _cell_samples(field.evaluator, field.box, grid, subsamples)


def cellwise_source(field: Optional[SourceField], grid: TensorGrid, subsamples: int = 1) -> np.ndarray:
    """逐单元的热源值，布局同 cellwise_alpha"""
    if field is None or field.is_zero:
        return np.zeros(grid.nsteps * grid.n_cells)
    return _cell_samples(field.evaluator, field.box, grid, subsamples)


def field_box(T: float, rect: Rectangle) -> SpaceTimeBox:
    return SpaceTimeBox(0.0, float(T), rect)
