"""
时空张量积网格

负责构建四边形空间网格与均匀时间步的张量积离散，对自由度进行分类，
并提供嵌套区域之间的限制/零延拓索引映射。

自由度编号：时间层优先，其次 y，最后 x。t=0 层不携带 ansatz 自由度。
"""

from typing import List, Dict, Any, Optional, Sequence, Tuple
from dataclasses import dataclass, field
from enum import IntEnum
import hashlib
import json
import math

import numpy as np

from .exceptions import InvalidArgumentError, GridAlignmentError

ALIGNMENT_TOLERANCE = 1e-12
SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Rectangle:
    """轴对齐矩形 (x0, x1) × (y0, y1)"""
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise InvalidArgumentError(
                f"Degenerate rectangle ({self.x0}, {self.x1}) x ({self.y0}, {self.y1})"
            )

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def diam(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, x, y, tol: float = 0.0):
        """闭矩形包含判断（支持数组）"""
        return (
            (x >= self.x0 - tol) & (x <= self.x1 + tol)
            & (y >= self.y0 - tol) & (y <= self.y1 + tol)
        )

    def contains_rectangle(self, other: "Rectangle", tol: float = 0.0) -> bool:
        return bool(
            other.x0 >= self.x0 - tol and other.x1 <= self.x1 + tol
            and other.y0 >= self.y0 - tol and other.y1 <= self.y1 + tol
        )

    def overlaps(self, other: "Rectangle") -> bool:
        """是否存在正面积的交集"""
        return (
            min(self.x1, other.x1) > max(self.x0, other.x0)
            and min(self.y1, other.y1) > max(self.y0, other.y0)
        )

    def expanded(self, distance: float, clip: Optional["Rectangle"] = None) -> "Rectangle":
        """向外扩张 distance，并可裁剪到 clip 内"""
        x0, y0 = self.x0 - distance, self.y0 - distance
        x1, y1 = self.x1 + distance, self.y1 + distance
        if clip is not None:
            x0, y0 = max(x0, clip.x0), max(y0, clip.y0)
            x1, y1 = min(x1, clip.x1), min(y1, clip.y1)
        return Rectangle(x0, y0, x1, y1)

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {"x0": self.x0, "y0": self.y0, "x1": self.x1, "y1": self.y1}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Rectangle":
        """从字典创建实例"""
        return cls(float(data["x0"]), float(data["y0"]), float(data["x1"]), float(data["y1"]))

    @classmethod
    def from_bounds(cls, x: Sequence[float], y: Sequence[float]) -> "Rectangle":
        return cls(float(x[0]), float(y[0]), float(x[1]), float(y[1]))


def separation(inner: Rectangle, outer: Rectangle, domain: Optional[Rectangle] = None) -> float:
    """dist(∂Ω_in ∩ Ω, ∂Ω_out ∩ Ω)；外侧边落在全局边界上的方向不计入"""
    if not outer.contains_rectangle(inner, tol=ALIGNMENT_TOLERANCE * outer.diam):
        raise InvalidArgumentError(f"Inner domain {inner} is not contained in {outer}")
    tol = ALIGNMENT_TOLERANCE * outer.diam
    gaps = []
    candidates = [
        (inner.x0 - outer.x0, domain is not None and abs(outer.x0 - domain.x0) <= tol),
        (outer.x1 - inner.x1, domain is not None and abs(outer.x1 - domain.x1) <= tol),
        (inner.y0 - outer.y0, domain is not None and abs(outer.y0 - domain.y0) <= tol),
        (outer.y1 - inner.y1, domain is not None and abs(outer.y1 - domain.y1) <= tol),
    ]
    for gap, on_global_boundary in candidates:
        if not on_global_boundary:
            gaps.append(max(gap, 0.0))
    return min(gaps) if gaps else math.inf


@dataclass(frozen=True)
class TensorGrid:
    """张量积时空网格"""
    origin: Tuple[float, float]
    extent: Tuple[float, float]
    ncells: Tuple[int, int]
    T: float
    nsteps: int

    def __post_init__(self):
        if any(int(n) != n or n < 1 for n in self.ncells):
            raise InvalidArgumentError(f"Cell counts must be positive integers, got {self.ncells}")
        if int(self.nsteps) != self.nsteps or self.nsteps < 1:
            raise InvalidArgumentError(f"Number of time steps must be a positive integer, got {self.nsteps}")
        if any(not (e > 0) for e in self.extent):
            raise InvalidArgumentError(f"Extent must be positive, got {self.extent}")
        if not (self.T > 0):
            raise InvalidArgumentError(f"Final time must be positive, got {self.T}")

    # 基本尺寸
    @property
    def nx(self) -> int:
        return int(self.ncells[0])

    @property
    def ny(self) -> int:
        return int(self.ncells[1])

    @property
    def hx(self) -> float:
        return self.extent[0] / self.nx

    @property
    def hy(self) -> float:
        return self.extent[1] / self.ny

    @property
    def dt(self) -> float:
        return self.T / self.nsteps

    @property
    def n_spatial(self) -> int:
        """N_h = (nx+1)(ny+1)"""
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_dofs(self) -> int:
        """N = N_T · N_h"""
        return self.nsteps * self.n_spatial

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    # 坐标
    @property
    def x_coords(self) -> np.ndarray:
        return self.origin[0] + self.extent[0] * np.arange(self.nx + 1) / self.nx

    @property
    def y_coords(self) -> np.ndarray:
        return self.origin[1] + self.extent[1] * np.arange(self.ny + 1) / self.ny

    @property
    def time_levels(self) -> np.ndarray:
        """携带自由度的时间层 t_1, ..., t_N"""
        return self.T * np.arange(1, self.nsteps + 1) / self.nsteps

    @property
    def slab_midpoints(self) -> np.ndarray:
        return self.T * (np.arange(self.nsteps) + 0.5) / self.nsteps

    def bounds(self) -> Rectangle:
        x, y = self.x_coords, self.y_coords
        return Rectangle(float(x[0]), float(y[0]), float(x[-1]), float(y[-1]))

    def node_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """按 y 优先、x 次之的空间节点坐标"""
        xx, yy = np.meshgrid(self.x_coords, self.y_coords)
        return xx.ravel(), yy.ravel()

    def cell_midpoints(self) -> Tuple[np.ndarray, np.ndarray]:
        x, y = self.x_coords, self.y_coords
        xm, ym = np.meshgrid(0.5 * (x[:-1] + x[1:]), 0.5 * (y[:-1] + y[1:]))
        return xm.ravel(), ym.ravel()

    def cell_nodes(self) -> np.ndarray:
        """每个单元的 4 个节点编号，局部顺序 (0,0),(1,0),(0,1),(1,1)"""
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        i, j = i.ravel(), j.ravel()
        stride = self.nx + 1
        base = j * stride + i
        return np.stack([base, base + 1, base + stride, base + stride + 1], axis=1)

    def spatial_index(self, i, j):
        return j * (self.nx + 1) + i

    def dof_index(self, level, spatial):
        """时间层 level（0 对应 t_1）与空间节点的全局自由度编号"""
        return level * self.n_spatial + spatial

    def spatial_boundary_mask(self) -> np.ndarray:
        mask = np.zeros((self.ny + 1, self.nx + 1), dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask.ravel()

    # 嵌套
    def node_span(self, rect: Rectangle) -> Tuple[int, int, int, int]:
        """矩形顶点对应的节点下标 (i0, i1, j0, j1)；不对齐则报错"""
        i0 = self._axis_index(rect.x0, 0)
        i1 = self._axis_index(rect.x1, 0)
        j0 = self._axis_index(rect.y0, 1)
        j1 = self._axis_index(rect.y1, 1)
        return i0, i1, j0, j1

    def _axis_index(self, value: float, axis: int) -> int:
        n = self.ncells[axis]
        h = self.extent[axis] / n
        position = (value - self.origin[axis]) / h
        index = int(round(position))
        if abs(position - index) * h > ALIGNMENT_TOLERANCE * self.extent[axis] or not (0 <= index <= n):
            raise GridAlignmentError(
                f"Coordinate {value} is not a grid node along axis {'xy'[axis]}",
                coordinate=value,
            )
        return index

    def subgrid(self, rect: Rectangle) -> "TensorGrid":
        """由整数节点偏移构造嵌套子网格"""
        i0, i1, j0, j1 = self.node_span(rect)
        x, y = self.x_coords, self.y_coords
        return TensorGrid(
            origin=(float(x[i0]), float(y[j0])),
            extent=(float(x[i1] - x[i0]), float(y[j1] - y[j0])),
            ncells=(i1 - i0, j1 - j0),
            T=self.T,
            nsteps=self.nsteps,
        )

    def grid_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha1(payload.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "origin": list(self.origin),
            "extent": list(self.extent),
            "ncells": list(self.ncells),
            "T": self.T,
            "nsteps": self.nsteps,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TensorGrid":
        """从字典创建实例"""
        return build_grid(data["origin"], data["extent"], data["ncells"], data["T"], data["nsteps"])


def build_grid(origin: Sequence[float], extent: Sequence[float], ncells: Sequence[int],
               T: float, nsteps: int) -> TensorGrid:
    """构建时空网格"""
    if len(origin) != 2 or len(extent) != 2 or len(ncells) != 2:
        raise InvalidArgumentError("origin, extent and ncells must have two entries")
    for n in list(ncells) + [nsteps]:
        if isinstance(n, float) and not n.is_integer():
            raise InvalidArgumentError(f"Counts must be integers, got {n}")
    return TensorGrid(
        origin=(float(origin[0]), float(origin[1])),
        extent=(float(extent[0]), float(extent[1])),
        ncells=(int(ncells[0]), int(ncells[1])),
        T=float(T),
        nsteps=int(nsteps),
    )


def grid_for_rectangle(rect: Rectangle, h: float, T: float, nsteps: int) -> TensorGrid:
    """按网格尺寸 h 在矩形上建网格；边长须为 h 的整数倍"""
    counts = []
    for length in (rect.width, rect.height):
        n = int(round(length / h))
        if n < 1 or abs(n * h - length) > 1e-9 * max(length, 1.0):
            raise GridAlignmentError(f"Side length {length} is not a multiple of mesh size {h}", coordinate=length)
        counts.append(n)
    return build_grid((rect.x0, rect.y0), (rect.width, rect.height), counts, T, nsteps)


class DofKind(IntEnum):
    """自由度分类"""
    INTERIOR = 0
    LATERAL = 1
    GLOBAL_DIRICHLET = 2
    GLOBAL_NEUMANN = 3


@dataclass(frozen=True)
class DofMap:
    """父网格自由度到选定子集的索引映射"""
    size: int
    indices: np.ndarray
    subgrid: Optional[TensorGrid] = None
    kinds: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self) -> int:
        return int(self.indices.size)

    def restrict(self, vector: np.ndarray) -> np.ndarray:
        if vector.shape[0] != self.size:
            raise InvalidArgumentError(f"Expected leading dimension {self.size}, got {vector.shape[0]}")
        return vector[self.indices]

    def extend(self, vector: np.ndarray) -> np.ndarray:
        """零延拓到父网格"""
        if vector.shape[0] != self.indices.size:
            raise InvalidArgumentError(f"Expected leading dimension {self.indices.size}, got {vector.shape[0]}")
        out = np.zeros((self.size,) + vector.shape[1:], dtype=np.result_type(vector, float))
        out[self.indices] = vector
        return out


def restriction_map(grid_out: TensorGrid, target: Rectangle) -> DofMap:
    """选取空间节点落在闭矩形 target 内的所有时间层自由度"""
    i0, i1, j0, j1 = grid_out.node_span(target)
    ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1))
    spatial = grid_out.spatial_index(ii.ravel(), jj.ravel())
    levels = np.arange(grid_out.nsteps)[:, None] * grid_out.n_spatial
    indices = (levels + spatial[None, :]).ravel()
    return DofMap(size=grid_out.n_dofs, indices=indices, subgrid=grid_out.subgrid(target))


def spatial_node_kinds(grid: TensorGrid, global_domain: Optional[Rectangle] = None,
                       neumann_sides: Sequence[str] = ()) -> np.ndarray:
    """空间节点分类；Dirichlet 与 Neumann 边相交处按 Dirichlet 处理"""
    unknown = set(neumann_sides) - set(SIDES)
    if unknown:
        raise InvalidArgumentError(f"Unknown boundary sides: {sorted(unknown)}")
    kinds = np.full(grid.n_spatial, DofKind.INTERIOR, dtype=np.int8)
    kinds[grid.spatial_boundary_mask()] = DofKind.LATERAL
    if global_domain is None:
        return kinds

    x, y = grid.node_coordinates()
    tol = ALIGNMENT_TOLERANCE * global_domain.diam
    on_side = {
        "left": np.abs(x - global_domain.x0) <= tol,
        "right": np.abs(x - global_domain.x1) <= tol,
        "bottom": np.abs(y - global_domain.y0) <= tol,
        "top": np.abs(y - global_domain.y1) <= tol,
    }
    boundary = kinds == DofKind.LATERAL
    for side in neumann_sides:
        kinds[boundary & on_side[side]] = DofKind.GLOBAL_NEUMANN
    for side in SIDES:
        if side not in neumann_sides:
            kinds[boundary & on_side[side]] = DofKind.GLOBAL_DIRICHLET
    return kinds


def classify_dofs(grid: TensorGrid, global_domain: Optional[Rectangle] = None,
                  neumann_sides: Sequence[str] = ()) -> np.ndarray:
    """每个时空自由度的 DofKind"""
    return np.tile(spatial_node_kinds(grid, global_domain, neumann_sides), grid.nsteps)


def boundary_dofs(grid: TensorGrid, selector: str = "lateral",
                  global_domain: Optional[Rectangle] = None,
                  neumann_sides: Sequence[str] = ()) -> np.ndarray:
    """按选择器返回有序的边界自由度集合

    selector: lateral | initial | dirichlet | neumann。initial 恒为空集，
    因为 t=0 层没有 ansatz 自由度。dirichlet 在未给出全局区域时取网格自身边界。
    """
    if selector == "initial":
        return np.zeros(0, dtype=np.int64)
    if selector == "lateral":
        spatial = np.flatnonzero(grid.spatial_boundary_mask())
    elif selector == "dirichlet":
        domain = global_domain if global_domain is not None else grid.bounds()
        kinds = spatial_node_kinds(grid, domain, neumann_sides)
        spatial = np.flatnonzero(kinds == DofKind.GLOBAL_DIRICHLET)
    elif selector == "neumann":
        if global_domain is None:
            return np.zeros(0, dtype=np.int64)
        kinds = spatial_node_kinds(grid, global_domain, neumann_sides)
        spatial = np.flatnonzero(kinds == DofKind.GLOBAL_NEUMANN)
    else:
        raise InvalidArgumentError(f"Unknown boundary selector: {selector}")
    levels = np.arange(grid.nsteps)[:, None] * grid.n_spatial
    return (levels + spatial[None, :]).ravel().astype(np.int64)


def boundary_edges(grid: TensorGrid) -> List[Dict[str, Any]]:
    """四条边界上的边段：端点节点、长度、相邻单元和外法向"""
    i = np.arange(grid.nx)
    j = np.arange(grid.ny)
    s = grid.spatial_index
    return [
        {"side": "bottom", "nodes": np.stack([s(i, 0), s(i + 1, 0)], 1), "length": grid.hx,
         "cells": 0 * grid.nx + i, "normal": (0.0, -1.0)},
        {"side": "top", "nodes": np.stack([s(i, grid.ny), s(i + 1, grid.ny)], 1), "length": grid.hx,
         "cells": (grid.ny - 1) * grid.nx + i, "normal": (0.0, 1.0)},
        {"side": "left", "nodes": np.stack([s(0, j), s(0, j + 1)], 1), "length": grid.hy,
         "cells": j * grid.nx, "normal": (-1.0, 0.0)},
        {"side": "right", "nodes": np.stack([s(grid.nx, j), s(grid.nx, j + 1)], 1), "length": grid.hy,
         "cells": j * grid.nx + grid.nx - 1, "normal": (1.0, 0.0)},
    ]
