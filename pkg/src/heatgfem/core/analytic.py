"""
解析参考解

Example-3 的构造解，以及分离变量得到的反例级数：
u = t 的梯度为零，但其分解 u = ũ + û 中 ũ 的梯度不为零。
"""

from typing import Callable, Tuple, Union
import logging
import math

import numpy as np

from .exceptions import InvalidArgumentError
from .grid import TensorGrid, build_grid, boundary_dofs
from .assembly import Scheme, assemble_system, impose_dirichlet_rows, solve

logger = logging.getLogger("heatgfem.analytic")

ArrayLike = Union[float, np.ndarray]

DEFAULT_ORDER = 50
CHUNK_POINTS = 1024


def example3_solution(t: ArrayLike, x: ArrayLike, y: ArrayLike) -> np.ndarray:
    """u(t,x,y) = sin(πt) sin(πx/5) sin(πy/5)"""
    t, x, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float), np.asarray(y, float))
    return np.sin(np.pi * t) * np.sin(np.pi * x / 5.0) * np.sin(np.pi * y / 5.0)


def nodal_values(func: Callable, grid: TensorGrid) -> np.ndarray:
    """函数在全部时空自由度上的节点值（时间层优先排序）"""
    x, y = grid.node_coordinates()
    return np.concatenate([np.asarray(func(np.full(x.shape, t), x, y), float) for t in grid.time_levels])


def _odd_modes(K: int) -> np.ndarray:
    if int(K) != K or K < 1:
        raise InvalidArgumentError(f"Series order must be a positive integer, got {K}")
    return 2.0 * np.arange(int(K)) + 1.0


def _series_coefficients(K: int) -> Tuple[np.ndarray, np.ndarray]:
    """c_kl = 16 / (k l λ π²) 与 λ = k² + l²"""
    k = _odd_modes(K)
    lam = k[:, None] ** 2 + k[None, :] ** 2
    coeff = 16.0 / (k[:, None] * k[None, :] * lam * np.pi ** 2)
    return coeff, lam


def _series_sum(t: np.ndarray, x1: np.ndarray, x2: np.ndarray, K: int,
                derivative: Tuple[int, int] = (0, 0)) -> np.ndarray:
    k = _odd_modes(K)
    coeff, lam = _series_coefficients(K)
    if derivative[0]:
        coeff = coeff * k[:, None]
    if derivative[1]:
        coeff = coeff * k[None, :]
    first = np.cos if derivative[0] else np.sin
    second = np.cos if derivative[1] else np.sin
    out = np.empty(t.size)
    for start in range(0, t.size, CHUNK_POINTS):
        sl = slice(start, start + CHUNK_POINTS)
        growth = 1.0 - np.exp(-lam[None, :, :] * t[sl, None, None])
        out[sl] = np.einsum("pk,pl,pkl,kl->p", first(np.outer(x1[sl], k)), second(np.outer(x2[sl], k)),
                            growth, coeff)
    return out


def counterexample_fields(t: ArrayLike, x1: ArrayLike, x2: ArrayLike,
                          K: int = DEFAULT_ORDER) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(u, ũ, û)：ũ 为截断级数加 t，û = −ũ + t，u = t"""
    t, x1, x2 = np.broadcast_arrays(np.asarray(t, float), np.asarray(x1, float), np.asarray(x2, float))
    shape = t.shape
    series = _series_sum(t.ravel(), x1.ravel(), x2.ravel(), K).reshape(shape)
    u_tilde = -series + t
    u_hat = -u_tilde + t
    return np.array(t, copy=True), u_tilde, u_hat


def counterexample_gradient(t: ArrayLike, x1: ArrayLike, x2: ArrayLike,
                            K: int = DEFAULT_ORDER) -> Tuple[np.ndarray, np.ndarray]:
    """∇ũ = (∂ũ/∂x1, ∂ũ/∂x2)"""
    t, x1, x2 = np.broadcast_arrays(np.asarray(t, float), np.asarray(x1, float), np.asarray(x2, float))
    shape = t.shape
    args = (t.ravel(), x1.ravel(), x2.ravel(), K)
    d1 = -_series_sum(*args, derivative=(1, 0)).reshape(shape)
    d2 = -_series_sum(*args, derivative=(0, 1)).reshape(shape)
    return d1, d2


def series_gradient_norm(K: int = DEFAULT_ORDER, T: float = 1.0) -> float:
    """‖∇ũ‖_{L²((0,T)×(0,π)²)} 的闭式值（Parseval）"""
    coeff, lam = _series_coefficients(K)
    growth = T - 2.0 * (1.0 - np.exp(-lam * T)) / lam + (1.0 - np.exp(-2.0 * lam * T)) / (2.0 * lam)
    return math.sqrt(float(np.sum(coeff ** 2 * lam * growth)) * np.pi ** 2 / 4.0)


def counterexample_grid(ncells: int, nsteps: int, T: float = 1.0) -> TensorGrid:
    return build_grid((0.0, 0.0), (np.pi, np.pi), (ncells, ncells), T, nsteps)


def solve_counterexample(grid: TensorGrid,
                         scheme: Union[Scheme, str] = Scheme.PETROV_GALERKIN) -> np.ndarray:
    """有限元求解 ũ_t − Δũ = 0，侧边界 ũ = t，初值为零"""
    system = assemble_system(grid, None, scheme)
    lateral = boundary_dofs(grid, "lateral")
    impose_dirichlet_rows(system, lateral)
    rhs = np.zeros(grid.n_dofs)
    rhs[lateral] = grid.time_levels[lateral // grid.n_spatial]
    logger.info(f"Solving counterexample problem on {grid.nx}x{grid.ny} cells, {grid.nsteps} steps")
    return solve(system, rhs)
