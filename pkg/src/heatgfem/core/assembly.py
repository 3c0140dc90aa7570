"""
时空系统组装

组装时空系统矩阵 B（Petrov-Galerkin 或隐式 Euler）、载荷向量、Dirichlet 行替换，
以及各类 Gram 矩阵（α 加权时空 H¹ 半范数、α 加权迹 L² 范数等）。

B 按时间片分块存储：对角块 D_n 与次对角块 L_n。求解采用块前代（转置时块回代），
每个不同的对角块只做一次稀疏 LU 分解并缓存。
"""

from typing import List, Dict, Any, Optional, Sequence, Union
from dataclasses import dataclass, field
from enum import Enum
import hashlib
import logging
import threading

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import InvalidArgumentError, SolverError, GramDegeneracyError, MemoryGuardError
from .grid import TensorGrid, boundary_dofs, boundary_edges
from .coefficients import CoefficientField, SourceField, cellwise_alpha, cellwise_source

logger = logging.getLogger("heatgfem.assembly")

AlphaLike = Union[CoefficientField, np.ndarray, None]


class Scheme(str, Enum):
    """时间离散格式"""
    PETROV_GALERKIN = "petrov-galerkin"
    IMPLICIT_EULER = "implicit-euler"


class NormTag(str, Enum):
    """Gram 矩阵对应的范数"""
    H1_SEMINORM_ALPHA = "h1-seminorm-alpha"
    TRACE_L2_ALPHA = "trace-l2-alpha"
    TRACE_L2 = "trace-l2"
    L2_ALPHA = "l2-alpha"
    L2 = "l2"
    TIME_DERIVATIVE_L2 = "time-derivative-l2"
    V_NORM_ALPHA = "v-norm-alpha"


# 一维线性元
def _line_mass(h: float) -> np.ndarray:
    return h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])


def _line_stiffness(h: float) -> np.ndarray:
    return 1.0 / h * np.array([[1.0, -1.0], [-1.0, 1.0]])


def element_mass(hx: float, hy: float) -> np.ndarray:
    """双线性四边形单元质量矩阵"""
    return np.kron(_line_mass(hy), _line_mass(hx))


def element_stiffness(hx: float, hy: float) -> np.ndarray:
    """双线性四边形单元刚度矩阵"""
    return np.kron(_line_mass(hy), _line_stiffness(hx)) + np.kron(_line_stiffness(hy), _line_mass(hx))


def _assemble_cells(grid: TensorGrid, element: np.ndarray, weights: Optional[np.ndarray]) -> sp.csr_matrix:
    nodes = grid.cell_nodes()
    w = np.ones(grid.n_cells) if weights is None else np.asarray(weights, float)
    rows = np.broadcast_to(nodes[:, :, None], (grid.n_cells, 4, 4)).ravel()
    cols = np.broadcast_to(nodes[:, None, :], (grid.n_cells, 4, 4)).ravel()
    data = (w[:, None, None] * element[None, :, :]).ravel()
    n = grid.n_spatial
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def spatial_mass(grid: TensorGrid, weights: Optional[np.ndarray] = None) -> sp.csr_matrix:
    return _assemble_cells(grid, element_mass(grid.hx, grid.hy), weights)


def spatial_stiffness(grid: TensorGrid, weights: Optional[np.ndarray] = None) -> sp.csr_matrix:
    return _assemble_cells(grid, element_stiffness(grid.hx, grid.hy), weights)


def _alpha_slabs(grid: TensorGrid, alpha: AlphaLike, subsamples: int = 1) -> np.ndarray:
    if alpha is None:
        values = np.ones(grid.nsteps * grid.n_cells)
    elif isinstance(alpha, CoefficientField):
        values = cellwise_alpha(alpha, grid, subsamples)
    else:
        values = np.asarray(alpha, float)
    if values.size != grid.nsteps * grid.n_cells:
        raise InvalidArgumentError(
            f"Expected {grid.nsteps * grid.n_cells} cell values, got {values.size}"
        )
    return values.reshape(grid.nsteps, grid.n_cells)


def _slab_key(values: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(values).tobytes()).hexdigest()


class _SlabCache:
    """按系数指纹缓存每个时间片的空间矩阵"""

    def __init__(self, grid: TensorGrid, slabs: np.ndarray, builder):
        self.keys = [_slab_key(v) for v in slabs]
        self._matrices: Dict[str, sp.csr_matrix] = {}
        for key, values in zip(self.keys, slabs):
            if key not in self._matrices:
                self._matrices[key] = builder(grid, values)

    def __getitem__(self, n: int) -> sp.csr_matrix:
        return self._matrices[self.keys[n]]


@dataclass
class SpaceTimeSystem:
    """时空系统 B 的分块表示"""
    grid: TensorGrid
    scheme: Scheme
    diagonal_blocks: List[sp.csr_matrix]
    lower_blocks: List[sp.csr_matrix]
    alpha_keys: List[str]
    dirichlet_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    _factors: Dict[str, Any] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def size(self) -> int:
        return self.grid.n_dofs

    @property
    def matrix(self) -> sp.csr_matrix:
        """完整稀疏矩阵 B"""
        nt = self.grid.nsteps
        blocks: List[List[Optional[sp.csr_matrix]]] = [[None] * nt for _ in range(nt)]
        for n in range(nt):
            blocks[n][n] = self.diagonal_blocks[n]
            if n > 0:
                blocks[n][n - 1] = self.lower_blocks[n]
        return sp.bmat(blocks, format="csr")

    def _as_levels(self, vector: np.ndarray) -> np.ndarray:
        if vector.shape[0] != self.size:
            raise InvalidArgumentError(f"Expected leading dimension {self.size}, got {vector.shape[0]}")
        return vector.reshape((self.grid.nsteps, self.grid.n_spatial) + vector.shape[1:])

    def apply(self, vector: np.ndarray) -> np.ndarray:
        """B u"""
        u = self._as_levels(vector)
        out = np.empty_like(u, dtype=float)
        for n in range(self.grid.nsteps):
            out[n] = self.diagonal_blocks[n] @ u[n]
            if n > 0:
                out[n] += self.lower_blocks[n] @ u[n - 1]
        return out.reshape(vector.shape)

    def apply_transpose(self, vector: np.ndarray) -> np.ndarray:
        """Bᵀ v"""
        v = self._as_levels(vector)
        out = np.empty_like(v, dtype=float)
        last = self.grid.nsteps - 1
        for n in range(self.grid.nsteps):
            out[n] = self.diagonal_blocks[n].T @ v[n]
            if n < last:
                out[n] += self.lower_blocks[n + 1].T @ v[n + 1]
        return out.reshape(vector.shape)

    def _block_key(self, n: int) -> str:
        slab = self.dirichlet_dofs[(self.dirichlet_dofs >= n * self.grid.n_spatial)
                                   & (self.dirichlet_dofs < (n + 1) * self.grid.n_spatial)]
        rows = slab - n * self.grid.n_spatial
        return self.alpha_keys[n] + hashlib.sha1(rows.tobytes()).hexdigest()

    def factor(self, n: int):
        """第 n 个对角块的 LU 分解（缓存，线程安全）"""
        key = self._block_key(n)
        with self._lock:
            lu = self._factors.get(key)
            if lu is None:
                try:
                    lu = splu(self.diagonal_blocks[n].tocsc())
                except RuntimeError as e:
                    raise SolverError(f"Sparse LU of time slab {n} failed: {e}") from e
                self._factors[key] = lu
                logger.debug(f"Factorized diagonal block {n} ({len(self._factors)} distinct factors)")
        return lu

    def clear_factors(self) -> None:
        with self._lock:
            self._factors.clear()


def assemble_system(grid: TensorGrid, alpha: AlphaLike, scheme: Union[Scheme, str] = Scheme.PETROV_GALERKIN,
                    subsamples: int = 1) -> SpaceTimeSystem:
    """组装时空系统矩阵

    Petrov-Galerkin: D_n = M + Δt/2 K_n, L_n = −M + Δt/2 K_n（等价于 Crank-Nicolson）；
    隐式 Euler: D_n = M + Δt K_n, L_n = −M。
    """
    scheme = Scheme(scheme)
    slabs = _alpha_slabs(grid, alpha, subsamples)
    mass = spatial_mass(grid)
    stiffness = _SlabCache(grid, slabs, spatial_stiffness)
    dt = grid.dt

    diagonal, lower = [], []
    for n in range(grid.nsteps):
        k = stiffness[n]
        if scheme == Scheme.PETROV_GALERKIN:
            diagonal.append((mass + 0.5 * dt * k).tocsr())
            lower.append((-mass + 0.5 * dt * k).tocsr())
        else:
            diagonal.append((mass + dt * k).tocsr())
            lower.append((-mass).tocsr())

    logger.info(f"Assembled {scheme.value} system with {grid.n_dofs} DOFs ({grid.nsteps} slabs)")
    return SpaceTimeSystem(grid=grid, scheme=scheme, diagonal_blocks=diagonal,
                           lower_blocks=lower, alpha_keys=stiffness.keys)


def impose_dirichlet_rows(system: SpaceTimeSystem, dof_set: Sequence[int]) -> None:
    """将 dof_set 对应的行替换为单位阵的行（原地，幂等）"""
    dofs = np.unique(np.asarray(dof_set, dtype=np.int64))
    if dofs.size == 0:
        return
    if dofs[0] < 0 or dofs[-1] >= system.size:
        raise InvalidArgumentError(f"Dirichlet DOFs out of range [0, {system.size})")

    n_h = system.grid.n_spatial
    for n in range(system.grid.nsteps):
        rows = dofs[(dofs >= n * n_h) & (dofs < (n + 1) * n_h)] - n * n_h
        if rows.size == 0:
            continue
        keep = np.ones(n_h)
        keep[rows] = 0.0
        zero = sp.diags(keep)
        system.diagonal_blocks[n] = (zero @ system.diagonal_blocks[n] + sp.diags(1.0 - keep)).tocsr()
        system.lower_blocks[n] = (zero @ system.lower_blocks[n]).tocsr()
        system.diagonal_blocks[n].eliminate_zeros()
        system.lower_blocks[n].eliminate_zeros()

    system.dirichlet_dofs = np.union1d(system.dirichlet_dofs, dofs)
    system.clear_factors()


def assemble_load(grid: TensorGrid, source: Union[SourceField, np.ndarray, None],
                  dirichlet_dofs: Optional[Sequence[int]] = None, subsamples: int = 1) -> np.ndarray:
    """载荷向量 F_i = (f, ψ_i)，单元中点求积；Dirichlet 自由度处为 0

    dirichlet_dofs 缺省时取网格侧边界。
    """
    if isinstance(source, np.ndarray):
        values = source.reshape(grid.nsteps, grid.n_cells)
    else:
        values = cellwise_source(source, grid, subsamples).reshape(grid.nsteps, grid.n_cells)

    nodes = grid.cell_nodes().ravel()
    weight = grid.dt * grid.cell_area / 4.0
    load = np.empty((grid.nsteps, grid.n_spatial))
    for n in range(grid.nsteps):
        load[n] = np.bincount(nodes, weights=np.repeat(values[n] * weight, 4), minlength=grid.n_spatial)
    load = load.ravel()

    zero_at = boundary_dofs(grid, "lateral") if dirichlet_dofs is None else np.asarray(dirichlet_dofs, dtype=np.int64)
    load[zero_at] = 0.0
    return load


def initial_load(system: SpaceTimeSystem, u0: np.ndarray) -> np.ndarray:
    """非齐次初值在第一个时间片上的载荷 −L_0 u0"""
    grid = system.grid
    u0 = np.asarray(u0, float)
    if u0.shape[0] != grid.n_spatial:
        raise InvalidArgumentError(f"Initial value needs {grid.n_spatial} nodal values, got {u0.shape[0]}")
    load = np.zeros((grid.n_dofs,) + u0.shape[1:])
    load[: grid.n_spatial] = -(system.lower_blocks[0] @ u0)
    first = system.dirichlet_dofs[system.dirichlet_dofs < grid.n_spatial]
    load[first] = 0.0
    return load


def solve(system: SpaceTimeSystem, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
    """求解 B u = rhs（transpose=True 时求解 Bᵀ u = rhs），支持多右端项"""
    grid = system.grid
    r = system._as_levels(np.asarray(rhs, dtype=float))
    u = np.zeros_like(r)
    nt = grid.nsteps
    if not transpose:
        for n in range(nt):
            b = r[n] if n == 0 else r[n] - system.lower_blocks[n] @ u[n - 1]
            u[n] = system.factor(n).solve(np.asarray(b))
    else:
        for n in range(nt - 1, -1, -1):
            b = r[n] if n == nt - 1 else r[n] - system.lower_blocks[n + 1].T @ u[n + 1]
            u[n] = system.factor(n).solve(np.asarray(b), trans="T")
    if not np.all(np.isfinite(u)):
        raise SolverError("Non-finite entries in space-time solution")
    return u.reshape(np.shape(rhs))


# Gram 矩阵
@dataclass
class GramMatrix:
    """对称半正定 Gram 矩阵；dofs 为其所在的网格自由度子集（None 表示全部）"""
    matrix: sp.csr_matrix
    tag: NormTag
    dofs: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return u.T @ (self.matrix @ v)

    def norm(self, u: np.ndarray) -> np.ndarray:
        """按列的范数"""
        values = np.sum(u * (self.matrix @ u), axis=0)
        return np.sqrt(np.maximum(values, 0.0))

    def subset(self, positions: np.ndarray) -> "GramMatrix":
        """按位置截取子矩阵"""
        dofs = None if self.dofs is None else self.dofs[positions]
        return GramMatrix(self.matrix[positions][:, positions].tocsr(), self.tag, dofs)

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {"tag": self.tag.value, "size": self.size, "nnz": int(self.matrix.nnz)}


TEMPORAL_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
TEMPORAL_DERIVATIVE = np.array([[1.0, -1.0], [-1.0, 1.0]])
# ∫ (φ^a)' φ^b dt，行为被检验函数的时间形函数（左端、右端）
TEMPORAL_PAIRING = np.array([[-0.5, -0.5], [0.5, 0.5]])


def _space_time(grid: TensorGrid, temporal: np.ndarray, spatial: Sequence[sp.csr_matrix]) -> sp.csr_matrix:
    """Σ_n E_n ⊗ S_n，E_n 为时间片 n 上的 2×2 时间矩阵（去掉 t=0 层）"""
    nt = grid.nsteps
    blocks: List[List[Optional[sp.csr_matrix]]] = [[None] * nt for _ in range(nt)]

    def add(i, j, m):
        blocks[i][j] = m if blocks[i][j] is None else blocks[i][j] + m

    for n in range(nt):
        s = spatial[n]
        add(n, n, temporal[1, 1] * s)
        if n > 0:
            add(n - 1, n - 1, temporal[0, 0] * s)
            add(n - 1, n, temporal[0, 1] * s)
            add(n, n - 1, temporal[1, 0] * s)
    return sp.bmat(blocks, format="csr")


def _symmetrize(matrix: sp.csr_matrix) -> sp.csr_matrix:
    return ((matrix + matrix.T) * 0.5).tocsr()


def _edge_alpha(grid: TensorGrid, alpha: AlphaLike, subsamples: int = 1) -> List[np.ndarray]:
    """每个时间片上各边界边的 α：内侧单元与镜像外侧点取值的算术平均"""
    slabs = _alpha_slabs(grid, alpha, subsamples)
    edges = boundary_edges(grid)
    xm, ym = grid.cell_midpoints()
    result = []
    for edge in edges:
        inside = slabs[:, edge["cells"]]
        if isinstance(alpha, CoefficientField):
            nx_, ny_ = edge["normal"]
            ox = xm[edge["cells"]] + nx_ * grid.hx
            oy = ym[edge["cells"]] + ny_ * grid.hy
            values = inside.copy()
            for n, t in enumerate(grid.slab_midpoints):
                tt = np.full(ox.shape, t)
                mask = alpha.box.contains(tt, ox, oy)
                if np.any(mask):
                    outside = alpha.evaluator(tt[mask], ox[mask], oy[mask])
                    values[n, mask] = 0.5 * (inside[n, mask] + outside)
            result.append(values)
        else:
            result.append(inside)
    return result


def boundary_mass(grid: TensorGrid, edge_weights: Optional[Sequence[np.ndarray]] = None) -> sp.csr_matrix:
    """空间边界上的一维质量矩阵（每条边一个权重）"""
    rows, cols, data = [], [], []
    for k, edge in enumerate(boundary_edges(grid)):
        local = _line_mass(edge["length"])
        nodes = edge["nodes"]
        w = np.ones(nodes.shape[0]) if edge_weights is None else edge_weights[k]
        rows.append(np.broadcast_to(nodes[:, :, None], (nodes.shape[0], 2, 2)).ravel())
        cols.append(np.broadcast_to(nodes[:, None, :], (nodes.shape[0], 2, 2)).ravel())
        data.append((w[:, None, None] * local[None]).ravel())
    n = grid.n_spatial
    return sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def assemble_gram(grid: TensorGrid, alpha: AlphaLike, norm_tag: Union[NormTag, str],
                  subsamples: int = 1) -> GramMatrix:
    """组装指定范数的时空 Gram 矩阵"""
    tag = NormTag(norm_tag)
    dt = grid.dt

    if tag in (NormTag.TRACE_L2_ALPHA, NormTag.TRACE_L2):
        weighted = alpha if tag == NormTag.TRACE_L2_ALPHA else None
        per_edge = _edge_alpha(grid, weighted, subsamples)
        spatial = [boundary_mass(grid, [w[n] for w in per_edge]) for n in range(grid.nsteps)]
        full = _symmetrize(_space_time(grid, dt * TEMPORAL_MASS, spatial))
        lateral = boundary_dofs(grid, "lateral")
        return GramMatrix(full[lateral][:, lateral].tocsr(), tag, lateral)

    if tag == NormTag.L2:
        mass = spatial_mass(grid)
        matrix = _space_time(grid, dt * TEMPORAL_MASS, [mass] * grid.nsteps)
    elif tag == NormTag.TIME_DERIVATIVE_L2:
        mass = spatial_mass(grid)
        matrix = _space_time(grid, TEMPORAL_DERIVATIVE / dt, [mass] * grid.nsteps)
    else:
        slabs = _alpha_slabs(grid, alpha, subsamples)
        if tag == NormTag.H1_SEMINORM_ALPHA:
            cache = _SlabCache(grid, slabs, spatial_stiffness)
            matrix = _space_time(grid, dt * TEMPORAL_MASS, [cache[n] for n in range(grid.nsteps)])
        elif tag == NormTag.L2_ALPHA:
            cache = _SlabCache(grid, slabs, spatial_mass)
            matrix = _space_time(grid, dt * TEMPORAL_MASS, [cache[n] for n in range(grid.nsteps)])
        else:
            mass_cache = _SlabCache(grid, slabs, spatial_mass)
            stiff_cache = _SlabCache(grid, slabs, spatial_stiffness)
            blocks = [dt * (mass_cache[n] + stiff_cache[n]) for n in range(grid.nsteps)]
            matrix = sp.block_diag(blocks, format="csr")
    return GramMatrix(_symmetrize(matrix), tag)


def assemble_ansatz_pairing(grid: TensorGrid, alpha: AlphaLike, scheme: Union[Scheme, str] = Scheme.PETROV_GALERKIN,
                            subsamples: int = 1) -> sp.csr_matrix:
    """G_kj = ((w_k)_t, χ_j) + (α∇w_k, ∇χ_j)，w 与 χ 均属 S_t⊗V_h

    刚度部分的时间求积与系统格式一致（隐式 Euler 取右端点）。
    """
    scheme = Scheme(scheme)
    dt = grid.dt
    slabs = _alpha_slabs(grid, alpha, subsamples)
    mass = spatial_mass(grid)
    stiff = _SlabCache(grid, slabs, spatial_stiffness)
    derivative_part = _space_time(grid, TEMPORAL_PAIRING, [mass] * grid.nsteps)
    if scheme == Scheme.PETROV_GALERKIN:
        temporal = dt * TEMPORAL_MASS
    else:
        temporal = dt * np.array([[0.0, 0.0], [0.0, 1.0]])
    stiffness_part = _space_time(grid, temporal, [stiff[n] for n in range(grid.nsteps)])
    return (derivative_part + stiffness_part).tocsr()


# Gram 分解
@dataclass
class GramFactor:
    """移位 Gram 矩阵的 Cholesky 因子 R（M + sI = RᵀR）"""
    size: int
    shift: float
    dense: Optional[np.ndarray] = field(default=None, repr=False)
    banded: Optional[np.ndarray] = field(default=None, repr=False)
    bandwidth: int = 0
    _lower: Optional[np.ndarray] = field(default=None, repr=False)

    def apply_upper(self, x: np.ndarray) -> np.ndarray:
        """R x"""
        if self.dense is not None:
            return self.dense @ x
        ab, u = self.banded, self.bandwidth
        y = np.zeros_like(x, dtype=float)
        for d in range(u + 1):
            diag = ab[u - d, d:]
            if x.ndim > 1:
                diag = diag[:, None]
            y[: self.size - d] += diag * x[d:]
        return y

    def solve_upper(self, z: np.ndarray) -> np.ndarray:
        """R⁻¹ z"""
        if self.size == 0:
            return np.zeros_like(z, dtype=float)
        if self.dense is not None:
            return scipy.linalg.solve_triangular(self.dense, z, lower=False)
        return scipy.linalg.solve_banded((0, self.bandwidth), self.banded, z)

    def solve_upper_transpose(self, z: np.ndarray) -> np.ndarray:
        """R⁻ᵀ z"""
        if self.size == 0:
            return np.zeros_like(z, dtype=float)
        if self.dense is not None:
            return scipy.linalg.solve_triangular(self.dense, z, lower=False, trans="T")
        if self._lower is None:
            u = self.bandwidth
            lower = np.zeros_like(self.banded)
            for d in range(u + 1):
                lower[d, : self.size - d] = self.banded[u - d, d:]
            self._lower = lower
        return scipy.linalg.solve_banded((self.bandwidth, 0), self._lower, z)

    def solve(self, z: np.ndarray) -> np.ndarray:
        """(RᵀR)⁻¹ z"""
        return self.solve_upper(self.solve_upper_transpose(z))


SHIFT_RETRIES = 2
SHIFT_GROWTH = 100.0


def factor_gram(gram: Union[GramMatrix, sp.spmatrix], shift_rel: float = 1e-14,
                dense_cap: int = 5000, max_band_entries: int = 200_000_000) -> GramFactor:
    """Cholesky 分解（对角移位 shift_rel·trace/N），小规模稠密、大规模带状

    舍入误差导致分解失败时，移位最多放大 SHIFT_RETRIES 次（每次 ×SHIFT_GROWTH）。
    """
    matrix = gram.matrix if isinstance(gram, GramMatrix) else sp.csr_matrix(gram)
    n = matrix.shape[0]
    if n == 0:
        return GramFactor(size=0, shift=0.0, dense=np.zeros((0, 0)))
    mean_diagonal = float(matrix.diagonal().sum()) / n
    shift = shift_rel * mean_diagonal

    bandwidth = 0
    if n > dense_cap:
        coo = sp.triu(matrix).tocoo()
        bandwidth = int(np.max(coo.col - coo.row)) if coo.nnz else 0
        requested = (bandwidth + 1) * n
        if requested > max_band_entries:
            raise MemoryGuardError(f"Banded Cholesky needs {requested} entries (cap {max_band_entries})",
                                   requested=requested, cap=max_band_entries)

    for attempt in range(SHIFT_RETRIES + 1):
        shifted = (matrix + shift * sp.identity(n, format="csr")).tocsr()
        try:
            if n <= dense_cap:
                upper = scipy.linalg.cholesky(shifted.toarray(), lower=False)
                return GramFactor(size=n, shift=shift, dense=upper)
            coo = sp.triu(shifted).tocoo()
            ab = np.zeros((bandwidth + 1, n))
            ab[bandwidth + coo.row - coo.col, coo.col] = coo.data
            cb = scipy.linalg.cholesky_banded(ab, lower=False)
            logger.debug(f"Banded Cholesky of size {n}, bandwidth {bandwidth}")
            return GramFactor(size=n, shift=shift, banded=cb, bandwidth=bandwidth)
        except np.linalg.LinAlgError as e:
            if attempt == SHIFT_RETRIES:
                raise GramDegeneracyError(f"Cholesky of shifted Gram matrix failed (shift {shift:.3e}): {e}") from e
            shift = max(shift, np.finfo(float).eps * mean_diagonal) * SHIFT_GROWTH
            logger.warning(f"Cholesky of size {n} failed, retrying with shift {shift:.3e}")
