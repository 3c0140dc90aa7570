"""
时空 Petrov-Galerkin GFEM

将局部约化基耦合为全局系统：区域分解与单位分解、ansatz/检验函数构造、
约化系统求解以及 inf-sup 常数。
"""

from typing import List, Dict, Any, Optional, Sequence, Tuple, Union
from dataclasses import dataclass
import logging
import math

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import InvalidArgumentError, InvalidDecompositionError, InfSupError
from .grid import Rectangle, TensorGrid, DofMap, boundary_dofs
from .coefficients import CoefficientField
from .assembly import (Scheme, SpaceTimeSystem, GramMatrix, assemble_system, impose_dirichlet_rows,
                       assemble_ansatz_pairing, solve)

logger = logging.getLogger("heatgfem.gfem")


@dataclass
class DomainDecomposition:
    """重叠区域分解"""
    domain: Rectangle
    inner: List[Rectangle]
    outer: List[Rectangle]
    counts: Tuple[int, int]
    centers: Tuple[np.ndarray, np.ndarray]
    spacing: Tuple[float, float]
    m_in: int
    m_out: int

    @property
    def size(self) -> int:
        return len(self.inner)

    def index(self, kx: int, ky: int) -> int:
        return ky * self.counts[0] + kx

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "domain": self.domain.to_dict(),
            "counts": list(self.counts),
            "inner": [r.to_dict() for r in self.inner],
            "outer": [r.to_dict() for r in self.outer],
            "m_in": self.m_in,
            "m_out": self.m_out,
        }


def _count_overlaps(rects: Sequence[Rectangle], x: np.ndarray, y: np.ndarray) -> np.ndarray:
    counts = np.zeros(x.shape, dtype=int)
    for r in rects:
        counts += ((x > r.x0) & (x < r.x1) & (y > r.y0) & (y < r.y1)).astype(int)
    return counts


def build_decomposition(domain: Rectangle, nsub: Sequence[int], oversampling: float,
                        grid: TensorGrid) -> DomainDecomposition:
    """规则重叠分解：间距 s = L/(m+1)，Ω_i^in = (c_i − s, c_i + s)，Ω_i^out 为外扩并裁剪到 Ω"""
    mx, my = int(nsub[0]), int(nsub[1])
    if mx < 1 or my < 1:
        raise InvalidDecompositionError(f"Need at least one subdomain per axis, got {nsub}")
    if oversampling < 0:
        raise InvalidArgumentError(f"Oversampling distance must be nonnegative, got {oversampling}")
    sx, sy = domain.width / (mx + 1), domain.height / (my + 1)
    cx = domain.x0 + sx * np.arange(1, mx + 1)
    cy = domain.y0 + sy * np.arange(1, my + 1)
    if mx == 1:
        sx, cx = domain.width / 2.0, np.array([domain.x0 + domain.width / 2.0])
    if my == 1:
        sy, cy = domain.height / 2.0, np.array([domain.y0 + domain.height / 2.0])

    inner, outer = [], []
    for ky in range(my):
        for kx in range(mx):
            r = Rectangle(cx[kx] - sx, cy[ky] - sy, cx[kx] + sx, cy[ky] + sy)
            r = Rectangle(max(r.x0, domain.x0), max(r.y0, domain.y0), min(r.x1, domain.x1), min(r.y1, domain.y1))
            inner.append(r)
            outer.append(r.expanded(oversampling, clip=domain))

    for r in inner + outer:
        grid.node_span(r)

    xm, ym = grid.cell_midpoints()
    inner_counts = _count_overlaps(inner, xm, ym)
    if np.any(inner_counts == 0):
        raise InvalidDecompositionError("Inner subdomains do not cover the domain")
    outer_counts = _count_overlaps(outer, xm, ym)
    decomp = DomainDecomposition(domain, inner, outer, (mx, my), (cx, cy), (sx, sy),
                                 int(inner_counts.max()), int(outer_counts.max()))
    logger.info(f"Decomposition {mx}x{my}: M_in={decomp.m_in}, M_out={decomp.m_out}")
    return decomp


@dataclass
class PartitionOfUnity:
    """全局网格空间节点上的单位分解权重（每行一个子区域）"""
    weights: np.ndarray
    c1: float
    c2: float

    def restricted(self, i: int, grid: TensorGrid, rect: Rectangle) -> np.ndarray:
        """ψ_i 在子网格 rect 上的节点值"""
        i0, i1, j0, j1 = grid.node_span(rect)
        full = self.weights[i].reshape(grid.ny + 1, grid.nx + 1)
        return full[j0:j1 + 1, i0:i1 + 1].ravel()


def _plateau_hats(coords: np.ndarray, centers: np.ndarray, spacing: float) -> np.ndarray:
    """一维帽函数，首末中心之外取 1"""
    hats = np.clip(1.0 - np.abs(coords[None, :] - centers[:, None]) / spacing, 0.0, 1.0)
    hats[0, coords <= centers[0]] = 1.0
    hats[-1, coords >= centers[-1]] = 1.0
    return hats


def build_partition_of_unity(decomp: DomainDecomposition, grid: TensorGrid) -> PartitionOfUnity:
    """粗网格双线性帽函数插值到细网格，并逐节点归一化"""
    hx = _plateau_hats(grid.x_coords, decomp.centers[0], decomp.spacing[0])
    hy = _plateau_hats(grid.y_coords, decomp.centers[1], decomp.spacing[1])
    mx, my = decomp.counts
    weights = np.empty((mx * my, grid.n_spatial))
    for ky in range(my):
        for kx in range(mx):
            weights[decomp.index(kx, ky)] = np.outer(hy[ky], hx[kx]).ravel()

    total = weights.sum(axis=0)
    if np.any(total <= 0):
        raise InvalidDecompositionError("Partition of unity vanishes at some grid node")
    weights /= total

    x, y = grid.node_coordinates()
    for i, rect in enumerate(decomp.inner):
        outside = ~rect.contains(x, y, tol=1e-12 * rect.diam)
        if np.any(weights[i, outside] > 0):
            raise InvalidDecompositionError(f"Partition function {i} leaks outside its subdomain")

    c2 = 0.0
    for i, rect in enumerate(decomp.inner):
        psi = weights[i].reshape(grid.ny + 1, grid.nx + 1)
        gx = np.abs(np.diff(psi, axis=1)) / grid.hx
        gy = np.abs(np.diff(psi, axis=0)) / grid.hy
        cell_gx = np.maximum(gx[:-1, :], gx[1:, :])
        cell_gy = np.maximum(gy[:, :-1], gy[:, 1:])
        c2 = max(c2, float(np.max(np.sqrt(cell_gx ** 2 + cell_gy ** 2))) * rect.diam)
    return PartitionOfUnity(weights=weights, c1=float(weights.max()), c2=c2)


@dataclass
class LocalBlock:
    """一组列向量，只存储在子区域自由度 dofs 上"""
    subdomain: int
    dofs: np.ndarray
    columns: np.ndarray
    region: Optional[Rectangle] = None

    @property
    def width(self) -> int:
        return int(self.columns.shape[1])

    def to_global(self, size: int) -> np.ndarray:
        out = np.zeros((size, self.width))
        out[self.dofs] = self.columns
        return out

    def sliced(self, columns: Union[slice, np.ndarray]) -> "LocalBlock":
        return LocalBlock(self.subdomain, self.dofs, self.columns[:, columns], self.region)


def pu_multiply(basis: np.ndarray, psi: np.ndarray, dof_map: DofMap, subdomain: int = 0,
                region: Optional[Rectangle] = None) -> LocalBlock:
    """逐节点乘以 ψ_i（与时间无关），按 dof_map 放入全局布局"""
    basis = np.asarray(basis, float).reshape(dof_map.indices.size, -1)
    nsteps = basis.shape[0] // psi.size
    scale = np.tile(psi, nsteps)
    return LocalBlock(subdomain, dof_map.indices, scale[:, None] * basis, region)


@dataclass
class LocalTestSystem:
    """I×Ω_i^in 上带零侧边界的局部系统及配对矩阵"""
    system: SpaceTimeSystem
    pairing: sp.csr_matrix
    lateral: np.ndarray


def build_local_test_system(grid_in: TensorGrid, alpha: CoefficientField,
                            scheme: Union[Scheme, str] = Scheme.PETROV_GALERKIN,
                            subsamples: int = 1) -> LocalTestSystem:
    system = assemble_system(grid_in, alpha, scheme, subsamples)
    pairing = assemble_ansatz_pairing(grid_in, alpha, scheme, subsamples)
    lateral = boundary_dofs(grid_in, "lateral")
    impose_dirichlet_rows(system, lateral)
    return LocalTestSystem(system, pairing, lateral)


def project_test_functions(local: LocalTestSystem, ansatz_columns: np.ndarray) -> np.ndarray:
    """检验函数 φ 满足 b(w, φ) = ((w)_t, χ) + (α∇w, ∇χ) 对所有内部局部 ansatz 自由度 w

    即求解 B_iᵀ c = G χ（侧边界右端置零），再将侧边界分量置零。
    """
    columns = np.asarray(ansatz_columns, float)
    if not np.any(columns):
        return np.zeros_like(columns)
    rhs = local.pairing @ columns
    rhs[local.lateral] = 0.0
    coeffs = solve(local.system, rhs, transpose=True)
    coeffs[local.lateral] = 0.0
    return coeffs


@dataclass
class GFEMSystem:
    """约化全局系统"""
    ansatz: List[LocalBlock]
    test: List[LocalBlock]
    reduced_matrix: np.ndarray
    reduced_rhs: np.ndarray
    coefficients: np.ndarray
    solution: np.ndarray
    ansatz_offsets: np.ndarray
    test_offsets: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.reduced_matrix.shape[1])

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "ansatz_count": int(self.ansatz_offsets[-1]),
            "test_count": int(self.test_offsets[-1]),
            "blocks": [b.width for b in self.ansatz],
        }


def _offsets(blocks: Sequence[LocalBlock]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum([b.width for b in blocks])]).astype(int)


def _coupled(a: LocalBlock, b: LocalBlock) -> bool:
    if a.region is None or b.region is None:
        return True
    return a.region.overlaps(b.region)


def reduced_operator(matrix: sp.csr_matrix, left: Sequence[LocalBlock], right: Sequence[LocalBlock]) -> np.ndarray:
    """Lᵀ A R，按块计算，支撑不重叠的块对为零"""
    lo, ro = _offsets(left), _offsets(right)
    result = np.zeros((lo[-1], ro[-1]))
    for j, lb in enumerate(left):
        if lb.width == 0:
            continue
        rows = matrix[lb.dofs]
        for i, rb in enumerate(right):
            if rb.width == 0 or not _coupled(lb, rb):
                continue
            block = rows[:, rb.dofs]
            result[lo[j]:lo[j + 1], ro[i]:ro[i + 1]] = lb.columns.T @ (block @ rb.columns)
    return result


def expand(blocks: Sequence[LocalBlock], coefficients: np.ndarray, size: int) -> np.ndarray:
    """u = Σ_i X_i c_i"""
    offsets = _offsets(blocks)
    u = np.zeros(size)
    for k, block in enumerate(blocks):
        np.add.at(u, block.dofs, block.columns @ coefficients[offsets[k]:offsets[k + 1]])
    return u


def _solve_test_gram(m_v: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.solve(m_v, rhs, assume_a="pos")
    except np.linalg.LinAlgError as e:
        raise InfSupError(f"Test function Gram matrix is singular: {e}") from e


def assemble_and_solve_gfem(global_system: Union[SpaceTimeSystem, sp.spmatrix], ansatz: Sequence[LocalBlock],
                            test: Sequence[LocalBlock], load: np.ndarray,
                            test_gram: Optional[GramMatrix] = None) -> GFEMSystem:
    """A = Tᵀ B X，b = Tᵀ F；检验函数多于 ansatz 时按 M_V⁻¹ 范数最小残差求解"""
    matrix = global_system.matrix if isinstance(global_system, SpaceTimeSystem) else sp.csr_matrix(global_system)
    n_ansatz, n_test = int(_offsets(ansatz)[-1]), int(_offsets(test)[-1])
    if n_test < n_ansatz or (n_test > n_ansatz and test_gram is None):
        raise InvalidArgumentError(f"Ansatz/test counts do not match: {n_ansatz} vs {n_test}")

    reduced = reduced_operator(matrix, test, ansatz)
    rhs = np.concatenate([b.columns.T @ load[b.dofs] for b in test]) if test else np.zeros(0)

    if n_test == n_ansatz:
        system, right = reduced, rhs
    else:
        m_v = reduced_operator(test_gram.matrix, test, test)
        weighted = _solve_test_gram(m_v, np.column_stack([reduced, rhs]))
        system, right = reduced.T @ weighted[:, :-1], reduced.T @ weighted[:, -1]

    if n_ansatz == 0:
        coeffs = np.zeros(0)
    else:
        singular = np.linalg.svd(system, compute_uv=False)
        if singular[-1] <= np.finfo(float).eps * singular[0] * system.shape[0]:
            raise InfSupError(f"Reduced GFEM matrix is singular (sigma_min/sigma_max={singular[-1] / singular[0]:.2e})",
                              beta=float(singular[-1] / singular[0]))
        coeffs = scipy.linalg.solve(system, right)

    solution = expand(ansatz, coeffs, matrix.shape[0])
    logger.info(f"Solved reduced GFEM system of dimension {n_ansatz} ({len(ansatz)} blocks)")
    return GFEMSystem(list(ansatz), list(test), reduced, rhs, coeffs, solution, _offsets(ansatz), _offsets(test))


def inf_sup_constant(global_system: Union[SpaceTimeSystem, sp.spmatrix], ansatz: Sequence[LocalBlock],
                     test: Sequence[LocalBlock], ansatz_gram: GramMatrix, test_gram: GramMatrix,
                     reduced: Optional[np.ndarray] = None) -> float:
    """β² = λ_min(Aᵀ M_V⁻¹ A, N_X)"""
    if reduced is None:
        matrix = global_system.matrix if isinstance(global_system, SpaceTimeSystem) else sp.csr_matrix(global_system)
        reduced = reduced_operator(matrix, test, ansatz)
    n_x = reduced_operator(ansatz_gram.matrix, ansatz, ansatz)
    m_v = reduced_operator(test_gram.matrix, test, test)
    n_x = 0.5 * (n_x + n_x.T)
    m_v = 0.5 * (m_v + m_v.T)

    eigs = scipy.linalg.eigvalsh(n_x)
    kernel = int(np.sum(eigs <= 1e-12 * max(eigs[-1], 0.0))) if eigs.size else 0
    if kernel:
        raise InfSupError(f"Ansatz seminorm Gram is singular (kernel dimension {kernel})", kernel_dim=kernel)

    normal = reduced.T @ _solve_test_gram(m_v, reduced)
    normal = 0.5 * (normal + normal.T)
    lam = scipy.linalg.eigh(normal, n_x, eigvals_only=True, subset_by_index=[0, 0])[0]
    beta = math.sqrt(max(float(lam), 0.0))
    logger.info(f"Reduced inf-sup constant beta={beta:.4f}")
    return beta


def supremizer_blocks(global_system: SpaceTimeSystem, ansatz: Sequence[LocalBlock],
                      test_gram: GramMatrix) -> List[LocalBlock]:
    """超级检验函数 G_V⁻¹ B X（Dirichlet 自由度置零），支撑为全局"""
    matrix = global_system.matrix
    size = matrix.shape[0]
    dirichlet = global_system.dirichlet_dofs
    free = np.setdiff1d(np.arange(size), dirichlet)
    g_free = test_gram.matrix[free][:, free].tocsc()
    lu = splu(g_free)
    blocks = []
    for block in ansatz:
        image = matrix[:, block.dofs] @ block.columns
        columns = np.zeros((size, block.width))
        columns[free] = lu.solve(np.asarray(image[free]))
        blocks.append(LocalBlock(block.subdomain, np.arange(size), columns, None))
    return blocks
