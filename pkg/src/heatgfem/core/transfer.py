"""
局部传递算子

实现离散传递算子 P = D_→in B⁻¹ D_out→、给出最优局部空间的传递特征值问题，
以及数据校正项 χ^f 与边界提升 u^b。
"""

from typing import List, Dict, Any, Optional, Sequence, Tuple, Callable, Union
from dataclasses import dataclass, field
from enum import Enum
import logging
import time

import numpy as np
import scipy.linalg

from .exceptions import InvalidArgumentError, MemoryGuardError
from .grid import (Rectangle, TensorGrid, DofMap, DofKind, restriction_map, classify_dofs,
                   boundary_edges, grid_for_rectangle, separation, spatial_node_kinds)
from .coefficients import CoefficientField, SourceField
from .assembly import (Scheme, NormTag, GramMatrix, GramFactor, SpaceTimeSystem, assemble_system,
                       impose_dirichlet_rows, assemble_gram, assemble_load, initial_load, solve, factor_gram)

logger = logging.getLogger("heatgfem.transfer")

DEFAULT_MAX_DENSE_ENTRIES = 60_000_000


class LocationTag(str, Enum):
    """局部问题位置"""
    INTERIOR = "interior"
    GLOBAL_BOUNDARY = "at-global-boundary"


class Provenance(str, Enum):
    """基函数来源"""
    EIGENSOLVE = "eigensolve"
    RANDOMIZED = "randomized"
    DATA_CORRECTOR = "data-corrector"
    LIFTING = "lifting"


def m_orthogonalize(vectors: np.ndarray, basis: np.ndarray, gram: GramMatrix, passes: int = 2) -> np.ndarray:
    """对 basis（假定 M-正交规范）做 passes 次 Gram-Schmidt 正交化"""
    v = np.array(vectors, dtype=float)
    if basis.size == 0:
        return v
    for _ in range(passes):
        v = v - basis @ (basis.T @ (gram.matrix @ v))
    return v


@dataclass
class ReducedBasis:
    """I×Ω_in 上的约化基（列向量）"""
    vectors: np.ndarray
    singular_values: Optional[np.ndarray] = None
    spectrum: Optional[np.ndarray] = None
    gram_tag: str = NormTag.H1_SEMINORM_ALPHA.value
    provenance: List[str] = field(default_factory=list)
    grid_hash: str = ""
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim == 1:
            self.vectors = self.vectors[:, None]
        if not self.provenance:
            self.provenance = [Provenance.EIGENSOLVE.value] * self.size

    @property
    def size(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def n_in(self) -> int:
        return int(self.vectors.shape[0])

    def __len__(self) -> int:
        return self.size

    def truncated(self, n: int) -> "ReducedBasis":
        """前 n 个基函数"""
        sv = None if self.singular_values is None else self.singular_values[:n]
        return ReducedBasis(self.vectors[:, :n].copy(), sv, self.spectrum, self.gram_tag,
                            self.provenance[:n], self.grid_hash, dict(self.metadata))

    def coefficients(self, u: np.ndarray, gram: GramMatrix) -> np.ndarray:
        """Gram 投影系数（正规方程）"""
        if self.size == 0:
            return np.zeros((0,) + u.shape[1:])
        mv = gram.matrix @ self.vectors
        normal = self.vectors.T @ mv
        rhs = mv.T @ u
        coeffs, *_ = scipy.linalg.lstsq(normal, rhs)
        return coeffs

    def project(self, u: np.ndarray, gram: GramMatrix) -> np.ndarray:
        if self.size == 0:
            return np.zeros_like(u, dtype=float)
        return self.vectors @ self.coefficients(u, gram)

    def projection_error(self, u: np.ndarray, gram: GramMatrix) -> float:
        residual = u - self.project(u, gram)
        return float(gram.norm(residual))

    def orthonormality_defect(self, gram: GramMatrix) -> float:
        g = self.vectors.T @ (gram.matrix @ self.vectors)
        return float(np.max(np.abs(g - np.eye(self.size)))) if self.size else 0.0

    def with_data_columns(self, gram: GramMatrix, corrector: Optional[np.ndarray] = None,
                          lifting: Optional[np.ndarray] = None) -> "ReducedBasis":
        """追加 M_in-正交化并归一化后的 χ^f 与 u^b|in 列（零列被跳过）"""
        vectors = self.vectors
        provenance = list(self.provenance)
        for column, tag in ((corrector, Provenance.DATA_CORRECTOR), (lifting, Provenance.LIFTING)):
            if column is None:
                continue
            v = m_orthogonalize(column, vectors, gram)
            norm = float(gram.norm(v))
            if norm <= 1e-14 * max(float(gram.norm(np.asarray(column, float))), 1e-300):
                continue
            vectors = np.column_stack([vectors, v / norm])
            provenance.append(tag.value)
        return ReducedBasis(vectors, self.singular_values, self.spectrum, self.gram_tag,
                            provenance, self.grid_hash, dict(self.metadata))

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式（不含向量数据）"""
        return {
            "n_in": self.n_in,
            "size": self.size,
            "grid_hash": self.grid_hash,
            "gram_tag": self.gram_tag,
            "provenance": self.provenance,
            "singular_values": None if self.singular_values is None else self.singular_values.tolist(),
            "metadata": self.metadata,
        }


@dataclass
class LocalProblem:
    """过采样对 (Ω_in, Ω_out, δ) 及其组装好的局部系统"""
    inner: Rectangle
    outer: Rectangle
    delta: float
    grid_out: TensorGrid
    grid_in: TensorGrid
    alpha: CoefficientField
    scheme: Scheme
    system: SpaceTimeSystem
    dirichlet_dofs: np.ndarray
    transfer_dofs: np.ndarray
    restriction: DofMap
    extension: DofMap
    m_in: GramMatrix
    m_out: GramMatrix
    location: LocationTag
    global_domain: Optional[Rectangle] = None
    neumann_sides: Tuple[str, ...] = ()
    config: Dict[str, Any] = field(default_factory=dict)
    _factors: Dict[str, GramFactor] = field(default_factory=dict, repr=False)
    _grams: Dict[str, GramMatrix] = field(default_factory=dict, repr=False)

    @property
    def n_in(self) -> int:
        return len(self.restriction)

    @property
    def n_out(self) -> int:
        return len(self.extension)

    @property
    def in_factor(self) -> GramFactor:
        """M_in 的移位 Cholesky 因子 R_in"""
        if "in" not in self._factors:
            self._factors["in"] = factor_gram(self.m_in, self.config.get("cholesky_shift", 1e-14),
                                              self.config.get("dense_cholesky_cap", 5000))
        return self._factors["in"]

    @property
    def out_factor(self) -> GramFactor:
        """M_out 的 Cholesky 因子 R_out"""
        if "out" not in self._factors:
            self._factors["out"] = factor_gram(self.m_out, 0.0, self.config.get("dense_cholesky_cap", 5000))
        return self._factors["out"]

    def gram_in(self, tag: Union[NormTag, str]) -> GramMatrix:
        """I×Ω_in 上的其它 Gram 矩阵（缓存）"""
        return self._gram("in:" + NormTag(tag).value, self.grid_in, tag)

    def gram_out(self, tag: Union[NormTag, str]) -> GramMatrix:
        """I×Ω_out 上的其它 Gram 矩阵（缓存）"""
        return self._gram("out:" + NormTag(tag).value, self.grid_out, tag)

    def _gram(self, key: str, grid: TensorGrid, tag) -> GramMatrix:
        if key not in self._grams:
            self._grams[key] = assemble_gram(grid, self.alpha, tag, self.config.get("alpha_subsamples", 1))
        return self._grams[key]

    def apply(self, xi: np.ndarray) -> np.ndarray:
        return apply_transfer(self, xi)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        return apply_transfer_adjoint(self, y)

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "inner": self.inner.to_dict(),
            "outer": self.outer.to_dict(),
            "delta": self.delta,
            "n_in": self.n_in,
            "n_out": self.n_out,
            "location": self.location.value,
            "scheme": self.scheme.value,
            "grid_out": self.grid_out.to_dict(),
        }


@dataclass
class DenseTransfer:
    """显式矩阵给出的传递算子，接口与 LocalProblem 相同"""
    matrix: np.ndarray
    m_in: GramMatrix
    m_out: GramMatrix
    config: Dict[str, Any] = field(default_factory=dict)
    _factors: Dict[str, GramFactor] = field(default_factory=dict, repr=False)

    @property
    def n_in(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def n_out(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def in_factor(self) -> GramFactor:
        if "in" not in self._factors:
            self._factors["in"] = factor_gram(self.m_in, self.config.get("cholesky_shift", 1e-14))
        return self._factors["in"]

    @property
    def out_factor(self) -> GramFactor:
        if "out" not in self._factors:
            self._factors["out"] = factor_gram(self.m_out, 0.0)
        return self._factors["out"]

    def apply(self, xi: np.ndarray) -> np.ndarray:
        return self.matrix @ xi

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        return self.matrix.T @ y


def build_local_problem(inner: Rectangle, outer: Rectangle, alpha: CoefficientField,
                        T: float, nsteps: int, h: Optional[float] = None,
                        scheme: Union[Scheme, str] = Scheme.PETROV_GALERKIN,
                        global_domain: Optional[Rectangle] = None,
                        neumann_sides: Sequence[str] = (),
                        parent_grid: Optional[TensorGrid] = None,
                        config: Optional[Dict[str, Any]] = None) -> LocalProblem:
    """构建局部问题：组装 I×Ω_out 上的系统并在侧边界施加 Dirichlet 行

    全局 Neumann 边上的侧边界自由度不施加 Dirichlet 行；全局 Dirichlet 边上的自由度
    固定为零且不作为传递输入。
    """
    config = config or {}
    scheme = Scheme(scheme)
    if parent_grid is not None:
        grid_out = parent_grid.subgrid(outer)
    elif h is not None:
        grid_out = grid_for_rectangle(outer, h, T, nsteps)
    else:
        raise InvalidArgumentError("Either a mesh size or a parent grid is required")

    delta = separation(inner, outer, global_domain)
    if not delta > 0:
        raise InvalidArgumentError(f"Oversampling distance must be positive, got {delta}")

    restriction = restriction_map(grid_out, inner)
    kinds = classify_dofs(grid_out, global_domain, neumann_sides)
    dirichlet = np.flatnonzero((kinds == DofKind.LATERAL) | (kinds == DofKind.GLOBAL_DIRICHLET))
    transfer_dofs = np.flatnonzero(kinds == DofKind.LATERAL)
    on_global = np.any((kinds == DofKind.GLOBAL_DIRICHLET) | (kinds == DofKind.GLOBAL_NEUMANN))
    location = LocationTag.GLOBAL_BOUNDARY if on_global else LocationTag.INTERIOR

    subsamples = config.get("alpha_subsamples", 1)
    system = assemble_system(grid_out, alpha, scheme, subsamples)
    impose_dirichlet_rows(system, dirichlet)

    m_in = assemble_gram(restriction.subgrid, alpha, NormTag.H1_SEMINORM_ALPHA, subsamples)
    out_tag = NormTag(config.get("out_inner_product", NormTag.TRACE_L2_ALPHA.value))
    if out_tag not in (NormTag.TRACE_L2_ALPHA, NormTag.TRACE_L2):
        raise InvalidArgumentError(f"Unsupported oversampling inner product: {out_tag.value}")
    trace = assemble_gram(grid_out, alpha, out_tag, subsamples)
    m_out = trace.subset(np.searchsorted(trace.dofs, transfer_dofs))

    logger.info(
        f"Local problem {inner} in {outer}: N_in={restriction.indices.size}, "
        f"N_out={transfer_dofs.size}, delta={delta:.4g}, location={location.value}"
    )
    return LocalProblem(
        inner=inner, outer=outer, delta=delta, grid_out=grid_out, grid_in=restriction.subgrid,
        alpha=alpha, scheme=scheme, system=system, dirichlet_dofs=dirichlet, transfer_dofs=transfer_dofs,
        restriction=restriction, extension=DofMap(size=grid_out.n_dofs, indices=transfer_dofs),
        m_in=m_in, m_out=m_out, location=location, global_domain=global_domain,
        neumann_sides=tuple(neumann_sides), config=config,
    )


def apply_transfer(problem: LocalProblem, boundary_vector: np.ndarray) -> np.ndarray:
    """P ξ：零延拓、求解、限制到 I×Ω_in"""
    rhs = problem.extension.extend(np.asarray(boundary_vector, dtype=float))
    return problem.restriction.restrict(solve(problem.system, rhs))


def apply_transfer_adjoint(problem: LocalProblem, inner_vector: np.ndarray) -> np.ndarray:
    """Pᵀ y = D_outᵀ B⁻ᵀ D_inᵀ y"""
    rhs = problem.restriction.extend(np.asarray(inner_vector, dtype=float))
    return problem.extension.restrict(solve(problem.system, rhs, transpose=True))


def transfer_matrix(problem, max_entries: Optional[int] = None, chunk: int = 256) -> np.ndarray:
    """显式传递矩阵（N_in × N_out），第 m 列为 P e_m"""
    if isinstance(problem, DenseTransfer):
        return np.array(problem.matrix, dtype=float)
    cap = max_entries or problem.config.get("max_dense_entries", DEFAULT_MAX_DENSE_ENTRIES)
    requested = problem.n_in * problem.n_out
    if requested > cap:
        raise MemoryGuardError(f"Dense transfer matrix needs {requested} entries (cap {cap})",
                               requested=requested, cap=cap)
    start = time.time()
    matrix = np.empty((problem.n_in, problem.n_out))
    for first in range(0, problem.n_out, chunk):
        last = min(first + chunk, problem.n_out)
        unit = np.zeros((problem.n_out, last - first))
        unit[np.arange(first, last), np.arange(last - first)] = 1.0
        matrix[:, first:last] = apply_transfer(problem, unit)
    logger.info(f"Transfer matrix {matrix.shape} computed in {time.time() - start:.2f}s")
    return matrix


def scaled_operator(problem, matrix: Optional[np.ndarray] = None) -> np.ndarray:
    """R_in P R_out⁻¹"""
    p = transfer_matrix(problem) if matrix is None else matrix
    left = problem.in_factor.apply_upper(p)
    return problem.out_factor.solve_upper_transpose(left.T).T


def optimal_space(problem, n: int, matrix: Optional[np.ndarray] = None) -> ReducedBasis:
    """传递特征值问题的前 n 个基函数：对 R_in P R_out⁻¹ 做 SVD"""
    if not 0 <= n <= problem.n_out:
        raise InvalidArgumentError(f"Requested {n} basis functions but N_out = {problem.n_out}")
    if problem.n_out == 0:
        return ReducedBasis(np.zeros((problem.n_in, 0)), np.zeros(0), np.zeros(0))
    scaled = scaled_operator(problem, matrix)
    left, sigma, _ = scipy.linalg.svd(scaled, full_matrices=False)
    vectors = problem.in_factor.solve_upper(left[:, :n])
    grid_hash = problem.grid_in.grid_hash() if hasattr(problem, "grid_in") else ""
    logger.info(f"Optimal space: n={n}, sigma_1={sigma[0]:.4e}, sigma_n={sigma[max(n - 1, 0)]:.4e}")
    return ReducedBasis(vectors, sigma[:n].copy(), sigma.copy(), grid_hash=grid_hash,
                        provenance=[Provenance.EIGENSOLVE.value] * n)


@dataclass
class DataCorrector:
    """数据校正项"""
    vector: np.ndarray
    c_f: float
    solution: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {"c_f": self.c_f, "norm": float(np.linalg.norm(self.vector))}


def data_corrector(problem: LocalProblem, source: Optional[SourceField],
                   basis: Optional[ReducedBasis] = None, u0: Optional[np.ndarray] = None,
                   lifting: Optional[np.ndarray] = None, extra_load: Optional[np.ndarray] = None,
                   weighted: bool = True) -> DataCorrector:
    """求解零侧边界数据的 B u^f = F，限制并对已有基做 M_in-正交化

    同时返回 c_f = ‖u^f‖_{L²(α)} / ‖α^{1/2}∇u^f‖（weighted=False 时分子不加权）。
    """
    grid = problem.grid_out
    load = assemble_load(grid, source, problem.dirichlet_dofs, problem.config.get("alpha_subsamples", 1))
    if u0 is not None:
        load = load + initial_load(problem.system, u0)
    if extra_load is not None:
        load = load + extra_load
    if lifting is not None:
        load = load - problem.system.apply(lifting)
        load[problem.dirichlet_dofs] = 0.0
    u_f = solve(problem.system, load)

    numerator_tag = NormTag.L2_ALPHA if weighted else NormTag.L2
    numerator = float(problem.gram_out(numerator_tag).norm(u_f))
    denominator = float(problem.gram_out(NormTag.H1_SEMINORM_ALPHA).norm(u_f))
    if numerator == 0.0:
        c_f = 0.0
    elif denominator == 0.0:
        logger.warning("Data corrector has zero gradient norm; c_f set to infinity")
        c_f = float("inf")
    else:
        c_f = numerator / denominator

    chi = problem.restriction.restrict(u_f)
    if basis is not None and basis.size:
        chi = m_orthogonalize(chi, basis.vectors, problem.m_in)
    return DataCorrector(vector=chi, c_f=c_f, solution=u_f)


@dataclass
class LiftingData:
    """边界提升向量与 Neumann 载荷"""
    vector: np.ndarray
    neumann_load: np.ndarray


def neumann_load(grid: TensorGrid, g_N: Callable, global_domain: Rectangle,
                 neumann_sides: Sequence[str]) -> np.ndarray:
    """Σ_N 上的边界载荷 ∫∫ g_N ψ_i，时间与边均取中点"""
    load = np.zeros((grid.nsteps, grid.n_spatial))
    x, y = grid.node_coordinates()
    tol = 1e-12 * global_domain.diam
    side_coordinate = {"left": (x, global_domain.x0), "right": (x, global_domain.x1),
                       "bottom": (y, global_domain.y0), "top": (y, global_domain.y1)}
    for edge in boundary_edges(grid):
        if edge["side"] not in neumann_sides:
            continue
        nodes = edge["nodes"]
        coordinate, value = side_coordinate[edge["side"]]
        on_side = np.all(np.abs(coordinate[nodes] - value) <= tol, axis=1)
        if not np.any(on_side):
            continue
        selected = nodes[on_side]
        xm = 0.5 * (x[selected[:, 0]] + x[selected[:, 1]])
        ym = 0.5 * (y[selected[:, 0]] + y[selected[:, 1]])
        for n, t in enumerate(grid.slab_midpoints):
            values = np.asarray(g_N(np.full(xm.shape, t), xm, ym), float) * grid.dt * edge["length"] / 2.0
            np.add.at(load[n], selected[:, 0], values)
            np.add.at(load[n], selected[:, 1], values)
    return load.ravel()


def boundary_lifting(problem: LocalProblem, g_D: Optional[Callable] = None,
                     g_N: Optional[Callable] = None) -> LiftingData:
    """Σ_D 自由度上 g_D 的节点插值，其余自由度为零；g_N 只进入载荷"""
    grid = problem.grid_out
    vector = np.zeros(grid.n_dofs)
    load = np.zeros(grid.n_dofs)
    if problem.location == LocationTag.INTERIOR or problem.global_domain is None:
        return LiftingData(vector, load)

    kinds = spatial_node_kinds(grid, problem.global_domain, problem.neumann_sides)
    nodes = np.flatnonzero(kinds == DofKind.GLOBAL_DIRICHLET)
    x, y = grid.node_coordinates()
    if g_D is not None and nodes.size:
        initial = np.asarray(g_D(np.zeros(nodes.size), x[nodes], y[nodes]), float)
        if np.max(np.abs(initial)) > 1e-12:
            raise InvalidArgumentError("Dirichlet data must vanish at t = 0")
        for level, t in enumerate(grid.time_levels):
            vector[level * grid.n_spatial + nodes] = g_D(np.full(nodes.size, t), x[nodes], y[nodes])
    if g_N is not None:
        load = neumann_load(grid, g_N, problem.global_domain, problem.neumann_sides)
        load[problem.dirichlet_dofs] = 0.0
    return LiftingData(vector, load)
