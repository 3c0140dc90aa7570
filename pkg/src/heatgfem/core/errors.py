"""
误差与先验界常数

局部最佳逼近误差、全局图范数误差、c_f、c_p^α、C_i，
以及 Caccioppoli 与 Poincaré 不等式的数值检验。
"""

from typing import List, Dict, Any, Optional, Sequence, Union
from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .exceptions import InvalidArgumentError, UndefinedRelativeError
from .grid import TensorGrid
from .coefficients import CoefficientField, SourceField, cellwise_source
from .assembly import GramMatrix, NormTag, assemble_gram, spatial_mass
from .transfer import ReducedBasis, LocalProblem
from .randrange import sample_random_trace

logger = logging.getLogger("heatgfem.errors")

CACCIOPPOLI_SLACK = 1.05


@dataclass
class SubdomainError:
    """单个子区域的误差记录"""
    subdomain: int
    n: int
    local_error: float
    eps: Optional[float] = None
    err_est: Optional[float] = None
    c_f: Optional[float] = None
    C_i: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "subdomain": self.subdomain,
            "n": self.n,
            "local_error": self.local_error,
            "eps": self.eps,
            "err_est": self.err_est,
            "c_f": self.c_f,
            "C_i": self.C_i,
        }


@dataclass
class ErrorReport:
    """误差报告"""
    subdomains: List[SubdomainError] = field(default_factory=list)
    global_error: Optional[float] = None
    beta: Optional[float] = None
    bound: Optional[float] = None
    constants: Dict[str, Any] = field(default_factory=dict)
    denominators: Dict[str, float] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)

    @property
    def max_local_error(self) -> float:
        return max((s.local_error for s in self.subdomains), default=0.0)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "subdomains": [s.to_dict() for s in self.subdomains],
            "max_local_error": self.max_local_error,
            "global_error": self.global_error,
            "beta": self.beta,
            "bound": self.bound,
            "constants": self.constants,
            "denominators": self.denominators,
            "checks": self.checks,
            "passed": self.passed,
        }


def source_l2_norm(source: Optional[SourceField], grid: TensorGrid, subsamples: int = 1) -> float:
    """‖f‖_{L²(I×Ω)}，逐单元中点求积"""
    values = cellwise_source(source, grid, subsamples)
    return math.sqrt(float(np.sum(values ** 2)) * grid.cell_area * grid.dt)


def local_error_denominator(u_out: np.ndarray, grad_gram_out: GramMatrix, f_norm: float = 0.0) -> float:
    """‖α^{1/2}∇u_h|_{Ω_out}‖ + ‖f‖_{L²(I×Ω_out)}"""
    return float(grad_gram_out.norm(u_out)) + f_norm


def local_best_error(u_local: np.ndarray, basis: Union[ReducedBasis, np.ndarray], m_in: GramMatrix,
                     denominator: float, c_f: Optional[float] = None) -> float:
    """min_w ‖α^{1/2}∇(u_h| − w)‖ / 分母；给出 c_f 时分母乘以 max{2, c_f}"""
    if not isinstance(basis, ReducedBasis):
        basis = ReducedBasis(np.asarray(basis, float).reshape(u_local.shape[0], -1), provenance=["given"])
    scale = denominator * (max(2.0, c_f) if c_f is not None else 1.0)
    if not scale > 0:
        raise UndefinedRelativeError("Local error denominator is zero")
    return basis.projection_error(u_local, m_in) / scale


@dataclass
class GraphNormGrams:
    """图范数所需的全局 Gram 矩阵"""
    time_derivative: GramMatrix
    gradient: GramMatrix

    @classmethod
    def assemble(cls, grid: TensorGrid, alpha: CoefficientField, subsamples: int = 1) -> "GraphNormGrams":
        return cls(assemble_gram(grid, alpha, NormTag.TIME_DERIVATIVE_L2, subsamples),
                   assemble_gram(grid, alpha, NormTag.H1_SEMINORM_ALPHA, subsamples))


def global_graph_error(u_h: np.ndarray, u_gfem: np.ndarray, alpha: CoefficientField, grid: TensorGrid,
                       source: Optional[SourceField] = None, grams: Optional[GraphNormGrams] = None,
                       subsamples: int = 1) -> float:
    """(‖(u_h − u)_t‖² + ‖α^{1/2}∇(u_h − u)‖²)^{1/2} / (‖α^{1/2}∇u_h‖ + ‖f‖)"""
    u_h, u_gfem = np.asarray(u_h, float), np.asarray(u_gfem, float)
    if u_h.shape != (grid.n_dofs,) or u_gfem.shape != (grid.n_dofs,):
        raise InvalidArgumentError(f"Fields must both have {grid.n_dofs} DOFs, got {u_h.shape} and {u_gfem.shape}")
    grams = grams or GraphNormGrams.assemble(grid, alpha, subsamples)
    diff = u_h - u_gfem
    numerator = math.sqrt(float(grams.time_derivative.norm(diff)) ** 2 + float(grams.gradient.norm(diff)) ** 2)
    denominator = float(grams.gradient.norm(u_h)) + source_l2_norm(source, grid, subsamples)
    if not denominator > 0:
        raise UndefinedRelativeError("Global error denominator is zero")
    return numerator / denominator


@dataclass
class PoincareEstimate:
    """c_p^α 的采样下估计"""
    value: float
    ratios: List[float]
    skipped: int = 0

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {"value": self.value, "samples": len(self.ratios), "skipped": self.skipped,
                "kind": "sampled lower estimate"}


def poincare_constant(problem: LocalProblem, samples: int = 20,
                      rng: Optional[np.random.Generator] = None) -> PoincareEstimate:
    """max_w ‖α^{1/2}w‖ / ‖α^{1/2}∇w‖，w 为随机侧边界数据的局部解"""
    if samples < 1:
        raise InvalidArgumentError(f"Need at least one sample, got {samples}")
    rng = rng if rng is not None else np.random.default_rng(0)
    l2 = problem.gram_in(NormTag.L2_ALPHA)
    ratios: List[float] = []
    skipped = 0
    for _ in range(samples):
        w = problem.apply(sample_random_trace(problem, rng))
        gradient = float(problem.m_in.norm(w))
        if gradient <= 1e-300:
            skipped += 1
            logger.warning("Skipped Poincare sample with zero gradient")
            continue
        ratios.append(float(l2.norm(w)) / gradient)
    value = max(ratios) if ratios else 0.0
    logger.info(f"Poincare estimate c_p={value:.4g} from {len(ratios)} samples")
    return PoincareEstimate(value, ratios, skipped)


def bound_constant_Ci(c1: float, c2: float, beta: float, m_in_count: int, diam: float,
                      c_p_alpha: float) -> float:
    """C_i = max{(1 + 1/β)√(2M^in(c1² + (c2 c_p/diam)²)), (c1 + c2/diam)/β}"""
    if not beta > 0:
        raise InvalidArgumentError(f"Inf-sup constant must be positive, got {beta}")
    if not diam > 0:
        raise InvalidArgumentError(f"Subdomain diameter must be positive, got {diam}")
    first = (1.0 + 1.0 / beta) * math.sqrt(2.0 * m_in_count * (c1 ** 2 + (c2 * c_p_alpha / diam) ** 2))
    second = (c1 + c2 / diam) / beta
    return max(first, second)


def global_error_bound(eps: Sequence[float], C: Sequence[float], c_f: Sequence[float], m_out: int,
                       homogeneous: bool = True) -> float:
    """全局相对误差上界"""
    if homogeneous:
        prefactor, floor = 2.0 * math.sqrt(m_out), 1.0
    else:
        prefactor, floor = math.sqrt(10.0 * m_out), 2.0
    terms = [c * max(floor, f) * e for e, c, f in zip(eps, C, c_f)]
    return prefactor * max(terms, default=0.0)


@dataclass
class CaccioppoliResult:
    """Caccioppoli 不等式检验结果"""
    lhs: float
    rhs: float
    passed: bool
    prefactor: float

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {"lhs": self.lhs, "rhs": self.rhs, "passed": self.passed, "prefactor": self.prefactor}


def caccioppoli_check(problem: LocalProblem, w: np.ndarray, delta: Optional[float] = None) -> CaccioppoliResult:
    """‖w‖²_{L∞(L²(Ω_in))} + ‖α^{1/2}∇w‖²_{L²(I×Ω_in)} ≤ 8α₁/δ² ‖w‖²_{L²(I×Ω_out)}"""
    delta = problem.delta if delta is None else delta
    if not delta > 0:
        raise InvalidArgumentError(f"Oversampling distance must be positive, got {delta}")
    w = np.asarray(w, float)
    w_in = problem.restriction.restrict(w)
    grid_in = problem.grid_in
    mass_in = spatial_mass(grid_in)
    levels = w_in.reshape(grid_in.nsteps, grid_in.n_spatial)
    sup = max(float(levels[n] @ (mass_in @ levels[n])) for n in range(grid_in.nsteps))
    lhs = max(sup, 0.0) + float(problem.m_in.norm(w_in)) ** 2
    prefactor = 8.0 * problem.alpha.alpha1 / delta ** 2
    rhs = prefactor * float(problem.gram_out(NormTag.L2).norm(w)) ** 2
    return CaccioppoliResult(lhs, rhs, lhs <= CACCIOPPOLI_SLACK * rhs, prefactor)
