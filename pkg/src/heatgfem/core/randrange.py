"""
随机值域逼近

自适应随机值域算法（以概率误差估计驱动）、固定规模随机 SVD，
以及由全局容差计算各子区域局部容差。
"""

from typing import List, Optional, Sequence, Tuple
import logging
import math
import time

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import eigsh
from scipy.special import erfinv
from pydantic import BaseModel, ConfigDict, Field

from .exceptions import InvalidArgumentError, BudgetExceededError
from .assembly import GramMatrix
from .transfer import ReducedBasis, Provenance, m_orthogonalize, scaled_operator, transfer_matrix

logger = logging.getLogger("heatgfem.randrange")

DENSE_EIGEN_CAP = 2000


class RangeFinderConfig(BaseModel):
    """自适应随机值域算法参数"""
    model_config = ConfigDict(frozen=True)

    tol: float = Field(gt=0)
    eps_algofail: float = Field(default=1e-15, gt=0, lt=1)
    n_t: int = Field(default=20, ge=1)
    max_basis: int = Field(default=500, ge=1)
    seed: int = 0

    @property
    def eps_testfail(self) -> float:
        return self.eps_algofail / self.max_basis


def sample_random_trace(problem, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """协方差为 M_out⁻¹ 的高斯边界向量 R_out⁻¹ z"""
    shape = (problem.n_out,) if size is None else (problem.n_out, size)
    z = rng.standard_normal(shape)
    return problem.out_factor.solve_upper(z)


def min_eigenvalue(gram: GramMatrix) -> float:
    """Gram 矩阵的最小特征值"""
    n = gram.size
    if n <= DENSE_EIGEN_CAP:
        return float(scipy.linalg.eigvalsh(gram.matrix.toarray(), subset_by_index=[0, 0])[0])
    value = eigsh(gram.matrix.tocsc(), k=1, sigma=0.0, which="LM", return_eigenvectors=False)
    return float(value[0])


def estimator_constant(n_t: int, eps_testfail: float, lambda_min: float) -> float:
    """c_est = [√(2 λ_min) · erfinv(eps_testfail^{1/n_t})]⁻¹"""
    if not lambda_min > 0:
        raise InvalidArgumentError(f"M_out must be positive definite, smallest eigenvalue {lambda_min}")
    return 1.0 / (math.sqrt(2.0 * lambda_min) * float(erfinv(eps_testfail ** (1.0 / n_t))))


def adaptive_range_finder(problem, config: RangeFinderConfig,
                          rng: Optional[np.random.Generator] = None) -> ReducedBasis:
    """自适应随机值域算法

    每次估计都用新抽取的 n_t 个测试向量：接受一个基向量后重新抽样，
    投影掉当前基，再由残量计算 err_est。失效概率界要求测试向量与基相互独立。
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    gram = problem.m_in
    start = time.time()
    basis = np.zeros((problem.n_in, 0))
    if problem.n_out == 0:
        return ReducedBasis(basis, provenance=[],
                            metadata={"err_est": 0.0, "history": [(0, 0.0)], "test_blocks": 0})

    c_est = estimator_constant(config.n_t, config.eps_testfail, min_eigenvalue(problem.m_out))

    def estimate() -> float:
        tests = problem.apply(sample_random_trace(problem, rng, config.n_t))
        residual = m_orthogonalize(tests, basis, gram, passes=2)
        return c_est * float(np.max(gram.norm(residual)))

    err_est = estimate()
    test_blocks = 1
    history: List[Tuple[int, float]] = [(0, err_est)]
    draws = 0
    eps = np.finfo(float).eps

    while err_est > config.tol:
        if basis.shape[1] >= config.max_basis or draws >= 2 * config.max_basis:
            raise BudgetExceededError(
                f"Range finder stopped with {basis.shape[1]} vectors, err_est={err_est:.3e} > tol={config.tol:.3e}",
                err_est=err_est, basis_size=basis.shape[1],
            )
        draws += 1
        sample = problem.apply(sample_random_trace(problem, rng))
        original = float(gram.norm(sample))
        v = m_orthogonalize(sample, basis, gram, passes=2)
        norm = float(gram.norm(v))
        if norm <= 10.0 * eps * max(original, eps):
            logger.debug(f"Rejected numerically dependent sample (norm {norm:.3e})")
            continue
        q = v / norm
        basis = np.column_stack([basis, q])
        err_est = estimate()
        test_blocks += 1
        history.append((basis.shape[1], err_est))
        logger.debug(f"Range finder n={basis.shape[1]}, err_est={err_est:.3e}")

    wall = time.time() - start
    logger.info(f"Range finder reached tol={config.tol:.3e} with n={basis.shape[1]} in {wall:.2f}s")
    return ReducedBasis(
        basis, provenance=[Provenance.RANDOMIZED.value] * basis.shape[1],
        metadata={"err_est": err_est, "history": history, "c_est": c_est, "draws": draws,
                  "test_blocks": test_blocks, "wall_time": wall},
    )


def m_orthonormalize_block(vectors: np.ndarray, gram: GramMatrix, rel_tol: float = 1e-13) -> np.ndarray:
    """按 Gram 矩阵对整块列向量正交规范化（两遍特征分解 QR），丢弃数值相关的方向"""
    q = np.asarray(vectors, float)
    for _ in range(2):
        if q.shape[1] == 0:
            return q
        g = q.T @ (gram.matrix @ q)
        w, v = scipy.linalg.eigh(0.5 * (g + g.T))
        keep = w > rel_tol * max(w[-1], 0.0)
        order = np.argsort(w[keep])[::-1]
        q = (q @ v[:, keep][:, order]) / np.sqrt(w[keep][order])
    return q


def randomized_svd(problem, n: int, oversampling: int = 10,
                   rng: Optional[np.random.Generator] = None) -> ReducedBasis:
    """固定规模随机 SVD：M_in-正交值域 + 伴随求解得到的投影 SVD"""
    rng = rng if rng is not None else np.random.default_rng(0)
    if n < 0:
        raise InvalidArgumentError(f"Basis size must be nonnegative, got {n}")
    k = min(n + oversampling, problem.n_out, problem.n_in)
    if k == 0 or n == 0:
        return ReducedBasis(np.zeros((problem.n_in, 0)), np.zeros(0), provenance=[])
    start = time.time()
    images = problem.apply(sample_random_trace(problem, rng, k))
    q = m_orthonormalize_block(images, problem.m_in)
    adjoint = problem.apply_adjoint(problem.m_in.matrix @ q)
    small = problem.out_factor.solve_upper_transpose(adjoint).T
    left, sigma, _ = scipy.linalg.svd(small, full_matrices=False)
    n = min(n, sigma.size)
    vectors = q @ left[:, :n]
    logger.info(f"Randomized SVD with {k} samples: n={n}, sigma_1={sigma[0]:.4e} ({time.time() - start:.2f}s)")
    return ReducedBasis(vectors, sigma[:n].copy(), sigma.copy(),
                        provenance=[Provenance.RANDOMIZED.value] * n, metadata={"samples": k})


def true_projection_error(problem, basis: np.ndarray, matrix: Optional[np.ndarray] = None) -> float:
    """‖R_in (P − Π P) R_out⁻¹‖₂，Π 为到 basis 张成空间的 M_in-正交投影

    投影在 R_in 坐标下做正交化，与 optimal_space 使用同一个（移位后的）分解，
    因此对最优基恰好得到 σ_{n+1}。
    """
    scaled = scaled_operator(problem, transfer_matrix(problem) if matrix is None else matrix)
    basis = np.asarray(basis, float).reshape(problem.n_in, -1)
    if basis.shape[1]:
        q = scipy.linalg.orth(problem.in_factor.apply_upper(basis))
        scaled = scaled - q @ (q.T @ scaled)
    return float(scipy.linalg.norm(scaled, 2)) if scaled.size else 0.0


def projection_error_curve(problem, basis: np.ndarray, matrix: Optional[np.ndarray] = None) -> np.ndarray:
    """对 n = 0..k 给出前 n 个基向量的真实投影误差 ‖R_in (P − Π_n P) R_out⁻¹‖₂

    R_in·basis 的完整 QR 对前 n 列是嵌套的：Q 的后 N_in − n 列张成正交补，
    误差等于 (Qᵀ S)[n:] 的谱范数，由行 Gram 矩阵的子块求最大特征值。
    """
    scaled = scaled_operator(problem, transfer_matrix(problem) if matrix is None else matrix)
    basis = np.asarray(basis, float).reshape(problem.n_in, -1)
    k = basis.shape[1]
    if k:
        q, _ = scipy.linalg.qr(problem.in_factor.apply_upper(basis), mode="full")
        scaled = q.T @ scaled
    rows = scaled @ scaled.T
    m = rows.shape[0]
    curve = np.zeros(k + 1)
    for n in range(min(k, m - 1) + 1):
        top = scipy.linalg.eigvalsh(rows[n:, n:], subset_by_index=[m - n - 1, m - n - 1])[0]
        curve[n] = math.sqrt(max(float(top), 0.0))
    return curve


def local_tolerances(global_tol: float, constants: Sequence[Tuple[float, float]], m_out: int,
                     homogeneous: bool = True) -> np.ndarray:
    """由全局相对容差得到各子区域的传递算子容差 ε_i

    齐次数据：2√M^out · C_i · max{1, c_f,i} · ε_i = global_tol；
    一般情形：√(10 M^out) · C_i · max{2, c_f,i} · ε_i = global_tol。
    """
    if not global_tol > 0:
        raise InvalidArgumentError(f"Global tolerance must be positive, got {global_tol}")
    if m_out < 1:
        raise InvalidArgumentError(f"Overlap count must be >= 1, got {m_out}")
    prefactor = 2.0 * math.sqrt(m_out) if homogeneous else math.sqrt(10.0 * m_out)
    floor = 1.0 if homogeneous else 2.0
    result = []
    for c_i, c_f in constants:
        if not c_i > 0:
            raise InvalidArgumentError(f"Bound constant must be positive, got {c_i}")
        result.append(global_tol / (prefactor * c_i * max(floor, c_f)))
    return np.array(result)
