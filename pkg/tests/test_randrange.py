"""
随机值域算法测试
"""

import sys
import os
import math

import numpy as np
import scipy.sparse as sp
import pytest
from pydantic import ValidationError

# 添加src目录到Python路径
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from heatgfem.core.exceptions import InvalidArgumentError, BudgetExceededError
from heatgfem.core.assembly import GramMatrix, NormTag
from heatgfem.core.grid import Rectangle
from heatgfem.core.coefficients import CoefficientField, field_box
from heatgfem.core.transfer import Provenance, DenseTransfer, build_local_problem, transfer_matrix, optimal_space
from heatgfem.core.randrange import (RangeFinderConfig, sample_random_trace, min_eigenvalue, estimator_constant,
                                     adaptive_range_finder, randomized_svd, true_projection_error,
                                     projection_error_curve, m_orthonormalize_block, local_tolerances)


class CountingGenerator:
    """记录每次 standard_normal 调用形状的随机数发生器"""

    def __init__(self, seed):
        self._rng = np.random.default_rng(seed)
        self.shapes = []

    def standard_normal(self, shape):
        self.shapes.append(tuple(shape))
        return self._rng.standard_normal(shape)


def _identity_gram(n):
    return GramMatrix(sp.identity(n, format="csr"), NormTag.L2)


@pytest.fixture
def spectrum(small_local_problem):
    p = transfer_matrix(small_local_problem)
    return p, optimal_space(small_local_problem, 0, p).spectrum


def test_config_validation():
    """tol 必须为正；eps_testfail = eps_algofail / max_basis"""
    with pytest.raises(ValidationError):
        RangeFinderConfig(tol=0.0)
    config = RangeFinderConfig(tol=1e-3)
    assert config.eps_testfail == pytest.approx(1e-15 / 500)
    assert config.n_t == 20
    with pytest.raises(ValidationError):
        config.tol = 1.0


def test_estimator_constant():
    """c_est 随 n_t 单调递减；λ_min ≤ 0 报错"""
    values = [estimator_constant(n_t, 2e-18, 0.5) for n_t in (5, 10, 20, 40)]
    assert all(a > b > 0 for a, b in zip(values, values[1:]))
    with pytest.raises(InvalidArgumentError):
        estimator_constant(10, 1e-10, 0.0)


def test_min_eigenvalue():
    """对角 Gram 矩阵的最小特征值"""
    gram = GramMatrix(sp.diags([3.0, 1.0, 2.0]).tocsr(), NormTag.L2)
    assert min_eigenvalue(gram) == pytest.approx(1.0)


def test_sample_random_trace_shapes(small_local_problem, rng):
    """单个样本与成块样本"""
    assert sample_random_trace(small_local_problem, rng).shape == (48,)
    assert sample_random_trace(small_local_problem, rng, 3).shape == (48, 3)


def test_adaptive_range_finder(small_local_problem, spectrum):
    """真实误差 ≤ 误差估计 ≤ tol"""
    problem = small_local_problem
    p, sigma = spectrum
    tol = 1e-2 * sigma[0]
    basis = adaptive_range_finder(problem, RangeFinderConfig(tol=tol, seed=7))
    err_est = basis.metadata["err_est"]
    assert err_est <= tol
    assert true_projection_error(problem, basis.vectors, p) <= err_est
    assert basis.orthonormality_defect(problem.m_in) < 1e-8
    assert basis.provenance == [Provenance.RANDOMIZED.value] * basis.size

    assert [n for n, _ in basis.metadata["history"]] == list(range(basis.size + 1))
    assert basis.metadata["history"][-1][1] == err_est
    assert basis.metadata["test_blocks"] == basis.size + 1
    assert basis.metadata["draws"] >= basis.size


def test_adaptive_range_finder_reproducible(small_local_problem, spectrum):
    """相同种子得到相同的基"""
    tol = 1e-1 * spectrum[1][0]
    a = adaptive_range_finder(small_local_problem, RangeFinderConfig(tol=tol, seed=3))
    b = adaptive_range_finder(small_local_problem, RangeFinderConfig(tol=tol, seed=3))
    assert np.array_equal(a.vectors, b.vectors)


def test_budget_exceeded(small_local_problem, spectrum):
    """基函数预算用尽时报告当前估计"""
    config = RangeFinderConfig(tol=1e-12 * spectrum[1][0], max_basis=1)
    with pytest.raises(BudgetExceededError) as excinfo:
        adaptive_range_finder(small_local_problem, config)
    assert excinfo.value.basis_size == 1
    assert excinfo.value.err_est > config.tol


def test_randomized_svd_full_sampling(small_local_problem, spectrum, rng):
    """样本数不少于 N_in 时随机 SVD 精确恢复前几个奇异值"""
    _, sigma = spectrum
    basis = randomized_svd(small_local_problem, 5, oversampling=50, rng=rng)
    assert basis.size == 5
    assert basis.metadata["samples"] == 27
    assert np.allclose(basis.singular_values, sigma[:5], rtol=1e-5)
    assert basis.orthonormality_defect(small_local_problem.m_in) < 1e-8
    assert randomized_svd(small_local_problem, 0).size == 0
    with pytest.raises(InvalidArgumentError):
        randomized_svd(small_local_problem, -1)


def test_m_orthonormalize_block_drops_dependent(rng):
    """数值相关的列被丢弃"""
    gram = GramMatrix(sp.diags([1.0, 2.0, 3.0, 4.0]).tocsr(), NormTag.L2)
    a = rng.standard_normal((4, 2))
    q = m_orthonormalize_block(np.column_stack([a, a[:, 0] + a[:, 1]]), gram)
    assert q.shape == (4, 2)
    assert np.allclose(q.T @ (gram.matrix @ q), np.eye(2), atol=1e-12)


def test_sample_random_trace_covariance(small_local_problem):
    """ξ = R_out⁻¹ z 满足 ξᵀ M_out ξ = zᵀz，1000 个样本的均值接近 N_out"""
    problem = small_local_problem
    samples = 1000
    xi = sample_random_trace(problem, np.random.default_rng(21), samples)
    z = np.random.default_rng(21).standard_normal((problem.n_out, samples))
    quadratic = problem.m_out.norm(xi) ** 2
    assert np.allclose(quadratic, np.sum(z * z, axis=0), rtol=1e-10)
    # ξᵀ M_out ξ ~ χ²(N_out)，均值的标准差为 √(2 N_out / samples)
    spread = math.sqrt(2.0 * problem.n_out / samples)
    assert abs(np.mean(quadratic) - problem.n_out) <= 4.0 * spread


def test_test_vectors_refreshed_after_each_acceptance(small_local_problem, spectrum):
    """每接受一个基向量都重新抽取一整块测试向量"""
    problem = small_local_problem
    config = RangeFinderConfig(tol=1e-2 * spectrum[1][0], n_t=8, seed=5)
    rng = CountingGenerator(5)
    basis = adaptive_range_finder(problem, config, rng)
    assert basis.size >= 2

    blocks = [shape for shape in rng.shapes if shape == (48, 8)]
    singles = [shape for shape in rng.shapes if shape == (48,)]
    assert len(blocks) == basis.size + 1 == basis.metadata["test_blocks"]
    assert len(singles) == basis.metadata["draws"]
    assert len(blocks) + len(singles) == len(rng.shapes)
    assert rng.shapes[0] == rng.shapes[-1] == (48, 8)

    # 初始估计来自第一块测试向量
    first = np.random.default_rng(5).standard_normal((48, 8))
    images = problem.apply(problem.out_factor.solve_upper(first))
    expected = basis.metadata["c_est"] * float(np.max(problem.m_in.norm(images)))
    assert basis.metadata["history"][0][1] == pytest.approx(expected, rel=1e-12)

    again = adaptive_range_finder(problem, config, np.random.default_rng(5))
    assert np.array_equal(again.vectors, basis.vectors)


def test_range_finder_recovers_rank(rng):
    """秩 5 的显式算子：20 个种子下都恰好得到 5 个基向量且真实误差 ≤ tol"""
    u, _ = np.linalg.qr(rng.standard_normal((30, 5)))
    v, _ = np.linalg.qr(rng.standard_normal((40, 5)))
    matrix = u @ np.diag([1.0, 0.5, 0.2, 0.1, 0.05]) @ v.T
    dense = DenseTransfer(matrix, _identity_gram(30), _identity_gram(40))
    tol = 1e-6
    for seed in range(20):
        basis = adaptive_range_finder(dense, RangeFinderConfig(tol=tol, seed=seed))
        assert basis.size == 5
        assert true_projection_error(dense, basis.vectors) <= tol
        assert basis.metadata["err_est"] <= tol


def test_projection_error_curve(small_local_problem, spectrum):
    """最优基的误差曲线即奇异值；末项与真实投影误差一致"""
    problem = small_local_problem
    p, sigma = spectrum
    optimal = optimal_space(problem, 6, p)
    curve = projection_error_curve(problem, optimal.vectors, p)
    assert curve.shape == (7,)
    assert np.allclose(curve, sigma[:7], rtol=1e-8, atol=1e-12 * sigma[0])

    basis = adaptive_range_finder(problem, RangeFinderConfig(tol=1e-2 * sigma[0], seed=2))
    curve = projection_error_curve(problem, basis.vectors, p)
    assert curve.size == basis.size + 1
    assert curve[-1] == pytest.approx(true_projection_error(problem, basis.vectors, p), rel=1e-8,
                                      abs=1e-12 * sigma[0])
    assert np.all(np.diff(curve) <= 1e-12 * sigma[0])
    assert np.all(curve[1:] >= sigma[1:curve.size] * (1 - 1e-8) - 1e-12 * sigma[0])


@pytest.fixture(scope="module")
def example1_desk():
    """例 1 桌面规模的局部问题：三条通道、网格 1/40、20 步、一层过采样"""
    domain = Rectangle(0.0, 0.0, 0.75, 0.75)
    inner = Rectangle(0.3, 0.3, 0.45, 0.45)
    outer = inner.expanded(inner.width, clip=domain)
    alpha = CoefficientField.channels(field_box(1.0, domain), count=3)
    problem = build_local_problem(inner, outer, alpha, T=1.0, nsteps=20, h=0.025,
                                  scheme="implicit-euler", config={"alpha_subsamples": 4})
    matrix = transfer_matrix(problem)
    return problem, matrix, optimal_space(problem, 0, matrix).spectrum


@pytest.mark.slow
def test_quasi_optimality_example1(example1_desk):
    """20 个种子：每个中间 n 都有 误差 ≤ 10·√n·σ_{n+1}"""
    problem, matrix, sigma = example1_desk
    for seed in range(20):
        basis = adaptive_range_finder(problem, RangeFinderConfig(tol=1e-4 * sigma[0], seed=seed))
        curve = projection_error_curve(problem, basis.vectors, matrix)
        for n in range(1, min(basis.size, sigma.size)):
            assert curve[n] <= 10.0 * math.sqrt(n) * sigma[n], f"seed={seed}, n={n}"


@pytest.mark.slow
@pytest.mark.parametrize("relative_tol", [1e-2, 1e-3, 1e-4])
def test_adaptive_guarantee_example1(example1_desk, relative_tol):
    """三个数量级的 tol、20 个种子：真实误差（对照稠密传递矩阵）都不超过 tol"""
    problem, matrix, sigma = example1_desk
    tol = relative_tol * sigma[0]
    for seed in range(20):
        basis = adaptive_range_finder(problem, RangeFinderConfig(tol=tol, seed=seed))
        assert true_projection_error(problem, basis.vectors, matrix) <= tol, f"seed={seed}"


def test_local_tolerances():
    """齐次与一般情形的局部容差"""
    homogeneous = local_tolerances(1e-2, [(2.0, 0.5)], 4)
    assert homogeneous[0] == pytest.approx(1.25e-3)
    general = local_tolerances(1e-2, [(2.0, 0.5), (1.0, 3.0)], 4, homogeneous=False)
    assert general[0] == pytest.approx(1e-2 / (math.sqrt(40.0) * 2.0 * 2.0))
    assert general[1] == pytest.approx(1e-2 / (math.sqrt(40.0) * 3.0))
    with pytest.raises(InvalidArgumentError):
        local_tolerances(0.0, [(1.0, 0.0)], 4)
    with pytest.raises(InvalidArgumentError):
        local_tolerances(1e-2, [(1.0, 0.0)], 0)
    with pytest.raises(InvalidArgumentError):
        local_tolerances(1e-2, [(0.0, 0.0)], 4)


if __name__ == "__main__":
    pytest.main([__file__])
