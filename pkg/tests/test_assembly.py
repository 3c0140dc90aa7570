"""
时空系统、载荷与 Gram 矩阵组装测试
"""

import sys
import os

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import pytest

# 添加src目录到Python路径
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from heatgfem.core.exceptions import InvalidArgumentError, MemoryGuardError
from heatgfem.core.grid import Rectangle, build_grid, boundary_dofs
from heatgfem.core.coefficients import CoefficientField, SourceField, field_box
from heatgfem.core.assembly import (Scheme, NormTag, assemble_system, impose_dirichlet_rows, assemble_load,
                                    initial_load, assemble_gram, solve, element_mass, element_stiffness,
                                    spatial_mass, spatial_stiffness, factor_gram)
from heatgfem.core.analytic import example3_solution, nodal_values
from heatgfem.core.errors import global_graph_error


def _dirichlet_system(grid, alpha=None, scheme=Scheme.PETROV_GALERKIN):
    system = assemble_system(grid, alpha, scheme)
    lateral = boundary_dofs(grid, "lateral")
    impose_dirichlet_rows(system, lateral)
    return system, lateral


def test_element_matrices():
    """单位正方形单元：刚度对角元 2/3，质量对角元 1/9"""
    k = element_stiffness(1.0, 1.0)
    m = element_mass(1.0, 1.0)
    assert np.allclose(np.diag(k), 2.0 / 3.0)
    assert np.allclose(k.sum(axis=1), 0.0)
    assert np.allclose(np.diag(m), 1.0 / 9.0)
    assert m.sum() == pytest.approx(1.0)
    grid = build_grid((0, 0), (1, 1), (1, 1), 1.0, 1)
    assert np.allclose(spatial_stiffness(grid).toarray(), k)


def test_single_cell_system_by_hand():
    """1×1 单元、1 个时间步的系统矩阵逐元素比较"""
    grid = build_grid((0, 0), (1, 1), (1, 1), 1.0, 1)
    pg = assemble_system(grid, None, Scheme.PETROV_GALERKIN).matrix.toarray()
    ie = assemble_system(grid, None, Scheme.IMPLICIT_EULER).matrix.toarray()
    m, k = element_mass(1, 1), element_stiffness(1, 1)
    assert np.allclose(pg, m + 0.5 * k, atol=1e-15)
    assert np.allclose(ie, m + k, atol=1e-15)


def test_two_step_block_structure():
    """次对角块：Petrov-Galerkin 为 −M + Δt/2 K，隐式 Euler 为 −M"""
    grid = build_grid((0, 0), (1, 1), (2, 2), 1.0, 2)
    m, k = spatial_mass(grid).toarray(), spatial_stiffness(grid).toarray()
    n = grid.n_spatial
    pg = assemble_system(grid, None).matrix.toarray()
    assert np.allclose(pg[n:, :n], -m + 0.25 * k)
    assert np.allclose(pg[:n, n:], 0.0)
    ie = assemble_system(grid, None, "implicit-euler").matrix.toarray()
    assert np.allclose(ie[n:, :n], -m)
    assert np.allclose(ie[n:, n:], m + 0.5 * k)


def test_apply_matches_matrix(rng):
    """分块乘法与完整矩阵一致"""
    grid = build_grid((0, 0), (1, 1), (3, 2), 1.0, 3)
    system, _ = _dirichlet_system(grid)
    v = rng.standard_normal((grid.n_dofs, 2))
    assert np.allclose(system.apply(v), system.matrix @ v)
    assert np.allclose(system.apply_transpose(v), system.matrix.T @ v)


def test_crank_nicolson_equivalence(rng):
    """时间无关 α：Petrov-Galerkin 解等于逐时间片的 Crank-Nicolson 推进"""
    grid = build_grid((0, 0), (1, 1), (3, 3), 1.0, 4)
    spatial_alpha = 1.0 + rng.random(grid.n_cells)
    alpha = np.tile(spatial_alpha, grid.nsteps)
    system, lateral = _dirichlet_system(grid, alpha)
    load = assemble_load(grid, np.ones(grid.nsteps * grid.n_cells))
    u = solve(system, load)

    m = spatial_mass(grid).toarray()
    k = spatial_stiffness(grid, spatial_alpha).toarray()
    dt = grid.dt
    bnd = lateral[lateral < grid.n_spatial]
    left = m + 0.5 * dt * k
    right = m - 0.5 * dt * k
    left[bnd] = 0.0
    left[bnd, bnd] = 1.0
    right[bnd] = 0.0
    previous = np.zeros(grid.n_spatial)
    for n in range(grid.nsteps):
        f = load[n * grid.n_spatial:(n + 1) * grid.n_spatial]
        previous = scipy.linalg.solve(left, right @ previous + f)
        current = u[n * grid.n_spatial:(n + 1) * grid.n_spatial]
        assert np.linalg.norm(current - previous) <= 1e-10 * np.linalg.norm(previous)


def test_homogeneous_problem_is_zero():
    """f = 0 且零边界数据时解为零"""
    grid = build_grid((0, 0), (1, 1), (3, 3), 1.0, 3)
    system, _ = _dirichlet_system(grid)
    load = assemble_load(grid, None)
    assert np.all(load == 0.0)
    assert np.all(solve(system, load) == 0.0)


def test_impose_dirichlet_rows():
    """空集不变；侧边界行为单位行；重复施加幂等"""
    grid = build_grid((0, 0), (1, 1), (2, 2), 1.0, 2)
    system = assemble_system(grid, None)
    before = system.matrix.toarray()
    impose_dirichlet_rows(system, [])
    assert np.array_equal(system.matrix.toarray(), before)

    lateral = boundary_dofs(grid, "lateral")
    impose_dirichlet_rows(system, lateral)
    matrix = system.matrix.toarray()
    identity = np.eye(grid.n_dofs)
    is_identity_row = [np.array_equal(matrix[i], identity[i]) for i in range(grid.n_dofs)]
    assert sum(is_identity_row) == lateral.size == 2 * 8
    assert np.array_equal(system.dirichlet_dofs, lateral)

    impose_dirichlet_rows(system, lateral)
    assert np.array_equal(system.matrix.toarray(), matrix)
    with pytest.raises(InvalidArgumentError):
        impose_dirichlet_rows(system, [grid.n_dofs])


def test_load_by_hand():
    """f = 1、2×2 单元、1 个时间片：中心节点载荷为 Δt·h²"""
    grid = build_grid((0, 0), (1, 1), (2, 2), 1.0, 1)
    load = assemble_load(grid, np.ones(grid.n_cells))
    assert load[4] == pytest.approx(0.25)
    assert np.count_nonzero(load) == 1


def test_example3_load_against_gauss_oracle():
    """例 3 热源：中点求积与 2×2×2 Gauss 求积相对误差 < 1e-3"""
    rect = Rectangle(0, 0, 5, 5)
    grid = build_grid((0, 0), (5, 5), (50, 50), 0.5, 40)
    source = SourceField.example3(field_box(0.5, rect))
    load = assemble_load(grid, source)

    gauss = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)
    ci = np.tile(np.arange(grid.nx), grid.ny)
    cj = np.repeat(np.arange(grid.ny), grid.nx)
    nodes = grid.cell_nodes()
    oracle = np.zeros((grid.nsteps, grid.n_spatial))
    for n in range(grid.nsteps):
        for tau in gauss:
            t = np.full(ci.shape, (n + tau) * grid.dt)
            for sa in gauss:
                for sb in gauss:
                    values = source(t, (ci + sa) * grid.hx, (cj + sb) * grid.hy)
                    values = values * 0.5 * grid.dt * 0.25 * grid.cell_area
                    shapes = ((1 - sa) * (1 - sb), sa * (1 - sb), (1 - sa) * sb, sa * sb)
                    for local, shape in enumerate(shapes):
                        np.add.at(oracle[n], nodes[:, local], values * shape)
    oracle = oracle.ravel()
    oracle[boundary_dofs(grid, "lateral")] = 0.0
    assert np.linalg.norm(load - oracle) <= 1e-3 * np.linalg.norm(oracle)


def test_initial_load():
    """非齐次初值：u0 ≡ 1 与边界数据 1 给出 u ≡ 1"""
    grid = build_grid((0, 0), (1, 1), (3, 3), 1.0, 3)
    system, lateral = _dirichlet_system(grid)
    u0 = np.ones(grid.n_spatial)
    load = initial_load(system, u0)
    assert np.all(load[grid.n_spatial:] == 0.0)
    assert np.all(load[lateral[lateral < grid.n_spatial]] == 0.0)
    rhs = load.copy()
    rhs[lateral] = 1.0
    assert np.allclose(solve(system, rhs), 1.0, atol=1e-12)
    with pytest.raises(InvalidArgumentError):
        initial_load(system, np.ones(3))


def test_solve_unit_boundary_vector():
    """右端为边界单位向量时解在该点取 1，其余边界点取 0"""
    grid = build_grid((0, 0), (1, 1), (3, 3), 1.0, 2)
    system, lateral = _dirichlet_system(grid)
    m = lateral[5] + grid.n_spatial
    rhs = np.zeros(grid.n_dofs)
    rhs[m] = 1.0
    u = solve(system, rhs)
    assert u[m] == pytest.approx(1.0)
    others = np.setdiff1d(lateral, [m])
    assert np.allclose(u[others], 0.0)


def test_solve_residual(rng):
    """残差 ‖Bu − r‖∞ ≤ 1e-10 ‖r‖∞，含转置求解与多右端项"""
    grid = build_grid((0, 0), (1, 1), (4, 3), 1.0, 5)
    box = field_box(1.0, Rectangle(0, 0, 1, 1))
    alpha = CoefficientField.multiscale(box, 0.3)
    system, _ = _dirichlet_system(grid, alpha)
    matrix = system.matrix
    rhs = rng.standard_normal((grid.n_dofs, 3))
    u = solve(system, rhs)
    assert np.max(np.abs(matrix @ u - rhs)) <= 1e-10 * np.max(np.abs(rhs))
    v = solve(system, rhs, transpose=True)
    assert np.max(np.abs(matrix.T @ v - rhs)) <= 1e-10 * np.max(np.abs(rhs))


def test_manufactured_linear_solution():
    """u = t·x、f = x：离散解精确再现节点插值"""
    grid = build_grid((0, 0), (1, 1), (4, 4), 1.0, 3)
    system, lateral = _dirichlet_system(grid)
    xm, _ = grid.cell_midpoints()
    load = assemble_load(grid, np.tile(xm, grid.nsteps))
    exact = nodal_values(lambda t, x, y: t * x, grid)
    load[lateral] = exact[lateral]
    u = solve(system, load)
    assert np.max(np.abs(u - exact)) <= 1e-10


def test_maximum_principle_implicit_euler(rng):
    """隐式 Euler、f = 0、边界数据 ∈ [0,1] 时解保持在 [0,1]"""
    grid = build_grid((0, 0), (1, 1), (6, 6), 1.0, 5)
    system, lateral = _dirichlet_system(grid, None, Scheme.IMPLICIT_EULER)
    rhs = np.zeros(grid.n_dofs)
    rhs[lateral] = rng.random(lateral.size)
    u = solve(system, rhs)
    assert u.min() >= -1e-10
    assert u.max() <= 1.0 + 1e-10


def test_fe_convergence_example3():
    """例 3 构造解：h 与 Δt 同时减半时图范数误差至少缩小 1.5 倍"""
    rect = Rectangle(0, 0, 5, 5)
    errors = []
    for ncells, nsteps in ((10, 20), (20, 40), (40, 80)):
        grid = build_grid((0, 0), (5, 5), (ncells, ncells), 0.5, nsteps)
        box = field_box(0.5, rect)
        alpha = CoefficientField.constant(box)
        source = SourceField.example3(box)
        system, lateral = _dirichlet_system(grid, alpha)
        u_h = solve(system, assemble_load(grid, source))
        exact = nodal_values(example3_solution, grid)
        errors.append(global_graph_error(exact, u_h, alpha, grid, source))
    ratios = np.array(errors[:-1]) / np.array(errors[1:])
    # 介于一阶与二阶（节点插值的超收敛）之间
    assert np.all(ratios >= 1.5), ratios
    assert np.all(ratios <= 4.5), ratios


def test_gram_symmetry_and_semidefiniteness(rng):
    """Gram 矩阵严格对称且 Rayleigh 商非负"""
    grid = build_grid((0, 0), (1, 1), (3, 3), 1.0, 3)
    box = field_box(1.0, Rectangle(0, 0, 1, 1))
    alpha = CoefficientField.multiscale(box, 0.5)
    for tag in NormTag:
        gram = assemble_gram(grid, alpha, tag)
        assert abs(gram.matrix - gram.matrix.T).max() == 0.0
        v = rng.standard_normal((gram.size, 100))
        quotients = np.sum(v * (gram.matrix @ v), axis=0)
        assert quotients.min() >= -1e-12 * abs(gram.matrix).max()


def test_h1_seminorm_kernel():
    """空间常数向量的 H¹ 半范数为零"""
    grid = build_grid((0, 0), (1, 1), (3, 3), 1.0, 3)
    gram = assemble_gram(grid, None, NormTag.H1_SEMINORM_ALPHA)
    v = np.repeat(np.array([1.0, -2.0, 3.0]), grid.n_spatial)
    assert gram.norm(v) == pytest.approx(0.0, abs=1e-6)
    assert gram.size == grid.n_dofs


def test_trace_gram_row_sums():
    """均匀边界上内部时间层的行和为 Δt·h·α"""
    grid = build_grid((0, 0), (1, 1), (4, 4), 1.0, 4)
    box = field_box(1.0, Rectangle(0, 0, 1, 1))
    gram = assemble_gram(grid, CoefficientField.constant(box, 2.0), NormTag.TRACE_L2_ALPHA)
    lateral = boundary_dofs(grid, "lateral")
    assert np.array_equal(gram.dofs, lateral)
    assert gram.size == lateral.size
    sums = np.asarray(gram.matrix.sum(axis=1)).ravel()
    levels = lateral // grid.n_spatial
    interior = (levels > 0) & (levels < grid.nsteps - 1)
    assert np.allclose(sums[interior], grid.dt * grid.hx * 2.0)
    unweighted = assemble_gram(grid, None, NormTag.TRACE_L2)
    assert np.allclose(np.asarray(unweighted.matrix.sum(axis=1)).ravel()[interior], grid.dt * grid.hx)


def test_factor_gram(rng):
    """移位 Cholesky：RᵀR = M + sI，稠密与带状结果一致"""
    grid = build_grid((0, 0), (1, 1), (3, 3), 1.0, 2)
    gram = assemble_gram(grid, None, NormTag.V_NORM_ALPHA)
    dense = factor_gram(gram)
    banded = factor_gram(gram, dense_cap=0)
    z = rng.standard_normal(gram.size)
    shifted = gram.matrix.toarray() + dense.shift * np.eye(gram.size)
    assert np.allclose(dense.solve(z), np.linalg.solve(shifted, z))
    assert np.allclose(banded.solve(z), dense.solve(z))
    assert np.allclose(banded.apply_upper(banded.solve_upper(z)), z)
    assert np.allclose(dense.solve_upper_transpose(z), banded.solve_upper_transpose(z))
    with pytest.raises(MemoryGuardError):
        factor_gram(gram, dense_cap=0, max_band_entries=1)
    assert factor_gram(sp.csr_matrix((0, 0))).size == 0


if __name__ == "__main__":
    pytest.main([__file__])
