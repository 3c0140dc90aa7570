"""
实验协调器

协调局部传递算子研究（例 1、例 2）与全局 GFEM 研究（例 3、例 4）的完整流程：
组装、局部基构造、单位分解耦合、约化求解、误差与界的检验，以及结果输出。
"""

from typing import List, Dict, Any, Optional, Sequence, Tuple
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path
import logging
import math
import time

import numpy as np
import pandas as pd

from .exceptions import HeatGFEMError, InfSupError, InvalidArgumentError
from .grid import Rectangle, TensorGrid, DofMap, grid_for_rectangle, restriction_map, boundary_dofs
from .coefficients import CoefficientField, SourceField, field_box
from .assembly import (Scheme, NormTag, GramMatrix, SpaceTimeSystem, assemble_system, impose_dirichlet_rows,
                       assemble_load, assemble_gram, solve)
from .transfer import (LocalProblem, ReducedBasis, build_local_problem, transfer_matrix, optimal_space,
                       data_corrector)
from .randrange import (RangeFinderConfig, adaptive_range_finder, randomized_svd, projection_error_curve,
                        local_tolerances, sample_random_trace)
from .gfem import (DomainDecomposition, PartitionOfUnity, LocalBlock, LocalTestSystem, build_decomposition,
                   build_partition_of_unity, pu_multiply, build_local_test_system, project_test_functions,
                   assemble_and_solve_gfem, inf_sup_constant, supremizer_blocks)
from .errors import (ErrorReport, SubdomainError, GraphNormGrams, local_best_error, local_error_denominator,
                     source_l2_norm, global_graph_error, poincare_constant, bound_constant_Ci,
                     global_error_bound, caccioppoli_check)
from .analytic import example3_solution, nodal_values
from ..tools.config_loader import ExperimentConfig, resolve_preset
from ..tools import exporters

LOCAL_GUIDES_GLOBAL_FACTOR = 50.0
EPS_ROBUSTNESS_FACTOR = 3.0
QUASI_OPTIMALITY_FACTOR = 10.0
FE_ANALYTIC_TOLERANCE = 5e-2
SPECTRUM_FLOOR = 1e-8


@dataclass
class VariantResult:
    """单个局部研究变体的结果"""
    name: str
    params: Dict[str, Any]
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_in: int = 0
    n_out: int = 0
    wall_time: float = 0.0
    seed_runs: List[Dict[str, Any]] = field(default_factory=list)
    caccioppoli_passed: Optional[bool] = None
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "name": self.name,
            "params": self.params,
            "n_sigma": int(self.sigma.size),
            "sigma_1": float(self.sigma[0]) if self.sigma.size else None,
            "n_in": self.n_in,
            "n_out": self.n_out,
            "wall_time": self.wall_time,
            "seed_runs": self.seed_runs,
            "caccioppoli_passed": self.caccioppoli_passed,
            "error": self.error,
        }


@dataclass
class LocalStudyResult:
    """局部研究结果"""
    experiment: str
    variants: List[VariantResult]
    checks: Dict[str, bool]
    output_dir: str
    processing_time: float
    created_at: datetime = field(default_factory=datetime.now)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "experiment": self.experiment,
            "variants": [v.to_dict() for v in self.variants],
            "checks": self.checks,
            "passed": self.passed,
            "output_dir": self.output_dir,
            "processing_time": self.processing_time,
            "created_at": self.created_at.isoformat(),
        }


@dataclass
class GlobalStudyResult:
    """全局研究结果"""
    experiment: str
    mode: str
    report: ErrorReport
    curves: List[Dict[str, Any]]
    seed_runs: List[Dict[str, Any]]
    checks: Dict[str, bool]
    output_dir: str
    processing_time: float
    created_at: datetime = field(default_factory=datetime.now)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "experiment": self.experiment,
            "mode": self.mode,
            "report": self.report.to_dict(),
            "curves": self.curves,
            "seed_runs": self.seed_runs,
            "checks": self.checks,
            "passed": self.passed,
            "output_dir": self.output_dir,
            "processing_time": self.processing_time,
            "created_at": self.created_at.isoformat(),
        }


@dataclass
class GlobalContext:
    """全局问题：网格、系统、参考解与分解"""
    grid: TensorGrid
    domain: Rectangle
    alpha: CoefficientField
    source: Optional[SourceField]
    system: SpaceTimeSystem
    load: np.ndarray
    u_h: np.ndarray
    decomposition: DomainDecomposition
    partition: PartitionOfUnity
    grams: GraphNormGrams
    test_gram: GramMatrix


@dataclass
class SubdomainOutcome:
    """单个子区域流水线的产出"""
    index: int
    inner: Rectangle
    dof_map: DofMap
    psi: np.ndarray
    basis: ReducedBasis
    corrector: np.ndarray
    m_in: GramMatrix
    test_system: LocalTestSystem
    c_f: float
    c_p: float
    local_errors: Dict[int, float]
    eps: Optional[float] = None
    err_est: Optional[float] = None
    caccioppoli_passed: Optional[bool] = None
    wall_time: float = 0.0

    def ansatz_and_test(self, n: Optional[int] = None) -> Tuple[LocalBlock, LocalBlock]:
        """前 n 个基函数加数据列，乘以 ψ_i 后投影得到检验函数"""
        basis = self.basis if n is None else self.basis.truncated(min(n, self.basis.size))
        full = basis.with_data_columns(self.m_in, self.corrector)
        ansatz = pu_multiply(full.vectors, self.psi, self.dof_map, self.index, self.inner)
        test = LocalBlock(self.index, self.dof_map.indices,
                          project_test_functions(self.test_system, ansatz.columns), self.inner)
        return ansatz, test


def plateau_length(sigma: np.ndarray, fraction: float = 0.5) -> int:
    """满足 σ_n ≥ fraction·σ_1 的最大 n"""
    if sigma.size == 0:
        return 0
    return int(np.max(np.flatnonzero(sigma >= fraction * sigma[0])) + 1)


def tail_decay_ok(sigma: np.ndarray, shift: int = 40, ratio: float = 0.5) -> bool:
    """平台之后 σ_{n+shift}/σ_n ≤ ratio（只看高于数值噪声的部分）"""
    start = plateau_length(sigma)
    resolved = sigma[sigma > SPECTRUM_FLOOR * sigma[0]] if sigma.size else sigma
    for n in range(start, resolved.size - shift):
        if resolved[n + shift] > ratio * resolved[n]:
            return False
    return True


class ExperimentRunner:
    """实验协调器"""

    def __init__(self, config: Dict[str, Any], experiment: ExperimentConfig):
        self.config = config
        self.experiment = experiment
        self.preset = resolve_preset(config, experiment)
        self.solver_config = dict(config.get("solver", {}))
        self.solver_config.update(config.get("transfer", {}))
        self.solver_config["alpha_subsamples"] = int(self.preset.get("alpha_subsamples", 1))
        self.rangefinder_config = config.get("rangefinder", {})
        self.gfem_config = config.get("gfem", {})
        self.performance = config.get("performance", {})
        base = experiment.output_dir or config.get("output", {}).get("directory", "results")
        self.output_dir = Path(base) / experiment.experiment
        self.scheme = Scheme(self.preset.get("scheme", Scheme.PETROV_GALERKIN.value))
        self.logger = logging.getLogger("heatgfem.experiments")
        self._outputs: List[str] = []

    @property
    def subsamples(self) -> int:
        return self.solver_config["alpha_subsamples"]

    def run(self):
        """按实验类型分派"""
        if self.experiment.is_local:
            return self.run_local_study()
        return self.run_global_study()

    # 系数与热源
    def _build_alpha(self, box, overrides: Optional[Dict[str, Any]] = None) -> CoefficientField:
        params = dict(self.preset.get("coefficient", {"family": "constant"}))
        params.update(overrides or {})
        family = params.get("family", "constant")
        if family == "constant":
            return CoefficientField.constant(box, float(params.get("value", 1.0)))
        if family == "channels":
            return CoefficientField.channels(box, int(params.get("count", 3)), float(params.get("contrast", 1e3)))
        if family == "multiscale":
            return CoefficientField.multiscale(box, float(params.get("eps", 1.0)))
        if family == "example4":
            return CoefficientField.example4(box, params.get("schedule"))
        raise InvalidArgumentError(f"Unknown coefficient family: {family}")

    def _build_source(self, box) -> Optional[SourceField]:
        name = self.preset.get("source", "none")
        if name in (None, "none", "zero"):
            return None
        if name == "example3":
            return SourceField.example3(box)
        if name == "example4":
            return SourceField.example4(box)
        raise InvalidArgumentError(f"Unknown source: {name}")

    def _seeds(self) -> List[int]:
        return [self.experiment.seed + k for k in range(self.experiment.seeds)]

    def _write_csv(self, name: str, rows) -> None:
        exporters.write_csv(self.output_dir / name, rows)
        self._outputs.append(name)

    # 局部研究
    def _local_variants(self) -> List[Tuple[str, Dict[str, Any], float]]:
        layers = self.experiment.layers or self.preset.get("layers", [1.0])
        channels = self.experiment.channels
        if channels is None:
            channels = self.preset.get("channels", [0, 1, 2, 3])
        eps_values = self.experiment.eps_values or self.preset.get("eps_values", [1.0, 0.01])
        variants = []
        for layer in layers:
            if self.experiment.experiment == "ex1":
                variants.extend((f"channels{c}_layers{layer:g}", {"count": c}, layer) for c in channels)
            else:
                variants.extend((f"eps{e:g}_layers{layer:g}", {"eps": e}, layer) for e in eps_values)
        return variants

    def run_local_study(self) -> LocalStudyResult:
        """对每个变体计算传递算子奇异值，并按配置运行自适应随机值域算法"""
        if not self.experiment.is_local:
            raise InvalidArgumentError(f"Local study needs ex1 or ex2, got {self.experiment.experiment}")
        self.logger.info(f"Starting local study {self.experiment.experiment} ({self.experiment.scale})")
        start_time = time.time()
        self._outputs = []
        domain = Rectangle(*self.preset["domain"])
        inner = Rectangle(*self.preset["inner"])
        T, nsteps, h = float(self.preset["T"]), int(self.preset["nsteps"]), float(self.preset["h"])
        box = field_box(T, domain)

        variants: List[VariantResult] = []
        for name, params, layer in self._local_variants():
            outer = inner.expanded(layer * inner.width, clip=domain)
            result = VariantResult(name=name, params=dict(params, layers=layer, outer=outer.to_dict()))
            try:
                self._run_local_variant(result, inner, outer, self._build_alpha(box, params), T, nsteps, h)
            except HeatGFEMError as e:
                self.logger.error(f"Variant {name} failed: {e}")
                result.error = str(e)
            variants.append(result)

        checks = self._local_checks(variants)
        processing_time = time.time() - start_time
        result = LocalStudyResult(self.experiment.experiment, variants, checks, str(self.output_dir), processing_time)
        exporters.write_json(self.output_dir / "study.json", result.to_dict())
        self._outputs.append("study.json")
        exporters.write_manifest(self.output_dir, self._manifest_config(), self.experiment.seed, self._outputs)
        self.logger.info(f"Local study completed in {processing_time:.2f}s, passed={result.passed}")
        return result

    def _run_local_variant(self, result: VariantResult, inner: Rectangle, outer: Rectangle,
                           alpha: CoefficientField, T: float, nsteps: int, h: float) -> None:
        start = time.time()
        problem = build_local_problem(inner, outer, alpha, T, nsteps, h=h, scheme=self.scheme,
                                      config=self.solver_config)
        result.n_in, result.n_out = problem.n_in, problem.n_out
        matrix = transfer_matrix(problem, chunk=int(self.solver_config.get("transfer_chunk", 256)))
        n_sigma = min(int(self.preset.get("n_sigma", 200)), problem.n_in, problem.n_out)
        basis = optimal_space(problem, n_sigma, matrix)
        result.sigma = basis.spectrum[:n_sigma]
        self._write_csv(f"sigma_{result.name}.csv",
                        pd.DataFrame({"n": np.arange(1, result.sigma.size + 1), "sigma": result.sigma}))

        times = self.preset.get("field_times", [T])
        for k in self.preset.get("eigenfunctions", []):
            if k <= basis.size:
                name = f"eigenfunction_{result.name}_{k}.txt"
                exporters.write_field_file(self.output_dir / name, problem.grid_in, basis.vectors[:, k - 1], times)
                self._outputs.append(name)

        samples = int(self.preset.get("caccioppoli_samples", 0))
        if samples:
            rng = np.random.default_rng(self.experiment.seed)
            result.caccioppoli_passed = all(
                caccioppoli_check(problem, self._random_local_solution(problem, rng)).passed for _ in range(samples)
            )

        if self.experiment.mode == "randomized":
            for seed in self._seeds():
                result.seed_runs.append(self._local_randomized_run(problem, matrix, result.sigma, seed))
        result.wall_time = time.time() - start
        self.logger.info(f"Variant {result.name}: N_in={result.n_in}, N_out={result.n_out}, "
                         f"sigma_1={result.sigma[0]:.4e} ({result.wall_time:.2f}s)")

    @staticmethod
    def _random_local_solution(problem: LocalProblem, rng: np.random.Generator) -> np.ndarray:
        return solve(problem.system, problem.extension.extend(sample_random_trace(problem, rng)))

    def _local_randomized_run(self, problem: LocalProblem, matrix: np.ndarray, sigma: np.ndarray,
                              seed: int) -> Dict[str, Any]:
        tol = self.experiment.tol or float(self.rangefinder_config.get("tol", 1e-4))
        rf_config = RangeFinderConfig(tol=tol, eps_algofail=self.rangefinder_config.get("eps_algofail", 1e-15),
                                      n_t=self.rangefinder_config.get("n_t", 20),
                                      max_basis=self.rangefinder_config.get("max_basis", 500), seed=seed)
        basis = adaptive_range_finder(problem, rf_config, np.random.default_rng(seed))
        curve = projection_error_curve(problem, basis.vectors, matrix)
        true_error = float(curve[-1])
        quasi_optimal = all(curve[n] <= QUASI_OPTIMALITY_FACTOR * math.sqrt(n) * sigma[n]
                            for n in range(1, min(basis.size, sigma.size)))
        return {"seed": seed, "tol": tol, "n": basis.size, "err_est": basis.metadata["err_est"],
                "true_error": true_error, "met_tol": bool(true_error <= tol),
                "quasi_optimal": bool(quasi_optimal), "draws": basis.metadata["draws"]}

    def _local_checks(self, variants: List[VariantResult]) -> Dict[str, bool]:
        checks: Dict[str, bool] = {}
        for v in variants:
            if v.error is not None:
                checks[f"completed_{v.name}"] = False
                continue
            checks[f"monotone_{v.name}"] = bool(np.all(np.diff(v.sigma) <= 1e-12 * v.sigma[0]))
            if v.caccioppoli_passed is not None:
                checks[f"caccioppoli_{v.name}"] = v.caccioppoli_passed
            if v.seed_runs:
                checks[f"adaptive_guarantee_{v.name}"] = all(r["met_tol"] for r in v.seed_runs)
                checks[f"quasi_optimality_{v.name}"] = all(r["quasi_optimal"] for r in v.seed_runs)

        done = [v for v in variants if v.error is None]
        by_layer: Dict[float, List[VariantResult]] = {}
        for v in done:
            by_layer.setdefault(v.params["layers"], []).append(v)
        for layer, group in by_layer.items():
            if self.experiment.experiment == "ex1":
                for v in group:
                    checks[f"tail_decay_{v.name}"] = tail_decay_ok(v.sigma)
                ordered = sorted(group, key=lambda v: v.params["count"])
                lengths = [plateau_length(v.sigma) for v in ordered]
                if len(lengths) > 1:
                    checks[f"plateau_ordering_layers{layer:g}"] = all(a <= b for a, b in zip(lengths, lengths[1:]))
            elif len(group) > 1:
                m = min(min(v.sigma.size for v in group), 100)
                curves = np.array([v.sigma[:m] for v in group])
                keep = np.all(curves > SPECTRUM_FLOOR * curves[:, :1], axis=0)
                ratio = curves[:, keep].max(axis=0) / curves[:, keep].min(axis=0)
                checks[f"eps_robust_layers{layer:g}"] = bool(np.all(ratio <= EPS_ROBUSTNESS_FACTOR))
        return checks

    # 全局研究
    def _prepare_global(self) -> GlobalContext:
        domain = Rectangle(*self.preset["domain"])
        T, nsteps, h = float(self.preset["T"]), int(self.preset["nsteps"]), float(self.preset["h"])
        grid = grid_for_rectangle(domain, h, T, nsteps)
        box = field_box(T, domain)
        alpha = self._build_alpha(box)
        source = self._build_source(box)

        system = assemble_system(grid, alpha, self.scheme, self.subsamples)
        dirichlet = boundary_dofs(grid, "dirichlet", domain)
        impose_dirichlet_rows(system, dirichlet)
        load = assemble_load(grid, source, dirichlet, self.subsamples)
        u_h = solve(system, load)
        self.logger.info(f"Global FE solution computed on {grid.nx}x{grid.ny} cells, {nsteps} steps")

        decomposition = build_decomposition(domain, self.preset.get("subdomains", [4, 4]),
                                            float(self.preset.get("oversampling", 1.0)), grid)
        partition = build_partition_of_unity(decomposition, grid)
        grams = GraphNormGrams.assemble(grid, alpha, self.subsamples)
        test_gram = assemble_gram(grid, alpha, NormTag.V_NORM_ALPHA, self.subsamples)
        return GlobalContext(grid, domain, alpha, source, system, load, u_h, decomposition, partition,
                             grams, test_gram)

    def _map(self, func, items: Sequence) -> List:
        """按下标顺序返回结果；parallel_processing 关闭时顺序执行"""
        if not self.performance.get("parallel_processing", True) or len(items) <= 1:
            return [func(item) for item in items]
        with ThreadPoolExecutor(max_workers=int(self.performance.get("max_workers", 4))) as pool:
            return list(pool.map(func, items))

    def _subdomain_pipeline(self, ctx: GlobalContext, index: int, master_seed: int,
                            global_tol: Optional[float]) -> SubdomainOutcome:
        start = time.time()
        rng = np.random.default_rng(master_seed ^ index)
        decomp, pu = ctx.decomposition, ctx.partition
        inner, outer = decomp.inner[index], decomp.outer[index]
        problem = build_local_problem(inner, outer, ctx.alpha, ctx.grid.T, ctx.grid.nsteps, scheme=self.scheme,
                                      global_domain=ctx.domain, parent_grid=ctx.grid, config=self.solver_config)
        corrector = data_corrector(problem, ctx.source, weighted=self.gfem_config.get("cf_weighted", True))
        c_p = poincare_constant(problem, int(self.gfem_config.get("poincare_samples", 20)), rng).value
        homogeneous = self.gfem_config.get("bound", "improved") == "improved"

        u_out = restriction_map(ctx.grid, outer).restrict(ctx.u_h)
        u_in = problem.restriction.restrict(u_out)
        f_norm = source_l2_norm(ctx.source, problem.grid_out, self.subsamples)
        denominator = local_error_denominator(u_out, problem.gram_out(NormTag.H1_SEMINORM_ALPHA), f_norm)

        eps = err_est = None
        errors: Dict[int, float] = {}
        if self.experiment.mode == "svd":
            sizes = self._basis_sizes()
            n_max = min(max(sizes), problem.n_in, problem.n_out)
            cap = int(self.solver_config.get("max_dense_entries", 60_000_000))
            if problem.n_in * problem.n_out <= cap:
                basis = optimal_space(problem, n_max)
            else:
                self.logger.warning(f"Subdomain {index}: dense transfer matrix above cap, using randomized SVD")
                basis = randomized_svd(problem, n_max, int(self.rangefinder_config.get("svd_oversampling", 10)), rng)
            for n in sizes:
                full = basis.truncated(min(n, basis.size)).with_data_columns(problem.m_in, corrector.vector)
                errors[n] = local_best_error(u_in, full, problem.m_in, denominator)
        else:
            assumed_beta = float(self.gfem_config.get("assumed_beta", 1.0))
            c_i = bound_constant_Ci(pu.c1, pu.c2, assumed_beta, decomp.m_in, inner.diam, c_p)
            eps = float(local_tolerances(global_tol, [(c_i, corrector.c_f)], decomp.m_out, homogeneous)[0])
            rf_config = RangeFinderConfig(tol=eps, eps_algofail=self.rangefinder_config.get("eps_algofail", 1e-15),
                                          n_t=self.rangefinder_config.get("n_t", 20),
                                          max_basis=self.rangefinder_config.get("max_basis", 500),
                                          seed=master_seed ^ index)
            basis = adaptive_range_finder(problem, rf_config, rng)
            err_est = float(basis.metadata["err_est"])
            full = basis.with_data_columns(problem.m_in, corrector.vector)
            scaling = corrector.c_f if self.gfem_config.get("local_error_cf_scaling", False) else None
            errors[basis.size] = local_best_error(u_in, full, problem.m_in, denominator, c_f=scaling)

        caccioppoli = None
        samples = int(self.preset.get("caccioppoli_samples", 0))
        if samples:
            caccioppoli = all(caccioppoli_check(problem, self._random_local_solution(problem, rng)).passed
                              for _ in range(samples))

        test_system = build_local_test_system(problem.grid_in, ctx.alpha, self.scheme, self.subsamples)
        wall = time.time() - start
        self.logger.info(f"Subdomain {index}: n={basis.size}, c_f={corrector.c_f:.3g}, c_p={c_p:.3g} ({wall:.2f}s)")
        return SubdomainOutcome(
            index=index, inner=inner, dof_map=restriction_map(ctx.grid, inner),
            psi=pu.restricted(index, ctx.grid, inner), basis=basis, corrector=corrector.vector,
            m_in=problem.m_in, test_system=test_system, c_f=corrector.c_f, c_p=c_p, local_errors=errors,
            eps=eps, err_est=err_est, caccioppoli_passed=caccioppoli, wall_time=wall,
        )

    def _basis_sizes(self) -> List[int]:
        sizes = self.experiment.basis_sizes or self.preset.get("basis_sizes", [2, 4, 8, 16])
        return sorted(int(n) for n in sizes)

    def _evaluate(self, ctx: GlobalContext, outcomes: List[SubdomainOutcome],
                  n: Optional[int]) -> Dict[str, Any]:
        """组装并求解约化系统，返回全局误差、β 与先验界"""
        blocks = [o.ansatz_and_test(n) for o in outcomes]
        ansatz = [a for a, _ in blocks]
        test = [t for _, t in blocks]
        if self.gfem_config.get("supremizers", False):
            test = test + supremizer_blocks(ctx.system, ansatz, ctx.test_gram)
        matrix = ctx.system.matrix
        row: Dict[str, Any] = {"n": n if n is not None else max(o.basis.size for o in outcomes),
                               "local_err": max(o.local_errors[n if n is not None else o.basis.size]
                                                for o in outcomes)}
        try:
            gfem = assemble_and_solve_gfem(matrix, ansatz, test, ctx.load, test_gram=ctx.test_gram)
            row["global_err"] = global_graph_error(ctx.u_h, gfem.solution, ctx.alpha, ctx.grid, ctx.source,
                                                   ctx.grams, self.subsamples)
            row["beta"] = inf_sup_constant(matrix, ansatz, test, ctx.grams.gradient, ctx.test_gram,
                                           reduced=gfem.reduced_matrix)
            row["dimension"] = gfem.dimension
        except InfSupError as e:
            self.logger.error(f"Reduced system failed for n={row['n']}: {e}")
            row.update(global_err=float("nan"), beta=e.beta if e.beta is not None else 0.0, dimension=0)
        row["bound"] = self._bound(ctx, outcomes, n, row["beta"])
        return row

    def _bound(self, ctx: GlobalContext, outcomes: List[SubdomainOutcome], n: Optional[int],
               beta: float) -> float:
        if not beta > 0:
            return float("nan")
        decomp, pu = ctx.decomposition, ctx.partition
        eps, constants, c_f = [], [], []
        for o in outcomes:
            if n is None:
                value = o.err_est
            else:
                spectrum = o.basis.spectrum if o.basis.spectrum is not None else np.zeros(0)
                value = spectrum[n] if n < spectrum.size else None
            if value is None:
                return float("nan")
            eps.append(float(value))
            constants.append(bound_constant_Ci(pu.c1, pu.c2, beta, decomp.m_in, o.inner.diam, o.c_p))
            c_f.append(o.c_f)
        homogeneous = self.gfem_config.get("bound", "improved") == "improved"
        return global_error_bound(eps, constants, c_f, decomp.m_out, homogeneous)

    def run_global_study(self) -> GlobalStudyResult:
        """全局 GFEM 研究：svd 模式扫描基规模，randomized 模式按全局容差驱动局部容差"""
        if self.experiment.is_local:
            raise InvalidArgumentError(f"Global study needs ex3_1, ex3_2, ex4 or custom, got {self.experiment.experiment}")
        mode = self.experiment.mode
        self.logger.info(f"Starting global study {self.experiment.experiment} ({self.experiment.scale}, mode={mode})")
        start_time = time.time()
        self._outputs = []
        ctx = self._prepare_global()

        constants: Dict[str, Any] = {"c1": ctx.partition.c1, "c2": ctx.partition.c2,
                                     "m_in": ctx.decomposition.m_in, "m_out": ctx.decomposition.m_out,
                                     "c_p_kind": "sampled lower estimate"}
        checks: Dict[str, bool] = {}
        if self.experiment.experiment.startswith("ex3"):
            exact = nodal_values(example3_solution, ctx.grid)
            fe_error = global_graph_error(exact, ctx.u_h, ctx.alpha, ctx.grid, ctx.source, ctx.grams, self.subsamples)
            constants["fe_error"] = fe_error
            checks["fe_analytic"] = bool(fe_error < FE_ANALYTIC_TOLERANCE)

        global_tol = None
        if mode == "randomized":
            global_tol = self.experiment.global_tol or self.experiment.tol or float(self.gfem_config.get("global_tol", 1e-2))
            constants["global_tol"] = global_tol

        seeds = self._seeds() if mode == "randomized" else [self.experiment.seed]
        curves: List[Dict[str, Any]] = []
        seed_runs: List[Dict[str, Any]] = []
        subdomain_rows: List[Dict[str, Any]] = []
        outcomes: List[SubdomainOutcome] = []
        for seed in seeds:
            outcomes = self._map(lambda i: self._subdomain_pipeline(ctx, i, seed, global_tol),
                                 list(range(ctx.decomposition.size)))
            for o in outcomes:
                subdomain_rows.append({"seed": seed, "subdomain": o.index, "n": o.basis.size, "eps": o.eps,
                                       "err_est": o.err_est, "c_f": o.c_f, "c_p": o.c_p, "wall_time": o.wall_time})
            if mode == "svd":
                curves = [self._evaluate(ctx, outcomes, n) for n in self._basis_sizes()]
            else:
                row = self._evaluate(ctx, outcomes, None)
                row["seed"] = seed
                curves.append(row)
                seed_runs.append({"seed": seed, "global_err": row["global_err"], "local_err": row["local_err"],
                                  "beta": row["beta"], "bound": row["bound"],
                                  "max_basis": max(o.basis.size for o in outcomes),
                                  "met_tol": bool(row["global_err"] <= global_tol)})

        report = self._report(ctx, outcomes, curves[-1] if curves else {}, constants)
        checks.update(self._global_checks(curves, seed_runs, outcomes))
        report.checks = dict(checks)

        self._write_global_outputs(report, curves, subdomain_rows, seed_runs)
        processing_time = time.time() - start_time
        result = GlobalStudyResult(self.experiment.experiment, mode, report, curves, seed_runs, checks,
                                   str(self.output_dir), processing_time)
        self.logger.info(f"Global study completed in {processing_time:.2f}s, passed={result.passed}")
        return result

    def _report(self, ctx: GlobalContext, outcomes: List[SubdomainOutcome], last: Dict[str, Any],
                constants: Dict[str, Any]) -> ErrorReport:
        n = last.get("n") if self.experiment.mode == "svd" else None
        subdomains = []
        for o in outcomes:
            key = n if n is not None else o.basis.size
            c_i = None
            if last.get("beta", 0) > 0:
                c_i = bound_constant_Ci(ctx.partition.c1, ctx.partition.c2, last["beta"],
                                        ctx.decomposition.m_in, o.inner.diam, o.c_p)
            subdomains.append(SubdomainError(o.index, key, o.local_errors[key], o.eps, o.err_est, o.c_f, c_i))
        grad = float(ctx.grams.gradient.norm(ctx.u_h))
        denominators = {"gradient": grad,
                        "source": source_l2_norm(ctx.source, ctx.grid, self.subsamples)}
        return ErrorReport(subdomains=subdomains, global_error=last.get("global_err"), beta=last.get("beta"),
                           bound=last.get("bound"), constants=constants, denominators=denominators)

    def _global_checks(self, curves: List[Dict[str, Any]], seed_runs: List[Dict[str, Any]],
                       outcomes: List[SubdomainOutcome]) -> Dict[str, bool]:
        beta_min = float(self.gfem_config.get("beta_min", 0.9))
        checks = {
            "inf_sup": all(r["beta"] >= beta_min for r in curves),
            "bound": all(r["global_err"] <= r["bound"] for r in curves if np.isfinite(r["bound"])),
            "finite": all(np.isfinite(r["global_err"]) for r in curves),
        }
        if self.experiment.mode == "svd":
            checks["local_guides_global"] = all(r["global_err"] <= LOCAL_GUIDES_GLOBAL_FACTOR * r["local_err"]
                                                for r in curves)
        else:
            checks["global_tol"] = all(r["met_tol"] for r in seed_runs)
        cacc = [o.caccioppoli_passed for o in outcomes if o.caccioppoli_passed is not None]
        if cacc:
            checks["caccioppoli"] = all(cacc)
        return checks

    def _write_global_outputs(self, report: ErrorReport, curves: List[Dict[str, Any]],
                              subdomain_rows: List[Dict[str, Any]], seed_runs: List[Dict[str, Any]]) -> None:
        exporters.write_json(self.output_dir / "report.json", report.to_dict())
        self._outputs.append("report.json")
        self._write_csv("curves.csv", pd.DataFrame(curves))
        self._write_csv("subdomains.csv", pd.DataFrame(subdomain_rows))
        if seed_runs:
            self._write_csv("seed_runs.csv", pd.DataFrame(seed_runs))
            stats = []
            for quantity in ("global_err", "local_err", "max_basis"):
                low, mid, high = exporters.summary_statistics([r[quantity] for r in seed_runs])
                stats.append({"quantity": quantity, "min": low, "median": mid, "max": high})
            self._write_csv("seeds.csv", pd.DataFrame(stats))
        exporters.write_manifest(self.output_dir, self._manifest_config(), self.experiment.seed, self._outputs)

    def _manifest_config(self) -> Dict[str, Any]:
        return {"experiment": self.experiment.to_dict(), "preset": self.preset,
                "solver": self.solver_config, "rangefinder": self.rangefinder_config, "gfem": self.gfem_config}
