"""
heatgfem: 热方程的最优局部时空逼近空间

通过过采样局部问题的传递算子构造最优局部约化空间，并以单位分解把局部空间
耦合为时空 Petrov-Galerkin GFEM 全局逼近。

主要组件:
- transfer: 局部传递算子与最优局部空间
- randrange: 自适应随机值域算法
- gfem: 单位分解、约化全局系统与 inf-sup 常数
- errors: 误差与先验界常数
- ExperimentRunner: 实验协调器

使用示例:
    from heatgfem import ExperimentRunner, ExperimentConfig, load_config

    config = load_config()
    runner = ExperimentRunner(config, ExperimentConfig(experiment="ex3_1", mode="svd"))
    result = runner.run_global_study()
    print(result.report.global_error)
"""

__version__ = "1.0.0"
__author__ = "heatgfem Team"

from .core.grid import Rectangle, TensorGrid, build_grid
from .core.coefficients import CoefficientField, SourceField
from .core.assembly import Scheme, NormTag, assemble_system, solve
from .core.transfer import ReducedBasis, LocalProblem, build_local_problem, optimal_space
from .core.randrange import RangeFinderConfig, adaptive_range_finder
from .core.gfem import build_decomposition, build_partition_of_unity, assemble_and_solve_gfem
from .core.errors import ErrorReport
from .core.experiments import ExperimentRunner
from .tools.config_loader import ExperimentConfig, load_config

__all__ = [
    "Rectangle",
    "TensorGrid",
    "build_grid",
    "CoefficientField",
    "SourceField",
    "Scheme",
    "NormTag",
    "assemble_system",
    "solve",
    "ReducedBasis",
    "LocalProblem",
    "build_local_problem",
    "optimal_space",
    "RangeFinderConfig",
    "adaptive_range_finder",
    "build_decomposition",
    "build_partition_of_unity",
    "assemble_and_solve_gfem",
    "ErrorReport",
    "ExperimentRunner",
    "ExperimentConfig",
    "load_config",
]
