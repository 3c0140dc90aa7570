"""
heatgfem 核心模块

包含数值计算的主要组件：
- grid: 矩形、张量积时空网格与自由度映射
- coefficients: 热传导系数与热源
- assembly: 时空系统、载荷与 Gram 矩阵
- transfer: 局部传递算子、最优局部空间与数据校正
- randrange: 随机值域逼近
- gfem: 区域分解、单位分解与约化全局系统
- errors: 误差与先验界常数
- analytic: 解析参考解
- experiments: 实验协调器
"""

from .exceptions import (HeatGFEMError, InvalidArgumentError, GridAlignmentError, InvalidDecompositionError,
                         SolverError, GramDegeneracyError, InfSupError, BudgetExceededError,
                         UndefinedRelativeError, MemoryGuardError)
from .grid import Rectangle, TensorGrid, DofMap, DofKind
from .coefficients import CoefficientField, SourceField, SpaceTimeBox, SwitchedRegion
from .assembly import Scheme, NormTag, SpaceTimeSystem, GramMatrix, GramFactor
from .transfer import LocalProblem, DenseTransfer, ReducedBasis, DataCorrector
from .randrange import RangeFinderConfig
from .gfem import DomainDecomposition, PartitionOfUnity, LocalBlock, GFEMSystem
from .errors import ErrorReport, SubdomainError, PoincareEstimate, CaccioppoliResult
from .experiments import ExperimentRunner, LocalStudyResult, GlobalStudyResult

__all__ = [
    "HeatGFEMError",
    "InvalidArgumentError",
    "GridAlignmentError",
    "InvalidDecompositionError",
    "SolverError",
    "GramDegeneracyError",
    "InfSupError",
    "BudgetExceededError",
    "UndefinedRelativeError",
    "MemoryGuardError",
    "Rectangle",
    "TensorGrid",
    "DofMap",
    "DofKind",
    "CoefficientField",
    "SourceField",
    "SpaceTimeBox",
    "SwitchedRegion",
    "Scheme",
    "NormTag",
    "SpaceTimeSystem",
    "GramMatrix",
    "GramFactor",
    "LocalProblem",
    "DenseTransfer",
    "ReducedBasis",
    "DataCorrector",
    "RangeFinderConfig",
    "DomainDecomposition",
    "PartitionOfUnity",
    "LocalBlock",
    "GFEMSystem",
    "ErrorReport",
    "SubdomainError",
    "PoincareEstimate",
    "CaccioppoliResult",
    "ExperimentRunner",
    "LocalStudyResult",
    "GlobalStudyResult",
]
