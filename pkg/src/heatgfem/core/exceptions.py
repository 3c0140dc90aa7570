"""
异常定义

时空 GFEM 库中所有数值组件共用的异常层次结构。
"""

from typing import Optional


class HeatGFEMError(Exception):
    """库内所有异常的基类"""


class InvalidArgumentError(HeatGFEMError, ValueError):
    """参数非法"""


class GridAlignmentError(InvalidArgumentError):
    """子区域与网格节点不对齐"""

    def __init__(self, message: str, coordinate: Optional[float] = None):
        super().__init__(message)
        self.coordinate = coordinate


class InvalidDecompositionError(InvalidArgumentError):
    """区域分解不能覆盖全局区域"""


class SolverError(HeatGFEMError, RuntimeError):
    """稀疏直接求解失败"""


class GramDegeneracyError(SolverError):
    """Gram 矩阵移位后仍无法进行 Cholesky 分解"""


class InfSupError(SolverError):
    """约化系统奇异或 inf-sup 常数退化"""

    def __init__(self, message: str, beta: Optional[float] = None, kernel_dim: Optional[int] = None):
        super().__init__(message)
        self.beta = beta
        self.kernel_dim = kernel_dim


class BudgetExceededError(HeatGFEMError, RuntimeError):
    """随机值域算法在达到容差前用完了基函数预算"""

    def __init__(self, message: str, err_est: float, basis_size: int):
        super().__init__(message)
        self.err_est = err_est
        self.basis_size = basis_size


class UndefinedRelativeError(HeatGFEMError, ArithmeticError):
    """相对误差的分母为零"""


class MemoryGuardError(HeatGFEMError, MemoryError):
    """稠密存储超过配置上限"""

    def __init__(self, message: str, requested: int, cap: int):
        super().__init__(message)
        self.requested = requested
        self.cap = cap
