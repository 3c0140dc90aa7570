"""
heatgfem 工具模块

包含配置、日志与导出工具：
- config_loader: YAML/.env 配置加载与实验配置
- log_setup: loguru 日志设置
- exporters: CSV/JSON/场文件/约化基导出
"""

from .config_loader import ExperimentConfig, load_config, load_experiment_config, resolve_preset
from .log_setup import setup_logging, InterceptHandler
from .exporters import (write_csv, write_json, write_field_file, write_coordinate_matrix,
                        read_coordinate_matrix, save_basis, load_basis, write_manifest)

__all__ = [
    "ExperimentConfig",
    "load_config",
    "load_experiment_config",
    "resolve_preset",
    "setup_logging",
    "InterceptHandler",
    "write_csv",
    "write_json",
    "write_field_file",
    "write_coordinate_matrix",
    "read_coordinate_matrix",
    "save_basis",
    "load_basis",
    "write_manifest",
]
