"""
配置加载

读取 config/default.yaml，合并 .env 中的环境变量覆盖，并定义实验配置的类型化边界对象。
"""

from typing import List, Dict, Any, Optional, Literal
from pathlib import Path
import copy
import json
import os
import logging

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.exceptions import InvalidArgumentError

logger = logging.getLogger("heatgfem.config")

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parents[3] / "config" / "default.yaml"

ExperimentId = Literal["ex1", "ex2", "ex3_1", "ex3_2", "ex4", "custom"]
LOCAL_EXPERIMENTS = ("ex1", "ex2")
GLOBAL_EXPERIMENTS = ("ex3_1", "ex3_2", "ex4", "custom")
ALLOWED_LAYERS = (0.5, 1.0, 1.5, 2.0)


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: Optional[str] = None, env_file: Optional[str] = None) -> Dict[str, Any]:
    """读取 YAML 配置并应用环境变量覆盖

    HEATGFEM_LOG_LEVEL → logging.level，HEATGFEM_OUTPUT_DIR → output.directory，
    HEATGFEM_MAX_WORKERS → performance.max_workers。
    """
    config_path = Path(path) if path else DEFAULT_CONFIG_PATH
    if not config_path.exists():
        raise InvalidArgumentError(f"Config file not found: {config_path}")
    with open(config_path, "r", encoding="utf-8") as f:
        config = yaml.safe_load(f) or {}

    load_dotenv(env_file)
    level = os.getenv("HEATGFEM_LOG_LEVEL")
    if level:
        config.setdefault("logging", {})["level"] = level.upper()
    output_dir = os.getenv("HEATGFEM_OUTPUT_DIR")
    if output_dir:
        config.setdefault("output", {})["directory"] = output_dir
    workers = os.getenv("HEATGFEM_MAX_WORKERS")
    if workers:
        try:
            config.setdefault("performance", {})["max_workers"] = int(workers)
        except ValueError as e:
            raise InvalidArgumentError(f"HEATGFEM_MAX_WORKERS must be an integer, got {workers!r}") from e
    return config


class ExperimentConfig(BaseModel):
    """一次实验运行的参数"""
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentId
    scale: Literal["desk", "coarse", "paper"] = "desk"
    mode: Literal["svd", "randomized"] = "svd"
    channels: Optional[List[int]] = None
    eps_values: Optional[List[float]] = None
    layers: Optional[List[float]] = None
    basis_sizes: Optional[List[int]] = None
    tol: Optional[float] = Field(default=None, gt=0)
    global_tol: Optional[float] = Field(default=None, gt=0)
    seed: int = 0
    seeds: int = Field(default=1, ge=1)
    output_dir: Optional[str] = None
    overrides: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("channels")
    @classmethod
    def _check_channels(cls, value):
        if value is not None and any(not 0 <= c <= 3 for c in value):
            raise ValueError(f"Channel counts must lie in [0, 3], got {value}")
        return value

    @field_validator("eps_values")
    @classmethod
    def _check_eps(cls, value):
        if value is not None and any(not e > 0 for e in value):
            raise ValueError(f"Scale parameters must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.layers is not None and self.experiment != "custom":
            bad = [x for x in self.layers if x not in ALLOWED_LAYERS]
            if bad:
                raise ValueError(f"Oversampling layers must be one of {ALLOWED_LAYERS}, got {bad}")
        if self.overrides and self.experiment != "custom":
            raise ValueError("Preset overrides are only accepted for the custom experiment")
        return self

    @property
    def is_local(self) -> bool:
        return self.experiment in LOCAL_EXPERIMENTS

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return self.model_dump()


def load_experiment_config(path: Optional[str] = None, **cli_values: Any) -> ExperimentConfig:
    """JSON 文件中的字段先生效，命令行中显式给出的值再覆盖"""
    data: Dict[str, Any] = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise InvalidArgumentError(f"Cannot read experiment config {path}: {e}") from e
    data.update({k: v for k, v in cli_values.items() if v is not None})
    return ExperimentConfig(**data)


def resolve_preset(config: Dict[str, Any], experiment: ExperimentConfig) -> Dict[str, Any]:
    """合并实验的公共参数与所选规模的预设"""
    presets = config.get("experiments", {})
    name = "ex3_1" if experiment.experiment == "custom" else experiment.experiment
    if name not in presets:
        raise InvalidArgumentError(f"No preset for experiment {name}")
    entry = presets[name]
    if experiment.scale not in entry:
        raise InvalidArgumentError(f"Experiment {name} has no {experiment.scale} preset")
    base = {k: v for k, v in entry.items() if k not in ("desk", "coarse", "paper")}
    preset = _deep_merge(base, entry[experiment.scale])
    if experiment.overrides:
        preset = _deep_merge(preset, experiment.overrides)
    logger.info(f"Resolved {experiment.scale} preset for {experiment.experiment}")
    return preset
