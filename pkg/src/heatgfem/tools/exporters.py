"""
结果导出

CSV（pandas，完整精度）、JSON、"t x y value" 场文件、"row col value" 坐标矩阵、
约化基文本文件以及可复现运行所需的 manifest。
"""

from typing import Dict, Any, Optional, Sequence, Tuple, Union
from pathlib import Path
from datetime import datetime
import hashlib
import json
import logging
import platform

import numpy as np
import pandas as pd
import scipy
import scipy.sparse as sp

from ..core.exceptions import InvalidArgumentError
from ..core.grid import TensorGrid
from ..core.transfer import ReducedBasis

logger = logging.getLogger("heatgfem.exporters")

FLOAT_FORMAT = "%.17g"
PathLike = Union[str, Path]


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_csv(path: PathLike, rows: Union[pd.DataFrame, Sequence[Dict[str, Any]]],
              columns: Optional[Sequence[str]] = None) -> Path:
    """带表头的 CSV，浮点数按完整精度输出"""
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
    path = _prepare(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path)


def write_json(path: PathLike, data: Dict[str, Any]) -> Path:
    path = _prepare(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(data), f, indent=2, ensure_ascii=False)
    return path


def write_field_file(path: PathLike, grid: TensorGrid, values: np.ndarray,
                     times: Optional[Sequence[float]] = None) -> Path:
    """每行 "t x y value"；times 给出时只输出最接近的时间层"""
    values = np.asarray(values, float)
    if values.shape != (grid.n_dofs,):
        raise InvalidArgumentError(f"Field needs {grid.n_dofs} values, got {values.shape}")
    levels = grid.time_levels
    if times is None:
        selected = np.arange(grid.nsteps)
    else:
        selected = np.unique([int(np.argmin(np.abs(levels - t))) for t in times])
    x, y = grid.node_coordinates()
    blocks = [
        np.column_stack([np.full(x.shape, levels[n]), x, y, values[n * grid.n_spatial:(n + 1) * grid.n_spatial]])
        for n in selected
    ]
    path = _prepare(path)
    np.savetxt(path, np.vstack(blocks), fmt=FLOAT_FORMAT)
    return path


def write_coordinate_matrix(path: PathLike, matrix: Union[np.ndarray, sp.spmatrix]) -> Path:
    """每行 "row col value"（0 起始），第一行为 "# nrows ncols" 说明"""
    coo = sp.coo_matrix(matrix)
    path = _prepare(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# {coo.shape[0]} {coo.shape[1]}\n")
        np.savetxt(f, np.column_stack([coo.row, coo.col, coo.data]), fmt=["%d", "%d", FLOAT_FORMAT])
    return path


def read_coordinate_matrix(path: PathLike) -> sp.csr_matrix:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().lstrip("#").split()
        shape = (int(header[0]), int(header[1]))
        data = np.loadtxt(f, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)


def save_basis(path: PathLike, basis: ReducedBasis) -> Path:
    """首行 "N_in n grid_hash"，其后每行一个自由度；奇异值另存为同名 _sigma.csv"""
    path = _prepare(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{basis.n_in} {basis.size} {basis.grid_hash or '-'}\n")
        if basis.size:
            np.savetxt(f, basis.vectors, fmt=FLOAT_FORMAT)
    if basis.singular_values is not None:
        sigma = basis.singular_values
        write_csv(path.with_name(path.stem + "_sigma.csv"),
                  pd.DataFrame({"n": np.arange(1, sigma.size + 1), "sigma": sigma}))
    return path


def load_basis(path: PathLike) -> ReducedBasis:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        n_in, size, grid_hash = f.readline().split()
        n_in, size = int(n_in), int(size)
        vectors = np.loadtxt(f, ndmin=2) if size else np.zeros((n_in, 0))
    vectors = vectors.reshape(n_in, size)
    sigma_path = path.with_name(path.stem + "_sigma.csv")
    sigma = pd.read_csv(sigma_path)["sigma"].to_numpy() if sigma_path.exists() else None
    return ReducedBasis(vectors, sigma, grid_hash="" if grid_hash == "-" else grid_hash,
                        provenance=["loaded"] * size)


def config_hash(config: Dict[str, Any]) -> str:
    payload = json.dumps(_jsonable(config), sort_keys=True)
    return hashlib.sha1(payload.encode("utf-8")).hexdigest()


def environment_versions() -> Dict[str, str]:
    from .. import __version__

    return {
        "heatgfem": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def write_manifest(directory: PathLike, config: Dict[str, Any], seed: int,
                   outputs: Sequence[str] = (), extra: Optional[Dict[str, Any]] = None) -> Path:
    """运行清单：配置散列、种子、版本与输出文件列表"""
    manifest = {
        "config_hash": config_hash(config),
        "config": config,
        "seed": seed,
        "versions": environment_versions(),
        "outputs": sorted(outputs),
        "created_at": datetime.now().isoformat(),
    }
    if extra:
        manifest.update(extra)
    return write_json(Path(directory) / "manifest.json", manifest)


def summary_statistics(values: Sequence[float]) -> Tuple[float, float, float]:
    """(min, median, max)"""
    array = np.asarray(values, float)
    if array.size == 0:
        return (float("nan"),) * 3
    return float(array.min()), float(np.median(array)), float(array.max())
