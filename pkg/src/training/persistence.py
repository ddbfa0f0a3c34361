"""
Run-directory persistence: config echo, history tables, metrics and exports.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from src.config import RunConfig, write_config_echo
from src.errors import ConfigError

logger = logging.getLogger(__name__)

RUN_ARTIFACTS = (
    "config.txt",
    "history.csv",
    "steps.csv",
    "checkpoint.npz",
    "metrics.json",
    "sweep.csv",
    "ablation.csv",
    "seeds.csv",
    "seeds_summary.json",
    "spectral.csv",
    "spectral_bands.csv",
    "topology.json",
    "orth_trace.csv",
    "corr_matrix.csv",
    "gate_trace.csv",
    "decomposition.csv",
    "forecast.csv",
    "attention.csv",
    "analysis.json",
)

HISTORY_COLUMNS = ["epoch", "train_mse", "val_mse", "l_orth", "pcc_sum"]
STEP_COLUMNS = ["step", "l_mse", "l_orth", "pcc_sum", "sigma_max"]


def prepare_run_dir(path: Union[str, Path], force: bool = False) -> Path:
    """Create the run directory; an existing non-empty one needs ``force``.

    With ``force`` the known artifacts are removed first so a rerun starts clean.
    """
    path = Path(path)
    if path.exists() and any(path.iterdir()):
        if not force:
            raise ConfigError(f"run directory {path} is not empty (use --force to overwrite)")
        for name in RUN_ARTIFACTS:
            target = path / name
            if target.is_file():
                target.unlink()
        logger.warning("Overwriting run directory %s", path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def save_config(config: RunConfig, run_dir: Union[str, Path]) -> Path:
    return write_config_echo(config, Path(run_dir) / "config.txt")


def save_table(rows: Iterable[Dict[str, Any]], path: Union[str, Path],
               columns: Optional[List[str]] = None) -> Path:
    path = Path(path)
    frame = pd.DataFrame(list(rows), columns=columns)
    frame.to_csv(path, index=False, float_format="%.10g")
    return path


def save_matrix(matrix: np.ndarray, path: Union[str, Path], labels: Optional[List[str]] = None) -> Path:
    path = Path(path)
    frame = pd.DataFrame(np.asarray(matrix), index=labels, columns=labels)
    frame.to_csv(path, index=labels is not None, float_format="%.10g")
    return path


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def save_json(payload: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True), encoding="utf-8")
    return path


def load_json(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_table(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing run artifact: {path}")
    return pd.read_csv(path)
