"""Decoupling diagnostics for the latent factors Z_rlc."""
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.data.windows import WindowBatch
from src.errors import ConfigError
from src.rlc.regularizer import project_latent, stat_readout

logger = logging.getLogger(__name__)


def latent_factors(model, batches: Iterable[WindowBatch]) -> np.ndarray:
    """Z_rlc rows for every window of ``batches``, shape (windows, K)."""
    if model.rlc is None:
        raise ConfigError("model was built without the latent regularizer (no_rlc)")
    rows = []
    for batch in batches:
        z_final = model.forward(batch).stages.z_final
        rows.append(project_latent(stat_readout(z_final), model.rlc.W_rlc).data)
    if not rows:
        raise ConfigError("no windows to read latent factors from")
    return np.concatenate(rows)


def correlation_matrix(z: np.ndarray) -> np.ndarray:
    """Pearson correlation between columns; constant columns correlate 0 with others."""
    z = np.asarray(z, dtype=np.float64)
    k = z.shape[1]
    if k == 1:
        return np.ones((1, 1))
    centered = z - z.mean(axis=0, keepdims=True)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    norms[norms < 1e-12] = np.inf
    corr = (centered.T @ centered) / np.outer(norms, norms)
    np.fill_diagonal(corr, 1.0)
    return corr


def off_diagonal(corr: np.ndarray) -> np.ndarray:
    mask = ~np.eye(corr.shape[0], dtype=bool)
    return np.abs(corr[mask])


def max_off_diagonal(corr: np.ndarray) -> float:
    values = off_diagonal(corr)
    return float(values.max()) if values.size else 0.0


def mean_off_diagonal(corr: np.ndarray) -> float:
    values = off_diagonal(corr)
    return float(values.mean()) if values.size else 0.0


def latent_diagnostics(model, batches: Iterable[WindowBatch], steps: Optional[pd.DataFrame] = None,
                       out_dir: Optional[Union[str, Path]] = None) -> Dict[str, object]:
    """Orthogonality trace and factor correlation matrix.

    Args:
        model: trained forecaster with the regularizer enabled.
        batches: validation windows.
        steps: per-step diagnostics (as written to steps.csv), optional.
        out_dir: when given, writes orth_trace.csv and corr_matrix.csv there.
    """
    corr = correlation_matrix(latent_factors(model, batches))
    trace = steps[["step", "l_orth"]].copy() if steps is not None else pd.DataFrame(columns=["step", "l_orth"])
    report = {
        "k": int(corr.shape[0]),
        "max_abs_offdiag": max_off_diagonal(corr),
        "mean_abs_offdiag": mean_off_diagonal(corr),
        "final_l_orth": float(trace["l_orth"].iloc[-1]) if len(trace) else None,
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        trace.to_csv(out_dir / "orth_trace.csv", index=False, float_format="%.10g")
        names = [f"z{i}" for i in range(corr.shape[0])]
        pd.DataFrame(corr, index=names, columns=names).to_csv(out_dir / "corr_matrix.csv", float_format="%.10g")
    logger.info("Latent factors: K=%d, max |corr| off-diagonal %.4f", report["k"], report["max_abs_offdiag"])
    return report
