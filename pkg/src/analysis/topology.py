"""
Compare learned channel attention with a physical adjacency.

Candidate edges are unordered channel pairs; a learned edge is scored by the
average of both attention directions and the k best pairs (global ranking,
diagonal excluded) are matched against the ground-truth edges by IoU.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Set, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import hypergeom

from src.errors import DataLoadError, ShapeError

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]


def read_matrix(path: Union[str, Path]) -> np.ndarray:
    """Square matrix from CSV, tolerating one header row and one label column."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"adjacency file not found: {path}")
    frame = pd.read_csv(path, header=None, dtype=str).apply(pd.to_numeric, errors="coerce")
    if frame.shape[0] and frame.iloc[0].isna().any():
        frame = frame.iloc[1:]
    if frame.shape[1] and frame.iloc[:, 0].isna().any():
        frame = frame.iloc[:, 1:]
    matrix = frame.to_numpy(dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DataLoadError(f"{path.name}: adjacency must be square, got {matrix.shape}")
    return matrix


def symmetric_binary(matrix: np.ndarray) -> np.ndarray:
    """Edge if either direction is present (positive); diagonal cleared."""
    matrix = np.nan_to_num(np.asarray(matrix, dtype=np.float64), nan=0.0)
    if np.any(matrix < 0):
        raise DataLoadError("adjacency weights must be non-negative")
    present = matrix > 0
    adjacency = (present | present.T).astype(np.int64)
    np.fill_diagonal(adjacency, 0)
    return adjacency


def build_ground_truth(source: Union[str, Path, np.ndarray], two_hop: bool = True) -> np.ndarray:
    """Symmetrize, binarize and (by default) add second-order neighbours.

    With ``two_hop=False`` the result is a fixed point: feeding it back returns
    it unchanged. The 2-hop expansion is a single step and does not have that
    property; applying it to its own output reaches 4-hop neighbours. Expand
    the raw adjacency once and keep the expanded matrix.
    """
    matrix = read_matrix(source) if isinstance(source, (str, Path)) else np.asarray(source, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"adjacency must be square, got {matrix.shape}")
    adjacency = symmetric_binary(matrix)
    if two_hop:
        adjacency = ((adjacency + adjacency @ adjacency) > 0).astype(np.int64)
        np.fill_diagonal(adjacency, 0)
    return adjacency


def edge_set(adjacency: np.ndarray) -> Set[Edge]:
    rows, cols = np.nonzero(np.triu(adjacency, k=1))
    return {(int(i), int(j)) for i, j in zip(rows, cols)}


def top_k_edges(attention: np.ndarray, k: int) -> List[Edge]:
    attention = np.asarray(attention, dtype=np.float64)
    c = attention.shape[0]
    overlay = attention + np.eye(c)
    rows, cols = np.triu_indices(c, k=1)
    scores = 0.5 * (overlay[rows, cols] + overlay[cols, rows])
    order = np.argsort(-scores, kind="stable")[:k]
    return [(int(rows[i]), int(cols[i])) for i in order]


def iou(predicted: Set[Edge], truth: Set[Edge]) -> float:
    union = predicted | truth
    if not union:
        return 1.0
    return len(predicted & truth) / len(union)


def random_baseline_iou(num_candidates: int, num_true: int, k: int) -> float:
    """Expected IoU of k pairs drawn uniformly without replacement."""
    k = min(k, num_candidates)
    if num_candidates == 0 or (k == 0 and num_true == 0):
        return 1.0 if num_true == 0 else 0.0
    dist = hypergeom(num_candidates, num_true, k)
    lo, hi = max(0, k + num_true - num_candidates), min(k, num_true)
    hits = np.arange(lo, hi + 1)
    return float(np.sum(dist.pmf(hits) * hits / (k + num_true - hits)))


@dataclass
class TopologyReport:
    adjacency: np.ndarray
    attention: np.ndarray
    k: int
    predicted: List[Edge] = field(default_factory=list)
    truth: List[Edge] = field(default_factory=list)
    iou: float = 0.0
    random_iou: float = 0.0

    @property
    def overlay(self) -> np.ndarray:
        return self.attention + np.eye(self.attention.shape[0])

    @property
    def lift(self) -> float:
        return self.iou / self.random_iou if self.random_iou > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "predicted_edges": [list(e) for e in self.predicted],
            "true_edges": [list(e) for e in self.truth],
            "iou": self.iou,
            "random_iou": self.random_iou,
            "lift": self.lift,
        }


def topology_match(attention: np.ndarray, adjacency: np.ndarray, k: int = 5) -> TopologyReport:
    attention = np.asarray(attention, dtype=np.float64)
    adjacency = np.asarray(adjacency)
    if attention.shape != adjacency.shape or attention.ndim != 2 or attention.shape[0] != attention.shape[1]:
        raise ShapeError(f"attention {attention.shape} and adjacency {adjacency.shape} must be equal square matrices")
    if k < 1:
        raise ShapeError("k must be >= 1")
    c = attention.shape[0]
    predicted = top_k_edges(attention, k)
    truth = sorted(edge_set(adjacency))
    score = iou(set(predicted), set(truth))
    baseline = random_baseline_iou(c * (c - 1) // 2, len(truth), len(predicted))
    logger.info("Topology top-%d IoU %.4f (random %.4f)", k, score, baseline)
    return TopologyReport(adjacency=adjacency, attention=attention, k=k, predicted=predicted,
                          truth=truth, iou=score, random_iou=baseline)
