from .optimizer import Adam, adam_step
from .trainer import (
    Trainer,
    FitResult,
    RunResult,
    ABLATIONS,
    train,
    evaluate,
    run_seeds,
    sweep,
    ablate,
    bind_dataset,
    window_views,
)
from . import persistence

__all__ = [
    "Adam",
    "adam_step",
    "Trainer",
    "FitResult",
    "RunResult",
    "ABLATIONS",
    "train",
    "evaluate",
    "run_seeds",
    "sweep",
    "ablate",
    "bind_dataset",
    "window_views",
    "persistence",
]
