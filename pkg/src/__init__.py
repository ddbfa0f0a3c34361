__all__ = [
    "autodiff",
    "data",
    "model",
    "rlc",
    "training",
    "evaluation",
    "analysis",
    "synth",
    "config",
    "errors",
    "cli",
]
