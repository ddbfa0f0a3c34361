"""
Run configuration: typed dataclasses plus flat ``key=value`` files.

Keys in a config file are field names of ModelConfig, TrainConfig or
RunConfig. Command-line flags override file values; unknown keys raise
ConfigError.
"""
import logging
import os
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from src.errors import ConfigError

logger = logging.getLogger(__name__)

STAGES = ("s1", "s2", "s3")
DEFAULT_SEED = 2021


def parse_order(order: str) -> List[str]:
    """'s1s2s3' -> ['s1', 's2', 's3']; stages may be dropped but not repeated."""
    text = order.replace(",", "").replace(">", "").replace(" ", "").lower()
    if not text or len(text) % 2:
        raise ConfigError(f"invalid stage order '{order}'")
    stages = [text[i:i + 2] for i in range(0, len(text), 2)]
    if any(s not in STAGES for s in stages) or len(set(stages)) != len(stages):
        raise ConfigError(f"stage order '{order}' must be a permutation of a subset of {STAGES}")
    return stages


@dataclass
class ModelConfig:
    lookback: int = 720
    horizon: int = 96
    channels: int = 7
    freq: str = "1h"
    patch_len: int = 16
    stride: int = 8
    d_model: int = 64
    d_emb: int = 8
    heads: int = 8
    kernel: int = 3
    depth: int = 2
    gamma: float = 0.5
    k_factors: int = 0  # 0 -> 2C
    order: str = "s1s2s3"
    no_period: bool = False
    no_rlc: bool = False
    no_csca: bool = False
    no_hierarchy: bool = False
    head_bias: bool = True
    strict_zero_pad: bool = False
    pad_short_lookback: bool = True
    dropout: float = 0.0
    seed: int = DEFAULT_SEED

    @property
    def k(self) -> int:
        return self.k_factors if self.k_factors > 0 else 2 * self.channels

    @property
    def stages(self) -> List[str]:
        return parse_order(self.order)

    @property
    def num_patches(self) -> int:
        length = max(self.lookback, self.patch_len)
        return (length - self.patch_len) // self.stride + 1

    @property
    def levels(self) -> int:
        return 1 if self.no_hierarchy else self.depth

    @property
    def samples(self) -> bool:
        return "s2" in self.stages and not self.no_hierarchy

    @property
    def n_eff(self) -> int:
        n = self.num_patches
        if self.samples:
            for _ in range(self.levels):
                n //= 2
        return n

    def validate(self) -> "ModelConfig":
        if min(self.lookback, self.horizon, self.channels) < 1:
            raise ConfigError("lookback, horizon and channels must be >= 1")
        if self.patch_len < 1 or not 1 <= self.stride <= self.patch_len:
            raise ConfigError(f"need patch_len >= 1 and 1 <= stride <= patch_len, got {self.patch_len}/{self.stride}")
        if self.lookback < self.patch_len and not self.pad_short_lookback:
            raise ConfigError(f"lookback {self.lookback} is shorter than patch_len {self.patch_len} and padding is disabled")
        if self.d_model < 1 or self.heads < 1 or self.d_model % self.heads:
            raise ConfigError(f"d_model {self.d_model} must be divisible by heads {self.heads}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"smoothing kernel must be odd, got {self.kernel}")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.k_factors < 0 or self.k > 2 * self.channels:
            raise ConfigError(f"latent factor count K={self.k} must satisfy 1 <= K <= 2C = {2 * self.channels}")
        if self.dropout != 0.0:
            raise ConfigError("dropout is not supported; leave it at 0")
        self.stages
        if self.samples:
            n = self.num_patches
            for level in range(self.levels):
                if n < 2:
                    raise ConfigError(
                        f"temporal length {n} at hierarchy level {level + 1} cannot be halved; "
                        f"reduce depth (now {self.depth}) or lengthen the lookback"
                    )
                n //= 2
        return self


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 30
    patience: int = 5
    seed: int = DEFAULT_SEED
    lambda1: float = 1e-3
    lambda2: float = 1e-3
    clip_norm: float = 5.0
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    window_stride: int = 1
    eval_stride: int = 1
    max_steps: int = 0  # 0 -> unlimited
    max_batches: int = 0  # per epoch; 0 -> all
    scale: bool = True
    shuffle: bool = True
    orth_retraction: bool = True  # re-orthonormalize W_rlc after every step when lambda1 > 0
    align_factors: bool = True  # rotate W_rlc to uncorrelated factors on the validation windows after fit

    def validate(self) -> "TrainConfig":
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be >= 0")
        if self.clip_norm < 0:
            raise ConfigError("clip_norm must be >= 0 (0 disables clipping)")
        return self


@dataclass
class RunConfig:
    data: str = ""
    date_column: str = "date"
    allow_gaps: bool = False
    out: str = "runs/default"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.train.validate()
        if not self.model.no_rlc and self.train.lambda2 > 0 and self.model.k != 2 * self.model.channels:
            raise ConfigError(
                f"K={self.model.k} != 2C={2 * self.model.channels}: the correlation term pairs latent "
                "factor k with pooled statistic k, so it needs K == 2C; set lambda2=0 for smaller K"
            )
        return self

    def to_lines(self) -> List[str]:
        lines = [f"{k}={v}" for k, v in asdict(self).items() if k not in ("model", "train")]
        lines += [f"{k}={v}" for k, v in asdict(self.model).items()]
        lines += [f"{k}={v}" for k, v in asdict(self.train).items()]
        return lines


def _coerce(name: str, raw: str, current: Any) -> Any:
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key '{name}': cannot parse '{raw}' as {type(current).__name__}") from None
    return raw


def apply_overrides(config: RunConfig, values: Dict[str, Any]) -> RunConfig:
    """Set fields by bare name on whichever section owns them; strings are coerced."""
    sections = [config, config.model, config.train]
    owners = {}
    for section in sections:
        for f in fields(section):
            if f.name not in ("model", "train"):
                owners.setdefault(f.name, []).append(section)
    for name, value in values.items():
        if name not in owners:
            raise ConfigError(f"unknown config key '{name}'")
        for section in owners[name]:
            current = getattr(section, name)
            setattr(section, name, _coerce(name, value, current) if isinstance(value, str) else value)
    return config


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: Dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path.name}:{lineno}: expected key=value, got '{line}'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Defaults, then the file, then ``overrides``; ``PESD_SEED`` fills an unset seed."""
    config = RunConfig()
    file_values = read_config_file(path) if path else {}
    apply_overrides(config, file_values)
    overrides = dict(overrides or {})
    if "seed" not in overrides and "seed" not in file_values and os.getenv("PESD_SEED"):
        overrides["seed"] = os.getenv("PESD_SEED")
    apply_overrides(config, overrides)
    return config


def write_config_echo(config: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text("\n".join(config.to_lines()) + "\n", encoding="utf-8")
    return path
