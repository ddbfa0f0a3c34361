"""
Checkpoint container: an ``.npz`` archive of named parameter arrays plus a
``__meta__`` entry holding a JSON document (see docs/checkpoint_format.md).
"""
import json
import logging
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.config import ModelConfig
from src.errors import ConfigError
from src.model.model import PESDTSF

logger = logging.getLogger(__name__)

FORMAT_NAME = "pesd-checkpoint"
FORMAT_VERSION = 1
META_KEY = "__meta__"


def save_checkpoint(model: PESDTSF, path: Union[str, Path], extra: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "config": asdict(model.config)}
    meta.update(extra or {})
    arrays = model.state_dict()
    arrays[META_KEY] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.info("Saved checkpoint %s (%d arrays)", path, len(arrays) - 1)
    return path


def read_meta(path: Union[str, Path]) -> Dict[str, Any]:
    with np.load(Path(path), allow_pickle=False) as archive:
        if META_KEY not in archive.files:
            raise ConfigError(f"{path} is not a checkpoint (no {META_KEY} entry)")
        meta = json.loads(str(archive[META_KEY]))
    if meta.get("format") != FORMAT_NAME or meta.get("version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint format {meta.get('format')} v{meta.get('version')}")
    return meta


def load_checkpoint(path: Union[str, Path]) -> Tuple[PESDTSF, Dict[str, Any]]:
    """Rebuild the model from the stored config and load its parameters."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    meta = read_meta(path)
    known = {f.name for f in fields(ModelConfig)}
    config = ModelConfig(**{k: v for k, v in meta["config"].items() if k in known})
    model = PESDTSF(config)
    with np.load(path, allow_pickle=False) as archive:
        model.load_state_dict({k: archive[k] for k in archive.files if k != META_KEY})
    logger.info("Loaded checkpoint %s", path)
    return model, meta
