"""Versioned JSON tensor dump for RnaParams."""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from ..errors import DataIntegrityError, ParameterError
from .model import RnaParams, expected_shapes

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def params_to_dict(params: RnaParams, metadata: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "metadata": dict(metadata or {}),
        "tensors": [
            {"name": name, "shape": list(t.shape), "data": [float(v) for v in t.reshape(-1)]}
            for name, t in params.items()
        ],
    }


def params_from_dict(data: Dict[str, Any]) -> RnaParams:
    if data.get("format_version") != FORMAT_VERSION:
        raise DataIntegrityError(f"unsupported checkpoint format_version {data.get('format_version')!r}")
    shapes = expected_shapes()
    tensors = {}
    for entry in data["tensors"]:
        name = entry["name"]
        shape = tuple(int(s) for s in entry["shape"])
        if shapes.get(name) != shape:
            raise DataIntegrityError(f"tensor {name!r} has shape {shape}, expected {shapes.get(name)}")
        values = np.asarray(entry["data"], dtype=np.float64)
        if values.size != int(np.prod(shape)) or not np.all(np.isfinite(values)):
            raise DataIntegrityError(f"tensor {name!r} has invalid data")
        tensors[name] = values.reshape(shape)
    try:
        return RnaParams(tensors)
    except ParameterError as e:
        raise DataIntegrityError(str(e)) from e


def save_checkpoint(params: RnaParams, path: Union[str, Path], metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(params_to_dict(params, metadata), separators=(",", ":")) + "\n", encoding="utf-8")
    logger.info(f"Saved checkpoint ({params.n_parameters()} parameters) to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[RnaParams, Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise DataIntegrityError("file not found; run the producing stage first", location=str(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return params_from_dict(data), dict(data.get("metadata", {}))
    except DataIntegrityError as e:
        raise DataIntegrityError(e.message, location=str(path)) from e
    except (KeyError, TypeError, ValueError) as e:
        raise DataIntegrityError(f"malformed checkpoint: {e}", location=str(path)) from e
