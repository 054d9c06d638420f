"""Serialization helpers: atomic writes, JSON documents, CSV trajectories."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .problem import Trajectory


def clean(value: Any) -> Any:
    """Make ``value`` JSON-safe: numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(value, dict):
        return {str(k): clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps(doc: Any) -> str:
    # float repr is the shortest string that round-trips, so no digits are lost
    return json.dumps(clean(doc), indent=2, ensure_ascii=True, allow_nan=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_csv(x: Trajectory) -> str:
    lines = ["t,x"]
    lines += [f"{format(t, '.17g')},{format(v, '.17g')}" for t, v in zip(x.t.tolist(), x.values.tolist())]
    return "\n".join(lines) + "\n"


def read_trajectory_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = text.strip().splitlines()
    if rows[0].strip() != "t,x":
        raise ValueError("trajectory CSV must start with the header 't,x'")
    data = np.array([[float(c) for c in r.split(",")] for r in rows[1:]])
    return data[:, 0], data[:, 1]


def digest(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()
