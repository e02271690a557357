"""Location of the shipped data tables.

Tables live in ``dialnoise/data/``; the DIALNOISE_DATA_DIR environment
variable points lookups at an alternative directory (falling back to the
shipped copy for files the override directory does not contain).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

ENV_VAR = "DIALNOISE_DATA_DIR"

_SHIPPED = Path(__file__).parent / "data"


def data_path(name: str) -> Path:
    override = os.environ.get(ENV_VAR)
    if override:
        candidate = Path(override) / name
        if candidate.exists():
            return candidate
    return _SHIPPED / name


def load_table(name: str):
    path = data_path(name)
    if not path.exists():
        raise FileNotFoundError(f"data table {name!r} not found at {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
