"""Draw files and run manifests.

Each parameter block is one CSV: a ``chain`` column followed by one column
per parameter, one row per retained draw.  Floats are written with ``repr``
so they round-trip exactly and identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError

MISSING_VALUE = "NA"


def format_float(x: float) -> str:
    x = float(x)
    return MISSING_VALUE if math.isnan(x) else repr(x)


def format_draws(chain, values, columns) -> str:
    """CSV text for a (draws, k) block with its chain labels."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    chain = np.asarray(chain)
    if values.shape != (chain.size, len(columns)):
        raise ValueError("draw block does not match its chain labels and column names")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["chain", *columns])
    for c, row in zip(chain, values):
        writer.writerow([int(c), *(format_float(x) for x in row)])
    return buf.getvalue()


def parse_draws(text: str, source: str = "draws") -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Inverse of :func:`format_draws`: returns (chain, values, columns)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0] != "chain":
        raise DataError(f"{source}: expected a header starting with 'chain'")
    columns = rows[0][1:]
    chain = np.empty(len(rows) - 1, dtype=int)
    values = np.empty((len(rows) - 1, len(columns)))
    for r, row in enumerate(rows[1:]):
        if len(row) != len(columns) + 1:
            raise DataError(f"{source}: row {r + 2} has {len(row)} fields, expected {len(columns) + 1}")
        try:
            chain[r] = int(row[0])
            values[r] = [math.nan if x == MISSING_VALUE else float(x) for x in row[1:]]
        except ValueError as exc:
            raise DataError(f"{source}: row {r + 2}: {exc}") from None
    return chain, values, columns


def read_draws(path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    return parse_draws(text, str(path))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def versions() -> dict:
    import numba
    import scipy

    return {
        "spatialvote": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite numbers as null."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def now_utc() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class OutputSet:
    """Collects output files in memory and writes them together with a manifest.

    Nothing touches the disk until :meth:`commit`, so a command that fails
    part-way leaves no partial output behind.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.files: dict[str, bytes] = {}

    def add_text(self, name: str, text: str) -> None:
        self.files[name] = text.encode("utf-8")

    def add_json(self, name: str, obj) -> None:
        self.add_text(name, dumps(obj))

    def commit(self, manifest: dict) -> Path:
        manifest = dict(manifest)
        manifest["outputs"] = {name: sha256_bytes(data) for name, data in sorted(self.files.items())}
        self.directory.mkdir(parents=True, exist_ok=True)
        for name, data in self.files.items():
            (self.directory / name).write_bytes(data)
        path = self.directory / "manifest.json"
        path.write_text(dumps(manifest), encoding="utf-8")
        return path


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None
