"""On-disk formats: diagnostic CSV, binary state checkpoints and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .spectral import Field, make_grid

__all__ = [
    "CheckpointError",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "format_float",
    "write_csv",
    "read_csv",
    "RunManifest",
    "content_hash",
    "MANIFEST_NAME",
]

MAGIC = b"DSTR"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIdIIdbB")
MANIFEST_NAME = "manifest.json"


class CheckpointError(ValueError):
    """A checkpoint file that cannot be read as this format."""


@dataclass(frozen=True)
class Checkpoint:
    L: float
    nx: int
    ny: int
    t: float
    sigma: int
    e_enabled: bool
    values: np.ndarray = field(repr=False)

    def field(self) -> Field:
        return Field(make_grid(self.L, self.nx, self.ny), self.values.copy())


def save_checkpoint(path, u: Field, t: float, sigma: int, e_enabled: bool) -> None:
    g = u.grid
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, float(g.L), g.nx, g.ny, float(t), int(sigma), int(bool(e_enabled)))
    body = np.ascontiguousarray(u.values, dtype="<c16").tobytes(order="C")
    tmp = Path(f"{os.fspath(path)}.part")
    tmp.write_bytes(header + body)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: file too short for a checkpoint header")
    magic, version, L, nx, ny, t, sigma, e_flag = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (magic {magic!r}, expected {MAGIC!r})")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {version}, this build reads version {FORMAT_VERSION}; "
            "rerun from the config or convert the file with a matching release"
        )
    expected = _HEADER.size + 16 * nx * ny
    if len(data) != expected:
        raise CheckpointError(f"{path}: payload holds {len(data) - _HEADER.size} bytes, expected {16 * nx * ny}")
    if sigma not in (1, -1) or e_flag not in (0, 1):
        raise CheckpointError(f"{path}: corrupt flags (sigma={sigma}, e_enabled={e_flag})")
    vals = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape(nx, ny).astype(complex)
    return Checkpoint(L, nx, ny, t, sigma, bool(e_flag), vals)


# --- CSV ---------------------------------------------------------------------


def format_float(x) -> str:
    """17 significant digits: enough to round-trip any double."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    return format(float(x), ".17g")


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    n = 0
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row {n} has {len(row)} fields, expected {len(columns)}")
        w.writerow([format_float(v) for v in row])
        n += 1
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
    return n


def read_csv(path) -> tuple[list[str], dict[str, np.ndarray]]:
    """Header and numeric columns; blank fields read as NaN."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        rows = [r for r in reader if r]
    cols: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        out = []
        for i, r in enumerate(rows):
            cell = r[j] if j < len(r) else ""
            try:
                out.append(float(cell) if cell != "" else math.nan)
            except ValueError:
                out = None
                break
        if out is not None:
            cols[name] = np.asarray(out, dtype=float)
    return header, cols


# --- manifest ----------------------------------------------------------------


def content_hash(payload: Any) -> str:
    """Git blob hash of the canonical JSON encoding of ``payload``."""
    data = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: list = field(default_factory=list)
    grid: Optional[dict] = None
    threads: int = 1
    wall_clock_s: float = 0.0
    steps: int = 0
    outputs: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    version: str = __version__

    @property
    def input_hash(self) -> str:
        return content_hash({"command": self.command, "config": self.config, "seeds": self.seeds,
                             "grid": self.grid, "threads": self.threads, "version": self.version})

    def as_dict(self) -> dict:
        return {
            "artifact": "dstorus",
            "version": self.version,
            "command": self.command,
            "input_hash": self.input_hash,
            "config": self.config,
            "seeds": self.seeds,
            "grid": self.grid,
            "threads": self.threads,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "wall_clock_s": self.wall_clock_s,
            "steps": self.steps,
            "outputs": sorted(self.outputs),
            "extra": self.extra,
        }

    def write(self, out_dir) -> Path:
        """Written last; its presence marks a finished output directory."""
        path = Path(out_dir) / MANIFEST_NAME
        tmp = path.with_suffix(".part")
        tmp.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        os.replace(tmp, path)
        return path
