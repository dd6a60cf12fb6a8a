"""Binary snapshots, diagnostics CSV and key=value reports.

Snapshot layout (little-endian)::

    b"EVFX"  u32 version=1  u32 N  u64[N] dims  f64[N] lengths  f64 time
    f64[prod(dims)] rho  then N momentum components, each f64[prod(dims)], row-major
"""
from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .diagnostics import COLUMNS, DiagnosticsSeries
from .grid import Grid
from .solver import State, Trajectory

MAGIC = b"EVFX"
VERSION = 1


class SnapshotError(ValueError):
    """Malformed snapshot file."""


def encode_snapshot(s: State, grid: Grid) -> bytes:
    n = grid.ndim
    if s.rho.shape != grid.shape or s.m.shape != (n,) + grid.shape:
        raise ValueError("state arrays do not match the grid")
    head = MAGIC + struct.pack(f"<II{n}Q{n}dd", VERSION, n, *grid.dims, *grid.lengths, float(s.t))
    body = np.ascontiguousarray(s.rho, dtype="<f8").tobytes() + np.ascontiguousarray(s.m, dtype="<f8").tobytes()
    return head + body


def decode_snapshot(buf: bytes) -> tuple[State, Grid]:
    if len(buf) < 12:
        raise SnapshotError("size mismatch: file too short for a header")
    if buf[:4] != MAGIC:
        raise SnapshotError(f"bad magic {buf[:4]!r}; unsupported format or version")
    version, n = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if n not in (2, 3):
        raise SnapshotError(f"unsupported dimension N={n}")
    hsize = 12 + 8 * n + 8 * n + 8
    if len(buf) < hsize:
        raise SnapshotError("size mismatch: truncated header")
    vals = struct.unpack_from(f"<{n}Q{n}dd", buf, 12)
    dims = tuple(int(d) for d in vals[:n])
    lengths = tuple(vals[n:2 * n])
    t = vals[2 * n]
    npts = int(np.prod(dims))
    expected = hsize + 8 * npts * (1 + n)
    if len(buf) != expected:
        raise SnapshotError(f"size mismatch: expected {expected} bytes, got {len(buf)}")
    data = np.frombuffer(buf, dtype="<f8", offset=hsize).astype(np.float64)
    if not np.isfinite(data).all() or not np.isfinite(t):
        raise SnapshotError("non-finite payload")
    rho = data[:npts].reshape(dims)
    m = data[npts:].reshape((n,) + dims)
    return State(t, rho, m), Grid(dims, lengths)


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_snapshot(s: State, grid: Grid, path) -> None:
    _atomic_write(Path(path), encode_snapshot(s, grid))


def read_snapshot(path) -> tuple[State, Grid]:
    return decode_snapshot(Path(path).read_bytes())


def load_trajectory(paths) -> tuple[Trajectory, Grid]:
    """Snapshot files (any order) as a time-sorted trajectory, e.g. external probe input."""
    loaded = [read_snapshot(p) for p in paths]
    if not loaded:
        raise SnapshotError("no snapshot files given")
    grid = loaded[0][1]
    if any(g != grid for _, g in loaded):
        raise SnapshotError("snapshots do not share a grid")
    snaps = sorted((s for s, _ in loaded), key=lambda s: s.t)
    if any(b.t <= a.t for a, b in zip(snaps, snaps[1:])):
        raise SnapshotError("snapshot times must be distinct")
    return Trajectory(snapshots=snaps), grid


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def csv_text(series: DiagnosticsSeries | Iterable[Mapping]) -> str:
    rows = series.rows if isinstance(series, DiagnosticsSeries) else list(series)
    lines = [",".join(COLUMNS)]
    for r in rows:
        vals = []
        for c in COLUMNS:
            v = r[c]
            vals.append(str(int(v)) if c == "clip_count" else "%.17g" % float(v))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def emit_csv(series, path) -> None:
    _atomic_write(Path(path), csv_text(series).encode("ascii"))


def read_csv(path) -> DiagnosticsSeries:
    lines = Path(path).read_text().splitlines()
    if not lines or tuple(lines[0].split(",")) != COLUMNS:
        raise ValueError(f"{path}: unexpected CSV header")
    rows = []
    for line in lines[1:]:
        vals = line.split(",")
        rows.append({c: (int(v) if c == "clip_count" else float(v)) for c, v in zip(COLUMNS, vals)})
    return DiagnosticsSeries(rows)


def report_text(items: Iterable[tuple[str, object]]) -> str:
    """``key=value`` lines in the given order."""
    return "".join(f"{k}={fmt(v)}\n" for k, v in items)


def write_report(items, path) -> None:
    _atomic_write(Path(path), report_text(items).encode("utf-8"))


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line and "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out
