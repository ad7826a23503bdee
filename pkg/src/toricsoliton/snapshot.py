"""Snapshots of a flow state.

Two forms share one header (a JSON object):

* binary: ``MAGIC``, a little-endian uint64 header length, the UTF-8 header,
  then ``N * N`` little-endian float64 values of ``h`` in row-major order
  (``nan`` on undefined nodes). Restores bit for bit.
* CSV: ``# `` prefixed header lines (``# header: {json}``), a column line,
  then one ``i,j,x1,x2,h`` row per node written with 17 significant digits,
  which also round-trips exactly.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import SnapshotFormatError
from .flow import FlowState
from .grid import ScalarField, build_grid
from .polytope import DelzantPolytope

MAGIC = b"TKRSNAP\n"
FORMAT_VERSION = 1


@dataclass
class Snapshot:
    polytope: DelzantPolytope
    state: FlowState
    converged: bool = False
    config: dict = field(default_factory=dict)
    code_version: str = __version__

    def header(self) -> dict:
        s = self.state
        c, a = s.gauge
        return {
            "format": "toricsoliton-snapshot",
            "version": FORMAT_VERSION,
            "code_version": self.code_version,
            "surface": self.polytope.name,
            "polytope": self.polytope.to_records(),
            "N": s.grid.N,
            "t": s.t,
            "gauge": {"c": float(c), "a": [float(a[0]), float(a[1])]},
            "step": s.step_count,
            "dt_scale": s.dt_scale,
            "converged": bool(self.converged),
            "config": self.config,
        }


def _state_from(header: dict, values: np.ndarray) -> Snapshot:
    try:
        if header.get("format") != "toricsoliton-snapshot":
            raise SnapshotFormatError(f"not a snapshot (format={header.get('format')!r})")
        if header.get("version") != FORMAT_VERSION:
            raise SnapshotFormatError(
                f"snapshot format version {header.get('version')} is not supported (expected {FORMAT_VERSION})"
            )
        p = DelzantPolytope.from_records(header["polytope"], name=header["surface"])
        N = int(header["N"])
        grid = build_grid(p, N)
        if values.shape != (N * N,):
            raise SnapshotFormatError(f"expected {N * N} node values, found {values.size}")
        gauge = (float(header["gauge"]["c"]), tuple(float(v) for v in header["gauge"]["a"]))
        state = FlowState(
            ScalarField(grid, values.reshape(N, N).copy()),
            t=float(header["t"]),
            gauge=gauge,
            step_count=int(header["step"]),
            dt_scale=float(header["dt_scale"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SnapshotFormatError):
            raise
        raise SnapshotFormatError(f"malformed snapshot header: {exc}") from exc
    return Snapshot(p, state, bool(header.get("converged", False)), header.get("config", {}), header.get("code_version", "?"))


def write_binary(path, snap: Snapshot) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = json.dumps(snap.header(), sort_keys=True).encode()
    data = np.ascontiguousarray(snap.state.h.values, dtype="<f8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        f.write(data.tobytes(order="C"))
    return path


def read_binary(path) -> Snapshot:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise SnapshotFormatError(f"{path}: missing snapshot magic")
    off = len(MAGIC)
    if len(raw) < off + 8:
        raise SnapshotFormatError(f"{path}: truncated header")
    (n,) = struct.unpack("<Q", raw[off : off + 8])
    off += 8
    try:
        header = json.loads(raw[off : off + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotFormatError(f"{path}: unreadable header: {exc}") from exc
    body = raw[off + n :]
    if len(body) % 8:
        raise SnapshotFormatError(f"{path}: payload is not a whole number of float64 values")
    return _state_from(header, np.frombuffer(body, dtype="<f8").astype(float))


def write_csv(path, snap: Snapshot) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g = snap.state.grid
    h = snap.state.h.values
    with open(path, "w") as f:
        f.write("# toricsoliton snapshot\n")
        f.write("# header: " + json.dumps(snap.header(), sort_keys=True) + "\n")
        f.write("i,j,x1,x2,h\n")
        for i in range(g.N):
            for j in range(g.N):
                f.write(f"{i},{j},{g.x[i]!r},{g.x[j]!r},{float(h[i, j])!r}\n")
    return path


def read_csv(path) -> Snapshot:
    header: Optional[dict] = None
    rows = []
    with open(path) as f:
        for line in f:
            if line.startswith("# header: "):
                try:
                    header = json.loads(line[len("# header: ") :])
                except json.JSONDecodeError as exc:
                    raise SnapshotFormatError(f"{path}: unreadable header: {exc}") from exc
            elif line.startswith("#") or line.startswith("i,j"):
                continue
            elif line.strip():
                rows.append(line.rstrip("\n").split(","))
    if header is None:
        raise SnapshotFormatError(f"{path}: no header line")
    N = int(header.get("N", 0))
    values = np.full(N * N, np.nan)
    try:
        for r in rows:
            values[int(r[0]) * N + int(r[1])] = float(r[4])
    except (IndexError, ValueError) as exc:
        raise SnapshotFormatError(f"{path}: malformed row: {exc}") from exc
    return _state_from(header, values)


def save(path, snap: Snapshot) -> Path:
    """Write binary unless the suffix is ``.csv``."""
    return write_csv(path, snap) if str(path).endswith(".csv") else write_binary(path, snap)


def load(path) -> Snapshot:
    return read_csv(path) if str(path).endswith(".csv") else read_binary(path)
