"""Binary trace files with a JSON sidecar.

Layout, little-endian:

    b"SCTR"  u32 version=1  f64 sample_rate  f64 clock  u64 n_samples
    n_samples x f32

The sidecar ``<stem>.meta.json`` holds the trace metadata (seed, laser
settings, scenario, true scalar for simulated traces).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .leakage import Trace

__all__ = ["MAGIC", "VERSION", "TraceFormatError", "sidecar_path", "write_trace", "read_trace"]

MAGIC = b"SCTR"
VERSION = 1
_HEADER = struct.Struct("<4sIddQ")


class TraceFormatError(ValueError):
    pass


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".meta.json")


def write_trace(path: str | Path, trace: Trace) -> None:
    path = Path(path)
    samples = np.ascontiguousarray(trace.samples, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, trace.sample_rate, trace.clock, samples.size))
        fh.write(samples.tobytes())
    sidecar_path(path).write_text(json.dumps(trace.meta, indent=2, sort_keys=True) + "\n")


def read_trace(path: str | Path) -> Trace:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise TraceFormatError(f"{path}: truncated header")
        magic, version, rate, clock, n = _HEADER.unpack(head)
        if magic != MAGIC:
            raise TraceFormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise TraceFormatError(f"{path}: unsupported version {version}")
        samples = np.fromfile(fh, dtype="<f4")
    if samples.size != n:
        raise TraceFormatError(f"{path}: header promises {n} samples, file holds {samples.size}")
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    return Trace(samples.astype(np.float32, copy=False), rate, clock, meta)
