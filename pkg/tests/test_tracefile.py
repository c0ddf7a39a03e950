import struct

import numpy as np
import pytest

from sculi.leakage import Trace
from sculi.tracefile import TraceFormatError, read_trace, sidecar_path, write_trace


def _trace():
    rng = np.random.default_rng(0)
    return Trace(rng.normal(size=54 * 1250).astype(np.float32), meta={"seed": 3, "scenario": "x"})


def test_roundtrip(tmp_path):
    t = _trace()
    p = tmp_path / "trace.sctr"
    write_trace(p, t)
    assert sidecar_path(p).name == "trace.meta.json"
    back = read_trace(p)
    assert np.array_equal(back.samples, t.samples)
    assert back.sample_rate == t.sample_rate and back.clock == t.clock
    assert back.meta == t.meta
    assert p.stat().st_size == struct.calcsize("<4sIddQ") + 4 * t.samples.size


def test_missing_sidecar_gives_empty_meta(tmp_path):
    p = tmp_path / "trace.sctr"
    write_trace(p, _trace())
    sidecar_path(p).unlink()
    assert read_trace(p).meta == {}


def test_bad_magic(tmp_path):
    p = tmp_path / "trace.sctr"
    write_trace(p, _trace())
    data = bytearray(p.read_bytes())
    data[:4] = b"NOPE"
    p.write_bytes(bytes(data))
    with pytest.raises(TraceFormatError, match="magic"):
        read_trace(p)


def test_bad_version(tmp_path):
    p = tmp_path / "trace.sctr"
    write_trace(p, _trace())
    data = bytearray(p.read_bytes())
    data[4:8] = struct.pack("<I", 9)
    p.write_bytes(bytes(data))
    with pytest.raises(TraceFormatError, match="version"):
        read_trace(p)


def test_truncated(tmp_path):
    p = tmp_path / "trace.sctr"
    write_trace(p, _trace())
    data = p.read_bytes()
    p.write_bytes(data[:-8])
    with pytest.raises(TraceFormatError, match="promises"):
        read_trace(p)
    p.write_bytes(data[:10])
    with pytest.raises(TraceFormatError, match="header"):
        read_trace(p)
