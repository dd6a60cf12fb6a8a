import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evflux.diagnostics import COLUMNS, DiagnosticsSeries
from evflux.grid import Grid
from evflux.io import (
    SnapshotError,
    csv_text,
    decode_snapshot,
    emit_csv,
    encode_snapshot,
    fmt,
    parse_report,
    read_csv,
    read_snapshot,
    report_text,
    write_snapshot,
)
from evflux.solver import State


def _state(grid, rng, t=0.25):
    return State(t, 1 + rng.random(grid.shape), rng.standard_normal((grid.ndim,) + grid.shape))


def test_snapshot_layout_by_hand(rng):
    g = Grid((8, 16), (1.0, 2.0))
    s = _state(g, rng)
    buf = encode_snapshot(s, g)
    # independent layout oracle built with struct only
    head = b"EVFX" + struct.pack("<II", 1, 2) + struct.pack("<QQ", 8, 16) + struct.pack("<ddd", 1.0, 2.0, 0.25)
    body = struct.pack(f"<{s.rho.size}d", *s.rho.ravel()) + struct.pack(f"<{s.m.size}d", *s.m.ravel())
    assert buf == head + body


def test_snapshot_roundtrip_bitwise(tmp_path, rng):
    for g in (Grid.square(16), Grid((8, 8, 16), (1.0, 1.5, 2.0))):
        s = _state(g, rng, t=1 / 3)
        path = tmp_path / "a.evfx"
        write_snapshot(s, g, path)
        back, g2 = read_snapshot(path)
        assert g2 == g and back.t == s.t
        assert back.rho.tobytes() == s.rho.tobytes() and back.m.tobytes() == s.m.tobytes()
        assert encode_snapshot(back, g2) == path.read_bytes()
        assert not (tmp_path / "a.evfx.tmp").exists()


def test_snapshot_errors(rng):
    g = Grid.square(8)
    buf = encode_snapshot(_state(g, rng), g)
    with pytest.raises(SnapshotError, match="size mismatch"):
        decode_snapshot(buf[:-8])
    with pytest.raises(SnapshotError, match="size mismatch"):
        decode_snapshot(buf[:6])
    with pytest.raises(SnapshotError, match="magic"):
        decode_snapshot(b"EVFY" + buf[4:])
    with pytest.raises(SnapshotError, match="version"):
        decode_snapshot(buf[:4] + struct.pack("<I", 2) + buf[8:])
    bad = bytearray(buf)
    bad[-8:] = struct.pack("<d", float("nan"))
    with pytest.raises(SnapshotError, match="non-finite"):
        decode_snapshot(bytes(bad))
    with pytest.raises(ValueError):
        encode_snapshot(State(0.0, np.ones((4, 4)), np.ones((2, 4, 4))), g)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e300, 1e300))
def test_snapshot_roundtrip_property(seed, t):
    g = Grid((8, 12), (3.0, 0.5))
    r = np.random.default_rng(seed)
    s = State(t, r.standard_normal(g.shape) * 1e10, r.standard_normal((2,) + g.shape))
    back, _ = decode_snapshot(encode_snapshot(s, g))
    assert back.t == t and np.array_equal(back.rho, s.rho) and np.array_equal(back.m, s.m)


def _row(t):
    r = {c: t * 0.1 + i for i, c in enumerate(COLUMNS)}
    r["t"] = t
    r["clip_count"] = 2
    return r


def test_csv_header_only_and_lines(tmp_path):
    assert csv_text([]) == ",".join(COLUMNS) + "\n"
    text = csv_text(DiagnosticsSeries([_row(0.0), _row(1 / 3)]))
    lines = text.splitlines()
    assert len(lines) == 3
    assert lines[0].split(",")[:3] == ["t", "E", "E_kin"] and lines[0].split(",")[-1] == "Lbetap1"
    assert lines[2].split(",")[0] == "0.33333333333333331"
    assert lines[2].split(",")[COLUMNS.index("clip_count")] == "2"
    path = tmp_path / "d.csv"
    emit_csv([_row(0.0), _row(1 / 3)], path)
    back = read_csv(path)
    assert back.column("t").tolist() == [0.0, 1 / 3]
    emit_csv(back, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_bytes() == path.read_bytes()


def test_csv_header_checked(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(p)


def test_report_format():
    text = report_text([("b", 1), ("a", 0.1), ("ok", True), ("name", "x")])
    assert text == "b=1\na=0.10000000000000001\nok=true\nname=x\n"
    assert parse_report(text) == {"b": "1", "a": "0.10000000000000001", "ok": "true", "name": "x"}
    assert fmt(np.float64(2.0)) == "2"


def test_load_trajectory_sorts_and_checks(tmp_path, rng):
    from evflux.io import load_trajectory

    g = Grid.square(8)
    paths = []
    for k, t in enumerate((0.2, 0.0, 0.1)):
        p = tmp_path / f"s{k}.evfx"
        write_snapshot(_state(g, rng, t=t), g, p)
        paths.append(p)
    traj, g2 = load_trajectory(paths)
    assert g2 == g and traj.times.tolist() == [0.0, 0.1, 0.2]
    other = tmp_path / "other.evfx"
    write_snapshot(_state(Grid.square(16), rng), Grid.square(16), other)
    with pytest.raises(SnapshotError, match="grid"):
        load_trajectory(paths + [other])
    with pytest.raises(SnapshotError):
        load_trajectory([])
    with pytest.raises(SnapshotError, match="distinct"):
        load_trajectory(paths + paths[:1])
