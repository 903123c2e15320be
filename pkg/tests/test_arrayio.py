import json

import numpy as np
import pytest

from vesseltrack import (
    GeodesicTrack,
    load_track_csv,
    load_volume,
    save_track_csv,
    save_volume,
)
from vesseltrack.arrayio import sidecar_path
from vesseltrack.errors import BadConfig

from support import m2_grid, w2_grid


def test_volume_round_trip_is_bit_exact(tmp_path):
    g = w2_grid(8, 6, 4, extent=0.5)
    rng = np.random.default_rng(2)
    values = rng.normal(size=g.shape).astype(np.float32)
    p1 = save_volume(tmp_path / "a.raw", values, g, kind="test",
                     provenance={"note": "round trip"})
    loaded, g2, meta = load_volume(p1)
    assert np.array_equal(loaded, values)
    assert g2 == g
    assert meta["kind"] == "test"
    assert meta["provenance"]["note"] == "round trip"
    assert meta["axes"] == ["alpha", "beta", "phi"]
    # write -> read -> write reproduces both files byte for byte
    p2 = save_volume(tmp_path / "b.raw", loaded, g2, kind="test",
                     provenance={"note": "round trip"})
    assert p1.read_bytes() == p2.read_bytes()
    assert sidecar_path(p1).read_bytes() == sidecar_path(p2).read_bytes()


def test_volume_shape_mismatch_rejected(tmp_path):
    g = m2_grid(8, 8, 8, dx=0.5)
    with pytest.raises(BadConfig):
        save_volume(tmp_path / "bad.raw", np.zeros((4, 4, 4)), g)


def test_load_volume_error_messages(tmp_path):
    g = m2_grid(8, 8, 8, dx=0.5)
    raw = save_volume(tmp_path / "v.raw", np.zeros(g.shape), g)
    # missing sidecar names the expected file
    sidecar_path(raw).rename(tmp_path / "elsewhere.json")
    with pytest.raises(BadConfig, match="v.json"):
        load_volume(raw)
    (tmp_path / "elsewhere.json").rename(sidecar_path(raw))
    # sidecar present but raw payload gone
    raw_bytes = raw.read_bytes()
    raw.unlink()
    with pytest.raises(BadConfig, match="missing raw"):
        load_volume(raw)
    raw.write_bytes(raw_bytes)
    # unknown format marker
    meta = json.loads(sidecar_path(raw).read_text())
    meta["format"] = "raw-f64-be"
    sidecar_path(raw).write_text(json.dumps(meta))
    with pytest.raises(BadConfig, match="format"):
        load_volume(raw)
    # truncated payload
    meta["format"] = "raw-f32-le-c"
    sidecar_path(raw).write_text(json.dumps(meta))
    raw.write_bytes(raw.read_bytes()[:-8])
    with pytest.raises(BadConfig, match="promises"):
        load_volume(raw)


def _random_track(n=17, seed=4):
    rng = np.random.default_rng(seed)
    return GeodesicTrack(
        manifold="m2",
        points=rng.normal(size=(n, 3)),
        u=rng.normal(size=(n, 3)),
        t=np.linspace(0, 1, n),
        w=rng.uniform(0, 5, n),
        status="ok",
    )


def test_track_csv_round_trip_lossless(tmp_path):
    track = _random_track()
    path = save_track_csv(tmp_path / "t.csv", track)
    t, pts, u, w = load_track_csv(path)
    # 17 significant digits reproduce float64 exactly
    assert np.array_equal(t, track.t)
    assert np.array_equal(pts, track.points)
    assert np.array_equal(u, track.u)
    assert np.array_equal(w, track.w)
    header = path.read_text().splitlines()[0]
    assert header == "t,c1,c2,c3,u1,u2,u3,W"


def test_track_csv_error_paths(tmp_path):
    with pytest.raises(BadConfig, match="missing track"):
        load_track_csv(tmp_path / "none.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    with pytest.raises(BadConfig, match="header"):
        load_track_csv(bad)
    mangled = tmp_path / "mangled.csv"
    mangled.write_text("t,c1,c2,c3,u1,u2,u3,W\n1,2,3\n")
    with pytest.raises(BadConfig):
        load_track_csv(mangled)
