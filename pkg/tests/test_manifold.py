import numpy as np
import pytest

from vesseltrack.errors import DegenerateChart
from vesseltrack.manifold import (
    CHART_TOL,
    PlanarPoint,
    Rotation3,
    SphericalPoint,
    coords_from_rotation,
    frame_field,
    frame_m2,
    frame_w2,
    rotation_from_coords,
    se2_act,
    se2_inv,
    se2_mul,
    wrap_angle,
)


def test_wrap_angle_range_and_idempotence():
    vals = np.array([-7.0, -np.pi, -1.0, 0.0, 1.0, np.pi, 9.5, 4 * np.pi])
    w = wrap_angle(vals)
    assert np.all(w >= -np.pi) and np.all(w < np.pi)
    assert np.allclose(wrap_angle(w), w)
    assert wrap_angle(np.pi) == pytest.approx(-np.pi)
    assert isinstance(wrap_angle(3.0), float)


def test_point_constructors_wrap():
    p = PlanarPoint(1.0, 2.0, 3 * np.pi)
    assert p.theta == pytest.approx(wrap_angle(3 * np.pi))
    q = SphericalPoint(0.2, 2 * np.pi + 0.3, -3 * np.pi / 2)
    assert q.beta == pytest.approx(0.3)
    assert q.as_array().shape == (3,)


def test_se2_group_axioms():
    rng = np.random.default_rng(0)
    for _ in range(20):
        bg = rng.normal(size=2)
        bh = rng.normal(size=2)
        tg, th = rng.uniform(-np.pi, np.pi, 2)
        g = ((bg[0], bg[1]), tg)
        h = ((bh[0], bh[1]), th)
        gh = se2_mul(g, h)
        # inverse law
        (bx, by), t = se2_mul(g, se2_inv(g))
        assert abs(bx) < 1e-12 and abs(by) < 1e-12 and abs(t) < 1e-12
        # action is a homomorphism: L_g(L_h(p)) == L_{gh}(p)
        p = PlanarPoint(*rng.normal(size=2), rng.uniform(-np.pi, np.pi))
        lhs = se2_act(g, se2_act(h, p))
        rhs = se2_act(gh, p)
        assert lhs.x == pytest.approx(rhs.x, abs=1e-12)
        assert lhs.y == pytest.approx(rhs.y, abs=1e-12)
        assert wrap_angle(lhs.theta - rhs.theta) == pytest.approx(0.0, abs=1e-12)


def test_rotation_from_coords_is_rotation_and_reference_mapping():
    rot = rotation_from_coords(0.3, -0.7, 1.1)
    assert rot.validate()
    # alpha = pi/2 sends the reference sphere point to the north pole
    up = rotation_from_coords(np.pi / 2, 0.0, 0.0).act([1.0, 0.0, 0.0])
    assert np.allclose(up, [0.0, 0.0, 1.0], atol=1e-12)
    assert np.allclose(
        rot.compose(rot.inverse()).matrix, np.eye(3), atol=1e-12
    )


def test_coords_rotation_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = rng.uniform(-np.pi / 2 + 0.05, np.pi / 2 - 0.05)
        b = rng.uniform(-np.pi, np.pi)
        f = rng.uniform(-np.pi, np.pi)
        a2, b2, f2 = coords_from_rotation(rotation_from_coords(a, b, f))
        assert a2 == pytest.approx(a, abs=1e-12)
        assert wrap_angle(b2 - b) == pytest.approx(0.0, abs=1e-12)
        assert wrap_angle(f2 - f) == pytest.approx(0.0, abs=1e-12)


def test_coords_from_rotation_pole_raises():
    with pytest.raises(DegenerateChart):
        coords_from_rotation(rotation_from_coords(np.pi / 2, 0.0, 0.0))


def test_frame_m2_columns_and_inverse():
    theta = np.linspace(-np.pi, np.pi, 9)
    frame, coframe = frame_m2(theta)
    c, s = np.cos(theta), np.sin(theta)
    assert np.allclose(frame[..., :, 0], np.stack([c, s, 0 * c], axis=-1))
    assert np.allclose(frame[..., :, 1], np.stack([-s, c, 0 * c], axis=-1))
    assert np.allclose(frame[..., :, 2], np.stack([0 * c, 0 * c, 1 + 0 * c], axis=-1))
    eye = np.einsum("...ij,...jk->...ik", coframe, frame)
    assert np.allclose(eye, np.eye(3), atol=1e-12)


def _numeric_w2_frame(alpha, beta, phi, h=1e-6):
    """Pushforward of the group action by central differences.

    The i-th frame vector at q is d/dt of the chart coordinates of
    R(q) @ exp(t X_i) at t = 0, where X_i is the coordinate velocity of
    the chart at the identity.
    """
    base = rotation_from_coords(alpha, beta, phi)
    cols = []
    for i in range(3):
        step = [0.0, 0.0, 0.0]
        step[i] = h
        plus = base.compose(rotation_from_coords(*step))
        step[i] = -h
        minus = base.compose(rotation_from_coords(*step))
        cp = np.array(coords_from_rotation(plus))
        cm = np.array(coords_from_rotation(minus))
        cols.append(wrap_angle(cp - cm) / (2 * h))
    return np.stack(cols, axis=-1)


def test_frame_w2_matches_numeric_pushforward():
    rng = np.random.default_rng(2)
    for _ in range(25):
        a = rng.uniform(-1.2, 1.2)
        b = rng.uniform(-2.0, 2.0)
        f = rng.uniform(-np.pi, np.pi)
        frame, coframe = frame_w2(a, f)
        numeric = _numeric_w2_frame(a, b, f)
        assert np.allclose(frame, numeric, atol=5e-6), (a, b, f)
        assert np.allclose(coframe @ frame, np.eye(3), atol=1e-12)


def test_frame_w2_beta_independent_and_degenerate_guard():
    fa, ca = frame_w2(0.4, 1.0)
    assert fa.shape == (3, 3)
    with pytest.raises(DegenerateChart):
        frame_w2(np.pi / 2 - CHART_TOL / 2, 0.0)
    with pytest.raises(DegenerateChart):
        frame_w2(np.array([0.0, -np.pi / 2]), np.array([0.0, 0.0]))


def test_frame_field_shapes_and_unknown_manifold():
    ff = frame_field("m2", np.zeros((4, 5)), np.zeros((4, 5)), np.linspace(0, 1, 5))
    assert ff.frames.shape == (4, 5, 3, 3)
    assert ff.coframes.shape == (4, 5, 3, 3)
    prod = np.einsum("...ij,...jk->...ik", ff.coframes, ff.frames)
    assert np.allclose(prod, np.eye(3), atol=1e-12)
    with pytest.raises(ValueError):
        frame_field("r3", 0.0, 0.0, 0.0)
