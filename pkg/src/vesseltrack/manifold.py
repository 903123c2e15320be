"""Planar and spherical position-orientation spaces.

The planar space M2 = R^2 x S^1 is identified with the roto-translation
group SE(2): a point (x, y, theta) is the pose reached from the origin by
rotating by theta and translating to (x, y).  The spherical space W2 is
identified with SO(3) through the chart

    R(alpha, beta, phi) = R_Z(-beta) @ R_Y(-alpha) @ R_X(phi),

where R_A(t) is the counter-clockwise rotation by t about axis A.  The
reference point q0 corresponds to the identity: the sphere point n0 =
(1, 0, 0) with reference direction (0, 0, 1).

Both spaces carry a left-invariant frame obtained by pushing the
coordinate basis at the reference point forward with the group action:

* M2:  A1 = cos(theta) dx + sin(theta) dy   (along the orientation)
       A2 = -sin(theta) dx + cos(theta) dy  (lateral)
       A3 = dtheta                          (angular)

* W2:  B1 = cos(phi) dalpha + sin(phi)/cos(alpha) dbeta
            + tan(alpha) sin(phi) dphi
       B2 = -sin(phi) dalpha + cos(phi)/cos(alpha) dbeta
            + tan(alpha) cos(phi) dphi
       B3 = dphi

The closed forms for B1, B2 were derived off-line from the body angular
velocity of the chart and are pinned by a test against a central
finite-difference pushforward of the group action.  Note that B1 and B2
do carry tan(alpha)-weighted dphi components; only their dalpha/dbeta
parts appear in the horizontality analysis of the projection module.

All angular quantities are wrapped to [-pi, pi).  The spherical chart
degenerates at alpha = +-pi/2; frame evaluation within ``CHART_TOL`` of
the degeneracy raises :class:`~vesseltrack.errors.DegenerateChart`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChart

__all__ = [
    "CHART_TOL",
    "PlanarPoint",
    "SphericalPoint",
    "Rotation3",
    "wrap_angle",
    "se2_mul",
    "se2_inv",
    "se2_act",
    "rotation_from_coords",
    "coords_from_rotation",
    "frame_m2",
    "frame_w2",
    "FrameField",
    "frame_field",
]

#: Guard distance (radians) from the spherical chart degeneracy at +-pi/2.
CHART_TOL = 1e-6


def wrap_angle(theta):
    """Wrap an angle (or array of angles) to the interval [-pi, pi).

    Idempotent: wrapping an already wrapped value returns it unchanged.
    """
    theta = np.asarray(theta, dtype=float)
    wrapped = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class PlanarPoint:
    """A point (x, y, theta) of M2 with theta wrapped to [-pi, pi)."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)


@dataclass(frozen=True)
class SphericalPoint:
    """A point (alpha, beta, phi) of W2: chart coordinates on SO(3).

    alpha and beta are the spherical position angles, phi the in-plane
    orientation.  All three are wrapped to [-pi, pi); alpha must stay
    strictly inside (-pi/2, pi/2) for the chart to be valid.
    """

    alpha: float
    beta: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", wrap_angle(self.alpha))
        object.__setattr__(self, "beta", wrap_angle(self.beta))
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.phi], dtype=float)


# ---------------------------------------------------------------------------
# SE(2)
# ---------------------------------------------------------------------------

def se2_mul(g, h):
    """Compose two SE(2) elements ((bx, by), theta).

    Args:
        g, h: group elements as ((bx, by), theta) pairs.

    Returns:
        The product g * h in the same representation.
    """
    (bgx, bgy), tg = g
    (bhx, bhy), th = h
    c, s = np.cos(tg), np.sin(tg)
    return ((bgx + c * bhx - s * bhy, bgy + s * bhx + c * bhy), wrap_angle(tg + th))


def se2_inv(g):
    """Invert an SE(2) element ((bx, by), theta)."""
    (bx, by), t = g
    c, s = np.cos(t), np.sin(t)
    return ((-(c * bx + s * by), -(-s * bx + c * by)), wrap_angle(-t))


def se2_act(g, p: PlanarPoint) -> PlanarPoint:
    """Apply the left action of g = ((bx, by), theta_g) to a planar point.

    The action rotates the position by theta_g, translates by b, and adds
    theta_g to the orientation:  L_g(x, theta) = (b + R_g x, theta_g + theta).
    """
    (bx, by), tg = g
    c, s = np.cos(tg), np.sin(tg)
    return PlanarPoint(
        bx + c * p.x - s * p.y,
        by + s * p.x + c * p.y,
        wrap_angle(tg + p.theta),
    )


# ---------------------------------------------------------------------------
# SO(3)
# ---------------------------------------------------------------------------

def _rot_x(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Rotation3:
    """A rotation of R^3 stored as a 3x3 matrix.

    Invariants (checked by :meth:`validate`): the matrix is orthonormal
    and has determinant +1, both within 1e-12.
    """

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))

    def validate(self, tol: float = 1e-12) -> bool:
        m = self.matrix
        ortho = np.abs(m @ m.T - np.eye(3)).max() <= tol
        return bool(ortho and abs(np.linalg.det(m) - 1.0) <= tol)

    def compose(self, other: "Rotation3") -> "Rotation3":
        return Rotation3(self.matrix @ other.matrix)

    def inverse(self) -> "Rotation3":
        return Rotation3(self.matrix.T)

    def act(self, v) -> np.ndarray:
        """Rotate a 3-vector (or stack of 3-vectors)."""
        v = np.asarray(v, dtype=float)
        return v @ self.matrix.T


def rotation_from_coords(alpha: float, beta: float, phi: float) -> Rotation3:
    """Build the rotation R_Z(-beta) @ R_Y(-alpha) @ R_X(phi).

    Example: rotation_from_coords(pi/2, 0, 0) maps n0 = (1, 0, 0) to
    (0, 0, 1).
    """
    return Rotation3(_rot_z(-beta) @ _rot_y(-alpha) @ _rot_x(phi))


def coords_from_rotation(rot: Rotation3) -> tuple[float, float, float]:
    """Recover (alpha, beta, phi) from a rotation, principal branch.

    The sphere point R @ n0 determines (alpha, beta) through

        R @ n0 = (cos a cos b, -cos a sin b, sin a),

    after which phi is read off the residual rotation about the X axis.

    Raises:
        DegenerateChart: if the rotation maps n0 to within 1e-9 of a
            pole (|alpha| -> pi/2), where beta and phi are not separable.
    """
    m = rot.matrix
    col0 = m[:, 0]
    cos_alpha = float(np.hypot(col0[0], col0[1]))
    if cos_alpha < 1e-9:
        raise DegenerateChart(
            "rotation maps the reference point to a pole; "
            "(beta, phi) are not separately defined there"
        )
    alpha = float(np.arctan2(col0[2], cos_alpha))
    beta = float(np.arctan2(-col0[1], col0[0]))
    residual = _rot_y(alpha) @ _rot_z(beta) @ m
    phi = float(np.arctan2(residual[2, 1], residual[1, 1]))
    return (wrap_angle(alpha), wrap_angle(beta), wrap_angle(phi))


# ---------------------------------------------------------------------------
# Left-invariant frames
# ---------------------------------------------------------------------------

def frame_m2(theta):
    """Left-invariant frame of M2 at orientation theta.

    Parameters
    ----------
    theta : float or ndarray
        Orientation angle(s).

    Returns
    -------
    frame : ndarray, shape (..., 3, 3)
        Columns are the frame vectors A1, A2, A3 expressed in the
        coordinate basis (dx, dy, dtheta).
    coframe : ndarray, shape (..., 3, 3)
        Rows are the dual one-forms omega^1..3; ``coframe`` is the exact
        matrix inverse of ``frame``.
    """
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    z = np.zeros_like(c)
    o = np.ones_like(c)
    frame = np.stack(
        [
            np.stack([c, -s, z], axis=-1),
            np.stack([s, c, z], axis=-1),
            np.stack([z, z, o], axis=-1),
        ],
        axis=-2,
    )
    coframe = np.stack(
        [
            np.stack([c, s, z], axis=-1),
            np.stack([-s, c, z], axis=-1),
            np.stack([z, z, o], axis=-1),
        ],
        axis=-2,
    )
    return frame, coframe


def frame_w2(alpha, phi, tol: float = CHART_TOL):
    """Left-invariant frame of W2 at chart coordinates (alpha, phi).

    The frame does not depend on beta.  Columns of the returned matrix
    are B1, B2, B3 in the coordinate basis (dalpha, dbeta, dphi); the
    second return value is the matrix inverse (rows are the dual forms
    nu^1..3).

    Raises
    ------
    DegenerateChart
        If any alpha lies within ``tol`` of +-pi/2.
    """
    alpha = np.asarray(alpha, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(np.abs(alpha) >= np.pi / 2.0 - tol):
        raise DegenerateChart(
            f"frame requested within {tol} of the chart degeneracy alpha = +-pi/2"
        )
    alpha, phi = np.broadcast_arrays(alpha, phi)
    ca, sa = np.cos(alpha), np.sin(alpha)
    cp, sp = np.cos(phi), np.sin(phi)
    ta = sa / ca
    z = np.zeros_like(ca)
    o = np.ones_like(ca)
    frame = np.stack(
        [
            np.stack([cp, -sp, z], axis=-1),
            np.stack([sp / ca, cp / ca, z], axis=-1),
            np.stack([ta * sp, ta * cp, o], axis=-1),
        ],
        axis=-2,
    )
    coframe = np.stack(
        [
            np.stack([cp, ca * sp, z], axis=-1),
            np.stack([-sp, ca * cp, z], axis=-1),
            np.stack([z, -sa, o], axis=-1),
        ],
        axis=-2,
    )
    return frame, coframe


@dataclass(frozen=True)
class FrameField:
    """Frame and coframe matrices evaluated at a batch of points.

    ``frames[..., :, i]`` is the i-th frame vector in coordinates and
    ``coframes[..., i, :]`` the dual form; their product is the identity
    to within 1e-10 (machine precision in practice).
    """

    manifold: str
    frames: np.ndarray
    coframes: np.ndarray


def frame_field(manifold: str, c1, c2, c3) -> FrameField:
    """Evaluate the left-invariant frame at broadcastable coordinate arrays.

    Args:
        manifold: "m2" (coordinates x, y, theta) or "w2" (alpha, beta, phi).
        c1, c2, c3: coordinate arrays, broadcast together.

    Returns:
        A :class:`FrameField` with matching leading shape.
    """
    c1, c2, c3 = np.broadcast_arrays(
        np.asarray(c1, float), np.asarray(c2, float), np.asarray(c3, float)
    )
    if manifold == "m2":
        frames, coframes = frame_m2(c3)
    elif manifold == "w2":
        frames, coframes = frame_w2(c1, c3)
    else:
        raise ValueError(f"unknown manifold {manifold!r}")
    frames = np.broadcast_to(frames, c1.shape + (3, 3)).copy()
    coframes = np.broadcast_to(coframes, c1.shape + (3, 3)).copy()
    return FrameField(manifold, frames, coframes)
