"""Projection between the spherical and planar position-orientation spaces.

A camera at distance ``a`` behind the eye-sphere center (sphere radius 1)
images the retinal surface onto a plane at distance ``c`` in front of the
center.  In chart coordinates the spatial projection reads

    pi(alpha, beta) = (a + c) / (a + cos(alpha) cos(beta)) *
                      (sin(alpha), cos(alpha) sin(beta)).

The projection extends to a map Pi between the full orientation spaces:
a spherical orientation phi is sent to the planar tangent angle of the
projected curve,

    Pi(alpha, beta, phi) = (pi(alpha, beta), arg(pid_1 + i pid_2)),
    pid_i = dpi_i/dalpha * cos(phi) + dpi_i/dbeta * sin(phi)/cos(alpha),

which maps horizontal spherical curves to horizontal planar curves (the
planar tangent angle of the projected curve equals its theta component).
Pi is invertible for positions inside the image of pi; the inverse is
computed by a damped Newton iteration on pi followed by a closed-form
recovery of phi.

Costs on the planar space pull back to the spherical space by composition
with Pi, so that spherical geodesics minimize the same data term as their
planar counterparts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, NoConvergence, OutOfRange
from .grids import CostVolume, GridSpec, sample_volume
from .manifold import wrap_angle

__all__ = [
    "CameraGeometry",
    "pi",
    "pi_jacobian",
    "pi_inverse",
    "lift_pi",
    "lift_pi_inverse",
    "pullback_cost",
    "radial_extent",
    "radial_length_distortion",
]


@dataclass(frozen=True)
class CameraGeometry:
    """Projection parameters: camera depth ``a`` and image-plane depth ``c``.

    Both are in units of the eye-sphere radius.  ``a`` must be positive
    so the denominator a + cos(alpha) cos(beta) stays positive on the
    chart; ``a + c`` sets the overall image scale and must be positive.
    """

    a: float = 13.0 / 21.0
    c: float = 0.5

    def __post_init__(self):
        if not (self.a > 0.0 and self.a + self.c > 0.0):
            raise BadConfig("camera geometry requires a > 0 and a + c > 0")


def pi(geom: CameraGeometry, alpha, beta):
    """Project spherical chart coordinates to the image plane.

    Parameters
    ----------
    geom : CameraGeometry
    alpha, beta : float or ndarray
        Chart coordinates, |alpha|, |beta| < pi/2.

    Returns
    -------
    x, y : float or ndarray
        Planar coordinates, same shape as the (broadcast) inputs.
    """
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    k = geom.a + geom.c
    ca, cb = np.cos(alpha), np.cos(beta)
    den = geom.a + ca * cb
    x = k * np.sin(alpha) / den
    y = k * ca * np.sin(beta) / den
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def pi_jacobian(geom: CameraGeometry, alpha, beta) -> np.ndarray:
    """Jacobian of :func:`pi` with respect to (alpha, beta).

    Returns an array of shape (..., 2, 2); closed form, pinned by a
    finite-difference test.
    """
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    a, k = geom.a, geom.a + geom.c
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    den2 = (a + ca * cb) ** 2
    j11 = k * (a * ca + cb) / den2
    j12 = k * sa * ca * sb / den2
    j21 = -k * a * sa * sb / den2
    j22 = k * ca * (a * cb + ca) / den2
    return np.stack(
        [np.stack([j11, j12], axis=-1), np.stack([j21, j22], axis=-1)], axis=-2
    )


def _clip_chart(t: np.ndarray) -> np.ndarray:
    lim = np.pi / 2.0 - 1e-9
    return np.clip(t, -lim, lim)


def pi_inverse(geom: CameraGeometry, x, y, tol: float = 1e-12, max_iter: int = 60):
    """Invert the spatial projection by damped Newton iteration.

    Accepts scalars or arrays of target coordinates.  Iterates start from
    the small-angle inverse and are clamped to the open chart square;
    stalled points fall back to a bisecting line search on the residual
    norm.

    Returns
    -------
    alpha, beta : float or ndarray

    Raises
    ------
    OutOfRange
        If a target is pinned against the chart boundary with a
        non-decreasing residual (it lies outside the image of pi).
    NoConvergence
        If the iteration fails to reach ``tol`` within ``max_iter``
        for any other reason.
    """
    x_in = np.asarray(x, float)
    scalar = x_in.ndim == 0
    tx = np.atleast_1d(np.asarray(x, float)).astype(float).ravel()
    ty = np.atleast_1d(np.asarray(y, float)).astype(float).ravel()
    k = geom.a + geom.c
    al = np.arcsin(np.clip(tx / k, -1.0, 1.0))
    be = np.arcsin(np.clip(ty / k, -1.0, 1.0))

    def residual(al, be):
        px, py = pi(geom, al, be)
        return np.atleast_1d(px) - tx, np.atleast_1d(py) - ty

    rx, ry = residual(al, be)
    for _ in range(max_iter):
        norm = np.hypot(rx, ry)
        active = norm >= tol
        if not active.any():
            break
        jac = pi_jacobian(geom, al[active], be[active])
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        det = np.where(np.abs(det) < 1e-300, np.nan, det)
        sa = (jac[:, 1, 1] * rx[active] - jac[:, 0, 1] * ry[active]) / det
        sb = (-jac[:, 1, 0] * rx[active] + jac[:, 0, 0] * ry[active]) / det
        base = norm[active]
        al_a, be_a = al[active], be[active]
        best_al, best_be = al_a.copy(), be_a.copy()
        improved = np.zeros(base.shape, dtype=bool)
        lam = 1.0
        for _ in range(60):
            cand_al = _clip_chart(al_a - lam * sa)
            cand_be = _clip_chart(be_a - lam * sb)
            px, py = pi(geom, cand_al, cand_be)
            cand_norm = np.hypot(
                np.atleast_1d(px) - tx[active], np.atleast_1d(py) - ty[active]
            )
            take = ~improved & (cand_norm < base * (1.0 - 1e-4 * lam))
            best_al = np.where(take, cand_al, best_al)
            best_be = np.where(take, cand_be, best_be)
            improved |= take
            if improved.all():
                break
            lam *= 0.5
        if not improved.any():
            break
        al[active] = best_al
        be[active] = best_be
        rx, ry = residual(al, be)

    norm = np.hypot(rx, ry)
    if (norm >= tol).any():
        lim = np.pi / 2.0 - 1e-6
        pinned = (np.abs(al) >= lim) | (np.abs(be) >= lim)
        if (pinned & (norm >= tol)).any():
            raise OutOfRange("target position lies outside the image of pi")
        raise NoConvergence(
            f"pi_inverse did not reach tol={tol} within {max_iter} iterations"
        )
    if scalar:
        return float(al[0]), float(be[0])
    shape = x_in.shape
    return al.reshape(shape), be.reshape(shape)


def lift_pi(geom: CameraGeometry, alpha, beta, phi):
    """The full lift Pi: map spherical (alpha, beta, phi) to planar (x, y, theta).

    theta is the direction of the projected velocity of the horizontal
    spherical direction with orientation phi; it is undefined only at
    the chart degeneracy (handled upstream by the chart guard).
    """
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    phi = np.asarray(phi, float)
    x, y = pi(geom, alpha, beta)
    jac = pi_jacobian(geom, alpha, beta)
    da = np.cos(phi)
    db = np.sin(phi) / np.cos(alpha)
    vx = jac[..., 0, 0] * da + jac[..., 0, 1] * db
    vy = jac[..., 1, 0] * da + jac[..., 1, 1] * db
    theta = np.arctan2(vy, vx)
    if np.asarray(x).ndim == 0:
        return float(x), float(y), wrap_angle(float(theta))
    return x, y, wrap_angle(theta)


def lift_pi_inverse(geom: CameraGeometry, x, y, theta):
    """Invert the lift Pi: planar (x, y, theta) to spherical (alpha, beta, phi).

    The position is inverted with :func:`pi_inverse`; phi then solves the
    linear system J_mod (cos phi, sin phi) ~ (cos theta, sin theta) where
    J_mod is the pi Jacobian with its beta column divided by cos(alpha).
    Since det J_mod > 0 on the chart, the proportionality constant is
    positive and phi = atan2 of the solution.
    """
    alpha, beta = pi_inverse(geom, x, y)
    alpha_arr = np.asarray(alpha, float)
    beta_arr = np.asarray(beta, float)
    theta_arr = np.asarray(theta, float)
    jac = pi_jacobian(geom, alpha_arr, beta_arr)
    j11 = jac[..., 0, 0]
    j12 = jac[..., 0, 1] / np.cos(alpha_arr)
    j21 = jac[..., 1, 0]
    j22 = jac[..., 1, 1] / np.cos(alpha_arr)
    det = j11 * j22 - j12 * j21
    ct, st = np.cos(theta_arr), np.sin(theta_arr)
    v1 = (j22 * ct - j12 * st) / det
    v2 = (-j21 * ct + j11 * st) / det
    phi = np.arctan2(v2, v1)
    if np.asarray(alpha, float).ndim == 0 and theta_arr.ndim == 0:
        return float(alpha), float(beta), wrap_angle(float(phi))
    return alpha, beta, wrap_angle(phi)


def pullback_cost(cost_m2: CostVolume, grid_w2: GridSpec, geom: CameraGeometry) -> CostVolume:
    """Pull a planar cost back to a spherical grid: C_w2(q) = C_m2(Pi(q)).

    The planar cost is sampled at Pi of every spherical node by trilinear
    interpolation with periodic wrap on the orientation axis.  Spherical
    nodes whose projection leaves the planar grid's spatial footprint are
    assigned cost 1.0 and recorded in the coverage mask.

    Returns a :class:`CostVolume` on ``grid_w2`` (strictly positive by
    construction) whose ``coverage`` mask is True where the projection
    landed inside the planar grid.
    """
    if cost_m2.grid.manifold != "m2" or grid_w2.manifold != "w2":
        raise ValueError("pullback_cost maps an m2 cost onto a w2 grid")
    aa, bb, pp = grid_w2.meshgrid()
    x, y, theta = lift_pi(geom, aa, bb, pp)
    points = np.stack([x, y, theta], axis=-1).reshape(-1, 3)
    values, inside = sample_volume(cost_m2.grid, cost_m2.values, points)
    values = np.where(inside, values, 1.0).reshape(grid_w2.shape)
    coverage = inside.reshape(grid_w2.shape)
    provenance = dict(cost_m2.provenance)
    provenance["pullback"] = "m2_to_w2"
    provenance["camera"] = {"a": geom.a, "c": geom.c}
    return CostVolume(grid=grid_w2, values=values, provenance=provenance, coverage=coverage)


def radial_extent(geom: CameraGeometry, half_angle: float) -> float:
    """Planar radius of the image of a centered spherical cap of given half-angle."""
    x, _ = pi(geom, half_angle, 0.0)
    return float(abs(x))


def radial_length_distortion(geom: CameraGeometry, half_angle: float, n_azimuth: int = 64,
                             n_quad: int = 512) -> float:
    """Worst relative length distortion of radial lines under the projection.

    For a fan of azimuths, the spherical radial segment of length
    ``half_angle`` through the chart center is projected to the plane and
    its arc length compared with the length predicted by the central
    scale of the projection.  Returns max |ratio - 1| over the fan.
    Exploratory diagnostic; nothing asserts a particular value.
    """
    s = np.linspace(0.0, half_angle, n_quad)
    center_scale = (geom.a + geom.c) / (geom.a + 1.0)
    worst = 0.0
    for chi in np.linspace(0.0, 2.0 * np.pi, n_azimuth, endpoint=False):
        nx = np.cos(s)
        ny = -np.sin(s) * np.sin(chi)
        nz = np.sin(s) * np.cos(chi)
        alpha = np.arcsin(np.clip(nz, -1.0, 1.0))
        beta = np.arctan2(-ny, nx)
        x, y = pi(geom, alpha, beta)
        seg = np.hypot(np.diff(x), np.diff(y)).sum()
        ratio = seg / (half_angle * center_scale)
        worst = max(worst, abs(ratio - 1.0))
    return worst
