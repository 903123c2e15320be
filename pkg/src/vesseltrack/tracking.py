"""Geodesic extraction on distance maps: backtracking, lengths, cusps,
and mapping tracks between the spherical and planar manifolds.

A geodesic from a tip point down to the seed of a distance map ``W``
solves

    gamma'(t) = -W(tip) * grad_dual F*(gamma(t), dW(gamma(t))),   t in [0, 1]

so that W decreases linearly in t along the track.  The covector ``dW``
is taken from the solver's upwind frame differences, interpolated
trilinearly between nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import BIG
from .errors import BadConfig, OutOfRange
from .eikonal import DistanceMap, upwind_frame_derivatives
from .grids import CostVolume, GridSpec, sample_volume
from .manifold import frame_m2, frame_w2, wrap_angle
from .metric import MetricParams
from .projection import CameraGeometry, lift_pi, lift_pi_inverse

__all__ = [
    "GeodesicTrack",
    "backtrack",
    "finsler_length",
    "detect_cusps",
    "map_track",
]


@dataclass
class GeodesicTrack:
    """An ordered geodesic track with per-sample tangent data.

    ``points[0]`` is the tip the track was started from and
    ``points[-1]`` the seed node (within snap tolerance) when
    ``status == "ok"``.  The track itself runs tip -> seed; ``u`` holds
    the frame components (u1, u2, u3) of the tangent in the seed -> tip
    (vessel-growth) orientation, so forward-gear tracks have u1 >= 0.
    ``t`` is the arc parameter normalized to [0, 1] and ``w`` the
    distance-map value at each sample (NaN where unknown, e.g. after
    mapping to the other manifold).
    """

    manifold: str
    points: np.ndarray
    u: np.ndarray
    t: np.ndarray
    w: np.ndarray
    status: str
    finsler_length: float | None = None
    cusp_locations: list[int] = field(default_factory=list)
    chart_ok: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        n = len(self.points)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise BadConfig("track points must have shape (n, 3)")
        if self.u.shape != (n, 3) or self.t.shape != (n,) or self.w.shape != (n,):
            raise BadConfig("track arrays must share the same sample count")

    def __len__(self) -> int:
        return len(self.points)


def _coframe_apply(manifold: str, points: np.ndarray, vel: np.ndarray) -> np.ndarray:
    """Frame components of coordinate velocities at track samples."""
    if manifold == "m2":
        _, coframe = frame_m2(points[:, 2])
    else:
        _, coframe = frame_w2(points[:, 0], points[:, 2])
    return np.einsum("nij,nj->ni", coframe, vel)


def _point_coords(point) -> np.ndarray:
    if hasattr(point, "as_array"):
        return np.asarray(point.as_array(), dtype=float)
    arr = np.asarray(point, dtype=float)
    if arr.shape != (3,):
        raise BadConfig(f"a point must have 3 coordinates, got shape {arr.shape}")
    return arr


def _cells_to_seed(grid: GridSpec, p: np.ndarray, seed: np.ndarray) -> float:
    """Chebyshev distance to the seed in units of grid cells (theta/phi
    wraps)."""
    d = p - seed
    worst = 0.0
    for j in range(3):
        dj = d[j]
        if grid.periodic[j]:
            dj = wrap_angle(dj)
        worst = max(worst, abs(dj) / grid.spacing[j])
    return worst


def backtrack(
    W: DistanceMap,
    cost: CostVolume,
    tip,
    params: MetricParams,
    *,
    h_t: float = 0.5,
    max_steps: int = 10000,
    capture_radius: float = 2.0,
) -> GeodesicTrack:
    """Integrate the backtracking ODE from ``tip`` down to the seed.

    Fourth-order Runge-Kutta with a step chosen so each move spans about
    ``h_t`` grid cells; terminates when within ``capture_radius`` cells
    of the seed node (the final approach is a straight segment to the
    seed, where the interpolated gradient is unreliable) or after
    ``max_steps``.  Status is ``"ok"``, ``"stalled"`` (vanishing
    gradient away from the seed; partial track returned) or
    ``"max_steps"``.
    """
    grid = W.grid
    if cost.grid is not grid and cost.grid.shape != grid.shape:
        raise BadConfig("cost and distance map live on different grids")
    if params.manifold != grid.manifold:
        raise BadConfig("metric manifold does not match the grid")
    if h_t <= 0 or capture_radius <= 0 or max_steps < 1:
        raise BadConfig("h_t, capture_radius and max_steps must be positive")

    p = _point_coords(tip)
    w_tip_arr, inside = sample_volume(grid, W.values, p[None, :])
    if not inside[0] or w_tip_arr[0] >= BIG:
        raise OutOfRange(
            f"distance map is not finite at the tip {tuple(p)}; "
            "the tip is outside the reached set"
        )
    w_tip = float(w_tip_arr[0])
    seed = W.seed_point

    lam1, lam2, lam3 = upwind_frame_derivatives(W.values, grid, params)
    cost_arr = np.ascontiguousarray(cost.values, dtype=np.float64)
    n1, n2, n3 = grid.shape
    d1, d2, d3 = grid.spacing
    o1, o2, o3 = grid.origin
    per3 = bool(grid.periodic[2])
    mid = 0 if grid.manifold == "m2" else 1
    model_id = 0 if params.model == "sr" else 1
    spacing = np.asarray(grid.spacing)

    def velocity(q: np.ndarray) -> tuple[np.ndarray, float]:
        v1, v2, v3, fstar = _kernels.track_velocity(
            q[0], q[1], q[2], lam1, lam2, lam3, cost_arr,
            n1, n2, n3, per3, o1, o2, o3, d1, d2, d3,
            mid, model_id, params.xi, params.eta, w_tip,
        )
        return np.array([v1, v2, v3]), fstar

    pts = [p.copy()]
    vels = []
    ts = [0.0]
    status = "max_steps"
    t_now = 0.0

    if _cells_to_seed(grid, p, seed) <= capture_radius:
        # tip effectively at the seed: a single-sample, zero-length track
        track = GeodesicTrack(
            manifold=grid.manifold,
            points=np.array(pts),
            u=np.zeros((1, 3)),
            t=np.array([0.0]),
            w=np.array([w_tip]),
            status="ok",
            finsler_length=0.0,
        )
        return track

    dt = 0.0
    for _ in range(max_steps):
        v1, fs = velocity(p)
        vels.append(v1)  # velocity at the sample just recorded in pts
        vmax_cells = float(np.max(np.abs(v1) / spacing))
        if fs <= 0.0 or vmax_cells < 1e-12:
            status = "stalled"
            break
        dt = h_t / vmax_cells
        k1 = v1
        k2, _ = velocity(p + 0.5 * dt * k1)
        k3, _ = velocity(p + 0.5 * dt * k2)
        k4, _ = velocity(p + dt * k3)
        step = (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        p = p + step
        if per3:
            p[2] = o3 + np.mod(p[2] - o3, n3 * d3)
        t_now += dt
        pts.append(p.copy())
        ts.append(t_now)
        if _cells_to_seed(grid, p, seed) <= capture_radius:
            status = "ok"
            break

    if len(vels) < len(pts):  # loop ended right after recording a sample
        vels.append(velocity(p)[0])
    if status == "ok":
        # straight final segment onto the seed node; its duration is
        # scaled from the last step (which spanned h_t cells in dt)
        remaining = _cells_to_seed(grid, p, seed)
        extra = dt * remaining / h_t if dt > 0 else 1e-12
        pts.append(seed.copy())
        ts.append(t_now + max(extra, 1e-12))
        vels.append(vels[-1])

    points = np.array(pts)
    t_raw = np.array(ts)
    vel_arr = np.array(vels)
    t_final = t_raw[-1] if t_raw[-1] > 0 else 1.0
    t_norm = t_raw / t_final
    # frame components w.r.t. the normalized parameter, re-oriented to
    # the seed -> tip direction (the ODE integrates tip -> seed)
    u = _coframe_apply(grid.manifold, points, vel_arr * (-t_final))

    w_vals, _ = sample_volume(grid, W.values, points)
    w_vals[0] = w_tip
    if status == "ok":
        w_vals[-1] = 0.0

    track = GeodesicTrack(
        manifold=grid.manifold,
        points=points,
        u=u,
        t=t_norm,
        w=w_vals,
        status=status,
    )
    track.finsler_length = finsler_length(track, cost, params)
    track.cusp_locations = detect_cusps(track)
    return track


def finsler_length(track: GeodesicTrack, cost: CostVolume, params: MetricParams) -> float:
    """Composite-trapezoid Finsler length of a track.

    Tangents are central finite differences of the samples in t.  The
    sub-Riemannian integrand is used for both car models (forward-gear
    tracks have u1 >= 0, so the values agree); at eta = 0 the lateral
    component is excluded, since the continuum constraint makes it zero
    and only finite-difference noise would enter.
    """
    if params.manifold != track.manifold:
        raise BadConfig("metric manifold does not match the track")
    n = len(track)
    if n < 2:
        return 0.0
    pts = track.points.copy()
    if track.manifold in ("m2", "w2"):
        # unwrap the periodic coordinate so differences are geometric
        pts[:, 2] = np.concatenate(
            [[pts[0, 2]], pts[0, 2] + np.cumsum(wrap_angle(np.diff(pts[:, 2])))]
        )
    t = track.t
    vel = np.gradient(pts, t, axis=0)
    u = _coframe_apply(track.manifold, track.points, vel)
    c_vals, _ = sample_volume(cost.grid, np.asarray(cost.values, dtype=float), track.points)
    c_vals = np.where(c_vals > 0, c_vals, 1.0)
    quad = (params.xi * u[:, 0]) ** 2 + u[:, 2] ** 2
    if params.eta > 0:
        quad = quad + (params.xi / params.eta * u[:, 1]) ** 2
    integrand = c_vals * np.sqrt(quad)
    return float(np.trapezoid(integrand, t))


def detect_cusps(track: GeodesicTrack, noise_floor: float | None = None) -> list[int]:
    """Indices where u1 changes sign through zero.

    Only samples with |u1| above the noise floor participate (default:
    5 % of the track's peak tangent magnitude |u|, so that pure-rotation
    tracks, whose u1 is all noise, report none); the reported index is
    the first sample of the new sign.  Forward-gear tracks are expected
    to return [].
    """
    n = len(track)
    if n < 3:
        return []
    u1 = track.u[:, 0]
    if noise_floor is None:
        noise_floor = 0.05 * float(np.linalg.norm(track.u, axis=1).max())
    if noise_floor <= 0:
        return []
    cusps: list[int] = []
    prev_sign = 0
    for i in range(n):
        if abs(u1[i]) <= noise_floor:
            continue
        s = 1 if u1[i] > 0 else -1
        if prev_sign != 0 and s != prev_sign:
            cusps.append(i)
        prev_sign = s
    return cusps


def map_track(
    track: GeodesicTrack,
    geom: CameraGeometry,
    direction: str = "w2_to_m2",
) -> GeodesicTrack:
    """Map a track between the spherical and planar manifolds per sample.

    ``"w2_to_m2"`` applies the projective lift to every sample (the
    mapped spatial part, ``points[:, :2]``, is the planar rendering of
    the track); ``"m2_to_w2"`` applies its inverse.  Samples that leave
    the chart or the projection's range are flagged False in
    ``chart_ok`` (coordinates set to NaN), not dropped.  Tangent
    components are recomputed from finite differences of the mapped
    samples; the Finsler length is left unset (it belongs to the source
    metric).
    """
    n = len(track)
    if direction == "w2_to_m2":
        if track.manifold != "w2":
            raise BadConfig("direction w2_to_m2 requires a w2 track")
        out_manifold = "m2"
    elif direction == "m2_to_w2":
        if track.manifold != "m2":
            raise BadConfig("direction m2_to_w2 requires an m2 track")
        out_manifold = "w2"
    else:
        raise BadConfig(f"unknown direction {direction!r}")

    pts = np.full((n, 3), np.nan)
    ok = np.zeros(n, dtype=bool)
    for i in range(n):
        a, b, c = track.points[i]
        try:
            if direction == "w2_to_m2":
                x, y, th = lift_pi(geom, a, b, c)
                pts[i] = (x, y, th)
            else:
                al, be, ph = lift_pi_inverse(geom, a, b, c)
                pts[i] = (al, be, ph)
            ok[i] = True
        except Exception:
            ok[i] = False

    u = np.zeros((n, 3))
    if n >= 2 and ok.all():
        p_un = pts.copy()
        p_un[:, 2] = np.concatenate(
            [[pts[0, 2]], pts[0, 2] + np.cumsum(wrap_angle(np.diff(pts[:, 2])))]
        )
        # finite-difference tangents, re-oriented seed -> tip like backtrack
        vel = np.gradient(p_un, track.t, axis=0)
        u = -_coframe_apply(out_manifold, pts, vel)

    return GeodesicTrack(
        manifold=out_manifold,
        points=pts,
        u=u,
        t=track.t.copy(),
        w=np.full(n, np.nan),
        status=track.status,
        finsler_length=None,
        cusp_locations=list(track.cusp_locations),
        chart_ok=ok,
    )
