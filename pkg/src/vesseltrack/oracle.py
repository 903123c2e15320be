"""Brute-force references: lattice Dijkstra and geometric probes.

These are deliberately simple, auditable implementations used to
cross-check the PDE solver and the projective lift.  Determinism
outranks speed; nothing here is a production path.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _sp_dijkstra

from .errors import BadConfig
from .grids import CostVolume, GridSpec
from .manifold import frame_m2, frame_w2
from .metric import MetricParams
from .projection import CameraGeometry, lift_pi

__all__ = [
    "LiftedGraph",
    "build_lifted_graph",
    "dijkstra_distance",
    "horizontality_probe",
]

_SNAP_TOL = 1e-9


@dataclass
class LiftedGraph:
    """Directed lattice graph discretizing the lifted metric (CSR form).

    Stencil (first-order by construction, hence the 5 % comparison
    tolerance wherever this graph is used as a reference):

    * eta > 0 (lateral motion priced, all directions finite): every
      gcd-reduced lattice offset with spatial Chebyshev radius <=
      ``spatial_radius`` and at most one orientation cell.  The
      orientation extent is capped because the frame rotates along an
      edge; longer orientation chords cannot be priced accurately by
      any pointwise rule.
    * eta = 0 (hard lateral constraint): signed combinations c1, c3 in
      {-1, 0, 1} of the admissible frame directions, scaled to one cell
      and snapped to the 26-neighborhood; the lateral component of the
      snapped displacement is projected out (it is pure snapping noise
      for an infeasible direction).

    Edge weight = mean endpoint cost x frame-metric length of the
    straight coordinate chord, integrated with a composite midpoint rule
    (``n_subdivisions`` segments) so that the lateral cost induced by
    frame rotation along the chord is captured.  Forward-gear edges
    whose chord points backward at the midpoint are dropped.
    """

    grid: GridSpec
    indptr: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    params: MetricParams
    spatial_radius: int

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.grid.shape))

    @property
    def n_edges(self) -> int:
        return len(self.targets)


def lattice_offsets(spatial_radius: int) -> np.ndarray:
    """gcd-reduced integer moves with |e1|,|e2| <= R and |e3| <= 1."""
    offs = []
    for a in range(-spatial_radius, spatial_radius + 1):
        for b in range(-spatial_radius, spatial_radius + 1):
            for c in (-1, 0, 1):
                if a == b == c == 0:
                    continue
                if gcd(gcd(abs(a), abs(b)), abs(c)) != 1:
                    continue
                offs.append((a, b, c))
    return np.array(offs, dtype=np.int64)


def _combo_moves(grid: GridSpec, frames: np.ndarray, params: MetricParams,
                 d: np.ndarray) -> list[np.ndarray]:
    """Snapped frame-combination moves for the eta = 0 stencil, as
    per-node integer offsets, one array per combination."""
    c1_range = (0, 1) if params.model == "forward" else (-1, 0, 1)
    moves = []
    for c1 in c1_range:
        for c3 in (-1, 0, 1):
            if c1 == 0 and c3 == 0:
                continue
            v = frames[:, :, 0] * c1 + frames[:, :, 2] * c3
            off = v / d
            scale = 1.0 / np.max(np.abs(off), axis=1)
            moves.append(np.rint(off * scale[:, None]).astype(np.int64))
    return moves


def _frames_at(grid: GridSpec, c1, c3):
    if grid.manifold == "m2":
        return frame_m2(c3)
    return frame_w2(c1, c3)


def build_lifted_graph(
    cost: CostVolume,
    params: MetricParams,
    *,
    spatial_radius: int = 3,
    n_subdivisions: int = 8,
) -> LiftedGraph:
    """Materialize the discrete lifted graph for a cost volume."""
    grid = cost.grid
    if params.manifold != grid.manifold:
        raise BadConfig("metric manifold does not match the grid")
    if spatial_radius < 1 or n_subdivisions < 1:
        raise BadConfig("spatial_radius and n_subdivisions must be >= 1")
    n1, n2, n3 = grid.shape
    d = np.asarray(grid.spacing)
    per = grid.periodic
    c1g, c2g, c3g = grid.meshgrid()
    N = n1 * n2 * n3
    idx = np.arange(N)
    ii, jj, kk = np.unravel_index(idx, grid.shape)
    nodes = np.stack([c1g.ravel(), c2g.ravel(), c3g.ravel()], axis=1)
    cost_flat = np.asarray(cost.values, dtype=float).ravel()

    if params.eta > 0.0:
        per_node_moves = [
            np.broadcast_to(e, (N, 3)) for e in lattice_offsets(spatial_radius)
        ]
    else:
        frames, _ = _frames_at(grid, nodes[:, 0], nodes[:, 2])
        per_node_moves = _combo_moves(grid, frames, params, d)

    src_all, dst_all, w_all = [], [], []
    for e in per_node_moves:
        ti = ii + e[:, 0]
        tj = jj + e[:, 1]
        tk = kk + e[:, 2]
        ok = np.any(e != 0, axis=1)
        if per[0]:
            ti = np.mod(ti, n1)
        else:
            ok &= (ti >= 0) & (ti < n1)
        if per[1]:
            tj = np.mod(tj, n2)
        else:
            ok &= (tj >= 0) & (tj < n2)
        if per[2]:
            tk = np.mod(tk, n3)
        else:
            ok &= (tk >= 0) & (tk < n3)
        if not ok.any():
            continue
        delta = e * d
        length = np.zeros(N)
        u1_mid = None
        for s in range(n_subdivisions):
            at = nodes + ((s + 0.5) / n_subdivisions) * delta
            if grid.manifold == "w2":
                # waypoints of edges that leave the grid (and are then
                # discarded) must not trip the chart-degeneracy guard
                lim = np.pi / 2.0 - 2e-6
                at[:, 0] = np.clip(at[:, 0], -lim, lim)
            _, cof = _frames_at(grid, at[:, 0], at[:, 2])
            u = np.einsum("nij,nj->ni", cof, delta)
            quad = (params.xi * u[:, 0]) ** 2 + u[:, 2] ** 2
            if params.eta > 0:
                quad = quad + (params.xi / params.eta * u[:, 1]) ** 2
            length += np.sqrt(quad) / n_subdivisions
            if s == n_subdivisions // 2:
                u1_mid = u[:, 0]
        if params.model == "forward":
            ok &= u1_mid >= -_SNAP_TOL
        ok &= length > 0
        tgt = np.ravel_multi_index(
            (np.clip(ti, 0, n1 - 1), np.clip(tj, 0, n2 - 1), np.clip(tk, 0, n3 - 1)),
            grid.shape,
        )
        w = 0.5 * (cost_flat + cost_flat[tgt]) * length
        src_all.append(idx[ok])
        dst_all.append(tgt[ok])
        w_all.append(w[ok])

    src = np.concatenate(src_all)
    dst = np.concatenate(dst_all)
    wgt = np.concatenate(w_all)
    # deduplicate parallel edges, keeping the cheapest (deterministic)
    order = np.lexsort((wgt, dst, src))
    src, dst, wgt = src[order], dst[order], wgt[order]
    keep = np.ones(len(src), dtype=bool)
    keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
    src, dst, wgt = src[keep], dst[keep], wgt[keep]

    counts = np.zeros(N + 1, dtype=np.int64)
    np.add.at(counts, src + 1, 1)
    indptr = np.cumsum(counts)
    return LiftedGraph(
        grid=grid, indptr=indptr, targets=dst, weights=wgt,
        params=params, spatial_radius=spatial_radius,
    )


def dijkstra_distance(graph: LiftedGraph, seed_index) -> np.ndarray:
    """Exact shortest-path distances from a seed node, as a grid-shaped
    array (np.inf where unreachable).  Deterministic for fixed input."""
    N = graph.n_nodes
    seed = int(np.ravel_multi_index(tuple(seed_index), graph.grid.shape))
    mat = csr_matrix(
        (graph.weights, graph.targets, graph.indptr), shape=(N, N)
    )
    dist = _sp_dijkstra(mat, directed=True, indices=seed)
    return dist.reshape(graph.grid.shape)


def _horizontal_velocity(q: np.ndarray, u1: np.ndarray, u3: np.ndarray) -> np.ndarray:
    """Coordinate velocity of the horizontal field u1*B1 + u3*B3 at q."""
    alpha, phi = q[:, 0], q[:, 2]
    ca = np.cos(alpha)
    ta = np.tan(alpha)
    cp = np.cos(phi)
    sp = np.sin(phi)
    v = np.empty_like(q)
    v[:, 0] = u1 * cp
    v[:, 1] = u1 * sp / ca
    v[:, 2] = u1 * ta * sp + u3
    return v


def horizontality_probe(
    geom: CameraGeometry,
    n_samples: int,
    *,
    arc_length: float = 1e-3,
    seed: int = 0,
    theta_offset: float = 0.0,
) -> float:
    """Max angle mismatch between projected motion and projected
    orientation over random horizontal spherical arcs.

    For each sample, a random in-chart point and a random horizontal
    direction (components (u1, u3) on the unit circle, |u1| >= 0.1 so
    the arc actually moves spatially) are integrated for ``arc_length``
    with two RK4 steps; the arc is mapped through the projective lift
    and the angle of the planar chord is compared with the lifted
    orientation theta at the midpoint.  ``theta_offset`` is added to
    theta to let tests verify the probe's sensitivity.  Returns 0.0 for
    ``n_samples`` = 0.
    """
    if n_samples <= 0:
        return 0.0
    rng = np.random.default_rng(seed)
    pts = np.empty((n_samples, 3))
    pts[:, 0] = rng.uniform(-1.1, 1.1, n_samples)  # alpha, inside chart
    pts[:, 1] = rng.uniform(-1.1, 1.1, n_samples)  # beta
    pts[:, 2] = rng.uniform(-np.pi, np.pi, n_samples)  # phi
    zeta = rng.uniform(0.0, 2 * np.pi, n_samples)
    while True:
        bad = np.abs(np.cos(zeta)) < 0.1
        if not bad.any():
            break
        zeta[bad] = rng.uniform(0.0, 2 * np.pi, int(bad.sum()))
    u1 = np.cos(zeta)
    u3 = np.sin(zeta)

    q = pts.copy()
    half = arc_length / 2.0
    for _ in range(2):
        k1 = _horizontal_velocity(q, u1, u3)
        k2 = _horizontal_velocity(q + 0.5 * half * k1, u1, u3)
        k3 = _horizontal_velocity(q + 0.5 * half * k2, u1, u3)
        k4 = _horizontal_velocity(q + half * k3, u1, u3)
        q = q + (half / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    mid = 0.5 * (pts + q)

    x0, y0, _ = lift_pi(geom, pts[:, 0], pts[:, 1], pts[:, 2])
    x1, y1, _ = lift_pi(geom, q[:, 0], q[:, 1], q[:, 2])
    _, _, th_mid = lift_pi(geom, mid[:, 0], mid[:, 1], mid[:, 2])
    chord = np.arctan2(y1 - y0, x1 - x0)
    # the chord follows the motion; flip where the direction is reversed
    flip = np.where(u1 < 0, np.pi, 0.0)
    err = np.angle(np.exp(1j * (chord - (th_mid + theta_offset) - flip)))
    return float(np.max(np.abs(err)))
