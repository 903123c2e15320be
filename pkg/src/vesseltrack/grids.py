"""Regular grids on the position-orientation spaces and cost volumes.

A grid is a box-shaped, axis-aligned lattice in chart coordinates:
(x, y, theta) on the planar space, (alpha, beta, phi) on the spherical
space.  The orientation axis is periodic and must tile the full circle;
the spatial axes are bounded (and, on the sphere, restricted to the open
chart |alpha| < pi/2).

Array layout is C-order with axes (axis1, axis2, orientation) throughout
the package and the on-disk format.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfig, SeedOutsideGrid
from .manifold import CHART_TOL

__all__ = ["GridSpec", "CostVolume", "uniform_cost", "sample_volume"]

_AXIS_NAMES = {"m2": ("x", "y", "theta"), "w2": ("alpha", "beta", "phi")}


@dataclass(frozen=True)
class GridSpec:
    """A uniform grid over a box in chart coordinates.

    Attributes:
        manifold: "m2" or "w2".
        shape: nodes per axis (n1, n2, n3), each >= 4.
        origin: coordinate of node (0, 0, 0).
        spacing: positive node spacing per axis.
        periodic: per-axis periodicity flags.  The orientation axis
            (axis 2) is periodic by default and must then satisfy
            n3 * d3 = 2 pi.
    """

    manifold: str
    shape: tuple[int, int, int]
    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]
    periodic: tuple[bool, bool, bool] = (False, False, True)

    def __post_init__(self):
        if self.manifold not in _AXIS_NAMES:
            raise BadConfig(f"unknown manifold {self.manifold!r}")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        object.__setattr__(self, "periodic", tuple(bool(v) for v in self.periodic))
        if len(self.shape) != 3 or any(n < 4 for n in self.shape):
            raise BadConfig("grids need at least 4 nodes per axis")
        if any(d <= 0.0 for d in self.spacing):
            raise BadConfig("grid spacing must be positive")
        for ax in range(3):
            if self.periodic[ax]:
                span = self.shape[ax] * self.spacing[ax]
                if abs(span - 2.0 * np.pi) > 1e-9:
                    raise BadConfig(
                        f"periodic axis {ax} must tile the full circle; "
                        f"got span {span!r}"
                    )
        if self.manifold == "w2":
            for ax in range(2):
                lo = self.origin[ax]
                hi = self.origin[ax] + (self.shape[ax] - 1) * self.spacing[ax]
                if ax == 0 and not (-np.pi / 2 + CHART_TOL < lo and hi < np.pi / 2 - CHART_TOL):
                    raise BadConfig("alpha range must stay inside the open chart")
                if ax == 1 and not (-np.pi < lo and hi < np.pi):
                    raise BadConfig("beta range must stay inside (-pi, pi)")

    # -- basic geometry ----------------------------------------------------

    @property
    def axis_names(self) -> tuple[str, str, str]:
        return _AXIS_NAMES[self.manifold]

    @property
    def ranges(self) -> list[tuple[float, float]]:
        """Inclusive (min, max) node coordinates per axis."""
        return [
            (self.origin[ax], self.origin[ax] + (self.shape[ax] - 1) * self.spacing[ax])
            for ax in range(3)
        ]

    def axis_coords(self, ax: int) -> np.ndarray:
        return self.origin[ax] + self.spacing[ax] * np.arange(self.shape[ax])

    def meshgrid(self):
        """Node coordinates as three arrays of shape ``self.shape``."""
        c1, c2, c3 = (self.axis_coords(ax) for ax in range(3))
        return np.meshgrid(c1, c2, c3, indexing="ij")

    def node_coords(self, index) -> np.ndarray:
        idx = np.asarray(index, float)
        return np.asarray(self.origin) + idx * np.asarray(self.spacing)

    def fractional_index(self, points) -> np.ndarray:
        """Map coordinates to (possibly fractional) index space.

        Periodic axes are wrapped into [0, n); non-periodic axes are
        returned as-is (callers decide how to treat out-of-range values).
        """
        pts = np.asarray(points, float)
        f = (pts - np.asarray(self.origin)) / np.asarray(self.spacing)
        for ax in range(3):
            if self.periodic[ax]:
                f[..., ax] = np.mod(f[..., ax], self.shape[ax])
        return f

    def nearest_node(self, point) -> tuple[tuple[int, int, int], float]:
        """Snap a coordinate triple to the nearest grid node.

        Returns the node index and the snap distance measured in units
        of grid cells (max over axes).  Raises SeedOutsideGrid when the
        point lies more than half a cell outside a non-periodic axis.
        """
        f = self.fractional_index(np.asarray(point, float))
        idx = []
        snap = 0.0
        for ax in range(3):
            fi = float(f[ax])
            if self.periodic[ax]:
                i = int(np.floor(fi + 0.5)) % self.shape[ax]
                delta = abs(fi - np.floor(fi + 0.5))
            else:
                if fi < -0.5 or fi > self.shape[ax] - 0.5:
                    name = self.axis_names[ax]
                    raise SeedOutsideGrid(
                        f"coordinate {name}={point[ax]!r} lies outside the grid"
                    )
                i = int(np.clip(round(fi), 0, self.shape[ax] - 1))
                delta = abs(fi - i)
            idx.append(i)
            snap = max(snap, delta)
        return (idx[0], idx[1], idx[2]), snap

    def contains(self, points) -> np.ndarray:
        """True where coordinates lie within the grid box (non-periodic axes)."""
        f = self.fractional_index(points)
        ok = np.ones(f.shape[:-1], dtype=bool)
        for ax in range(3):
            if not self.periodic[ax]:
                ok &= (f[..., ax] >= 0.0) & (f[..., ax] <= self.shape[ax] - 1)
        return ok


@dataclass
class CostVolume:
    """A strictly positive cost field sampled on a grid.

    Costs produced from vesselness live in (0, 1]; the container itself
    only enforces positivity so analytic test fields can pass through the
    same plumbing.  ``coverage`` (optional) marks nodes whose value came
    from actual data rather than the out-of-coverage fill.
    """

    grid: GridSpec
    values: np.ndarray
    provenance: dict = field(default_factory=dict)
    coverage: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise BadConfig("cost array shape does not match the grid")
        if not np.all(np.isfinite(self.values)) or not np.all(self.values > 0.0):
            raise BadConfig("cost values must be finite and strictly positive")
        if self.coverage is not None:
            self.coverage = np.asarray(self.coverage, dtype=bool)
            if self.coverage.shape != self.grid.shape:
                raise BadConfig("coverage mask shape does not match the grid")


def uniform_cost(grid: GridSpec, value: float = 1.0) -> CostVolume:
    """A constant cost volume (the data-free baseline C = 1)."""
    return CostVolume(
        grid=grid,
        values=np.full(grid.shape, float(value)),
        provenance={"source": "uniform", "value": float(value)},
    )


def sample_volume(grid: GridSpec, values: np.ndarray, points):
    """Trilinear interpolation of a node field at arbitrary coordinates.

    Periodic axes wrap; points outside a non-periodic axis are flagged
    rather than extrapolated.

    Parameters
    ----------
    grid : GridSpec
    values : ndarray of shape ``grid.shape``
    points : ndarray (..., 3) of coordinates

    Returns
    -------
    sampled : ndarray (...,)
        Interpolated values (0 where outside).
    inside : ndarray (...,) of bool
        False where a non-periodic axis was left.
    """
    pts = np.asarray(points, float)
    f = grid.fractional_index(pts)
    inside = np.ones(f.shape[:-1], dtype=bool)
    i0 = np.empty(f.shape, dtype=np.int64)
    w = np.empty_like(f)
    for ax in range(3):
        n = grid.shape[ax]
        fa = f[..., ax]
        if grid.periodic[ax]:
            base = np.floor(fa).astype(np.int64)
            w[..., ax] = fa - base
            i0[..., ax] = np.mod(base, n)
        else:
            inside &= (fa >= 0.0) & (fa <= n - 1)
            fa = np.clip(fa, 0.0, n - 1)
            base = np.minimum(np.floor(fa).astype(np.int64), n - 2)
            w[..., ax] = fa - base
            i0[..., ax] = base
    out = np.zeros(f.shape[:-1], dtype=float)
    for da in (0, 1):
        ia = (i0[..., 0] + da) % grid.shape[0] if grid.periodic[0] else np.minimum(i0[..., 0] + da, grid.shape[0] - 1)
        wa = w[..., 0] if da else 1.0 - w[..., 0]
        for db in (0, 1):
            ib = (i0[..., 1] + db) % grid.shape[1] if grid.periodic[1] else np.minimum(i0[..., 1] + db, grid.shape[1] - 1)
            wb = w[..., 1] if db else 1.0 - w[..., 1]
            for dc in (0, 1):
                ic = (i0[..., 2] + dc) % grid.shape[2] if grid.periodic[2] else np.minimum(i0[..., 2] + dc, grid.shape[2] - 1)
                wc = w[..., 2] if dc else 1.0 - w[..., 2]
                out += values[ia, ib, ic] * wa * wb * wc
    return np.where(inside, out, 0.0), inside
