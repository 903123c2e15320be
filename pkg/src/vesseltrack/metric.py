"""Sub-Riemannian and forward-gear Finsler metrics and their duals.

Both models are data-driven: a scalar cost C in (0, 1] multiplies a
left-invariant norm built from the frame components (u1, u2, u3) of a
tangent vector (u1 along the orientation, u2 lateral, u3 angular):

* sub-Riemannian (model "sr"):

      F = C * sqrt(xi^2 u1^2 + u3^2 + (xi/eta)^2 u2^2),

  with the lateral term dropped and u2 != 0 forbidden (F = +inf) in the
  strict case eta = 0.

* forward gear (model "forward"): same norm, but additionally F = +inf
  whenever u1 < 0.  Geodesics of this asymmetric metric cannot reverse,
  which is what removes cusps from tracked vessels.

The convex duals, acting on the frame components (l1, l2, l3) of a
covector, are

      F*_sr  = (1/C) * sqrt(l1^2/xi^2 + l3^2 + (eta/xi)^2 l2^2),
      F*_fwd = same with l1^2 replaced by max(l1, 0)^2,

and the dual gradient d F*/d(covector) is the tangent vector along which
the eikonal equation's characteristics flow.  Tests pin the duals against
a brute-force Legendre transform and the gradient against the Euler
relation <cov, grad> = F*(cov).

xi is the stiffness: the cost of moving forward relative to turning.
eta > 0 is a relaxation used only to compare against the graph oracle;
production runs use eta = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, ZeroCovector
from .manifold import frame_m2, frame_w2

__all__ = ["MetricParams", "finsler", "dual_finsler", "grad_dual_finsler"]

_MODELS = ("sr", "forward")
_MANIFOLDS = ("m2", "w2")

#: Relative tolerance below which a frame component counts as zero.
_COMPONENT_TOL = 1e-12


@dataclass(frozen=True)
class MetricParams:
    """Metric configuration: manifold, model, stiffness and relaxation.

    Attributes:
        manifold: "m2" or "w2".
        model: "sr" (sub-Riemannian) or "forward" (forward gear).
        xi: stiffness parameter, > 0.
        eta: lateral relaxation in [0, 1]; 0 means strictly horizontal.
    """

    manifold: str
    model: str
    xi: float = 1.0
    eta: float = 0.0

    def __post_init__(self):
        if self.manifold not in _MANIFOLDS:
            raise BadConfig(f"unknown manifold {self.manifold!r}")
        if self.model not in _MODELS:
            raise BadConfig(f"unknown model {self.model!r}")
        if not (self.xi > 0.0 and math.isfinite(self.xi)):
            raise BadConfig("xi must be positive and finite")
        if not (0.0 <= self.eta <= 1.0):
            raise BadConfig("eta must lie in [0, 1]")


def _frame_at(params: MetricParams, point):
    c1, c2, c3 = (float(v) for v in point)
    if params.manifold == "m2":
        return frame_m2(c3)
    return frame_w2(c1, c3)


def finsler(params: MetricParams, point, v, cost: float = 1.0) -> float:
    """Evaluate the primal metric F(point, v) for a single tangent vector.

    Args:
        params: metric configuration.
        point: coordinate triple; only the frame-relevant components are
            used (theta on m2; alpha, phi on w2).
        v: tangent vector in coordinate components.
        cost: local cost C(point) > 0.

    Returns:
        The metric value, possibly float('inf') for inadmissible
        directions (lateral motion at eta = 0; reversing in the forward
        model).
    """
    if cost <= 0.0:
        raise BadConfig("cost must be strictly positive")
    _, coframe = _frame_at(params, point)
    u = coframe @ np.asarray(v, dtype=float)
    scale = np.abs(u).max()
    if scale == 0.0:
        return 0.0
    tol = _COMPONENT_TOL * scale
    if params.model == "forward" and u[0] < -tol:
        return float("inf")
    quad = params.xi**2 * u[0] ** 2 + u[2] ** 2
    if params.eta > 0.0:
        quad += (params.xi / params.eta) ** 2 * u[1] ** 2
    elif abs(u[1]) > tol:
        return float("inf")
    return float(cost * np.sqrt(quad))


def _dual_components(params: MetricParams, point, cov):
    frame, _ = _frame_at(params, point)
    lam = frame.T @ np.asarray(cov, dtype=float)
    g1 = lam[0]
    if params.model == "forward":
        g1 = max(g1, 0.0)
    return frame, lam, g1


def dual_finsler(params: MetricParams, point, cov, cost: float = 1.0) -> float:
    """Evaluate the dual metric F*(point, cov) for a single covector."""
    if cost <= 0.0:
        raise BadConfig("cost must be strictly positive")
    _, lam, g1 = _dual_components(params, point, cov)
    quad = g1**2 / params.xi**2 + lam[2] ** 2
    quad += (params.eta / params.xi) ** 2 * lam[1] ** 2
    return float(np.sqrt(quad) / cost)


def grad_dual_finsler(params: MetricParams, point, cov, cost: float = 1.0) -> np.ndarray:
    """Gradient of the dual metric with respect to the covector.

    The result is a tangent vector in coordinate components; it satisfies
    the Euler relation <cov, grad> = F*(cov) and F(grad) = 1 wherever
    F* > 0, and is the characteristic direction used by backtracking.

    Raises:
        ZeroCovector: if F*(cov) vanishes (no descent direction).
    """
    if cost <= 0.0:
        raise BadConfig("cost must be strictly positive")
    frame, lam, g1 = _dual_components(params, point, cov)
    value = dual_finsler(params, point, cov, cost)
    if value <= 0.0 or not math.isfinite(value):
        raise ZeroCovector("dual metric vanishes; gradient undefined")
    dlam = np.array(
        [
            g1 / params.xi**2,
            (params.eta / params.xi) ** 2 * lam[1],
            lam[2],
        ]
    ) / (cost**2 * value)
    return frame @ dlam
