"""Numba kernels for the eikonal sweep, upwind gradients and tracking.

Everything here is an implementation detail of :mod:`vesseltrack.eikonal`
and :mod:`vesseltrack.tracking`.  The kernels operate on plain arrays and
scalars so they can be compiled once and cached; the public modules wrap
them with the domain types.

Conventions shared with the rest of the package:

* grids are C-ordered (axis1, axis2, orientation); axes 0 and 1 are
  bounded, axis 2 may be periodic;
* manifold id 0 = planar (frame depends on theta = axis-2 coordinate),
  manifold id 1 = spherical (frame depends on alpha = axis-0 and
  phi = axis-2 coordinates);
* model id 0 = sub-Riemannian, 1 = forward gear;
* unreached nodes carry the large finite ``SENTINEL`` (morphological
  delta initialization); values >= ``BIG`` are reported as "not reached".

The sentinel deliberately participates in the upwind differences as an
ordinary (huge) value: differences inside an unreached region are 0, and
at the front the huge one-sided slope drives a fast monotone descent, so
information flows outward from the seed without any special casing (and
without the NaN an ``inf`` sentinel would produce).  As long as the
pseudo-time step respects the stability bound, the update is monotone in
every input value, so the descent from above can never overshoot the
fixed point.  Only samples falling outside the bounded axes are
discarded.

Each node's update in a sweep depends only on the previous iterate, so
the parallel and sequential variants are bit-identical by construction.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

SENTINEL = 1.0e10
BIG = 1.0e9


@njit(inline="always")
def _tri_sample(W, n1, n2, n3, per3, f1, f2, f3):
    """Trilinear sample of W at fractional indices; (value, ok).

    ok is False only outside the bounded axes; sentinel values
    participate as ordinary large numbers (see module docstring).
    """
    if f1 < 0.0 or f1 > n1 - 1.0:
        return 0.0, False
    if f2 < 0.0 or f2 > n2 - 1.0:
        return 0.0, False
    b1 = int(math.floor(f1))
    if b1 > n1 - 2:
        b1 = n1 - 2
    w1 = f1 - b1
    b2 = int(math.floor(f2))
    if b2 > n2 - 2:
        b2 = n2 - 2
    w2 = f2 - b2
    if per3:
        fb = math.floor(f3)
        w3 = f3 - fb
        b3 = int(fb) % n3
        c3 = (b3 + 1) % n3
    else:
        if f3 < 0.0 or f3 > n3 - 1.0:
            return 0.0, False
        b3 = int(math.floor(f3))
        if b3 > n3 - 2:
            b3 = n3 - 2
        w3 = f3 - b3
        c3 = b3 + 1
    u1 = 1.0 - w1
    u2 = 1.0 - w2
    u3 = 1.0 - w3
    val = (
        u1 * (u2 * (u3 * W[b1, b2, b3] + w3 * W[b1, b2, c3])
              + w2 * (u3 * W[b1, b2 + 1, b3] + w3 * W[b1, b2 + 1, c3]))
        + w1 * (u2 * (u3 * W[b1 + 1, b2, b3] + w3 * W[b1 + 1, b2, c3])
                + w2 * (u3 * W[b1 + 1, b2 + 1, b3] + w3 * W[b1 + 1, b2 + 1, c3]))
    )
    return val, True


@njit(inline="always")
def _frame_columns(manifold, c1, c3):
    """The three frame columns at a node, in coordinate components."""
    if manifold == 0:
        ct = math.cos(c3)
        st = math.sin(c3)
        return ct, st, 0.0, -st, ct, 0.0, 0.0, 0.0, 1.0
    ca = math.cos(c1)
    sa = math.sin(c1)
    ta = sa / ca
    cp = math.cos(c3)
    sp = math.sin(c3)
    return (
        cp, sp / ca, ta * sp,
        -sp, cp / ca, ta * cp,
        0.0, 0.0, 1.0,
    )


@njit(inline="always")
def _upwind_direction(W, n1, n2, n3, per3, i, j, k, w0, a1, a2, a3,
                      d1, d2, d3, weight, positive_part):
    """Upwind covector component along one frame direction.

    Chooses, among the valid one-sided differences, the candidate that
    maximizes the (weighted, possibly one-sided) Hamiltonian term.
    """
    m = abs(a1) / d1
    t = abs(a2) / d2
    if t > m:
        m = t
    t = abs(a3) / d3
    if t > m:
        m = t
    h = 1.0 / m
    g1 = h * a1 / d1
    g2 = h * a2 / d2
    g3 = h * a3 / d3
    vp, okp = _tri_sample(W, n1, n2, n3, per3, i + g1, j + g2, k + g3)
    vm, okm = _tri_sample(W, n1, n2, n3, per3, i - g1, j - g2, k - g3)
    lam = 0.0
    best = 0.0
    if okm:
        dm = (w0 - vm) / h
        if dm > 0.0:
            s = weight * dm * dm
            if s > best:
                best = s
                lam = dm
    if okp:
        dp = (vp - w0) / h
        if dp < 0.0 and not positive_part:
            s = weight * dp * dp
            if s > best:
                best = s
                lam = dp
    return lam


@njit(inline="always")
def _upwind_node(W, n1, n2, n3, per3, o1, o3, d1, d2, d3,
                 manifold, model, xi, eta, i, j, k):
    """All three upwind covector components at one node."""
    w0 = W[i, j, k]
    c1 = o1 + i * d1
    c3 = o3 + k * d3
    a11, a12, a13, a21, a22, a23, a31, a32, a33 = _frame_columns(manifold, c1, c3)
    w_fwd = 1.0 / (xi * xi)
    lam1 = _upwind_direction(W, n1, n2, n3, per3, i, j, k, w0,
                             a11, a12, a13, d1, d2, d3, w_fwd, model == 1)
    if eta > 0.0:
        w_lat = (eta / xi) ** 2
        lam2 = _upwind_direction(W, n1, n2, n3, per3, i, j, k, w0,
                                 a21, a22, a23, d1, d2, d3, w_lat, False)
    else:
        lam2 = 0.0
    lam3 = _upwind_direction(W, n1, n2, n3, per3, i, j, k, w0,
                             a31, a32, a33, d1, d2, d3, 1.0, False)
    return lam1, lam2, lam3


@njit(inline="always")
def _dual_value(lam1, lam2, lam3, model, xi, eta, c):
    g1 = lam1
    if model == 1 and g1 < 0.0:
        g1 = 0.0
    q = (g1 / xi) ** 2 + lam3 * lam3
    if eta > 0.0:
        le = eta / xi * lam2
        q += le * le
    return math.sqrt(q) / c


@njit(cache=True)
def sweep_seq(W_in, W_out, cost, n1, n2, n3, per3, o1, o3, d1, d2, d3,
              manifold, model, xi, eta, eps):
    """One synchronous (Jacobi) relaxation sweep, sequential.

    ``eps`` is a per-node step field (a uniform field reproduces the
    scalar-step scheme exactly)."""
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                w0 = W_in[i, j, k]
                lam1, lam2, lam3 = _upwind_node(
                    W_in, n1, n2, n3, per3, o1, o3, d1, d2, d3,
                    manifold, model, xi, eta, i, j, k)
                fstar = _dual_value(lam1, lam2, lam3, model, xi, eta, cost[i, j, k])
                cand = w0 + eps[i, j, k] * (1.0 - fstar)
                W_out[i, j, k] = cand if cand < w0 else w0


@njit(cache=True, parallel=True)
def sweep_par(W_in, W_out, cost, n1, n2, n3, per3, o1, o3, d1, d2, d3,
              manifold, model, xi, eta, eps):
    """One synchronous (Jacobi) relaxation sweep, node-parallel.

    Node updates read only ``W_in``, so the result is bit-identical to
    :func:`sweep_seq` regardless of scheduling.
    """
    for i in prange(n1):
        for j in range(n2):
            for k in range(n3):
                w0 = W_in[i, j, k]
                lam1, lam2, lam3 = _upwind_node(
                    W_in, n1, n2, n3, per3, o1, o3, d1, d2, d3,
                    manifold, model, xi, eta, i, j, k)
                fstar = _dual_value(lam1, lam2, lam3, model, xi, eta, cost[i, j, k])
                cand = w0 + eps[i, j, k] * (1.0 - fstar)
                W_out[i, j, k] = cand if cand < w0 else w0


@njit(cache=True)
def lambda_fields(W, n1, n2, n3, per3, o1, o3, d1, d2, d3,
                  manifold, model, xi, eta, lam1, lam2, lam3):
    """Upwind covector components at every node (fills lam1..3)."""
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                l1, l2, l3 = _upwind_node(
                    W, n1, n2, n3, per3, o1, o3, d1, d2, d3,
                    manifold, model, xi, eta, i, j, k)
                lam1[i, j, k] = l1
                lam2[i, j, k] = l2
                lam3[i, j, k] = l3


@njit(cache=True)
def residual_field(W, cost, n1, n2, n3, per3, o1, o3, d1, d2, d3,
                   manifold, model, xi, eta, out):
    """|F*(dW) - 1| at every node (residual of the eikonal equation)."""
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                lam1, lam2, lam3 = _upwind_node(
                    W, n1, n2, n3, per3, o1, o3, d1, d2, d3,
                    manifold, model, xi, eta, i, j, k)
                fstar = _dual_value(lam1, lam2, lam3, model, xi, eta, cost[i, j, k])
                out[i, j, k] = abs(fstar - 1.0)


@njit(inline="always")
def _tri_plain(V, n1, n2, n3, per3, f1, f2, f3):
    """Trilinear sample without sentinel handling; clamps bounded axes."""
    if f1 < 0.0:
        f1 = 0.0
    elif f1 > n1 - 1.0:
        f1 = n1 - 1.0
    if f2 < 0.0:
        f2 = 0.0
    elif f2 > n2 - 1.0:
        f2 = n2 - 1.0
    b1 = int(math.floor(f1))
    if b1 > n1 - 2:
        b1 = n1 - 2
    w1 = f1 - b1
    b2 = int(math.floor(f2))
    if b2 > n2 - 2:
        b2 = n2 - 2
    w2 = f2 - b2
    if per3:
        fb = math.floor(f3)
        w3 = f3 - fb
        b3 = int(fb) % n3
        c3 = (b3 + 1) % n3
    else:
        if f3 < 0.0:
            f3 = 0.0
        elif f3 > n3 - 1.0:
            f3 = n3 - 1.0
        b3 = int(math.floor(f3))
        if b3 > n3 - 2:
            b3 = n3 - 2
        w3 = f3 - b3
        c3 = b3 + 1
    u1 = 1.0 - w1
    u2 = 1.0 - w2
    u3 = 1.0 - w3
    return (
        u1 * (u2 * (u3 * V[b1, b2, b3] + w3 * V[b1, b2, c3])
              + w2 * (u3 * V[b1, b2 + 1, b3] + w3 * V[b1, b2 + 1, c3]))
        + w1 * (u2 * (u3 * V[b1 + 1, b2, b3] + w3 * V[b1 + 1, b2, c3])
                + w2 * (u3 * V[b1 + 1, b2 + 1, b3] + w3 * V[b1 + 1, b2 + 1, c3]))
    )


@njit(cache=True)
def track_velocity(p1, p2, p3, lam1, lam2, lam3, cost,
                   n1, n2, n3, per3, o1, o2, o3, d1, d2, d3,
                   manifold, model, xi, eta, scale):
    """Backtracking velocity -scale * dF*/dcov at a continuous point.

    The upwind covector fields and the cost are interpolated trilinearly;
    the dual gradient is evaluated in the local frame and returned in
    coordinate components together with the dual value (0 signals a
    stall).
    """
    f1 = (p1 - o1) / d1
    f2 = (p2 - o2) / d2
    f3 = (p3 - o3) / d3
    l1 = _tri_plain(lam1, n1, n2, n3, per3, f1, f2, f3)
    if eta > 0.0:
        l2 = _tri_plain(lam2, n1, n2, n3, per3, f1, f2, f3)
    else:
        l2 = 0.0
    l3 = _tri_plain(lam3, n1, n2, n3, per3, f1, f2, f3)
    c = _tri_plain(cost, n1, n2, n3, per3, f1, f2, f3)
    fstar = _dual_value(l1, l2, l3, model, xi, eta, c)
    if fstar <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    g1 = l1
    if model == 1 and g1 < 0.0:
        g1 = 0.0
    den = c * c * fstar
    dl1 = g1 / (xi * xi) / den
    dl2 = (eta / xi) ** 2 * l2 / den
    dl3 = l3 / den
    a11, a12, a13, a21, a22, a23, a31, a32, a33 = _frame_columns(manifold, p1, p3)
    v1 = a11 * dl1 + a21 * dl2 + a31 * dl3
    v2 = a12 * dl1 + a22 * dl2 + a32 * dl3
    v3 = a13 * dl1 + a23 * dl2 + a33 * dl3
    return -scale * v1, -scale * v2, -scale * v3, fstar
