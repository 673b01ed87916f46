"""Uniform states of the scaled PDE, their manifold assignment and stability flags."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fast import window
from .params import ScaledParams


@dataclass(frozen=True)
class BackgroundState:
    b: float
    w: float
    manifold: str  # "M0", "Mminus", "Mplus"
    local_kind: str  # "saddle", "center", "degenerate"
    pde_stable_flag: str  # "stable", "unstable", "conditional", "not_assessed"


def nullcline_residuals(b: float, w: float, s: ScaledParams) -> tuple[float, float]:
    rb = (s.a * w - 1.0) * b + w * b * b - w * b ** 3
    rw = s.psi - (s.phi + s.omega * b + s.theta * b * b) * w
    return rb, rw


def _slow_slope(b: float, w: float, branch: float, s: ScaledParams) -> float:
    """d/dw of -psi + (phi + omega b + theta b^2) w along b = 1/2 + branch*W(w)."""
    base = s.phi + s.omega * b + s.theta * b * b
    if branch == 0:
        return base
    W = math.sqrt(max(s.a + 0.25 - 1.0 / w, 0.0))
    if W == 0:
        return math.inf
    db = branch / (2.0 * w * w * W)
    return base + w * (s.omega + 2.0 * s.theta * b) * db


def _kind(slope: float) -> str:
    if slope > 0:
        return "saddle"
    if slope < 0:
        return "center"
    return "degenerate"


def vegetated_roots(s: ScaledParams) -> list[tuple[float, float]]:
    """Closed-form (b, w) pairs with b, w > 0."""
    qa = s.theta + s.psi
    qb = s.omega - s.psi
    qc = s.phi - s.a * s.psi
    if qa == 0:
        bs = [-qc / qb] if qb != 0 else []
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0:
            bs = []
        else:
            r = math.sqrt(disc)
            q = -0.5 * (qb + math.copysign(r, qb)) if qb != 0 else 0.5 * r
            bs = sorted({q / qa, qc / q} if q != 0 else {0.0})
    out = []
    for b in bs:
        den = s.a + b - b * b
        if b > 0 and den > 0:
            out.append((b, 1.0 / den))
    return out


def full_equilibria(s: ScaledParams) -> list[BackgroundState]:
    w0 = s.psi / s.phi
    states = [BackgroundState(0.0, w0, "M0", _kind(s.phi), "not_assessed")]
    lo, hi = window(s.a)
    for b, w in vegetated_roots(s):
        branch = 1.0 if b > 0.5 else -1.0
        manifold = "Mplus" if branch > 0 else "Mminus"
        slope = _slow_slope(b, w, branch, s)
        states.append(BackgroundState(b, w, manifold, _kind(slope), "not_assessed"))
    return [BackgroundState(x.b, x.w, x.manifold, x.local_kind, pde_flags(x, s)) for x in states]


def pde_flags(bs: BackgroundState, s: ScaledParams) -> str:
    if bs.manifold == "M0":
        return "stable" if s.psi / s.phi < (1.0 / s.a if s.a > 0 else math.inf) else "unstable"
    if bs.manifold == "Mminus":
        return "unstable"
    if bs.local_kind == "center":
        return "unstable"
    if bs.local_kind == "saddle":
        return "conditional"
    return "not_assessed"


def jacobian(b: float, w: float, s: ScaledParams) -> np.ndarray:
    fB = (s.a * w - 1.0) + 2.0 * w * b - 3.0 * w * b * b
    fW = s.a * b + b * b - b ** 3
    gB = -(s.omega + 2.0 * s.theta * b) * w
    gW = -(s.phi + s.omega * b + s.theta * b * b)
    return np.array([[fB, fW], [gB, gW]])


@dataclass(frozen=True)
class DispersionCurve:
    k: np.ndarray
    growth: np.ndarray
    max_growth: float
    k_critical: float


def dispersion_scan(bs: BackgroundState, s: ScaledParams, k_grid) -> DispersionCurve:
    k = np.asarray(k_grid, dtype=float)
    J = jacobian(bs.b, bs.w, s)
    g = np.empty_like(k)
    for i, kk in enumerate(k):
        M = J - np.diag([kk * kk, kk * kk / s.eps2])
        g[i] = np.max(np.linalg.eigvals(M).real)
    i = int(np.argmax(g))
    return DispersionCurve(k, g, float(g[i]), float(k[i]))
