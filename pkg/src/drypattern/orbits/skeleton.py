"""Singular skeletons of stationary spots, gaps and periodic patterns (c = 0).

All jumps happen at the Maxwell level w* = 9/(2+9a).  Jump directions name the
change in biomass: 'up' goes from M0 to M+, 'down' from M+ to M0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ..errors import RegimeError
from ..fast import maxwell_level, window
from ..params import ScaledParams, SlowPlusCoeffs, derive_coeffs
from ..slow import F, LevelSet, _gl_integrate, homoclinic_inner_turn, potential, saddle_and_center


@dataclass(frozen=True)
class SlowSegment:
    manifold: str  # "M0" or "Mplus"
    H_level: float
    start: tuple[float, float]
    end: tuple[float, float]
    winding: int
    length: float  # X-length; inf for arcs from or to a critical point


@dataclass(frozen=True)
class Jump:
    direction: str  # "up" or "down"
    w_level: float
    q_level: float


@dataclass
class OrbitSkeleton:
    kind: str
    segments: list
    period: float | None = None
    info: dict = field(default_factory=dict)

    def slow_segments(self) -> list[SlowSegment]:
        return [x for x in self.segments if isinstance(x, SlowSegment)]

    def jumps(self) -> list[Jump]:
        return [x for x in self.segments if isinstance(x, Jump)]

    def closure_defect(self) -> float:
        """Largest (w, q) mismatch between consecutive pieces."""
        pts = []
        for x in self.segments:
            if isinstance(x, SlowSegment):
                pts.append((x.start, x.end))
            else:
                p = (x.w_level, x.q_level)
                pts.append((p, p))
        seq = pts + ([pts[0]] if self.kind == "periodic" else [])
        d = 0.0
        for (_, e), (st, _) in zip(seq[:-1], seq[1:]):
            d = max(d, math.hypot(e[0] - st[0], e[1] - st[1]))
        return d

    def reversed_mirror(self) -> "OrbitSkeleton":
        """Image under (X, q) -> (-X, -q)."""
        segs = []
        for x in reversed(self.segments):
            if isinstance(x, SlowSegment):
                segs.append(SlowSegment(x.manifold, x.H_level, (x.end[0], -x.end[1]), (x.start[0], -x.start[1]),
                                        x.winding, x.length))
            else:
                segs.append(Jump("down" if x.direction == "up" else "up", x.w_level, -x.q_level))
        return OrbitSkeleton(self.kind, segs, self.period, dict(self.info))


# ---------------------------------------------------------------- helpers


def _turning_point(ls: LevelSet, w_start: float, direction: float, co: SlowPlusCoeffs, what: str) -> float:
    """First root of R = q^2 along the level set when leaving w_start in ``direction``."""
    lo, hi = window(co.a)
    hi = hi if math.isfinite(hi) else 1e9
    edge = lo * (1 + 1e-9) if direction < 0 else hi * (1 - 1e-9)
    n = 400
    grid = w_start + (edge - w_start) * (np.linspace(0.0, 1.0, n + 1)[1:]) ** 2
    R = ls.R(grid)
    bad = np.nonzero(R <= 0)[0]
    if bad.size == 0:
        raise RegimeError(f"{what}: level set runs out of the M+ window without turning", "NO_TURN")
    i = bad[0]
    a = w_start if i == 0 else grid[i - 1]
    b = grid[i]
    f = lambda w: float(ls.R(np.array([w]))[0])
    wt = brentq(f, min(a, b), max(a, b), xtol=1e-14 * abs(b), rtol=1e-15, maxiter=500)
    if abs(float(F(wt, co))) < 1e-12:
        raise RegimeError(f"{what}: turning point coincides with a critical point", "DEGENERATE_TURN")
    return wt


def _half_time(ls: LevelSet, w_turn: float, w_end: float, n: int = 96) -> float:
    """X-length from the turning point to w_end: int dw/|q| with a t^2 substitution."""
    L = abs(w_end - w_turn)
    sgn = 1.0 if w_end > w_turn else -1.0

    def f(t):
        w = w_turn + sgn * t * t
        return 2.0 * t / np.sqrt(np.maximum(ls.R(w), 1e-300))

    return _gl_integrate(f, 0.0, math.sqrt(L), n)


def _closed_period(ls: LevelSet, w_a: float, w_b: float, n: int = 96) -> float:
    mid = 0.5 * (w_a + w_b)
    return 2.0 * (_half_time(ls, w_a, mid, n) + _half_time(ls, w_b, mid, n))


def _other_turn(ls, w_turn, co, what):
    """Second turning point of a closed level set through w_turn."""
    direction = float(np.sign(F(w_turn, co))) or 1.0
    return _turning_point(ls, w_turn + direction * 1e-12 * w_turn, direction, co, what)


def m0_arc_half_length(w_level: float, q0: float, s: ScaledParams) -> float:
    """X-length of half of the M0 arc from (w_level, q0) to its mirror point."""
    r = math.sqrt(s.phi)
    u = w_level - s.psi / s.phi
    if q0 * u >= 0:
        raise RegimeError("M0 arc: flow on M0 cannot return to the jump level (q and w - psi/phi must have opposite signs)",
                          "M0_WRONG_SIDE")
    disc = u * u - q0 * q0 / s.phi
    if disc <= 0:
        raise RegimeError("M0 arc: |q| exceeds sqrt(phi)|w - psi/phi|, orbit crosses the bare-soil point", "M0_TOO_FAST")
    A = math.copysign(math.sqrt(disc), u)
    return math.acosh(u / A) / r


def _mplus_arc(s: ScaledParams, co: SlowPlusCoeffs, wstar: float, q0: float, winding: int, what: str):
    """M+ arc from (w*, q0) to (w*, -q0) on the level through the start point."""
    if q0 == 0:
        raise RegimeError(f"{what}: jump lands with q = 0 (degenerate)", "DEGENERATE_JUMP")
    H = 0.5 * q0 * q0 + float(potential(wstar, co))
    ls = LevelSet(co, H)
    direction = math.copysign(1.0, q0)
    wt = _turning_point(ls, wstar, direction, co, what)
    length = 2.0 * _half_time(ls, wt, wstar)
    closed = None
    if winding > 1:
        try:
            w2 = _turning_point(ls, wstar, -direction, co, what + " (closing circuit)")
        except RegimeError as exc:
            raise RegimeError(f"{what}: winding {winding} needs a closed level set, {exc}", "NOT_CLOSED") from None
        closed = _closed_period(ls, min(wt, w2), max(wt, w2))
        length += (winding - 1) * closed
    return H, wt, length, closed


# ------------------------------------------------------------------ spots


def build_spot_skeleton(s: ScaledParams, winding: int = 1) -> OrbitSkeleton:
    if winding < 1:
        raise ValueError("winding must be at least 1")
    co = derive_coeffs(s)
    wstar = maxwell_level(s.a)
    lo, hi = window(s.a)
    if not lo < wstar < hi:
        raise RegimeError("Maxwell level outside the M+ window", "WSTAR_OUTSIDE")
    r = math.sqrt(s.phi)
    wp = s.psi / s.phi
    q_sd = r * (wstar - wp)
    H, wt, length, closed = _mplus_arc(s, co, wstar, q_sd, winding, "spot M+ arc")
    segs = [
        SlowSegment("M0", 0.0, (wp, 0.0), (wstar, q_sd), 0, math.inf),
        Jump("up", wstar, q_sd),
        SlowSegment("Mplus", H, (wstar, q_sd), (wstar, -q_sd), winding, length),
        Jump("down", wstar, -q_sd),
        SlowSegment("M0", 0.0, (wstar, -q_sd), (wp, 0.0), 0, math.inf),
    ]
    return OrbitSkeleton("spot", segs, None, {"w_turn": wt, "H_sd": H, "q_sd": q_sd, "circuit_period": closed})


# ------------------------------------------------------------------- gaps


def build_gap_skeleton(s: ScaledParams) -> OrbitSkeleton:
    co = derive_coeffs(s)
    sad, cen = saddle_and_center(co)
    if sad is None:
        raise RegimeError("gap needs the saddle P+s on M+", "NO_SADDLE")
    wstar = maxwell_level(s.a)
    lo, hi = window(s.a)
    if not lo < wstar < hi:
        raise RegimeError("Maxwell level outside the M+ window", "WSTAR_OUTSIDE")
    ls = LevelSet(co, sad.H_value, sad.w, sad.H_value)
    if wstar < sad.w:
        if cen is not None and cen.w < sad.w:
            w_h = homoclinic_inner_turn(co)[0]
            if wstar <= w_h:
                raise RegimeError("gap take-off: w* lies beyond the homoclinic loop, W^u(P+s) never reaches it",
                                  "WU_MISSES_WSTAR")
        sign = -1.0
    else:
        sign = 1.0
    R = float(ls.R(np.array([wstar]))[0])
    if R <= 0:
        raise RegimeError("gap take-off: W^u(P+s) does not reach w*", "WU_MISSES_WSTAR")
    q_g = sign * math.sqrt(R)
    half = m0_arc_half_length(wstar, q_g, s)
    segs = [
        SlowSegment("Mplus", sad.H_value, (sad.w, 0.0), (wstar, q_g), 1, math.inf),
        Jump("down", wstar, q_g),
        SlowSegment("M0", 0.0, (wstar, q_g), (wstar, -q_g), 0, 2.0 * half),
        Jump("up", wstar, -q_g),
        SlowSegment("Mplus", sad.H_value, (wstar, -q_g), (sad.w, 0.0), 1, math.inf),
    ]
    return OrbitSkeleton("gap", segs, None, {"q_g": q_g, "w_saddle": sad.w, "m0_length": 2.0 * half})


# --------------------------------------------------------------- periodic


def build_periodic_skeleton(s: ScaledParams, rho: float, winding: int = 1) -> OrbitSkeleton:
    if rho == 0:
        raise ValueError("rho must be nonzero")
    co = derive_coeffs(s)
    wstar = maxwell_level(s.a)
    try:
        half0 = m0_arc_half_length(wstar, rho, s)
    except RegimeError as exc:
        raise RegimeError(f"periodic skeleton, M0 arc: {exc}", exc.code) from None
    H, wt, length, closed = _mplus_arc(s, co, wstar, -rho, winding, "periodic skeleton, M+ arc")
    segs = [
        SlowSegment("M0", 0.0, (wstar, rho), (wstar, -rho), 0, 2.0 * half0),
        Jump("up", wstar, -rho),
        SlowSegment("Mplus", H, (wstar, -rho), (wstar, rho), winding, length),
        Jump("down", wstar, rho),
    ]
    return OrbitSkeleton("periodic", segs, 2.0 * half0 + length,
                         {"rho": rho, "H_plus": H, "w_turn": wt, "m0_length": 2.0 * half0, "plus_length": length})


def periodic_rho_interval(s: ScaledParams, n: int = 400) -> tuple[float, float] | None:
    """Range of rho (one sign) for which a winding-1 periodic skeleton exists, from a scan."""
    wstar = maxwell_level(s.a)
    u = wstar - s.psi / s.phi
    qmax = math.sqrt(s.phi) * abs(u)
    sgn = -math.copysign(1.0, u)
    ok = []
    for r in qmax * np.linspace(0.0, 1.0, n + 2)[1:-1]:
        try:
            build_periodic_skeleton(s, sgn * r)
            ok.append(sgn * r)
        except RegimeError:
            pass
    if not ok:
        return None
    return (min(ok), max(ok))
