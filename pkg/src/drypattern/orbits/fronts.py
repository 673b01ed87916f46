"""Touch-down curve and traveling or stationary 1-fronts glued from the reduced flows.

Speeds are reported in the frame xi = x - c t of the PDE with bare soil on the
left, so c < 0 means vegetation invades bare soil.  A jump from M0 up to M+ at
water level w travels with c = c^-(w) = -sqrt(w/2)(3W - 1/2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from ..errors import NumericalError, RegimeError
from ..fast import c_branch, c_range, maxwell_level, wh_of_c, window
from ..params import ScaledParams, SlowPlusCoeffs, derive_coeffs, frozen_chi, frozen_params
from ..slow import (
    F,
    LevelSet,
    RTOL,
    ATOL,
    homoclinic_inner_turn,
    periodic_turns,
    potential,
    rho1,
    saddle_and_center,
)

UP = "-"  # fast branch label of the ascending jump M0 -> M+
TRANSVERSALITY_MIN = 1e-8


@dataclass(frozen=True)
class TouchdownPoint:
    c: float
    w: float
    q: float


@dataclass(frozen=True)
class FrontResult:
    kind: str  # primary, higher_order(k), to_periodic, stationary, shooting_refined
    c: float
    touchdown: TouchdownPoint
    H_level: float
    residual: float
    j: int | None = None
    k: int | None = None
    degenerate: bool = False
    extra: dict = field(default_factory=dict, compare=False)


def idown_range(a: float) -> tuple[float, float]:
    return c_range(a, UP)


def q_down(w, s: ScaledParams):
    return math.sqrt(s.phi) * (np.asarray(w) - s.psi / s.phi)


def idown_point(c: float, s: ScaledParams) -> TouchdownPoint:
    w = wh_of_c(c, s.a, UP)
    return TouchdownPoint(c, w, float(q_down(w, s)))


def touchdown_from_w(w: float, s: ScaledParams) -> TouchdownPoint:
    return TouchdownPoint(c_branch(w, s.a, UP), w, float(q_down(w, s)))


def _scan_grid(lo: float, hi: float, n: int = 1500) -> np.ndarray:
    if not math.isfinite(hi):
        hi = 1e6
    # geometric spacing handles the very long windows of small a
    g = lo * (hi / lo) ** np.linspace(0.0, 1.0, n)
    g[0], g[-1] = lo * (1 + 1e-10), hi * (1 - 1e-10)
    return g


def _roots(fun, grid) -> list[float]:
    vals = np.array([fun(x) for x in grid])
    out = []
    for i in range(len(grid) - 1):
        if vals[i] == 0:
            out.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0:
            out.append(brentq(fun, grid[i], grid[i + 1], xtol=1e-14 * grid[i], rtol=1e-15, maxiter=500))
    return out


def transversality(w: float, q: float, co: SlowPlusCoeffs, slope: float) -> float:
    """Normalized determinant between the touch-down line and the level-set tangent."""
    gw, gq = -float(F(w, co)), q
    n1 = math.hypot(gw, gq)
    if n1 == 0:
        return 0.0
    return (gw + gq * slope) / (n1 * math.hypot(1.0, slope))


def _level_intersections(s: ScaledParams, ls: LevelSet, w_lo: float, w_hi: float) -> list[tuple[float, float]]:
    def g(w):
        return 0.5 * (float(q_down(w, s)) ** 2 - float(ls.R(np.array([w]))[0]))

    return [(w, float(q_down(w, s))) for w in _roots(g, _scan_grid(w_lo, w_hi))]


def on_stable_set(w: float, q: float, w_s: float, w_h: float | None) -> bool:
    """Whether a point of the saddle level set lies on W^s (loop or right-hand stable branch)."""
    if w > w_s:
        return q < 0
    if w_h is not None:
        return w >= w_h  # anywhere on the homoclinic loop
    return q > 0


def find_primary_fronts(s: ScaledParams) -> list[FrontResult]:
    co = derive_coeffs(s)
    sad, cen = saddle_and_center(co)
    if sad is None:
        raise RegimeError("no saddle on M+: primary fronts need P+s", "NO_SADDLE")
    w_h = None
    if cen is not None and cen.w < sad.w:
        try:
            w_h = homoclinic_inner_turn(co)[0]
        except RegimeError:
            w_h = None
    ls = LevelSet(co, sad.H_value, sad.w, sad.H_value)
    lo, hi = window(s.a)
    out = []
    for w, q in _level_intersections(s, ls, lo, hi):
        if not on_stable_set(w, q, sad.w, w_h):
            continue
        det = transversality(w, q, co, math.sqrt(s.phi))
        td = touchdown_from_w(w, s)
        res = abs(0.5 * q * q + float(potential(w, co)) - sad.H_value)
        out.append(FrontResult("primary", td.c, td, sad.H_value, res, degenerate=abs(det) < TRANSVERSALITY_MIN,
                               extra={"transversality": det}))
    out.sort(key=lambda f: -f.c)
    return [FrontResult(f.kind, f.c, f.touchdown, f.H_level, f.residual, j=i + 1, k=0, degenerate=f.degenerate,
                        extra=f.extra) for i, f in enumerate(out)]


def find_front_to_periodic(s: ScaledParams, H: float) -> list[FrontResult]:
    co = derive_coeffs(s)
    w_lo, w_hi, sad, cen = periodic_turns(H, co)
    ls = LevelSet(co, H, cen.w, cen.H_value)
    out = []
    for w, q in _level_intersections(s, ls, w_lo, w_hi):
        det = transversality(w, q, co, math.sqrt(s.phi))
        td = touchdown_from_w(w, s)
        res = abs(0.5 * q * q + float(potential(w, co)) - H)
        out.append(FrontResult("to_periodic", td.c, td, H, res, degenerate=abs(det) < TRANSVERSALITY_MIN,
                               extra={"transversality": det}))
    out.sort(key=lambda f: -f.c)
    return [FrontResult(f.kind, f.c, f.touchdown, f.H_level, f.residual, j=i + 1, degenerate=f.degenerate,
                        extra=f.extra) for i, f in enumerate(out)]


def in_S_hp(s: ScaledParams, H: float) -> bool:
    """Both touch-down intersections with the level H exist and are transversal."""
    fr = find_front_to_periodic(s, H)
    return len(fr) == 2 and all(not f.degenerate for f in fr)


# ------------------------------------------------------------ stationary


def stationary_jump_point(s: ScaledParams) -> tuple[float, float]:
    w = maxwell_level(s.a)
    return w, float(q_down(w, s))


def stationary_front_residual(phi: float, frozen: tuple[float, float, float, float], eps: float = 0.1,
                              allow_negative_theta: bool = False) -> float:
    """H(J_sd(phi)) - H^s along the frozen family (a, A, C, D)."""
    s = frozen_params(phi, *frozen, eps, allow_negative_theta)
    co = derive_coeffs(s)
    sad, _ = saddle_and_center(co)
    if sad is None:
        raise RegimeError("no saddle on M+", "NO_SADDLE")
    w, q = stationary_jump_point(s)
    return 0.5 * q * q + float(potential(w, co)) - sad.H_value


def stationary_phi_closed_form(frozen: tuple[float, float, float, float],
                               allow_negative_theta: bool = False) -> list[float]:
    """Phi values of stationary 1-fronts, solved directly rather than scanned.

    Along the family the c = 0 touch-down height is q(phi) = chi/sqrt(phi) - sqrt(phi)(1/a - w*),
    so each point of W^s(P+s) above w* = 9/(2+9a) fixes sqrt(phi) as the positive
    root of (1/a - w*) r^2 + q r - chi = 0.  Only roots inside the phi window
    are returned (unbounded above with ``allow_negative_theta``).
    """
    a, A, C, D = frozen
    co = SlowPlusCoeffs.from_frozen(a, A, C, D, 0.0)
    sad, cen = saddle_and_center(co)
    wstar = maxwell_level(a)
    lo, hi = window(a)
    if sad is None or not lo < wstar < hi:
        return []
    chi = frozen_chi(a, A, C, D)
    w_h = homoclinic_inner_turn(co)[0] if (cen is not None and cen.w < sad.w) else None
    R = float(LevelSet(co, sad.H_value, sad.w, sad.H_value).R(np.array([wstar]))[0])
    if R <= 0:
        return []
    k = 1.0 / a - wstar
    phi_hi = math.inf if allow_negative_theta else a * (A + chi)
    out = []
    for q in (math.sqrt(R), -math.sqrt(R)):
        if not on_stable_set(wstar, q, sad.w, w_h):
            continue
        disc = q * q + 4.0 * k * chi
        if disc < 0:
            continue
        for r in ((-q + math.sqrt(disc)) / (2.0 * k), (-q - math.sqrt(disc)) / (2.0 * k)):
            if r > 0 and max(a * chi, 0.0) < r * r < phi_hi:
                out.append(r * r)
    return sorted(out)


def stationary_expected_count(frozen: tuple[float, float, float, float], allow_negative_theta: bool = False) -> int:
    """Root count predicted by the closed-form route."""
    return len(stationary_phi_closed_form(frozen, allow_negative_theta))


def find_stationary_fronts(frozen: tuple[float, float, float, float], eps: float = 0.1, n: int = 800,
                          allow_negative_theta: bool = False, phi_max: float | None = None) -> list[FrontResult]:
    """All phi in the frozen family at which the c = 0 touch-down lies on W^s(P+s), by scanning.

    With ``allow_negative_theta`` the scan runs up to ``phi_max`` (default 50 a (A + chi)).
    """
    a, A, C, D = frozen
    chi = frozen_chi(a, A, C, D)
    lo_phi = max(a * chi, 0.0)
    hi_phi = a * (A + chi)
    if allow_negative_theta:
        hi_phi = phi_max if phi_max is not None else 50.0 * max(hi_phi, a * A)
    if hi_phi <= lo_phi:
        return []
    # the touch-down height is monotone in sqrt(phi); scan uniformly there
    grid = (math.sqrt(lo_phi) + (math.sqrt(hi_phi) - math.sqrt(lo_phi)) * np.linspace(0.0, 1.0, n + 2)[1:-1]) ** 2
    fun = lambda ph: stationary_front_residual(ph, frozen, eps, allow_negative_theta)
    out = []
    co = SlowPlusCoeffs.from_frozen(a, A, C, D, 0.0)
    sad, cen = saddle_and_center(co)
    if sad is None:
        return []
    w_h = homoclinic_inner_turn(co)[0] if (cen is not None and cen.w < sad.w) else None
    for ph in _roots(fun, grid):
        s = frozen_params(ph, a, A, C, D, eps, allow_negative_theta)
        w, q = stationary_jump_point(s)
        if not on_stable_set(w, q, sad.w, w_h):
            continue
        td = TouchdownPoint(0.0, w, q)
        out.append(FrontResult("stationary", 0.0, td, sad.H_value, abs(fun(ph)), extra={"phi": ph, "params": s}))
    return out


# --------------------------------------------------------- higher order


@dataclass(frozen=True)
class Crossing:
    w: float
    q: float
    X: float
    branch: str  # "loop" or "right"
    direction: int  # sign of d/dX of (q - q_down(w)) along the backward parametrization


def stable_manifold_crossings(s: ScaledParams, c: float, n_max: int = 20, X_max: float = 4000.0,
                              chunk: float = 40.0, branches=("loop", "right")) -> list[Crossing]:
    """Intersections of W^s(P+s) of the friction flow with the touch-down line, in backward-time order."""
    co = derive_coeffs(s)
    sad, _ = saddle_and_center(co)
    if sad is None:
        raise RegimeError("no saddle on M+", "NO_SADDLE")
    eps = s.eps
    kappa = float(eps * c * rho1(sad.w, co))
    Fp = float(_Fprime_num(sad.w, co))
    lam_s = 0.5 * (kappa - math.sqrt(kappa * kappa + 4.0 * Fp))
    d = 1e-7 / math.hypot(1.0, lam_s)
    lo, hi = window(s.a)
    hi_eff = hi if math.isfinite(hi) else 1e12
    r = math.sqrt(s.phi)
    wp = s.psi / s.phi

    def rhs(X, y):
        w, q = y
        return [q, float(F(w, co)) + eps * c * q * float(rho1(w, co))]

    def line(X, y):
        return y[1] - r * (y[0] - wp)

    def out_lo(X, y):
        return y[0] - lo * (1 + 1e-9)

    def out_hi(X, y):
        return hi_eff * (1 - 1e-9) - y[0]

    out_lo.terminal = out_hi.terminal = True
    found: list[Crossing] = []
    for br in branches:
        sgn = -1.0 if br == "loop" else 1.0
        y = np.array([sad.w + sgn * d, sgn * d * lam_s])
        X0 = 0.0
        count = 0
        while -X0 < X_max and count < n_max:
            sol = solve_ivp(rhs, (X0, X0 - chunk), y, method="DOP853", rtol=RTOL, atol=ATOL,
                            events=[line, out_lo, out_hi])
            if sol.status == -1:
                raise NumericalError(f"backward integration of W^s failed: {sol.message}")
            for Xe, ye in zip(sol.t_events[0], sol.y_events[0]):
                if Xe == X0:
                    continue
                if not lo < ye[0] < hi_eff:
                    continue
                dl = rhs(Xe, ye)
                dline = -(dl[1] - r * dl[0])  # derivative w.r.t. backward time
                found.append(Crossing(float(ye[0]), float(ye[1]), float(Xe), br, 1 if dline > 0 else -1))
                count += 1
            if sol.status == 1 and (len(sol.t_events[1]) or len(sol.t_events[2])):
                break
            y = sol.y[:, -1]
            X0 = sol.t[-1]
    return found


def _Fprime_num(w: float, co: SlowPlusCoeffs) -> float:
    from ..slow import F_prime

    return float(F_prime(w, co))


def count_higher_fronts(s: ScaledParams, j: int, k_max: int, damping: float = 0.5, max_iter: int = 100,
                        tol: float = 1e-11, X_max: float = 4000.0) -> list[FrontResult]:
    """Self-consistent speeds of 1-fronts whose touch-down is the k-th crossing (k = 0..k_max)
    of W^s(P+s) with the touch-down line, within the family of the j-th primary front."""
    co = derive_coeffs(s)
    prim = find_primary_fronts(s)
    loop_prims = [p for p in prim if p.touchdown.w < saddle_and_center(co)[0].w]
    if len(loop_prims) < 2:
        raise RegimeError("higher-order fronts need two primary intersections with the homoclinic loop", "NO_LOOP_FRONTS")
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    c0 = loop_prims[j - 1].c
    # direction of the j-family fixed by the primary crossing
    base = [x for x in stable_manifold_crossings(s, c0, n_max=2, branches=("loop",), X_max=X_max)]
    if not base:
        raise NumericalError("W^s does not cross the touch-down line near the primary fronts")
    target = min(base, key=lambda x: abs(x.w - loop_prims[j - 1].touchdown.w))
    direction = target.direction
    results = [loop_prims[j - 1]]  # k = 0 is the primary front by definition
    c_prev = c0
    for k in range(1, k_max + 1):
        c = c_prev
        ok = False
        for _ in range(max_iter):
            xs = [x for x in stable_manifold_crossings(s, c, n_max=2 * k + 2, branches=("loop",), X_max=X_max)
                  if x.direction == direction]
            if len(xs) <= k:
                break
            c_new = c_branch(xs[k].w, s.a, UP)
            if abs(c_new - c) < tol:
                c = c_new
                ok = True
                break
            c = c + damping * (c_new - c)
        if not ok:
            break
        xk = xs[k]
        td = TouchdownPoint(c, xk.w, xk.q)
        results.append(FrontResult(f"higher_order({k})", c, td, saddle_and_center(co)[0].H_value,
                                   abs(xk.q - float(q_down(xk.w, s))), j=j, k=k))
        c_prev = c
    return results


def count_fronts(s: ScaledParams, k_max: int = 6, X_max: float = 4000.0) -> dict:
    """Total number of self-consistent 1-fronts (primary plus higher order) at one parameter point."""
    co = derive_coeffs(s)
    sad, cen = saddle_and_center(co)
    if sad is None:
        return {"total": 0, "loop": [], "right": 0}
    right = 0
    fam_counts = []
    prim = find_primary_fronts(s)
    right = sum(1 for p in prim if p.touchdown.w > sad.w)
    loop_prims = [p for p in prim if p.touchdown.w < sad.w]
    if len(loop_prims) == 2:
        for j in (1, 2):
            try:
                fam_counts.append(len(count_higher_fronts(s, j, k_max, X_max=X_max)))
            except (RegimeError, NumericalError):
                fam_counts.append(0)
    else:
        fam_counts = [len(loop_prims)]
    return {"total": right + sum(fam_counts), "loop": fam_counts, "right": right}
