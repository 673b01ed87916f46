"""Slow reduced flows on the bare-soil manifold M0 and the vegetated manifold M+.

On M+ the leading-order flow is w'' = F(w) with

    F(w) = -A + (B + a theta) w + C w W(w),   W = sqrt(a + 1/4 - 1/w),

which factors as F = w (A W^2 + C W + D).  The factored form is what is
evaluated whenever the roots in W are real: it stays accurate near a nearly
degenerate saddle-node pair, where the expanded form loses every digit.

Everything here takes a :class:`SlowPlusCoeffs`, which carries ``a`` and
``theta``; ``psi`` never enters these formulas except through ``A``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import DomainError, NumericalError, RegimeError
from .fast import window
from .params import ScaledParams, SlowPlusCoeffs, derive_coeffs

RTOL, ATOL = 1e-10, 1e-12


# --------------------------------------------------------------------- M0


def slow0_manifolds(s: ScaledParams):
    """Unstable and stable lines of the bare-soil point as (slope, intercept) in q = slope*w + intercept."""
    if s.phi <= 0:
        raise DomainError("phi must be positive for a hyperbolic bare-soil point", "PHI_NONPOSITIVE")
    r = math.sqrt(s.phi)
    w0 = s.psi / s.phi
    return (r, -r * w0), (-r, r * w0)


def bare_soil_point(s: ScaledParams) -> tuple[float, float]:
    return s.psi / s.phi, 0.0


def m0_arc(w_start: float, q_start: float, X, s: ScaledParams):
    """Exact solution of w'' = phi w - psi through (w_start, q_start) at X = 0."""
    r = math.sqrt(s.phi)
    we = s.psi / s.phi
    X = np.asarray(X, dtype=float)
    u0 = w_start - we
    w = we + u0 * np.cosh(r * X) + q_start / r * np.sinh(r * X)
    q = u0 * r * np.sinh(r * X) + q_start * np.cosh(r * X)
    return w, q


# --------------------------------------------------------------------- M+


@dataclass(frozen=True)
class SlowPlusState:
    w: float
    q: float


@dataclass(frozen=True)
class CriticalPointMPlus:
    w: float
    kind: str
    H_value: float


@dataclass(frozen=True)
class MelnikovResult:
    value: float
    quadrature_error: float
    endpoints: tuple[float, float]


def _W(w, a):
    r = a + 0.25 - 1.0 / w
    if np.any(np.asarray(r) < -1e-14):
        raise DomainError(f"w = {w!r} below the M+ window (sqrt argument negative)", "SQRT_NEGATIVE")
    return np.sqrt(np.maximum(r, 0.0))


def check_window(w: float, co: SlowPlusCoeffs) -> None:
    lo, hi = window(co.a)
    if not (lo <= w <= hi):
        raise DomainError(f"w = {w!r} outside the M+ window [{lo!r}, {hi!r}]", "OUTSIDE_WINDOW")


def W_roots(co: SlowPlusCoeffs) -> tuple[float, float] | None:
    """Both real roots (small, large) of A W^2 + C W + D, if real."""
    A, C, D = co.A, co.C, co.D
    if A == 0:
        return None
    disc = C * C - 4.0 * A * D
    if disc < 0:
        return None
    r = math.sqrt(disc)
    if C == 0:
        return (-r / (2 * A), r / (2 * A))
    q = -0.5 * (C + math.copysign(r, C))
    x1, x2 = q / A, D / q
    return (min(x1, x2), max(x1, x2))


def _w_of_W(W: float, a: float) -> float:
    return 1.0 / (a + 0.25 - W * W)


def _W_minus(w, W, Wr, a):
    """W(w) - Wr without cancellation, for Wr >= 0 inside the window."""
    if Wr > 0:
        wr = _w_of_W(Wr, a)
        return (w - wr) / (w * wr * (W + Wr))
    return W - Wr


def F(w, co: SlowPlusCoeffs):
    """Right-hand side of w'' = F(w) on M+ (leading order)."""
    w = np.asarray(w, dtype=float)
    W = _W(w, co.a)
    roots = W_roots(co)
    if roots is None:
        return w * (co.A * W * W + co.C * W + co.D)
    W1, W2 = roots
    return co.A * w * _W_minus(w, W, W1, co.a) * _W_minus(w, W, W2, co.a)


def F_prime(w, co: SlowPlusCoeffs):
    W = _W(w, co.a)
    return co.BaT + co.C * W + co.C / (2.0 * w * W)


def F_second(w, co: SlowPlusCoeffs):
    W = _W(w, co.a)
    Wp = 1.0 / (2.0 * w * w * W)
    return co.C * Wp - co.C * (W + w * Wp) / (2.0 * (w * W) ** 2)


def slowplus_rhs(p: SlowPlusState, co: SlowPlusCoeffs) -> float:
    check_window(p.w, co)
    return float(F(p.w, co))


def J0(w, co: SlowPlusCoeffs):
    """Antiderivative of w W(w) in closed form."""
    at = co.a_tilde
    w = np.asarray(w, dtype=float)
    rad = at * w * w - w
    if np.any(rad < -1e-14):
        raise DomainError("a~ w^2 - w < 0: w below the M+ window", "SQRT_NEGATIVE")
    sr = np.sqrt(np.maximum(rad, 0.0))
    arg = 0.5 * (2.0 * at * w - 1.0) + math.sqrt(at) * sr
    if np.any(arg <= 0):
        raise DomainError("logarithm argument nonpositive", "LOG_DOMAIN")
    return (2.0 * at * w - 1.0) * sr / (4.0 * at) - np.log(arg) / (8.0 * at * math.sqrt(at))


def potential(w, co: SlowPlusCoeffs):
    """V with H = q^2/2 + V(w) and V' = -F."""
    return co.A * w - 0.5 * co.BaT * w * w - co.C * J0(w, co)


def slowplus_hamiltonian(p: SlowPlusState, co: SlowPlusCoeffs) -> float:
    return float(0.5 * p.q * p.q + potential(p.w, co))


def critical_points_mplus(co: SlowPlusCoeffs) -> list[CriticalPointMPlus]:
    roots = W_roots(co)
    if roots is None:
        return []
    lo, hi = window(co.a)
    W1, W2 = roots
    pts = []
    degenerate = co.sigma is not None and co.sigma == 0.0
    cand = [W1] if degenerate or W1 == W2 else [W1, W2]
    for W in cand:
        if not (0.0 < W < 0.5):
            continue
        w = _w_of_W(W, co.a)
        if not (lo < w < hi):
            continue
        fp = float(F_prime(w, co))
        if degenerate:
            kind = "degenerate"
        else:
            kind = "saddle" if fp > 0 else ("center" if fp < 0 else "degenerate")
        pts.append(CriticalPointMPlus(w, kind, float(potential(w, co))))
    pts.sort(key=lambda p: p.w)
    return pts


def saddle_and_center(co: SlowPlusCoeffs) -> tuple[CriticalPointMPlus | None, CriticalPointMPlus | None]:
    sad = cen = None
    for p in critical_points_mplus(co):
        if p.kind == "saddle":
            sad = p
        elif p.kind == "center":
            cen = p
    return sad, cen


# ------------------------------------------------------ manifold correction


def mplus_correction(w, co: SlowPlusCoeffs):
    """(p1, b1, rho1) of the O(eps) correction b = b_+ + eps c q b1, p = eps q p1."""
    a = co.a
    lo, _ = window(a)
    W = _W(w, a)
    if np.any(np.asarray(W) <= 1e-7 * math.sqrt(a + 0.25)):  # rounding floor of sqrt at the edge
        raise DomainError(f"correction singular at w = 4/(1+4a) = {lo!r}", "SINGULAR")
    bp = 0.5 + W
    p1 = 1.0 / (2.0 * w * w * W)
    b1 = p1 / (2.0 * w * bp * W)
    rho1 = (co.C + 2.0 * co.theta * W) * w * b1 - 1.0
    return p1, b1, rho1


def rho1(w, co: SlowPlusCoeffs):
    return mplus_correction(w, co)[2]


def rho1_prime(w, co: SlowPlusCoeffs):
    W = _W(w, co.a)
    Wp = 1.0 / (2.0 * w * w * W)
    bp = 0.5 + W
    N = co.C + 2.0 * co.theta * W
    Dn = 4.0 * w * w * bp * W * W
    dN = 2.0 * co.theta * Wp
    dDn = 8.0 * w * bp * W * W + 4.0 * w * w * (Wp * W * W + 2.0 * bp * W * Wp)
    return (dN * Dn - N * dDn) / (Dn * Dn)


def invariance_residual(w: float, q: float, c: float, eps: float, s: ScaledParams, h: float = 1e-6) -> float:
    """Defect of the corrected manifold under the full spatial ODE, max over both fast equations."""
    co = derive_coeffs(s)
    a = s.a

    def graph(wv, qv):
        p1, b1, _ = mplus_correction(wv, co)
        return 0.5 + float(_W(wv, a)) + eps * c * qv * b1, eps * qv * p1

    b, p = graph(w, q)
    bw = [(graph(w + h, q)[i] - graph(w - h, q)[i]) / (2 * h) for i in (0, 1)]
    bq = [(graph(w, q + h)[i] - graph(w, q - h)[i]) / (2 * h) for i in (0, 1)]
    wdot = eps * q
    qdot = eps * (-s.psi + (s.phi + s.omega * b + s.theta * b * b) * w) - eps * eps * c * q
    r1 = bw[0] * wdot + bq[0] * qdot - p
    r2 = bw[1] * wdot + bq[1] * qdot - (w * b ** 3 - w * b ** 2 + (1 - a * w) * b - c * p)
    return max(abs(r1), abs(r2))


# ------------------------------------------------------------- quadrature

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _gl_integrate(f: Callable, lo: float, hi: float, n: int) -> float:
    x, wt = _gl(n)
    t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    return 0.5 * (hi - lo) * float(np.dot(wt, f(t)))


def _F_integral(w_lo, w_hi, co: SlowPlusCoeffs, n: int = 24):
    """Vectorized int_{w_lo}^{w_hi} F(s) ds (either bound may be an array)."""
    x, wt = _gl(n)
    w_lo = np.atleast_1d(np.asarray(w_lo, dtype=float))
    w_hi = np.asarray(w_hi, dtype=float)
    half = 0.5 * (w_hi - w_lo)
    mid = 0.5 * (w_hi + w_lo)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    vals = F(nodes, co)
    return half * (vals @ wt)


class LevelSet:
    """Level set H = H_level of the leading-order M+ flow, as q^2 = R(w).

    With ``ref`` set to a critical point w_ref, R(w) = 2 (H_level - H_ref) - 2 int_w^{w_ref} F
    is evaluated without the cancellation of differencing two potentials.
    """

    def __init__(self, co: SlowPlusCoeffs, H_level: float, w_ref: float | None = None, H_ref: float | None = None):
        self.co = co
        self.H = H_level
        self.w_ref = w_ref
        if w_ref is not None:
            self.H_ref = float(potential(w_ref, co)) if H_ref is None else H_ref
            self.offset = 2.0 * (H_level - self.H_ref)
        else:
            self.H_ref = None
            self.offset = None

    def R(self, w):
        w = np.asarray(w, dtype=float)
        direct = 2.0 * (self.H - potential(w, self.co))
        if self.w_ref is None:
            return direct
        near = np.abs(w - self.w_ref) <= 0.25 * self.w_ref
        if not np.any(near):
            return direct
        out = np.array(direct, dtype=float, copy=True).reshape(-1)
        wn = w.reshape(-1)[near.reshape(-1)]
        integ = np.zeros(wn.size)
        nsub = 4
        for k in range(nsub):
            a0 = wn + (self.w_ref - wn) * k / nsub
            a1 = wn + (self.w_ref - wn) * (k + 1) / nsub
            integ += _F_integral(a0, a1, self.co)
        out[near.reshape(-1)] = self.offset - 2.0 * integ
        return out.reshape(w.shape)


def homoclinic_levelset(co: SlowPlusCoeffs) -> tuple[LevelSet, CriticalPointMPlus, CriticalPointMPlus | None]:
    sad, cen = saddle_and_center(co)
    if sad is None:
        raise RegimeError("no saddle on M+", "NO_SADDLE")
    return LevelSet(co, sad.H_value, sad.w, sad.H_value), sad, cen


def _bracket_root(f, a, b, what: str) -> float:
    fa, fb = f(a), f(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    if fa * fb > 0:
        raise RegimeError(f"could not bracket {what} in [{a!r}, {b!r}]", "BRACKET")
    return brentq(f, a, b, xtol=1e-14 * max(1.0, abs(a)), rtol=1e-15, maxiter=500)


def homoclinic_inner_turn(co: SlowPlusCoeffs) -> tuple[float, CriticalPointMPlus, CriticalPointMPlus]:
    """Inner turning point of the homoclinic loop, plus saddle and center."""
    ls, sad, cen = homoclinic_levelset(co)
    if cen is None:
        raise RegimeError("homoclinic loop needs a center and a saddle on M+", "NO_CENTER")
    lo, _ = window(co.a)
    w_left = lo * (1.0 + 1e-9)
    if ls.R(np.array([w_left]))[0] > 0:
        raise RegimeError("homoclinic level set leaves the M+ window (regime of the loop violated)", "LOOP_LEAVES_WINDOW")
    wh = _bracket_root(lambda w: float(ls.R(np.array([w]))[0]), w_left, cen.w, "inner turning point")
    return wh, sad, cen


def _sqrt_weighted(g: Callable, R: Callable, w_lo: float, w_hi: float, w_split: float, n: int,
                   lo_simple: bool = True, hi_simple: bool = True) -> float:
    """int_{w_lo}^{w_hi} g(w) sqrt(R(w)) dw with t^2 substitutions at simple-root endpoints."""
    total = 0.0
    for (e, other, simple, sgn) in ((w_lo, w_split, lo_simple, 1.0), (w_hi, w_split, hi_simple, -1.0)):
        L = abs(other - e)
        if L == 0:
            continue
        if simple:
            T = math.sqrt(L)

            def f(t, e=e, sgn=sgn):
                w = e + sgn * t * t
                return g(w) * np.sqrt(np.maximum(R(w), 0.0)) * 2.0 * t

            total += _gl_integrate(f, 0.0, T, n)
        else:
            def f2(w):
                return g(w) * np.sqrt(np.maximum(R(w), 0.0))

            part = _gl_integrate(f2, min(e, other), max(e, other), n)
            total += part
    return total


def _with_error(fun: Callable[[int], float], n: int = 64) -> tuple[float, float]:
    v1 = fun(n)
    v2 = fun(2 * n)
    return v2, abs(v2 - v1)


def melnikov_homoclinic(co: SlowPlusCoeffs, rho: Callable | None = None, n: int = 64) -> MelnikovResult:
    """int over the homoclinic loop's upper arc of rho1 * q dw (the speed c divided out).

    ``rho`` overrides the friction coefficient (defaults to rho1).
    """
    wh, sad, cen = homoclinic_inner_turn(co)
    ls = LevelSet(co, sad.H_value, sad.w, sad.H_value)
    g = rho if rho is not None else (lambda w: rho1(w, co))
    val, err = _with_error(lambda m: _sqrt_weighted(g, ls.R, wh, sad.w, cen.w, m, True, False), n)
    return MelnikovResult(val, err, (wh, sad.w))


def periodic_turns(H_p: float, co: SlowPlusCoeffs) -> tuple[float, float, CriticalPointMPlus, CriticalPointMPlus]:
    sad, cen = saddle_and_center(co)
    if sad is None or cen is None:
        raise RegimeError("periodic orbits need a center and a saddle on M+", "NO_CENTER")
    if not (cen.H_value < H_p < sad.H_value):
        raise RegimeError(f"H_p = {H_p!r} outside (H_c, H_s) = ({cen.H_value!r}, {sad.H_value!r})", "LEVEL_RANGE")
    ls = LevelSet(co, H_p, cen.w, cen.H_value)
    lo, _ = window(co.a)
    w_left = lo * (1.0 + 1e-9)
    f = lambda w: float(ls.R(np.array([w]))[0])
    w_lo = _bracket_root(f, w_left, cen.w, "left turning point")
    w_hi = _bracket_root(f, cen.w, sad.w, "right turning point")
    return w_lo, w_hi, sad, cen


def melnikov_periodic(H_p: float, co: SlowPlusCoeffs, rho: Callable | None = None, n: int = 64) -> MelnikovResult:
    """int_{w_lo}^{w_hi} rho1 * |q| dw over the closed orbit at level H_p (c divided out)."""
    w_lo, w_hi, sad, cen = periodic_turns(H_p, co)
    ls = LevelSet(co, H_p, cen.w, cen.H_value)
    g = rho if rho is not None else (lambda w: rho1(w, co))
    val, err = _with_error(lambda m: _sqrt_weighted(g, ls.R, w_lo, w_hi, cen.w, m), n)
    return MelnikovResult(val, err, (w_lo, w_hi))


@dataclass(frozen=True)
class PeriodicPersistence:
    H_star: float | None
    region: str  # "S_per" or "none"
    hopf_residual: float  # rho1 at the center
    hom_residual: float  # homoclinic Melnikov value
    sign_changes: int


def find_persistent_periodic(co: SlowPlusCoeffs, n_grid: int = 40, method: str = "brentq") -> PeriodicPersistence:
    """Locate the level H* where the periodic Melnikov integral vanishes, if any."""
    sad, cen = saddle_and_center(co)
    if sad is None or cen is None:
        raise RegimeError("needs a center and a saddle on M+", "NO_CENTER")
    hom = melnikov_homoclinic(co).value
    hopf = float(rho1(cen.w, co))
    dH = sad.H_value - cen.H_value
    # nonuniform grid in the level, dense at both ends
    u = 0.5 - 0.5 * np.cos(np.linspace(0.0, math.pi, n_grid + 2)[1:-1])
    Hs = cen.H_value + dH * u
    vals = [melnikov_periodic(H, co).value for H in Hs]
    changes = [i for i in range(len(vals) - 1) if vals[i] * vals[i + 1] < 0]
    if not changes:
        return PeriodicPersistence(None, "none", hopf, hom, 0)
    i = changes[0]
    fun = lambda H: melnikov_periodic(H, co).value
    if method == "brentq":
        Hstar = brentq(fun, Hs[i], Hs[i + 1], xtol=1e-14 * max(1.0, abs(Hs[i])), rtol=1e-15)
    elif method == "bisect":
        lo, hi = Hs[i], Hs[i + 1]
        flo = vals[i]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = fun(mid)
            if fm == 0 or hi - lo < 1e-15 * max(1.0, abs(mid)):
                break
            if (fm > 0) == (flo > 0):
                lo, flo = mid, fm
            else:
                hi = mid
        Hstar = 0.5 * (lo + hi)
    else:
        raise ValueError(method)
    return PeriodicPersistence(float(Hstar), "S_per", hopf, hom, len(changes))


def rho1_sign_changes(co: SlowPlusCoeffs, n: int = 2000) -> list[float]:
    """Approximate locations where rho1 changes sign inside the window (0 to 2 expected)."""
    lo, hi = window(co.a)
    if not math.isfinite(hi):
        hi = 1e6
    ws = lo + (hi - lo) * (0.5 - 0.5 * np.cos(np.linspace(0, math.pi, n)))[1:-1]
    r = rho1(ws, co)
    idx = np.nonzero(np.sign(r[:-1]) * np.sign(r[1:]) < 0)[0]
    return [brentq(lambda w: float(rho1(w, co)), ws[i], ws[i + 1]) for i in idx]


def hopf_and_hom_residuals(co: SlowPlusCoeffs) -> dict[str, float]:
    sad, cen = saddle_and_center(co)
    out = {}
    if cen is not None:
        out["hopf"] = float(rho1(cen.w, co))
    if sad is not None and cen is not None:
        try:
            out["hom"] = melnikov_homoclinic(co).value
        except RegimeError:
            pass
    return out


# ------------------------------------------------------------- integration


@dataclass
class Trajectory:
    X: np.ndarray
    w: np.ndarray
    q: np.ndarray
    H: np.ndarray
    status: str  # "completed", "left_window" or "failed"
    events: dict = field(default_factory=dict)

    def as_rows(self):
        return np.column_stack([self.X, self.w, self.q, self.H])


def perturbed_rhs(co: SlowPlusCoeffs, c: float, eps: float):
    def rhs(X, y):
        w, q = y
        fr = eps * c
        return [q, float(F(w, co)) + (fr * q * float(rho1(w, co)) if fr else 0.0)]

    return rhs


def integrate_slow_plus(start: SlowPlusState, co: SlowPlusCoeffs, c: float = 0.0, eps: float = 0.0,
                        X_span: float = 10.0, direction: int = 1, events: Sequence[Callable] = (),
                        max_step: float = np.inf, dense: bool = False, margin: float = 1e-9) -> Trajectory:
    """Integrate w'' = F(w) + eps c q rho1(w); stops early if w leaves the window."""
    check_window(start.w, co)
    lo, hi = window(co.a)
    hi_eff = hi if math.isfinite(hi) else 1e12

    def leave_lo(X, y):
        return y[0] - lo * (1 + margin)

    def leave_hi(X, y):
        return hi_eff * (1 - margin) - y[0]

    leave_lo.terminal = leave_hi.terminal = True
    evs = [leave_lo, leave_hi, *events]
    base = perturbed_rhs(co, c, eps)

    def rhs(X, y):
        # RK stages may probe past the edge before the terminal event fires
        return base(X, (min(max(y[0], lo * (1 + margin)), hi_eff), y[1]))

    sol = solve_ivp(rhs, (0.0, direction * X_span), [start.w, start.q], method="DOP853",
                    rtol=RTOL, atol=ATOL, events=evs, max_step=max_step, dense_output=dense)
    if sol.status == -1:
        raise NumericalError(f"slow-flow integration failed: {sol.message}; last state w={sol.y[0, -1]!r}, q={sol.y[1, -1]!r}")
    status = "completed"
    if sol.status == 1 and (len(sol.t_events[0]) or len(sol.t_events[1])):
        status = "left_window"
    H = 0.5 * sol.y[1] ** 2 + potential(np.clip(sol.y[0], lo, hi_eff), co)
    traj = Trajectory(sol.t, sol.y[0], sol.y[1], H, status,
                      {"t": sol.t_events[2:], "y": sol.y_events[2:]})
    if dense:
        traj.events["sol"] = sol.sol
    return traj


# ------------------------------------------------------- normal form (BT)


@dataclass(frozen=True)
class BTNormalForm:
    beta1: float
    beta2: float
    s_sign: int
    mu: tuple[float, float, float, float]
    delta: float
    shift: float
    in_S_BT: bool


def bt_normal_form(co: SlowPlusCoeffs, c: float, eps: float) -> BTNormalForm:
    """Bogdanov-Takens unfolding data of the friction-perturbed flow at the fold w0^SN.

    The constant friction part delta*q is absorbed by translating w by delta/mu4
    before the quadratic is rescaled; the returned mu are the unshifted Taylor data.
    """
    if co.w_sn is None:
        raise RegimeError("saddle-node location undefined ((1+4a)A^2 = C^2)", "NO_FOLD")
    w0 = co.w_sn
    mu1 = float(F(w0, co))
    mu2 = float(F_prime(w0, co))
    mu3 = 0.5 * float(F_second(w0, co))
    delta = eps * c * float(rho1(w0, co))
    mu4 = eps * c * float(rho1_prime(w0, co))
    if mu3 == 0 or mu4 == 0:
        raise RegimeError("normal form degenerate: mu3*mu4 = 0", "BT_DEGENERATE")
    d = delta / mu4
    m1 = mu1 - mu2 * d + mu3 * d * d
    m2 = mu2 - 2.0 * mu3 * d
    beta1 = mu4 ** 4 * m1 / mu3 ** 3
    beta2 = (mu4 / mu3) ** 2 * m2
    s_sign = 1 if mu3 * mu4 > 0 else -1
    inside = beta2 < 0 and -6.0 / 25.0 * beta2 * beta2 < beta1 < 0
    return BTNormalForm(beta1, beta2, s_sign, (mu1, mu2, mu3, mu4), delta, d, inside)
