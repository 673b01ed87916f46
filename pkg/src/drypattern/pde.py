"""Method-of-lines simulation of the scaled reaction-diffusion system

    B_t = (aW - 1)B + W B^2 - W B^3 + B_xx
    W_t = psi - (phi + omega B + theta B^2) W + W_xx / eps^2

with no-flux boundaries.  Diffusion is implicit (one tridiagonal LU per
component, reused between steps), reaction explicit.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .equilibria import full_equilibria
from .errors import NumericalError, RegimeError
from .fast import b_plus, maxwell_level, window
from .params import ScaledParams

log = logging.getLogger(__name__)

NEG_CLAMP = 1e-12
MAX_DX = 0.2


@dataclass(frozen=True)
class Grid:
    length: float
    n_points: int
    bc: str = "no_flux"

    def __post_init__(self):
        if self.n_points < 64:
            raise ValueError("n_points must be at least 64")
        if self.length <= 0:
            raise ValueError("length must be positive")
        if self.bc != "no_flux":
            raise ValueError("only no-flux boundaries are supported")

    @property
    def dx(self) -> float:
        return self.length / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_points)

    @classmethod
    def for_params(cls, s: ScaledParams, dx: float = 0.1, length: float | None = None) -> "Grid":
        L = 20.0 / s.eps if length is None else length
        return cls(L, int(round(L / dx)) + 1)


@dataclass
class Field:
    B: np.ndarray
    W: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        if self.B.shape != self.W.shape:
            raise ValueError("B and W must share a shape")
        if np.any(self.B < 0) or np.any(self.W < 0):
            raise ValueError("fields must be nonnegative")

    def copy(self) -> "Field":
        return Field(self.B.copy(), self.W.copy(), self.t)

    def mirrored(self) -> "Field":
        return Field(self.B[::-1].copy(), self.W[::-1].copy(), self.t)


@dataclass
class SimResult:
    grid: Grid
    snapshots: list[Field]
    final: Field
    dt: float
    warnings: list[str] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([f.t for f in self.snapshots])


def laplacian(n: int, dx: float) -> sp.csc_matrix:
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    up = off.copy()
    lo = off.copy()
    up[0] = 2.0  # ghost-point mirror at both ends
    lo[-1] = 2.0
    return sp.diags([lo, main, up], [-1, 0, 1], format="csc") / (dx * dx)


def reaction(B, W, s: ScaledParams):
    fB = (s.a * W - 1.0) * B + W * B * B - W * B ** 3
    fW = s.psi - (s.phi + s.omega * B + s.theta * B * B) * W
    return fB, fW


def _reaction_rate(B, W, s: ScaledParams) -> float:
    jB = np.abs(s.a * W - 1.0 + 2.0 * W * B - 3.0 * W * B * B)
    jW = np.abs(s.phi + s.omega * B + s.theta * B * B)
    return float(max(np.max(jB), np.max(jW), 1e-12))


class _Stepper:
    def __init__(self, s: ScaledParams, grid: Grid):
        self.s = s
        self.L = laplacian(grid.n_points, grid.dx)
        self.I = sp.identity(grid.n_points, format="csc")
        self.dt = None

    def set_dt(self, dt: float):
        if dt != self.dt:
            self.dt = dt
            self.luB = splu((self.I - dt * self.L).tocsc())
            self.luW = splu((self.I - dt / self.s.eps2 * self.L).tocsc())

    def step(self, B, W):
        fB, fW = reaction(B, W, self.s)
        return self.luB.solve(B + self.dt * fB), self.luW.solve(W + self.dt * fW)


def simulate(s: ScaledParams, grid: Grid, ic: Field, t_end: float, dt: float = 0.05,
             snapshot_every: float | None = None, max_growth: float = 1e6, cfl: float = 0.5,
             callback=None) -> SimResult:
    """Advance ``ic`` from ``ic.t`` to ``t_end``; dt is shrunk when the reaction rate demands it."""
    if ic.B.size != grid.n_points:
        raise ValueError("initial field does not match the grid")
    if t_end <= ic.t or dt <= 0:
        raise ValueError("need t_end > ic.t and dt > 0")
    if grid.dx > MAX_DX:
        raise ValueError(f"dx = {grid.dx!r} does not resolve the fast layer (limit {MAX_DX})")
    st = _Stepper(s, grid)
    B, W, t = ic.B.copy(), ic.W.copy(), ic.t
    norm0 = max(float(np.max(B)), float(np.max(W)), 1.0)
    snaps = [Field(B.copy(), W.copy(), t)]
    every = snapshot_every if snapshot_every is not None else t_end - t
    next_snap = t + every
    warnings: list[str] = []
    dt_cur = dt
    n_steps = 0
    while t < t_end - 1e-12:
        rate = _reaction_rate(B, W, s)
        dt_try = min(dt, cfl / rate, t_end - t, next_snap - t if next_snap > t else dt)
        # keep the factorization: only change dt by halving, or to hit an output time
        if dt_try < dt_cur:
            while dt_cur > dt_try:
                dt_cur *= 0.5
        elif dt_cur < dt and dt_cur * 2 <= dt_try:
            dt_cur *= 2
        h = min(dt_cur, t_end - t, next_snap - t if next_snap > t + 1e-15 else dt_cur)
        st.set_dt(h)
        B, W = st.step(B, W)
        t += h
        n_steps += 1
        mB, mW = float(np.min(B)), float(np.min(W))
        if mB < 0 or mW < 0:
            if min(mB, mW) < -NEG_CLAMP:
                raise NumericalError(f"negative field {min(mB, mW)!r} at t = {t!r}; reduce dt")
            warnings.append(f"clamped undershoot {min(mB, mW)!r} at t = {t!r}")
            np.maximum(B, 0.0, out=B)
            np.maximum(W, 0.0, out=W)
        big = max(float(np.max(B)), float(np.max(W)))
        if not math.isfinite(big) or big > max_growth * norm0:
            raise NumericalError(f"instability: field norm {big!r} at t = {t!r}")
        if abs(t - t_end) <= 1e-9 * max(1.0, abs(t_end)):
            t = t_end  # summed step sizes drift by a few ulps
        if t >= next_snap - 1e-9:
            t = min(max(t, next_snap), t_end)
            snaps.append(Field(B.copy(), W.copy(), t))
            next_snap += every
            if callback is not None:
                callback(snaps[-1])
    final = Field(B, W, t)
    if snaps[-1].t < t - 1e-12:
        snaps.append(final.copy())
    if warnings:
        log.warning("%d nonnegativity clamps", len(warnings))
    st.set_dt(dt)
    return SimResult(grid, snaps, final, dt, warnings)


def mass_balance_defect(f0: Field, f1: Field, s: ScaledParams, grid: Grid) -> float:
    """|d/dt int W - int (psi - (phi + omega B + theta B^2) W)| per unit time for one implicit step f0 -> f1.

    Uses the trapezoid-weighted sum under which the no-flux Laplacian integrates to zero exactly.
    """
    h = f1.t - f0.t
    wts = np.full(grid.n_points, grid.dx)
    wts[0] = wts[-1] = 0.5 * grid.dx
    _, fW = reaction(f0.B, f0.W, s)
    return abs(float(wts @ (f1.W - f0.W)) / h - float(wts @ fW))


def write_snapshot(path, f: Field, grid: Grid) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("x,B,W\n")
        for x, b, w in zip(grid.x, f.B, f.W):
            fh.write(f"{x:.15g},{b:.15g},{w:.15g}\n")


# ------------------------------------------------------------- measurement


def _crossings(d: np.ndarray) -> np.ndarray:
    """Indices i with a sign change between d[i] and d[i+1]; exact zeros count as positive."""
    pos = d >= 0
    return np.nonzero(pos[:-1] != pos[1:])[0]


def front_positions(snapshots: list[Field], x: np.ndarray, level: float | None = None) -> np.ndarray:
    pos = []
    for f in snapshots:
        lev = 0.5 * float(np.max(f.B)) if level is None else level
        d = f.B - lev
        idx = _crossings(d)
        if idx.size != 1:
            raise RegimeError(f"not a front: {idx.size} level crossings at t = {f.t!r}", "NOT_A_FRONT")
        i = idx[0]
        den = d[i] - d[i + 1]
        pos.append(x[i] + ((x[i + 1] - x[i]) * d[i] / den if den != 0 else 0.0))
    return np.array(pos)


@dataclass(frozen=True)
class SpeedFit:
    c: float
    residual: float
    n: int


def measure_front_speed(traj: SimResult, level: float | None = None, tail: float = 0.5) -> SpeedFit:
    """Least-squares slope of the front position over the final fraction ``tail`` of the run."""
    snaps = traj.snapshots
    t = traj.times
    keep = t >= t[0] + (1.0 - tail) * (t[-1] - t[0])
    sel = [f for f, k in zip(snaps, keep) if k]
    if len(sel) < 3:
        raise RegimeError("too few snapshots to fit a speed", "TOO_FEW_SNAPSHOTS")
    if level is None:
        level = 0.5 * float(np.max(sel[-1].B))
    pos = front_positions(sel, traj.grid.x, level)
    tt = t[keep]
    A = np.column_stack([tt, np.ones_like(tt)])
    coef, *_ = np.linalg.lstsq(A, pos, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - pos) ** 2)))
    return SpeedFit(float(coef[0]), res, len(tt))


# ---------------------------------------------------------- classification


def fast_width(s: ScaledParams) -> float:
    """Interface width delta of the Maxwell-level front written as tanh(xi/delta)."""
    w = maxwell_level(s.a)
    return 2.0 / (math.sqrt(w / 2.0) * b_plus(w, s.a))


def local_bplus(W: np.ndarray, a: float) -> np.ndarray:
    r = a + 0.25 - 1.0 / np.maximum(W, 1e-300)
    return np.where(r >= 0, 0.5 + np.sqrt(np.maximum(r, 0.0)), np.nan)


def plateau_span(f: Field, s: ScaledParams, x: np.ndarray, rel: float = 0.1) -> float:
    """Longest run where B stays within ``rel`` of the local M+ value b_+(W)."""
    bp = local_bplus(f.W, s.a)
    ok = np.isfinite(bp) & (np.abs(f.B - np.nan_to_num(bp)) <= rel * np.nan_to_num(bp)) & (f.B > 0)
    best = cur = 0
    dx = x[1] - x[0]
    for v in ok:
        cur = cur + 1 if v else 0
        best = max(best, cur)
    return best * dx


def dominant_wavelength(B: np.ndarray, dx: float) -> float:
    y = B - np.mean(B)
    power = np.abs(np.fft.rfft(y * np.hanning(y.size)))
    k = np.fft.rfftfreq(y.size, dx)
    power[0] = 0.0
    i = int(np.argmax(power))
    return 1.0 / k[i] if k[i] > 0 else math.inf


@dataclass(frozen=True)
class Classification:
    label: str
    crossings: int
    plateau: float
    wavelength: float | None


def classify_detail(f: Field, s: ScaledParams, x: np.ndarray | None = None) -> Classification:
    n = f.B.size
    if x is None:
        x = np.arange(n, dtype=float)
    dx = x[1] - x[0]
    Bmax = float(np.max(f.B))
    if Bmax < 1e-3:
        return Classification("uniform_bare", 0, 0.0, None)
    Bmin = float(np.min(f.B))
    if (Bmax - Bmin) < 0.02 * Bmax:
        return Classification("uniform_veg", 0, 0.0, None)
    level = 0.5 * (Bmax + Bmin) if Bmin > 0.1 * Bmax else 0.5 * Bmax
    d = f.B - level
    idx = _crossings(d)
    nc = idx.size
    plat = plateau_span(f, s, x)
    if Bmin > 0.1 * Bmax and nc >= 4:
        return Classification("turing", nc, plat, dominant_wavelength(f.B, dx))
    if nc == 1:
        return Classification("front", nc, plat, None)
    if nc == 2:
        inside_veg = d[idx[0] + 1] >= 0  # same zero convention as _crossings
        if inside_veg:
            label = "spot" if plat > 5.0 * fast_width(s) else "pulse"
        else:
            label = "gap"
        return Classification(label, nc, plat, None)
    if nc >= 4:
        spacing = np.diff(x[idx])
        return Classification("periodic", nc, plat, float(2.0 * np.mean(spacing)))
    return Classification("other", nc, plat, None)


def classify_pattern(f: Field, s: ScaledParams, x: np.ndarray | None = None) -> str:
    return classify_detail(f, s, x).label


# ------------------------------------------------------ initial conditions


def _smooth_step(x, x0, width):
    return 0.5 * (1.0 + np.tanh((x - x0) / width))


def _veg_state(s: ScaledParams):
    plus = [e for e in full_equilibria(s) if e.manifold == "Mplus"]
    if not plus:
        return None
    e = max(plus, key=lambda e: e.b)
    return e.b, e.w


def initial_conditions(kind: str, s: ScaledParams, grid: Grid, **opt) -> Field:
    """Initial fields of the named ``kind`` (step, bump, gap, random_perturbation, from_skeleton)."""
    x = grid.x
    L = grid.length
    wb = s.psi / s.phi
    veg = _veg_state(s)
    width = opt.get("width", 1.0)
    if kind == "step":
        if veg is None:
            bv, wv = b_plus(maxwell_level(s.a), s.a), maxwell_level(s.a)
        else:
            bv, wv = veg
        x0 = opt.get("x0", 0.5 * L)
        h = _smooth_step(x, x0, width)
        f = Field(bv * h, wb + (wv - wb) * h)
        return f.mirrored() if opt.get("mirror", False) else f
    if kind == "bump":
        half = opt.get("half_width", 0.05 * L)
        x0 = opt.get("x0", 0.5 * L)
        amp = opt.get("amplitude", b_plus(maxwell_level(s.a), s.a))
        h = _smooth_step(x, x0 - half, width) * (1.0 - _smooth_step(x, x0 + half, width))
        return Field(amp * h, np.full_like(x, wb) - opt.get("water_dip", 0.0) * h)
    if kind == "gap":
        if veg is None:
            raise RegimeError("gap initial condition needs a vegetated uniform state", "NO_VEGETATED_STATE")
        bv, wv = veg
        half = opt.get("half_width", 0.05 * L)
        x0 = opt.get("x0", 0.5 * L)
        h = _smooth_step(x, x0 - half, width) * (1.0 - _smooth_step(x, x0 + half, width))
        return Field(bv * (1.0 - h), wv + (wb - wv) * h)
    if kind == "random_perturbation":
        rng = np.random.default_rng(opt.get("seed", 0))
        base = opt.get("state", "veg")
        if base == "veg" and veg is not None:
            b0, w0 = veg
        else:
            b0, w0 = 0.0, wb
        amp = opt.get("amplitude", 1e-3)
        B = np.maximum(b0 + amp * rng.standard_normal(x.size), 0.0)
        W = np.maximum(w0 + amp * rng.standard_normal(x.size), 0.0)
        return Field(B, W)
    if kind == "from_skeleton":
        return _from_skeleton(s, grid, opt["skeleton"], opt.get("x0"))
    raise ValueError(f"unknown initial condition kind {kind!r}")


def _profile_from_slow(Xs, ws, bplus_side: bool, a: float):
    return np.array([b_plus(w, a) if bplus_side else 0.0 for w in ws])


def _from_skeleton(s: ScaledParams, grid: Grid, sk, x0=None) -> Field:
    """Spatial profile shadowing a singular skeleton; slow arcs in X = eps x, jumps as fast tanh layers."""
    from .orbits.skeleton import SlowSegment
    from .slow import F, LevelSet, potential
    from .params import derive_coeffs
    from scipy.integrate import solve_ivp

    co = derive_coeffs(s)
    eps = s.eps
    x = grid.x
    L = grid.length
    wstar = maxwell_level(s.a)
    n = math.sqrt(wstar / 2.0)
    bw = b_plus(wstar, s.a)

    def plus_arc(w0, q0, length):
        sol = solve_ivp(lambda X, y: [y[1], float(F(y[0], co))], (0.0, length), [w0, q0], dense_output=True,
                        method="DOP853", rtol=1e-10, atol=1e-12)
        return sol.sol

    segs = sk.slow_segments()
    if sk.kind == "spot":
        plus = segs[1]
        Lp = plus.length / eps
        if Lp > L:
            raise RegimeError("skeleton longer than the grid", "SKELETON_TOO_LONG")
        c = 0.5 * L if x0 is None else x0
        xl, xr = c - 0.5 * Lp, c + 0.5 * Lp
        sol = plus_arc(plus.start[0], plus.start[1], plus.length)
        W = np.empty_like(x)
        B = np.empty_like(x)
        r = math.sqrt(s.phi)
        wb = s.psi / s.phi
        left, right = x < xl, x > xr
        mid = ~(left | right)
        W[left] = wb + (wstar - wb) * np.exp(r * eps * (x[left] - xl))
        W[right] = wb + (wstar - wb) * np.exp(-r * eps * (x[right] - xr))
        W[mid] = sol(eps * (x[mid] - xl))[0]
        bp = local_bplus(W, s.a)
        prof = 1.0 / (1.0 + np.exp(-np.clip(n * bw * (x - xl), -700, 700))) / (1.0 + np.exp(np.clip(n * bw * (x - xr), -700, 700)))
        B = np.nan_to_num(bp, nan=bw) * prof
        return Field(np.maximum(B, 0.0), np.maximum(W, 0.0))
    if sk.kind == "gap":
        m0 = segs[1]
        Lg = m0.length / eps
        if Lg > L:
            raise RegimeError("skeleton longer than the grid", "SKELETON_TOO_LONG")
        c = 0.5 * L if x0 is None else x0
        xl, xr = c - 0.5 * Lg, c + 0.5 * Lg
        from .slow import m0_arc

        W = np.empty_like(x)
        mid = (x >= xl) & (x <= xr)
        W[mid] = m0_arc(wstar, m0.start[1], eps * (x[mid] - xl), s)[0]
        # outside: follow W^u / W^s of the saddle back toward it
        q_g = m0.start[1]
        solL = plus_arc(wstar, -q_g, 60.0)
        XL = eps * (xl - x[x < xl])
        wl = solL(np.minimum(XL, 60.0))[0]
        ws = sk.info["w_saddle"]
        W[x < xl] = np.where(np.abs(wl - ws) < abs(wstar - ws) * 1.5, wl, ws)
        XR = eps * (x[x > xr] - xr)
        wr = solL(np.minimum(XR, 60.0))[0]
        W[x > xr] = np.where(np.abs(wr - ws) < abs(wstar - ws) * 1.5, wr, ws)
        bp = np.nan_to_num(local_bplus(W, s.a), nan=bw)
        prof = 1.0 - 1.0 / (1.0 + np.exp(-np.clip(n * bw * (x - xl), -700, 700))) / (1.0 + np.exp(np.clip(n * bw * (x - xr), -700, 700)))
        return Field(np.maximum(bp * prof, 0.0), np.maximum(W, 0.0))
    if sk.kind == "periodic":
        m0, plus = segs[0], segs[1]
        L0, Lp = m0.length / eps, plus.length / eps
        P = L0 + Lp
        if P > L:
            raise RegimeError("skeleton longer than the grid", "SKELETON_TOO_LONG")
        from .slow import m0_arc

        sol = plus_arc(plus.start[0], plus.start[1], plus.length)
        ph = np.mod(x - (0.0 if x0 is None else x0), P)
        W = np.empty_like(x)
        on0 = ph < L0
        W[on0] = m0_arc(m0.start[0], m0.start[1], eps * ph[on0], s)[0]
        W[~on0] = sol(eps * (ph[~on0] - L0))[0]
        bp = np.nan_to_num(local_bplus(W, s.a), nan=bw)
        # distance to nearest jump, signed so that the vegetated part is positive
        d_up = ph - L0
        d_dn = P - ph
        z = np.where(on0, np.maximum(-ph, d_up), np.minimum(d_up, d_dn))
        B = bp / (1.0 + np.exp(-np.clip(n * bw * z, -700, 700)))
        return Field(np.maximum(B, 0.0), np.maximum(W, 0.0))
    raise ValueError(f"no spatial realization for skeleton kind {sk.kind!r}")
