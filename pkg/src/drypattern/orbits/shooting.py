"""Finite-eps refinement of glued fronts and symmetric spots in the full spatial ODE.

The connection is posed as a boundary-value problem on a truncated line in the
slow variable X = eps*xi, with projection conditions onto the unstable subspace
of the left state and the stable subspace of the right state, one phase
condition pinning the fast jump, and the speed c as free parameter.  A pure
initial-value shot would have to track an orbit hugging a saddle-type slow
manifold for an X-distance of order one, amplifying errors like exp(1/eps).
"""
from __future__ import annotations

import math
import numpy as np
from scipy.integrate import solve_bvp, solve_ivp

from ..equilibria import full_equilibria
from ..errors import NumericalError, RegimeError
from ..fast import b_plus, maxwell_level
from ..params import ScaledParams, derive_coeffs
from ..slow import F, F_prime, saddle_and_center
from .fronts import FrontResult, TouchdownPoint, find_primary_fronts


def spatial_rhs_X(y, c: float, s: ScaledParams, eps: float):
    """Full spatial ODE in the slow variable X; y has shape (4, m)."""
    b, p, w, q = y
    f = w * b ** 3 - w * b ** 2 + (1.0 - s.a * w) * b
    return np.vstack([
        p / eps,
        (f - c * p) / eps,
        q,
        -s.psi + (s.phi + s.omega * b + s.theta * b * b) * w - eps * c * q,
    ])


def spatial_jacobian_X(y, c: float, s: ScaledParams, eps: float) -> np.ndarray:
    b, p, w, q = y
    fb = 3 * w * b * b - 2 * w * b + (1 - s.a * w)
    fw = b ** 3 - b * b - s.a * b
    gb = (s.omega + 2 * s.theta * b) * w
    gw = s.phi + s.omega * b + s.theta * b * b
    return np.array([
        [0.0, 1.0 / eps, 0.0, 0.0],
        [fb / eps, -c / eps, fw / eps, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [gb, 0.0, gw, -eps * c],
    ])


def _projector(J: np.ndarray, keep: str) -> np.ndarray:
    """Rows annihilating the subspace named by ``keep`` ('unstable' or 'stable')."""
    vals, left = np.linalg.eig(J.T)
    drop = vals.real < 0 if keep == "unstable" else vals.real > 0
    rows = left[:, drop].T
    if rows.shape[0] != 2:
        raise RegimeError(f"expected a 2-dimensional {keep} subspace, got eigenvalues {vals}", "NOT_HYPERBOLIC")
    return np.real_if_close(rows)


def _real_rows(rows: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(rows):
        return np.vstack([rows[0].real, rows[0].imag]) if np.allclose(rows[0], rows[1].conj()) else rows.real
    return rows


def _states(s: ScaledParams):
    eq = full_equilibria(s)
    P0 = next(e for e in eq if e.manifold == "M0")
    plus = [e for e in eq if e.manifold == "Mplus" and e.local_kind == "saddle"]
    if not plus:
        raise RegimeError("no saddle on M+", "NO_SADDLE")
    Ps = plus[-1]
    return np.array([0.0, 0.0, P0.w, 0.0]), np.array([Ps.b, 0.0, Ps.w, 0.0])


def _mesh(L0: float, L1: float, eps: float, n_fast: int = 400, n_slow: int = 150) -> np.ndarray:
    core = min(30.0 * eps, 0.5 * min(L0, L1))
    left = -core - (L0 - core) * (np.linspace(1.0, 0.0, n_slow, endpoint=False)) ** 2
    mid = np.linspace(-core, core, n_fast)
    right = core + (L1 - core) * (np.linspace(0.0, 1.0, n_slow + 1)[1:]) ** 2
    return np.concatenate([left, mid, right])


def _plus_arc_guess(w0: float, q0: float, s: ScaledParams, Xs: np.ndarray, w_s: float) -> tuple[np.ndarray, np.ndarray]:
    co = derive_coeffs(s)
    sol = solve_ivp(lambda X, y: [y[1], float(F(y[0], co))], (0.0, Xs[-1]), [w0, q0], t_eval=Xs,
                    method="DOP853", rtol=1e-10, atol=1e-12)
    w = np.full(Xs.size, w_s)
    q = np.zeros(Xs.size)
    n = sol.y.shape[1]
    w[:n], q[:n] = sol.y[0], sol.y[1]
    # stop following once the leading-order orbit starts to leave the saddle
    dist = np.abs(w - w_s)
    i = int(np.argmin(dist[:n])) if n else 0
    w[i:], q[i:] = w_s, 0.0
    return w, q


def _front_guess(s: ScaledParams, td: TouchdownPoint, eps: float, X: np.ndarray, Pl, Pr) -> np.ndarray:
    w_e = Pl[2]
    r = math.sqrt(s.phi)
    y = np.zeros((4, X.size))
    neg = X <= 0
    y[2, neg] = w_e + (td.w - w_e) * np.exp(r * X[neg])
    y[3, neg] = r * (y[2, neg] - w_e)
    wpos, qpos = _plus_arc_guess(td.w, td.q, s, X[~neg], Pr[2])
    y[2, ~neg], y[3, ~neg] = wpos, qpos
    bp_loc = np.array([b_plus(max(w, 1e-12), s.a) if s.a + 0.25 - 1.0 / max(w, 1e-12) > 0 else 0.5 for w in y[2]])
    n = math.sqrt(td.w / 2.0)
    z = np.clip(n * b_plus(td.w, s.a) * X / eps, -700, 700)
    y[0] = bp_loc / (1.0 + np.exp(-z))
    y[1] = eps * np.gradient(y[0], X)
    return y


def _decay_length(rate: float, amp: float, tiny: float = 1e-5) -> float:
    return max(2.0, math.log(max(abs(amp), 10 * tiny) / tiny) / rate)


def shoot_4d(s: ScaledParams, eps: float, c_guess: float | None = None, kind: str = "up",
             front: FrontResult | None = None, tol: float = 1e-7, max_nodes: int = 300000) -> FrontResult:
    """Refine a primary front at finite eps.

    ``kind='up'`` connects bare soil on the left to the vegetated saddle on the
    right; ``kind='down'`` is its mirror image, obtained from mirrored data.
    """
    if front is None:
        prim = find_primary_fronts(s)
        if not prim:
            raise RegimeError("no leading-order primary front to refine", "NO_FRONT")
        front = prim[0] if c_guess is None else min(prim, key=lambda f: abs(f.c - c_guess))
    td = front.touchdown
    c0 = front.c if c_guess is None else c_guess
    P0, Ps = _states(s)
    co = derive_coeffs(s)
    sad, _ = saddle_and_center(co)
    L0 = _decay_length(math.sqrt(s.phi), td.w - P0[2])
    L1 = _decay_length(math.sqrt(max(float(F_prime(sad.w, co)), 1e-8)), td.w - sad.w)
    X = _mesh(L0, L1, eps)
    y = _front_guess(s, td, eps, X, P0, Ps)
    b_mid = 0.5 * b_plus(td.w, s.a)
    if kind == "down":
        X = -X[::-1]
        y = y[:, ::-1] * np.array([1, -1, 1, -1])[:, None]
        Pl, Pr, c0 = Ps, P0, -c0
    elif kind == "up":
        Pl, Pr = P0, Ps
    else:
        raise ValueError("kind must be 'up' or 'down'")

    i0 = int(np.argmin(np.abs(X)))
    X = X - X[i0]

    # The phase condition b = b_mid sits at X = 0, so split there: both halves are
    # mapped to t in [0, 1] and glued by continuity.
    Xl, Xr = X[X <= 0], X[X >= 0]
    yl, yr = y[:, X <= 0], y[:, X >= 0]
    Ll, Lr = -Xl[0], Xr[-1]
    # map both halves to t in [0, 1]: left half runs X = -Ll (1 - t), right half X = Lr t
    tl = 1.0 + Xl / Ll
    tr = Xr / Lr
    t = np.unique(np.concatenate([tl, tr]))
    Yl = np.array([np.interp(t, tl, row) for row in yl])
    Yr = np.array([np.interp(t, tr, row) for row in yr])
    Y = np.vstack([Yl, Yr])

    def fun2(tt, YY, p):
        return np.vstack([Ll * spatial_rhs_X(YY[:4], p[0], s, eps), Lr * spatial_rhs_X(YY[4:], p[0], s, eps)])

    def bc2(Ya, Yb, p):
        c = p[0]
        Rl = _real_rows(_projector(spatial_jacobian_X(Pl, c, s, eps), "unstable"))
        Rr = _real_rows(_projector(spatial_jacobian_X(Pr, c, s, eps), "stable"))
        return np.concatenate([
            Rl @ (Ya[:4] - Pl),
            Yb[:4] - Ya[4:],
            Rr @ (Yb[4:] - Pr),
            [Yb[0] - b_mid],
        ])

    sol = solve_bvp(fun2, bc2, t, Y, p=[c0], tol=tol, max_nodes=max_nodes, verbose=0)
    if sol.status != 0:
        raise NumericalError(f"collocation did not converge: {sol.message}")
    c = float(sol.p[0])
    res = float(np.max(sol.rms_residuals))
    w_td = float(sol.sol(1.0)[2])
    q_td = float(sol.sol(1.0)[3])
    tdp = TouchdownPoint(c, w_td, q_td)
    Xout = np.concatenate([-Ll * (1.0 - sol.x), Lr * sol.x])
    yout = np.hstack([sol.y[:4], sol.y[4:]])
    return FrontResult("shooting_refined", c, tdp, front.H_level, res, j=front.j,
                       extra={"eps": eps, "kind": kind, "c_leading": front.c, "X": Xout, "y": yout,
                              "n_nodes": int(sol.x.size)})


def shoot_symmetric_spot(s: ScaledParams, eps: float, tol: float = 1e-7, max_nodes: int = 300000) -> dict:
    """Stationary spot in the full ODE via reversibility: p = q = 0 at the midpoint X = 0.

    Returns the take-off point (w, q) where b crosses b_+/2 on the way up, to be
    compared with the singular jump point of the skeleton.
    """
    from .skeleton import build_spot_skeleton

    sk = build_spot_skeleton(s, 1)
    P0 = np.array([0.0, 0.0, s.psi / s.phi, 0.0])
    wstar = maxwell_level(s.a)
    q_sd = sk.segments[0].end[1]
    plus = sk.segments[2]
    half = 0.5 * plus.length
    r = math.sqrt(s.phi)
    L0 = _decay_length(r, wstar - P0[2])
    # X runs from -(L0 + half) to 0; the jump sits at X = -half
    Xa = _mesh(L0, half, eps)
    X = Xa - Xa[-1]
    y = np.zeros((4, X.size))
    Xj = -half
    left = X <= Xj
    y[2, left] = P0[2] + (wstar - P0[2]) * np.exp(r * (X[left] - Xj))
    y[3, left] = r * (y[2, left] - P0[2])
    co = derive_coeffs(s)
    Xr = X[~left] - Xj
    sol0 = solve_ivp(lambda t, u: [u[1], float(F(u[0], co))], (0.0, Xr[-1]), [wstar, q_sd], t_eval=Xr,
                     method="DOP853", rtol=1e-10, atol=1e-12)
    y[2, ~left], y[3, ~left] = sol0.y[0], sol0.y[1]
    bp_loc = np.array([b_plus(w, s.a) for w in y[2]])
    n = math.sqrt(wstar / 2.0)
    z = np.clip(n * b_plus(wstar, s.a) * (X - Xj) / eps, -700, 700)
    y[0] = bp_loc / (1.0 + np.exp(-z))
    y[1] = eps * np.gradient(y[0], X)

    def fun(x, yy):
        return spatial_rhs_X(yy, 0.0, s, eps)

    def bc(ya, yb):
        Rl = _real_rows(_projector(spatial_jacobian_X(P0, 0.0, s, eps), "unstable"))
        return np.concatenate([Rl @ (ya - P0), [yb[1], yb[3]]])

    sol = solve_bvp(fun, bc, X, y, tol=tol, max_nodes=max_nodes)
    if sol.status != 0:
        raise NumericalError(f"symmetric spot collocation did not converge: {sol.message}")
    xs = np.linspace(sol.x[0], sol.x[-1], 200001)
    ys = sol.sol(xs)
    wb = 0.5 * np.array([b_plus(w, s.a) for w in ys[2]])
    idx = np.nonzero((ys[0][:-1] - wb[:-1]) * (ys[0][1:] - wb[1:]) <= 0)[0]
    if idx.size == 0:
        raise NumericalError("refined spot has no fast jump")
    i = idx[0]
    return {"w_jump": float(ys[2, i]), "q_jump": float(ys[3, i]), "w_singular": wstar, "q_singular": q_sd,
            "X": sol.x, "y": sol.y, "residual": float(np.max(sol.rms_residuals))}
