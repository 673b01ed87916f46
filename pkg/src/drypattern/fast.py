"""Fast reduced layer: the planar (b, p) system at frozen water level w0.

    b' = p,   p' = w0 b^3 - w0 b^2 + (1 - a w0) b - c p

Speed labels follow the closed forms c^{+/-}(w0) = +/- sqrt(w0/2) (3 W - 1/2),
W = sqrt(a + 1/4 - 1/w0).  The slope n of the logistic profile b' = n b (b_+ - b)
is whichever sign actually solves the ODE at that speed: n = -/+ sqrt(w0/2).
So the '+' branch is the descending jump b_+ -> 0 and the '-' branch the
ascending jump 0 -> b_+ (as xi increases).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError

Sign = Literal["+", "-"]


def _sgn(sign: str) -> float:
    if sign in ("+", 1, "plus"):
        return 1.0
    if sign in ("-", -1, "minus"):
        return -1.0
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def window(a: float) -> tuple[float, float]:
    """The open interval U_a on which M+ is normally hyperbolic."""
    return 4.0 / (1.0 + 4.0 * a), (1.0 / a if a > 0 else math.inf)


def maxwell_level(a: float) -> float:
    """Water level at which both fast heteroclinics are stationary."""
    return 9.0 / (2.0 + 9.0 * a)


def curly_w(w: float, a: float) -> float:
    r = a + 0.25 - 1.0 / w
    if r < 0:
        if r > -1e-14:  # rounding at the window edge
            return 0.0
        raise DomainError(f"a + 1/4 - 1/w < 0 at w = {w!r}", "SQRT_NEGATIVE")
    return math.sqrt(r)


def b_plus(w: float, a: float) -> float:
    return 0.5 + curly_w(w, a)


def in_window(w0: float, a: float) -> bool:
    lo, hi = window(a)
    return lo < w0 < hi


@dataclass(frozen=True)
class FastEquilibria:
    b0: float
    b_minus: float | None
    b_plus: float | None
    w0: float
    a: float
    in_window: bool


@dataclass(frozen=True)
class FastHetero:
    w0: float
    sign: str
    n: float
    c: float
    b_plus: float


def fast_equilibria(w0: float, a: float) -> FastEquilibria:
    if w0 <= 0 or a < 0:
        raise DomainError("need w0 > 0 and a >= 0", "BAD_INPUT")
    r = a + 0.25 - 1.0 / w0
    if r > 0:
        W = math.sqrt(r)
        return FastEquilibria(0.0, 0.5 - W, 0.5 + W, w0, a, in_window(w0, a))
    return FastEquilibria(0.0, None, None, w0, a, False)


def c_branch(w0: float, a: float, sign: str = "+") -> float:
    return _sgn(sign) * math.sqrt(w0 / 2.0) * (3.0 * curly_w(w0, a) - 0.5)


def het_speed(w0: float, a: float, sign: str = "+") -> FastHetero:
    if not in_window(w0, a):
        lo, hi = window(a)
        raise DomainError(f"w0 = {w0!r} outside U_a = ({lo!r}, {hi!r})", "OUTSIDE_WINDOW")
    s = _sgn(sign)
    W = curly_w(w0, a)
    root = math.sqrt(w0 / 2.0)
    return FastHetero(w0, "+" if s > 0 else "-", -s * root, s * root * (3.0 * W - 0.5), 0.5 + W)


def c_range(a: float, sign: str = "+") -> tuple[float, float]:
    """Speeds attained by the branch as w0 sweeps U_a (closed endpoints)."""
    lo = -1.0 / math.sqrt(2.0 * (1.0 + 4.0 * a))
    hi = 1.0 / math.sqrt(2.0 * a) if a > 0 else math.inf
    return (lo, hi) if _sgn(sign) > 0 else (-hi, -lo)


def _wh_closed(c: float, a: float, s: float) -> float:
    num = 4.0 * (9.0 + 2.0 * c * c) ** 2
    den = 3.0 * math.sqrt(2.0 * c * c * (1.0 + 4.0 * a) + 4.0 * (2.0 + 9.0 * a)) - s * math.sqrt(2.0) * c
    return num / (den * den)


def wh_of_c(c: float, a: float, sign: str = "+") -> float:
    """Inverse of c -> c^{+/-}(w0): the water level of a fast jump with speed c."""
    s = _sgn(sign)
    lo, hi = c_range(a, sign)
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if not (lo - tol <= c <= hi + tol):
        raise DomainError(f"c = {c!r} outside admissible interval [{lo!r}, {hi!r}]", "C_OUT_OF_RANGE")
    w = _wh_closed(c, a, s)
    wlo, whi = window(a)
    # Near the slow end dw/dc vanishes; confirm by a bracketed solve if the
    # closed form lands off the window or fails the round trip.
    try:
        if abs(w - wlo) <= 1e-13 * wlo:
            return wlo  # sqrt(a + 1/4 - 1/w) magnifies rounding here; trust the closed form
        if wlo <= w <= whi * (1 + 1e-13) and abs(c_branch(w, a, sign) - c) <= 1e-12 * max(1.0, abs(c)):
            return w
    except DomainError:
        pass
    return _wh_bracket(c, a, sign)


def _wh_bracket(c: float, a: float, sign: str) -> float:
    wlo, whi = window(a)
    if not math.isfinite(whi):
        whi = 1e12
    f = lambda w: c_branch(w, a, sign) - c
    fa, fb = f(wlo), f(whi)
    tol = 1e-13 * max(1.0, abs(c))
    if abs(fa) <= tol:
        return wlo
    if abs(fb) <= tol:
        return whi
    if fa * fb > 0:
        raise DomainError(f"no fast jump with speed {c!r} inside U_a", "C_OUT_OF_RANGE")
    return brentq(f, wlo, whi, xtol=1e-15, rtol=1e-15, maxiter=500)


def fast_hamiltonian(b, p, w0: float, a: float):
    return 0.5 * p * p - 0.5 * (1.0 - a * w0) * b * b + w0 * b ** 3 / 3.0 - w0 * b ** 4 / 4.0


def fast_rhs(b, p, w0: float, a: float, c: float):
    """Vector field of the fast layer; accepts scalars or arrays."""
    return p, w0 * b ** 3 - w0 * b ** 2 + (1.0 - a * w0) * b - c * p


def fast_front_profile(w0: float, a: float, sign: str, xi_grid) -> np.ndarray:
    """Closed-form heteroclinic (b, p) sampled on ``xi_grid``; shape (n, 2)."""
    h = het_speed(w0, a, sign)
    xi = np.asarray(xi_grid, dtype=float)
    z = -h.n * h.b_plus * xi
    # logistic written to avoid overflow for large |z|
    e = np.exp(-np.abs(z))
    b = np.where(z >= 0, h.b_plus * e / (1.0 + e), h.b_plus / (1.0 + e))
    p = h.n * b * (h.b_plus - b)
    return np.column_stack([b, p])


def fast_eigenvalues(w0: float, a: float, c: float = 0.0) -> dict[str, np.ndarray]:
    """Jacobian eigenvalues of the fast layer at b = 0 and b = b_+."""
    out = {}
    for name, b in (("zero", 0.0), ("plus", b_plus(w0, a) if a + 0.25 - 1 / w0 >= 0 else None)):
        if b is None:
            continue
        fb = 3 * w0 * b * b - 2 * w0 * b + (1 - a * w0)
        out[name] = np.linalg.eigvals(np.array([[0.0, 1.0], [fb, -c]]))
    return out
