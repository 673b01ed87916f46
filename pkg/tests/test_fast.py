import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from drypattern.errors import DomainError
from drypattern.fast import (
    b_plus,
    c_branch,
    c_range,
    fast_eigenvalues,
    fast_equilibria,
    fast_front_profile,
    fast_hamiltonian,
    fast_rhs,
    het_speed,
    maxwell_level,
    wh_of_c,
    window,
)


def test_maxwell_level_equilibria():
    a = 0.25
    eq = fast_equilibria(maxwell_level(a), a)
    assert eq.b_plus == pytest.approx(2 / 3, rel=1e-14)
    assert eq.b_minus == pytest.approx(1 / 3, rel=1e-14)


def test_below_window_only_bare_soil():
    a = 0.3
    eq = fast_equilibria(4 / (1 + 4 * a) * 0.99, a)
    assert eq.b_plus is None and eq.b_minus is None and eq.b0 == 0


def test_equilibria_against_cubic_roots(rng):
    for _ in range(100):
        a = rng.uniform(0.01, 1)
        lo, hi = window(a)
        w0 = rng.uniform(lo, hi)
        eq = fast_equilibria(w0, a)
        roots = np.sort(np.roots([w0, -w0, 1 - a * w0, 0]).real)
        assert np.allclose(roots, sorted([0.0, eq.b_minus, eq.b_plus]), atol=1e-12)


def test_maxwell_speeds_vanish():
    a = 0.25
    for sg in "+-":
        assert abs(c_branch(maxwell_level(a), a, sg)) < 1e-15


def test_reference_front_speed():
    a = 0.25
    c = het_speed(maxwell_level(a) + 0.1, a, "+").c
    assert 0.16 <= c <= 0.18


def test_profile_solves_fast_layer(rng):
    xi = np.linspace(-40, 40, 801)
    for _ in range(30):
        a = rng.uniform(0.01, 1)
        lo, hi = window(a)
        w0 = rng.uniform(lo, min(hi, 20 * lo))
        for sg in "+-":
            h = het_speed(w0, a, sg)
            b, p = fast_front_profile(w0, a, sg, xi).T
            # exact derivatives of the logistic: b' = n b (b+ - b), b'' = n (b+ - 2b) b'
            pp = h.n * (h.b_plus - 2 * b) * p
            _, rhs = fast_rhs(b, p, w0, a, h.c)
            assert np.max(np.abs(pp - rhs)) < 1e-10


def test_profile_asymptotics_and_midpoint():
    a, w0 = 0.25, 3.5
    bp = b_plus(w0, a)
    up = fast_front_profile(w0, a, "-", [-60.0, 0.0, 60.0])[:, 0]
    assert up == pytest.approx([0.0, bp / 2, bp], abs=1e-12)
    down = fast_front_profile(w0, a, "+", [-60.0, 0.0, 60.0])[:, 0]
    assert down == pytest.approx([bp, bp / 2, 0.0], abs=1e-12)


def test_mirror_symmetry_of_fast_fronts(rng):
    xi = np.linspace(-30, 30, 301)
    for _ in range(20):
        a = rng.uniform(0.01, 1)
        lo, hi = window(a)
        w0 = rng.uniform(lo, min(hi, 10 * lo))
        assert c_branch(w0, a, "+") == -c_branch(w0, a, "-")
        f = fast_front_profile(w0, a, "+", xi)
        g = fast_front_profile(w0, a, "-", -xi)
        assert np.allclose(f[:, 0], g[:, 0], atol=1e-14)
        assert np.allclose(f[:, 1], -g[:, 1], atol=1e-14)


def test_hamiltonian_gauge_and_maxwell_balance():
    a = 0.3
    assert fast_hamiltonian(0.0, 0.0, 3.0, a) == 0
    w = maxwell_level(a)
    assert abs(fast_hamiltonian(b_plus(w, a), 0.0, w, a)) < 1e-14


def test_hamiltonian_conserved_at_zero_speed(rng):
    worst = 0.0
    for _ in range(50):
        a = 10 ** rng.uniform(-2, 0)
        lo, hi = window(a)
        w0 = rng.uniform(lo * 1.01, min(hi, 5 * lo))
        bp = b_plus(w0, a)
        stop = lambda x, y: abs(y[0]) - 3 * bp
        stop.terminal = True
        sol = solve_ivp(lambda x, y: fast_rhs(y[0], y[1], w0, a, 0.0), (0, 50),
                        [rng.uniform(0.05, 0.95) * bp, 0.0], method="DOP853", rtol=1e-12, atol=1e-14, events=stop)
        H = fast_hamiltonian(sol.y[0], sol.y[1], w0, a)
        worst = max(worst, float(np.max(np.abs(H - H[0]))))
    assert worst < 1e-8


def test_touchdown_level_endpoints(rng):
    for a in rng.uniform(0.01, 1, 100):
        for c, w in ((-1 / math.sqrt(2 * (1 + 4 * a)), 4 / (1 + 4 * a)),
                     (0.0, 9 / (2 + 9 * a)),
                     (1 / math.sqrt(2 * a), 1 / a)):
            assert abs(wh_of_c(c, a, "+") - w) <= 1e-12 * w


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.001, 0.999))
def test_speed_water_round_trip(a, frac):
    lo, hi = window(a)
    w0 = lo + frac * (hi - lo)
    for sg in "+-":
        c = c_branch(w0, a, sg)
        assert wh_of_c(c, a, sg) == pytest.approx(w0, rel=1e-7)


def test_speed_range_errors():
    a = 0.2
    lo, hi = c_range(a, "+")
    with pytest.raises(DomainError):
        wh_of_c(hi * 1.01, a, "+")
    with pytest.raises(DomainError):
        het_speed(window(a)[0] * 0.5, a)


def test_eigenvalues_saddles():
    a, w0 = 0.25, 3.5
    ev = fast_eigenvalues(w0, a, c=0.1)
    for key in ("zero", "plus"):
        lam = np.sort(ev[key].real)
        assert lam[0] < 0 < lam[1]
