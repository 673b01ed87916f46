import math

import numpy as np
import pytest

from cases import CASCADE_FAMILY, FRONT, GAP, PERIODIC, SPOT
from drypattern.errors import RegimeError
from drypattern.fast import c_range, maxwell_level, window
from drypattern.params import ScaledParams, derive_coeffs, frozen_params, phi_for_intercept
from drypattern.slow import F, SlowPlusState, critical_points_mplus, integrate_slow_plus, potential, saddle_and_center
from drypattern.orbits.fronts import (
    count_fronts,
    count_higher_fronts,
    find_front_to_periodic,
    find_primary_fronts,
    find_stationary_fronts,
    idown_point,
    idown_range,
    in_S_hp,
    stationary_expected_count,
    stationary_phi_closed_form,
)
from drypattern.orbits.shooting import shoot_4d, shoot_symmetric_spot
from drypattern.orbits.skeleton import (
    build_gap_skeleton,
    build_periodic_skeleton,
    build_spot_skeleton,
    periodic_rho_interval,
)


def loop_params(w0=3.5, eps=0.05):
    """Continued frozen family whose bare-soil level w0 sits under the homoclinic loop."""
    return frozen_params(phi_for_intercept(w0, *CASCADE_FAMILY), *CASCADE_FAMILY, eps=eps, allow_negative_theta=True)


# ----------------------------------------------------------- touch-down


def test_touchdown_at_zero_speed():
    s = FRONT
    td = idown_point(0.0, s)
    w = 9 / (2 + 9 * s.a)
    assert td.w == pytest.approx(w, rel=1e-14)
    assert td.q == pytest.approx(math.sqrt(s.phi) * (w - s.psi / s.phi), rel=1e-13)


def test_touchdown_speed_endpoints():
    s = SPOT
    lo_c, hi_c = idown_range(s.a)
    ends = sorted([idown_point(lo_c, s).w, idown_point(hi_c, s).w])
    assert ends == pytest.approx(list(window(s.a)), rel=1e-12)


# ------------------------------------------------------- primary fronts


def test_front_case_has_one_primary_front():
    fr = find_primary_fronts(FRONT)
    assert len(fr) == 1
    f = fr[0]
    assert f.residual < 1e-10 and not f.degenerate
    lo, hi = c_range(FRONT.a, "-")
    assert lo < f.c < 0 < hi  # vegetation invades


def test_single_saddle_at_most_one_front(rng):
    n = 0
    while n < 40:
        s = ScaledParams(*rng.uniform([0.01, 0, 0.05, -2, 0, 0.05], [1, 4, 3, 2, 3, 0.3]))
        if [p.kind for p in critical_points_mplus(derive_coeffs(s))] != ["saddle"]:
            continue
        n += 1
        assert len(find_primary_fronts(s)) <= 1


def test_loop_straddling_touchdown_gives_two_fronts():
    s = loop_params()
    sad, _ = saddle_and_center(derive_coeffs(s))
    fr = [f for f in find_primary_fronts(s) if f.touchdown.w < sad.w]
    assert len(fr) == 2
    assert abs(fr[0].c - fr[1].c) > 0.05
    assert all(f.residual < 1e-10 for f in fr)


def test_fronts_to_periodic_ordering_and_limit():
    s = loop_params()
    co = derive_coeffs(s)
    sad, cen = saddle_and_center(co)
    p1, p2 = [f.c for f in find_primary_fronts(s) if f.touchdown.w < sad.w]
    for frac in (0.3, 0.6, 0.9):
        H = cen.H_value + frac * (sad.H_value - cen.H_value)
        h1, h2 = [f.c for f in find_front_to_periodic(s, H)]
        assert p2 < h2 < h1 < p1
        assert in_S_hp(s, H)
    H = sad.H_value - 1e-6 * (sad.H_value - cen.H_value)
    h1, h2 = [f.c for f in find_front_to_periodic(s, H)]
    assert (h1, h2) == pytest.approx((p1, p2), abs=2e-3)


def test_higher_order_family_starts_at_primary():
    s = loop_params(eps=0.02)
    fam = count_higher_fronts(s, 1, 2)
    prim = find_primary_fronts(s)[0]
    assert fam[0] == prim
    assert [f.k for f in fam] == [0, 1, 2]
    assert fam[0].c > fam[1].c > fam[2].c  # windings push the speed along the touch-down line


@pytest.mark.slow
def test_higher_order_spacing_is_first_order():
    gaps = []
    for eps in (0.02, 0.01):
        c = [f.c for f in count_higher_fronts(loop_params(eps=eps), 1, 2)]
        gaps.append(np.abs(np.diff(c)))
    ratio = gaps[0] / gaps[1]
    assert 1.6 <= ratio[0] <= 2.4
    assert 1.5 <= ratio[1] <= 2.5


def test_count_fronts_on_loop():
    cf = count_fronts(loop_params(w0=3.3), k_max=3)
    assert cf["total"] == sum(cf["loop"]) + cf["right"]
    assert len(cf["loop"]) == 2 and min(cf["loop"]) >= 1


# --------------------------------------------------------- stationary


@pytest.mark.parametrize("a", [0.1, 0.2])
def test_two_stationary_fronts_in_continued_family(a):
    fam = (a, 1.0, -1 / 3, 1 / 36 - 0.03 ** 2)  # loop centred on the Maxwell level
    co = derive_coeffs(frozen_params(0.5, *fam, eps=0.1, allow_negative_theta=True))
    sad, cen = saddle_and_center(co)
    assert cen.w < maxwell_level(a) < sad.w
    closed = stationary_phi_closed_form(fam, allow_negative_theta=True)
    scanned = [f.extra["phi"] for f in find_stationary_fronts(fam, n=400, allow_negative_theta=True)]
    assert len(closed) == 2 == len(scanned)
    assert scanned == pytest.approx(closed, rel=1e-9)
    # inside the physical domain the same family has none
    assert stationary_expected_count(fam) == 0 and find_stationary_fronts(fam, n=200) == []


def test_stationary_scan_matches_closed_form(rng):
    seen = 0
    for _ in range(300):
        a, A = 10 ** rng.uniform(-2, 0), 10 ** rng.uniform(-1, 1)
        C, sig = -A * rng.uniform(0.05, 2), rng.uniform(-0.3, 0.3)
        fam = (a, A, C, C * C / (4 * A) - A * sig * abs(sig))
        try:
            closed = stationary_phi_closed_form(fam)
        except RegimeError:
            continue
        scanned = [f.extra["phi"] for f in find_stationary_fronts(fam, n=200)]
        assert scanned == pytest.approx(closed, rel=1e-8)
        seen += len(closed)
    assert seen >= 3


def test_stationary_front_single_saddle_unique():
    fam = (0.061459094057495264, 0.1532647771141276, -0.05327045225027178, -0.007157239956157045)
    assert stationary_expected_count(fam) == 1
    (f,) = find_stationary_fronts(fam)
    assert f.c == 0 and f.residual < 1e-12


# ----------------------------------------------------------- skeletons


def test_spot_skeleton_reference_case():
    sk = build_spot_skeleton(SPOT)
    assert [type(x).__name__ for x in sk.segments] == ["SlowSegment", "Jump", "SlowSegment", "Jump", "SlowSegment"]
    assert [j.direction for j in sk.jumps()] == ["up", "down"]
    assert sk.closure_defect() < 1e-14
    w = maxwell_level(SPOT.a)
    assert all(j.w_level == w for j in sk.jumps())
    plus = sk.segments[2]
    co = derive_coeffs(SPOT)
    assert 0.5 * plus.start[1] ** 2 + float(potential(w, co)) == pytest.approx(plus.H_level, rel=1e-14)
    assert math.isfinite(plus.length) and plus.length > 0


def test_spot_skeleton_mirror_invariant():
    sk = build_spot_skeleton(SPOT)
    assert sk.reversed_mirror().segments == sk.segments


def test_spot_winding_adds_circuits():
    a = 0.1
    fam = (a, 1.0, -1 / 3, 1 / 36 - 0.03 ** 2)
    s = frozen_params(phi_for_intercept(maxwell_level(a) + 0.005, *fam), *fam, eps=0.05, allow_negative_theta=True)
    one, two = build_spot_skeleton(s), build_spot_skeleton(s, winding=2)
    circ = two.info["circuit_period"]
    assert two.segments[2].length == pytest.approx(one.segments[2].length + circ, rel=1e-12)
    # independent route: time the closed orbit by integrating the slow flow once around
    plus = one.segments[2]
    wt = one.info["w_turn"]
    co = derive_coeffs(s)
    back = lambda X, y: y[1]
    back.direction = 1.0 if F(wt, co) > 0 else -1.0
    tr = integrate_slow_plus(SlowPlusState(wt * (1 + 1e-12), 0.0), co, X_span=3 * circ, events=[back], max_step=0.05)
    crossings = [x for x in tr.events["t"][0] if x > 1e-6]
    assert crossings[0] == pytest.approx(circ, rel=1e-6)
    assert plus.winding == 1 and two.segments[2].winding == 2
    with pytest.raises(RegimeError) as e:
        build_spot_skeleton(SPOT, winding=2)
    assert e.value.code == "NOT_CLOSED"


@pytest.mark.xfail(strict=True, reason="no saddle on M+ at these parameters, so no gap skeleton exists")
def test_gap_skeleton_reference_case():
    build_gap_skeleton(GAP)


GAP_OK = ScaledParams(0.6859709187817468, 3.28030300068214, 1.314290067680463, 1.034821844619676,
                      2.6354405539987615, 0.0755799804805186)


def test_gap_skeleton_where_it_exists():
    sk = build_gap_skeleton(GAP_OK)
    assert [j.direction for j in sk.jumps()] == ["down", "up"]
    assert sk.closure_defect() < 1e-14
    assert sk.reversed_mirror().segments == sk.segments
    assert sk.info["m0_length"] > 0


def test_gap_rejection_is_named():
    with pytest.raises(RegimeError) as e:
        build_gap_skeleton(GAP)
    assert e.value.code == "NO_SADDLE"


def test_periodic_skeleton_reference_case():
    lo, hi = periodic_rho_interval(PERIODIC)
    assert lo < hi
    rho = 0.5 * (lo + hi)
    sk = build_periodic_skeleton(PERIODIC, rho)
    assert sk.closure_defect() < 1e-14
    assert sk.period == pytest.approx(sk.info["m0_length"] + sk.info["plus_length"])
    mirror = sk.reversed_mirror()
    assert mirror.closure_defect() < 1e-14
    assert [j.direction for j in mirror.jumps()] == ["up", "down"]
    assert mirror.period == sk.period


def test_periodic_rho_outside_interval_rejected():
    lo, hi = periodic_rho_interval(PERIODIC)
    with pytest.raises(RegimeError):
        build_periodic_skeleton(PERIODIC, -lo if lo > 0 else -hi)


# ------------------------------------------------------------- shooting


@pytest.mark.slow
def test_shooting_converges_at_first_order():
    f = find_primary_fronts(FRONT)[0]
    d = [shoot_4d(FRONT, eps, front=f).c - f.c for eps in (0.1, 0.05, 0.025)]
    assert 1.6 <= d[0] / d[1] <= 2.4 and 1.6 <= d[1] / d[2] <= 2.4


def test_shooting_mirror_negates_speed():
    f = find_primary_fronts(FRONT)[0]
    up = shoot_4d(FRONT, FRONT.eps, front=f)
    down = shoot_4d(FRONT, FRONT.eps, front=f, kind="down")
    assert down.c == pytest.approx(-up.c, rel=1e-6)
    assert up.residual < 1e-6


@pytest.mark.slow
def test_symmetric_spot_jump_is_first_order():
    errs = []
    for e2 in (0.02, 0.005, 0.00125):
        s = SPOT.with_(eps=math.sqrt(e2))
        r = shoot_symmetric_spot(s, s.eps)
        errs.append(math.hypot(r["w_jump"] - r["w_singular"], r["q_jump"] - r["q_singular"]))
    assert errs[0] > errs[1] > errs[2]
    assert all(1.5 <= errs[i] / errs[i + 1] <= 2.5 for i in range(2))
