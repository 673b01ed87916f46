import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cases import ECO_REFERENCE_SCALED, ECO_REFERENCE
from drypattern.errors import ParameterError
from drypattern.params import (
    ScaledParams,
    SlowPlusCoeffs,
    UnscaledParams,
    derive_coeffs,
    format_params,
    freeze_family,
    frozen_chi,
    frozen_params,
    frozen_phi_window,
    params_from_mapping,
    phi_for_intercept,
    read_param_file,
    scale_params,
)


def mp_scaled(u: UnscaledParams):
    """Scaled set recomputed at 40 digits straight from the nondimensionalisation."""
    mp.mp.dps = 40
    P, L, K, E = map(mp.mpf, (u.precipitation_p, u.lambda_growth, u.max_biomass_k, u.root_shoot_e))
    M, N, R, G = map(mp.mpf, (u.mortality_m, u.evaporation_n, u.shading_r, u.gamma_uptake))
    DB, DW = mp.mpf(u.diff_b), mp.mpf(u.diff_w)
    al = K - 1 / E
    return {
        "a": K * E / (K * E - 1) ** 2,
        "psi": al ** 2 * P * L * E / (M ** 2 * K),
        "phi": N / M,
        "omega": al / M * (G - R / K),
        "theta": al ** 2 * G * E / M,
        "eps2": DB / DW,
    }


def test_reference_scaling_values():
    s = scale_params(ECO_REFERENCE)
    assert s.eps2 == pytest.approx(0.008, rel=1e-15)
    for k, v in ECO_REFERENCE_SCALED.items():
        got = s.eps2 if k == "eps2" else getattr(s, k)
        assert abs(got - v) / v < 5e-3, k


unscaled = st.builds(
    lambda lam, gam, r, k, ek, m, n, p, db, ratio: UnscaledParams(
        lam, gam, r, k, ek / k, m, n, p, db, db * ratio),
    *[st.floats(0.05, 50)] * 4, st.floats(1.01, 60), *[st.floats(0.05, 50)] * 4, st.floats(1.0001, 1e4),
)


@settings(max_examples=60, deadline=None)
@given(unscaled)
def test_scaling_matches_high_precision_substitution(u):
    s = scale_params(u)
    ref = mp_scaled(u)
    for k, v in ref.items():
        got = s.eps2 if k == "eps2" else getattr(s, k)
        assert abs(got - float(v)) <= 1e-12 * max(1.0, abs(float(v))), k


def test_equal_mortality_and_evaporation_give_unit_phi():
    u = ECO_REFERENCE
    assert scale_params(u).phi == 1.0


@pytest.mark.parametrize("field,value,code", [
    ("diff_b", 200.0, "DB_NOT_BELOW_DW"),
    ("root_shoot_e", 2.0, "EK_NOT_ABOVE_ONE"),
    ("mortality_m", -1.0, "NONPOSITIVE"),
    ("precipitation_p", float("nan"), "NONPOSITIVE"),
])
def test_unscaled_validation(field, value, code):
    kw = {k: getattr(ECO_REFERENCE, k) for k in ECO_REFERENCE.__dataclass_fields__}
    kw[field] = value
    with pytest.raises(ParameterError) as e:
        UnscaledParams(**kw)
    assert e.value.code == code


def test_scaled_validation():
    with pytest.raises(ParameterError):
        ScaledParams(0.1, 1.0, 0.3, 0.1, -0.2, 0.1)
    with pytest.raises(ParameterError):
        ScaledParams(0.1, 1.0, 0.3, 0.1, 0.2, 1.5)
    ScaledParams(0.1, 1.0, 0.3, -5.0, 0.2, 0.1)  # omega has no sign restriction


def test_coefficient_identities(rng):
    for _ in range(50):
        s = ScaledParams(*rng.uniform([0.01, 0, 0.05, -2, 0, 0.01], [1, 4, 3, 2, 3, 0.5]))
        co = derive_coeffs(s)
        assert co.A == s.psi + s.theta
        assert co.C == pytest.approx(s.omega + s.theta, abs=1e-15)
        assert co.BaT == pytest.approx(co.Bc + s.a * s.theta, rel=1e-12, abs=1e-12)
    co = derive_coeffs(ScaledParams(0.1, 1.0, 0.3, -0.4, 0.4, 0.1))
    assert co.C == 0


def test_fold_location_when_c_squared_is_a_squared_over_nine():
    for a in (0.05, 0.25, 0.8):
        A = 1.3
        co = SlowPlusCoeffs.from_frozen(a, A, -A / 3, 0.1, 0.2)
        assert co.w_sn == pytest.approx(9 / (2 + 9 * a), rel=1e-14)


def test_sigma_round_trip(rng):
    for _ in range(50):
        a, A = rng.uniform(0.01, 1), rng.uniform(0.1, 3)
        C, sig = -rng.uniform(0.01, 2), rng.uniform(0, 0.5)
        D = C * C / (4 * A) - A * sig * sig
        co = SlowPlusCoeffs.from_frozen(a, A, C, D, 0.3)
        assert co.sigma == pytest.approx(sig, rel=1e-9, abs=1e-9)
        assert C * C / (4 * A) - A * co.sigma ** 2 == pytest.approx(D, rel=1e-12, abs=1e-14)


FAMILY = (0.2, 1.0, -0.5, 0.0625 - 0.01)


def test_frozen_family_shares_flow_constants():
    a, A, C, D = FAMILY
    lo, hi = frozen_phi_window(*FAMILY)
    rows = []
    for phi in np.linspace(lo, hi, 7)[1:-1]:
        co = derive_coeffs(frozen_params(float(phi), *FAMILY, eps=0.1))
        rows.append((co.A, co.BaT, co.C, co.D))
        assert (co.A, co.C) == pytest.approx((A, C), rel=1e-12, abs=1e-13)
        assert co.D == pytest.approx(D, rel=1e-12, abs=1e-13)
    assert np.ptp(np.array(rows), axis=0) == pytest.approx(0, abs=1e-12)


def test_frozen_intercept_sweeps_between_window_and_one_over_a():
    a, A, C, D = FAMILY
    chi = frozen_chi(*FAMILY)
    assert chi > 0
    phis = a * (1 + 4 * a) * chi * np.array([1.0001, 1.5, 3, 10, 1e4])
    w = 1 / a - chi / phis
    assert w[0] == pytest.approx(4 / (1 + 4 * a), rel=1e-3)
    assert np.all(np.diff(w) > 0) and w[-1] < 1 / a
    w0 = 3.5
    phi = phi_for_intercept(w0, *FAMILY)
    s = frozen_params(phi, *FAMILY, eps=0.1, allow_negative_theta=True)
    assert s.psi / s.phi == pytest.approx(w0, rel=1e-12)


def test_negative_theta_needs_opt_in():
    a, A, C, D = FAMILY
    lo, hi = frozen_phi_window(*FAMILY)
    with pytest.raises(ParameterError) as e:
        freeze_family(hi * 1.5, *FAMILY)
    assert e.value.code == "FROZEN_OUT_OF_DOMAIN"
    s = frozen_params(hi * 1.5, *FAMILY, eps=0.1, allow_negative_theta=True)
    assert s.theta < 0
    assert frozen_phi_window(*FAMILY, allow_negative_theta=True)[1] == math.inf


def test_param_file_round_trip(tmp_path):
    for p in (ECO_REFERENCE, scale_params(ECO_REFERENCE)):
        f = tmp_path / "p.txt"
        f.write_text(format_params(p))
        assert read_param_file(f) == p


def test_mapping_errors():
    with pytest.raises(ParameterError) as e:
        params_from_mapping({"a": 0.1, "psi": 1})
    assert e.value.code == "MISSING_KEY" and "phi" in str(e.value)
    with pytest.raises(ParameterError) as e:
        params_from_mapping({"a": 0.1, "P": 1})
    assert e.value.code == "MIXED_KEYS"
    s = params_from_mapping({"a": "0.1", "Psi": "1", "Phi": "0.3", "Omega": "0.1", "Theta": "0.2", "eps2": "0.01"})
    assert s.eps == pytest.approx(0.1)
