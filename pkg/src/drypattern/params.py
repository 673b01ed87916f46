"""Ecological parameters, their nondimensional image and derived slow-flow constants."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Mapping

from .errors import ParameterError

UNSCALED_KEYS = (
    "lambda_growth",
    "gamma_uptake",
    "shading_r",
    "max_biomass_k",
    "root_shoot_e",
    "mortality_m",
    "evaporation_n",
    "precipitation_p",
    "diff_b",
    "diff_w",
)
SCALED_KEYS = ("a", "psi", "phi", "omega", "theta", "eps")

# Symbol-style aliases accepted in parameter files.
_ALIASES = {
    "Lambda": "lambda_growth",
    "Gamma": "gamma_uptake",
    "R": "shading_r",
    "K": "max_biomass_k",
    "E": "root_shoot_e",
    "M": "mortality_m",
    "N": "evaporation_n",
    "P": "precipitation_p",
    "D_B": "diff_b",
    "D_W": "diff_w",
    "Psi": "psi",
    "Phi": "phi",
    "Omega": "omega",
    "Theta": "theta",
}


@dataclass(frozen=True)
class UnscaledParams:
    lambda_growth: float
    gamma_uptake: float
    shading_r: float
    max_biomass_k: float
    root_shoot_e: float
    mortality_m: float
    evaporation_n: float
    precipitation_p: float
    diff_b: float
    diff_w: float

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ParameterError(f"{f.name} must be a finite positive number, got {v!r}", "NONPOSITIVE")
        if self.root_shoot_e * self.max_biomass_k <= 1:
            raise ParameterError(
                f"E*K = {self.root_shoot_e * self.max_biomass_k!r} must exceed 1 (alpha = K - 1/E > 0)",
                "EK_NOT_ABOVE_ONE",
            )
        if self.diff_b >= self.diff_w:
            raise ParameterError(
                f"D_B = {self.diff_b!r} must be smaller than D_W = {self.diff_w!r}",
                "DB_NOT_BELOW_DW",
            )


@dataclass(frozen=True)
class ScaledParams:
    """Nondimensional parameters; ``eps`` is stored, ``eps2`` derived."""

    a: float
    psi: float
    phi: float
    omega: float
    theta: float
    eps: float

    def __post_init__(self) -> None:
        self._validate(("a", "psi", "phi", "theta"))

    def _validate(self, nonneg) -> None:
        for name in SCALED_KEYS:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ParameterError(f"{name} must be a finite number, got {v!r}", "NONFINITE")
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative, got {getattr(self, name)!r}", "NEGATIVE")
        if not 0 < self.eps < 1:
            raise ParameterError(f"eps must lie in (0, 1), got {self.eps!r}", "EPS_RANGE")

    @property
    def eps2(self) -> float:
        return self.eps * self.eps

    @classmethod
    def from_eps2(cls, a, psi, phi, omega, theta, eps2) -> "ScaledParams":
        return cls(a, psi, phi, omega, theta, math.sqrt(eps2))

    def with_(self, **changes) -> "ScaledParams":
        if self.theta < 0:
            return ScaledParams.continued(**{**{k: getattr(self, k) for k in SCALED_KEYS}, **changes})
        return replace(self, **changes)

    @classmethod
    def continued(cls, a, psi, phi, omega, theta, eps) -> "ScaledParams":
        """Like the constructor but lets theta go negative.

        Only meant for frozen-flow sweeps continued past the physical domain;
        every other check still applies.
        """
        obj = object.__new__(cls)
        for k, v in zip(SCALED_KEYS, (a, psi, phi, omega, theta, eps)):
            object.__setattr__(obj, k, v)
        obj._validate(("a", "psi", "phi"))
        return obj


@dataclass(frozen=True)
class SlowPlusCoeffs:
    """Constants of the slow flow on the vegetated manifold.

    ``a`` and ``theta`` are carried along because the friction coefficient of the
    perturbed flow needs them; the flow itself depends on (a, A, C, D) only.
    Optional fields are ``None`` where their defining formula degenerates.
    """

    a: float
    theta: float
    A: float
    Bc: float
    C: float
    D: float
    chi: float | None
    Esaddle: float | None
    w_sn: float | None
    w1_sn: float | None
    sigma: float | None

    @property
    def a_tilde(self) -> float:
        return self.a + 0.25

    @property
    def BaT(self) -> float:
        """The linear coefficient B + a*theta, computed as D + (a + 1/4) A."""
        return self.D + self.a_tilde * self.A

    @property
    def D_sn(self) -> float | None:
        return self.C * self.C / (4.0 * self.A) if self.A > 0 else None

    @property
    def W_sn(self) -> float | None:
        return -self.C / (2.0 * self.A) if self.A > 0 else None

    @classmethod
    def from_frozen(cls, a: float, A: float, C: float, D: float, theta: float) -> "SlowPlusCoeffs":
        """Build coefficients straight from the frozen quadruple plus theta.

        No sign constraint is placed on psi = A - theta here, so this also reaches
        the formal continuation of a frozen family beyond the physical domain.
        """
        a_t = a + 0.25
        Bc = D + a_t * A - a * theta
        return _assemble(a, theta, A, Bc, C, D)


def _assemble(a, theta, A, Bc, C, D) -> SlowPlusCoeffs:
    a_t = a + 0.25
    chi = (A / 4.0 - C / 2.0 + D) / a if a > 0 else None

    den = (1.0 + 4.0 * a) * A * A - C * C
    w_sn = 4.0 * A * A / den if den != 0 else None
    w1_sn = None
    sigma = None
    if A > 0:
        W_sn = -C / (2.0 * A)
        if w_sn is not None:
            w1_sn = 2.0 * W_sn * w_sn * w_sn
        if C * C - 4.0 * A * D >= 0:
            sigma = math.sqrt(max(C * C / (4.0 * A) - D, 0.0) / A)

    Esaddle = None
    roots = _w_roots(A, C, D)
    if len(roots) == 1:
        W = roots[0]
        Esaddle = D + a_t * A + 0.5 * C * (W + a_t / W)
    return SlowPlusCoeffs(a, theta, A, Bc, C, D, chi, Esaddle, w_sn, w1_sn, sigma)


def _w_roots(A: float, C: float, D: float) -> list[float]:
    """Positive roots W of A W^2 + C W + D = 0 with W < 1/2 (inside the window)."""
    out: list[float] = []
    if A == 0:
        if C != 0:
            out = [-D / C]
    else:
        disc = C * C - 4.0 * A * D
        if disc < 0:
            return []
        r = math.sqrt(disc)
        # numerically stable pair
        q = -0.5 * (C + math.copysign(r, C)) if C != 0 else 0.5 * r
        cand = {q / A, D / q} if q != 0 else {0.0}
        out = sorted(cand)
    return [W for W in out if 0 < W < 0.5]


def derive_coeffs(s: ScaledParams) -> SlowPlusCoeffs:
    A = s.psi + s.theta
    Bc = s.phi + 0.5 * s.omega + 0.5 * s.theta
    C = s.omega + s.theta
    D = Bc + s.a * s.theta - (s.a + 0.25) * A
    return _assemble(s.a, s.theta, A, Bc, C, D)


def scale_params(u: UnscaledParams) -> ScaledParams:
    K, E = u.max_biomass_k, u.root_shoot_e
    alpha = K - 1.0 / E
    KE = K * E
    a = KE / (KE - 1.0) ** 2
    eps = math.sqrt(u.diff_b / u.diff_w)
    psi = alpha * alpha * u.precipitation_p * u.lambda_growth * E / (u.mortality_m ** 2 * K)
    phi = u.evaporation_n / u.mortality_m
    omega = alpha / u.mortality_m * (u.gamma_uptake - u.shading_r / K)
    theta = alpha * alpha * u.gamma_uptake * E / u.mortality_m
    return ScaledParams(a, psi, phi, omega, theta, eps)


def frozen_chi(a: float, A: float, C: float, D: float) -> float:
    if a <= 0:
        raise ParameterError("frozen families need a > 0", "A_NONPOSITIVE")
    return (A / 4.0 - C / 2.0 + D) / a


def freeze_family(phi: float, a: float, A: float, C: float, D: float,
                  allow_negative_theta: bool = False) -> tuple[float, float, float]:
    """Return (psi, theta, omega) sharing the slow flow fixed by (a, A, C, D).

    With ``allow_negative_theta`` only psi >= 0 is enforced, so phi may run past
    a(A + chi) towards infinity.
    """
    if phi <= 0:
        raise ParameterError(f"phi must be positive, got {phi!r}", "PHI_NONPOSITIVE")
    chi = frozen_chi(a, A, C, D)
    psi = phi / a - chi
    theta = A - phi / a + chi
    omega = C - A + phi / a - chi
    if psi < 0 or (theta < 0 and not allow_negative_theta):
        raise ParameterError(
            f"phi = {phi!r} leaves the parameter domain (psi = {psi!r}, theta = {theta!r})",
            "FROZEN_OUT_OF_DOMAIN",
        )
    return psi, theta, omega


def frozen_params(phi: float, a: float, A: float, C: float, D: float, eps: float,
                  allow_negative_theta: bool = False) -> ScaledParams:
    psi, theta, omega = freeze_family(phi, a, A, C, D, allow_negative_theta)
    if theta < 0:
        return ScaledParams.continued(a, psi, phi, omega, theta, eps)
    return ScaledParams(a, psi, phi, omega, theta, eps)


def frozen_phi_window(a: float, A: float, C: float, D: float,
                      allow_negative_theta: bool = False) -> tuple[float, float]:
    """Range of phi keeping psi (and, by default, theta) nonnegative."""
    chi = frozen_chi(a, A, C, D)
    return max(a * chi, 0.0), (math.inf if allow_negative_theta else a * (A + chi))


def phi_for_intercept(w0: float, a: float, A: float, C: float, D: float) -> float:
    """Phi at which the bare-soil level psi/phi = 1/a - chi/phi equals w0."""
    chi = frozen_chi(a, A, C, D)
    den = 1.0 / a - w0
    if den <= 0 or chi / den <= 0:
        raise ParameterError(f"intercept {w0!r} is not reachable in this frozen family", "INTERCEPT_UNREACHABLE")
    return chi / den


# ---------------------------------------------------------------- file format


def parse_keyvalue(text: str) -> dict[str, str]:
    """Parse flat ``name = value`` text with ``#`` comments."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'name = value', got {raw!r}", "SYNTAX")
        k, v = line.split("=", 1)
        k, v = k.strip(), v.strip()
        if not k:
            raise ParameterError(f"line {lineno}: empty key", "SYNTAX")
        out[k] = v
    return out


def canonical_key(key: str) -> str:
    return _ALIASES.get(key, key)


def params_from_mapping(values: Mapping[str, object]) -> UnscaledParams | ScaledParams:
    """Build parameters from a mapping, detecting the key set.

    Scaled sets may give ``eps2`` instead of ``eps``. Unknown keys are ignored so
    the same file can carry run options.
    """
    vals = {canonical_key(k): v for k, v in values.items()}
    has_unscaled = any(k in vals for k in UNSCALED_KEYS)
    has_scaled = any(k in vals for k in ("a", "psi", "phi", "omega", "theta"))
    if has_unscaled and has_scaled:
        raise ParameterError("file mixes scaled and unscaled parameter keys", "MIXED_KEYS")
    if has_unscaled:
        missing = [k for k in UNSCALED_KEYS if k not in vals]
        if missing:
            raise ParameterError(f"missing key(s): {', '.join(missing)}", "MISSING_KEY")
        return UnscaledParams(**{k: _num(k, vals[k]) for k in UNSCALED_KEYS})
    if has_scaled:
        if "eps" not in vals and "eps2" in vals:
            vals["eps"] = math.sqrt(_num("eps2", vals["eps2"]))
        missing = [k for k in SCALED_KEYS if k not in vals]
        if missing:
            raise ParameterError(f"missing key(s): {', '.join(missing)}", "MISSING_KEY")
        return ScaledParams(**{k: _num(k, vals[k]) for k in SCALED_KEYS})
    raise ParameterError("no parameter keys found", "MISSING_KEY")


def read_param_file(path: str | Path) -> UnscaledParams | ScaledParams:
    return params_from_mapping(parse_keyvalue(Path(path).read_text()))


def format_params(p: UnscaledParams | ScaledParams) -> str:
    """Serialize with ``repr`` floats so reading back is bit-exact."""
    return "".join(f"{f.name} = {getattr(p, f.name)!r}\n" for f in fields(p))


def _num(key: str, v: object) -> float:
    try:
        x = float(v)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise ParameterError(f"{key}: not a number: {v!r}", "SYNTAX") from None
    return x
