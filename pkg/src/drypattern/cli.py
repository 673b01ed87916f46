"""Command-line entry point: ``drypattern <command> [--config F] [--out D] [--set k=v ...] [--workers N]``.

Every command reads one flat key/value configuration (file plus ``--set``
overrides), writes CSV files into the output directory and a ``manifest.txt``
echoing the resolved configuration.  Exit status: 0 ok, 2 usage, 3 regime
rejection, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, DrypatternError, NumericalError, ParameterError, RegimeError
from .params import (
    SCALED_KEYS,
    ScaledParams,
    UnscaledParams,
    canonical_key,
    derive_coeffs,
    format_params,
    frozen_params,
    frozen_phi_window,
    params_from_mapping,
    parse_keyvalue,
    phi_for_intercept,
    scale_params,
)

log = logging.getLogger("drypattern")

EXIT_OK, EXIT_USAGE, EXIT_REGIME, EXIT_NUMERICAL = 0, 2, 3, 4
COMMANDS = ("scale", "fronts", "skeleton", "simulate", "sweep", "melnikov")


class UsageError(DrypatternError):
    code = "USAGE"


# ------------------------------------------------------------- formatting


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.15g}"
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(x) for x in r) + "\n")


# ---------------------------------------------------------------- config


class RunConfig:
    """Resolved flat configuration with typed accessors."""

    def __init__(self, command: str, values: dict[str, str], out: Path, workers: int):
        self.command = command
        self.values = values
        self.out = out
        self.workers = workers

    def get(self, key: str, kind=float, default=None, required: bool = False):
        if key not in self.values:
            if required:
                raise UsageError(f"missing key: {key}", "MISSING_KEY")
            return default
        raw = self.values[key]
        try:
            if kind is bool:
                if raw.lower() in ("1", "true", "yes", "on"):
                    return True
                if raw.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError
            return kind(raw)
        except ValueError:
            raise UsageError(f"{key}: cannot read {raw!r} as {kind.__name__}", "SYNTAX") from None

    def params(self) -> ScaledParams:
        p = params_from_mapping(self.values)
        return scale_params(p) if isinstance(p, UnscaledParams) else p

    def write_manifest(self, outputs: list[str], extra: dict | None = None) -> None:
        lines = [f"tool = drypattern {__version__}", f"command = {self.command}"]
        for k in sorted(self.values):
            lines.append(f"config.{k} = {self.values[k]}")
        for k, v in (extra or {}).items():
            lines.append(f"{k} = {fmt(v)}")
        for o in outputs:
            lines.append(f"output = {o}")
        with open(self.out / "manifest.txt", "w", newline="\n", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def build_config(ns: argparse.Namespace) -> RunConfig:
    values: dict[str, str] = {}
    if ns.config:
        try:
            text = Path(ns.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc.strerror}", "CONFIG") from None
        values.update({canonical_key(k): v for k, v in parse_keyvalue(text).items()})
    for item in ns.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}", "SYNTAX")
        k, v = item.split("=", 1)
        values[canonical_key(k.strip())] = v.strip()
    out = Path(ns.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc.strerror}", "OUT_DIR") from None
    if ns.workers < 1:
        raise UsageError("--workers must be at least 1", "SYNTAX")
    return RunConfig(ns.command, values, out, ns.workers)


def _param_row(s: ScaledParams) -> list[float]:
    return [getattr(s, k) for k in SCALED_KEYS]


# -------------------------------------------------------------- commands


def cmd_scale(cfg: RunConfig) -> list[str]:
    p = params_from_mapping(cfg.values)
    s = scale_params(p) if isinstance(p, UnscaledParams) else p
    co = derive_coeffs(s)
    if isinstance(p, UnscaledParams):
        (cfg.out / "unscaled.txt").write_text(format_params(p), encoding="utf-8", newline="\n")
    (cfg.out / "scaled.txt").write_text(format_params(s), encoding="utf-8", newline="\n")
    rows = [(k, getattr(s, k)) for k in SCALED_KEYS] + [("eps2", s.eps2)]
    rows += [(k, getattr(co, k)) for k in ("A", "Bc", "C", "D", "chi", "Esaddle", "w_sn", "w1_sn", "sigma")]
    write_csv(cfg.out / "scaled.csv", ["name", "value"], rows)
    if isinstance(p, UnscaledParams):
        print(format_params(p), end="")
        print("--")
    for k, v in rows:
        print(f"{k} = {fmt(v)}")
    outs = ["scaled.txt", "scaled.csv"]
    return (["unscaled.txt"] if isinstance(p, UnscaledParams) else []) + outs


_FRONT_HEADER = ["kind", "j", "k", "c", "w_touchdown", "q_touchdown", "H_level", "residual", "degenerate", "phi"]


def _front_row(f) -> list:
    return [f.kind, f.j, f.k, f.c, f.touchdown.w, f.touchdown.q, f.H_level, f.residual, f.degenerate,
            f.extra.get("phi") if f.extra else None]


def cmd_fronts(cfg: RunConfig) -> list[str]:
    from .orbits.fronts import count_higher_fronts, find_front_to_periodic, find_primary_fronts, find_stationary_fronts
    from .orbits.shooting import shoot_4d

    s = cfg.params()
    k_max = cfg.get("k_max", int, 0)
    rows = []
    prim = find_primary_fronts(s)
    rows += [_front_row(f) for f in prim]
    notes = {}
    if k_max > 0:
        for j in (1, 2):
            try:
                rows += [_front_row(f) for f in count_higher_fronts(s, j, k_max)[1:]]
            except (RegimeError, NumericalError) as exc:
                notes[f"higher_order_j{j}"] = exc.code
    H = cfg.get("H", float)
    if H is not None:
        rows += [_front_row(f) for f in find_front_to_periodic(s, H)]
    if cfg.get("stationary", bool, False):
        co = derive_coeffs(s)
        rows += [_front_row(f) for f in find_stationary_fronts((s.a, co.A, co.C, co.D), s.eps)]
    if cfg.get("refine", bool, False):
        for f in prim:
            try:
                r = shoot_4d(s, s.eps, front=f)
                rows.append(_front_row(r))
            except (RegimeError, NumericalError) as exc:
                notes[f"refine_j{f.j}"] = exc.code
    write_csv(cfg.out / "fronts.csv", _FRONT_HEADER, rows)
    for r in rows:
        print(",".join(fmt(x) for x in r))
    cfg._extra = notes
    return ["fronts.csv"]


def _skeleton(cfg: RunConfig, s: ScaledParams):
    from .orbits.skeleton import build_gap_skeleton, build_periodic_skeleton, build_spot_skeleton

    kind = cfg.get("kind", str, "spot")
    winding = cfg.get("winding", int, 1)
    if kind == "spot":
        return build_spot_skeleton(s, winding)
    if kind == "gap":
        return build_gap_skeleton(s)
    if kind == "periodic":
        return build_periodic_skeleton(s, cfg.get("rho", float, required=True), winding)
    raise UsageError(f"kind must be spot, gap or periodic, got {kind!r}", "SYNTAX")


def cmd_skeleton(cfg: RunConfig) -> list[str]:
    from .orbits.skeleton import SlowSegment

    s = cfg.params()
    sk = _skeleton(cfg, s)
    rows = []
    for i, seg in enumerate(sk.segments):
        if isinstance(seg, SlowSegment):
            rows.append([i, "slow", seg.manifold, seg.H_level, seg.start[0], seg.start[1], seg.end[0], seg.end[1],
                         seg.winding, seg.length])
        else:
            rows.append([i, "jump", seg.direction, None, seg.w_level, seg.q_level, seg.w_level, seg.q_level, None, 0.0])
    write_csv(cfg.out / "skeleton.csv",
              ["index", "piece", "label", "H_level", "w_start", "q_start", "w_end", "q_end", "winding", "length_X"], rows)
    info = [("kind", sk.kind), ("period_X", sk.period), ("closure_defect", sk.closure_defect())]
    info += sorted(sk.info.items())
    write_csv(cfg.out / "skeleton_info.csv", ["name", "value"], info)
    outs = ["skeleton.csv", "skeleton_info.csv"]
    if cfg.get("write_ic", bool, False):
        from .pde import Grid, initial_conditions, write_snapshot

        g = Grid.for_params(s, cfg.get("dx", float, 0.1), cfg.get("length", float))
        write_snapshot(cfg.out / "ic.csv", initial_conditions("from_skeleton", s, g, skeleton=sk), g)
        outs.append("ic.csv")
    for name, v in info:
        print(f"{name} = {fmt(v)}")
    return outs


def _initial(cfg: RunConfig, s: ScaledParams, g):
    from .pde import initial_conditions

    kind = cfg.get("ic", str, "step")
    opts = {}
    for key, name, kindf in (("ic_x0", "x0", float), ("ic_width", "width", float), ("ic_half_width", "half_width", float),
                             ("ic_amplitude", "amplitude", float), ("seed", "seed", int), ("ic_state", "state", str),
                             ("mirror", "mirror", bool)):
        v = cfg.get(key, kindf)
        if v is not None:
            opts[name] = v
    if kind == "from_skeleton":
        opts["skeleton"] = _skeleton(cfg, s)
    return initial_conditions(kind, s, g, **opts)


def cmd_simulate(cfg: RunConfig) -> list[str]:
    from .pde import Grid, classify_detail, measure_front_speed, simulate, write_snapshot

    s = cfg.params()
    g = Grid.for_params(s, cfg.get("dx", float, 0.1), cfg.get("length", float))
    ic = _initial(cfg, s, g)
    t_end = cfg.get("t_end", float, 500.0)
    every = cfg.get("snapshot_every", float, t_end / 10.0)
    res = simulate(s, g, ic, t_end, cfg.get("dt", float, 0.05), snapshot_every=every,
                   max_growth=cfg.get("max_growth", float, 1e6), cfl=cfg.get("cfl", float, 0.5))
    snapdir = cfg.out / "snapshots"
    snapdir.mkdir(exist_ok=True)
    outs = []
    index_rows = []
    for i, f in enumerate(res.snapshots):
        name = f"snapshots/snap_{i:05d}.csv"
        write_snapshot(cfg.out / name, f, g)
        index_rows.append([i, f.t, name])
        outs.append(name)
    write_csv(cfg.out / "snapshots.csv", ["index", "t", "file"], index_rows)
    cl = classify_detail(res.final, s, g.x)
    speed = resid = None
    if cl.label == "front":
        try:
            fit = measure_front_speed(res)
            speed, resid = fit.c, fit.residual
        except RegimeError:
            pass
    summary = [("classification", cl.label), ("crossings", cl.crossings), ("plateau", cl.plateau),
               ("wavelength", cl.wavelength), ("speed", speed), ("speed_fit_residual", resid),
               ("clamp_warnings", len(res.warnings)), ("t_final", res.final.t), ("dx", g.dx), ("n_points", g.n_points)]
    write_csv(cfg.out / "summary.csv", ["name", "value"], summary)
    for k, v in summary:
        print(f"{k} = {fmt(v)}")
    return ["summary.csv", "snapshots.csv"] + outs


SWEEP_HEADER = ["index", "variable", "value", *SCALED_KEYS, "status", "fronts_total", "fronts_loop_j1", "fronts_loop_j2",
                "fronts_right", "melnikov_hom", "melnikov_hom_error", "s_per", "H_star", "classification"]


def _sweep_point(job: tuple) -> list:
    """One sweep row; module-level so a process pool can pickle it."""
    from .orbits.fronts import count_fronts
    from .slow import find_persistent_periodic, melnikov_homoclinic, saddle_and_center

    idx, var, val, plan = job
    base = [idx, var, val]
    try:
        if plan["frozen"]:
            a, A, C, D = plan["frozen"]
            phi = phi_for_intercept(val, a, A, C, D) if var == "intercept" else val
            s = frozen_params(phi, a, A, C, D, plan["eps"], plan["allow_negative_theta"])
        else:
            s = plan["base"].with_(**{var: val})
    except ParameterError as exc:
        return base + [None] * len(SCALED_KEYS) + [exc.code] + [None] * 10
    row = base + _param_row(s)
    status = "ok"
    total = j1 = j2 = right = None
    if plan["count"]:
        try:
            cf = count_fronts(s, plan["k_max"])
            total, right = cf["total"], cf["right"]
            loop = cf["loop"] + [0] * (2 - len(cf["loop"]))
            j1, j2 = loop[0], loop[1]
        except (RegimeError, NumericalError) as exc:
            status = exc.code
    co = derive_coeffs(s)
    mel = mel_err = None
    s_per = None
    H_star = None
    sad, cen = saddle_and_center(co)
    if sad is not None and cen is not None:
        try:
            m = melnikov_homoclinic(co)
            mel, mel_err = m.value, m.quadrature_error
            pp = find_persistent_periodic(co, n_grid=plan["n_grid"])
            s_per, H_star = pp.region == "S_per", pp.H_star
        except (RegimeError, NumericalError):
            pass
    label = None
    if plan["classify"]:
        from .pde import Grid, classify_pattern, initial_conditions, simulate

        try:
            g = Grid.for_params(s, plan["dx"])
            ic = initial_conditions(plan["classify"], s, g)
            label = classify_pattern(simulate(s, g, ic, plan["t_end"], plan["dt"]).final, s, g.x)
        except (RegimeError, NumericalError) as exc:
            label = exc.code
    return row + [status, total, j1, j2, right, mel, mel_err, s_per, H_star, label]


def sweep_jobs(cfg: RunConfig) -> list[tuple]:
    var = cfg.get("sweep_var", str, required=True)
    lo = cfg.get("sweep_from", float, required=True)
    hi = cfg.get("sweep_to", float, required=True)
    n = cfg.get("sweep_steps", int, required=True)
    if n < 1:
        raise UsageError("sweep_steps must be at least 1", "EMPTY_SWEEP")
    if n > 1 and lo == hi:
        raise UsageError("sweep range is empty", "EMPTY_SWEEP")
    frozen_keys = ("frozen_a", "frozen_A", "frozen_C", "frozen_D")
    plan = {
        "count": cfg.get("count_fronts", bool, True),
        "k_max": cfg.get("k_max", int, 6),
        "n_grid": cfg.get("n_grid", int, 40),
        "classify": cfg.get("classify_ic", str),
        "t_end": cfg.get("t_end", float, 500.0),
        "dt": cfg.get("dt", float, 0.05),
        "dx": cfg.get("dx", float, 0.1),
        "allow_negative_theta": cfg.get("allow_negative_theta", bool, False),
        "frozen": None,
    }
    if any(k in cfg.values for k in frozen_keys):
        plan["frozen"] = tuple(cfg.get(k, float, required=True) for k in frozen_keys)
        plan["eps"] = cfg.get("eps", float) or math.sqrt(cfg.get("eps2", float, required=True))
        if var not in ("phi", "intercept"):
            raise UsageError("a frozen family sweeps phi or intercept", "SYNTAX")
        if var == "phi":
            wlo, whi = frozen_phi_window(*plan["frozen"], plan["allow_negative_theta"])
            log.info("frozen phi window (%s, %s)", wlo, whi)
    else:
        if var not in SCALED_KEYS:
            raise UsageError(f"sweep_var must be one of {', '.join(SCALED_KEYS)}", "SYNTAX")
        plan["base"] = cfg.params()
    values = np.linspace(lo, hi, n) if n > 1 else np.array([lo])
    return [(i, var, float(v), plan) for i, v in enumerate(values)]


def cmd_sweep(cfg: RunConfig) -> list[str]:
    jobs = sweep_jobs(cfg)
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    rows.sort(key=lambda r: r[0])
    write_csv(cfg.out / "sweep.csv", SWEEP_HEADER, rows)
    for r in rows:
        print(",".join(fmt(x) for x in r))
    return ["sweep.csv"]


def cmd_melnikov(cfg: RunConfig) -> list[str]:
    from .slow import (
        bt_normal_form,
        find_persistent_periodic,
        hopf_and_hom_residuals,
        melnikov_homoclinic,
        melnikov_periodic,
        saddle_and_center,
    )

    s = cfg.params()
    co = derive_coeffs(s)
    sad, cen = saddle_and_center(co)
    if sad is None or cen is None:
        raise RegimeError("Melnikov diagnostics need a center and a saddle on M+", "NO_CENTER")
    rows = []
    m = melnikov_homoclinic(co)
    rows += [("delta_H_hom", m.value), ("delta_H_hom_error", m.quadrature_error),
             ("loop_w_lo", m.endpoints[0]), ("loop_w_hi", m.endpoints[1])]
    for k, v in sorted(hopf_and_hom_residuals(co).items()):
        rows.append((f"residual_{k}", v))
    pp = find_persistent_periodic(co, n_grid=cfg.get("n_grid", int, 40))
    rows += [("region", pp.region), ("H_star", pp.H_star), ("sign_changes", pp.sign_changes)]
    c = cfg.get("c", float)
    if c is not None:
        try:
            bt = bt_normal_form(co, c, s.eps)
            rows += [("bt_beta1", bt.beta1), ("bt_beta2", bt.beta2), ("bt_s", bt.s_sign), ("bt_in_S_BT", bt.in_S_BT)]
            rows += [(f"bt_mu{i + 1}", v) for i, v in enumerate(bt.mu)]
        except RegimeError as exc:
            rows.append(("bt_status", exc.code))
    write_csv(cfg.out / "melnikov.csv", ["name", "value"], rows)
    n_curve = cfg.get("n_curve", int, 40)
    u = 0.5 - 0.5 * np.cos(np.linspace(0.0, math.pi, n_curve + 2)[1:-1])
    curve = []
    for H in cen.H_value + (sad.H_value - cen.H_value) * u:
        r = melnikov_periodic(float(H), co)
        curve.append([float(H), r.value, r.quadrature_error])
    write_csv(cfg.out / "melnikov_curve.csv", ["H", "delta_H", "error"], curve)
    for k, v in rows:
        print(f"{k} = {fmt(v)}")
    return ["melnikov.csv", "melnikov_curve.csv"]


_DISPATCH = {
    "scale": cmd_scale,
    "fronts": cmd_fronts,
    "skeleton": cmd_skeleton,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "melnikov": cmd_melnikov,
}


_HELP = {
    "scale": "convert ecological parameters and print derived slow-flow constants",
    "fronts": "traveling 1-front speeds (primary, higher order, to periodic, stationary)",
    "skeleton": "singular skeleton of a stationary spot, gap or periodic pattern",
    "simulate": "run the PDE stepper, classify the result, measure front speed",
    "sweep": "one row per parameter value: front counts and Melnikov data",
    "melnikov": "Melnikov and normal-form diagnostics of the slow flow",
}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drypattern", description="Vegetation pattern constructions and simulations.")
    p.add_argument("--version", action="version", version=f"drypattern {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--config", help="flat key = value file")
        sp.add_argument("--out", default="drypattern_out", help="output directory")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
        sp.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(ns)
        cfg._extra = {}
        outs = _DISPATCH[ns.command](cfg)
        cfg.write_manifest(outs, {f"note.{k}": v for k, v in sorted(cfg._extra.items())})
        return EXIT_OK
    except (UsageError, ParameterError) as exc:
        print(f"usage error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RegimeError, DomainError) as exc:
        print(f"regime rejected [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except NumericalError as exc:
        print(f"numerical failure [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:  # grid or initial-field checks; DomainError is handled above
        print(f"usage error [VALUE]: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
