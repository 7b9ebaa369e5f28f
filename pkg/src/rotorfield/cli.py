"""Command-line entry point.

    rotorfield run --config FILE --out DIR [--override key=value]... [--allow-wrap]
    rotorfield zeros --profile FILE --mu-max F
    rotorfield soliton --omega x,y,z --profile FILE --out DIR [--N N --L L]
    rotorfield decay --sigma F --t-range a,b

Exit codes: 0 success, 2 invariant violation, 3 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
import warnings
from pathlib import Path

import numpy as np

from . import charge
from .charge import ChargeProfile
from .coupling import GridModel
from .diagnostics import attraction_report, conservation_drifts, oscillation
from .dynamics import IntegrationError, run
from .grid import SpectralGrid, positions, to_physical
from .kirchhoff import DriftSeries, InitialFieldSpec, drift_check, f_decay, kirchhoff_decay
from .scenario import ConfigError, build_initial, load_config
from .soliton import ResolutionWarning, coulomb_phi, soliton_A

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 2, 3
log = logging.getLogger("rotorfield")


def _versions() -> dict:
    import scipy
    try:
        from importlib.metadata import version
        pkg = version("artifact")
    except Exception:  # not installed as a distribution
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__, "artifact": pkg}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_slice(path: Path, grid: SpectralGrid, A_hat, Pi_hat) -> None:
    """Fields on the z = 0 plane as CSV (x, y, A, Pi components)."""
    A = to_physical(grid, A_hat)[:, :, :, 0]
    Pi = to_physical(grid, Pi_hat)[:, :, :, 0]
    X = positions(grid)
    order = np.argsort(grid.x1d())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "A_x", "A_y", "A_z", "Pi_x", "Pi_y", "Pi_z"])
        for i in order:
            for j in order:
                vals = [X[0, i, j, 0], X[1, i, j, 0], *A[:, i, j], *Pi[:, i, j]]
                w.writerow([format(float(v), ".17g") for v in vals])


def _parse_vec(s: str, n: int, name: str):
    try:
        v = [float(p) for p in s.split(",")]
    except ValueError as exc:
        raise ConfigError(f"{name} must be {n} comma-separated numbers") from exc
    if len(v) != n:
        raise ConfigError(f"{name} must be {n} comma-separated numbers")
    return v


def _load_profile(path) -> ChargeProfile:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"profile file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if isinstance(d, dict) and "profile" in d:
        d = d["profile"]
    try:
        return ChargeProfile.from_dict(d)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad profile: {exc}") from exc


# -- subcommands ----------------------------------------------------------------------

def cmd_run(args) -> int:
    sc = load_config(args.config, args.override, allow_wrap=args.allow_wrap)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = GridModel.get(sc.grid, sc.profile)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        issues = sc.grid.check_resolves(sc.profile.R_rho)
        if issues:
            warnings.warn("; ".join(issues), ResolutionWarning)
        init = build_initial(sc)
        series = run(init.state, sc.integrator, model, sc.sample_times(), R_list=sc.R_list,
                     free_field=init.free_field)
        rep = attraction_report(series, sc.R_list) if len(series) > 1 else None
    series.to_csv(out / "series.csv")
    write_slice(out / "field_slice_z0.csv", sc.grid, series.final_state.field.A_hat, series.final_state.field.Pi_hat)

    drifts = conservation_drifts(series)
    violations = []
    for key, tol in sc.tolerances.items():
        if key in drifts and drifts[key] > tol:
            violations.append(f"relative drift of {key} = {drifts[key]:.3e} exceeds {tol:g}")
    if series.meta["omega_bound_violations"]:
        violations.append(f"|w| exceeded the energy bound {series.meta['omega_bar']:.6g} "
                          f"{series.meta['omega_bound_violations']} times")
    osc = {}
    if sc.osc_T:
        vals = [oscillation(series, T) for T in sorted(sc.osc_T)]
        osc = {f"{T:g}": v for T, v in zip(sorted(sc.osc_T), vals)}
        if any(b > a * (1 + 1e-12) + 1e-15 for a, b in zip(vals, vals[1:])):
            violations.append("oscillation is not nonincreasing in T")

    report = {
        "status": "invariant-violation" if violations else "ok",
        "violations": violations,
        "drifts": drifts,
        "oscillation": osc,
        "attraction": rep.to_dict() if rep else None,
        "wrap_contaminated": series.meta["wrap_contaminated"],
        "omega_bar": series.meta["omega_bar"],
        "warnings": sorted({str(w.message) for w in caught}),
    }
    if init.free_field is not None:
        extra = series.extra
        report["modified_drift"] = {
            "H_mod_rel": float(np.max(np.abs(extra["H_mod"] - extra["H_mod"][-1])) / abs(extra["H_mod"][0])),
            "pi_mod_rel": float(np.max(np.abs(extra["pi_mod"] - extra["pi_mod"][-1])) / abs(extra["pi_mod"][0])),
        }
        T0 = max(series.t[-1] / 8, sc.integrator.dt)
        try:
            ser = DriftSeries(series.t, extra["H_mod"], extra["pi_mod"])
            report["modified_drift"]["fit"] = drift_check(ser, T0, init.spec.sigma).to_dict()
        except ValueError as exc:
            report["modified_drift"]["fit"] = f"unavailable: {exc}"
    meta = {
        "config": sc.raw,
        "versions": _versions(),
        "wrap_time": series.meta["wrap_time"],
        "wrap_contaminated": series.meta["wrap_contaminated"],
        "allow_wrap": sc.allow_wrap,
        "steps": series.meta["steps"],
        "I": model.I,
        "I_eff": model.I_eff,
        "kappa0_grid": model.kappa0,
        "kappa0": charge.kappa0(sc.profile),
        "seed": sc.seed,
    }
    _dump(out / "report.json", report)
    _dump(out / "meta.json", meta)
    for v in violations:
        print(f"invariant violated: {v}", file=sys.stderr)
    if rep is not None:
        print(f"status={report['status']} attraction={rep.status} w+={np.array2string(rep.omega_plus, precision=8)}")
    return EXIT_INVARIANT if violations else EXIT_OK


def cmd_zeros(args) -> int:
    profile = _load_profile(args.profile)
    if not args.mu_max > 0:
        raise ConfigError("--mu-max must be positive")
    z = charge.g_zeros(profile, args.mu_max)
    res = charge.check_nonresonance(z)
    out = {"profile": profile.to_dict(), "mu_max": args.mu_max, "zeros": z.mu.tolist(),
           "nonresonance": res.to_dict(), "warnings": list(z.warnings)}
    if profile.kind == "uniform-ball" and len(z):
        out["M_rho"] = charge.m_rho_ball(z).tolist()
        out["m_b_in_M_rho"] = charge.in_m_rho(profile.m_b, out["M_rho"])
    print(json.dumps(_jsonable(out), indent=2))
    return EXIT_OK


def cmd_soliton(args) -> int:
    profile = _load_profile(args.profile)
    omega = np.array(_parse_vec(args.omega, 3, "--omega"))
    try:
        grid = SpectralGrid(args.N, args.L)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        s = soliton_A(omega, profile, grid)
    model = GridModel.get(grid, profile)
    write_slice(out / "soliton_slice_z0.csv", grid, s.A_hat, np.zeros_like(s.A_hat))
    r = np.linspace(0.0, 4 * profile.R_rho, 201)
    a = s.a_rad(r)
    phi = coulomb_phi(profile, np.stack([r, 0 * r, 0 * r], axis=1))
    with open(out / "radial_profile.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "a", "phi"])
        for row in zip(r, a, phi):
            w.writerow([format(float(v), ".17g") for v in row])
    info = {
        "omega": omega, "profile": profile.to_dict(), "grid": {"N": grid.N, "L": grid.L},
        "I": model.I, "I_eff": model.I_eff, "I_eff_continuum": charge.effective_moment(profile),
        "kappa0": charge.kappa0(profile), "kappa0_grid": model.kappa0,
        "pi": model.I_eff * omega, "warnings": sorted({str(c.message) for c in caught}),
    }
    _dump(out / "soliton.json", info)
    print(json.dumps(_jsonable({k: info[k] for k in ("I", "I_eff", "kappa0", "kappa0_grid")})))
    return EXIT_OK


def cmd_decay(args) -> int:
    a, b = _parse_vec(args.t_range, 2, "--t-range")
    if not 0 < a < b:
        raise ConfigError("--t-range needs 0 < a < b")
    try:
        init = InitialFieldSpec("algebraic", args.sigma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    omega = _parse_vec(args.omega, 3, "--omega")
    profile = ChargeProfile("uniform-ball", 1.0)
    kd = kirchhoff_decay(init, (a, b))
    out = {"sigma": args.sigma, "expected": -(1 + args.sigma), "kirchhoff": kd.to_dict()}
    if not args.skip_f:
        out["f"] = f_decay(init, omega, profile, (a, b)).to_dict()
    print(json.dumps(_jsonable(out), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rotorfield", description="Rotating charge coupled to a Maxwell field: runs and oracles.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write series.csv, report.json, meta.json")
    r.add_argument("--config", required=True, help="scenario JSON file, or bundled:<name>")
    r.add_argument("--out", required=True)
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--allow-wrap", action="store_true", help="permit t_max beyond the wrap time")
    r.set_defaults(func=cmd_run)

    z = sub.add_parser("zeros", help="zeros of the spectral function g and the non-resonance check")
    z.add_argument("--profile", required=True)
    z.add_argument("--mu-max", type=float, required=True)
    z.set_defaults(func=cmd_zeros)

    s = sub.add_parser("soliton", help="write a soliton and its constants")
    s.add_argument("--omega", required=True, help="x,y,z")
    s.add_argument("--profile", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--N", type=int, default=48)
    s.add_argument("--L", type=float, default=24.0)
    s.set_defaults(func=cmd_soliton)

    d = sub.add_parser("decay", help="fit decay exponents of the free field and of f(t)")
    d.add_argument("--sigma", type=float, required=True)
    d.add_argument("--t-range", required=True, help="a,b")
    d.add_argument("--omega", default="0.3,-0.2,1.0")
    d.add_argument("--skip-f", action="store_true", help="only the free-field decay")
    d.set_defaults(func=cmd_decay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "config", None) and args.config.startswith("bundled:"):
        from .scenario import bundled_config
        try:
            args.config = str(bundled_config(args.config.split(":", 1)[1]))
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
