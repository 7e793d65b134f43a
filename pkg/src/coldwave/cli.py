"""Command-line front end: ``coldwave <subcommand> --config FILE --out DIR``.

The config is a flat ``key = value`` file with one-dot namespaces
(``sim.b0``, ``data.family``, ``run.horizon`` ...).  Each run writes CSV data
files, ``summary.txt`` (``key: value`` lines) and ``manifest.txt``, a
re-parsable copy of the resolved configuration.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import characteristics as ch
from . import eulerian as eu
from . import floquet as fl
from . import reductions as rd
from .core import (
    FieldState,
    Family,
    InitialData,
    SimConfig,
    ValidationError,
    criterion_nonrel,
    criterion_rel_smallamp,
    make_initial_data,
    small_perturbation_data,
)
from .ode import StepSizeUnderflow

SUBCOMMANDS = ("simulate", "ensemble", "period", "wave", "floquet", "criteria", "crosscheck", "breaking-map")
TRACE_COLUMNS = ("theta", "rho", "P1", "P2", "E1", "p1", "p2", "e", "K1", "K2", "N")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3

# key -> (type, default); None default means "required or derived"
KEYS = {
    "sim.b0": (float, None),
    "sim.model": (str, "relativistic"),
    "sim.rel_tol": (float, 1e-10),
    "sim.abs_tol": (float, 1e-12),
    "sim.blowup_threshold": (float, 1e6),
    "sim.n_characteristics": (int, 16),
    "sim.stride": (int, 1),
    "data.family": (str, "small-perturbation"),
    "data.epsilon": (float, 0.1),
    "data.k": (float, 1.0),
    "data.transverse_scale": (float, 1.0),
    "data.length": (float, 2.0 * math.pi),
    "data.p1": (str, None),
    "data.p2": (str, None),
    "data.e1": (str, None),
    "data.k1": (float, None),
    "data.k2": (float, None),
    "data.sign": (int, 1),
    "run.horizon": (float, None),
    "run.periods": (float, 10.0),
    "run.workers": (int, 0),
    "run.write_traces": (bool, True),
    "wave.w": (float, 10.0),
    "wave.k1": (float, 0.0),
    "wave.k2": (float, None),
    "wave.p2_at_0": (float, 0.0),
    "wave.xi_max": (float, None),
    "wave.branch": (int, 1),
    "crosscheck.n": (int, 2048),
    "crosscheck.n_characteristics": (int, 256),
    "crosscheck.theta": (float, None),
    "breaking.b0_list": (str, "0, 0.5, 1, 2, 4"),
}


class ParseError(ValueError):
    """Malformed config line or unknown key."""


def _to_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_text(text: str, source: str = "<config>") -> dict:
    """Parse config text into a dict of typed values (defaults filled in)."""
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        key = key.lower()
        if key not in KEYS:
            raise ParseError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ParseError(f"{source}:{lineno}: duplicate key {key!r}")
        typ = KEYS[key][0]
        try:
            raw[key] = _to_bool(value) if typ is bool else typ(value)
        except ValueError:
            raise ParseError(f"{source}:{lineno}: cannot read {key!r} value {value!r} as {typ.__name__}") from None
    cfg = {k: v[1] for k, v in KEYS.items()}
    cfg.update(raw)
    return cfg


@dataclass
class Resolved:
    values: dict
    config: SimConfig
    data: InitialData
    relativistic: bool


def resolve(values: dict) -> Resolved:
    """Build the validated objects; raises :class:`ValidationError`."""
    if values["sim.b0"] is None:
        raise ValidationError("sim.b0 is required")
    B0 = values["sim.b0"]
    model = values["sim.model"]
    if model not in ("relativistic", "nonrelativistic"):
        raise ValidationError(f"sim.model must be relativistic or nonrelativistic, got {model!r}")
    eps = values["data.epsilon"]
    if eps is not None and not eps >= 0:
        raise ValidationError(f"data.epsilon must be >= 0, got {eps}")
    data = build_data(values, B0)
    horizon = values["run.horizon"]
    if horizon is None:
        horizon = values["run.periods"] * 2.0 * math.pi / math.sqrt(1.0 + B0 * B0)
    config = SimConfig(
        B0=B0, horizon=horizon, rel_tol=values["sim.rel_tol"], abs_tol=values["sim.abs_tol"],
        blowup_threshold=values["sim.blowup_threshold"], n_characteristics=values["sim.n_characteristics"],
        epsilon=eps, stride=values["sim.stride"],
    )
    return Resolved(values, config, data, model == "relativistic")


def build_data(values: dict, B0: float) -> InitialData:
    fam = values["data.family"]
    if fam == "small-perturbation":
        return small_perturbation_data(values["data.epsilon"], B0, values["data.k"], values["data.transverse_scale"])
    try:
        family = Family(fam)
    except ValueError:
        raise ValidationError(f"unknown data.family {fam!r}") from None
    try:
        return make_initial_data(
            family, B0=B0, domain_length=values["data.length"], P1=values["data.p1"], P2=values["data.p2"],
            E1=values["data.e1"], K1=values["data.k1"], K2=values["data.k2"], sign=values["data.sign"],
        )
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc)) from None


def parse_config(path) -> Resolved:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from None
    return resolve(parse_text(text, str(p)))


# --- output helpers -------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return "none"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path: Path, columns, rows: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in np.atleast_2d(rows):
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def trace_rows(trace: ch.CharacteristicTrace) -> np.ndarray:
    K1, K2 = trace.integrals()
    s = trace.states
    return np.column_stack([trace.theta, s[:, 3], s[:, 0], s[:, 1], s[:, 2], s[:, 4], s[:, 5], s[:, 6],
                            K1, K2, 1.0 - s[:, 6]])


def write_summary(path: Path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in summary.items():
            fh.write(f"{k}: {_fmt(v)}\n")


def write_manifest(path: Path, subcommand: str, values: dict, outputs, wall: float, extra: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# coldwave {__version__}\n# subcommand: {subcommand}\n")
        for k, v in extra.items():
            fh.write(f"# {k}: {_fmt(v)}\n")
        fh.write(f"# outputs: {', '.join(outputs)}\n# wall_clock_seconds: {wall:.3f}\n")
        for k in sorted(values):
            v = values[k]
            if v is None:
                continue
            fh.write(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n")


# --- subcommands ------------------------------------------------------------------


def _seed_state(r: Resolved, seed_rho: float) -> FieldState:
    s, _ = r.data.sample(seed_rho)
    return s


def cmd_simulate(r: Resolved, out: Path, seed_rho: float, log) -> tuple[dict, list]:
    model = "relativistic" if r.relativistic else "nonrelativistic"
    trace = ch.integrate(model, r.data.initial_vector(seed_rho), r.config)
    write_csv(out / "trace_0.csv", TRACE_COLUMNS, trace_rows(trace))
    d = trace.integrals_drift
    summary = {
        "model": model, "seed_rho": seed_rho, "status": trace.status,
        "breaking_time": trace.breaking_time, "blowup_estimate": trace.blowup_estimate,
        "trigger": trace.trigger, "drift_K1": d["K1"], "drift_K2": d["K2"], "drift_C1": d["C1"],
        "steps": trace.nsteps, "backend": ch.BACKEND,
    }
    return summary, ["trace_0.csv"]


def cmd_ensemble(r: Resolved, out: Path, seed_rho: float, log) -> tuple[dict, list]:
    model = "relativistic" if r.relativistic else "nonrelativistic"
    ens = ch.ensemble(r.data, r.config, model, workers=r.values["run.workers"] or None)
    files = []
    if r.values["run.write_traces"]:
        for i, tr in enumerate(ens):
            if tr is None:
                continue
            name = f"trace_{i}.csv"
            write_csv(out / name, TRACE_COLUMNS, trace_rows(tr))
            files.append(name)
    rows = np.array([[s, np.nan if t is None or t.breaking_time is None else t.breaking_time]
                     for s, t in zip(ens.seeds, ens)])
    write_csv(out / "breaking_times.csv", ("rho0", "breaking_time"), rows)
    files.append("breaking_times.csv")
    summary = {"model": model, **ens.summary()}
    drifts = [t.integrals_drift for t in ens if t is not None]
    summary["max_drift_K1"] = max(d["K1"] for d in drifts) if drifts else None
    summary["max_drift_K2"] = max(d["K2"] for d in drifts) if drifts else None
    for i, exc in sorted(ens.errors.items()):
        summary[f"error_{i}"] = f"{type(exc).__name__}: {exc}"
    if ens.errors:
        summary["numerical_failures"] = len(ens.errors)
    return summary, files


def cmd_period(r: Resolved, out: Path, seed_rho: float, log) -> tuple[dict, list]:
    B0 = r.config.B0
    s = _seed_state(r, seed_rho)
    K1 = s.P2 - B0 * s.E1
    K2 = 2.0 * s.gamma + s.E1**2
    tp = rd.turning_points(K1, K2, B0, s.P2)
    T = rd.period(K1, K2, B0, s.P2)
    summary = {
        "seed_rho": seed_rho, "K1": K1, "K2": K2, "p2_minus": tp.p2_minus, "p2_plus": tp.p2_plus,
        "period": T, "small_amplitude_period": 2.0 * math.pi / math.sqrt(1.0 + B0 * B0),
    }
    if not tp.degenerate:
        summary["return_map_period"] = rd.return_map_period(s, B0)
    return summary, []


def cmd_wave(r: Resolved, out: Path, seed_rho: float, log) -> tuple[dict, list]:
    v = r.values
    B0 = r.config.B0
    eps = v["data.epsilon"] or 0.0
    K2 = v["wave.k2"] if v["wave.k2"] is not None else 2.0 + eps * eps
    w = v["wave.w"]
    xi_max = v["wave.xi_max"]
    if xi_max is None:
        xi_max = abs(w) * 2.0 * math.pi / math.sqrt(1.0 + B0 * B0) * 1.5 + 1.0
    tw = rd.traveling_wave(w, v["wave.k1"], K2, B0, (0.0, xi_max), v["wave.p2_at_0"], v["wave.branch"])
    write_csv(out / "wave.csv", ("xi", "P2", "P1", "E1"), np.column_stack([tw.xi, tw.profile, tw.P1, tw.E1]))
    summary = {"w": w, "K1": v["wave.k1"], "K2": K2, "terminated_at": tw.terminated_at,
               "wavelength": tw.wavelength, "profile_residual": tw.residual}
    return summary, ["wave.csv"]


def cmd_floquet(r: Resolved, out: Path, seed_rho: float, log) -> tuple[dict, list]:
    eps, B0 = r.values["data.epsilon"], r.config.B0
    m = fl.mathieu_floquet(eps, B0)
    h = fl.hill_floquet(eps, B0)
    summary = {
        "epsilon": eps, "B0": B0, "mathieu_a": m.mathieu_a, "mathieu_b": m.mathieu_b,
        "asymptotic_coshmupi": fl.asymptotic_coshmupi(eps, B0),
        "asymptotic_classification": fl.classify(fl.asymptotic_coshmupi(eps, B0)).value,
        "asymptotic_coefficient": fl.asymptotic_coefficient(B0),
        "mathieu_coshmupi": m.cosh_mu_pi,
        "mathieu_leading_coshmupi": fl.truncated_leading_coshmupi(eps, B0), "mathieu_classification": m.classification.value,
        "hill_coshmupi": h.cosh_mu_pi, "hill_classification": h.classification.value,
        "hill_wronskian": h.wronskian, "min_K": fl.min_k(eps, B0),
    }
    return summary, []


def cmd_criteria(r: Resolved, out: Path, seed_rho: float, log) -> tuple[dict, list]:
    data, B0 = r.data, r.config.B0
    rho = data.grid()
    delta = np.asarray(criterion_nonrel(data, rho))
    (_, p1, _), (_, p2, _), (_, e, _) = data.profiles(rho)
    q = 2.0 * e + 2.0 * B0 * p2 - 2.0 * B0**2 - 1.0
    from .core import DerivativeState
    rel_ok = all(criterion_rel_smallamp(DerivativeState(a, b, c), B0) for a, b, c in zip(p1, p2, e))
    summary = {
        "family": data.family.value, "nonrel_max_delta": float(delta.max()),
        "nonrel_argmax_rho": float(rho[int(np.argmax(delta))]),
        "nonrel_smooth": bool(delta.max() < 0.0),
        "rel_smallamp_max": float(q.max()), "rel_smallamp_smooth": bool(rel_ok),
    }
    return summary, []


def cmd_crosscheck(r: Resolved, out: Path, seed_rho: float, log) -> tuple[dict, list]:
    B0 = r.config.B0
    theta = r.values["crosscheck.theta"] or 2.0 * math.pi / math.sqrt(1.0 + B0 * B0)
    n = r.values["crosscheck.n"]
    cfg = SimConfig(B0=B0, horizon=theta, rel_tol=r.config.rel_tol, abs_tol=r.config.abs_tol,
                    blowup_threshold=r.config.blowup_threshold,
                    n_characteristics=r.values["crosscheck.n_characteristics"])
    ens = ch.ensemble(r.data, cfg, t_eval=[theta], workers=r.values["run.workers"] or None)
    grid = eu.evolve(eu.initial_grid(r.data, n), B0, r.data.domain_length, theta)
    rep = eu.cross_check(ens, grid, theta)
    U = grid.final
    write_csv(out / "grid.csv", ("rho", "P1", "P2", "E1", "N"),
              np.column_stack([grid.grid, U[0], U[1], U[2], eu.density_field(U[2], grid.dx)]))
    summary = {"theta": theta, "n": n, "n_characteristics": cfg.n_characteristics,
               "coverage": rep.coverage, "reliable": rep.reliable}
    for k in eu.FIELDS:
        summary[f"max_norm_{k}"] = rep.max_norm[k]
        summary[f"l2_{k}"] = rep.l2[k]
    return summary, ["grid.csv"]


def cmd_breaking_map(r: Resolved, out: Path, seed_rho: float, log) -> tuple[dict, list]:
    try:
        b0s = [float(x) for x in r.values["breaking.b0_list"].split(",") if x.strip()]
    except ValueError:
        raise ValidationError("breaking.b0_list must be comma-separated numbers") from None
    rows, summary = [], {}
    model = "relativistic" if r.relativistic else "nonrelativistic"
    for B0 in b0s:
        data = build_data(r.values, B0)
        cfg = SimConfig(B0=B0, horizon=r.config.horizon, rel_tol=r.config.rel_tol, abs_tol=r.config.abs_tol,
                        blowup_threshold=r.config.blowup_threshold, n_characteristics=r.config.n_characteristics,
                        stride=max(r.config.stride, 100))
        ens = ch.ensemble(data, cfg, model, workers=r.values["run.workers"] or None)
        bt = ens.min_breaking_time
        log(f"B0 = {B0:g}: breaking time {bt}")
        rows.append([B0, np.nan if bt is None else bt])
        summary[f"breaking_time_B0_{B0:g}"] = bt
        summary[f"asymptotic_coefficient_B0_{B0:g}"] = fl.asymptotic_coefficient(B0)
    write_csv(out / "breaking_map.csv", ("B0", "breaking_time"), np.array(rows))
    return summary, ["breaking_map.csv"]


COMMANDS = {
    "simulate": cmd_simulate, "ensemble": cmd_ensemble, "period": cmd_period, "wave": cmd_wave,
    "floquet": cmd_floquet, "criteria": cmd_criteria, "crosscheck": cmd_crosscheck,
    "breaking-map": cmd_breaking_map,
}

NUMERIC_ERRORS = (StepSizeUnderflow, rd.DomainError, rd.PoleCrossing, eu.CFLViolation,
                  eu.InsufficientCoverage, FloatingPointError)


def run(subcommand: str, resolved: Resolved, out: Path, seed_rho: float = 0.0, quiet: bool = False) -> int:
    def log(msg):
        if not quiet:
            print(msg, file=sys.stderr)

    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    log(f"coldwave {subcommand}: B0 = {resolved.config.B0}, family = {resolved.data.label}")
    summary, files = COMMANDS[subcommand](resolved, out, seed_rho, log)
    write_summary(out / "summary.txt", summary)
    write_manifest(out / "manifest.txt", subcommand, resolved.values, files + ["summary.txt"],
                   time.perf_counter() - t0, {"seed_rho": seed_rho, "backend": ch.BACKEND})
    code = EXIT_NUMERIC if summary.get("numerical_failures") else EXIT_OK
    log(f"wrote {out} (exit {code})")
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="coldwave", description="Cold-plasma upper-hybrid oscillation lab")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="key = value config file")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed-rho", type=float, default=0.0, help="seed position for single-characteristic runs")
    ap.add_argument("--quiet", action="store_true", help="suppress progress messages")
    args = ap.parse_args(argv)
    try:
        resolved = parse_config(args.config)
        return run(args.subcommand, resolved, Path(args.out), args.seed_rho, args.quiet)
    except (ParseError, ValidationError) as exc:
        print(f"coldwave: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NUMERIC_ERRORS as exc:
        print(f"coldwave: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
