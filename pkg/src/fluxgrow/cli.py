"""Command-line scenario runner.

    fluxgrow run <config.json> [--out DIR] [--jobs N]
    fluxgrow list

A config is a JSON object ``{"scenario": ..., "parameters": {...},
"output": "dir", "formats": ["csv", "json"]}``.  Every run writes
``manifest.json`` (config as given, resolved parameters, code version) next
to its outputs.  Emitted files carry no timestamps or timings so identical
configs give identical bytes.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__

TWO_PI = 2.0 * math.pi
FORMATS = ("csv", "json")
TOP_KEYS = {"scenario", "parameters", "output", "formats"}


class ConfigError(ValueError):
    """Invalid scenario config; ``problems`` lists every offending key."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class Scenario:
    name: str
    summary: str
    required: list[str]
    optional: dict[str, Any]
    runner: Callable
    # groups of mutually exclusive spellings of one physical input
    alternatives: list[tuple[str, ...]] = field(default_factory=list)
    # alternative groups that may be omitted, with the value then used
    alternative_defaults: dict[str, float] = field(default_factory=dict)

    def keys(self) -> set[str]:
        out = set(self.required) | set(self.optional)
        for group in self.alternatives:
            out.update(group)
        return out


# ---------------------------------------------------------------- resolution helpers

def _pick(params: dict, dimless: str, raw: str, T: float | None, problems: list[str], default=None, factor=TWO_PI):
    """Dimensionless group from either ``dimless`` or ``raw`` (x 2 pi x T)."""
    has_d, has_r = dimless in params, raw in params
    if has_d and has_r:
        problems.append(f"give only one of {dimless!r} and {raw!r}")
        return None
    if has_d:
        return float(params[dimless])
    if has_r:
        if T is None:
            problems.append(f"{raw!r} needs 'T_us'")
            return None
        return float(params[raw]) * factor * T
    if default is None:
        problems.append(f"missing {dimless!r} (or {raw!r})")
    return default


def _grid(value, name: str, problems: list[str]):
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "num"}
        if extra or not {"start", "stop", "num"} <= set(value):
            problems.append(f"{name}: a range needs exactly start, stop, num")
            return None
        return np.linspace(float(value["start"]), float(value["stop"]), int(value["num"])).tolist()
    if isinstance(value, (list, tuple)) and value:
        return [float(v) for v in value]
    problems.append(f"{name}: expected a non-empty list or a {{start, stop, num}} range")
    return None


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# ---------------------------------------------------------------- scenarios

def _run_couplings(p: dict, out: Path, formats, jobs: int):
    from .couplings import ProfileKind, SpatialProfile, build_coupling_table

    kind = ProfileKind(p["profile"])
    prof = SpatialProfile(kind, float(p["a"]) if kind is ProfileKind.KAPPA_STEP1 else None)
    table = build_coupling_table(prof, int(p["m_max"]), int(p["n_max"]), p["method"], jobs=jobs)
    files = []
    if "csv" in formats:
        files.append(table.to_csv(out / "couplings.csv"))
    summary = {"profile": kind.value, "computed_by": table.computed_by, "m_max": table.m_max,
               "n_max": table.n_max, "metadata": table.metadata,
               "max_abs_off_diagonal_residual": float(np.max(np.abs(table.values[:, 1:, 0]))) if table.n_max else 0.0}
    return summary, files


def _resolve_couplings(p: dict, problems: list[str]) -> dict:
    r = dict(p)
    if r.get("profile") not in ("KappaStep1", "KappaTildeStep2"):
        problems.append("profile must be 'KappaStep1' or 'KappaTildeStep2'")
    elif r["profile"] == "KappaStep1" and "a" not in r:
        problems.append("KappaStep1 needs 'a'")
    elif r["profile"] == "KappaTildeStep2" and "a" in r:
        problems.append("KappaTildeStep2 takes no 'a'")
    if r.get("method") not in ("quadrature", "analytic"):
        problems.append("method must be 'quadrature' or 'analytic'")
    return r


def _resolve_stirap(p: dict, problems: list[str]) -> dict:
    T = float(p["T_us"]) if "T_us" in p else None
    r = {
        "Omega_T": _pick(p, "Omega_T", "Omega_over_2pi_MHz", T, problems),
        "g_T": _pick(p, "g_T", "g_over_2pi_MHz", T, problems),
        "delta_T": _pick(p, "delta_T", "delta_over_2pi_MHz", T, problems, default=0.0),
        "gamma_T": _pick(p, "gamma_T", "gamma_per_us", T, problems, default=0.0, factor=1.0),
    }
    for k in ("a", "n_max", "m_sector", "n_cycles", "tau1", "n_points", "convergence_check"):
        r[k] = p[k]
    r["raw_units"] = {k: p[k] for k in ("T_us", "Omega_over_2pi_MHz", "g_over_2pi_MHz",
                                        "delta_over_2pi_MHz", "gamma_per_us") if k in p}
    return r


def _run_stirap(r: dict, out: Path, formats, jobs: int):
    from .stirap import StirapParams, convergence_report, run_flux_insertion

    # the generator multiplies rates by T, so pass the groups with T = 1
    params = StirapParams(r["g_T"], r["delta_T"], r["gamma_T"], int(r["m_sector"]), int(r["n_max"]), float(r["a"]))
    trace = run_flux_insertion(params, r["Omega_T"], 1.0, int(r["n_cycles"]), float(r["tau1"]), int(r["n_points"]))
    files = []
    if "csv" in formats:
        files.append(trace.to_csv(out / "trace.csv"))
    summary = {"efficiencies": trace.metadata["efficiencies"],
               "population_at_t1": trace.metadata["population_at_t1"],
               "max_norm_drift": float(np.max(np.abs(trace.norms() - 1.0)))}
    if r["convergence_check"]:
        summary["convergence"] = convergence_report(params, r["Omega_T"], 1.0, tau1=float(r["tau1"]))
    return summary, files


def _resolve_losses(p: dict, problems: list[str]) -> dict:
    T = float(p["T_us"]) if "T_us" in p else None
    r: dict = {}
    for dim, raw in (("Omega_T_values", "Omega_over_2pi_MHz_values"), ("g_T_values", "g_over_2pi_MHz_values")):
        if dim in p and raw in p:
            problems.append(f"give only one of {dim!r} and {raw!r}")
        elif dim in p:
            r[dim] = _grid(p[dim], dim, problems)
        elif raw in p:
            vals = _grid(p[raw], raw, problems)
            if T is None:
                problems.append(f"{raw!r} needs 'T_us'")
            elif vals is not None:
                r[dim] = [v * TWO_PI * T for v in vals]
        else:
            problems.append(f"missing {dim!r} (or {raw!r})")
    r["gamma_T"] = _pick(p, "gamma_T", "gamma_per_us", T, problems, factor=1.0)
    r["a"] = float(p["a"])
    r["xi"] = float(p["xi"])
    return r


def _run_losses(r: dict, out: Path, formats, jobs: int):
    from .losses import fidelity_surface

    surf = fidelity_surface(r["Omega_T_values"], r["g_T_values"], r["gamma_T"], r["a"], r["xi"])
    files = []
    if "csv" in formats:
        files.append(surf.to_csv(out / "fidelity_surface.csv"))
    F = surf.F
    best = [{"Omega_T": float(W), "g_T_at_max": float(surf.g_T[int(np.argmax(F[i]))]), "F_max": float(F[i].max())}
            for i, W in enumerate(surf.Omega_T)]
    summary = {"F_min": float(F.min()), "F_max": float(F.max()), "best_g_per_Omega": best}
    return summary, files


def _resolve_fqh(p: dict, problems: list[str]) -> dict:
    r = dict(p)
    raw = [k for k in ("C6", "a_B", "l_B") if k in p]
    if raw and "V0" in p:
        problems.append("give either 'V0' or ('C6', 'a_B', 'l_B'), not both")
    elif raw:
        if len(raw) != 3:
            problems.append("raw interaction input needs all of 'C6', 'a_B', 'l_B'")
        else:
            from .fqh import InteractionParams
            ip = InteractionParams(float(p["C6"]), float(p["a_B"]), float(p["l_B"]))
            r["V0"] = ip.V0
            r["contact_regime"] = ip.contact_regime
    else:
        r.setdefault("V0", 1.0)
    if not isinstance(p.get("N_values"), list) or not all(isinstance(n, int) and n >= 1 for n in p.get("N_values", [])):
        problems.append("N_values must be a list of positive integers")
    return r


def _run_fqh(r: dict, out: Path, formats, jobs: int):
    from .fqh import diagonalize_sector, laughlin_angular_momentum, laughlin_state, pump_overlap

    V0 = float(r["V0"])
    sectors = []
    files = []
    for N in r["N_values"]:
        L = laughlin_angular_momentum(N)
        spectrum = diagonalize_sector(N, L, V0, r.get("m_max"))
        rep = spectrum.report()
        ln = laughlin_state(N)
        zm = spectrum.zero_modes()
        rep["laughlin_overlap"] = float(sum(abs(v.inner(ln)) ** 2 for v in zm))
        rep["pump_overlap"] = pump_overlap(N)
        sectors.append(rep)
        if "csv" in formats:
            files.append(ln.to_csv(out / f"laughlin_N{N}.csv"))
    return {"V0": V0, "sectors": sectors}, files


def _resolve_grow(p: dict, problems: list[str]) -> dict:
    V0 = float(p.get("V0", 1.0))
    r = {"V0": V0}
    for k in ("Delta0", "Omega_p", "g_a", "g_b", "tau_f"):
        ratio = f"{k}_over_V0" if k != "tau_f" else "tau_f_times_V0"
        if k in p and ratio in p:
            problems.append(f"give only one of {k!r} and {ratio!r}")
        elif k in p:
            r[k] = float(p[k])
        elif ratio in p:
            r[k] = float(p[ratio]) * V0 if k != "tau_f" else float(p[ratio]) / V0
        else:
            problems.append(f"missing {k!r} (or {ratio!r})")
    for k in ("N_target", "dt", "samples_per_stage", "ramp_fraction"):
        r[k] = p[k]
    r["Delta_LN"] = p.get("Delta_LN")
    return r


def _run_grow(r: dict, out: Path, formats, jobs: int):
    from .growing import ProtocolConfig, run_growing_protocol

    cfg = ProtocolConfig(Delta0=r["Delta0"], V0=r["V0"], Omega_p=r["Omega_p"], g_a=r["g_a"], g_b=r["g_b"],
                         tau_f=r["tau_f"], N_target=int(r["N_target"]), Delta_LN=r["Delta_LN"],
                         ramp_fraction=float(r["ramp_fraction"]), dt=float(r["dt"]),
                         samples_per_stage=int(r["samples_per_stage"]))
    trace = run_growing_protocol(cfg)
    files = []
    if "csv" in formats:
        files.append(trace.to_csv(out / "trace.csv"))
    summary = trace.summary()
    summary[f"final_p_LN{cfg.N_target}"] = trace.metadata["final_fidelity"]
    return summary, files


SCENARIOS: dict[str, Scenario] = {
    "couplings": Scenario(
        "couplings", "coupling table chi (KappaStep1) or tilde-chi (KappaTildeStep2) as CSV",
        ["profile", "m_max", "n_max"], {"a": None, "method": "quadrature"}, _run_couplings),
    "stirap": Scenario(
        "stirap", "chained two-step flux insertion of one photon; trace CSV and efficiencies",
        [], {"T_us": None, "a": 0.01, "n_max": 5, "m_sector": 0, "n_cycles": 1, "tau1": 6.0, "n_points": 241,
             "convergence_check": False},
        _run_stirap,
        [("Omega_T", "Omega_over_2pi_MHz"), ("g_T", "g_over_2pi_MHz"), ("delta_T", "delta_over_2pi_MHz"),
         ("gamma_T", "gamma_per_us")],
        {"delta_T": 0.0, "gamma_T": 0.0}),
    "losses": Scenario(
        "losses", "fidelity surface p, p_in, F over (Omega T, g T)",
        [], {"T_us": None, "a": 0.005, "xi": 0.25}, _run_losses,
        [("Omega_T_values", "Omega_over_2pi_MHz_values"), ("g_T_values", "g_over_2pi_MHz_values"),
         ("gamma_T", "gamma_per_us")]),
    "fqh-report": Scenario(
        "fqh-report", "Laughlin sectors: dimension, zero modes, gap, Laughlin overlap, pump overlap",
        ["N_values"], {"V0": None, "m_max": None, "C6": None, "a_B": None, "l_B": None}, _run_fqh),
    "grow": Scenario(
        "grow", "full Laughlin growing protocol; observables CSV and summary JSON",
        [], {"V0": 1.0, "N_target": 3, "dt": 1.0, "samples_per_stage": 100, "ramp_fraction": 0.0, "Delta_LN": None},
        _run_grow,
        [("Delta0", "Delta0_over_V0"), ("Omega_p", "Omega_p_over_V0"), ("g_a", "g_a_over_V0"),
         ("g_b", "g_b_over_V0"), ("tau_f", "tau_f_times_V0")]),
}

_RESOLVERS = {"couplings": _resolve_couplings, "stirap": _resolve_stirap, "losses": _resolve_losses,
              "fqh-report": _resolve_fqh, "grow": _resolve_grow}


def validate_config(config: Any) -> tuple[Scenario, dict, list[str]]:
    """Return (scenario, resolved parameters, formats) or raise ConfigError listing all problems."""
    problems: list[str] = []
    if not isinstance(config, dict):
        raise ConfigError(["config must be a JSON object"])
    for k in sorted(set(config) - TOP_KEYS):
        problems.append(f"unknown top-level key {k!r}")
    name = config.get("scenario")
    if name not in SCENARIOS:
        problems.append(f"scenario must be one of {sorted(SCENARIOS)}, got {name!r}")
        raise ConfigError(problems)
    sc = SCENARIOS[name]
    params = config.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError(problems + ["parameters must be an object"])
    for k in sorted(set(params) - sc.keys()):
        problems.append(f"unknown parameter {k!r} for scenario {name!r}")
    for k in sc.required:
        if k not in params:
            problems.append(f"missing required parameter {k!r}")
    formats = config.get("formats", list(FORMATS))
    if not isinstance(formats, list) or not set(formats) <= set(FORMATS):
        problems.append(f"formats must be a subset of {list(FORMATS)}")
        formats = list(FORMATS)
    if problems:
        raise ConfigError(problems)
    merged = {k: v for k, v in sc.optional.items() if v is not None}
    merged.update(params)
    resolved = _RESOLVERS[name](merged, problems)
    if problems:
        raise ConfigError(problems)
    return sc, resolved, formats


def run(config_path, out: str | None = None, jobs: int = 1) -> int:
    """Execute one scenario; returns the process exit status."""
    out_dir = Path(out) if out else None
    try:
        config = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(out_dir, "config_unreadable", [str(exc)], 2)
    if out_dir is None:
        out_dir = Path(config.get("output", "fluxgrow_out")) if isinstance(config, dict) else Path("fluxgrow_out")
    try:
        sc, resolved, formats = validate_config(config)
    except ConfigError as exc:
        return _fail(out_dir, "invalid_config", exc.problems, 2)
    except (ValueError, TypeError) as exc:
        return _fail(out_dir, "invalid_config", [str(exc)], 2)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"scenario": sc.name, "config": config, "resolved": resolved, "formats": formats,
                "package": "fluxgrow", "version": __version__}
    try:
        summary, files = sc.runner(resolved, out_dir, formats, max(1, int(jobs)))
    except Exception as exc:  # numerical failures carry the module diagnostic
        return _fail(out_dir, "run_failed", [f"{type(exc).__name__}: {exc}"], 1,
                     traceback.format_exception_only(type(exc), exc))
    if "json" in formats:
        files.append(_write_json(out_dir / "summary.json", summary))
    manifest["outputs"] = sorted(Path(f).name for f in files)
    _write_json(out_dir / "manifest.json", manifest)
    print(json.dumps({"status": "ok", "scenario": sc.name, "outputs": manifest["outputs"]}, sort_keys=True))
    return 0


def _fail(out_dir: Path | None, kind: str, problems: list[str], code: int, detail=None) -> int:
    report = {"status": "error", "error": kind, "problems": problems}
    if detail:
        report["detail"] = [d.rstrip() for d in detail]
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def list_scenarios() -> str:
    lines = []
    for sc in SCENARIOS.values():
        lines.append(f"{sc.name}: {sc.summary}")
        lines.append(f"  required: {', '.join(sc.required) if sc.required else '(none)'}")
        for group in sc.alternatives:
            if group[0] in sc.alternative_defaults:
                lines.append(f"  optional, one of: {' | '.join(group)} (default {group[0]}={sc.alternative_defaults[group[0]]!r})")
            else:
                lines.append(f"  required, one of: {' | '.join(group)}")
        opts = ", ".join(f"{k}={v!r}" for k, v in sc.optional.items())
        lines.append(f"  optional: {opts}")
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fluxgrow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (overrides the config)")
    p_run.add_argument("--jobs", type=int, default=1, help="maximum worker processes")
    sub.add_parser("list", help="list scenarios and their keys")
    args = parser.parse_args(argv)
    if args.command == "list":
        print(list_scenarios())
        return 0
    return run(args.config, args.out, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
