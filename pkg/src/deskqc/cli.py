"""Command-line entry point: ``deskqc <experiment> [options]``.

Every subcommand writes a JSON report (to ``--out``, to ``$DESKQC_OUT/<experiment>.json``
when that variable is set, or to stdout) and optionally a CSV of its per-point
series via ``--csv``.  Exit codes: 0 success, 1 execution error, 2 bad
configuration or usage.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from . import __version__
from .backend import Backend
from .noise import NoiseError, NoiseProfile, bundled_profile

log = logging.getLogger("deskqc")

OUT_ENV = "DESKQC_OUT"
CONFIG_KEYS = {"experiment", "backend", "shots", "seed", "mitigation", "params"}
MITIGATIONS = {"rem", "rc", "zne"}


class ConfigError(ValueError):
    """Invalid configuration or arguments (exit code 2)."""


# ---------------------------------------------------------------------------
# configuration and reports
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    experiment: str
    backend: str = "noiseless"
    shots: int | None = None
    seed: int | None = None
    mitigation: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(d) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in d:
            raise ConfigError("config needs an 'experiment' key")
        mit = d.get("mitigation") or []
        if isinstance(mit, str):
            mit = [m for m in mit.split(",") if m]
        bad = {m.lower() for m in mit} - MITIGATIONS
        if bad:
            raise ConfigError(f"unknown mitigation methods: {sorted(bad)}")
        params = d.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError("'params' must be a mapping")
        shots = d.get("shots")
        if shots is not None and (not isinstance(shots, int) or shots < 0):
            raise ConfigError("'shots' must be a non-negative integer")
        return cls(str(d["experiment"]), str(d.get("backend", "noiseless")), shots, d.get("seed"),
                   [m.lower() for m in mit], dict(params))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    results: dict
    series: list = field(default_factory=list)
    seed: int | None = None
    version: str = __version__
    wall_clock_s: float = 0.0
    created: str = ""

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment, "version": self.version, "seed": self.seed,
            "created": self.created, "wall_clock_s": self.wall_clock_s,
            "config": self.config, "results": self.results, "series": self.series,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(d["experiment"], d["config"], d["results"], d.get("series", []), d.get("seed"),
                   d.get("version", __version__), d.get("wall_clock_s", 0.0), d.get("created", ""))

    def to_json(self) -> str:
        return json.dumps(jsonable(self.to_dict()), indent=2, allow_nan=True)


def jsonable(x: Any) -> Any:
    """Convert numpy scalars/arrays, complex numbers and tuples into JSON types."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(x.real), "im": float(x.imag)}
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, (frozenset, set)):
        return sorted(jsonable(v) for v in x)
    return x


def emit_plot_data(report: ExperimentReport | dict, path: str | Path) -> Path:
    """Write the report's per-point series as CSV, one row per point."""
    rep = report.to_dict() if isinstance(report, ExperimentReport) else report
    rows = rep.get("series") or []
    if not rows:
        raise ValueError(f"report for {rep.get('experiment')!r} has no per-point series")
    columns = list(rows[0])
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
            w.writeheader()
            for r in rows:
                w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    except OSError as exc:
        raise OSError(f"cannot write plot data to {path}: {exc}") from exc
    return path


def make_backend(spec: str) -> Backend:
    """'noiseless', 'good', 'degraded', or a path to a YAML/JSON noise profile."""
    if spec in ("noiseless", "", None):
        return Backend()
    try:
        if spec in ("good", "degraded"):
            return Backend(bundled_profile(spec))
        return Backend(NoiseProfile.load(spec))
    except (OSError, NoiseError, yaml.YAMLError, ValueError) as exc:
        raise ConfigError(f"bad backend spec {spec!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# experiment runners: each returns (results, series)
# ---------------------------------------------------------------------------

def _run_chsh(a, backend):
    from .bell import chsh_scan, default_thetas

    pts = chsh_scan(default_thetas(a.points), a.shots, rem="rem" in a.mitigation, backend=backend,
                    rng_seed=a.seed, resamples=a.resamples)
    series = [{"theta": p.theta, "estimate": p.estimate.value, "stderr": p.estimate.stderr, "theory": p.theory}
              for p in pts]
    return {"points": [p.to_dict() for p in pts]}, series


def _run_ghz(a, backend):
    from .bell import compare_calibrations, ghz_entropies, ghz_fidelity

    ent = ghz_entropies(a.shots, backend, a.seed, rem="rem" in a.mitigation, projection=a.projection)
    fid = ghz_fidelity(a.fidelity_shots, backend, a.seed)
    results = {"entropies": ent.to_dict(), "stabilizer_fidelity": fid.to_dict()}
    if a.compare:
        results["calibration_comparison"] = compare_calibrations(
            [Backend(bundled_profile("good")), Backend(bundled_profile("degraded"))], a.fidelity_shots, a.seed)
    series = [{"quantity": k, "estimate": getattr(ent, k), "stderr": None, "theory": ent.THEORY[k],
               "upper_bound": ent.UPPER_BOUNDS[k]} for k in ("full", "rho_12", "rho_345")]
    return results, series


def _run_mermin(a, backend):
    from .bell import mermin_estimate

    rep = mermin_estimate(a.shots, rem="rem" in a.mitigation, backend=backend, rng_seed=a.seed,
                          resamples=a.resamples)
    series = [{"pauli": p, "sign": s, "estimate": e.value, "stderr": e.stderr, "theory": 1.0}
              for (s, p), e in zip(rep.monomials, rep.estimates)]
    return rep.to_dict(), series


def _load_graph(a):
    from .maxcut import Graph

    if a.graph:
        try:
            return Graph.load(a.graph, a.nodes)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"bad graph file {a.graph}: {exc}") from exc
    if not a.nodes:
        raise ConfigError("maxcut needs --graph or --nodes")
    return Graph.erdos_renyi(a.nodes, a.edge_prob, a.seed)


def _run_maxcut(a, backend):
    from .maxcut import brute_force_maxcut, optimize_qaoa

    g = _load_graph(a)
    width = backend.topology.num_qubits
    if g.n - 1 > width:
        raise ConfigError(f"graph has {g.n} nodes; at most {width + 1} fit on the device")
    best, argmax = brute_force_maxcut(g)
    res = optimize_qaoa(g, a.shots, backend, a.seed)
    results = {
        "nodes": g.n, "edges": [[x + 1, y + 1] for x, y in sorted(g.edges)],
        "gamma": res.gamma, "beta": res.beta, "expected_cut": res.expected_cut,
        "expected_cut_stderr": None, "max_cut": best, "optimal_assignments": argmax,
        "approximation_ratio": res.expected_cut / best if best else None,
        "evaluations": res.evaluations,
    }
    series = [{"gamma": ga, "beta": be, "mean_cut": c} for ga, be, c in res.history]
    return results, series


def _parse_sizes(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",") if x]
    except ValueError as exc:
        raise ConfigError(f"bad --sizes {text!r}") from exc


def _run_qscore(a, backend):
    from .maxcut import qscore_run

    rep = qscore_run(_parse_sizes(str(a.sizes)), a.instances, a.shots, a.edge_prob, backend, a.seed, a.policy)
    series = [{"n": n, "beta": rep.beta[n], "stderr": rep.beta_stderr[n], "passed": rep.passed[n]}
              for n in rep.sizes]
    return rep.to_dict(), series


def _run_neutrino(a, backend):
    from .neutrino import default_points, oscillation_scan

    pts = oscillation_scan(default_points(a.points, a.lmax), a.shots, rem="rem" in a.mitigation,
                           backend=backend, rng_seed=a.seed, resamples=a.resamples)
    rows = [p.to_dict() for p in pts]
    return {"points": rows}, rows


def _parse_knot(text: str):
    from .jones import BraidWord

    try:
        return BraidWord.parse(text[5:] if text.startswith("word=") else text)
    except ValueError as exc:
        raise ConfigError(f"bad --knot {text!r}: {exc}") from exc


def _run_jones(a, backend):
    from .jones import default_theta_grid, estimate_knot_trace

    word = _parse_knot(a.knot)
    mit = [m.upper() for m in a.mitigation]
    reps = estimate_knot_trace(word, default_theta_grid(a.thetas), a.shots, mit, backend, a.seed,
                               rc_count=a.rc_count, resamples=a.resamples)
    series = []
    for r in reps:
        row = {"theta": r.theta}
        for m, (re_, im_) in r.estimates.items():
            row[f"re_{m}"] = re_.value
            row[f"im_{m}"] = im_.value
            row[f"re_{m}_stderr"] = re_.stderr
            row[f"im_{m}_stderr"] = im_.stderr
        row["re_theory"] = r.trace_theory.real / 2
        row["im_theory"] = r.trace_theory.imag / 2
        series.append(row)
    return {"braid": str(word), "writhe": word.writhe, "points": [r.to_dict() for r in reps]}, series


def _run_vqe(a, backend):
    from .vqe import AimParams, vqe_optimize

    p = AimParams(a.eps_d, a.eps1, a.mu, a.u, a.v)
    shots = a.shots or None
    trace = vqe_optimize(p, shots, a.max_iters, backend, a.seed, rem="rem" in a.mitigation, convention=a.convention)
    series = [{"iteration": i, "energy": it.energy, "stderr": it.stderr, "grad_norm": it.grad_norm,
               "exact": trace.exact_energy} for i, it in enumerate(trace.iterations)]
    return trace.to_dict(), series


def _run_qutrit(a, backend):
    from .noise import (REFERENCE_QUTRIT_LIFETIMES, QutritRates, QutritTrace, fit_qutrit_rates,
                        qutrit_populations, synthetic_qutrit_trace)

    if a.data:
        try:
            arr = np.loadtxt(a.data, delimiter=",", skiprows=1, ndmin=2)
            trace = QutritTrace(arr[:, 0], arr[:, 1:4])
        except (OSError, ValueError, IndexError, NoiseError) as exc:
            raise ConfigError(f"bad qutrit data file {a.data}: {exc}") from exc
    else:
        truth = QutritRates.from_lifetimes(*REFERENCE_QUTRIT_LIFETIMES)
        trace = synthetic_qutrit_trace(truth, np.linspace(0, a.tmax, a.delays), a.sigma, a.seed)
    fit = fit_qutrit_rates(trace)
    model = qutrit_populations(trace.delays, fit.rates)
    results = {
        "lifetimes_us": list(fit.lifetimes), "lifetime_stderr_us": list(map(float, fit.lifetime_stderr)),
        "rates_per_us": list(fit.rates.as_array()), "rate_stderr_per_us": list(map(float, fit.rate_stderr)),
        "residual_rms": fit.residual_rms, "nfev": fit.nfev,
        "source": a.data or "synthetic",
    }
    series = [{"delay_us": t, "p0": d[0], "p1": d[1], "p2": d[2], "fit_p0": m[0], "fit_p1": m[1], "fit_p2": m[2]}
              for t, d, m in zip(trace.delays, trace.populations, model)]
    return results, series


def _run_transpile(a, backend):
    from .circuit import Circuit
    from .transpiler import native_gate_counts

    try:
        text = Path(a.input).read_text()
        circ = Circuit.from_json(text) if a.input.endswith(".json") else Circuit.from_qasm(text)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read circuit {a.input}: {exc}") from exc
    layout = [int(x) for x in a.layout.split(",")] if a.layout else None
    native = backend.compile(circ, layout)
    results = {
        "input_gate_counts": native_gate_counts([circ]),
        "native_gate_counts": native_gate_counts([native.circuit]),
        "native": native.to_dict(),
        "qasm": native.circuit.to_qasm(),
    }
    return results, []


# name -> (runner, help, default shots, argument adder)
def _add_common_shots(p, default):
    p.add_argument("--shots", type=int, default=default, help=f"shots per circuit (default {default})")


def _sub_chsh(p):
    _add_common_shots(p, 10_000)
    p.add_argument("--points", type=int, default=32)
    p.add_argument("--resamples", type=int, default=1000)


def _sub_ghz(p):
    _add_common_shots(p, 3500)
    p.add_argument("--projection", choices=("nearest", "clip", "mle"), default="nearest")
    p.add_argument("--fidelity-shots", type=int, default=10_000)
    p.add_argument("--compare", action="store_true", help="also compare the two bundled calibration profiles")


def _sub_mermin(p):
    _add_common_shots(p, 10_000)
    p.add_argument("--resamples", type=int, default=1000)


def _sub_maxcut(p):
    _add_common_shots(p, 10_000)
    p.add_argument("--graph", help="edge-list file, one 1-based pair per line")
    p.add_argument("--nodes", type=int)
    p.add_argument("--edge-prob", type=float, default=0.5)


def _sub_qscore(p):
    _add_common_shots(p, 2048)
    p.add_argument("--sizes", default="3..6", help="e.g. 3..6 or 3,4,5")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--edge-prob", type=float, default=0.5)
    p.add_argument("--policy", choices=("qaoa", "random", "perfect"), default="qaoa")


def _sub_neutrino(p):
    _add_common_shots(p, 5000)
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--lmax", type=float, default=16_000.0, help="largest L/E in km/GeV")
    p.add_argument("--resamples", type=int, default=1000)


def _sub_jones(p):
    _add_common_shots(p, 20_000)
    p.add_argument("--knot", default="trefoil", help="hopf, trefoil or word=<letters> such as word=1,1,-2")
    p.add_argument("--thetas", type=int, default=24)
    p.add_argument("--rc-count", type=int, default=30)
    p.add_argument("--resamples", type=int, default=1000)


def _sub_vqe(p):
    _add_common_shots(p, 5000)
    p.add_argument("--eps-d", type=float, default=0.0)
    p.add_argument("--eps1", type=float, default=0.0)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--u", type=float, default=2.0)
    p.add_argument("--v", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--convention", choices=("reference", "fermionic"), default="reference")


def _sub_qutrit(p):
    p.add_argument("--data", help="CSV with header delay,P0,P1,P2 (delays in us)")
    p.add_argument("--sigma", type=float, default=0.0, help="noise on synthetic data")
    p.add_argument("--delays", type=int, default=60)
    p.add_argument("--tmax", type=float, default=300.0)


def _sub_transpile(p):
    p.add_argument("input", help="circuit file (.qasm or .json)")
    p.add_argument("--layout", help="initial layout, comma separated physical qubits")


SUBCOMMANDS: dict[str, tuple[Callable, Callable, str]] = {
    "chsh": (_run_chsh, _sub_chsh, "CHSH scan over theta"),
    "ghz": (_run_ghz, _sub_ghz, "GHZ tomography, entropies and fidelity"),
    "mermin": (_run_mermin, _sub_mermin, "five-qubit Mermin polynomial"),
    "maxcut": (_run_maxcut, _sub_maxcut, "single Maxcut instance with QAOA"),
    "qscore": (_run_qscore, _sub_qscore, "Q-score benchmark sweep"),
    "neutrino": (_run_neutrino, _sub_neutrino, "neutrino oscillation scan"),
    "jones": (_run_jones, _sub_jones, "Jones polynomial trace estimation"),
    "vqe": (_run_vqe, _sub_vqe, "VQE for the impurity model"),
    "qutrit-fit": (_run_qutrit, _sub_qutrit, "fit qutrit relaxation rates"),
    "transpile": (_run_transpile, _sub_transpile, "compile a circuit to the native gate set"),
}


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="deskqc", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"deskqc {__version__}")
    sub = parser.add_subparsers(dest="experiment", metavar="experiment")
    subs = {}
    for name, (_, adder, help_) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_)
        adder(p)
        p.add_argument("--config", help="YAML/JSON experiment config; flags override it")
        p.add_argument("--backend", default="noiseless", help="noiseless, good, degraded or a profile file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--mitigation", default="", help="comma list from rem,rc,zne")
        p.add_argument("--out", help="JSON report path")
        p.add_argument("--csv", help="CSV plot-data path")
        p.add_argument("-v", "--verbose", action="store_true")
        subs[name] = p
    return parser, subs


def _apply_config(name: str, sub: argparse.ArgumentParser, argv: Sequence[str], cfg: ExperimentConfig) -> None:
    if cfg.experiment != name:
        raise ConfigError(f"config is for {cfg.experiment!r}, not {name!r}")
    dests = {a.dest for a in sub._actions}
    defaults: dict[str, Any] = {"backend": cfg.backend, "mitigation": ",".join(cfg.mitigation)}
    if cfg.seed is not None:
        defaults["seed"] = cfg.seed
    if cfg.shots is not None:
        if "shots" not in dests:
            raise ConfigError(f"{name} takes no shots setting")
        defaults["shots"] = cfg.shots
    for k, v in cfg.params.items():
        dest = k.replace("-", "_")
        if dest not in dests or dest in {"config", "out", "csv", "help"}:
            raise ConfigError(f"unknown parameter {k!r} for {name}")
        defaults[dest] = v
    sub.set_defaults(**defaults)


def run_cli(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.experiment:
            parser.print_usage(sys.stderr)
            print("deskqc: error: choose an experiment", file=sys.stderr)
            return 2
        if args.config:
            _apply_config(args.experiment, subs[args.experiment], argv, ExperimentConfig.load(args.config))
            args = parser.parse_args(argv)
        mit = [m.strip().lower() for m in str(args.mitigation or "").split(",") if m.strip() and m != "none"]
        bad = set(mit) - MITIGATIONS
        if bad:
            raise ConfigError(f"unknown mitigation methods: {sorted(bad)}")
        args.mitigation = mit
        if getattr(args, "shots", 1) is not None and getattr(args, "shots", 1) < 0:
            raise ConfigError("--shots must be non-negative")
        backend = make_backend(args.backend)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"deskqc: config error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    runner = SUBCOMMANDS[args.experiment][0]
    t0 = time.time()
    try:
        results, series = runner(args, backend)
    except ConfigError as exc:
        print(f"deskqc: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as an execution failure
        log.debug("execution failed", exc_info=True)
        print(f"deskqc: {args.experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    echo = {k: v for k, v in vars(args).items() if k not in {"out", "csv", "verbose", "config"}}
    report = ExperimentReport(args.experiment, jsonable(echo), jsonable(results), jsonable(series), args.seed,
                              wall_clock_s=round(time.time() - t0, 3),
                              created=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    try:
        _write_outputs(report, args)
    except OSError as exc:
        print(f"deskqc: {exc}", file=sys.stderr)
        return 1
    return 0


def _write_outputs(report: ExperimentReport, args) -> None:
    out = args.out
    if out is None and os.environ.get(OUT_ENV):
        out_dir = Path(os.environ[OUT_ENV])
        out_dir.mkdir(parents=True, exist_ok=True)
        out = str(out_dir / f"{args.experiment}.json")
    text = report.to_json()
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)
    if args.csv:
        emit_plot_data(report, args.csv)


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
