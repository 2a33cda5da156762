"""``laurent-lab run KIND --config cfg.json --out dir``.

Every experiment is computed in memory, then its CSV tables and a JSON
manifest are written in one ordered pass.  A manifest can be fed back as
``--config`` to reproduce the run.

Exit codes: 0 success, 2 invalid configuration (nothing written),
3 numerical failure (error record on stderr, nothing written).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import groundstate, ids, lifshitz, symbol
from ._parallel import THREADS_ENV, resolve_threads
from .disorder import dist_from_dict
from .errors import ConfigInvalid, LaurentLabError
from .io import build_manifest, csv_text, write_outputs
from .operator import BOUNDARY_TAGS, SIMPLE, IntegerSymbolSpec, bracketing_check

KINDS = ("symbol-report", "bracketing", "gap-scan", "ids-sweep", "sandwich", "temple",
         "tail-fit", "probes", "figure1")
U64 = 1 << 64

# ---------------------------------------------------------------- config parsing


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigInvalid(f"missing required key {key!r}")
    return cfg[key]


def _int(cfg: dict, key: str, default=None, lo: int | None = None) -> int:
    v = cfg.get(key, default) if default is not None else _need(cfg, key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigInvalid(f"{key!r} must be an integer")
    if lo is not None and v < lo:
        raise ConfigInvalid(f"{key!r} must be >= {lo}")
    return v


def _float(cfg: dict, key: str, default=None, positive: bool = False) -> float:
    v = cfg.get(key, default) if default is not None else _need(cfg, key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigInvalid(f"{key!r} must be a finite number")
    if positive and v <= 0:
        raise ConfigInvalid(f"{key!r} must be positive")
    return float(v)


def _int_list(cfg: dict, key: str, lo: int = 1) -> list[int]:
    v = _need(cfg, key)
    if not isinstance(v, list) or not v or any(isinstance(x, bool) or not isinstance(x, int) or x < lo for x in v):
        raise ConfigInvalid(f"{key!r} must be a non-empty list of integers >= {lo}")
    return v


def _energies(cfg: dict, key: str = "energies") -> np.ndarray:
    v = _need(cfg, key)
    if isinstance(v, dict):
        if len(v) != 1 or next(iter(v)) not in ("linspace", "geomspace"):
            raise ConfigInvalid(f"{key!r} must be a list or {{'linspace'|'geomspace': [lo, hi, n]}}")
        how, args = next(iter(v.items()))
        if (not isinstance(args, list) or len(args) != 3 or isinstance(args[2], bool)
                or not isinstance(args[2], int) or args[2] < 1):
            raise ConfigInvalid(f"{key!r}.{how} needs [lo, hi, n]")
        try:
            e = getattr(np, how)(float(args[0]), float(args[1]), args[2])
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"{key!r}: {exc}") from None
    elif isinstance(v, list) and v:
        try:
            e = np.array([float(x) for x in v])
        except (TypeError, ValueError):
            raise ConfigInvalid(f"{key!r} must contain numbers") from None
    else:
        raise ConfigInvalid(f"{key!r} must be a non-empty list")
    if not np.all(np.isfinite(e)):
        raise ConfigInvalid(f"{key!r} must be finite")
    return e


def _spec(cfg: dict) -> IntegerSymbolSpec:
    d = _need(cfg, "spec")
    if not isinstance(d, dict):
        raise ConfigInvalid("'spec' must be an object")
    try:
        if "alpha" in d:
            extra = set(d) - {"minima", "alpha", "scale"}
            if extra:
                raise ConfigInvalid(f"unknown spec keys {sorted(extra)}")
            return IntegerSymbolSpec.from_alpha(d["minima"], float(d["alpha"]), float(d.get("scale", 1.0)))
        extra = set(d) - {"minima", "abar", "beta", "scale"}
        if extra:
            raise ConfigInvalid(f"unknown spec keys {sorted(extra)}")
        return IntegerSymbolSpec(tuple(d["minima"]), d.get("abar", 1), float(d.get("beta", 1.0)),
                                 float(d.get("scale", 1.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"invalid spec: {exc}") from None


def _symbol(cfg: dict) -> symbol.Symbol:
    d = cfg.get("symbol", {"example": "three_minima"})
    if not isinstance(d, dict):
        raise ConfigInvalid("'symbol' must be an object")
    if d.get("example") == "three_minima" and len(d) == 1:
        return symbol.THREE_MINIMA_EXAMPLE
    try:
        if "factors" in d:
            return symbol.Symbol.cosine_product([tuple(map(float, f)) for f in d["factors"]],
                                                float(d.get("scale", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"invalid symbol: {exc}") from None
    raise ConfigInvalid("symbol needs 'factors' or 'example': 'three_minima'")


def _dist(cfg: dict):
    d = _need(cfg, "distribution")
    if not isinstance(d, dict):
        raise ConfigInvalid("'distribution' must be an object")
    try:
        return dist_from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"invalid distribution: {exc}") from None


def load_config(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object")
    if "manifest_version" in raw:  # rerun from a manifest
        raw = raw.get("config")
        if not isinstance(raw, dict):
            raise ConfigInvalid("manifest has no config section")
    return raw


# ---------------------------------------------------------------- experiments
# Each plan_* validates its config and returns a zero-argument job that
# produces (tables, summary).  No heavy work happens before the job runs.


def _table(header, rows) -> str:
    return csv_text(header, rows)


def plan_symbol_report(cfg, threads):
    s = _symbol(cfg)
    n_max = _int(cfg, "n_max", 256, lo=1)
    energies = _energies(cfg) if "energies" in cfg else None

    def job():
        rep = symbol.minima_report(s)
        env = symbol.envelope_bounds(s, report=rep)
        coeffs = symbol.fourier_coefficients(s, n_max)
        decay = coeffs.decay_report()
        tables = {
            "minima.csv": _table(["location", "exponent", "residual", "declared"],
                                 [(loc, ex, r, "" if rep.declared is None else rep.declared[i])
                                  for i, (loc, ex, r) in enumerate(zip(rep.locations, rep.exponents, rep.residuals))]),
            "coefficients.csv": _table(["n", "re", "im"], coeffs.rows()),
            "envelope.csv": _table(["c_low", "C_up", "b", "i0"], [(env.c_low, env.C_up, env.b, env.i0)]),
            "decay.csv": _table(["nu_measured", "constant", "n_fitted"],
                                [(decay.nu_measured, decay.constant, decay.n_fitted)]),
        }
        if energies is not None:
            tables["free_ids.csv"] = _table(["E", "ids"], zip(energies, symbol.free_ids_closed(s, energies)))
        return tables, {"b": rep.b, "nu_measured": decay.nu_measured, "c_low": env.c_low, "C_up": env.C_up}

    return job


def plan_bracketing(cfg, threads):
    spec = _spec(cfg)
    tol = _float(cfg, "tol", 1e-10, positive=True)
    if "intervals" in cfg:
        triples = cfg["intervals"]
        if not isinstance(triples, list) or not triples or any(
                not isinstance(t, list) or len(t) != 3 or not all(isinstance(x, int) for x in t) for t in triples):
            raise ConfigInvalid("'intervals' must be a list of [a, b, cut] integer triples")
    else:
        L = _int(cfg, "L", lo=1)
        triples = [[-L, L, _int(cfg, "cut", 0)]]
    for a, b, cut in triples:
        if not a <= cut < b:
            raise ConfigInvalid(f"cut {cut} must satisfy a <= cut < b for [{a}, {b}]")

    def job():
        reps = [bracketing_check(spec, (a, b), cut, tol, raise_on_fail=True) for a, b, cut in triples]
        rows = [(r.interval[0], r.interval[1], r.cut, r.lower_min, r.upper_min, r.norm, r.passed) for r in reps]
        summary = {"all_passed": all(r.passed for r in reps),
                   "worst_scaled": min(min(r.lower_min, r.upper_min) / r.norm for r in reps)}
        return {"bracketing.csv": _table(["a", "b", "cut", "lower_min", "upper_min", "norm", "passed"], rows)}, summary

    return job


def plan_gap_scan(cfg, threads):
    spec = _spec(cfg)
    Ls = _int_list(cfg, "Ls", lo=max(1, spec.N))

    def job():
        rep = groundstate.gap_scaling(spec, Ls)
        rows = [(L, g, d, g * float(L) ** rep.b) for L, g, d in zip(rep.Ls, rep.gaps, rep.kernel_dims)]
        fit = [(rep.b, rep.slope, rep.intercept, rep.C0)]
        return ({"gaps.csv": _table(["L", "gap", "kernel_dim", "gap_times_L_b"], rows),
                 "fit.csv": _table(["b", "slope", "intercept", "C0"], fit)},
                {"slope": rep.slope, "target": -rep.b, "C0": rep.C0})

    return job


def _model(cfg) -> ids.Model:
    bc = cfg.get("bc", SIMPLE)
    if bc not in BOUNDARY_TAGS:
        raise ConfigInvalid(f"'bc' must be one of {BOUNDARY_TAGS}")
    try:
        if "spec" in cfg:
            return ids.Model(spec=_spec(cfg), bc=bc)
        return ids.Model(symbol=_symbol(cfg), bc=bc)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None


def plan_ids_sweep(cfg, threads):
    model = _model(cfg)
    dist = _dist(cfg)
    L = _int(cfg, "L", lo=1)
    energies = _energies(cfg)
    n = _int(cfg, "n_samples", lo=1)
    seed = cfg["seed"]

    def job():
        c = ids.mc_ids(model, dist, L, energies, n, seed, threads)
        return ({"ids.csv": _table(["E", "mean", "stderr", "n_samples", "L"], c.rows())},
                {"n_samples": n, "L": L})

    return job


def plan_sandwich(cfg, threads):
    spec = _spec(cfg)
    dist = _dist(cfg)
    L = _int(cfg, "L", lo=spec.N)
    energies = _energies(cfg)
    n = _int(cfg, "n_samples", lo=1)
    seed = cfg["seed"]
    env_cfg = cfg.get("envelope")
    if env_cfg is not None and not isinstance(env_cfg, dict):
        raise ConfigInvalid("'envelope' must be an object")
    env_sym = _symbol(env_cfg) if env_cfg is not None else None
    env_L = _int(env_cfg, "L", L, lo=1) if env_cfg is not None else None

    def job():
        sw = ids.sandwich_curves(spec, dist, L, energies, n, seed, threads)
        tables = {"sandwich.csv": _table(["E", "dirichlet_mean", "dirichlet_stderr", "neumann_mean",
                                          "neumann_stderr", "n_samples", "L"], sw.rows())}
        summary = {"per_sample_ordered": sw.per_sample_ordered()}
        if env_sym is not None:
            env = symbol.envelope_bounds(env_sym)
            ec = ids.envelope_curves(env_sym, env, dist, env_L, energies, n, seed, threads)
            tables["envelope_sandwich.csv"] = _table(
                ["E", "upper_symbol_mean", "symbol_mean", "lower_symbol_mean", "n_samples", "L"], ec.rows())
            summary["envelope_per_sample_ordered"] = ec.per_sample_ordered()
        return tables, summary

    return job


def plan_temple(cfg, threads):
    spec = _spec(cfg)
    dist = _dist(cfg)
    L = _int(cfg, "L", lo=spec.N)
    n = _int(cfg, "n_samples", lo=1)
    c_tilde = _float(cfg, "c_tilde", 0.25)
    if not 0 < c_tilde < 0.5:
        raise ConfigInvalid("'c_tilde' must lie in (0, 1/2)")
    C0 = cfg.get("C0")
    C0_Ls = cfg.get("C0_Ls")
    if C0 is not None:
        C0 = _float(cfg, "C0", positive=True)
    elif C0_Ls is not None:
        C0_Ls = _int_list(cfg, "C0_Ls", lo=spec.N)
    seed = cfg["seed"]

    def job():
        c0 = C0 if C0 is not None else (lifshitz.measure_C0(spec, C0_Ls) if C0_Ls is not None else None)
        rep = lifshitz.temple_verify(spec, dist, L, n, seed, c0, c_tilde, threads)
        return ({"temple.csv": _table(["sample", "E0", "min_form", "c_tilde", "C0", "L", "b", "passed"], rep.rows())},
                {"pass_rate": rep.pass_rate, "C0": rep.C0, "min_margin": float(rep.margin.min())})

    return job


def plan_tail_fit(cfg, threads):
    mode = cfg.get("mode", "synthetic")
    energies = _energies(cfg)
    if np.any(energies <= 0):
        raise ConfigInvalid("energies must be positive")
    if mode == "synthetic":
        exps = cfg.get("exponents", [0.5])
        if not isinstance(exps, list) or not exps or not all(isinstance(x, (int, float)) and x > 0 for x in exps):
            raise ConfigInvalid("'exponents' must be a list of positive numbers")
        const = _float(cfg, "constant", 1.0, positive=True)

        def job():
            data, fits = [], []
            for s_ in exps:
                logn = -const * energies ** (-s_)
                fit = lifshitz.double_log_fit(energies, logn, log_values=True, b=1.0 / s_)
                data += [(s_, e, v) for e, v in zip(energies, logn)]
                fits.append(("synthetic", s_, fit.slope, fit.intercept, fit.residual, fit.target))
            return ({"data.csv": _table(["exponent", "E", "log_N"], data),
                     "fit.csv": _table(["mode", "parameter", "slope", "intercept", "residual", "target"], fits)},
                    {"slopes": [f[2] for f in fits]})

        return job
    if mode == "free":
        s = _symbol(cfg)

        def job():
            vals = symbol.free_ids_closed(s, energies)
            fit = lifshitz.log_log_fit(energies, vals)
            b = symbol.minima_report(s).b
            return ({"data.csv": _table(["E", "ids"], zip(energies, vals)),
                     "fit.csv": _table(["mode", "parameter", "slope", "intercept", "residual", "target"],
                                       [("free", b, fit.slope, fit.intercept, fit.residual, 1.0 / b)])},
                    {"slope": fit.slope, "target": 1.0 / b})

        return job
    if mode == "neumann":
        spec = _spec(cfg)
        dist = _dist(cfg)
        gamma = _float(cfg, "gamma", 1.0, positive=True)
        n = _int(cfg, "n_samples", lo=2)
        tilt = bool(cfg.get("tilt", True))
        seed = cfg["seed"]

        def job():
            est = lifshitz.neumann_tail_estimate(spec, dist, energies, gamma, n, seed, threads, tilt)
            fit = est.fit(b=spec.b)
            return ({"data.csv": _table(["E", "L", "mean", "stderr", "n_samples", "tilt"], est.rows()),
                     "fit.csv": _table(["mode", "parameter", "slope", "intercept", "residual", "target"],
                                       [("neumann", spec.b, fit.slope, fit.intercept, fit.residual, fit.target)])},
                    {"slope": fit.slope, "target": fit.target})

        return job
    raise ConfigInvalid("'mode' must be one of synthetic, free, neumann")


def plan_probes(cfg, threads):
    spec = _spec(cfg)
    dist = _dist(cfg)
    energies = _energies(cfg)
    if np.any(energies <= 0):
        raise ConfigInvalid("energies must be positive")
    gamma = _float(cfg, "gamma", 1.0, positive=True)
    n = _int(cfg, "n_samples", lo=1)
    which = cfg.get("which", "both")
    if which not in ("upper", "lower", "both"):
        raise ConfigInvalid("'which' must be upper, lower or both")
    if which != "upper" and dist.kind not in ("uniform", "power_law"):
        raise ConfigInvalid("the lower probe needs a uniform or power_law distribution")
    cap = _int(cfg, "cap", 4096, lo=1)
    seed = cfg["seed"]
    header = ["E", "L", "n", "hits", "probability", "ci_low", "ci_high", "certificate_hits", "dominance"]

    def job():
        tables, summary, skipped = {}, {}, []
        if which in ("upper", "both"):
            up = lifshitz.upper_probe(spec, dist, energies, gamma, n, seed, cap, threads)
            tables["upper.csv"] = _table(header, up.table())
            skipped += [("upper", e, L) for e, L in up.skipped]
        if which in ("lower", "both"):
            lo = lifshitz.lower_probe(spec, dist, energies, gamma, n, seed, cap, threads)
            tables["lower.csv"] = _table(header, lo.table())
            skipped += [("lower", e, L) for e, L in lo.skipped]
            summary["C3"] = lo.constant
            summary["certificate_dominance"] = min((r.dominance for r in lo.rows), default=1.0)
        tables["skipped.csv"] = _table(["probe", "E", "L"], skipped)
        return tables, summary

    return job


def plan_figure1(cfg, threads):
    s = _symbol(cfg)
    n_points = _int(cfg, "n_points", 4096, lo=2)
    constants = cfg.get("constants", [0.5, 3.0])
    if constants != "constructive" and not (
            isinstance(constants, list) and len(constants) == 2
            and all(isinstance(c, (int, float)) and c > 0 for c in constants)):
        raise ConfigInvalid("'constants' must be [c_low, C_up] or 'constructive'")

    def job():
        env = symbol.envelope_bounds(s)
        if constants != "constructive":
            env = symbol.EnvelopeBounds(float(constants[0]), float(constants[1]), env.b, env.i0,
                                        env.locations, env.exponents)
        tab = symbol.envelope_table(s, env, n_points)
        bad = tab.violations
        rows = zip(tab.t, tab.f, tab.lower, tab.upper)
        return ({"figure1.csv": _table(["t", "f", "lower", "upper"], rows),
                 "figure1_summary.csv": _table(["c_low", "C_up", "b", "n_points", "lower_violations",
                                                "upper_violations"],
                                               [(env.c_low, env.C_up, env.b, n_points,
                                                 int(np.count_nonzero(tab.lower > tab.f)),
                                                 int(np.count_nonzero(tab.f > tab.upper)))])},
                {"sandwich_holds": not bad.any(), "violations": int(bad.sum())})

    return job


PLANS = {
    "symbol-report": plan_symbol_report,
    "bracketing": plan_bracketing,
    "gap-scan": plan_gap_scan,
    "ids-sweep": plan_ids_sweep,
    "sandwich": plan_sandwich,
    "temple": plan_temple,
    "tail-fit": plan_tail_fit,
    "probes": plan_probes,
    "figure1": plan_figure1,
}


def resolve_config(cfg: dict, kind: str | None, seed: int | None) -> dict:
    cfg = dict(cfg)
    if kind is not None:
        if cfg.get("kind", kind) != kind:
            raise ConfigInvalid(f"config is for {cfg['kind']!r}, not {kind!r}")
        cfg["kind"] = kind
    if cfg.get("kind") not in KINDS:
        raise ConfigInvalid(f"'kind' must be one of {KINDS}")
    if seed is not None:
        cfg["seed"] = seed
    cfg.setdefault("seed", 0)
    s = cfg["seed"]
    if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < U64:
        raise ConfigInvalid("'seed' must be an unsigned 64-bit integer")
    return cfg


def _error(kind: str, exc: Exception) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc), "kind": kind}, sort_keys=True)


def run(config: dict, out_dir: str | Path, kind: str | None = None, seed: int | None = None,
        threads: int | None = None) -> int:
    """Validate, compute, then write.  Returns the process exit status."""
    try:
        cfg = resolve_config(config, kind, seed)
        try:
            nthreads = resolve_threads(threads)
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from None
        job = PLANS[cfg["kind"]](cfg, nthreads)
    except ConfigInvalid as exc:
        print(_error(str(config.get("kind", kind)), exc), file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        tables, summary = job()
    except LaurentLabError as exc:
        print(_error(cfg["kind"], exc), file=sys.stderr)
        return 3
    except ValueError as exc:  # parameter combinations only detectable at run time
        print(_error(cfg["kind"], ConfigInvalid(str(exc))), file=sys.stderr)
        return 2
    wall = time.perf_counter() - t0
    write_outputs(Path(out_dir), tables, build_manifest(cfg, tables, summary, wall, nthreads))
    return 0


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="laurent-lab", description="Random Laurent-matrix operator experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config or manifest")
    r.add_argument("kind", nargs="?", choices=KINDS)
    r.add_argument("--config", required=True, help="JSON config, or a manifest from an earlier run")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=_u64, default=None, help="overrides the config seed")
    r.add_argument("--threads", type=int, default=None, help=f"worker threads (fallback: ${THREADS_ENV})")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigInvalid as exc:
        print(_error(str(args.kind), exc), file=sys.stderr)
        return 2
    return run(cfg, args.out, args.kind, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
