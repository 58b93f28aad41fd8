"""Command-line front end.

    wignerlab constants    CONFIG
    wignerlab simulate     CONFIG [--out FILE]
    wignerlab rate-scan    CONFIG [--out FILE] [--assert]
    wignerlab third-moment CONFIG [--out FILE] [--assert]
    wignerlab green-check  CONFIG --check {locallaw,decomp,eg,hs,two-point,three-point}

Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 assertion failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .chebyshev import cheb_coeffs, parse_function, shift_gamma
from .ensemble import EnsembleSpec, sample_wigner
from .errors import AssumptionViolated, ConfigError, NumericalError, WignerLabError
from .greenfn import (SLACK_EPS, decomposition_residual, eg_expansion_residual, hs_trace,
                      local_law_scan, multipoint_mc)
from .montecarlo import ExperimentConfig, rate_fit, run_experiment
from .spectral import decompose, les
from .theory import SpectralParam, constants, r2 as r2_fn

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 1, 2, 3
ENV_WORKERS = "WIGNER_CLT_WORKERS"

KS_WINDOWS = {1: (-0.75, -0.3), 0: (-1.3, -0.7)}
GREEN_COLUMNS = ["check", "n", "z_re", "z_im", "observed", "bound", "ratio", "se", "replicas"]
RATE_COLUMNS = ["n", "M", "statistic", "value", "se", "gamma", "chi", "sigma2_theory", "seed"]
THIRD_COLUMNS = ["n", "M", "skewness", "se", "predicted", "z_score", "r1", "r2", "variance", "mode"]
SIM_COLUMNS = ["n", "replica", "trace_f", "trace_h", "sum_diag_sq"]


class AssertionFailed(Exception):
    pass


# ---------------------------------------------------------------- provenance

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    seed: int | None
    tool_version: str = __version__
    start: str = ""
    end: str = ""
    outputs: list = field(default_factory=list)

    def header(self) -> str:
        """Deterministic part, embedded in every CSV (timestamps live in the sidecar)."""
        d = {"config_hash": self.config_hash, "seed": self.seed, "tool_version": self.tool_version}
        return "# manifest " + canonical_json(d)

    def to_json(self) -> dict:
        return asdict(self)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def render_csv(manifest: RunManifest, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(manifest.header() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _emit(text: str, out: str | None, manifest: RunManifest, summary: dict | None = None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
        manifest.outputs.append(out)
        manifest.end = _now()
        side = {"manifest": manifest.to_json()}
        if summary is not None:
            side["summary"] = summary
        with open(out + ".json", "w") as fh:
            json.dump(side, fh, indent=2, sort_keys=True, default=str)
        manifest.outputs.append(out + ".json")
    else:
        sys.stdout.write(text)
        if summary is not None:
            sys.stdout.write("# summary " + canonical_json(summary) + "\n")


# ---------------------------------------------------------------- config helpers

COMMON_KEYS = {"ensemble", "seed", "workers", "comment"}
KEYS = {
    "constants": COMMON_KEYS | {"f", "gamma", "n", "K", "nodes"},
    "simulate": COMMON_KEYS | {"f", "gamma", "n", "n_grid", "replicas"},
    "rate-scan": COMMON_KEYS | {"f", "gamma", "n_grid", "replicas", "statistic", "standardize",
                                "window", "max_cost", "t_grid", "synthetic"},
    "third-moment": COMMON_KEYS | {"f", "gamma", "n_grid", "replicas", "r1_sign", "standardize",
                                   "max_cost"},
    "green-check": COMMON_KEYS | {"n", "n_grid", "z", "replicas", "probes", "samples", "f", "p",
                                  "grid", "x_range", "eigenvalues", "delta", "budget", "tol"},
}


def load_config(path: str, command: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path!r} at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for key in cfg:
        if key not in KEYS[command]:
            raise ConfigError(f"unknown config key {key!r} for {command}")
    return cfg


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing required key {key!r}")
    return cfg[key]


def _typed(cfg: dict, key: str, kind, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"config is missing required key {key!r}")
        return default
    try:
        if kind is int and isinstance(cfg[key], float) and not cfg[key].is_integer():
            raise ValueError
        return kind(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r} has invalid value {cfg[key]!r}") from None


def _ensemble(cfg):
    try:
        return EnsembleSpec.from_json(_need(cfg, "ensemble"))
    except ConfigError as e:
        raise ConfigError(f"key 'ensemble': {e}") from None


def _function(cfg, key="f"):
    try:
        return parse_function(_need(cfg, key))
    except ConfigError as e:
        raise ConfigError(f"key {key!r}: {e}") from None


def _grid(cfg) -> list:
    if "n_grid" in cfg:
        g = cfg["n_grid"]
        if not isinstance(g, list) or not g:
            raise ConfigError("config key 'n_grid' must be a non-empty list")
        try:
            return [int(v) for v in g]
        except (TypeError, ValueError):
            raise ConfigError(f"config key 'n_grid' has invalid value {g!r}") from None
    return [_typed(cfg, "n", int)]


def _zlist(cfg) -> list:
    z = _need(cfg, "z")
    pts = z if (isinstance(z, list) and z and isinstance(z[0], list)) else [z]
    out = []
    for p in pts:
        if isinstance(p, (int, float)):
            out.append(complex(p))
        elif isinstance(p, list) and len(p) == 2:
            out.append(complex(float(p[0]), float(p[1])))
        else:
            raise ConfigError(f"config key 'z' has invalid point {p!r}")
    return out


def _experiment(cfg, statistic: str) -> ExperimentConfig:
    d = {k: cfg[k] for k in ("f", "gamma", "n_grid", "replicas", "seed", "standardize",
                             "max_cost", "t_grid", "synthetic") if k in cfg}
    d["statistic"] = cfg.get("statistic", statistic)
    d["ensemble"] = cfg.get("ensemble")
    if "n_grid" in d and (not isinstance(d["n_grid"], list) or not d["n_grid"]):
        raise ConfigError("config key 'n_grid' must be a non-empty list")
    return ExperimentConfig.from_json(d)


# ---------------------------------------------------------------- commands

def cmd_constants(cfg: dict, args) -> int:
    spec = _ensemble(cfg)
    f = _function(cfg)
    gamma = _typed(cfg, "gamma", float, 0.0)
    n = _typed(cfg, "n", int, 100)
    series = cheb_coeffs(f, _typed(cfg, "K", int, 64), _typed(cfg, "nodes", int, 4096))
    tc = constants(f, series, spec, gamma, n)
    manifest = RunManifest(config_hash(cfg), cfg.get("seed"), start=_now())
    manifest.end = _now()
    out = {"constants": tc.to_json(), "ensemble": spec.derived(), "f": f.label,
           "manifest": manifest.to_json()}
    text = json.dumps(out, indent=2, sort_keys=True, default=str) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(cfg: dict, args) -> int:
    ec = _experiment(dict(cfg, n_grid=_grid(cfg)) if "n_grid" not in cfg else cfg, "variance")
    manifest = RunManifest(config_hash(cfg), ec.seed, start=_now())
    res = run_experiment(ec, args.workers)
    rows = []
    for n in ec.n_grid:
        for r, (tf, th, sd) in enumerate(res.raw[n]):
            rows.append((n, r, tf, th, sd))
    _emit(render_csv(manifest, SIM_COLUMNS, rows), args.out, manifest)
    return EXIT_OK


def cmd_rate_scan(cfg: dict, args) -> int:
    ec = _experiment(cfg, "ks")
    if ec.statistic != "ks":
        raise ConfigError("rate-scan needs statistic 'ks'")
    if len(ec.n_grid) < 3:
        raise ConfigError("rate-scan needs at least three values in 'n_grid'")
    manifest = RunManifest(config_hash(cfg), ec.seed, start=_now())
    res = run_experiment(ec, args.workers)
    chi = res.rows[0][6]
    fit = rate_fit([(r[0], r[3], r[4]) for r in res.rows])
    lo, hi = cfg.get("window", KS_WINDOWS[chi])
    verdict = bool(lo <= fit.slope <= hi)
    summary = {"chi": chi, "fit": fit.to_json(), "window": [lo, hi], "verdict": verdict}
    _emit(render_csv(manifest, RATE_COLUMNS, res.rows), args.out, manifest, summary)
    if args.assert_ and not verdict:
        raise AssertionFailed(f"KS slope {fit.slope:.3f} outside window [{lo}, {hi}]")
    return EXIT_OK


def third_moment_table(ec: ExperimentConfig, workers: int = 1, r1_sign: float = 1.0):
    """Observed skewness of the standardised statistic against
    Var^{-3/2} (r1_sign * r1 N^{-1/2} + r2 N^{-1}), Var from the batch."""
    res = run_experiment(ec, workers)
    f = parse_function(ec.f)
    series = cheb_coeffs(f)
    _, sg = shift_gamma(f, series, ec.gamma)
    r2v, _ = r2_fn(sg, ec.ensemble)
    rows = []
    for s, n in zip(res.summaries, ec.n_grid):
        tc = res.theory[n]
        var = s.variance
        pred = (r1_sign * tc.r1 / math.sqrt(n) + r2v / n) / var ** 1.5
        z = (s.skewness - pred) / s.se_skew if s.se_skew > 0 else math.inf
        mode = "full" if ec.ensemble.goe_gue_matched else "report-only"
        rows.append((n, s.M, s.skewness, s.se_skew, pred, z, tc.r1, r2v, var, mode))
    return rows, res


def cmd_third_moment(cfg: dict, args) -> int:
    ec = _experiment(dict(cfg, statistic="skewness"), "skewness")
    sign = _typed(cfg, "r1_sign", float, 1.0)
    manifest = RunManifest(config_hash(cfg), ec.seed, start=_now())
    rows, _ = third_moment_table(ec, args.workers, sign)
    worst = max(abs(r[5]) for r in rows)
    summary = {"max_abs_z": worst, "mode": rows[0][9]}
    _emit(render_csv(manifest, THIRD_COLUMNS, rows), args.out, manifest, summary)
    if args.assert_ and rows[0][9] == "full" and worst > 4:
        raise AssertionFailed(f"third-moment z-score {worst:.2f} exceeds 4")
    return EXIT_OK


def _zstr(zs):
    return ";".join(_fmt(z.real) for z in zs), ";".join(_fmt(z.imag) for z in zs)


def cmd_green_check(cfg: dict, args) -> int:
    check = args.check
    seed = _typed(cfg, "seed", int, 0)
    manifest = RunManifest(config_hash(dict(cfg, check=check)), seed, start=_now())
    rows, failures = [], []
    slack = lambda n: n ** SLACK_EPS  # noqa: E731

    def add(rep, zs=None):
        zr, zi = _zstr(zs if zs is not None else rep.z)
        rows.append((rep.check, rep.n, zr, zi, rep.observed, rep.predicted, rep.ratio,
                     rep.standard_error, rep.replicas))

    if check == "locallaw":
        spec = _ensemble(cfg)
        for n in _grid(cfg):
            for z in _zlist(cfg):
                rep = local_law_scan(spec, n, SpectralParam(z, "S"), _typed(cfg, "samples", int, 20),
                                     seed, _typed(cfg, "probes", int, 16))
                add(rep)
                if rep.ratio > slack(n):
                    failures.append(f"local law ratio {rep.ratio:.3g} at n={n}")
    elif check == "decomp":
        spec = _ensemble(cfg)
        for n in _grid(cfg):
            for z in _zlist(cfg):
                rep = decomposition_residual(spec, n, SpectralParam(z, "S_c", n=n),
                                             _typed(cfg, "replicas", int, 400), seed, args.workers)
                add(rep)
                if rep.ratio > slack(n):
                    failures.append(f"decomposition ratio {rep.ratio:.3g} at n={n}")
    elif check == "eg":
        spec = _ensemble(cfg)
        for z in _zlist(cfg):
            for row in eg_expansion_residual(spec, z, _grid(cfg), _typed(cfg, "replicas", int, 10000),
                                             seed, args.workers):
                for rep in row["reports"]:
                    add(rep)
    elif check == "hs":
        f = _function(cfg)
        if "eigenvalues" in cfg:
            lam = np.asarray(cfg["eigenvalues"], dtype=float)
        else:
            spec = _ensemble(cfg)
            lam = decompose(sample_wigner(spec, _typed(cfg, "n", int), seed, 0)).eigenvalues
        grid = tuple(cfg.get("grid", (400, 400)))
        xr = tuple(cfg.get("x_range", (-4.0, 4.0)))
        val = hs_trace(f, lam, _typed(cfg, "p", int, 4), grid, xr)
        exact = les(f, lam)
        err = abs(val - exact)
        tol = _typed(cfg, "tol", float, 1e-3)
        rows.append(("hs", len(lam), "", "", val, exact, val / exact if exact else math.inf, err, 1))
        if err > tol:
            failures.append(f"Helffer-Sjostrand error {err:.3g} exceeds {tol}")
    elif check in ("two-point", "three-point"):
        spec = _ensemble(cfg)
        zs = _zlist(cfg)
        k = 2 if check == "two-point" else 3
        if len(zs) != k:
            raise ConfigError(f"config key 'z' must list {k} points for {check}")
        budget = cfg.get("budget")
        for n in _grid(cfg):
            from .theory import three_point_prediction, two_point_prediction
            if k == 3:
                if spec.beta != 1 or not spec.goe_gue_matched:
                    raise AssumptionViolated("three-point check needs a real symmetric GOE-matched ensemble")
                pred = three_point_prediction(*zs, spec, n).value
            else:
                pred = two_point_prediction(*zs, n)
            est, se = multipoint_mc(spec, n, zs, _typed(cfg, "replicas", int, 10000), seed,
                                    args.workers, budget)
            zr, zi = _zstr(zs)
            for part, fn in (("re", lambda c: c.real), ("im", lambda c: c.imag)):
                o, p = fn(est), fn(pred)
                rows.append((f"{check}:{part}", n, zr, zi, o, p, o / p if p else math.inf, se,
                             _typed(cfg, "replicas", int, 10000)))
            if abs(est - pred) > 3 * se:
                failures.append(f"{check} estimate {est:.4g} vs prediction {pred:.4g} (se {se:.2g})")
    else:
        raise ConfigError(f"unknown check {check!r}")
    _emit(render_csv(manifest, GREEN_COLUMNS, rows), args.out, manifest,
          {"failures": failures} if failures else None)
    if args.assert_ and failures:
        raise AssertionFailed("; ".join(failures))
    return EXIT_OK


COMMANDS = {
    "constants": cmd_constants,
    "simulate": cmd_simulate,
    "rate-scan": cmd_rate_scan,
    "third-moment": cmd_third_moment,
    "green-check": cmd_green_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wignerlab", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="JSON configuration file")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default: ${ENV_WORKERS} or 1)")
        sp.add_argument("--assert", dest="assert_", action="store_true",
                        help="exit 3 when the run's check fails")
        if name == "green-check":
            sp.add_argument("--check", required=True,
                            choices=["locallaw", "decomp", "eg", "hs", "two-point", "three-point"])
    return p


def _workers(arg) -> int:
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get(ENV_WORKERS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{ENV_WORKERS} must be an integer, got {env!r}") from None
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        args.workers = _workers(args.workers)
        cfg = load_config(args.config, args.command)
        return COMMANDS[args.command](cfg, args)
    except AssertionFailed as e:
        print(f"assertion failed: {e}", file=sys.stderr)
        return EXIT_ASSERT
    except (ConfigError, AssumptionViolated) as e:
        print(f"config error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except WignerLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
