"""Replicated sampling, distributional statistics and rate regression."""
from __future__ import annotations

import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps
from scipy.integrate import trapezoid

from .chebyshev import cheb_coeffs, parse_function
from .ensemble import EnsembleSpec, assemble, draw_entries, replica_rng
from .errors import BudgetExceeded, ConfigError, EmptyBatch, NonPositiveStatistic
from .theory import constants as theory_constants

__all__ = [
    "ks_distance", "esseen_bound", "char_fn_estimate", "jackknife", "power_sum_stats",
    "StatSummary", "summarize", "RateFit", "rate_fit",
    "ExperimentConfig", "ExperimentResult", "run_experiment", "replica_map", "les_kernel",
    "CHUNK",
]

CHUNK = 256            # replicas per work unit; fixed so results do not depend on workers
BATCH_ELEMS = 1 << 21  # matrix entries held per vectorised batch
BOOTSTRAP = 200


# ---------------------------------------------------------------- basic statistics

def ks_distance(batch) -> float:
    """One-sample Kolmogorov-Smirnov distance to the standard normal CDF."""
    x = np.asarray(batch, dtype=float)
    if x.size < 2:
        raise EmptyBatch("KS distance needs at least two values")
    if not np.all(np.isfinite(x)):
        raise ConfigError("batch contains non-finite values")
    return float(sps.kstest(x, "norm").statistic)


def char_fn_estimate(batch, t_grid) -> np.ndarray:
    """Empirical characteristic function M^-1 sum_j exp(i t X_j)."""
    x = np.asarray(batch, dtype=float)
    if x.size == 0:
        raise EmptyBatch("empty batch")
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    out = np.array([np.mean(np.exp(1j * tk * x)) for tk in t])
    out[t == 0] = 1.0
    return out


def esseen_bound(psi_hat: Callable, sigma: float, T: float, t_nodes: int = 2000,
                 t_min_ratio: float = 1e-6) -> float:
    """int_0^T |psi(t/sigma) - exp(-t^2/2)| / t dt + 1/T, with the absolute
    constant of the smoothing inequality set to 1.

    Trapezoid rule on log-spaced nodes; on (0, t_min] the integrand is taken
    as constant, which is accurate because |psi - exp(-t^2/2)| = O(t).
    """
    if not T > 0:
        raise ConfigError("T must be positive")
    t = np.geomspace(T * t_min_ratio, T, t_nodes)
    vals = np.array([abs(complex(psi_hat(tk / sigma)) - math.exp(-tk * tk / 2.0)) for tk in t]) / t
    return float(trapezoid(vals, t) + vals[0] * t[0] + 1.0 / T)


def power_sum_stats(n, s1, s2, s3):
    """(mean, k2, skewness) from power sums of (shifted) data; vectorised."""
    mean = s1 / n
    k2 = (n * s2 - s1 * s1) / (n * (n - 1))
    k3 = (n * n * s3 - 3 * n * s2 * s1 + 2 * s1 ** 3) / (n * (n - 1) * (n - 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        skew = np.where(k2 > 0, k3 / np.abs(k2) ** 1.5, 0.0)
    return mean, k2, skew


def jackknife(x, stat: Callable) -> tuple:
    """Leave-one-out jackknife: (estimate on full data, standard error)."""
    x = np.asarray(x)
    n = len(x)
    full = stat(x)
    loo = np.array([stat(np.delete(x, i)) for i in range(n)])
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return full, se


def _jk_se(loo: np.ndarray) -> float:
    n = len(loo)
    return float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


@dataclass(frozen=True)
class StatSummary:
    n: int
    M: int
    mean: float
    variance: float
    skewness: float
    se_mean: float
    se_var: float
    se_skew: float
    ks: float
    ks_se: float
    degenerate: bool = False

    def to_json(self) -> dict:
        return asdict(self)


def summarize(values, n: int, ks_values=None, seed: int = 0, bootstrap: int = BOOTSTRAP) -> StatSummary:
    """Moments with jackknife errors, plus KS distance (of ``ks_values``, by
    default the batch-standardised values) with a bootstrap error."""
    x = np.asarray(values, dtype=float)
    M = len(x)
    if M < 3:
        raise EmptyBatch("need at least three replicas")
    y = x - x.mean()
    p1, p2, p3 = y, y * y, y ** 3
    S1, S2, S3 = p1.sum(), p2.sum(), p3.sum()
    mean, k2, skew = power_sum_stats(M, S1, S2, S3)
    mean += x.mean()
    lo_mean, lo_k2, lo_skew = power_sum_stats(M - 1, S1 - p1, S2 - p2, S3 - p3)
    degenerate = not k2 > 0
    se_mean, se_var = _jk_se(lo_mean), _jk_se(lo_k2)
    se_skew = math.inf if degenerate else _jk_se(lo_skew)
    if degenerate:
        skew = 0.0
        ks, ks_se = (ks_distance(ks_values), 0.0) if ks_values is not None else (0.5, 0.0)
    else:
        kv = (y / math.sqrt(k2)) if ks_values is None else np.asarray(ks_values, dtype=float)
        ks = ks_distance(kv)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(n), 1 << 30)))
        boots = [ks_distance(kv[rng.integers(0, M, M)]) for _ in range(bootstrap)]
        ks_se = float(np.std(boots, ddof=1)) if bootstrap > 1 else 0.0
    return StatSummary(int(n), M, float(mean), float(k2), float(skew), se_mean, se_var,
                       float(se_skew), float(ks), ks_se, degenerate)


# ---------------------------------------------------------------- rate regression

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    slope_se: float
    r_squared: float
    points: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def rate_fit(points: Sequence) -> RateFit:
    """Weighted least squares of log(statistic) on log(n).

    points: (n, statistic, se).  Weights are (statistic/se)^2, the inverse
    variance of log(statistic); with all se = 0 the fit is unweighted.
    """
    pts = sorted((float(n), float(s), float(e)) for n, s, e in points)
    if len(pts) < 3:
        raise ConfigError("rate fit needs at least three points")
    if any(s <= 0 for _, s, _ in pts):
        raise NonPositiveStatistic("rate fit needs positive statistics")
    if len({n for n, _, _ in pts}) < 2:
        raise ConfigError("rate fit needs at least two distinct n")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    se = np.array([p[2] for p in pts]) / np.array([p[1] for p in pts])
    weighted = bool(np.all(se > 0))
    w = 1.0 / se ** 2 if weighted else np.ones_like(x)
    X = np.column_stack([np.ones_like(x), x])
    sw = np.sqrt(w / w.max())
    # solve the scaled system directly; the normal equations lose accuracy
    # when the weights span many decades
    A = X * sw[:, None]
    beta = np.linalg.lstsq(A, y * sw, rcond=None)[0]
    cov = np.linalg.pinv(A.T @ A) / w.max()
    resid = y - X @ beta
    if not weighted:
        dof = len(x) - 2
        cov = cov * (float(resid @ resid) / dof if dof > 0 else 0.0)
    ybar = np.sum(w * y) / np.sum(w)
    sst = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - float(np.sum(w * resid ** 2)) / sst if sst > 0 else 1.0
    r2 = min(1.0, max(0.0, r2))
    return RateFit(float(beta[1]), float(beta[0]), float(math.sqrt(max(cov[1, 1], 0.0))),
                   float(r2), [(float(a), float(b)) for a, b in zip(x, y)])


# ---------------------------------------------------------------- replica engine

def _sub_batches(start: int, stop: int, n: int):
    b = max(1, BATCH_ELEMS // (n * n))
    for s in range(start, stop, b):
        yield s, min(stop, s + b)


@functools.lru_cache(maxsize=64)
def _cached_function(key: str):
    return parse_function(key)


def les_kernel(spec: EnsembleSpec, n: int, seed: int, start: int, stop: int,
               f_key: str, synthetic: str | None = None) -> np.ndarray:
    """Per-replica (tr f(H), tr H, sum_i H_ii^2) for replicas start..stop-1.

    Polynomials of degree <= 2 use entry sums only, degree <= 4 use traces of
    matrix powers, anything else uses eigenvalues.  Every path consumes the
    same random stream per replica.
    """
    out = np.empty((stop - start, 3))
    if synthetic == "normal":
        for i, r in enumerate(range(start, stop)):
            out[i] = (replica_rng(seed, n, r).standard_normal(), 0.0, 0.0)
        return out
    f = _cached_function(f_key)
    deg = f.degree
    sq = 1.0 / math.sqrt(n)
    if deg is not None and deg <= 2:
        a = np.zeros(3)
        a[:len(f.poly.coef)] = f.poly.coef
        for i, r in enumerate(range(start, stop)):
            d, off = draw_entries(spec, n, replica_rng(seed, n, r))
            trh = d.sum() * sq
            sdd = float(np.dot(d, d)) / n
            tr2 = sdd + 2.0 * float(np.vdot(off, off).real) / n
            out[i] = (a[0] * n + a[1] * trh + a[2] * tr2, trh, sdd)
        return out
    for s0, s1 in _sub_batches(start, stop, n):
        Hs = np.stack([assemble(*draw_entries(spec, n, replica_rng(seed, n, r)), n)
                       for r in range(s0, s1)])
        diag = np.real(np.diagonal(Hs, axis1=1, axis2=2))
        trh = diag.sum(axis=1)
        sdd = np.sum(diag * diag, axis=1)
        if deg is not None and deg <= 4:
            a = np.zeros(5)
            a[:len(f.poly.coef)] = f.poly.coef
            tr2 = np.sum(np.abs(Hs) ** 2, axis=(1, 2))
            trf = a[0] * n + a[1] * trh + a[2] * tr2
            if deg >= 3:
                H2 = Hs @ Hs
                tr3 = np.real(np.einsum("bij,bji->b", H2, Hs))
                tr4 = np.sum(np.abs(H2) ** 2, axis=(1, 2))
                trf = trf + a[3] * tr3 + a[4] * tr4
        else:
            lam = np.linalg.eigvalsh(Hs)
            trf = np.sum(f(lam), axis=1)
        out[s0 - start:s1 - start] = np.column_stack([trf, trh, sdd])
    return out


def _run_chunk(args):
    kernel, spec, n, seed, start, stop = args
    return start, kernel(spec, n, seed, start, stop)


def replica_map(kernel: Callable, spec: EnsembleSpec, n: int, seed: int, replicas: int,
                workers: int = 1, chunk: int = CHUNK) -> np.ndarray:
    """Apply kernel(spec, n, seed, start, stop) over replicas in fixed-size chunks
    and concatenate in replica order.  kernel must be picklable for workers > 1."""
    jobs = [(kernel, spec, n, seed, s, min(replicas, s + chunk)) for s in range(0, replicas, chunk)]
    if workers <= 1 or len(jobs) <= 1:
        parts = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    parts.sort(key=lambda p: p[0])
    return np.concatenate([p[1] for p in parts], axis=0)


# ---------------------------------------------------------------- experiments

STATISTICS = ("ks", "skewness", "charfn", "variance")


@dataclass(frozen=True)
class ExperimentConfig:
    ensemble: EnsembleSpec
    f: str
    gamma: float = 0.0
    n_grid: tuple = (64, 128, 256)
    replicas: int = 1000
    seed: int = 0
    statistic: str = "ks"
    t_grid: tuple = (0.5, 1.0, 2.0)
    standardize: str = "theory"     # 'theory' uses mu_f, sigma_{f,gamma}; 'batch' uses batch moments
    synthetic: str | None = None
    max_cost: float | None = None   # budget in units of n^3 * replicas

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "t_grid", tuple(float(t) for t in self.t_grid))
        if not grid:
            raise ConfigError("n_grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n_grid must be strictly increasing")
        if grid[0] < 2:
            raise ConfigError("n must be at least 2")
        if self.replicas < 100:
            raise ConfigError("replicas must be at least 100")
        if self.statistic not in STATISTICS:
            raise ConfigError(f"statistic must be one of {STATISTICS}")
        if self.standardize not in ("theory", "batch"):
            raise ConfigError("standardize must be 'theory' or 'batch'")
        parse_function(self.f)

    def to_json(self) -> dict:
        d = asdict(self)
        d["ensemble"] = self.ensemble.to_json()
        d["n_grid"] = list(self.n_grid)
        d["t_grid"] = list(self.t_grid)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentConfig":
        known = {"ensemble", "f", "gamma", "n_grid", "replicas", "seed", "statistic",
                 "t_grid", "standardize", "synthetic", "max_cost"}
        if "ensemble" not in d or "f" not in d:
            raise ConfigError("config needs 'ensemble' and 'f'")
        kw = {k: v for k, v in d.items() if k in known}
        kw["ensemble"] = EnsembleSpec.from_json(d["ensemble"])
        try:
            return cls(**kw)
        except TypeError as e:
            raise ConfigError(str(e)) from None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    summaries: list
    rows: list              # (n, M, statistic, value, se, gamma, chi, sigma2_theory, seed)
    raw: dict               # n -> (M, 3) array of (tr f(H), tr H, sum H_ii^2)
    theory: dict            # n -> TheoryConstants


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    cost = sum(n ** 3 for n in config.n_grid) * config.replicas
    if config.max_cost is not None and cost > config.max_cost:
        raise BudgetExceeded(f"experiment cost {cost:.3g} exceeds budget {config.max_cost:.3g}")
    f = parse_function(config.f)
    series = cheb_coeffs(f)
    kernel = functools.partial(les_kernel, f_key=config.f, synthetic=config.synthetic)
    summaries, rows, raw, theory = [], [], {}, {}
    for n in config.n_grid:
        tc = theory_constants(f, series, config.ensemble, config.gamma, n)
        theory[n] = tc
        data = replica_map(kernel, config.ensemble, n, config.seed, config.replicas, workers)
        raw[n] = data
        if config.synthetic == "normal":
            xg = data[:, 0]
            zth = xg
        else:
            xg = data[:, 0] - 0.5 * config.gamma * tc.c1 * data[:, 1]
            zth = (xg - tc.mu_f) / math.sqrt(tc.sigma2_f_gamma) if tc.sigma2_f_gamma > 0 else None
        zks = zth if config.standardize == "theory" and zth is not None else None
        s = summarize(xg, n, ks_values=zks, seed=config.seed)
        summaries.append(s)
        base = (n, s.M)
        tail = (config.gamma, tc.chi, tc.sigma2_f_gamma, config.seed)
        if config.statistic == "ks":
            rows.append(base + ("ks", s.ks, s.ks_se) + tail)
        elif config.statistic == "skewness":
            rows.append(base + ("skewness", s.skewness, s.se_skew) + tail)
        elif config.statistic == "variance":
            rows.append(base + ("variance", s.variance, s.se_var) + tail)
        else:
            zb = (xg - xg.mean()) / math.sqrt(s.variance) if s.variance > 0 else xg - xg.mean()
            psi = char_fn_estimate(zb, config.t_grid)
            for t, p in zip(config.t_grid, psi):
                dev = abs(p - math.exp(-t * t / 2.0))
                # se of |psi_hat - psi| from the per-replica spread of exp(itX)
                e = np.exp(1j * t * zb)
                se = float(np.sqrt(np.var(e.real, ddof=1) + np.var(e.imag, ddof=1)) / math.sqrt(len(zb)))
                rows.append(base + (f"charfn@t={t!r}", float(dev), se) + tail)
    return ExperimentResult(config, summaries, rows, raw, theory)
