"""Numerical checks of resolvent identities and expansions.

Stochastic-domination statements are rendered as ratios observed / bound,
reported against a fixed slack N^eps.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .chebyshev import TestFunction
from .ensemble import EnsembleSpec, WignerSample, assemble, draw_entries, replica_rng, sample_wigner
from .errors import AssumptionViolated, BudgetExceeded, ConfigError, QuadratureWarning
from .montecarlo import replica_map
from .spectral import SpectralSample, decompose, les, resolvent_entries
from .theory import (SpectralParam, m_derivatives, m_sc, three_point_prediction,
                     two_point_prediction)

__all__ = ["ResidualReport", "psi_bound", "local_law_residual", "local_law_scan", "chi_cutoff",
           "quasi_analytic", "dbar_extension", "hs_trace", "decomposition_residual",
           "eg_expansion", "eg_expansion_residual", "green_kernel", "multipoint_mc",
           "SLACK_EPS"]

SLACK_EPS = 0.25


@dataclass(frozen=True)
class ResidualReport:
    check: str
    observed: float
    predicted: float
    ratio: float
    n: int
    z: tuple
    replicas: int
    standard_error: float

    @classmethod
    def make(cls, check, observed, predicted, n, z, replicas, se):
        zt = tuple(complex(getattr(v, "z", v)) for v in (z if isinstance(z, (tuple, list)) else (z,)))
        ratio = observed / predicted if predicted != 0 else math.inf
        return cls(check, float(observed), float(predicted), float(ratio), int(n), zt,
                   int(replicas), float(se))

    def to_json(self) -> dict:
        d = asdict(self)
        d["z"] = [[v.real, v.imag] for v in self.z]
        return d


def _z(z) -> complex:
    return z.z if isinstance(z, SpectralParam) else complex(z)


# ---------------------------------------------------------------- local law

def psi_bound(z, n: int) -> float:
    """sqrt(Im m / (N eta)) + 1/(N eta)."""
    z = _z(z)
    eta = abs(z.imag)
    im = abs(m_sc(z).imag)
    return math.sqrt(im / (n * eta)) + 1.0 / (n * eta)


def local_law_residual(sample, z, probes: int = 16, seed: int = 0) -> ResidualReport:
    """max |<u, G v> - m <u, v>| over all coordinate pairs and ``probes`` random
    unit-vector pairs, divided by the isotropic bound."""
    H = sample.entries if isinstance(sample, WignerSample) else np.asarray(sample)
    n = H.shape[0]
    if probes > n * n:
        raise ConfigError("probes must not exceed N^2")
    zc = _z(z)
    G = resolvent_entries(H, zc, (1,))[1]
    m = m_sc(zc)
    D = G - m * np.eye(n)
    obs = float(np.max(np.abs(D)))
    rng = np.random.default_rng(seed)
    if probes:
        U = rng.standard_normal((probes, n))
        V = rng.standard_normal((probes, n))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        vals = np.abs(np.einsum("pi,ij,pj->p", U, D, V))
        obs = max(obs, float(vals.max()))
    return ResidualReport.make("locallaw", obs, psi_bound(zc, n), n, zc, 1, 0.0)


def local_law_scan(spec: EnsembleSpec, n: int, z, samples: int = 20, seed: int = 0,
                   probes: int = 16, reduce: str = "median") -> ResidualReport:
    """Ratio over independent samples, reduced by the median (typical sample)
    or the maximum (worst sample); se is the spread of the ratio."""
    if reduce not in ("median", "max"):
        raise ConfigError("reduce must be 'median' or 'max'")
    obs = np.array([local_law_residual(sample_wigner(spec, n, seed, r), z, probes, seed + r).observed
                    for r in range(samples)])
    val = float(np.median(obs)) if reduce == "median" else float(obs.max())
    psi = psi_bound(z, n)
    se = float(np.std(obs / psi, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return ResidualReport.make("locallaw", val, psi, n, _z(z), samples, se)


# ---------------------------------------------------------------- Helffer-Sjostrand

def chi_cutoff(y, deriv: int = 0):
    """C^2 cutoff: 1 on |y| <= 1, 0 on |y| >= 2, quintic smoothstep between."""
    y = np.asarray(y, dtype=float)
    a = np.abs(y)
    s = np.clip(2.0 - a, 0.0, 1.0)
    mid = (a > 1.0) & (a < 2.0)
    if deriv == 0:
        return s ** 3 * (10 - 15 * s + 6 * s * s)
    if deriv == 1:
        return np.where(mid, -np.sign(y) * 30 * s * s * (1 - s) ** 2, 0.0)
    raise ValueError("only chi and chi' are needed")


def quasi_analytic(f: TestFunction, x, y, p: int = 4):
    """sum_{k<=p} (iy)^k / k! f^(k)(x) chi(y)."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    out = np.zeros(x.shape, dtype=complex)
    for k in range(p + 1):
        out += (1j * y) ** k / math.factorial(k) * f.derivative(k, x)
    return out * chi_cutoff(y)


def dbar_extension(f: TestFunction, x, y, p: int = 4):
    """d/dzbar of the order-p quasi-analytic extension:
    (iy)^p/(2 p!) f^(p+1)(x) chi(y) + (i/2) sum_{k<=p} (iy)^k/k! f^(k)(x) chi'(y)."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    out = (1j * y) ** p / (2 * math.factorial(p)) * f.derivative(p + 1, x) * chi_cutoff(y)
    cp = chi_cutoff(y, 1)
    acc = np.zeros(x.shape, dtype=complex)
    for k in range(p + 1):
        acc += (1j * y) ** k / math.factorial(k) * f.derivative(k, x)
    return out + 0.5j * acc * cp


def hs_trace(f: TestFunction, sample, p: int = 4, grid=(400, 400), x_range=(-4.0, 4.0),
             tol: float | None = None) -> float:
    """tr f(H) = (1/pi) int d/dzbar f~(z) tr G(z) d^2z over x_range x (-2, 2),
    by the midpoint rule."""
    if p not in (2, 3, 4):
        raise ConfigError("extension order p must be 2, 3 or 4")
    lam = sample.eigenvalues if isinstance(sample, SpectralSample) else np.asarray(sample, float)
    nx, ny = grid
    x0, x1 = x_range
    hx, hy = (x1 - x0) / nx, 4.0 / ny
    x = x0 + (np.arange(nx) + 0.5) * hx
    y = -2.0 + (np.arange(ny) + 0.5) * hy
    X, Y = np.meshgrid(x, y, indexing="ij")
    D = dbar_extension(f, X, Y, p)
    Z = X + 1j * Y
    trG = np.zeros_like(Z)
    for l in lam:
        trG += 1.0 / (l - Z)
    val = np.sum(D * trG) * hx * hy / np.pi
    scale = max(1.0, abs(val))
    if abs(val.imag) > 1e-8 * scale:
        warnings.warn(f"imaginary part {val.imag:.2e} in Helffer-Sjostrand quadrature",
                      QuadratureWarning, stacklevel=2)
    if tol is not None:
        err = abs(val.real - les(f, lam))
        if err > tol:
            warnings.warn(f"Helffer-Sjostrand error {err:.2e} exceeds {tol:.2e}",
                          QuadratureWarning, stacklevel=2)
    return float(val.real)


# ---------------------------------------------------------------- diagonal decomposition

def _decomp_kernel(spec, n, seed, start, stop, z):
    """Per replica: tr G, tr Ghat, sum_i (Ghat^2)_ii H_ii, tr H, sum H_ii^2, tr Ghat^2 / N."""
    out = np.empty((stop - start, 6), dtype=complex)
    for i, r in enumerate(range(start, stop)):
        d, off = draw_entries(spec, n, replica_rng(seed, n, r))
        H = assemble(d, off, n)
        dh = np.real(np.diagonal(H)).copy()
        Hh = H.copy()
        Hh[np.diag_indices(n)] = 0.0
        mu, U = np.linalg.eigh(Hh)
        lam = mu if not np.any(dh) else np.linalg.eigvalsh(H)
        g = 1.0 / (mu - z)
        g2diag = (np.abs(U) ** 2) @ (g * g)
        out[i] = (np.sum(1.0 / (lam - z)), np.sum(g), np.dot(g2diag, dh),
                  dh.sum(), np.dot(dh, dh), np.sum(g * g) / n)
    return out


def decomposition_residual(spec: EnsembleSpec, n: int, z, replicas: int = 400, seed: int = 0,
                           workers: int = 1, return_values: bool = False):
    """Residual of splitting off the diagonal of H:

        R = tr G - tr Ghat + sum_i (Ghat^2)_ii H_ii - e2 tr H + m' tr H - m' m (sum H_ii^2 - a2)

    where Ghat is the resolvent of H with its diagonal removed and e2 is the
    batch mean of tr Ghat^2 / N (centres the first-order term).  Reports
    sd(R) against the scale 1 / (N |eta|^3).
    """
    if replicas < 100:
        raise ConfigError("need at least 100 replicas")
    zc = _z(z)
    kern = functools.partial(_decomp_kernel, z=zc)
    v = replica_map(kern, spec, n, seed, replicas, workers)
    m, mp, _ = m_derivatives(zc)
    e2 = v[:, 5].mean()
    trh = v[:, 3].real
    R = (v[:, 0] - v[:, 1] + v[:, 2] - e2 * trh + mp * trh - mp * m * (v[:, 4].real - spec.a2))
    if not np.any(np.real(v[:, 3])) and not np.any(np.real(v[:, 4])):
        R = np.zeros_like(R)  # zero diagonal: every term vanishes identically
    sd = float(np.sqrt(np.var(R.real, ddof=1) + np.var(R.imag, ddof=1)))
    scale = 1.0 / (n * abs(zc.imag) ** 3)
    # se of a standard deviation, normal approximation
    rep = ResidualReport.make("decomp", sd, scale, n, zc, replicas, sd / math.sqrt(2 * (replicas - 1)))
    return (rep, R) if return_values else rep


# ---------------------------------------------------------------- mean trace expansion

def eg_expansion(z, spec: EnsembleSpec, n: int) -> dict:
    """Partial sums of the large-N expansion of E tr G / N:

        m - (m'/m) ( -(2/beta - 1) m'/N - (a2 - 2/beta) m^2/N - s4 m^4/N + a3 m^3 / N^{3/2} )
    """
    m, mp, _ = m_derivatives(_z(z))
    T = mp / m
    beta = spec.beta
    order1 = -T * (-(2.0 / beta - 1.0) * mp - (spec.a2 - 2.0 / beta) * m * m - spec.s4 * m ** 4) / n
    order32 = -T * spec.a3 * m ** 3 / n ** 1.5
    return {"m": m, "order1": order1, "order3_2": order32,
            "total": m + order1 + order32}


def green_kernel(spec, n, seed, start, stop, zs):
    """Per replica normalised traces (1/N) tr G(z) at each z in zs."""
    zs = np.asarray(zs, dtype=complex)
    out = np.empty((stop - start, len(zs)), dtype=complex)
    for i, r in enumerate(range(start, stop)):
        lam = np.linalg.eigvalsh(assemble(*draw_entries(spec, n, replica_rng(seed, n, r)), n))
        out[i] = np.mean(1.0 / (lam[:, None] - zs[None, :]), axis=0)
    return out


def eg_expansion_residual(spec: EnsembleSpec, z, n_grid, replicas: int = 10000, seed: int = 0,
                          workers: int = 1) -> list:
    """Monte Carlo mean of tr G / N minus successive partial sums of the expansion.

    Returns per-n dicts with keys n, mean, se, resid0 (minus m), resid1 (after
    the 1/N terms), resid2 (after the N^{-3/2} term) and matching ResidualReports.
    """
    zc = _z(z)
    if math.hypot(max(abs(zc.real) - 2, 0.0), zc.imag) < 0.3:
        raise ConfigError("need dist(z, [-2, 2]) >= 0.3")
    out = []
    for n in n_grid:
        g = replica_map(functools.partial(green_kernel, zs=(zc,)), spec, n, seed, replicas, workers)[:, 0]
        mean = g.mean()
        se = float(np.sqrt(np.var(g.real, ddof=1) + np.var(g.imag, ddof=1)) / math.sqrt(len(g)))
        ex = eg_expansion(zc, spec, n)
        r0 = mean - ex["m"]
        r1 = r0 - ex["order1"]
        r2 = r1 - ex["order3_2"]
        reports = [ResidualReport.make(f"eg:{lab}", abs(r), abs(ref), n, zc, replicas, se)
                   for lab, r, ref in (("after_m", r0, ex["order1"]),
                                       ("after_1/N", r1, ex["order3_2"]),
                                       ("after_N^-3/2", r2, n ** -2.0))]
        out.append({"n": n, "mean": complex(mean), "se": se, "resid0": complex(r0),
                    "resid1": complex(r1), "resid2": complex(r2), "reports": reports})
    return out


# ---------------------------------------------------------------- multi-point functions

def _centered_product_stats(g: np.ndarray):
    """Estimate of E prod_a (g_a - E g_a) for 2 or 3 columns, using batch means,
    with leave-one-out values computed from running sums."""
    M, k = g.shape
    if k == 2:
        x, y = g[:, 0], g[:, 1]
        Sx, Sy, Sxy = x.sum(), y.sum(), (x * y).sum()

        def est(m, sx, sy, sxy):
            return sxy / m - (sx / m) * (sy / m)
        full = est(M, Sx, Sy, Sxy)
        loo = est(M - 1, Sx - x, Sy - y, Sxy - x * y)
    elif k == 3:
        x, y, w = g[:, 0], g[:, 1], g[:, 2]
        S = {"x": x.sum(), "y": y.sum(), "w": w.sum(), "xy": (x * y).sum(),
             "xw": (x * w).sum(), "yw": (y * w).sum(), "xyw": (x * y * w).sum()}
        per = {"x": x, "y": y, "w": w, "xy": x * y, "xw": x * w, "yw": y * w, "xyw": x * y * w}

        def est(m, s):
            mx, my, mw = s["x"] / m, s["y"] / m, s["w"] / m
            return (s["xyw"] / m - mx * s["yw"] / m - my * s["xw"] / m - mw * s["xy"] / m
                    + 2 * mx * my * mw)
        full = est(M, S)
        loo = est(M - 1, {key: S[key] - per[key] for key in S})
    else:
        raise ConfigError("multi-point functions need 2 or 3 points")
    dev = loo - loo.mean()
    se = math.sqrt((M - 1) / M * float(np.sum(np.abs(dev) ** 2)))
    return complex(full), se


def multipoint_mc(spec: EnsembleSpec, n: int, zs, replicas: int, seed: int = 0, workers: int = 1,
                  budget: int | None = None, pilot: int = 2000, return_values: bool = False):
    """Centred-product estimate of E <G(z1)><G(z2)>[<G(z3)>] with jackknife se.

    Centring uses the batch mean at each z; the bias this introduces is
    O(1/M) relative.  With ``budget`` set, a pilot run checks that the
    requested precision (se < |prediction| / 3) fits within ``budget`` replicas.
    """
    zs = list(zs)
    if len(zs) == 3:
        if spec.beta != 1 or not spec.goe_gue_matched:
            raise AssumptionViolated("three-point check needs a real symmetric GOE-matched ensemble")
        pred = three_point_prediction(*zs, spec, n).value
    elif len(zs) == 2:
        pred = two_point_prediction(zs[0], zs[1], n)
    else:
        raise ConfigError("multi-point functions need 2 or 3 points")
    zc = tuple(_z(z) for z in zs)
    kern = functools.partial(green_kernel, zs=zc)
    if budget is not None:
        npilot = min(pilot, replicas)
        gp = replica_map(kern, spec, n, seed, npilot, workers)
        _, se_p = _centered_product_stats(gp)
        need = npilot * (3.0 * se_p / abs(pred)) ** 2 if pred != 0 else math.inf
        if need > budget:
            raise BudgetExceeded(f"target precision needs about {need:.3g} replicas, budget {budget}")
    g = replica_map(kern, spec, n, seed, replicas, workers)
    est, se = _centered_product_stats(g)
    if return_values:
        return est, se, g
    return est, se
