"""Deterministic constants for linear eigenvalue statistics of Wigner matrices.

Integrals over [-2, 2] use x = 2 cos(t), which turns dx / sqrt(4 - x^2) into dt
and removes the endpoint singularities.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .chebyshev import ChebSeries, TestFunction, cheb_coeffs, shift_gamma, theta_nodes
from .ensemble import EnsembleSpec
from .errors import (AssumptionViolated, BranchError, ConfigError, DegenerateArguments,
                     QuadratureWarning, TailTooLarge, TruncationWarning)

__all__ = [
    "SpectralParam", "TheoryConstants", "MuBreakdown",
    "sqrt_z2m4", "m_sc", "m_derivatives", "t_of_z",
    "mu_f", "sigma2_f", "constants", "r1", "r2",
    "h_kernel", "h_sum", "m_l_integral", "three_point_prediction", "two_point_prediction",
    "CHI_THRESHOLD",
]

CHI_THRESHOLD = 1e-12
CUT_TOL = 1e-14
QUAD_NODES = 4096


# ---------------------------------------------------------------- spectral parameter

def _dist_to_cut(z: complex) -> float:
    x, y = z.real, z.imag
    dx = max(abs(x) - 2.0, 0.0)
    return math.hypot(dx, y)


@dataclass(frozen=True)
class SpectralParam:
    """Spectral parameter z = E + i eta with a domain tag.

    Tags: 'S' (|E| <= 10, 0 < eta <= 10), 'S_c' (|E| <= 10, |eta| >= N^(-1+c)),
    'D' (|E| <= 10, |eta| >= N^(-1/4)) and 'S_a' (dist(z, [-2, 2]) = a delta).
    """
    z: complex
    domain_tag: str = "S"
    n: int | None = None
    a: int | None = None
    delta: float | None = None
    c: float = 0.1

    def __post_init__(self):
        z = complex(self.z)
        object.__setattr__(self, "z", z)
        E, eta = z.real, z.imag
        tag = self.domain_tag
        if tag == "S":
            ok = abs(E) <= 10 and 0 < eta <= 10
        elif tag == "S_c":
            ok = abs(E) <= 10 and self.n is not None and abs(eta) >= self.n ** (-1 + self.c)
        elif tag == "D":
            ok = abs(E) <= 10 and self.n is not None and abs(eta) >= self.n ** -0.25
        elif tag == "S_a":
            ok = (self.a is not None and self.delta is not None
                  and abs(_dist_to_cut(z) - self.a * self.delta) <= 1e-9)
        else:
            raise ConfigError(f"unknown domain tag {tag!r}")
        if not ok:
            raise ConfigError(f"z = {z} violates domain tag {tag!r}")

    @classmethod
    def on_contour(cls, a: int, delta: float, eta: float = 1e-3, side: str = "right",
                   n: int | None = None) -> "SpectralParam":
        """Point of S_a(delta) with imaginary part eta, next to the right or left edge."""
        r = a * delta
        if not 0 <= eta <= r:
            raise ConfigError("need 0 <= eta <= a*delta")
        E = 2.0 + math.sqrt(r * r - eta * eta)
        if side == "left":
            E = -E
        elif side != "right":
            raise ConfigError("side must be 'left' or 'right'")
        return cls(complex(E, eta), "S_a", n=n, a=a, delta=delta)

    @property
    def E(self) -> float:
        return self.z.real

    @property
    def eta(self) -> float:
        return self.z.imag


def _as_z(z) -> complex | np.ndarray:
    if isinstance(z, SpectralParam):
        return z.z
    return z


# ---------------------------------------------------------------- Stieltjes transform

def _check_cut(z):
    za = np.asarray(z, dtype=complex)
    if np.any((np.abs(za.imag) < CUT_TOL) & (np.abs(za.real) <= 2.0)):
        raise BranchError("spectral parameter on the cut [-2, 2]")
    return za


def sqrt_z2m4(z):
    """sqrt(z^2 - 4) on the branch that behaves like z at infinity."""
    za = _check_cut(_as_z(z))
    out = np.sqrt(za - 2.0) * np.sqrt(za + 2.0)
    return complex(out) if out.ndim == 0 else out


def m_sc(z):
    """Stieltjes transform of the semicircle law, (-z + sqrt(z^2 - 4)) / 2."""
    za = _check_cut(_as_z(z))
    s = np.sqrt(za - 2.0) * np.sqrt(za + 2.0)
    # the form below avoids cancellation for large |z|
    m = np.where(np.abs(za) > 4.0, -2.0 / (za + s), (-za + s) / 2.0)
    return complex(m) if m.ndim == 0 else m


def m_derivatives(z):
    """(m, m', m'') with m' = -m / sqrt(z^2-4) and m'' = -2 / (z^2-4)^(3/2)."""
    s = sqrt_z2m4(z)
    m = m_sc(z)
    return m, -m / s, -2.0 / s ** 3


def t_of_z(z, n: int | None = None, mode: str = "leading", mean_trace=None):
    """T(z).  Leading mode: -1/sqrt(z^2-4) (equal to m'/m).  Empirical mode:
    1 / (-z - 2 s) where s is a supplied mean normalized trace."""
    z = _as_z(z)
    if mode == "leading":
        return -1.0 / sqrt_z2m4(z)
    if mode == "empirical":
        if mean_trace is None:
            raise ConfigError("empirical mode needs mean_trace")
        return 1.0 / (-z - 2.0 * mean_trace)
    raise ConfigError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------- quadrature helpers

def _theta_quad(g, nodes: int) -> float:
    """int_0^pi g(t) dt by the midpoint rule (spectral for smooth even periodic g)."""
    t = theta_nodes(nodes)
    return float(np.sum(g(t)) * np.pi / nodes)


def m_l_integral(params, nodes: int = QUAD_NODES, rtol: float = 1e-10) -> complex:
    """int rho_sc(x) / prod_i (x - z_i)^{k_i} dx for params = [(z_i, k_i), ...]."""
    params = [(_as_z(z), int(k)) for z, k in params]
    if sum(k for _, k in params) > 8 or any(k < 1 for _, k in params):
        raise ConfigError("need k_i >= 1 and sum k_i <= 8")
    for z, _ in params:
        _check_cut(z)

    def quad(nn):
        t = theta_nodes(nn)
        x = 2.0 * np.cos(t)
        den = np.ones_like(x, dtype=complex)
        for z, k in params:
            den *= (x - z) ** k
        return complex(np.sum((2.0 / np.pi) * np.sin(t) ** 2 / den) * np.pi / nn)

    val = quad(nodes)
    coarse = quad(nodes // 2)
    if abs(val - coarse) > rtol * max(abs(val), 1e-300):
        warnings.warn(f"m_l quadrature not converged ({abs(val - coarse):.2e})",
                      QuadratureWarning, stacklevel=2)
    return val


# ---------------------------------------------------------------- mean and variance

@dataclass(frozen=True)
class MuBreakdown:
    value: float
    terms: dict


def mu_f(series: ChebSeries | None, f: TestFunction, spec: EnsembleSpec, n: int,
         nodes: int = QUAD_NODES, tol: float = 1e-9) -> MuBreakdown:
    """Deterministic centring of tr f(H), including O(1) and O(N^-1/2) corrections.

        mu_f = N int f rho_sc
             + (2/beta - 1) [ (f(2) + f(-2))/4 - (1/2pi) int f / sqrt(4-x^2) ]
             + (a2 - 2/beta)/(2pi) int f (x^2 - 2) / sqrt(4-x^2)
             + s4/(2pi)            int f (x^4 - 4x^2 + 2) / sqrt(4-x^2)
             + a3/(2pi sqrt(N))    int f (x^3 - 3x) / sqrt(4-x^2)

    In Chebyshev terms the last three are (a2 - 2/beta) c2/2, s4 c4/2 and
    a3 c3 / (2 sqrt N); ``series`` is only used for a consistency check.
    """
    beta = spec.beta

    def integrals(nn):
        t = theta_nodes(nn)
        x = 2.0 * np.cos(t)
        fx = f(x)
        w = np.pi / nn
        return {
            "rho": float(np.sum(fx * (2.0 / np.pi) * np.sin(t) ** 2) * w),
            "arcsine": float(np.sum(fx) * w),
            "w2": float(np.sum(fx * (x * x - 2.0)) * w),
            "w4": float(np.sum(fx * (x ** 4 - 4 * x * x + 2.0)) * w),
            "w3": float(np.sum(fx * (x ** 3 - 3 * x)) * w),
        }

    I = integrals(nodes)
    J = integrals(nodes // 2)
    scale = max(1.0, max(abs(v) for v in I.values()))
    if max(abs(I[k] - J[k]) for k in I) > tol * scale:
        warnings.warn("mu_f quadrature not converged; raise nodes", QuadratureWarning, stacklevel=2)
    g = 2.0 / beta - 1.0
    f2 = float(f(2.0)) + float(f(-2.0))
    terms = {
        "bulk": n * I["rho"],
        "edge_points": g * f2 / 4.0,
        "edge_arcsine": -g * I["arcsine"] / (2 * np.pi),
        "diag_variance": (spec.a2 - 2.0 / beta) * I["w2"] / (2 * np.pi),
        "fourth_cumulant": spec.s4 * I["w4"] / (2 * np.pi),
        "diag_skew": spec.a3 * I["w3"] / (2 * np.pi * math.sqrt(n)),
    }
    if series is not None and series.tail_estimate <= 1e-10:
        alt = (spec.a2 - 2.0 / beta) * series.c(2) / 2.0
        if abs(alt - terms["diag_variance"]) > 1e-6 * max(1.0, abs(alt)):
            warnings.warn("mu_f quadrature disagrees with the Chebyshev series",
                          QuadratureWarning, stacklevel=2)
    return MuBreakdown(float(sum(terms.values())), terms)


def sigma2_f(series: ChebSeries, spec: EnsembleSpec, mode: str = "series",
             f: TestFunction | None = None, nodes: int = 512) -> float:
    """Limiting variance of tr f(H).

    series:   (1/2beta) sum_{k>=2} k c_k^2 + (s4/2) c_2^2
    integral: double integral with kernel ((f(x)-f(y))/(x-y))^2 (4-xy) / sqrt(4-x^2) sqrt(4-y^2)
    """
    beta = spec.beta
    if mode == "series":
        if series.tail_estimate > 1e-8:
            warnings.warn("Chebyshev tail too large for the variance series",
                          TruncationWarning, stacklevel=2)
        c = series.coeffs
        k = np.arange(len(c))
        return float(np.sum(k[2:] * c[2:] ** 2) / (2 * beta) + spec.s4 * series.c(2) ** 2 / 2.0)
    if mode != "integral":
        raise ConfigError(f"unknown mode {mode!r}")
    if f is None:
        raise ConfigError("integral mode needs the test function")
    t = theta_nodes(nodes)
    x = 2.0 * np.cos(t)
    fx = f(x)
    dx = x[:, None] - x[None, :]
    df = fx[:, None] - fx[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        q = df / dx
    i = np.arange(nodes)
    q[i, i] = f.derivative(1, x)
    w = np.pi / nodes
    kern = q * q * (4.0 - x[:, None] * x[None, :])
    t1 = np.sum(kern) * w * w / (2 * beta * np.pi ** 2)
    t2 = -(np.sum(fx * x) * w) ** 2 / (2 * beta * np.pi ** 2)
    t3 = spec.s4 * (np.sum(fx * (2.0 - x * x)) * w) ** 2 / (2 * np.pi ** 2)
    return float(t1 + t2 + t3)


# ---------------------------------------------------------------- third-moment constants

def r1(series_gamma: ChebSeries, spec: EnsembleSpec) -> float:
    """(1/8) (c_1^{f_gamma})^3 a_3."""
    return series_gamma.c(1) ** 3 * spec.a3 / 8.0


def _r2_sum(c: np.ndarray) -> float:
    """Quintuple sum over (alpha, tau, gamma', sigma, psi) in closed regrouped form.

    With u = alpha + tau + 1, s = tau - alpha (s runs over S(u) = {-(u-1), -(u-3), ..., u-1})
    and likewise v, t for (gamma', sigma), and W(j) = sum_psi (psi+1) c_{j+2psi+2}:

        A = sum_{u,v} c_u c_v sum_{s in S(u), t in S(v)} W(s+t)
        B = sum_{u,v} P_u P_v W(u+v),          P_u = sum_{s in S(u)} c_s
        C = sum_{u,v} P_u c_v sum_{t in S(v)} W(u+t)

    and the sum equals A + B - C.  Only finitely many terms are non-zero
    for a finitely supported series, so the result is exact.
    """
    d = len(c) - 1
    if d < 1 or not np.any(c[1:]):
        return 0.0
    U = 2 * d + 4

    def C(k):
        k = np.abs(k)
        return np.where(k <= d, c[np.minimum(k, d)], 0.0)

    # W(j) for j in [lo, hi]; beyond hi every referenced subscript exceeds d
    lo, hi = -2 * U - 2, d
    js = np.arange(lo, hi + 1)
    psi = np.arange(0, (d - lo) // 2 + 2)
    W = np.sum((psi[None, :] + 1) * C(js[:, None] + 2 * psi[None, :] + 2), axis=1)

    def Wf(j):
        j = np.asarray(j)
        return np.where(j > hi, 0.0, W[np.clip(j - lo, 0, len(W) - 1)])

    us = np.arange(1, U + 1)
    sg = np.arange(-U, U + 1)
    ind = ((np.abs(sg)[None, :] <= us[:, None] - 1)
           & ((sg[None, :] + us[:, None] - 1) % 2 == 0)).astype(float)  # ind[u, s]
    cu = C(us)
    P = ind @ C(sg)
    Wst = Wf(sg[:, None] + sg[None, :])
    A = cu @ (ind @ Wst @ ind.T) @ cu
    B = P @ Wf(us[:, None] + us[None, :]) @ P
    Wut = Wf(us[:, None] + sg[None, :])
    Cc = P @ (Wut @ ind.T) @ cu
    return float(A + B - Cc)


def r2(series_gamma: ChebSeries, spec: EnsembleSpec, cutoff: int | None = None,
       tol: float = 1e-8):
    """N^-1 coefficient of the third moment: quintuple sum / beta^2 + (3/8) c2 c1^2 C4(h_d).

    ``cutoff`` is the largest Chebyshev index kept (default: the whole series);
    the summation over the five indices is always complete.  Returns
    (value, tail_bound).
    """
    c = np.array(series_gamma.coeffs, dtype=float)
    d = series_gamma.support if cutoff is None else min(int(cutoff), series_gamma.K)
    if cutoff is not None and cutoff < series_gamma.support and cutoff < 1:
        raise ConfigError("cutoff must be at least 1")
    val = _r2_sum(c[:d + 1])
    tail = 0.0
    if d < series_gamma.support or series_gamma.tail_estimate > 0:
        d2 = max(1, d - max(1, d // 4))
        tail = abs(val - _r2_sum(c[:d2 + 1]))
        if d < series_gamma.support:
            tail = max(tail, abs(_r2_sum(c[:series_gamma.support + 1]) - val))
    value = val / spec.beta ** 2 + 3.0 / 8.0 * series_gamma.c(2) * series_gamma.c(1) ** 2 * spec.b4
    if tail > tol:
        raise TailTooLarge(f"r2 tail bound {tail:.3g} exceeds {tol:.3g}")
    return value, tail / spec.beta ** 2


@dataclass(frozen=True)
class TheoryConstants:
    c1: float
    c2: float
    mu_f: float
    sigma2_f: float
    sigma2_f_gamma: float
    chi: int
    r1: float
    r2: float
    gamma: float
    n: int
    r2_tail: float = 0.0
    mu_terms: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def constants(f: TestFunction, series: ChebSeries | None, spec: EnsembleSpec,
              gamma: float = 0.0, n: int = 100) -> TheoryConstants:
    if series is None:
        series = cheb_coeffs(f)
    _, sg = shift_gamma(f, series, gamma)
    c1, c2 = series.c(1), series.c(2)
    mu = mu_f(series, f, spec, n)
    s2 = sigma2_f(series, spec)
    s2g = s2 + 0.25 * spec.a2 * (gamma - 1.0) ** 2 * c1 ** 2
    chi = int(abs((1.0 - gamma) * c1 * spec.a3) > CHI_THRESHOLD)
    r2v, tail = r2(sg, spec)
    return TheoryConstants(c1=c1, c2=c2, mu_f=mu.value, sigma2_f=s2, sigma2_f_gamma=s2g,
                           chi=chi, r1=r1(sg, spec), r2=r2v, gamma=float(gamma), n=int(n),
                           r2_tail=tail, mu_terms=dict(mu.terms))


# ---------------------------------------------------------------- multi-point functions

def h_kernel(u, v, w) -> complex:
    """1 / ((u^2-4)^{3/2} (v^2-4)^{1/2} (w^2-4)^{1/2} (u-v)(w-u))."""
    u, v, w = (complex(_as_z(x)) for x in (u, v, w))
    if abs(u - v) < 1e-12 or abs(w - u) < 1e-12:
        raise DegenerateArguments("h kernel needs u != v and u != w")
    su, sv, sw = sqrt_z2m4(u), sqrt_z2m4(v), sqrt_z2m4(w)
    return 1.0 / (su ** 3 * sv * sw * (u - v) * (w - u))


def h_sum(z1, z2, z3) -> complex:
    """h(z1,z2,z3) + h(z3,z2,z1) + h(z2,z1,z3); symmetric in its arguments."""
    return h_kernel(z1, z2, z3) + h_kernel(z3, z2, z1) + h_kernel(z2, z1, z3)


def _check_nested(zs):
    params = [z for z in zs if isinstance(z, SpectralParam)]
    if len(params) != len(zs):
        return
    for k, p in enumerate(params, start=1):
        if p.domain_tag != "S_a" or p.a != k or p.delta != params[0].delta:
            raise ConfigError("multi-point predictions need z_a on S_a(delta), a = 1, 2, ...")


@dataclass(frozen=True)
class MultiPointPrediction:
    value: complex
    terms: dict


def three_point_prediction(z1, z2, z3, spec: EnsembleSpec, n: int) -> MultiPointPrediction:
    """Leading terms of E <G(z1)><G(z2)><G(z3)> for real symmetric (beta = 1)
    ensembles whose off-diagonal moments and a2 match GOE:

        -b3 N^{-7/2} m'1 m'2 m'3 + 8 N^{-4} hsum(z1,z2,z3) + b4 N^{-4} m'1 m'2 m'3 (m1+m2+m3)

    Here <G> is the normalised trace minus its mean.  Remaining error O(N^{-9/2}).
    """
    if spec.beta != 1:
        raise AssumptionViolated("three-point prediction is available for beta = 1 only")
    if not spec.goe_gue_matched:
        raise AssumptionViolated("three-point prediction needs a GOE-matched ensemble "
                                 "(a2 = 2, E h_o^3 = 0, E h_o^4 = 3)")
    _check_nested([z1, z2, z3])
    zs = [complex(_as_z(z)) for z in (z1, z2, z3)]
    ms = [m_derivatives(z) for z in zs]
    mp = ms[0][1] * ms[1][1] * ms[2][1]
    msum = ms[0][0] + ms[1][0] + ms[2][0]
    terms = {
        "b3": -spec.b3 * n ** -3.5 * mp,
        "h": 8.0 * n ** -4.0 * h_sum(*zs),
        "b4": spec.b4 * n ** -4.0 * mp * msum,
    }
    return MultiPointPrediction(complex(sum(terms.values())), terms)


def two_point_prediction(z1, z2, n: int) -> complex:
    """(2/N^2) T(z2) int rho_sc / ((x - z2)(x - z1)^2), leading term of E <G(z1)><G(z2)>."""
    _check_nested([z1, z2])
    a, b = complex(_as_z(z1)), complex(_as_z(z2))
    return complex(2.0 / n ** 2 * t_of_z(b) * m_l_integral([(b, 1), (a, 2)]))
