"""Test functions on [-2, 2] and their Chebyshev-Fourier coefficients.

    c_k = (1/pi) int_{-pi}^{pi} f(2 cos t) cos(k t) dt,

so f(x) = c_0/2 + sum_{k>=1} c_k T_k(x/2) and the constant 1 has c_0 = 2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Chebyshev, HermiteE, Polynomial
from scipy.fft import dct

from .errors import ConfigError, DomainError, TruncationWarning

__all__ = ["TestFunction", "ChebSeries", "cheb_coeffs", "shift_gamma", "eval_series",
           "parse_function", "cheb_function", "poly_function", "gauss_bump", "from_callable"]

MAX_DERIV = 5
DEFAULT_K = 64
DEFAULT_NODES = 4096


@dataclass(frozen=True)
class TestFunction:
    """A real test function with derivatives up to order 5.

    ``poly`` is set for polynomials (monomial basis) and enables exact
    coefficients and trace-based fast paths.  ``fd_derivatives`` flags
    finite-difference derivative fallbacks.
    """
    __test__ = False  # keep pytest from collecting this class

    func: Callable
    derivs: tuple
    label: str
    poly: Polynomial | None = None
    fd_derivatives: bool = False
    smooth: bool = True

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def derivative(self, k: int, x):
        if k == 0:
            return self(x)
        if not 1 <= k <= MAX_DERIV:
            raise ValueError(f"derivative order {k} not available")
        return self.derivs[k - 1](np.asarray(x, dtype=float))

    @property
    def cheb_exact(self) -> np.ndarray | None:
        """Exact c_0..c_d for polynomial f, else None."""
        if self.poly is None:
            return None
        ch = Chebyshev.cast(self.poly, domain=[-2, 2])
        c = np.array(ch.coef, dtype=float)
        c[0] *= 2.0
        return c

    @property
    def degree(self) -> int | None:
        if self.poly is None:
            return None
        c = np.trim_zeros(np.asarray(self.poly.coef, dtype=float), "b")
        return max(len(c) - 1, 0)


def poly_function(coeffs: Sequence[float], label: str | None = None) -> TestFunction:
    p = Polynomial(np.asarray(coeffs, dtype=float))
    ds = tuple(p.deriv(k) for k in range(1, MAX_DERIV + 1))
    label = label or "poly:" + ",".join(repr(float(c)) for c in coeffs)
    return TestFunction(p, ds, label, poly=p)


def cheb_function(k: int) -> TestFunction:
    """T_k(x/2)."""
    if k < 0:
        raise ConfigError("Chebyshev degree must be non-negative")
    p = Chebyshev.basis(k, domain=[-2, 2]).convert(kind=Polynomial)
    f = poly_function(p.coef, label=f"cheb:{k}")
    return f


def gauss_bump(center: float, width: float) -> TestFunction:
    """exp(-(x-c)^2 / (2 w^2)); derivatives via Hermite polynomials."""
    if not width > 0:
        raise ConfigError("gauss_bump width must be positive")
    c, w = float(center), float(width)

    def make(k):
        he = HermiteE.basis(k)

        def d(x):
            u = (np.asarray(x, dtype=float) - c) / w
            return (-1.0 / w) ** k * he(u) * np.exp(-0.5 * u * u)
        return d

    return TestFunction(make(0), tuple(make(k) for k in range(1, MAX_DERIV + 1)),
                        f"gauss_bump:{c!r},{w!r}")


def from_callable(fn: Callable, label: str = "custom", derivs: Sequence[Callable] | None = None,
                  smooth: bool = True) -> TestFunction:
    """Wrap an arbitrary vectorised callable.  Missing derivatives fall back to
    central finite differences and are flagged."""
    ds = list(derivs or [])
    fd = len(ds) < MAX_DERIV

    def fd_deriv(k):
        h = np.finfo(float).eps ** (1.0 / (k + 2))
        w = np.array([(-1) ** j * math.comb(k, j) for j in range(k + 1)], dtype=float)
        off = np.array([k / 2.0 - j for j in range(k + 1)])

        def d(x):
            x = np.asarray(x, dtype=float)
            return sum(wj * fn(x + oj * h) for wj, oj in zip(w, off)) / h ** k
        return d

    for k in range(len(ds) + 1, MAX_DERIV + 1):
        ds.append(fd_deriv(k))
    return TestFunction(fn, tuple(ds), label, fd_derivatives=fd, smooth=smooth)


def parse_function(key: str) -> TestFunction:
    """Registry lookup: 'cheb:k', 'poly:a0,a1,...', 'gauss_bump:center,width'."""
    if not isinstance(key, str) or ":" not in key:
        raise ConfigError(f"unknown test function {key!r}")
    name, _, arg = key.partition(":")
    try:
        if name == "cheb":
            return cheb_function(int(arg))
        if name == "poly":
            return poly_function([float(a) for a in arg.split(",")], label=key)
        if name == "gauss_bump":
            c, w = (float(a) for a in arg.split(","))
            return gauss_bump(c, w)
    except ValueError:
        raise ConfigError(f"bad arguments in test function {key!r}") from None
    raise ConfigError(f"unknown test function {key!r}")


@dataclass(frozen=True)
class ChebSeries:
    """Coefficients c_0..c_K with the convention c_{-k} = c_k."""
    coeffs: np.ndarray
    tail_estimate: float = 0.0
    exact: bool = field(default=False, compare=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return len(self.coeffs) - 1

    def c(self, k: int) -> float:
        k = abs(int(k))
        return float(self.coeffs[k]) if k <= self.K else 0.0

    @property
    def support(self) -> int:
        """Largest k with c_k != 0 (0 for the zero series)."""
        nz = np.nonzero(self.coeffs)[0]
        return int(nz[-1]) if len(nz) else 0

    def padded(self, length: int) -> np.ndarray:
        out = np.zeros(length)
        m = min(length, len(self.coeffs))
        out[:m] = self.coeffs[:m]
        return out

    def with_coeff(self, k: int, value: float) -> "ChebSeries":
        c = self.padded(max(len(self.coeffs), k + 1))
        c[k] = value
        return ChebSeries(c, self.tail_estimate, self.exact)


def theta_nodes(nodes: int) -> np.ndarray:
    """Chebyshev-Gauss angles (j + 1/2) pi / nodes."""
    return (np.arange(nodes) + 0.5) * np.pi / nodes


def cheb_coeffs(f: TestFunction, K: int = DEFAULT_K, nodes: int = DEFAULT_NODES) -> ChebSeries:
    if K < 2:
        raise ConfigError("K must be at least 2")
    if nodes < 4 * K or nodes & (nodes - 1):
        raise ConfigError("nodes must be a power of two and at least 4K")
    exact = f.cheb_exact
    if exact is not None:
        c = np.zeros(K + 1)
        m = min(K + 1, len(exact))
        c[:m] = exact[:m]
        tail = float(np.max(np.abs(exact[K + 1:]))) if len(exact) > K + 1 else 0.0
        series = ChebSeries(c, tail, exact=tail == 0.0)
    else:
        y = f(2.0 * np.cos(theta_nodes(nodes)))
        c = dct(y, type=2)[:K + 1] / nodes
        top = max(1, K // 4)
        series = ChebSeries(c, float(np.max(np.abs(c[-top:]))))
    if series.tail_estimate > 1e-8:
        warnings.warn(f"Chebyshev tail {series.tail_estimate:.3g} for {f.label}; raise K",
                      TruncationWarning, stacklevel=2)
    return series


def shift_gamma(f: TestFunction, series: ChebSeries, gamma: float):
    """f_gamma(x) = f(x) - (gamma/2) c_1 x; only c_1 changes, to (1 - gamma) c_1."""
    c1 = series.c(1)
    slope = 0.5 * gamma * c1
    new_series = series.with_coeff(1, (1.0 - gamma) * c1)
    if slope == 0.0:
        return f, new_series
    d1 = f.derivs[0]
    derivs = (lambda x: d1(x) - slope,) + tuple(f.derivs[1:])
    fn = f.func
    poly = None if f.poly is None else f.poly - Polynomial([0.0, slope])
    fg = TestFunction(lambda x: fn(x) - slope * np.asarray(x, dtype=float), derivs,
                      f"{f.label}|gamma={gamma!r}", poly=poly,
                      fd_derivatives=f.fd_derivatives, smooth=f.smooth)
    return fg, new_series


def eval_series(series: ChebSeries, x):
    """Sum' c_k T_k(x/2) with c_0 halved."""
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 2.0 + 1e-12):
        raise DomainError("eval_series needs x in [-2, 2]")
    a = np.array(series.coeffs, dtype=float)
    a[0] *= 0.5
    out = np.polynomial.chebyshev.chebval(xa / 2.0, a)
    return float(out) if np.ndim(out) == 0 else out
