"""Eigenvalues, linear statistics and resolvents of sampled matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chebyshev import TestFunction
from .ensemble import WignerSample
from .errors import EigenFailure, PoleProximity, SingularShift, ConfigError
from .theory import SpectralParam, TheoryConstants

__all__ = ["SpectralSample", "decompose", "eigvals_batch", "les", "z_f_gamma",
           "z_f_gamma_batch", "z_ring", "green_trace", "resolvent_entries", "POLE_TOL"]

POLE_TOL = 1e-10
MAX_DENSE_N = 2048


@dataclass(frozen=True)
class SpectralSample:
    eigenvalues: np.ndarray          # descending
    trace_h: float
    sum_diag_sq: float
    vectors: np.ndarray | None = None
    hat_eigenvalues: np.ndarray | None = None   # zero-diagonal companion

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


def _entries(sample) -> np.ndarray:
    return sample.entries if isinstance(sample, WignerSample) else np.asarray(sample)


def decompose(sample, want_vectors: bool = False, with_hat: bool = False) -> SpectralSample:
    """Eigen-decomposition of one Hermitian matrix (WignerSample or array)."""
    H = _entries(sample)
    d = np.real(np.diagonal(H))
    try:
        if want_vectors:
            lam, Q = np.linalg.eigh(H)
            lam, Q = lam[::-1], Q[:, ::-1]
        else:
            lam, Q = np.linalg.eigvalsh(H)[::-1], None
        hat = None
        if with_hat:
            Hh = H.copy()
            Hh[np.diag_indices(len(d))] = 0.0
            hat = np.linalg.eigvalsh(Hh)[::-1]
    except np.linalg.LinAlgError as e:
        raise EigenFailure(str(e)) from None
    return SpectralSample(np.ascontiguousarray(lam), float(d.sum()), float(np.dot(d, d)), Q,
                          None if hat is None else np.ascontiguousarray(hat))


def eigvals_batch(H: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a stack of Hermitian matrices, shape (B, n)."""
    try:
        return np.linalg.eigvalsh(H)
    except np.linalg.LinAlgError as e:
        raise EigenFailure(str(e)) from None


def les(f: TestFunction, spec_sample) -> float:
    """tr f(H) = sum_i f(lambda_i)."""
    lam = spec_sample.eigenvalues if isinstance(spec_sample, SpectralSample) else np.asarray(spec_sample)
    return float(np.sum(f(lam)))


def z_f_gamma_batch(trf, trh, constants: TheoryConstants):
    """(tr f(H) - mu_f - (gamma/2) c_1 tr H) / sigma_{f,gamma}, vectorised."""
    trf = np.asarray(trf, dtype=float)
    trh = np.asarray(trh, dtype=float)
    shift = 0.5 * constants.gamma * constants.c1
    return (trf - constants.mu_f - shift * trh) / np.sqrt(constants.sigma2_f_gamma)


def z_f_gamma(f: TestFunction, spec_sample: SpectralSample, constants: TheoryConstants) -> float:
    return float(z_f_gamma_batch(les(f, spec_sample), spec_sample.trace_h, constants))


def z_ring(values, mean: float | None = None, var: float | None = None) -> np.ndarray:
    """Batch-standardised statistic: centred by the batch mean and scaled by the
    batch standard deviation unless these are supplied."""
    x = np.asarray(values, dtype=float)
    mu = x.mean() if mean is None else mean
    v = x.var(ddof=1) if var is None else var
    if not v > 0:
        raise ConfigError("batch variance must be positive")
    return (x - mu) / np.sqrt(v)


def green_trace(spec_sample, z) -> complex:
    """(1/N) tr G(z) = (1/N) sum_i 1/(lambda_i - z)."""
    lam = spec_sample.eigenvalues if isinstance(spec_sample, SpectralSample) else np.asarray(spec_sample)
    z = z.z if isinstance(z, SpectralParam) else complex(z)
    gap = np.min(np.abs(lam - z))
    if gap < POLE_TOL:
        raise PoleProximity(f"z = {z} is within {gap:.2e} of an eigenvalue")
    return complex(np.mean(1.0 / (lam - z)))


def resolvent_entries(sample, z, powers=(1,)) -> dict:
    """{k: G(z)^k} for G = (H - z)^{-1}, by dense solve."""
    H = _entries(sample)
    n = H.shape[0]
    if n > MAX_DENSE_N:
        raise ConfigError(f"dense resolvent limited to n <= {MAX_DENSE_N}")
    z = z.z if isinstance(z, SpectralParam) else complex(z)
    A = H - z * np.eye(n)
    try:
        G = np.linalg.solve(A, np.eye(n, dtype=complex))
    except np.linalg.LinAlgError as e:
        raise SingularShift(str(e)) from None
    if not np.all(np.isfinite(G)):
        raise SingularShift(f"H - z is singular at z = {z}")
    out = {}
    P = np.eye(n, dtype=complex)
    for k in range(1, max(powers) + 1):
        P = P @ G
        if k in powers:
            out[k] = P.copy()
    return out
