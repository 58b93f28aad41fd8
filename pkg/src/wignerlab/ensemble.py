"""Wigner ensembles: entry laws, moment matching and seeded sampling.

A Wigner matrix has H_ii = h_d / sqrt(N) and H_ij = h_o / sqrt(N) for i < j,
with independent upper-triangular entries.  For beta = 2 the off-diagonal
entry is X + iY with X, Y independent copies of a real law of variance 1/2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, MomentInfeasible

__all__ = [
    "EntryLaw", "EnsembleSpec", "WignerSample",
    "moments_to_cumulants", "match_two_point", "match_three_point",
    "gaussian", "rademacher", "uniform", "atoms_law", "point_mass_zero",
    "replica_rng", "sample_wigner", "sample_batch", "draw_entries", "assemble",
]

KINDS = ("gaussian", "rademacher", "uniform", "two_point", "three_point", "custom-atoms")
NMOM = 8


def moments_to_cumulants(moments: Sequence[float]) -> np.ndarray:
    """Raw moments m_1..m_k to cumulants C_1..C_k (k <= 8).

    Uses the recursion C_n = m_n - sum_{j=1}^{n-1} binom(n-1, j-1) C_j m_{n-j}.
    """
    m = np.asarray(moments, dtype=float)
    k = len(m)
    if k > NMOM:
        raise ValueError("at most 8 moments are supported")
    mm = np.concatenate([[1.0], m])  # mm[j] = m_j, m_0 = 1
    c = np.zeros(k + 1)
    for n in range(1, k + 1):
        s = mm[n]
        for j in range(1, n):
            s -= math.comb(n - 1, j - 1) * c[j] * mm[n - j]
        c[n] = s
    return c[1:]


def _atom_moments(atoms) -> tuple:
    x = np.array([a[0] for a in atoms], dtype=float)
    p = np.array([a[1] for a in atoms], dtype=float)
    return tuple(float(np.dot(p, x ** j)) for j in range(1, NMOM + 1))


@dataclass(frozen=True)
class EntryLaw:
    """Law of a real, centred matrix entry.

    Discrete laws carry their atoms as ((value, prob), ...).  ``moments`` holds
    m_1..m_8, computed analytically.
    """
    kind: str
    params: tuple = ()
    atoms: tuple | None = None
    moments: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown entry law kind {self.kind!r}")
        if self.atoms is not None:
            p = np.array([a[1] for a in self.atoms], dtype=float)
            if np.any(p < -1e-15) or np.any(p > 1 + 1e-15):
                raise ConfigError("atom probabilities must lie in [0, 1]")
            if abs(p.sum() - 1.0) > 1e-12:
                raise ConfigError(f"atom probabilities sum to {p.sum()!r}, not 1")
            mom = _atom_moments(self.atoms)
        else:
            v = dict(self.params)["variance"]
            mom = _continuous_moments(self.kind, v)
        if abs(mom[0]) > 1e-12 * max(1.0, math.sqrt(abs(mom[1]))):
            raise ConfigError(f"entry law must be centred, got mean {mom[0]!r}")
        object.__setattr__(self, "moments", tuple(float(m) for m in mom))

    @property
    def variance(self) -> float:
        return self.moments[1]

    def moment(self, k: int) -> float:
        return 1.0 if k == 0 else self.moments[k - 1]

    def cumulants(self, k: int = 4) -> np.ndarray:
        return moments_to_cumulants(self.moments[:k])

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            return math.sqrt(self.variance) * rng.standard_normal(size)
        if self.kind == "uniform":
            a = math.sqrt(3.0 * self.variance)
            return rng.uniform(-a, a, size)
        x = np.array([a[0] for a in self.atoms])
        cum = np.cumsum([a[1] for a in self.atoms])
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(size), side="right")
        return x[np.minimum(idx, len(x) - 1)]

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "custom-atoms":
            d["atoms"] = [[float(a), float(p)] for a, p in self.atoms]
        else:
            d["params"] = {k: float(v) for k, v in self.params}
        return d

    @classmethod
    def from_json(cls, d) -> "EntryLaw":
        if not isinstance(d, dict) or "kind" not in d:
            raise ConfigError("entry law must be an object with a 'kind' key")
        kind = d["kind"]
        params = d.get("params", {})
        try:
            if kind == "gaussian":
                return gaussian(params.get("variance", 1.0))
            if kind == "rademacher":
                return rademacher(params.get("variance", 1.0))
            if kind == "uniform":
                return uniform(params.get("variance", 1.0))
            if kind == "two_point":
                return match_two_point(params["variance"], params["m3"])
            if kind == "three_point":
                return match_three_point(params["variance"], params["m3"], params["m4"])
            if kind == "custom-atoms":
                return atoms_law(d["atoms"])
        except KeyError as e:
            raise ConfigError(f"entry law {kind!r} is missing key {e.args[0]!r}") from None
        raise ConfigError(f"unknown entry law kind {kind!r}")


def _continuous_moments(kind: str, v: float) -> tuple:
    if v < 0:
        raise ConfigError("variance must be non-negative")
    out = []
    for j in range(1, NMOM + 1):
        if j % 2:
            out.append(0.0)
        elif kind == "gaussian":
            # (j-1)!! v^(j/2)
            out.append(float(np.prod(np.arange(j - 1, 0, -2))) * v ** (j // 2))
        elif kind == "uniform":
            a2 = 3.0 * v
            out.append(a2 ** (j // 2) / (j + 1))
        else:
            raise ConfigError(f"{kind!r} is not a continuous law")
    return tuple(out)


def gaussian(variance: float = 1.0) -> EntryLaw:
    return EntryLaw("gaussian", (("variance", float(variance)),))


def uniform(variance: float = 1.0) -> EntryLaw:
    return EntryLaw("uniform", (("variance", float(variance)),))


def rademacher(variance: float = 1.0) -> EntryLaw:
    s = math.sqrt(variance)
    return EntryLaw("rademacher", (("variance", float(variance)),), ((s, 0.5), (-s, 0.5)))


def atoms_law(atoms: Iterable) -> EntryLaw:
    return EntryLaw("custom-atoms", (), tuple((float(a), float(p)) for a, p in atoms))


def point_mass_zero() -> EntryLaw:
    return atoms_law([(0.0, 1.0)])


def match_two_point(v: float, m3: float) -> EntryLaw:
    """Two-atom centred law with second moment v and third moment m3.

    The atoms are the roots of x^2 - (m3/v) x - v.
    """
    if not v > 0:
        raise ConfigError("variance must be positive")
    s = m3 / v
    d = math.sqrt(s * s + 4.0 * v)
    # stable roots: x1 x2 = -v
    if s >= 0:
        x1 = (s + d) / 2.0
        x2 = -v / x1
    else:
        x2 = (s - d) / 2.0
        x1 = -v / x2
    p1, p2 = -x2 / (x1 - x2), x1 / (x1 - x2)
    return EntryLaw("two_point", (("variance", float(v)), ("m3", float(m3))),
                    ((x1, p1), (x2, p2)))


def match_three_point(v: float, m3: float, m4: float) -> EntryLaw:
    """Three-atom centred law with moments (v, m3, m4).

    One atom is fixed at 0 (Gauss-Radau type rule).  The remaining two atoms
    are the roots of the monic quadratic x^2 - A x + (A^2 - B), A = m3/v,
    B = m4/v, which is orthogonal with respect to x^2 dmu.  When the Hankel
    determinant vanishes the atom at 0 gets zero weight.
    """
    if not v > 0:
        raise ConfigError("variance must be positive")
    hank = np.array([[1.0, 0.0, v], [0.0, v, m3], [v, m3, m4]])
    det = v * m4 - m3 * m3 - v ** 3
    scale = max(1.0, abs(m4) * v, m3 * m3, v ** 3)
    if det < -1e-12 * scale or np.linalg.eigvalsh(hank)[0] < -1e-10 * scale:
        raise MomentInfeasible(
            f"Hankel moment matrix not positive semidefinite: m4={m4} < m3^2/v + v^2 = {m3 * m3 / v + v * v}")
    A, B = m3 / v, m4 / v
    disc = math.sqrt(max(A * A - 4.0 * (A * A - B), 0.0))
    x1, x2 = (A + disc) / 2.0, (A - disc) / 2.0
    t = x1 / (x1 - x2)          # share of x^2 dmu on x1
    w1 = v * t / (x1 * x1)
    w2 = v * (1.0 - t) / (x2 * x2)
    p0 = 1.0 - w1 - w2
    if abs(p0) < 1e-9:
        # on the Hankel boundary: drop the atom at 0 and renormalise the rounding
        p0 = 0.0
        w1, w2 = w1 / (w1 + w2), w2 / (w1 + w2)
    if p0 < 0:
        raise MomentInfeasible("moment constraints need a negative weight")
    return EntryLaw("three_point", (("variance", float(v)), ("m3", float(m3)), ("m4", float(m4))),
                    ((x2, w2), (0.0, p0), (x1, w1)))


@dataclass(frozen=True)
class EnsembleSpec:
    """Symmetry class plus diagonal and off-diagonal entry laws.

    For beta = 2 ``offdiag`` is the law of the real and of the imaginary part,
    each of variance 1/2.  Derived moments follow the usual notation:
    a_n = E h_d^n, b_n = n-th cumulant of h_d, m4 = E|h_o|^4, s4 = m4 + beta - 4.
    """
    beta: int
    diag: EntryLaw
    offdiag: EntryLaw

    def __post_init__(self):
        if self.beta not in (1, 2):
            raise ConfigError("beta must be 1 or 2")
        target = 1.0 if self.beta == 1 else 0.5
        if abs(self.offdiag.variance - target) > 1e-12:
            raise ConfigError(
                f"off-diagonal law must have variance {target} for beta={self.beta}, "
                f"got {self.offdiag.variance!r}")
        s4 = self.m4 + self.beta - 4
        assert abs(s4 - self.s4) < 1e-15

    @property
    def a2(self) -> float:
        return self.diag.moment(2)

    @property
    def a3(self) -> float:
        return self.diag.moment(3)

    @property
    def a4(self) -> float:
        return self.diag.moment(4)

    def a(self, k: int) -> float:
        return self.diag.moment(k)

    @property
    def b3(self) -> float:
        return float(self.diag.cumulants(3)[2])

    @property
    def b4(self) -> float:
        return float(self.diag.cumulants(4)[3])

    @property
    def m4(self) -> float:
        """E|h_o|^4."""
        o = self.offdiag
        if self.beta == 1:
            return o.moment(4)
        # |X + iY|^4 = X^4 + 2 X^2 Y^2 + Y^4
        return 2.0 * o.moment(4) + 2.0 * o.moment(2) ** 2

    @property
    def offdiag_m3(self) -> float:
        """E h_o^3 for beta = 1; for beta = 2 the third moment of each part
        (E h_o^3 = (1 - i) times this value)."""
        return self.offdiag.moment(3)

    @property
    def s3(self) -> float:
        return self.offdiag_m3

    @property
    def s4(self) -> float:
        return self.m4 + self.beta - 4

    @property
    def goe_gue_matched(self) -> bool:
        gauss_m4 = 3.0 if self.beta == 1 else 2.0
        return (abs(self.a2 - 2.0 / self.beta) <= 1e-10
                and abs(self.m4 - gauss_m4) <= 1e-10
                and abs(self.offdiag_m3) <= 1e-10)

    def derived(self) -> dict:
        return {"beta": self.beta, "a2": self.a2, "a3": self.a3, "a4": self.a4,
                "b3": self.b3, "b4": self.b4, "m4": self.m4, "s3": self.s3,
                "s4": self.s4, "goe_gue_matched": self.goe_gue_matched}

    def with_diag(self, diag: EntryLaw) -> "EnsembleSpec":
        return EnsembleSpec(self.beta, diag, self.offdiag)

    def zero_diagonal(self) -> "EnsembleSpec":
        return self.with_diag(point_mass_zero())

    @classmethod
    def goe(cls) -> "EnsembleSpec":
        return cls(1, gaussian(2.0), gaussian(1.0))

    @classmethod
    def gue(cls) -> "EnsembleSpec":
        return cls(2, gaussian(1.0), gaussian(0.5))

    def to_json(self) -> dict:
        return {"beta": self.beta, "diag": self.diag.to_json(), "offdiag": self.offdiag.to_json()}

    @classmethod
    def from_json(cls, d) -> "EnsembleSpec":
        if isinstance(d, str):
            if d.lower() == "goe":
                return cls.goe()
            if d.lower() == "gue":
                return cls.gue()
            try:
                d = json.loads(d)
            except json.JSONDecodeError:
                raise ConfigError(f"unknown ensemble {d!r}") from None
        if not isinstance(d, dict):
            raise ConfigError("ensemble must be 'goe', 'gue' or an object")
        for key in ("beta", "diag", "offdiag"):
            if key not in d:
                raise ConfigError(f"ensemble is missing key {key!r}")
        return cls(int(d["beta"]), EntryLaw.from_json(d["diag"]), EntryLaw.from_json(d["offdiag"]))


@dataclass(frozen=True)
class WignerSample:
    n: int
    entries: np.ndarray
    seed: int
    replica_index: int

    @property
    def diagonal(self) -> np.ndarray:
        return np.real(np.diagonal(self.entries))


def replica_rng(seed: int, n: int, replica: int) -> np.random.Generator:
    """Generator for one replica.  The stream depends only on (seed, n, replica),
    so results do not depend on how replicas are split across workers."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(n), int(replica)))
    return np.random.Generator(np.random.PCG64(ss))


def draw_entries(spec: EnsembleSpec, n: int, rng: np.random.Generator):
    """Unscaled diagonal and upper-triangular (row-major) entries, in the
    fixed draw order used by every sampling path."""
    npair = n * (n - 1) // 2
    d = spec.diag.sample(rng, n)
    off = spec.offdiag.sample(rng, npair)
    if spec.beta == 2:
        off = off + 1j * spec.offdiag.sample(rng, npair)
    return d, off


def assemble(d: np.ndarray, off: np.ndarray, n: int) -> np.ndarray:
    H = np.zeros((n, n), dtype=off.dtype if np.iscomplexobj(off) else float)
    iu = np.triu_indices(n, 1)
    H[iu] = off
    H = H + H.conj().T
    H[np.diag_indices(n)] = d
    H *= 1.0 / math.sqrt(n)
    return H


def _draw(spec: EnsembleSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    d, off = draw_entries(spec, n, rng)
    return assemble(d, off, n)


def sample_wigner(spec: EnsembleSpec, n: int, seed: int, replica: int) -> WignerSample:
    if n < 2:
        raise ConfigError("n must be at least 2")
    H = _draw(spec, n, replica_rng(seed, n, replica))
    return WignerSample(n, H, int(seed), int(replica))


def sample_batch(spec: EnsembleSpec, n: int, seed: int, replicas: Iterable[int]) -> np.ndarray:
    """Stack of matrices for the given replica indices, shape (len, n, n)."""
    if n < 2:
        raise ConfigError("n must be at least 2")
    mats = [_draw(spec, n, replica_rng(seed, n, r)) for r in replicas]
    if not mats:
        dt = float if spec.beta == 1 else complex
        return np.zeros((0, n, n), dtype=dt)
    return np.stack(mats)
