"""Finite mean-zero distributions with d+1 atoms."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateAtoms, EmptyGrid, MeanNotZero, OrderOutOfRange, ProbInvalid
from .rng import stream

TWO_PI = 2.0 * math.pi
# 2*pi to extended precision, used for reductions of large arguments
_TWO_PI_LD = np.longdouble("6.283185307179586476925286766559005768")


@dataclass(frozen=True, eq=False)
class AtomicDistribution:
    """Law of X taking value ``atoms[j]`` with probability ``probs[j]``.

    Atoms are stored in increasing order.  ``offsets`` holds
    b_j = a_j - a_1 for j = 2..d+1, so ``offsets[-1]`` is the span.
    """

    atoms: np.ndarray
    probs: np.ndarray
    offsets: np.ndarray = field(init=False)
    sigma: float = field(init=False)
    kappa_margin: float = field(init=False)
    m_bound: float = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "offsets", a[1:] - a[0])
        object.__setattr__(self, "sigma", float(np.sqrt(np.dot(p, a * a))))
        gaps = np.diff(a)
        object.__setattr__(self, "kappa_margin", float(min(p.min(), gaps.min())))
        object.__setattr__(self, "m_bound", float(np.abs(a).max()))

    @property
    def d(self) -> int:
        return len(self.atoms) - 1

    @property
    def span(self) -> float:
        """|a_{d+1} - a_1|."""
        return float(self.offsets[-1])

    def to_json(self) -> str:
        return json.dumps({"atoms": [float(x) for x in self.atoms],
                           "probs": [float(x) for x in self.probs]},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str, tol: float = 1e-9) -> "AtomicDistribution":
        obj = json.loads(text)
        return validate(obj["atoms"], obj["probs"], tol)


def validate(atoms: Sequence[float], probs: Sequence[float], tol: float = 1e-9) -> AtomicDistribution:
    """Check and normalise a candidate distribution.

    Atoms are sorted (probabilities permuted along).  A mean below
    ``tol * max|a|`` is repaired by moving the smallest atom so that the
    mean is exactly zero in floating point terms; a larger mean raises
    :class:`MeanNotZero`.
    """
    a = np.asarray(atoms, dtype=float).ravel()
    p = np.asarray(probs, dtype=float).ravel()
    if a.size != p.size or a.size < 3:
        raise ProbInvalid(f"need equal-length sequences of at least 3 entries, got {a.size} and {p.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(p))):
        raise ProbInvalid("non-finite input")
    if np.any(p <= 0) or abs(p.sum() - 1.0) > tol:
        raise ProbInvalid(f"probabilities must be positive and sum to 1 (sum={p.sum()!r})")
    order = np.argsort(a, kind="stable")
    a, p = a[order], p[order]
    scale = np.abs(a).max()
    if np.any(np.diff(a) <= tol * max(scale, 1.0)):
        raise DegenerateAtoms("two atoms coincide")
    mean = float(np.dot(p, a))
    if abs(mean) > tol * scale:
        raise MeanNotZero(f"mean {mean!r} is not zero")
    if mean != 0.0:
        b = a[1:] - a[0]
        a = a.copy()
        a[0] = -float(np.dot(p[1:], b))
        a[1:] = a[0] + b
    return AtomicDistribution(a, p)


def from_offsets(offsets: Sequence[float], probs: Sequence[float], tol: float = 1e-9) -> AtomicDistribution:
    """Build the distribution with atoms a_1 + (0, b_2, ..., b_{d+1}) and mean zero."""
    b = np.concatenate([[0.0], np.asarray(offsets, dtype=float)])
    p = np.asarray(probs, dtype=float)
    a1 = -float(np.dot(p, b))
    return validate(a1 + b, p, tol)


def moment(D: AtomicDistribution, k: int) -> float:
    if k < 1:
        raise OrderOutOfRange(f"moment order {k} < 1")
    return float(np.dot(D.probs, D.atoms ** k))


def cumulants(D: AtomicDistribution, kmax: int) -> np.ndarray:
    """Cumulants kappa_1..kappa_kmax (index 0 unused) from raw moments."""
    if kmax < 1:
        raise OrderOutOfRange(f"cumulant order {kmax} < 1")
    m = [1.0] + [moment(D, j) for j in range(1, kmax + 1)]
    kap = np.zeros(kmax + 1)
    for n in range(1, kmax + 1):
        kap[n] = m[n] - sum(math.comb(n - 1, j - 1) * kap[j] * m[n - j] for j in range(1, n))
    return kap


def cumulant(D: AtomicDistribution, k: int) -> float:
    if k == 2:
        return D.sigma ** 2
    return float(cumulants(D, k)[k])


def char_fn(D: AtomicDistribution, s):
    s = np.asarray(s, dtype=float)
    return np.exp(1j * np.multiply.outer(s, D.atoms)) @ D.probs


def psi(D: AtomicDistribution, s):
    """p_1 + sum_{j>=2} p_j exp(i s b_j); char_fn(s) = exp(i s a_1) psi(s)."""
    s = np.asarray(s, dtype=float)
    return D.probs[0] + np.exp(1j * np.multiply.outer(s, D.offsets)) @ D.probs[1:]


def circ_dist(x):
    """Distance from x to the nearest multiple of 2*pi, valid for |x| up to ~1e12."""
    xl = np.asarray(x, dtype=np.longdouble)
    r = xl - _TWO_PI_LD * np.rint(xl / _TWO_PI_LD)
    return np.abs(r).astype(float)


def d_of_s(D: AtomicDistribution, s):
    """max_j dist(b_j s, 2 pi Z), the Diophantine gauge."""
    s = np.asarray(s, dtype=np.longdouble)
    prod = np.multiply.outer(s, D.offsets.astype(np.longdouble))
    return circ_dist(prod).max(axis=-1)


D_ZERO = 1e-6


def char_bound_fit(D: AtomicDistribution, s_grid) -> float:
    """Largest c with |phi(s)| <= 1 - c d(s)^2 on the grid (inf if unconstrained)."""
    s = np.atleast_1d(np.asarray(s_grid, dtype=float))
    if s.size == 0:
        raise EmptyGrid("empty grid")
    gap = 1.0 - np.abs(char_fn(D, s))
    ds = d_of_s(D, s)
    ds2 = ds ** 2
    # 1 - |phi| carries absolute rounding ~1e-16, so points with d(s)^2 at
    # that level are resonances up to rounding and do not constrain c
    mask = ds > D_ZERO
    if not np.any(mask):
        return math.inf
    return float(np.min(gap[mask] / ds2[mask]))


def sample_sum(D: AtomicDistribution, n: int, rng_seed: int, count: int) -> np.ndarray:
    """``count`` independent draws of S_n, reproducible from the seed."""
    rng = stream(rng_seed, 0)
    counts = rng.multinomial(n, D.probs, size=count)
    return counts @ D.atoms
