"""Exact law of S_n = X_1 + ... + X_n for a finite-atom X."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import gammaln

from .atoms import AtomicDistribution
from .errors import BadInterval, Mismatch, TooLarge

DEFAULT_CAP = 2 * 10**8
_TINY = 1e-320


@dataclass(frozen=True, eq=False)
class ExactLaw:
    n: int
    values: np.ndarray
    masses: np.ndarray
    merge_tol: float
    dropped_mass: float = 0.0
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "cumulative", np.cumsum(self.masses))

    def to_csv(self, path) -> int:
        lines = ["value,mass"]
        lines += [f"{v:.17g},{m:.17g}" for v, m in zip(self.values, self.masses)]
        data = ("\n".join(lines) + "\n").encode()
        with open(path, "wb") as fh:
            fh.write(data)
        return len(data)


def default_merge_tol(D: AtomicDistribution) -> float:
    return 1e-9 * max(D.m_bound, 1.0)


def n_compositions(n: int, d: int) -> int:
    return math.comb(n + d, d)


def _merge(values: np.ndarray, masses: np.ndarray, tol: float):
    """Sort by value and fuse neighbours closer than ``tol``."""
    order = np.argsort(values, kind="stable")
    v, m = values[order], masses[order]
    if v.size == 0:
        return v, m
    starts = np.concatenate([[0], np.flatnonzero(np.diff(v) > tol) + 1])
    merged_m = np.add.reduceat(m, starts)
    # representative value: mass-weighted would bias ulp noise toward heavy
    # points; the first member is as good and stays reproducible
    return v[starts], merged_m


def compositions(n: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``n``."""
    if parts == 1:
        return np.array([[n]], dtype=np.int64)
    blocks = []
    for first in range(n, -1, -1):
        rest = compositions(n - first, parts - 1) if parts > 2 else np.array([[n - first]], dtype=np.int64)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.concatenate(blocks)


def _compositions_fast(n: int, parts: int) -> np.ndarray:
    # vectorised for the common three-part case
    if parts != 3:
        return compositions(n, parts)
    m3_len = n + 1 - np.arange(n + 1)
    m2 = np.repeat(np.arange(n + 1), m3_len)
    offs = np.repeat(np.cumsum(m3_len) - m3_len, m3_len)
    m3 = np.arange(m2.size) - offs
    m1 = n - m2 - m3
    return np.column_stack([m1, m2, m3])


def log_multinomial(counts: np.ndarray, logp: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=1)
    return gammaln(n + 1.0) - gammaln(counts + 1.0).sum(axis=1) + counts @ logp


def exact_law(D: AtomicDistribution, n: int, merge_tol: float | None = None,
              cap: int = DEFAULT_CAP, method: str = "multinomial") -> ExactLaw:
    """Law of S_n.

    ``method="multinomial"`` enumerates compositions m of n and assigns each
    the multinomial weight n!/prod(m_j!) prod p_j^{m_j}, at value
    n a_1 + sum_j m_j b_j.  ``method="convolve"`` squares the law in value
    space (S_{2m} = S_m * S_m) merging coincident values after each step,
    which is cheap when the atoms are commensurable and the merged support
    stays small.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    tol = default_merge_tol(D) if merge_tol is None else float(merge_tol)
    if method == "convolve":
        return _law_by_squaring(D, n, tol, cap)
    if method != "multinomial":
        raise ValueError(f"unknown method {method!r}")
    ncomp = n_compositions(n, D.d)
    if ncomp > cap:
        raise TooLarge(f"{ncomp} compositions exceed cap {cap}")
    comp = _compositions_fast(n, D.d + 1)
    logm = log_multinomial(comp, np.log(D.probs))
    masses = np.exp(logm)
    values = n * D.atoms[0] + comp[:, 1:] @ D.offsets
    keep = masses >= _TINY
    dropped = float(masses[~keep].sum())
    v, m = _merge(values[keep], masses[keep], tol)
    return ExactLaw(n, v, m, tol, dropped)


def _law_by_squaring(D: AtomicDistribution, n: int, tol: float, cap: int) -> ExactLaw:
    base_v, base_m = D.atoms.copy(), D.probs.copy()
    acc_v, acc_m = np.array([0.0]), np.array([1.0])
    k = n
    while True:
        if k & 1:
            if acc_v.size * base_v.size > cap:
                raise TooLarge("convolution product exceeds cap")
            acc_v, acc_m = _merge(np.add.outer(acc_v, base_v).ravel(),
                                  np.multiply.outer(acc_m, base_m).ravel(), tol)
        k >>= 1
        if not k:
            break
        if base_v.size ** 2 > cap:
            raise TooLarge("convolution product exceeds cap")
        base_v, base_m = _merge(np.add.outer(base_v, base_v).ravel(),
                                np.multiply.outer(base_m, base_m).ravel(), tol)
    keep = acc_m >= _TINY
    return ExactLaw(n, acc_v[keep], acc_m[keep], tol, float(acc_m[~keep].sum()))


def brute_force_law(D: AtomicDistribution, n: int, merge_tol: float = 1e-12) -> ExactLaw:
    """Enumerate all (d+1)^n outcome strings; reference for small n only."""
    if (D.d + 1) ** n > 10**7:
        raise TooLarge(f"{(D.d + 1) ** n} outcome strings exceed 1e7")
    vals = np.array([0.0])
    mass = np.array([1.0])
    for _ in range(n):
        vals = np.add.outer(vals, D.atoms).ravel()
        mass = np.multiply.outer(mass, D.probs).ravel()
    v, m = _merge(vals, mass, merge_tol * max(D.m_bound, 1.0))
    return ExactLaw(n, v, m, merge_tol)


def _check(law: ExactLaw, n: int | None):
    if n is not None and n != law.n:
        raise Mismatch(f"law built for n={law.n}, caller expects n={n}")


def cdf_scaled(law: ExactLaw, D: AtomicDistribution, z, n: int | None = None):
    """P(S_n / (sigma sqrt n) <= z), right-continuous."""
    _check(law, n)
    thr = np.asarray(z, dtype=float) * D.sigma * math.sqrt(law.n)
    idx = np.searchsorted(law.values, thr + 0.5 * law.merge_tol, side="right")
    cum = np.concatenate([[0.0], law.cumulative])
    out = cum[idx]
    return float(out) if np.ndim(out) == 0 else out


def interval_prob(law: ExactLaw, D: AtomicDistribution, z1: float, z2: float,
                  n: int | None = None) -> float:
    """P(z1 < S_n / (sigma sqrt n) < z2) with both endpoints excluded."""
    _check(law, n)
    if not z1 < z2:
        raise BadInterval(f"need z1 < z2, got {z1}, {z2}")
    scale = D.sigma * math.sqrt(law.n)
    h = 0.5 * law.merge_tol
    lo = np.searchsorted(law.values, z1 * scale + h, side="right")
    hi = np.searchsorted(law.values, z2 * scale - h, side="left")
    if hi <= lo:
        return 0.0
    return float(math.fsum(law.masses[lo:hi]))


def max_jump_scan(D: AtomicDistribution, n_list: Iterable[int], window_z: float = 1.0):
    """(n, n^{d/2} * largest mass within |v| <= window_z sigma sqrt n) per n."""
    out = []
    for n in n_list:
        law = exact_law(D, n)
        w = window_z * D.sigma * math.sqrt(n)
        mask = np.abs(law.values) <= w + 0.5 * law.merge_tol
        top = float(law.masses[mask].max()) if np.any(mask) else 0.0
        out.append((n, n ** (D.d / 2) * top))
    return out
