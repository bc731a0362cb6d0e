"""Edgeworth series of arbitrary order for standardised sums."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import hermite_e as He
from numpy.polynomial import polynomial as Poly
from scipy.special import log_ndtr, ndtr

from .atoms import AtomicDistribution, cumulants
from .errors import OrderOutOfRange
from .exactdist import ExactLaw, cdf_scaled, exact_law

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def hermite(k: int, z):
    """Probabilists' Hermite polynomial He_k(z) by three-term recursion."""
    if k < 0:
        raise OrderOutOfRange("hermite order must be >= 0")
    z = np.asarray(z, dtype=float)
    h0, h1 = np.ones_like(z), z
    if k == 0:
        return h0 if h0.ndim else float(h0)
    for j in range(1, k):
        h0, h1 = h1, z * h1 - j * h0
    return h1 if h1.ndim else float(h1)


def norm_cdf(z):
    z = np.asarray(z, dtype=float)
    out = np.where(z < -8.0, np.exp(log_ndtr(np.minimum(z, 0.0))), ndtr(z))
    return out if out.ndim else float(out)


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


@lru_cache(maxsize=None)
def _partitions(k: int):
    """Multiplicity vectors (k_1..k_k) with sum_m m k_m = k."""
    out = []

    def rec(m, left, acc):
        if left == 0:
            out.append(tuple(acc + [0] * (k - len(acc))))
            return
        if m > left:
            return
        for c in range(left // m, -1, -1):
            rec(m + 1, left - c * m, acc + [c])

    rec(1, k, [])
    return tuple(out)


def _fourier_coeffs(k: int, lam: np.ndarray) -> np.ndarray:
    """Coefficients of q_k in powers of (it): the n^{-k/2} term of
    exp(sum_{j>=3} lam_j (it)^j n^{-(j-2)/2} / j!)."""
    q = np.zeros(3 * k + 1)
    for mult in _partitions(k):
        r = sum(mult)
        c = 1.0
        for m, km in enumerate(mult, start=1):
            if km:
                c *= (lam[m + 2] / math.factorial(m + 2)) ** km / math.factorial(km)
        q[k + 2 * r] += c
    return q


@dataclass(frozen=True, eq=False)
class EdgeworthSeries:
    """E_r(z) = N(z) + n(z) sum_{k<=r} P_k(z) n^{-k/2}.

    ``P[k-1]`` and ``Q[k-1]`` hold the coefficients (increasing powers) of
    P_k in z and of its Fourier dual q_k in (it).
    """

    r: int
    sigma: float
    P: tuple
    Q: tuple
    kappa: np.ndarray  # kappa_0..kappa_{r+2}

    def to_json(self) -> str:
        return json.dumps({"r": self.r, "sigma": self.sigma,
                           "P": [[float(c) for c in p] for p in self.P]}, sort_keys=True)

    def poly(self, k: int, z):
        return Poly.polyval(np.asarray(z, dtype=float), self.P[k - 1])


def series_from_cumulants(kappa, r: int) -> EdgeworthSeries:
    kappa = np.asarray(kappa, dtype=float)
    if r < 1 or len(kappa) < r + 3:
        raise OrderOutOfRange(f"order {r} needs cumulants up to {r + 2}")
    sigma = math.sqrt(kappa[2])
    lam = np.zeros(r + 3)
    lam[3:] = kappa[3:r + 3] / sigma ** np.arange(3, r + 3)
    P, Q = [], []
    for k in range(1, r + 1):
        q = _fourier_coeffs(k, lam)
        # the density term He_j n(z) integrates to -He_{j-1} n(z)
        herm = np.zeros(len(q) - 1)
        herm[:] = -q[1:]
        P.append(He.herme2poly(herm))
        Q.append(q)
    return EdgeworthSeries(r, sigma, tuple(P), tuple(Q), kappa[: r + 3].copy())


def build_series(D: AtomicDistribution, r: int) -> EdgeworthSeries:
    if r < 1:
        raise OrderOutOfRange("r must be >= 1")
    return series_from_cumulants(cumulants(D, r + 2), r)


def evaluate(series: EdgeworthSeries, z, n: int):
    z = np.asarray(z, dtype=float)
    corr = np.zeros_like(z)
    for k in range(1, series.r + 1):
        corr = corr + Poly.polyval(z, series.P[k - 1]) / n ** (k / 2)
    out = norm_cdf(z) + norm_pdf(z) * corr
    return out if np.ndim(out) else float(out)


def fourier_side(series: EdgeworthSeries, t, n: int):
    """Fourier transform int e^{itx} dE_r(x) = e^{-t^2/2}(1 + sum_k q_k(it) n^{-k/2})."""
    t = np.asarray(t, dtype=float)
    it = 1j * t
    acc = np.ones_like(it)
    for k in range(1, series.r + 1):
        acc = acc + Poly.polyval(it, series.Q[k - 1]) / n ** (k / 2)
    out = np.exp(-0.5 * t * t) * acc
    return out if np.ndim(out) else complex(out)


def edgeworth_error(D: AtomicDistribution, n: int, r: int, z, law: ExactLaw | None = None,
                    series: EdgeworthSeries | None = None):
    """E_r(z) - P(S_n / (sigma sqrt n) <= z)."""
    if law is None:
        law = exact_law(D, n)
    if series is None:
        series = build_series(D, r)
    return evaluate(series, z, n) - cdf_scaled(law, D, z, n)
