"""Lattice sums defining the limit law of the normalised Edgeworth error.

For a unimodular lattice L in R^d with coordinates w = (y, x) and a
character chi, the basic object is

    X(L, chi) = sum_{w in L, w != 0} sin(2 pi chi(w)) / y(w) * exp(-|x(w)|^2),

understood as the limit of partial sums over balls |w| <= R (pairing w
with -w).  The partial sums converge slowly, with fluctuations of order
R^{-1/2}, so the default evaluation splits 1/y into a Gaussian-damped part
summed over L and a smooth remainder summed over the dual lattice:

    1/y = exp(-a^2 y^2)/y + (1 - exp(-a^2 y^2))/y,

where the remainder has Fourier transform -i pi sgn(eta) erfc(pi |eta| / a).
Both pieces decay like Gaussians.  The literal ball partial sums are kept
as ``method="ball"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .atoms import AtomicDistribution
from .ensemble import EnsembleResult
from .errors import BadWindow, EmptyEnsemble, NearZeroY, ValidationError, ZeroC
from .lattice import (Character, UnimodularLattice, enumerate_ball, enumerate_region,
                      haar_sample, transform)
from .resonance import StructureConstants, structure_constants

TWO_PI = 2.0 * math.pi
EWALD_A = math.sqrt(math.pi)
Y_GUARD = 1e-12
# |sin(2 pi chi)| below this is treated as an exact zero (rational characters)
SIN_ZERO = 1e-13


@dataclass(frozen=True)
class SeriesEvaluation:
    value: float
    R_final: float
    cauchy_residual: float
    term_count: int

    @property
    def converged(self) -> bool:
        return self.cauchy_residual < 1e-3


def _sin_chi(chi: Character, coeffs: np.ndarray) -> np.ndarray:
    return np.sin(TWO_PI * chi.of(coeffs))


def _guard(y: np.ndarray, sn: np.ndarray, guard: float):
    bad = (np.abs(y) < guard) & (np.abs(sn) > SIN_ZERO)
    if np.any(bad):
        raise NearZeroY(f"lattice vector with |y| = {np.abs(y[bad]).min():.3e} "
                        f"and non-vanishing character; resample")


def _quad_form(X: np.ndarray, M: np.ndarray | None) -> np.ndarray:
    if M is None:
        return np.einsum("ij,ij->i", X, X)
    return np.einsum("ij,jk,ik->i", X, M, X)


# --- ball partial sums ------------------------------------------------------

def _half_space(C: np.ndarray) -> np.ndarray:
    """Mask selecting one of each pair +-m: first nonzero coefficient > 0."""
    first = np.argmax(C != 0, axis=1)
    return C[np.arange(len(C)), first] > 0


def _ball_terms(L: UnimodularLattice, chi: Character, R: float, M, guard: float,
                pair: bool = True):
    """Norms, y and summands over |w| <= R.  With ``pair`` only one vector of
    each +-w pair is kept and its summand doubled (the two are equal)."""
    W, C = enumerate_ball(L, R)
    if pair:
        keep = _half_space(C)
        W, C = W[keep], C[keep]
    y = W[:, 0]
    sn = _sin_chi(chi, C)
    _guard(y, sn, guard)
    nz = np.abs(sn) > SIN_ZERO
    t = np.zeros(len(y))
    t[nz] = sn[nz] / y[nz] * np.exp(-_quad_form(W[nz, 1:], M))
    if pair:
        t *= 2.0
    return np.linalg.norm(W, axis=1), y, t


def _ball_sum(L, chi, R, M, guard, pair=True):
    if R < 2 * np.linalg.norm(L.reduced[0]):
        raise ValidationError(f"ball radius {R} below twice the shortest vector")
    r, y, t = _ball_terms(L, chi, R, M, guard, pair)
    # fsum is exact-rounded, so the column order (increasing |y|) is only
    # kept for reproducibility of intermediate states
    order = np.argsort(np.abs(y), kind="stable")
    full = math.fsum(t[order])
    halfR = math.fsum(t[r <= R / 2])
    return SeriesEvaluation(full, R, abs(full - halfR), int(len(t) * (2 if pair else 1)))


def ball_partial_sums(L: UnimodularLattice, chi: Character, radii, M=None,
                      guard: float = Y_GUARD) -> np.ndarray:
    """Partial sums over |w| <= R for each R in ``radii`` (one enumeration)."""
    radii = np.asarray(radii, dtype=float)
    r, _, t = _ball_terms(L, chi, float(radii.max()), M, guard)
    return np.array([math.fsum(t[r <= R]) for R in radii])


# --- Ewald split ------------------------------------------------------------

def _ewald(L: UnimodularLattice, tvec: np.ndarray, M: np.ndarray, R: float, a: float,
           guard: float, chi: Character | None = None):
    """sum_{w != 0} sin(2 pi t.w) exp(-x M x) / y for covolume-one L.

    ``R`` is the cut radius in the Gaussian exponent scale: terms with
    exponent beyond R^2 are dropped on both sides.  Returns (value, count).
    """
    d = L.d
    B = L.reduced
    Lc = np.linalg.cholesky(M)  # M = Lc Lc^T
    # real space: a^2 y^2 + x M x <= R^2
    T = np.zeros((d, d))
    T[0, 0] = a
    T[1:, 1:] = Lc
    C = enumerate_region(B, T, R)
    W = C @ B
    y = W[:, 0]
    if chi is not None:
        sn = _sin_chi(chi, C)
    else:
        sn = np.sin(TWO_PI * (W @ tvec))
    _guard(y, sn, guard)
    nz = np.abs(sn) > SIN_ZERO
    real = sn[nz] / y[nz] * np.exp(-_quad_form(W[nz, 1:], M) - (a * y[nz]) ** 2)
    # reciprocal space: xi = k - t, k in the dual lattice
    Bd = np.linalg.inv(B).T
    Minv = np.linalg.inv(M)
    Ld = np.linalg.cholesky(Minv)
    Td = np.zeros((d, d))
    Td[0, 0] = math.pi / a
    Td[1:, 1:] = math.pi * Ld
    K = enumerate_region(Bd, Td, R, shift=tvec)
    Xi = K @ Bd - tvec
    eta = Xi[:, 0]
    recip = np.sign(eta) * erfc(math.pi * np.abs(eta) / a) * np.exp(-math.pi ** 2 * _quad_form(Xi[:, 1:], Minv))
    cm = math.pi ** ((d - 1) / 2) / math.sqrt(np.linalg.det(M))
    value = math.fsum(real) - math.pi * cm * math.fsum(recip)
    return value, int(len(real) + len(recip))


def _ewald_eval(L, tvec, M, R, guard, chi=None) -> SeriesEvaluation:
    v1, _ = _ewald(L, tvec, M, R / 2, EWALD_A, guard, chi)
    v2, n2 = _ewald(L, tvec, M, R, EWALD_A, guard, chi)
    return SeriesEvaluation(v2, R, abs(v2 - v1), n2)


def _evaluate(L, chi, R, method, M, guard) -> SeriesEvaluation:
    d = L.d
    if method == "ball":
        return _ball_sum(L, chi, R, M, guard)
    if method == "ball-full":
        return _ball_sum(L, chi, R, M, guard, pair=False)
    if method == "ewald":
        MM = np.eye(d - 1) if M is None else np.asarray(M, dtype=float)
        return _ewald_eval(L, chi.functional(L), MM, R, guard, chi)
    raise ValidationError(f"unknown method {method!r}")


def script_X(L: UnimodularLattice, chi: Character, R: float | None = None,
             y_guard: float = Y_GUARD, method: str = "ewald") -> SeriesEvaluation:
    """X(L, chi).  For ``method="ball"`` R is the ball radius (default 2^8);
    for ``"ewald"`` it is the Gaussian cut radius (default 8)."""
    if R is None:
        R = 2.0 ** 8 if method == "ball" else 8.0
    return _evaluate(L, chi, R, method, None, y_guard)


def _hat_prefactor(D: AtomicDistribution, z: float) -> float:
    return math.exp(-0.5 * z * z) * D.span / (2 * D.sigma * math.sqrt(2 * math.pi ** 3))


def hat_X(D: AtomicDistribution, L: UnimodularLattice, chi: Character, z: float = 0.0,
          R: float | None = None, method: str = "ewald",
          sc: StructureConstants | None = None, y_guard: float = Y_GUARD) -> SeriesEvaluation:
    """e^{-z^2/2} |b| / (2 sigma sqrt(2 pi^3)) sum sin(2 pi chi(w)) / y exp(-4 pi^2 x D x)."""
    sc = sc or structure_constants(D)
    if R is None:
        R = 2.0 ** 8 if method == "ball" else 8.0
    M = 4 * math.pi ** 2 * sc.Dmat
    ev = _evaluate(L, chi, R, method, M, y_guard)
    f = _hat_prefactor(D, z)
    return SeriesEvaluation(f * ev.value, ev.R_final, f * ev.cauchy_residual, ev.term_count)


def hat_X_map(D: AtomicDistribution, sc: StructureConstants | None = None) -> np.ndarray:
    """Linear map A with hat_X(L, chi) = e^{-z^2/2} Lambda X(A L, A chi)."""
    sc = sc or structure_constants(D)
    d = D.d
    w, V = np.linalg.eigh(sc.Dmat)
    sqrtD = V @ np.diag(np.sqrt(w)) @ V.T
    A = np.zeros((d, d))
    A[0, 0] = 1.0 / ((TWO_PI ** (d - 1)) * math.sqrt(np.linalg.det(sc.Dmat)))
    A[1:, 1:] = TWO_PI * sqrtD
    return A


def restricted_X(D: AtomicDistribution, L: UnimodularLattice, chi: Character, z: float = 0.0,
                 K: float = 64.0, delta: float = 0.05, sc: StructureConstants | None = None,
                 gauss_cut: float = 80.0) -> SeriesEvaluation:
    """hat_X restricted to delta < |y| < K, 2 pi |y|^alpha |x| < 2^{K+1}.

    Terms whose Gaussian factor is below e^{-gauss_cut} are omitted."""
    if not 0 < delta < K:
        raise BadWindow(f"need 0 < delta < K, got {delta}, {K}")
    sc = sc or structure_constants(D)
    d = L.d
    M = 4 * math.pi ** 2 * sc.Dmat
    T = np.zeros((d, d))
    T[0, 0] = 1.0 / K
    T[1:, 1:] = np.linalg.cholesky(M) / math.sqrt(gauss_cut)
    C = enumerate_region(L.reduced, T, math.sqrt(2.0))
    W = C @ L.reduced
    y, X = W[:, 0], W[:, 1:]
    q = _quad_form(X, M)
    ay = np.abs(y)
    keep = (ay > delta) & (ay < K) & (q <= gauss_cut)
    keep &= TWO_PI * ay ** sc.alpha * np.linalg.norm(X, axis=1) < 2.0 ** (K + 1)
    sn = _sin_chi(chi, C[keep])
    terms = sn / y[keep] * np.exp(-q[keep])
    return SeriesEvaluation(_hat_prefactor(D, z) * math.fsum(terms), K, 0.0, int(len(terms)))


def script_Y(L: UnimodularLattice, chi: Character, c: float, R: float | None = None,
             method: str = "ewald", y_guard: float = Y_GUARD) -> SeriesEvaluation:
    """(1/c) sum [sin 2 pi chi(w) - sin 2 pi (chi(w) - c y(w))] / y exp(-|x|^2)."""
    if c == 0:
        raise ZeroC("c must be nonzero")
    if R is None:
        R = 2.0 ** 8 if method == "ball" else 8.0
    shift = np.zeros(L.d)
    shift[0] = c
    # chi - c y as a character on the reduced basis
    chi2 = Character(np.mod(chi.theta - c * L.reduced[:, 0], 1.0))
    a = _evaluate(L, chi, R, method, None, y_guard)
    b = _evaluate(L, chi2, R, method, None, y_guard)
    return SeriesEvaluation((a.value - b.value) / c, R,
                            (a.cauchy_residual + b.cauchy_residual) / abs(c),
                            a.term_count + b.term_count)


# --- ensembles --------------------------------------------------------------

def _adaptive(fn, R0: float, Rmax: float, tol: float):
    R = R0
    while True:
        ev = fn(R)
        if ev.cauchy_residual < tol or R * 2 > Rmax * (1 + 1e-12):
            return ev
        R *= 2


def sample_limit_ensemble(d: int, which: str, params: dict | None, N: int, seed: int,
                          method: str = "ewald", tol: float = 1e-3,
                          max_resample: int = 100) -> EnsembleResult:
    """N independent draws of X, hatX or Y over Haar-random (L, chi).

    R is doubled until the Cauchy residual drops below ``tol``; with the
    ball method the cap is 2^10 |w_1|, with the Ewald split the Gaussian cut
    radius runs from 4 to 32.  Draws hitting a lattice vector with |y| below
    the guard are redrawn from a fresh substream and flagged."""
    if N <= 0:
        raise EmptyEnsemble("ensemble size must be positive")
    params = dict(params or {})
    if which not in ("X", "hatX", "Y"):
        raise ValidationError(f"unknown limit variable {which!r}")
    if which == "hatX":
        D = params["D"]
        z = float(params.get("z", 0.0))
        sc = structure_constants(D)
        if D.d != d:
            raise ValidationError(f"distribution has d = {D.d}, ensemble d = {d}")
    c = float(params.get("c", 1.0))
    values, Rf, res = np.empty(N), np.empty(N), np.empty(N)
    flags = []
    approx = False
    for i in range(N):
        flag = "ok"
        for attempt in range(max_resample):
            L, chi = haar_sample(d, seed, i + attempt * N)
            approx |= L.approx
            if method == "ewald":
                R0, Rmax = 4.0, 32.0
            else:
                w1 = float(np.linalg.norm(L.reduced[0]))
                R0, Rmax = max(8.0, 2 * w1), 2.0 ** 10 * w1
            try:
                if which == "X":
                    ev = _adaptive(lambda R: script_X(L, chi, R, method=method), R0, Rmax, tol)
                elif which == "hatX":
                    ev = _adaptive(lambda R: hat_X(D, L, chi, z, R, method=method, sc=sc), R0, Rmax, tol)
                else:
                    ev = _adaptive(lambda R: script_Y(L, chi, c, R, method=method), R0, Rmax, tol)
                break
            except NearZeroY:
                flag = "resampled"
        else:
            raise NearZeroY(f"draw {i}: no admissible lattice after {max_resample} attempts")
        if ev.cauchy_residual >= tol:
            flag = "unconverged"
        values[i], Rf[i], res[i] = ev.value, ev.R_final, ev.cauchy_residual
        flags.append(flag)
    params.update({"which": which, "d": d, "method": method, "approx": approx})
    return EnsembleResult(label=f"limit-{which}", params=params, seed=seed, values=values,
                          flags=flags, R_final=Rf, residual=res)
