"""Resonant intervals of the characteristic function and the resonant-sum
approximation of the Edgeworth error.

Frequencies s live on the scale of S_n (not of the standardised sum).  The
k-th interval I_k has length 2 pi / |b_{d+1}| and is centred at
s_k = 2 pi k / |b_{d+1}|, where b_{d+1} = a_{d+1} - a_1 is the span.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .atoms import AtomicDistribution, char_fn, psi
from .edgeworth import build_series, fourier_side
from .errors import BadWindow, NotResonant, OptimizerFail, QuadratureFail, SingularD, ValidationError

TWO_PI = 2.0 * math.pi
_TWO_PI_LD = np.longdouble("6.283185307179586476925286766559005768")


@dataclass(frozen=True, eq=False)
class StructureConstants:
    Dmat: np.ndarray
    omega: np.ndarray
    q: np.ndarray
    Lambda: float
    H: float
    alpha: float


@dataclass(frozen=True, eq=False)
class ResonantTerm:
    k: int
    s_k: float
    bar_s: float
    r: float
    phi: float
    eta: np.ndarray
    xi: float
    Xk: np.ndarray
    Yk: float
    resonant: bool
    log_r: float = 0.0


def _centered(p: np.ndarray, b: np.ndarray):
    """Covariance form C = diag(p) - p p^T on R^{d+1}."""
    return np.diag(p) - np.outer(p, p)


def structure_constants(D: AtomicDistribution) -> StructureConstants:
    """Quadratic form D of r_k ~ 1 - eta.D.eta, the shift vector omega and
    the normalisations Lambda, H.

    With phases y_j = eta_j + xi b_j (eta_1 = eta_{d+1} = 0) one has
    |psi|^2 = 1 - Var(Y) + O(|y|^3) where Y takes value y_j with
    probability p_j.  Minimising Var(eta + xi b) over the shift xi gives
    xi* = omega.eta and the Schur complement
    2 eta.D.eta = Var(eta) - Cov(eta, b)^2 / Var(b).
    """
    p = D.probs
    b = np.concatenate([[0.0], D.offsets])
    d = D.d
    C = _centered(p, b)
    S = slice(1, d)
    var_b = float(b @ C @ b)
    cb = C[S, :] @ b
    Dm = 0.5 * (C[S, S] - np.outer(cb, cb) / var_b)
    Dm = 0.5 * (Dm + Dm.T)
    det = float(np.linalg.det(Dm))
    if det <= 1e-14:
        raise SingularD(f"det D = {det:.3e}")
    mean_b = float(p @ b)
    omega = p[S] * (mean_b - b[S]) / var_b
    q = p[S].copy()
    Lam = D.span / ((TWO_PI ** (d + 0.5)) * math.sqrt(det) * D.sigma)
    H = TWO_PI ** d * math.sqrt(det)
    return StructureConstants(Dm, omega, q, Lam, H, 1.0 / (2 * (d - 1)))


def hessian_diagnostic(D: AtomicDistribution, h: float = 1e-4) -> np.ndarray:
    """Hessian of x -> |sum_j p_j exp(i y_j)|^2 at y = (0, x, 0), by Richardson
    extrapolated central differences.  Equals -4 D only when the covariance
    between the atom offsets and the perturbation vanishes."""
    p = D.probs
    d = D.d

    def zeta(x):
        y = np.concatenate([[0.0], x, [0.0]])
        return abs(np.sum(p * np.exp(1j * y))) ** 2

    def hess(step):
        m = d - 1
        out = np.zeros((m, m))
        for i in range(m):
            for j in range(m):
                ei = np.eye(m)[i] * step
                ej = np.eye(m)[j] * step
                out[i, j] = (zeta(ei + ej) - zeta(ei - ej) - zeta(-ei + ej) + zeta(-ei - ej)) / (4 * step * step)
        return out

    return (4 * hess(h / 2) - hess(h)) / 3


def _frac_centered(t):
    """Map t to (-1/2, 1/2] modulo 1 (extended precision input allowed)."""
    return t - np.ceil(t - 0.5)


def eta_and_l(D: AtomicDistribution, k):
    """eta_{j,k} in (-pi, pi] for j = 2..d and the integers l_{j,k}."""
    k = np.asarray(k)
    ratio = (D.offsets[:-1] / D.span).astype(np.longdouble)
    t = np.multiply.outer(k.astype(np.longdouble), ratio)
    f = _frac_centered(t)
    l = np.rint(f - t).astype(np.int64)
    return (f * _TWO_PI_LD).astype(float), l


def eta_vector(D: AtomicDistribution, k) -> np.ndarray:
    return eta_and_l(D, k)[0]


def _abs2_and_slope(D, s):
    ps = psi(D, s)
    dps = (1j * D.offsets * D.probs[1:]) @ np.exp(1j * np.multiply.outer(D.offsets, s))
    return np.abs(ps) ** 2, 2.0 * np.real(np.conj(ps) * dps)


def _arg_phi(D: AtomicDistribution, s: float) -> float:
    """arg phi(s) reduced to (-pi, pi], with s a_1 reduced in extended precision."""
    lin = np.longdouble(s) * np.longdouble(D.atoms[0])
    lin = float(lin - _TWO_PI_LD * np.rint(lin / _TWO_PI_LD))
    ang = lin + float(np.angle(psi(D, s)))
    return math.remainder(ang, TWO_PI)


def coarse_peaks(D: AtomicDistribution, ks, points: int = 64):
    """64-point scan of |psi| over each I_k; returns (grid, index of max)."""
    ks = np.asarray(ks, dtype=float)
    half = math.pi / D.span
    u = np.linspace(-half, half, points)
    grid = np.add.outer(TWO_PI * ks / D.span, u)
    val = np.abs(psi(D, grid))
    return grid, np.argmax(val, axis=1), val


def locate_peak(D: AtomicDistribution, k: int, n: int) -> ResonantTerm:
    """Maximise |psi| over I_k.

    The coarse scan brackets the peak; the maximiser is then polished as
    the root of d|psi|^2/ds by Brent's method, which reaches ~1e-15
    relative accuracy where value-based golden section would stall at the
    square root of machine precision.
    """
    if k == 0:
        raise ValidationError("k must be nonzero")
    grid, idx, _ = coarse_peaks(D, [k])
    grid, i = grid[0], int(idx[0])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    f = lambda s: _abs2_and_slope(D, s)[1]
    flo, fhi = f(lo), f(hi)
    s_k = TWO_PI * k / D.span
    if flo > 0 > fhi:
        bar_s = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    else:
        # peak at an end of I_k (or flat): take the larger endpoint value
        cand = np.array([lo, grid[i], hi])
        bar_s = float(cand[np.argmax(np.abs(psi(D, cand)))])
    if abs(bar_s - grid[i]) > (grid[-1] - grid[0]) / 32:
        raise OptimizerFail(f"refined peak {bar_s} far from coarse peak {grid[i]}")
    val = psi(D, bar_s)
    r = float(abs(val))
    log_r = math.log(r) if r > 0 else -math.inf
    eta, _ = eta_and_l(D, k)
    d = D.d
    return ResonantTerm(
        k=int(k), s_k=s_k, bar_s=float(bar_s), r=r, phi=_arg_phi(D, bar_s),
        eta=np.atleast_1d(eta), xi=float(bar_s - s_k), Xk=math.sqrt(n) * np.atleast_1d(eta),
        Yk=k / n ** ((d - 1) / 2), resonant=bool(n * log_r >= -100 * d * math.log(n)), log_r=log_r)


def ik_asymptotic(term: ResonantTerm, D: AtomicDistribution, n: int, z: float) -> complex:
    """Leading asymptotics of the I_k contribution to the Fourier inversion."""
    if not term.resonant:
        raise NotResonant(f"interval k={term.k} is not resonant")
    mod = math.exp(n * term.log_r) / (math.sqrt(TWO_PI * n) * D.sigma * term.bar_s) * math.exp(-0.5 * z * z)
    # n*phi and s*z*sigma*sqrt(n) reduced separately before combining
    ph = math.remainder(n * term.phi, TWO_PI) - math.remainder(term.bar_s * z * D.sigma * math.sqrt(n), TWO_PI)
    return mod * np.exp(1j * ph) / 1j


def phase_decomposition(D: AtomicDistribution, term: ResonantTerm, n: int, z: float = 0.0):
    """(predicted peak location, predicted n*phi_k mod 2 pi) from the
    first-order expansions around the lattice resonance s_k."""
    sc = structure_constants(D)
    bar_s = term.s_k + float(sc.omega @ term.eta)
    lin = np.longdouble(n) * np.longdouble(term.s_k) * np.longdouble(D.atoms[0])
    ph = lin + np.longdouble(n) * np.longdouble(float(sc.q @ term.eta))
    ph = float(ph - _TWO_PI_LD * np.rint(ph / _TWO_PI_LD))
    return bar_s, ph


def resonant_window(D: AtomicDistribution, n: int, delta: float, K: float,
                    sc: StructureConstants | None = None):
    """k, eta_k, X_k, Y_k for the index set delta < Y_k < K,
    Y_k^alpha |X_k| < 2^{K+1}."""
    if not delta < K:
        raise BadWindow(f"need delta < K, got {delta}, {K}")
    sc = sc or structure_constants(D)
    d = D.d
    scale = n ** ((d - 1) / 2)
    kmin = int(math.floor(delta * scale)) + 1
    kmax = int(math.ceil(K * scale)) - 1
    if kmax < kmin:
        e = np.zeros((0, d - 1))
        return np.zeros(0, dtype=np.int64), e, e, np.zeros(0)
    ks = np.arange(kmin, kmax + 1, dtype=np.int64)
    Y = ks / scale
    keep = (Y > delta) & (Y < K)
    eta = eta_vector(D, ks).reshape(len(ks), d - 1)
    X = math.sqrt(n) * eta
    keep &= Y ** sc.alpha * np.linalg.norm(X, axis=1) < 2.0 ** (K + 1)
    return ks[keep], eta[keep], X[keep], Y[keep]


def tilde_delta(D: AtomicDistribution, n: int, z: float = 0.0, delta: float = 0.05,
                K: float = 64.0, sc: StructureConstants | None = None) -> float:
    """Resonant-sum approximation of E_d(z) - P(S_n/(sigma sqrt n) <= z)."""
    sc = sc or structure_constants(D)
    ks, eta, X, Y = resonant_window(D, n, delta, K, sc)
    if ks.size == 0:
        return 0.0
    d = D.d
    rn = math.sqrt(n)
    # 2 pi n^{d/2} (sqrt(n) a_1 - z sigma) Y_k / |b| = 2 pi k (n a_1 - z sigma sqrt n) / |b|
    c = (np.longdouble(n) * np.longdouble(D.atoms[0]) - np.longdouble(z * D.sigma * rn)) / np.longdouble(D.span)
    frac = _frac_centered(ks.astype(np.longdouble) * _frac_centered(c))
    u = rn * sc.q - z * D.sigma * sc.omega
    phase = TWO_PI * frac.astype(float) + X @ u
    quad = np.einsum("ki,ij,kj->k", X, sc.Dmat, X)
    terms = np.sin(phase) / Y * np.exp(-quad)
    pref = D.span * math.exp(-0.5 * z * z) / (n ** (d / 2) * D.sigma * math.sqrt(2 * math.pi ** 3))
    return float(pref * math.fsum(terms))


# Gauss-Kronrod 7-15 nodes on [-1, 1]
_XGK = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                 0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                 0.207784955007898467600689403773245, 0.000000000000000000000000000000000])
_WGK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                 0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                 0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                0.381830050505118944950369775488975, 0.417959183673469387755102040816327])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG_FULL = np.zeros(15)
_WG_FULL[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


def _gk_adaptive(f, a: float, b: float, tol: float, max_panels: int = 200000, init: int = 8):
    """Vectorised adaptive G7-K15 on [a, b]; f maps arrays to complex arrays."""
    edges = np.linspace(a, b, init + 1)
    lo, hi = edges[:-1], edges[1:]
    total = 0.0 + 0.0j
    err_total = 0.0
    count = 0
    while lo.size:
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        pts = mid[:, None] + half[:, None] * _NODES
        vals = f(pts)
        k = half * (vals @ _WK)
        g = half * (vals @ _WG_FULL)
        err = np.abs(k - g)
        ok = err <= tol * (half / (0.5 * (b - a))) + 1e-300
        ok |= half < 1e-13 * max(abs(a), abs(b), 1.0)
        total += k[ok].sum()
        err_total += err[ok].sum()
        count += lo.size
        if count > max_panels:
            raise QuadratureFail("panel budget exhausted")
        lo, hi = np.concatenate([lo[~ok], mid[~ok]]), np.concatenate([mid[~ok], hi[~ok]])
    return total, err_total


def _phi_pow(D: AtomicDistribution, s: np.ndarray, n: int) -> np.ndarray:
    """phi(s)^n via n log psi plus an extended-precision reduction of n s a_1."""
    sl = np.asarray(s, dtype=np.longdouble)
    ang_b = np.multiply.outer(sl, D.offsets.astype(np.longdouble))
    ang_b = (ang_b - _TWO_PI_LD * np.rint(ang_b / _TWO_PI_LD)).astype(float)
    ps = D.probs[0] + np.exp(1j * ang_b) @ D.probs[1:]
    lin = sl * np.longdouble(n) * np.longdouble(D.atoms[0])
    lin = (lin - _TWO_PI_LD * np.rint(lin / _TWO_PI_LD)).astype(float)
    with np.errstate(divide="ignore"):
        logmod = n * np.log(np.abs(ps))
    ang = n * np.angle(ps) + lin
    return np.exp(logmod + 1j * ang)


def _sin_minus_x(x):
    x = np.asarray(x, dtype=float)
    out = np.sin(x) - x
    small = np.abs(x) < 0.5
    if np.any(small):
        xs = x[small]
        term = -xs ** 3 / 6
        acc = term.copy()
        for j in range(1, 9):
            term = -term * xs * xs / ((2 * j + 2) * (2 * j + 3))
            acc = acc + term
        out[small] = acc
    return out


def _log_phi_small(D: AtomicDistribution, s: np.ndarray) -> np.ndarray:
    """log phi(s) without the O(eps/s) cancellation near s = 0.

    phi - 1 = sum_j p_j (e^{i s a_j} - 1 - i s a_j) uses the zero mean to
    drop the linear term analytically; log(1 + w) is then evaluated with
    log1p on the modulus and atan2 on the angle."""
    x = np.multiply.outer(s, D.atoms)
    re = (-2.0 * np.sin(0.5 * x) ** 2) @ D.probs
    im = _sin_minus_x(x) @ D.probs
    return 0.5 * np.log1p(2 * re + re * re + im * im) + 1j * np.arctan2(im, 1.0 + re)


def _central_difference(D, series, s, n):
    """phi^n(s) - E^_d(s sigma sqrt n) = e^{-t^2/2} (expm1(R) - sum_k q_k(it) n^{-k/2})."""
    t = s * D.sigma * math.sqrt(n)
    R = n * _log_phi_small(D, s) + 0.5 * t * t
    corr = fourier_side(series, t, n) * np.exp(0.5 * t * t) - 1.0
    return np.exp(-0.5 * t * t) * (np.expm1(R) - corr)


def fourier_oracle(D: AtomicDistribution, n: int, z: float = 0.0, K1: float = 8.0,
                   tol: float | None = None, return_imag: bool = False,
                   two_sided: bool = False):
    """Direct Fourier inversion
    (1/2 pi) int_{|s| <= K1 n^{(d-1)/2}} (phi^n(s) - E^_d(s sigma sqrt n)) e^{-i s z sigma sqrt n} / (i s) ds.

    The integral is split at the edges of the intervals I_k.  Inside each
    I_k only the neighbourhood of the peak where |phi|^n exceeds e^{-60}
    is integrated; elsewhere the integrand is below double precision
    relevance.  The I_0 piece also carries the Edgeworth transform.

    By default the negative half-line is taken as the complex conjugate of
    the positive one.  With ``two_sided`` it is integrated separately, so
    the imaginary part of the result measures the quadrature asymmetry.
    """
    d = D.d
    series = build_series(D, d)
    sig_rn = D.sigma * math.sqrt(n)
    smax = K1 * n ** ((d - 1) / 2)
    if tol is None:
        tol = 1e-10 * n ** (-d / 2)
    half = math.pi / D.span
    cut = 60.0
    width = math.sqrt(2 * cut / n) / D.sigma * 1.5
    kmax = int(math.floor(smax / (TWO_PI / D.span) + 0.5))
    active, peak, ks = np.zeros(0, dtype=int), None, None
    if kmax >= 1:
        ks = np.arange(1, kmax + 1)
        grid, idx, val = coarse_peaks(D, ks)
        peak = grid[np.arange(len(ks)), idx]
        logpk = n * np.log(np.maximum(val[np.arange(len(ks)), idx], 1e-300))
        active = np.flatnonzero(logpk > -cut - 5)

    def half_line(sign, budget_total):
        # int_0^smax f(sign t) dt; |phi| is even so the peak windows agree
        def integrand(t):
            s = sign * t
            ph = np.exp(-1j * np.remainder(s * z * sig_rn, TWO_PI))
            return _central_difference(D, series, s, n) * ph / (1j * s)

        def integrand_k(t):
            s = sign * t
            ph = np.exp(-1j * np.remainder(s * z * sig_rn, TWO_PI))
            return _phi_pow(D, s, n) * ph / (1j * s)

        v, err = _gk_adaptive(integrand, 0.0, min(half, smax), budget_total / 4)
        total = v
        budget = budget_total / 4 / max(len(active), 1)
        for j in active:
            k = int(ks[j])
            a_k, b_k = (TWO_PI * k / D.span) - half, (TWO_PI * k / D.span) + half
            a_w, b_w = max(a_k, peak[j] - width, 0.0), min(b_k, peak[j] + width, smax)
            if b_w <= a_w:
                continue
            v, e = _gk_adaptive(integrand_k, a_w, b_w, budget)
            total += v
            err += e
        return total, err

    if two_sided:
        pos, e1 = half_line(1.0, tol / 2)
        neg, e2 = half_line(-1.0, tol / 2)
        total, err = pos + neg, e1 + e2
        val = total / TWO_PI
    else:
        total, err = half_line(1.0, tol)
        val = total / math.pi
    if err > tol:
        raise QuadratureFail(f"quadrature error estimate {err:.3e} exceeds {tol:.3e}")
    if return_imag or two_sided:
        return float(val.real), float(val.imag)
    return float(val.real)
