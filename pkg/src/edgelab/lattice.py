"""Unimodular lattices, characters and lattice-point enumeration.

Convention: for a vector w = (w_1, ..., w_d) the first coordinate is
y(w) and the remaining d-1 coordinates form x(w).  Basis vectors are rows.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import reduce as _fold

import numpy as np

from .atoms import AtomicDistribution
from .errors import BudgetExceeded, NumericalRankLoss, UnsupportedDim
from .resonance import structure_constants
from .rng import stream

HAAR_Y_CAP = 1e10
# hyperbolic-area mass of the cusp above HAAR_Y_CAP in the fundamental domain
HAAR_TRUNCATED_MASS = 3.0 / (math.pi * HAAR_Y_CAP)
HECKE_PRIME = 1_000_003
_TWO_PI_LD = np.longdouble("6.283185307179586476925286766559005768")


@dataclass(frozen=True, eq=False)
class UnimodularLattice:
    """Lattice spanned by the rows of ``basis``.

    ``reduced`` is a shortest spanning set (rows ordered by length) and
    ``unimodular`` the integer matrix U with reduced = U @ basis.
    """

    basis: np.ndarray
    reduced: np.ndarray
    unimodular: np.ndarray
    approx: bool = False

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    def to_json(self, chi: "Character | None" = None) -> str:
        obj = {"basis": self.basis.tolist(), "reduced": self.reduced.tolist(),
               "theta": [] if chi is None else [float(t) for t in chi.theta]}
        return json.dumps(obj, sort_keys=True)


@dataclass(frozen=True, eq=False)
class Character:
    """chi(sum_j m_j w_j) = sum_j m_j theta_j mod 1 on the reduced basis."""

    theta: np.ndarray

    def functional(self, L: UnimodularLattice) -> np.ndarray:
        """Vector t with chi(w) = t . w mod 1 for lattice vectors w."""
        return np.linalg.solve(L.reduced, self.theta)

    def of(self, coeffs: np.ndarray) -> np.ndarray:
        return np.mod(np.asarray(coeffs) @ self.theta, 1.0)


def h_gamma(gamma) -> np.ndarray:
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    d = gamma.size + 1
    H = np.eye(d)
    H[0, 1:] = gamma
    return H


def g_t(t: float, d: int) -> np.ndarray:
    return np.diag([math.exp(-(d - 1) * t)] + [math.exp(t)] * (d - 1))


def lattice_basis_of(n: int, D: AtomicDistribution) -> np.ndarray:
    gamma = D.offsets[:-1] / D.span
    return h_gamma(gamma) @ g_t(0.5 * math.log(n), D.d)


def lattice_of(n: int, D: AtomicDistribution) -> UnimodularLattice:
    """The lattice Z^d H_gamma G_{ln(n)/2}: row m maps to
    (m_1 / n^{(d-1)/2}, sqrt(n) (m_1 gamma + m_{2..d}))."""
    return reduce(lattice_basis_of(n, D))


# --- reduction --------------------------------------------------------------

def _gauss_lagrange(B: np.ndarray):
    U = np.eye(2, dtype=np.int64)
    b = B.copy()
    if b[0] @ b[0] > b[1] @ b[1]:
        b, U = b[::-1].copy(), U[::-1].copy()
    for _ in range(10000):
        mu = round(float(b[0] @ b[1]) / float(b[0] @ b[0]))
        if mu:
            U[1] -= mu * U[0]
            b[1] = U[1] @ B
        if b[1] @ b[1] < b[0] @ b[0]:
            b, U = b[::-1].copy(), U[::-1].copy()
            continue
        break
    return U


def _lll(B: np.ndarray, delta: float = 0.999):
    d = B.shape[0]
    U = np.eye(d, dtype=np.int64)
    b = B.copy()

    def gso(b):
        bs = np.zeros_like(b)
        mu = np.zeros((d, d))
        for i in range(d):
            bs[i] = b[i]
            for j in range(i):
                mu[i, j] = (b[i] @ bs[j]) / (bs[j] @ bs[j])
                bs[i] = bs[i] - mu[i, j] * bs[j]
        return bs, mu

    k = 1
    bs, mu = gso(b)
    it = 0
    while k < d:
        it += 1
        if it > 100000:
            raise NumericalRankLoss("LLL did not terminate")
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q:
                U[k] -= q * U[j]
                b[k] = U[k] @ B
                bs, mu = gso(b)
        if bs[k] @ bs[k] >= (delta - mu[k, k - 1] ** 2) * (bs[k - 1] @ bs[k - 1]):
            k += 1
        else:
            U[[k - 1, k]] = U[[k, k - 1]]
            b = (U @ B).astype(float)
            bs, mu = gso(b)
            k = max(k - 1, 1)
    return U


def _is_primitive(C: np.ndarray) -> bool:
    """Whether integer rows C (k x d) extend to a basis of Z^d."""
    k, d = C.shape
    g = 0
    for cols in itertools.combinations(range(d), k):
        g = math.gcd(g, int(round(np.linalg.det(C[:, cols]))))
        if g == 1:
            return True
    return g == 1


def _successive_minima(B: np.ndarray, U0: np.ndarray):
    """Greedy shortest spanning set by enumeration around an LLL basis."""
    d = B.shape[0]
    base = U0 @ B
    R = float(np.max(np.linalg.norm(base, axis=1))) * (1 + 1e-9)
    coeffs = _enumerate_coeffs(base, R)
    vecs = coeffs @ base
    norms = np.einsum("ij,ij->i", vecs, vecs)
    order = np.lexsort((-np.abs(coeffs).max(axis=1) * 0, norms))
    chosen = []
    for idx in order:
        c = coeffs[idx]
        cand = np.array(chosen + [c])
        if np.linalg.matrix_rank(cand.astype(float)) < len(cand):
            continue
        if not _is_primitive(cand @ U0):
            continue
        chosen.append(c)
        if len(chosen) == d:
            break
    return np.array(chosen, dtype=np.int64) @ U0


def _canonical(U: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Fix signs: leading nonzero coordinate positive for w_1..w_{d-1},
    w_d chosen so that det(reduced) > 0; order by length (stable)."""
    W = U @ B
    order = np.argsort(np.einsum("ij,ij->i", W, W), kind="stable")
    U = U[order]
    W = W[order]
    for i in range(len(U) - 1):
        nz = np.flatnonzero(np.abs(W[i]) > 1e-12 * np.abs(W[i]).max())
        if W[i, nz[0]] < 0:
            U[i] = -U[i]
            W[i] = -W[i]
    if np.linalg.det(W) < 0:
        U[-1] = -U[-1]
    return U


def reduce(L_or_basis, approx: bool = False) -> UnimodularLattice:
    """Shortest spanning set: Gauss-Lagrange for d = 2, LLL plus an
    exhaustive polish for d = 3, 4."""
    B = L_or_basis.basis if isinstance(L_or_basis, UnimodularLattice) else np.asarray(L_or_basis, dtype=float)
    d = B.shape[0]
    if d > 4:
        raise UnsupportedDim(f"reduction supported for d <= 4, got {d}")
    if np.linalg.cond(B) > 1e12:
        raise NumericalRankLoss("basis condition number exceeds 1e12")
    if d == 2:
        U = _gauss_lagrange(B)
    else:
        U = _successive_minima(B, _lll(B))
    U = _canonical(U, B)
    return UnimodularLattice(B.copy(), (U @ B).astype(float), U, approx)


# --- enumeration ------------------------------------------------------------

def _enumerate_coeffs(B: np.ndarray, R: float, budget: float = 1e8,
                      shift: np.ndarray | None = None) -> np.ndarray:
    """Integer m with |m B - shift| <= R (Fincke-Pohst, innermost level
    vectorised).  Without a shift m = 0 is excluded."""
    d = B.shape[0]
    G = B @ B.T
    Rm = np.linalg.cholesky(G).T  # m G m^T = |Rm m|^2, Rm upper triangular
    if shift is None:
        centre_m = np.zeros(d)
    else:
        centre_m = np.linalg.solve(B.T, np.asarray(shift, dtype=float))
    box = R * np.sqrt(np.diag(np.linalg.inv(G)))
    if np.prod(2 * box + 1) > budget:
        raise BudgetExceeded(f"coefficient box of {np.prod(2 * box + 1):.3g} points exceeds budget")
    R2 = R * R * (1 + 1e-12) + 1e-300
    out = []

    def rec(i, m, partial):
        # coordinates > i fixed in m; partial = contribution of rows > i
        c = Rm[i, i + 1:] @ (m[i + 1:] - centre_m[i + 1:])
        rad2 = R2 - partial
        if rad2 < 0:
            return
        rad = math.sqrt(rad2) / Rm[i, i]
        centre = centre_m[i] - c / Rm[i, i]
        lo, hi = math.ceil(centre - rad), math.floor(centre + rad)
        if i == 0:
            if hi >= lo:
                blk = np.empty((hi - lo + 1, d), dtype=np.int64)
                blk[:, 0] = np.arange(lo, hi + 1)
                blk[:, 1:] = m[1:]
                out.append(blk)
            return
        for v in range(lo, hi + 1):
            m[i] = v
            rec(i - 1, m, partial + (Rm[i, i] * (v - centre_m[i]) + c) ** 2)
        m[i] = 0

    rec(d - 1, np.zeros(d, dtype=np.float64).astype(np.int64), 0.0)
    if not out:
        return np.zeros((0, d), dtype=np.int64)
    C = np.concatenate(out)
    W = C @ B
    if shift is not None:
        W = W - shift
    nrm = np.einsum("ij,ij->i", W, W)
    keep = nrm <= R2
    if shift is None:
        keep &= np.any(C != 0, axis=1)
    return C[keep]


def enumerate_ball(L: UnimodularLattice, R: float):
    """All nonzero lattice vectors with |w| <= R: (vectors, coefficients on
    the reduced basis)."""
    C = _enumerate_coeffs(L.reduced, R)
    return C @ L.reduced, C


def enumerate_region(B: np.ndarray, T: np.ndarray, R: float, shift: np.ndarray | None = None,
                     budget: float = 1e8) -> np.ndarray:
    """Coefficients m (on the rows of B) with |(m B - shift) T| <= R.

    The enumeration runs on a reduced basis of the transformed lattice
    B T, which keeps the Fincke-Pohst recursion short for elongated
    regions."""
    BT = np.asarray(B, dtype=float) @ T
    if BT.shape[0] == 2:
        U = _gauss_lagrange(BT)
    else:
        U = _lll(BT)
    BTr = (U @ BT).astype(float)
    sh = None if shift is None else np.asarray(shift, dtype=float) @ T
    C = _enumerate_coeffs(BTr, R, budget, sh)
    return C @ U


# --- characters -------------------------------------------------------------

def _frac(x):
    return x - np.floor(x)


def character_of(n: int, D: AtomicDistribution, z: float, L: UnimodularLattice) -> Character:
    """theta_j = u.x_j + v y_j mod 1 on the reduced basis, with
    u = sqrt(n) q - z sigma omega and v = n^{d/2}(sqrt(n) a_1 - z sigma)/|b_{d+1}|.

    The values are formed on the generators of Z^d H_gamma G first, where
    they reduce to (n a_1 - z sigma sqrt n)/|b| + sqrt(n) u.gamma and
    sqrt(n) u_i, in extended precision, then mapped through the integer
    change of basis."""
    sc = structure_constants(D)
    ld = np.longdouble
    rn = ld(math.sqrt(n))
    gamma = (D.offsets[:-1] / D.span).astype(ld)
    su = ld(n) * sc.q.astype(ld) - ld(z * D.sigma) * rn * sc.omega.astype(ld)  # sqrt(n) u
    first = (ld(n) * ld(D.atoms[0]) - ld(z * D.sigma) * rn) / ld(D.span) + su @ gamma
    gen = np.concatenate([[_frac(first)], _frac(su)])
    theta = _frac(L.unimodular.astype(ld) @ gen)
    return Character(theta.astype(float) % 1.0)


def transform(L: UnimodularLattice, chi: Character, A: np.ndarray):
    """Image (A L, A chi) under a linear map A acting on column vectors,
    with the character carried along (chi'(A w) = chi(w))."""
    A = np.asarray(A, dtype=float)
    L2 = reduce(L.reduced @ A.T)
    theta = np.mod(L2.unimodular @ chi.theta, 1.0)
    return L2, Character(theta)


# --- Haar sampling ----------------------------------------------------------

def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def haar_sample(d: int, rng_seed: int, index: int = 0):
    """(lattice, character) distributed by Haar measure times the uniform
    character.

    d = 2: a point x + iy of the standard fundamental domain with density
    proportional to 1/y^2 (cusp truncated at y = HAAR_Y_CAP), the lattice
    y^{-1/2}(Z + (x+iy)Z) and a uniform rotation.
    d = 3 (approximate): a uniformly chosen index-p sublattice of Z^3 for a
    large prime p, rescaled to covolume one and randomly rotated; such
    Hecke points equidistribute to Haar measure as p grows.
    """
    rng = stream(rng_seed, index)
    if d == 2:
        y0 = math.sqrt(3) / 2
        while True:
            x = rng.uniform(-0.5, 0.5)
            # inverse CDF of density ~ 1/y^2 on [y0, cap]
            u = rng.uniform()
            y = 1.0 / (1.0 / y0 - u * (1.0 / y0 - 1.0 / HAAR_Y_CAP))
            if x * x + y * y >= 1.0:
                break
        B = np.array([[1.0 / math.sqrt(y), 0.0], [x / math.sqrt(y), math.sqrt(y)]])
        B = B @ _rotation(rng.uniform(0, 2 * math.pi)).T
        L = reduce(B)
        return L, Character(rng.uniform(size=2))
    if d == 3:
        from scipy.spatial.transform import Rotation

        p = HECKE_PRIME
        c1, c2 = rng.integers(0, p, size=2)
        B = np.array([[1.0, 0.0, -float(c1)], [0.0, 1.0, -float(c2)], [0.0, 0.0, float(p)]])
        B = B * p ** (-1.0 / 3.0)
        # pre-reduce the integer-structured basis before rotating
        L0 = reduce(B, approx=True)
        rot = Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()
        L = reduce(L0.reduced @ rot.T, approx=True)
        return L, Character(rng.uniform(size=3))
    raise UnsupportedDim(f"Haar sampling available for d = 2 (exact) and d = 3 (approximate), got {d}")


def siegel_check(d: int, region, N: int, seed: int):
    """Monte Carlo mean of #(L cap box) under Haar measure, with its standard
    error.  ``region`` is ((y_lo, y_hi), (x_lo, x_hi), ...)."""
    box = np.asarray(region, dtype=float)
    corner = np.max(np.abs(box), axis=1)
    R = float(np.linalg.norm(corner))
    counts = np.empty(N)
    for i in range(N):
        L, _ = haar_sample(d, seed, i)
        W, _ = enumerate_ball(L, R)
        inside = np.all((W >= box[:, 0]) & (W <= box[:, 1]), axis=1)
        counts[i] = inside.sum()
    return float(counts.mean()), float(counts.std(ddof=1) / math.sqrt(N)) if N > 1 else math.inf


def box_volume(region) -> float:
    box = np.asarray(region, dtype=float)
    return float(np.prod(box[:, 1] - box[:, 0]))


def diophantine_floor(L: UnimodularLattice, beta: float, R: float, y_zero: float = 1e-12):
    """min over 0 < |w| <= R of |y(w)| |w|^beta, and the vectors with y(w) = 0."""
    W, _ = enumerate_ball(L, R)
    y = np.abs(W[:, 0])
    zero = y <= y_zero * max(1.0, float(np.abs(W).max(initial=1.0)))
    viol = W[zero]
    ok = ~zero
    if not np.any(ok):
        return math.inf, viol
    C = float(np.min(y[ok] * np.linalg.norm(W[ok], axis=1) ** beta))
    return C, viol
