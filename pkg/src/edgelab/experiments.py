"""Statistical harnesses comparing finite-n error ensembles with the limit laws.

Pass/fail bands live in CALIBRATION.  They are empirical constants: the
limit theorems give convergence in law without rates.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy.stats import kstest, spearmanr

from .atoms import AtomicDistribution, from_offsets
from .edgeworth import build_series, edgeworth_error, evaluate, norm_pdf
from .ensemble import EnsembleResult, ks_two_sample
from .errors import EdgelabError, RejectionBudget, ValidationError
from .exactdist import cdf_scaled, exact_law, interval_prob
from .lattice import Character, character_of, haar_sample, lattice_of
from .limitlaw import script_X, script_Y, sample_limit_ensemble
from .resonance import structure_constants, tilde_delta
from .rng import stream

__all__ = ["EnsembleResult", "ks_two_sample", "draw_parameters", "error_ensemble",
           "reference_ensemble", "harness_limit", "harness_diophantine", "harness_llt",
           "harness_joint", "harness_mixscale", "report_json", "rescaled_Y_ensemble", "sup_error",
           "distance_covariance", "CALIBRATION", "GOLDEN", "LATTICE_CONTROL"]

CALIBRATION = {
    "limit_ks_final": 0.08,
    "limit_ks_inversion": 0.01,
    "z_independence_ks": 0.08,
    "method_agreement_ks": 0.08,
    "method_agreement_iqr_frac": 0.15,
    "diophantine_band": 3.0,
    "llt_median_dev": 0.1,
    "llt_y_ks": 0.1,
    "joint_corr_band": 0.1,
    "mix_theta_ks": 0.04,
    "mix_dcov": 0.05,
    "rational_control_ks": 0.2,
}

# resonant window used by the resonance method; K = 64 removes the cap on
# |X_k| in practice, delta only drops the first few k at small n
RESONANCE_DELTA = 0.05
RESONANCE_K = 64.0
REFERENCE_N = 20000
MIN_ACCEPTANCE = 1e-4

GOLDEN = from_offsets([1.0, (1 + math.sqrt(5)) / 2], [0.25, 0.5, 0.25])
LATTICE_CONTROL = from_offsets([1.0, 2.0], [0.25, 0.5, 0.25])


# --- helpers ----------------------------------------------------------------

def _pmap(fn, items, threads: int = 1):
    """Order-preserving map; results do not depend on ``threads``."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


def _cache_dir() -> Path:
    root = os.environ.get("EDGELAB_CACHE") or os.path.join(os.path.expanduser("~"), ".cache", "edgelab")
    p = Path(root)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _trend_ok(seq, inversion: float) -> bool:
    """Non-increasing, allowing at most one rise of at most ``inversion``."""
    rises = [b - a for a, b in zip(seq, seq[1:]) if b > a]
    return len(rises) == 0 or (len(rises) == 1 and rises[0] <= inversion)


def distance_covariance(x, y) -> float:
    """Sample distance covariance (V-statistic) of two scalar samples."""
    x = np.asarray(x, dtype=float)[:, None]
    y = np.asarray(y, dtype=float)[:, None]

    def centred(v):
        a = np.abs(v - v.T)
        return a - a.mean(axis=0) - a.mean(axis=1)[:, None] + a.mean()

    return float(math.sqrt(max((centred(x) * centred(y)).mean(), 0.0)))


def _report(harness: str, params: dict, seed: int, metrics: dict, ok: bool, artifacts=()) -> dict:
    return {"harness": harness, "params": params, "seed": seed, "metrics": metrics,
            "pass": bool(ok), "artifacts": list(artifacts)}


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1)


# --- parameter draws --------------------------------------------------------

def draw_parameters(d: int, kappa: float = 0.05, M: float = 3.0, seed: int = 0,
                    index: int = 0, max_tries: int = 100000) -> AtomicDistribution:
    """Rejection sample from a fixed smooth density restricted to
    {p_i >= kappa, |a_i| <= M, |a_i - a_j| >= kappa}.

    Reference density: p ~ Dirichlet(2, ..., 2); span b_{d+1} = 1 + 2 Beta(2, 2);
    interior offsets b_2..b_d = span * (sorted iid Beta(2, 2)); a_1 is fixed by
    the zero-mean constraint."""
    if d < 1:
        raise ValidationError(f"need d >= 1, got {d}")
    rng = stream(seed, 1, index)
    for _ in range(max_tries):
        p = rng.dirichlet([2.0] * (d + 1))
        span = 1.0 + 2.0 * rng.beta(2.0, 2.0)
        u = np.sort(rng.beta(2.0, 2.0, size=d - 1))
        b = np.concatenate([[0.0], span * u, [span]])
        a = b - p @ b
        if p.min() < kappa or np.diff(b).min() < kappa or np.abs(a).max() > M:
            continue
        return from_offsets(b[1:], p)
    raise RejectionBudget(f"acceptance below {1.0 / max_tries:.1e} for kappa={kappa}, M={M}")


def _scaled_error(D: AtomicDistribution, n: int, z: float, method: str,
                  delta: float, K: float) -> float:
    sc = structure_constants(D)
    if method == "exact":
        err = edgeworth_error(D, n, D.d, z)
    elif method == "resonance":
        err = tilde_delta(D, n, z, delta, K, sc=sc)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return math.exp(0.5 * z * z) * n ** (D.d / 2) * err / sc.Lambda


def _error_draw(args):
    d, n, z, method, kappa, M, seed, i, delta, K = args
    D = draw_parameters(d, kappa, M, seed, i)
    try:
        return _scaled_error(D, n, z, method, delta, K), "ok"
    except EdgelabError as e:
        return math.nan, f"failed:{e.code}"


def error_ensemble(d: int, n: int, z: float, N: int, method: str = "resonance",
                   kappa: float = 0.05, M: float = 3.0, seed: int = 0,
                   delta: float = RESONANCE_DELTA, K: float = RESONANCE_K,
                   threads: int = 1, offset: int = 0) -> EnsembleResult:
    """N draws of e^{z^2/2} n^{d/2} Delta_n(z) / Lambda over random distributions.

    Draw i uses parameter substream ``offset + i``, so disjoint offsets give
    independent ensembles.  Failed draws are dropped and flagged in params."""
    args = [(d, n, z, method, kappa, M, seed, offset + i, delta, K) for i in range(N)]
    out = _pmap(_error_draw, args, threads)
    vals = np.array([v for v, f in out if f == "ok"])
    failures = [(i, f) for i, (v, f) in enumerate(out) if f != "ok"]
    params = {"d": d, "n": n, "z": z, "method": method, "kappa": kappa, "M": M,
              "delta": delta, "K": K, "offset": offset, "failures": failures}
    return EnsembleResult(label=f"error-{method}", params=params, seed=seed, values=vals)


def reference_ensemble(d: int = 2, N: int = REFERENCE_N, seed: int = 12345,
                       cache: bool = True) -> EnsembleResult:
    """Haar-random X(L, chi) sample, cached on disk."""
    path = _cache_dir() / f"xref_d{d}_N{N}_s{seed}_v1.npz"
    if cache and path.exists():
        z = np.load(path, allow_pickle=False)
        return EnsembleResult(label="limit-X", params={"which": "X", "d": d, "cached": True},
                              seed=seed, values=z["values"], flags=list(z["flags"]),
                              R_final=z["R_final"], residual=z["residual"])
    ens = sample_limit_ensemble(d, "X", None, N, seed)
    if cache:
        np.savez(path, values=ens.values, flags=np.array(ens.flags), R_final=ens.R_final,
                 residual=ens.residual)
    return ens


# --- harnesses --------------------------------------------------------------

def harness_limit(d: int = 2, n_list=(250, 1000, 4000), z: float = 0.0, N: int = 2000,
                  seed: int = 0, method: str = "resonance", z_alt: float = 1.0,
                  threads: int = 1, reference: EnsembleResult | None = None) -> dict:
    """KS distance between the scaled error ensemble and the X law, per n,
    plus the z-independence check at the largest n."""
    ref = reference if reference is not None else reference_ensemble(d)
    ks = []
    for n in n_list:
        ens = error_ensemble(d, n, z, N, method, seed=seed, threads=threads)
        ks.append(ks_two_sample(ens.values, ref.values))
    alt = error_ensemble(d, n_list[-1], z_alt, N, method, seed=seed + 1, threads=threads)
    base = ens if z == 0.0 else error_ensemble(d, n_list[-1], 0.0, N, method, seed=seed,
                                               threads=threads)
    ks_z = ks_two_sample(base.values, alt.values)
    trend = _trend_ok(ks, CALIBRATION["limit_ks_inversion"])
    final = ks[-1] < CALIBRATION["limit_ks_final"]
    zind = ks_z < CALIBRATION["z_independence_ks"]
    metrics = {"ks": ks, "ks_z_independence": ks_z, "trend_ok": trend, "final_ok": final,
               "z_independence_ok": zind, "reference_N": len(ref)}
    params = {"d": d, "n_list": list(n_list), "z": z, "z_alt": z_alt, "N": N, "method": method}
    return _report("limit", params, seed, metrics, trend and final and zind)


def sup_error(D: AtomicDistribution, n: int, r: int = 1, zmax: float = 3.0,
              grid: int = 601) -> float:
    """sup over |z| <= zmax of |F_n(z) - E_r(z)|, with F_n evaluated on both
    sides of every support point in the range plus a uniform grid."""
    law = exact_law(D, n)
    series = build_series(D, r)
    scale = D.sigma * math.sqrt(n)
    zs = law.values / scale
    m = np.abs(zs) <= zmax
    right = law.cumulative[m]
    left = right - law.masses[m]
    E = evaluate(series, zs[m], n)
    best = max(np.abs(right - E).max(initial=0.0), np.abs(left - E).max(initial=0.0))
    zg = np.linspace(-zmax, zmax, grid)
    best = max(best, float(np.abs(cdf_scaled(law, D, zg, n) - evaluate(series, zg, n)).max()))
    return float(best)


def harness_diophantine(D: AtomicDistribution = GOLDEN, n_list=(250, 500, 1000, 2000),
                        R_exponent: float = 0.9, control: AtomicDistribution | None = LATTICE_CONTROL,
                        zmax: float = 3.0) -> dict:
    """M(n) = n^R sup_z |F_n - E_1| for a badly approximable distribution
    (bounded) and for a lattice control (growing)."""
    if D.d != 2:
        raise ValidationError("diophantine harness is set up for d = 2")
    if not R_exponent < 1:
        raise ValidationError("R_exponent must be below 1")
    Mn = [n ** R_exponent * sup_error(D, n, 1, zmax) for n in n_list]
    ok = max(Mn) <= CALIBRATION["diophantine_band"] * Mn[0]
    metrics = {"M": Mn, "bounded_ok": ok}
    if control is not None:
        Mc = [n ** R_exponent * sup_error(control, n, 1, zmax) for n in n_list]
        inc = all(b > a for a, b in zip(Mc, Mc[1:]))
        metrics.update({"M_control": Mc, "control_increasing": inc})
        ok = ok and inc
    params = {"atoms": D.atoms.tolist(), "probs": D.probs.tolist(), "n_list": list(n_list),
              "R_exponent": R_exponent, "zmax": zmax}
    return _report("diophantine", params, 0, metrics, ok)


def _llt_draw(args):
    d, n, z, eps, c, kappa, M, seed, i = args
    D = draw_parameters(d, kappa, M, seed, i)
    sc = structure_constants(D)
    law = exact_law(D, n)
    out = {}
    if eps is not None:
        l_n = n ** (eps - d / 2)
        out["ratio_a"] = interval_prob(law, D, z, z + l_n) / (l_n * norm_pdf(z))
    if c is not None:
        l_n = c * D.span / (D.sigma * n ** (d / 2))
        ratio = interval_prob(law, D, z, z + l_n) / (l_n * norm_pdf(z))
        out["stat_c"] = sc.H * (ratio - 1.0)
    return out


def rescaled_Y_ensemble(c: float, N: int, seed: int, d: int = 2, kappa: float = 0.05,
                        M: float = 3.0) -> np.ndarray:
    """Draws of (H / 2 pi) Y(L, chi, c H / 2 pi) with (a, p) from draw_parameters
    and (L, chi) Haar.

    The map A carrying L(n, a) to Haar coordinates scales y by 2 pi / H, and
    y enters Y through the shifted character chi - c y.  Hence
    H (ratio - 1) tends to this mixture rather than to Y(L, chi, c) itself."""
    out = np.empty(N)
    for j in range(N):
        D = draw_parameters(d, kappa, M, seed, j)
        f = structure_constants(D).H / (2 * math.pi)
        L, chi = haar_sample(d, seed + 1, j)
        out[j] = f * script_Y(L, chi, c * f).value
    return out


def harness_llt(n_a: int = 4000, n_c: int = 2000, z: float = 0.0, eps: float = 0.3,
                c: float = 1.0, N_a: int = 100, N_c: int = 500, N_ref: int = 5000,
                seed: int = 0, d: int = 2, kappa: float = 0.05, M: float = 3.0,
                threads: int = 1) -> dict:
    """Local limit windows: (a) ratio P(z < S < z + l_n)/(l_n n(z)) -> 1 for
    l_n = n^{eps - d/2}; (c) H (ratio - 1) for l_n = c |b| / (sigma n^{d/2})
    compared with the Y(c) law (the verdict) and with the rescaled mixture
    of ``rescaled_Y_ensemble`` (reported alongside)."""
    ra = _pmap(_llt_draw, [(d, n_a, z, eps, None, kappa, M, seed, i) for i in range(N_a)], threads)
    dev = np.abs(np.array([r["ratio_a"] for r in ra]) - 1.0)
    rc = _pmap(_llt_draw, [(d, n_c, z, None, c, kappa, M, seed, i) for i in range(N_c)], threads)
    stat = np.array([r["stat_c"] for r in rc])
    yref = sample_limit_ensemble(d, "Y", {"c": c}, N_ref, seed + 7)
    ks = ks_two_sample(stat, yref.values)
    ks_mix = ks_two_sample(stat, rescaled_Y_ensemble(c, N_ref, seed + 9, d, kappa, M))
    med = float(np.median(dev))
    ok_a = med < CALIBRATION["llt_median_dev"]
    ok_c = ks < CALIBRATION["llt_y_ks"]
    metrics = {"median_abs_dev_a": med, "ks_c": ks, "a_ok": ok_a, "c_ok": ok_c,
               "ks_c_rescaled": ks_mix, "c_rescaled_ok": ks_mix < CALIBRATION["llt_y_ks"],
               "y_unconverged_fraction": yref.unconverged_fraction}
    params = {"n_a": n_a, "n_c": n_c, "z": z, "eps": eps, "c": c, "N_a": N_a, "N_c": N_c,
              "N_ref": N_ref, "d": d}
    return _report("llt", params, seed, metrics, ok_a and ok_c)


def _joint_draw(args):
    d, n, z1, z2, kappa, M, seed, i, delta, K = args
    D = draw_parameters(d, kappa, M, seed, i)
    return (_scaled_error(D, n, z1, "resonance", delta, K),
            _scaled_error(D, n, z2, "resonance", delta, K))


def _limit_pair(seed: int, i: int, d: int):
    L, chi1 = haar_sample(d, seed, i)
    chi2 = Character(stream(seed, 2, i).uniform(size=d))
    return script_X(L, chi1).value, script_X(L, chi2).value


def harness_joint(n: int = 2000, z1: float = 0.0, z2: float = 1.0, N: int = 1000,
                  seed: int = 0, d: int = 2, kappa: float = 0.05, M: float = 3.0,
                  threads: int = 1) -> dict:
    """Pairs of scaled errors at z1, z2 against pairs (X(L, chi_1), X(L, chi_2))
    with a shared lattice and independent characters.

    The dependence is measured by Spearman's rank correlation: the limit
    variables are heavy tailed, so the Pearson coefficient is not a stable
    statistic."""
    if z1 == z2 or abs(z1 - z2) * n ** (d / 2) < 1e3:
        raise ValidationError("need |z1 - z2| n^{d/2} >= 1e3")
    pairs = np.array(_pmap(_joint_draw, [(d, n, z1, z2, kappa, M, seed, i, RESONANCE_DELTA,
                                          RESONANCE_K) for i in range(N)], threads))
    lim = np.array([_limit_pair(seed + 3, i, d) for i in range(N)])
    ks1 = ks_two_sample(pairs[:, 0], lim[:, 0])
    ks2 = ks_two_sample(pairs[:, 1], lim[:, 1])
    rho = float(spearmanr(pairs[:, 0], pairs[:, 1]).statistic)
    rho_lim = float(spearmanr(lim[:, 0], lim[:, 1]).statistic)
    ok = (ks1 < CALIBRATION["limit_ks_final"] and ks2 < CALIBRATION["limit_ks_final"]
          and abs(rho - rho_lim) < CALIBRATION["joint_corr_band"])
    metrics = {"ks_z1": ks1, "ks_z2": ks2, "rank_corr": rho, "rank_corr_limit": rho_lim}
    params = {"n": n, "z1": z1, "z2": z2, "N": N, "d": d}
    return _report("joint", params, seed, metrics, ok)


def _mix_draw(args):
    n, kappa, M, seed, i, control = args
    D = control if control is not None else draw_parameters(2, kappa, M, seed, i)
    L = lattice_of(n, D)
    chi = character_of(n, D, 0.0, L)
    return float(np.linalg.norm(L.reduced[0])), float(chi.theta[0]), float(chi.theta[1])


def harness_mixscale(n_list=(100, 10_000, 1_000_000), N: int = 2000, seed: int = 0,
                     kappa: float = 0.05, M: float = 3.0, threads: int = 1,
                     control: AtomicDistribution | None = LATTICE_CONTROL) -> dict:
    """Equidistribution of (L(n, a), chi) over random distributions: shortest
    vector length against the Haar law, character marginals against the
    uniform law, and a distance-covariance independence proxy."""
    ref = np.array([np.linalg.norm(haar_sample(2, seed + 5, i)[0].reduced[0]) for i in range(N)])
    ks_lat, ks_th1, ks_th2, dcov = [], [], [], []
    for n in n_list:
        rows = np.array(_pmap(_mix_draw, [(n, kappa, M, seed, i, None) for i in range(N)], threads))
        ks_lat.append(ks_two_sample(rows[:, 0], ref))
        ks_th1.append(float(kstest(rows[:, 1], "uniform").statistic))
        ks_th2.append(float(kstest(rows[:, 2], "uniform").statistic))
        dcov.append(distance_covariance(rows[:, 1], rows[:, 2]))
    trend = _trend_ok(ks_lat, CALIBRATION["limit_ks_inversion"])
    th_ok = max(ks_th1[-1], ks_th2[-1]) < CALIBRATION["mix_theta_ks"]
    dc_ok = dcov[-1] < CALIBRATION["mix_dcov"]
    metrics = {"ks_lattice": ks_lat, "ks_theta1": ks_th1, "ks_theta2": ks_th2,
               "dcov": dcov, "lattice_trend_ok": trend, "theta_ok": th_ok, "dcov_ok": dc_ok}
    if control is not None:
        w = _mix_draw((n_list[-1], kappa, M, seed, 0, control))[0]
        ctrl_ks = ks_two_sample(np.full(N, w), ref)
        metrics["control_lattice_ks"] = ctrl_ks
        metrics["control_fails_uniformity"] = ctrl_ks > CALIBRATION["rational_control_ks"]
    params = {"n_list": list(n_list), "N": N, "kappa": kappa, "M": M}
    return _report("mixscale", params, seed, metrics, trend and th_ok and dc_ok)
