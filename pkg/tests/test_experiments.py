import math

import numpy as np
import pytest

from edgelab.atoms import validate
from edgelab.ensemble import ks_two_sample
from edgelab.errors import EmptySample, RejectionBudget, ValidationError
from edgelab.experiments import (GOLDEN, LATTICE_CONTROL, _scaled_error, _trend_ok, distance_covariance,
                                 draw_parameters, error_ensemble, harness_diophantine, harness_joint,
                                 harness_limit, harness_mixscale, report_json)
from edgelab.limitlaw import sample_limit_ensemble


def test_ks_examples():
    assert ks_two_sample([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert ks_two_sample([0.0], [1.0]) == 1.0
    assert ks_two_sample([0.0, 1.0], [0.5]) == 0.5
    with pytest.raises(EmptySample):
        ks_two_sample([], [1.0])


def test_ks_self_split_calibration():
    rng = np.random.default_rng(0)
    N = 200
    q99 = 1.63 * math.sqrt(2 / N)
    below = sum(ks_two_sample(rng.standard_normal(N), rng.standard_normal(N)) < q99 for _ in range(100))
    assert below >= 99


def test_draw_parameters_contract():
    kappa, M = 0.05, 3.0
    for i in range(50):
        D = draw_parameters(2, kappa, M, seed=3, index=i)
        validate(D.atoms, D.probs)
        assert D.probs.min() >= kappa
        assert np.diff(D.atoms).min() >= kappa - 1e-12
        assert np.abs(D.atoms).max() <= M
    a, b = draw_parameters(3, seed=8, index=2), draw_parameters(3, seed=8, index=2)
    assert np.array_equal(a.atoms, b.atoms) and np.array_equal(a.probs, b.probs)
    c = draw_parameters(3, seed=8, index=3)
    assert not np.array_equal(a.atoms, c.atoms)
    with pytest.raises(RejectionBudget):
        draw_parameters(2, kappa=0.4, max_tries=100)


def test_rational_draw_resonance_path():
    v = _scaled_error(LATTICE_CONTROL, 400, 0.0, "resonance", 0.05, 64.0)
    assert np.isfinite(v)
    with pytest.raises(ValidationError):
        _scaled_error(GOLDEN, 100, 0.0, "nope", 0.05, 64.0)


def test_error_ensemble_halves():
    N = 200
    a = error_ensemble(2, 500, 0.0, N, seed=4)
    b = error_ensemble(2, 500, 0.0, N, seed=4, offset=N)
    assert len(a) == N and not a.params["failures"]
    assert ks_two_sample(a.values, b.values) < 1.36 * math.sqrt(2 / N)
    again = error_ensemble(2, 500, 0.0, N, seed=4)
    assert np.array_equal(a.values, again.values)


def test_trend_rule():
    assert _trend_ok([0.3, 0.2, 0.1], 0.01)
    assert _trend_ok([0.3, 0.305, 0.1], 0.01)
    assert not _trend_ok([0.3, 0.32, 0.1], 0.01)
    assert not _trend_ok([0.3, 0.305, 0.2, 0.205], 0.01)


def test_distance_covariance():
    rng = np.random.default_rng(1)
    x, y = rng.uniform(size=500), rng.uniform(size=500)
    assert distance_covariance(x, y) < 0.03
    assert distance_covariance(x, x) > 0.1


def test_harness_limit_smoke():
    ref = sample_limit_ensemble(2, "X", None, 300, 2)
    r1 = harness_limit(2, (100, 200), N=60, seed=1, reference=ref)
    r2 = harness_limit(2, (100, 200), N=60, seed=1, reference=ref)
    assert report_json(r1) == report_json(r2)
    assert r1["harness"] == "limit" and len(r1["metrics"]["ks"]) == 2
    assert all(k > 0 for k in r1["metrics"]["ks"])
    assert isinstance(r1["pass"], bool)


def test_harness_diophantine_smoke():
    r = harness_diophantine(n_list=(100, 200), zmax=2.0)
    m = r["metrics"]
    assert len(m["M"]) == 2 and m["M_control"][1] > m["M_control"][0]
    with pytest.raises(ValidationError):
        harness_diophantine(R_exponent=1.0)


def test_harness_joint_precondition():
    with pytest.raises(ValidationError):
        harness_joint(n=2000, z1=0.5, z2=0.5)
    with pytest.raises(ValidationError):
        harness_joint(n=10, z1=0.0, z2=1.0)


def test_harness_mixscale_smoke():
    r = harness_mixscale(n_list=(100, 10_000), N=100, seed=2)
    m = r["metrics"]
    assert len(m["ks_lattice"]) == 2
    assert m["control_fails_uniformity"]
