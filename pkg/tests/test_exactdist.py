import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgelab.errors import BadInterval, Mismatch, TooLarge
from edgelab.exactdist import (brute_force_law, cdf_scaled, exact_law, interval_prob,
                               max_jump_scan)

from conftest import random_distribution


def test_dsym_n2(dsym):
    law = exact_law(dsym, 2)
    assert law.values.tolist() == [-2, -1, 0, 1, 2]
    assert np.allclose(law.masses, [1 / 16, 1 / 4, 3 / 8, 1 / 4, 1 / 16], atol=1e-16)
    assert cdf_scaled(law, dsym, 0.0) == pytest.approx(11 / 16)
    assert cdf_scaled(law, dsym, -10.0) == 0.0
    assert cdf_scaled(law, dsym, 10.0) == pytest.approx(1.0)
    scale = dsym.sigma * math.sqrt(2)
    assert interval_prob(law, dsym, -0.1 / scale, 0.1 / scale) == pytest.approx(3 / 8)
    assert interval_prob(law, dsym, -2 / scale, 2 / scale) == pytest.approx(1 - 2 / 16)
    assert interval_prob(law, dsym, 0.2 / scale, 0.8 / scale) == 0.0
    with pytest.raises(BadInterval):
        interval_prob(law, dsym, 1.0, 1.0)
    with pytest.raises(Mismatch):
        cdf_scaled(law, dsym, 0.0, n=3)


def test_rational_mass_oracle(dsym):
    p = [Fraction(1, 4), Fraction(1, 2), Fraction(1, 4)]
    masses = {}
    for i, j, k in product(range(3), repeat=3):
        v = (i - 1) + (j - 1) + (k - 1)
        masses[v] = masses.get(v, 0) + p[i] * p[j] * p[k]
    law = exact_law(dsym, 3)
    assert sum(masses.values()) == 1
    for v, m in zip(law.values, law.masses):
        assert m == pytest.approx(float(masses[int(round(v))]), rel=1e-15)


def test_n1(generic):
    law = exact_law(generic, 1)
    assert np.allclose(law.values, generic.atoms)
    assert np.allclose(law.masses, generic.probs)
    bf = brute_force_law(generic, 1)
    assert np.allclose(bf.masses, generic.probs)


def test_brute_force_matches(dsym, generic):
    for D in (dsym, generic):
        a = exact_law(D, 8, merge_tol=1e-12)
        b = brute_force_law(D, 8)
        assert a.values.size == b.values.size
        assert np.max(np.abs(a.values - b.values)) < 1e-12
        assert np.max(np.abs(a.masses - b.masses)) < 1e-13


def test_convolve_method(generic):
    a = exact_law(generic, 40)
    b = exact_law(generic, 40, method="convolve")
    assert a.values.size == b.values.size
    assert np.max(np.abs(a.masses - b.masses)) < 1e-13


def test_too_large(generic):
    with pytest.raises(TooLarge):
        exact_law(generic, 10_000, cap=1e6)
    with pytest.raises(TooLarge):
        brute_force_law(generic, 20)


def test_mass_conservation_large(generic):
    law = exact_law(generic, 4000)
    assert abs(math.fsum(law.masses) - 1) < 1e-10
    assert np.all(np.diff(law.values) > law.merge_tol)


def test_max_jump_scan(dsym, dirr):
    (n, v), = max_jump_scan(dsym, [2], window_z=10)
    assert v == pytest.approx(0.75)
    (n, v), = max_jump_scan(dirr, [1], window_z=10)
    assert v == pytest.approx(0.5)
    vals = [v for _, v in max_jump_scan(dirr, range(100, 1001, 100))]
    assert max(vals) / min(vals) <= 10


def test_csv_export(dsym, tmp_path):
    law = exact_law(dsym, 2)
    p = tmp_path / "law.csv"
    law.to_csv(p)
    data = p.read_bytes()
    assert b"\r" not in data
    lines = data.decode().splitlines()
    assert lines[0] == "value,mass" and len(lines) == 6
    back = np.loadtxt(p, delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 1], law.masses)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 60), z=st.floats(-3, 3))
def test_cdf_properties(seed, n, z):
    D = random_distribution(np.random.default_rng(seed), 2)
    law = exact_law(D, n)
    assert abs(math.fsum(law.masses) - 1) < 1e-12
    zs = np.sort(np.random.default_rng(seed).uniform(-4, 4, 50))
    F = cdf_scaled(law, D, zs)
    assert np.all(np.diff(F) >= -1e-15)
    # open interval plus the two endpoint masses plus complements is one
    z2 = z + 0.5
    scale = D.sigma * math.sqrt(n)
    inside = interval_prob(law, D, z, z2)
    left = cdf_scaled(law, D, z)
    right = 1 - cdf_scaled(law, D, z2) + law.masses[np.abs(law.values - z2 * scale) <= law.merge_tol].sum()
    assert inside + left + right == pytest.approx(1.0, abs=1e-12)
