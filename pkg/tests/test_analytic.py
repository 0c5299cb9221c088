import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sprintsim.analytic import (
    cooperativity4C,
    empty_cavity_t0,
    optimal_kappa_ex,
    optimal_reflection,
    polarization_impurity_estimate,
    reflected_purity,
    sprint_coefficients,
    summary,
)
from sprintsim.params import PhysicalParams

rates = st.floats(0.1, 200.0)


def test_empty_cavity_t0_values():
    assert empty_cavity_t0(40, 6.6) == pytest.approx(-0.71674, abs=1e-5)
    assert 1 - empty_cavity_t0(40, 6.6) ** 2 == pytest.approx(0.486, abs=1e-3)
    assert empty_cavity_t0(7.0, 7.0) == 0.0
    assert empty_cavity_t0(40, 0) == -1.0
    with pytest.raises(ValueError):
        empty_cavity_t0(0, 0)


def test_cooperativity():
    assert cooperativity4C(24, 3, 6.6, 40) == pytest.approx(8.24, abs=5e-3)
    assert cooperativity4C(0, 3, 6.6, 40) == 0.0
    assert cooperativity4C(48, 3, 6.6, 40) == pytest.approx(4 * cooperativity4C(24, 3, 6.6, 40))


def test_sprint_defaults():
    c = sprint_coefficients(PhysicalParams())
    assert c.r == pytest.approx(0.7655, abs=1e-4)
    assert c.R == pytest.approx(0.586, abs=1e-3)
    assert c.T == pytest.approx(0.0024, abs=1e-4)
    assert c.loss == pytest.approx(0.412, abs=1e-3)
    assert c.Gamma == pytest.approx(0.5 * c.four_c * 3.0)


def test_sprint_limits():
    p = PhysicalParams()
    c0 = sprint_coefficients(p, g=0.0)
    assert c0.r == 0.0 and c0.t == c0.t0
    big = sprint_coefficients(p, g=1e6)
    assert big.r == pytest.approx(40 / 46.6, rel=1e-9)


@given(rates, rates, st.floats(0.1, 20), st.floats(0.0, 100))
def test_coefficients_sum_to_one(kex, ki, gamma, g):
    c = sprint_coefficients(PhysicalParams(kappa_ex=kex, kappa_i=ki, gamma=gamma), g=g)
    assert c.R + c.T + c.loss == pytest.approx(1.0, abs=1e-12)
    assert c.r >= 0
    if kex >= ki:
        assert c.t0 <= 0


def test_optimal_coupling_values():
    assert optimal_kappa_ex(24, 3, 6.6) == pytest.approx(50.77, abs=5e-3)
    assert optimal_reflection(24, 3, 6.6) == pytest.approx(0.7699, abs=1e-4)
    assert optimal_kappa_ex(0, 3, 6.6) == 6.6


@given(st.floats(1.0, 100.0), st.floats(0.5, 10.0), st.floats(0.5, 20.0))
def test_optimum_is_r_equals_minus_t0(g, gamma, ki):
    kex = optimal_kappa_ex(g, gamma, ki)
    c = sprint_coefficients(PhysicalParams(g_mean=g, gamma=gamma, kappa_i=ki, kappa_ex=kex))
    assert c.r == pytest.approx(-c.t0, abs=1e-12)
    assert c.r == pytest.approx(optimal_reflection(g, gamma, ki), abs=1e-12)


def test_optimum_matches_grid_scan():
    grid = np.linspace(10, 120, 2201)
    R = [sprint_coefficients(PhysicalParams(kappa_ex=k)).R for k in grid]
    i = int(np.argmax(R))
    assert 0 < i < grid.size - 1
    assert abs(grid[i] - optimal_kappa_ex(24, 3, 6.6)) <= grid[1] - grid[0]
    d = np.diff(R)
    assert np.all(d[:i] > 0) and np.all(d[i:] < 0)


def test_polarization_estimate():
    assert polarization_impurity_estimate(1.45) == pytest.approx(0.025, abs=1e-3)
    assert polarization_impurity_estimate(2.0) == pytest.approx(0.0052, abs=1e-4)
    assert polarization_impurity_estimate(1e6) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        polarization_impurity_estimate(1.0)


def test_purity():
    assert reflected_purity(1) == 1.0
    assert reflected_purity(2) == pytest.approx(2 / 3)
    assert reflected_purity(10 ** 9) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        reflected_purity(0)


def test_summary_is_dimensionless():
    # scaling every rate leaves the dimensionless quantities unchanged
    a = summary(PhysicalParams())
    b = summary(PhysicalParams(g_mean=24 * 2 * math.pi, gamma=3 * 2 * math.pi, kappa_i=6.6 * 2 * math.pi,
                               kappa_ex=40 * 2 * math.pi))
    for key in ("4C", "t0", "r", "t", "R", "T"):
        assert a[key] == pytest.approx(b[key], rel=1e-12)
