import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from varhardy.grid import Grid, GridFunction, ScaleLadder, ball_indicator, integrate
from varhardy.smoothmax import (Factor, TestDictionary, bump_derivative, default_order, grand_max,
                                make_dictionary, nontangential_max, poisson_kernel, poisson_max,
                                poisson_semigroup_error, poisson_smooth, poisson_truncated_mass, radial_max,
                                tangential_max, truncated_radial_max, truncation_exponent, unit_bump)
from varhardy.vlebesgue import parse_exponent

from conftest import random_signal


@pytest.mark.parametrize("k", range(6))
def test_bump_derivatives_match_finite_differences(k):
    x = np.linspace(-0.9, 0.9, 37)
    e = 1e-5
    fd = (bump_derivative(k, x + e) - bump_derivative(k, x - e)) / (2 * e)
    exact = bump_derivative(k + 1, x)
    assert np.allclose(fd, exact, rtol=1e-6, atol=1e-6 * np.max(np.abs(exact)))


def test_bump_vanishes_outside():
    assert np.all(bump_derivative(3, np.array([-1.0, 1.0, 1.5, -7.0])) == 0)
    assert bump_derivative(0, np.array([0.0]))[0] == pytest.approx(math.exp(-1))


def test_profiles_live_in_seminorm_ball():
    D = make_dictionary(1, 5, ScaleLadder(1 / 32, 4))
    assert len(D.profiles) == 3 * 6
    for phi in D.profiles:
        assert phi.max_seminorm == pytest.approx(1.0, rel=1e-12)
    # derivative members integrate to zero, the base bump does not
    assert abs(D.profiles[1].integral) < 1e-12
    assert D.primary is D.profiles[0]


def test_dictionary_2d_members():
    D = make_dictionary(2, 4, ScaleLadder(0.25, 1), max_order=2)
    assert len(D.profiles) == 3 * 5


def test_dictionary_roundtrip(tmp_path):
    D = make_dictionary(1, 4, ScaleLadder(1 / 16, 2))
    path = tmp_path / "dict.json"
    D.save(path)
    back = TestDictionary.load(path)
    assert back.manifest_hash() == D.manifest_hash()


def test_dictionary_rejects_empty():
    with pytest.raises(ValueError):
        TestDictionary(3, (), ScaleLadder(1, 2))


def test_default_order():
    assert default_order(1, 0.5) == 5
    assert default_order(2, 0.45) == 8


def test_unit_bump_integral(g1):
    f = GridFunction(g1, np.ones(g1.shape))
    out = radial_max(f, unit_bump(1), ScaleLadder(0.5, 0.5))
    assert out.values[g1.n // 2] == pytest.approx(1.0, rel=1e-5)


@given(st.integers(0, 2**32 - 1))
def test_maximal_ordering(seed):
    g = Grid(1, 2.0, 1 / 16)
    f = random_signal(g, np.random.default_rng(seed))
    lad = ScaleLadder(g.h, 2.0)
    D = make_dictionary(1, 3, lad, max_order=2)
    rad = radial_max(f, D.primary, lad).values
    non = nontangential_max(f, D.primary, lad).values
    tan = tangential_max(f, D.primary, 2.0, lad).values
    assert np.all(non >= rad)
    assert np.all(tan >= rad)
    assert np.all(grand_max(f, D).values >= rad)


def test_tangential_large_T_is_radial(g1):
    f = ball_indicator(g1, 0, 1)
    lad = ScaleLadder(g1.h, 4)
    phi = unit_bump(1)
    assert np.array_equal(tangential_max(f, phi, 100.0, lad).values, radial_max(f, phi, lad).values)


def test_truncated_is_smaller(g1):
    f = ball_indicator(g1, 0.5, 1)
    lad = ScaleLadder(g1.h, 4)
    phi = unit_bump(1)
    L = truncation_exponent(1, 0.5)
    assert L == 8
    tr = truncated_radial_max(f, phi, 0.1, L, lad).values
    assert np.all(tr <= radial_max(f, phi, lad).values)
    with pytest.raises(ValueError):
        truncated_radial_max(f, phi, 0.6, L, lad)


def test_poisson_kernel_mass():
    # tail beyond the cut radius R is 1 - (2/pi) atan R in 1D and (1 + R^2)^(-1/2) in 2D
    assert 1 - poisson_truncated_mass(1) < 1e-6
    assert 1 - poisson_truncated_mass(2) == pytest.approx(1e-4, rel=1e-6)
    x = np.linspace(-2000, 2000, 400001)
    assert np.trapezoid(poisson_kernel(np.abs(x), 1.0, 1), x) == pytest.approx(1.0, abs=1e-3)


def test_poisson_semigroup():
    assert poisson_semigroup_error(0.5, 1.0) < 1e-6


def test_poisson_smoothing_of_constant():
    g = Grid(1, 64.0, 0.125)
    f = GridFunction(g, np.ones(g.shape))
    assert poisson_smooth(f, 0.25).values[g.n // 2] == pytest.approx(1.0, rel=1e-2)
    assert poisson_max(ball_indicator(g, 0, 1), ScaleLadder(0.125, 4)).sup() <= 1 + 1e-9
