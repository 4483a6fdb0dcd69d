import numpy as np
import pytest
from hypothesis import given, strategies as st

from varhardy.grid import (Grid, GridFunction, ScaleLadder, ball_indicator, convolve_at_scale,
                           convolve_oracle, dumps_csv, integrate, loads_csv)
from varhardy.smoothmax import unit_bump

from conftest import random_signal


def test_grid_rejects_bad_shapes():
    with pytest.raises(ValueError):
        Grid(3, 1.0, 0.5)
    with pytest.raises(ValueError):
        Grid(1, 1.0, 0.3)


def test_grid_counts(g1, g2):
    assert g1.n == 257 and g1.shape == (257,)
    assert g2.shape == (33, 33)
    assert g2.cell_volume == pytest.approx(1 / 64)


def test_integrate_constant(g1):
    f = GridFunction(g1, np.ones(g1.shape))
    assert integrate(f) == pytest.approx(g1.n * g1.h)


def test_ball_indicator_degenerate_snaps(g1):
    chi = ball_indicator(g1, 0.01, 1e-6)
    assert chi.values.sum() == 1


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_convolution_matches_oracle(seed, dim):
    g = Grid(dim, 1.0, 1 / 8)
    f = random_signal(g, np.random.default_rng(seed), support=2.0)
    phi = unit_bump(dim)
    for t in (1 / 16, 0.25, 1.0):
        fast = convolve_at_scale(f, phi, t).values
        slow = convolve_oracle(f, phi, t).values
        assert np.allclose(fast, slow, rtol=1e-12, atol=1e-12)


def test_convolution_preserves_mass_in_interior(g1):
    phi = unit_bump(1)
    f = ball_indicator(g1, 0, 1)
    out = convolve_at_scale(f, phi, 0.5)
    assert integrate(out) == pytest.approx(integrate(f), rel=1e-3)


def test_ladder():
    lad = ScaleLadder(1 / 32, 4.0)
    assert lad.scales[0] == 1 / 32 and lad.scales[-1] == 4.0 and len(lad) == 8
    assert len(ScaleLadder(1, 4, refine=2)) == 5
    with pytest.raises(ValueError):
        ScaleLadder(0.3, 0.4)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_csv_roundtrip(seed, dim):
    g = Grid(dim, 1.0, 0.25)
    f = GridFunction(g, np.random.default_rng(seed).standard_normal(g.shape))
    back = loads_csv(dumps_csv(f))
    assert back.grid == g
    assert np.array_equal(back.values, f.values)
