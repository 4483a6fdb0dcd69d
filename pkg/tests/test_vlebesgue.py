import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from varhardy.grid import Grid, GridFunction, ball_indicator
from varhardy.vlebesgue import (ExponentFunction, MP0Context, NormSolverError, check_log_holder, conjugate,
                                kopaliani_ratio, luxemburg_norm, modular, moment_degree, norm_of_power,
                                parse_exponent, verify_holder_pair)

from conftest import random_signal

G = Grid(1, 4.0, 1 / 32)


def classical(f, p):
    return (np.sum(np.abs(f.values) ** p) * f.grid.cell_volume) ** (1 / p)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 1.0, 2.0, 3.7]))
def test_constant_exponent_matches_classical(seed, p):
    f = random_signal(G, np.random.default_rng(seed))
    assert luxemburg_norm(f, ExponentFunction.constant(G, p)) == pytest.approx(classical(f, p), rel=1e-10)


@given(st.integers(0, 2**32 - 1), st.sampled_from(["sin:1.5,0.4", "step:0.6,2.5", "logsmooth:1.2,1"]))
def test_unit_modular_at_norm(seed, spec):
    f = random_signal(G, np.random.default_rng(seed))
    p = parse_exponent(spec, G)
    assert modular(f, p, luxemburg_norm(f, p)) == pytest.approx(1.0, abs=1e-10)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 0.7, 2.0]))
def test_power_homogeneity(seed, s):
    f = random_signal(G, np.random.default_rng(seed))
    norm_of_power(f, parse_exponent("sin:1.5,0.4", G), s, rtol=1e-9)


def test_zero_and_scaling(g1):
    p = parse_exponent("sigmoid:1,2", g1)
    assert luxemburg_norm(g1.zeros(), p) == 0
    f = ball_indicator(g1, 0, 1)
    assert luxemburg_norm(f * 3.0, p) == pytest.approx(3 * luxemburg_norm(f, p), rel=1e-12)


def test_infinite_exponent_part(g1):
    v = np.where(g1.axis > 0, np.inf, 2.0)
    p = ExponentFunction(g1, v)
    f = GridFunction(g1, np.where(g1.axis > 0, 1.0, 0.0))
    # only the sup term contributes: rho(f/lam) = 1/lam
    assert luxemburg_norm(f, p) == pytest.approx(1.0, rel=1e-12)


def test_interval_norm(g1):
    chi = GridFunction(g1, ((g1.axis >= 0) & (g1.axis < 2)).astype(float))
    assert luxemburg_norm(chi, parse_exponent("const:1", g1)) == pytest.approx(2.0, abs=g1.h)
    assert luxemburg_norm(chi, parse_exponent("const:2", g1)) == pytest.approx(math.sqrt(2), abs=g1.h)


def test_conjugate():
    p = ExponentFunction(Grid(1, 1, 0.5), np.array([1.0, 2.0, 4.0, np.inf, 1.5]))
    assert np.allclose(conjugate(p).values, [np.inf, 2.0, 4 / 3, 1.0, 3.0])
    with pytest.raises(ValueError):
        conjugate(ExponentFunction.constant(Grid(1, 1, 0.5), 0.5))


def test_holder_ratio(g1, rng):
    p = parse_exponent("sin:2,0.5", g1)
    for _ in range(20):
        f, g = random_signal(g1, rng), random_signal(g1, rng)
        assert verify_holder_pair(f, g, p) <= 2


def test_log_holder_constants(g1):
    assert check_log_holder(parse_exponent("const:2", g1)).C0 == 0
    smooth = check_log_holder(parse_exponent("logsmooth:1.5,1", g1))
    jump = check_log_holder(parse_exponent("step:1.5,2.5", g1))
    assert smooth.C0 < jump.C0
    fine = check_log_holder(parse_exponent("step:1.5,2.5", g1.refine()))
    assert fine.C0 > jump.C0  # a jump is not log-Hoelder: constant grows as h shrinks


def test_kopaliani_constant_exponent(g1):
    p = parse_exponent("const:2", g1)
    assert kopaliani_ratio(p, [(0.0, 0.5), (1.0, 1.0)]) == pytest.approx(1.0, rel=1e-10)


def test_moment_degree():
    assert moment_degree(1, 1.0) == 0
    assert moment_degree(1, 0.5) == 1
    assert moment_degree(2, 0.5) == 2
    assert moment_degree(1, 1 / 3) == 2


def test_context_validation(g1):
    p = parse_exponent("const:2", g1)
    with pytest.raises(ValueError):
        MP0Context.create(p, p0=2.5, B=1)
    ctx = MP0Context.create(p, p0=0.5, B=3)
    assert (ctx.d, ctx.gamma) == (1, 3.0)
    assert ctx.dual_exponent.p_minus == pytest.approx(4 / 3)


def test_homogeneity_mismatch_detected(g1):
    f = ball_indicator(g1, 0, 1)
    with pytest.raises(NormSolverError):
        norm_of_power(f, parse_exponent("const:2", g1), 2.0, rtol=-1)
