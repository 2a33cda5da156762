import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laurent_lab.disorder import PointMass, PowerLaw, Uniform
from laurent_lab.errors import GapConstantMissing, SupportTooWide, WindowInvalid
from laurent_lab.groundstate import neumann_gap
from laurent_lab.lifshitz import (
    bump_derivative,
    bump_energy,
    bump_profile,
    bump_scaling,
    chain_check,
    double_log_fit,
    forward_difference,
    log_log_fit,
    lower_probe,
    measure_C0,
    neumann_tail_estimate,
    probe_length,
    temple_verify,
    upper_probe,
)
from laurent_lab.operator import IntegerSymbolSpec
from laurent_lab.symbol import Symbol, free_ids_closed

LAP = IntegerSymbolSpec((0.0,))


def test_double_log_exact_square_root():
    e = np.geomspace(0.01, 0.5, 12)
    fit = double_log_fit(e, np.exp(-e ** -0.5), b=2.0)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.relative_error < 1e-10


def test_double_log_constant_five():
    e = np.geomspace(1e-4, 1e-2, 10)
    fit = double_log_fit(e, -5 * e ** (-1 / 1.4), log_values=True)
    assert fit.slope == pytest.approx(-1 / 1.4, abs=0.05)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 2.0))
def test_double_log_recovers_planted_exponent(s):
    e = np.geomspace(1e-3, 0.5, 9)
    fit = double_log_fit(e, -(e ** -s), log_values=True)
    assert fit.slope == pytest.approx(-s, abs=1e-12)


def test_double_log_window_invalid():
    e = np.array([0.1, 0.2, 0.3])
    with pytest.raises(WindowInvalid):
        double_log_fit(e, [0.0, 0.1, 0.2])
    with pytest.raises(WindowInvalid):
        double_log_fit(e, [0.1, 0.5, 1.0])
    assert double_log_fit(e, [0.0, 0.1, 0.2], window=(0.15, 0.35)).n_points == 2


def test_free_curve_log_log_slope():
    s = Symbol.cosine_product([(0.0, 0.7)])
    e = np.geomspace(1e-6, 1e-3, 8)
    assert log_log_fit(e, free_ids_closed(s, e)).slope == pytest.approx(1 / 1.4, abs=0.02)


@pytest.fixture(scope="module")
def lap_c0():
    return measure_C0(LAP, [16, 32, 64, 128])


def test_temple_zero_potential(lap_c0):
    rep = temple_verify(LAP, PointMass(0.0), 32, 3, 0, lap_c0)
    assert rep.pass_rate == 1.0
    np.testing.assert_allclose(rep.min_form, 0.0, atol=1e-14)


def test_temple_point_mass_below_threshold(lap_c0):
    L = 32
    v = 0.1 * 0.25 * lap_c0 / L ** 2
    rep = temple_verify(LAP, PointMass(v), L, 2, 0, lap_c0)
    assert rep.pass_rate == 1.0
    assert rep.E0[0] == pytest.approx(v, abs=1e-12)
    assert rep.min_form[0] == pytest.approx(v)


def test_temple_uniform_all_pass(lap_c0):
    rep = temple_verify(LAP, Uniform(1.0), 64, 100, 1, lap_c0)
    assert rep.pass_rate == 1.0


def test_temple_requires_constant():
    with pytest.raises(GapConstantMissing):
        temple_verify(LAP, Uniform(1.0), 16, 1, 0, None)
    g, _ = neumann_gap(LAP, 16)
    with pytest.raises(GapConstantMissing):
        temple_verify(LAP, Uniform(1.0), 16, 1, 0, 2 * g * 16 ** 2)


def test_probe_length():
    assert probe_length(0.04, 1.0, 2.0, 1) == 5
    assert probe_length(100.0, 1.0, 2.0, 3) == 3


def test_upper_probe_trivial_limits():
    assert upper_probe(LAP, Uniform(1.0), [10.0], 1.0, 50, 0).rows[0].probability == 1.0
    assert upper_probe(LAP, PointMass(0.5), [0.4], 1.0, 50, 0).rows[0].probability == 0.0


def test_upper_probe_reference():
    # independent per-sample loop over hand-built Neumann Laplacians
    rep = upper_probe(LAP, Uniform(1.0), [0.4, 0.2, 0.1], 1.0, 2000, 5)
    assert [(r.L, r.hits) for r in rep.rows] == [(2, 830), (3, 36), (4, 0)]
    p = [r.probability for r in rep.rows]
    assert p[0] > p[1] > p[2]
    assert all(r.ci_low <= r.probability <= r.ci_high for r in rep.rows)


def test_probe_skips_beyond_cap():
    rep = upper_probe(LAP, Uniform(1.0), [0.4, 1e-4], 1.0, 5, 0, cap=50)
    assert len(rep.rows) == 1 and rep.skipped == [(1e-4, 100)]


def test_lower_probe_zero_potential():
    # gamma large enough that C3 / L^b drops below E
    rep = lower_probe(LAP, PointMass(0.0), [0.05, 0.02], 4.0, 3, 0)
    for r in rep.rows:
        assert r.dominance == 1.0
        assert rep.constant / r.L ** 2 < r.E and r.probability == 1.0


def test_lower_probe_power_law_reference():
    rep = lower_probe(LAP, PowerLaw(1.0), [0.4, 0.2, 0.1], 1.0, 2000, 5)
    assert all(r.dominance == 1.0 for r in rep.rows)
    assert [(r.L, r.hits, r.certificate_hits) for r in rep.rows] == [(2, 0, 0), (3, 0, 0), (4, 0, 0)]
    assert rep.constant == pytest.approx(6.4)


def test_bound_chain(lap_c0):
    for E in (0.05, 0.3, 1.0):
        assert chain_check(LAP, Uniform(1.0), 8, E, 100, 2, lap_c0).holds


def test_tail_estimate_matches_plain_sampling():
    tilted = neumann_tail_estimate(LAP, Uniform(1.0), [0.2], 1.0, 20000, 1)
    plain = neumann_tail_estimate(LAP, Uniform(1.0), [0.2], 1.0, 20000, 1, tilt=False)
    diff = abs(tilted.mean[0] - plain.mean[0])
    assert diff < 4 * np.hypot(tilted.stderr[0], plain.stderr[0])


def test_bump_profile_shape():
    x = np.array([-0.9, -0.75, -0.5, 0.0, 0.3, 0.5, 0.74, 0.75, 1.0])
    v = bump_profile(x)
    np.testing.assert_array_equal(v[[0, 1, 7, 8]], 0.0)
    np.testing.assert_array_equal(v[[2, 3, 4, 5]], 1.0)
    assert 0 < v[6] < 1


def test_bump_derivative_matches_finite_difference():
    x = np.linspace(0.52, 0.73, 7)
    h = 1e-6
    fd = (bump_profile(x + h) - bump_profile(x - h)) / (2 * h)
    np.testing.assert_allclose(bump_derivative(x, 1), fd, rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(bump_derivative(-x, 1), -fd, rtol=1e-5, atol=1e-8)


def test_bump_numerator_is_difference_norm():
    b = bump_energy(2, 64, check_formula=False)
    assert b.numerator == pytest.approx(np.sum(forward_difference(b.psi, 2) ** 2), rel=1e-12)


def test_bump_scaling_first_order():
    rep = bump_scaling(1, [64, 128, 256, 512, 1024])
    assert rep.slope == pytest.approx(-1.0, abs=0.1)
    scaled = rep.numerators * rep.Ls
    assert scaled.max() / scaled.min() < 1.1


def test_bump_formula_deviation_shrinks():
    devs = [bump_energy(2, L).diff_deviation for L in (64, 128, 256, 512)]
    assert all(b < a for a, b in zip(devs, devs[1:]))


def test_bump_support_too_wide():
    with pytest.raises(SupportTooWide):
        bump_energy(3, 4)
