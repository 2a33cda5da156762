import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laurent_lab.disorder import (
    Bernoulli,
    PointMass,
    Potential,
    PowerLaw,
    Uniform,
    dist_from_dict,
    sample_potential,
    sample_values,
    site_uniforms,
    truncate_potential,
)


def test_point_mass_zero():
    assert np.all(sample_potential(PointMass(0.0), (-5, 5), 1, 0).values == 0)


def test_bernoulli_certain():
    assert np.all(sample_potential(Bernoulli(1.0, 3.0), (-5, 5), 1, 0).values == 3.0)


def test_power_law_cdf_empirical():
    kappa = 0.5
    v = sample_potential(PowerLaw(kappa), (0, 99_999), 42, 0).values
    for eps in (0.01, 0.1, 0.5):
        p = eps ** kappa
        se = np.sqrt(p * (1 - p) / v.size)
        assert abs(np.mean(v < eps) - p) < 3 * se


@pytest.mark.parametrize("dist", [Uniform(2.0), Bernoulli(0.3, 1.5)])
def test_means_match(dist):
    v = sample_potential(dist, (0, 99_999), 9, 0).values
    assert abs(v.mean() - dist.mean) < 3 * v.std() / np.sqrt(v.size)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 2 ** 20), st.integers(-1000, 1000), st.integers(0, 40),
       st.integers(0, 40))
def test_site_values_independent_of_window(seed, index, a, pre, post):
    # a site's value does not depend on which interval requested it
    inner = site_uniforms(seed, index, (a, a + 3))
    outer = site_uniforms(seed, index, (a - pre, a + 3 + post))
    np.testing.assert_array_equal(outer[pre:pre + 4], inner)
    assert np.all((outer > 0) & (outer < 1))


def test_reproducible_and_index_sensitive():
    a = sample_potential(Uniform(), (-10, 10), 5, 3).values
    b = sample_potential(Uniform(), (-10, 10), 5, 3).values
    c = sample_potential(Uniform(), (-10, 10), 5, 4).values
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_sample_values_matches_single_draws():
    rows = sample_values(Uniform(), (-3, 3), 8, range(4))
    for i in range(4):
        np.testing.assert_array_equal(rows[i], sample_potential(Uniform(), (-3, 3), 8, i).values)


def test_truncate_example():
    pot = Potential((0, 2), np.array([0.5, 2.0, 0.01]), {}, 0, 0)
    # threshold 0.1 = c * C0 / L^b with c=0.25, C0=0.4, L=1
    np.testing.assert_allclose(truncate_potential(pot, 0.25, 0.4, 1, 2.0).values, [0.1, 0.1, 0.01])


def test_truncate_zero_stays_zero():
    pot = sample_potential(PointMass(0.0), (-4, 4), 0, 0)
    assert np.all(truncate_potential(pot, 0.25, 2.0, 4, 2.0).values == 0)


def test_truncate_reaches_threshold():
    pot = sample_potential(Uniform(), (-32, 32), 1, 0)
    t = truncate_potential(pot, 0.25, 2.3, 32, 2.0)
    cap = 0.25 * 2.3 / 32 ** 2
    assert np.all(t.values <= pot.values) and t.values.max() == pytest.approx(cap)


def test_truncate_rejects_bad_c():
    pot = sample_potential(Uniform(), (0, 3), 0, 0)
    with pytest.raises(ValueError):
        truncate_potential(pot, 0.5, 1.0, 3, 2.0)


def test_tilted_uniform_likelihood_ratio_unbiased():
    base = Uniform(1.0)
    prop = base.tilt_for_mean(0.05)
    assert prop.mean == pytest.approx(0.05, rel=1e-10)
    u = site_uniforms(3, 0, (0, 199_999))
    v = prop.ppf(u)
    w = np.exp(prop.log_likelihood_ratio(v))
    assert abs(w.mean() - 1) < 4 * w.std() / np.sqrt(w.size)
    assert abs(np.mean(w * (v < 0.1)) - 0.1) < 0.005


def test_tilt_extreme_target():
    prop = Uniform(1.0).tilt_for_mean(1e-7)
    assert prop.mean == pytest.approx(1e-7, rel=1e-6)


def test_dist_from_dict():
    assert dist_from_dict({"kind": "power_law", "kappa": 2}) == PowerLaw(2)
    with pytest.raises(ValueError):
        dist_from_dict({"kind": "gaussian"})
    with pytest.raises(ValueError):
        dist_from_dict({"kind": "bernoulli", "p": 0.0})


def test_potential_rows():
    pot = sample_potential(Uniform(), (-1, 1), 0, 0)
    assert [r[0] for r in pot.rows()] == [-1, 0, 1]
