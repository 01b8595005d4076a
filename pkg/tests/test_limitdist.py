import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from nodalcount.errors import ModelError
from nodalcount.geometry import shell_geometry
from nodalcount.limitdist import (
    bin_masses,
    closed_form_cdf2,
    closed_form_p2,
    fit_tail_exponent,
    histogram_distance,
    ho_moment,
    level_set_p2,
    quadrature_p,
    sample_limit_distribution,
    small_xi_asymptote,
    sphere_area,
    tail_report,
)
from nodalcount.model import ModelSpec
from nodalcount.spectra import Histogram

OSC2 = ModelSpec.oscillator([1, 1])
BOX2 = ModelSpec.cuboid([1, 1])
OSC3 = ModelSpec.oscillator([1, 1, 1])
QUAD = ModelSpec.custom([1, 1, 1], [(2, 0), (1, 1), (0, 2)])


@pytest.fixture(scope="module")
def osc3_sample():
    return sample_limit_distribution(shell_geometry(OSC3), 2_000_000, seed=11, bin_width=0.01)


def bin_average(f, a: float, b: float, order: int = 5) -> float:
    """Gauss-Legendre mean of ``f`` over ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    pts = 0.5 * (a + b) + 0.5 * (b - a) * x
    return float(np.dot(w, [f(p) for p in pts])) / 2


def bin_stderr(hist: Histogram) -> np.ndarray:
    p = hist.counts / hist.total
    return np.sqrt(p * (1 - p) / hist.total) / hist.bin_width


# -- closed forms -----------------------------------------------------------


def test_closed_form_examples():
    assert closed_form_p2(OSC2, 1e-12) == pytest.approx(1.0, abs=1e-11)
    assert closed_form_p2(BOX2, 0.5) == pytest.approx((1 - math.pi**2 / 16) ** -0.5, rel=1e-15)
    # direct evaluation gives 1.61553 (the commonly quoted 1.6105 is an arithmetic slip)
    assert closed_form_p2(BOX2, 0.5) == pytest.approx(1.61553, abs=1e-5)
    assert closed_form_p2(OSC2, 0.4) == pytest.approx(5**0.5, rel=1e-14)


def test_closed_form_errors():
    with pytest.raises(ModelError):
        closed_form_p2(OSC2, 0.6)
    with pytest.raises(ModelError):
        closed_form_p2(OSC3, 0.1)
    with pytest.raises(ModelError):
        closed_form_p2(QUAD, 0.1)


@pytest.mark.parametrize("model", [OSC2, BOX2, ModelSpec.oscillator([1, 3]), ModelSpec.cuboid([2, 0.5])])
def test_closed_form_is_normalised_and_matches_cdf(model):
    xc = shell_geometry(model).xi_crit
    mass, _ = integrate.quad(lambda x: closed_form_p2(model, x), 0, xc, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-8)
    for x in (0.05, 0.2, 0.9 * xc):
        ref, _ = integrate.quad(lambda t: closed_form_p2(model, t), 0, x)
        assert float(closed_form_cdf2(model, x)) == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("model", [OSC2, BOX2, ModelSpec.oscillator([1, 3])])
def test_level_set_density_matches_closed_form(model):
    geom = shell_geometry(model)
    for x in np.linspace(0.02, 0.98, 9) * geom.xi_crit:
        assert level_set_p2(geom, x) == pytest.approx(closed_form_p2(model, x), rel=1e-9)


def test_level_set_density_for_custom_model_matches_monte_carlo():
    geom = shell_geometry(QUAD)
    sample = sample_limit_distribution(geom, 1_000_000, seed=5, bin_width=0.02)
    h = sample.histogram
    se = bin_stderr(h)
    for i in range(int(0.8 * geom.xi_crit / h.bin_width)):
        a = h.left[i]
        ref = bin_average(lambda x: level_set_p2(geom, x), a, a + h.bin_width, order=8)
        # the MC uses the estimated V_gamma too, so only sampling noise remains
        assert abs(h.density[i] - ref) <= 4 * se[i] + 1e-3 * ref


# -- moments ----------------------------------------------------------------


def test_moment_examples():
    assert ho_moment(2, 1) == Fraction(1, 3)
    assert ho_moment(2, 2) == Fraction(2, 15)
    assert all(ho_moment(1, m) == 1 for m in range(6))
    assert ho_moment(3, 0) == 1


def test_moments_against_integrals_of_closed_form():
    for m in (1, 2, 3):
        val, _ = integrate.quad(lambda x: x**m * (1 - 2 * x) ** -0.5, 0, 0.5)
        assert val == pytest.approx(float(ho_moment(2, m)), rel=1e-9)


@pytest.mark.parametrize("s", [2, 3, 4])
def test_sampled_moments_match_exact_rationals(s):
    geom = shell_geometry(ModelSpec.oscillator([1.0 + 0.4 * l for l in range(s)]))
    sample = sample_limit_distribution(geom, 1_000_000, seed=s)
    for m in (1, 2):
        assert abs(sample.moment(m) - float(ho_moment(s, m))) <= 3 * sample.moment_stderr(m)


# -- tails ------------------------------------------------------------------


def test_tail_report_examples():
    r2 = tail_report(shell_geometry(OSC2))
    assert r2.prefactor == pytest.approx(2**-0.5, abs=1e-8)
    assert r2.exponent == -0.5 and r2.small_xi_constant == 1.0
    r3 = tail_report(shell_geometry(OSC3))
    assert r3.prefactor == pytest.approx(2 * math.pi / math.sqrt(3), rel=1e-7)
    assert r3.exponent == 0.0 and r3.small_xi_constant == 1.0
    r4 = tail_report(shell_geometry(ModelSpec.oscillator([1, 2, 3, 4])))
    assert r4.exponent == 0.5 and r4.small_xi_constant == 0.5
    assert r4.prefactor > 0


def test_tail_prefactor_reproduces_closed_form_divergence():
    for model in (OSC2, BOX2):
        geom = shell_geometry(model)
        r = tail_report(geom)
        eps = 1e-7
        exact = closed_form_p2(model, geom.xi_crit - eps)
        assert r.asymptote(geom.xi_crit - eps) == pytest.approx(exact, rel=1e-3)


def test_sphere_areas():
    assert sphere_area(0) == pytest.approx(2.0)
    assert sphere_area(1) == pytest.approx(2 * math.pi)
    assert sphere_area(2) == pytest.approx(4 * math.pi)


def test_small_xi_examples():
    assert small_xi_asymptote(3, math.exp(-5)) == pytest.approx(5.0, rel=1e-14)
    assert small_xi_asymptote(4, math.exp(-5)) == pytest.approx(12.5, rel=1e-14)
    assert small_xi_asymptote(2, 0.123) == 1.0
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ModelError):
            small_xi_asymptote(3, bad)


@settings(max_examples=30, deadline=None)
@given(w=st.lists(st.floats(0.3, 4.0), min_size=3, max_size=3))
def test_step_height_independent_of_frequencies(w):
    r = tail_report(shell_geometry(ModelSpec.oscillator(w)))
    assert r.prefactor == pytest.approx(2 * math.pi / math.sqrt(3), rel=1e-6)


# -- level-set quadrature ---------------------------------------------------


def test_quadrature_against_monte_carlo(osc3_sample):
    geom = shell_geometry(OSC3)
    h = osc3_sample.histogram
    i = int(round(0.1 / h.bin_width - 0.5))
    ref, _ = integrate.quad(lambda x: quadrature_p(geom, x), h.left[i], h.left[i] + h.bin_width, epsabs=1e-4)
    ref /= h.bin_width
    assert abs(ref - h.density[i]) <= 3 * bin_stderr(h)[i]
    # the point value at the bin centre is within the bin-averaging error too
    assert quadrature_p(geom, 0.1) == pytest.approx(h.density[i], rel=0.01)


def test_quadrature_step_height():
    geom = shell_geometry(OSC3)
    val = quadrature_p(geom, geom.xi_crit * (1 - 1e-3))
    assert val == pytest.approx(2 * math.pi / math.sqrt(3), rel=0.05)


def test_quadrature_small_xi_log_law():
    geom = shell_geometry(OSC3)
    diff = quadrature_p(geom, 1e-6) - quadrature_p(geom, 1e-4)
    assert diff == pytest.approx(math.log(100), rel=0.15)


def test_quadrature_is_frequency_independent():
    a = quadrature_p(shell_geometry(OSC3), 0.15)
    b = quadrature_p(shell_geometry(ModelSpec.oscillator([1, 2, 5])), 0.15)
    c = quadrature_p(shell_geometry(ModelSpec.cuboid([1, 1, 1])), 0.15)
    d = quadrature_p(shell_geometry(ModelSpec.cuboid([2, 1, 0.7])), 0.15)
    assert a == pytest.approx(b, rel=0.01)
    assert c == pytest.approx(d, rel=0.01)


def test_quadrature_errors():
    geom = shell_geometry(OSC3)
    with pytest.raises(ModelError):
        quadrature_p(geom, geom.xi_crit * (1 - 1e-8))
    with pytest.raises(ModelError):
        quadrature_p(geom, 0.3)
    with pytest.raises(ModelError):
        quadrature_p(shell_geometry(OSC2), 0.1)


def test_quadrature_for_custom_three_dimensional_model():
    cubic = ModelSpec.custom([1, 0.5, 2, 1], [(3, 0, 0), (1, 1, 1), (0, 3, 0), (0, 0, 3)])
    geom = shell_geometry(cubic)
    sample = sample_limit_distribution(geom, 1_000_000, seed=2, bin_width=0.02)
    h = sample.histogram
    i = int(0.4 * geom.xi_crit / h.bin_width)
    ref = bin_average(lambda x: quadrature_p(geom, x), h.left[i], h.left[i] + h.bin_width, order=3)
    assert abs(ref - h.density[i]) <= 4 * bin_stderr(h)[i] + 0.01 * ref


# -- Monte-Carlo sampler ----------------------------------------------------


def test_sampler_deterministic_across_workers():
    geom = shell_geometry(OSC3)
    a = sample_limit_distribution(geom, 300_000, seed=3, chunk=1 << 16, workers=1)
    b = sample_limit_distribution(geom, 300_000, seed=3, chunk=1 << 16, workers=4)
    np.testing.assert_array_equal(a.histogram.counts, b.histogram.counts)
    np.testing.assert_array_equal(a.power_sums, b.power_sums)
    assert a.histogram.total == 300_000


def test_sampler_support_is_bounded(osc3_sample):
    geom = shell_geometry(OSC3)
    h = osc3_sample.histogram
    assert h.counts[h.left >= geom.xi_crit + 3 * h.bin_width].sum() == 0


def test_sampler_frequency_independence(osc3_sample):
    other = sample_limit_distribution(shell_geometry(ModelSpec.oscillator([1, 2, 5])), 2_000_000, seed=12, bin_width=0.01)
    a, b = osc3_sample.histogram, other.histogram
    n = max(a.n_bins, b.n_bins)
    a, b = a.pad_to(n), b.pad_to(n)
    se = np.sqrt(bin_stderr(a) ** 2 + bin_stderr(b) ** 2)
    assert np.all(np.abs(a.density - b.density) <= 4 * se + 1e-12)


def test_cuboid_side_independence():
    a = sample_limit_distribution(shell_geometry(ModelSpec.cuboid([1, 1, 1])), 1_000_000, seed=1, bin_width=0.02)
    b = sample_limit_distribution(shell_geometry(ModelSpec.cuboid([2, 1, 0.7])), 1_000_000, seed=2, bin_width=0.02)
    ha, hb = a.histogram, b.histogram
    n = max(ha.n_bins, hb.n_bins)
    ha, hb = ha.pad_to(n), hb.pad_to(n)
    se = np.sqrt(bin_stderr(ha) ** 2 + bin_stderr(hb) ** 2)
    assert np.all(np.abs(ha.density - hb.density) <= 4 * se + 1e-12)


def test_planar_density_increases():
    geom = shell_geometry(OSC2)
    h = sample_limit_distribution(geom, 2_000_000, seed=4, bin_width=0.01).histogram
    keep = h.left + h.bin_width <= geom.xi_crit
    d, se = h.density[keep], bin_stderr(h)[keep]
    drops = d[1:] - d[:-1]
    assert np.all(drops >= -3 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2))


@pytest.mark.parametrize("s", [3, 4])
def test_higher_dimensional_density_mostly_decreases(s, osc3_sample):
    if s == 3:
        h = osc3_sample.histogram
    else:
        h = sample_limit_distribution(shell_geometry(ModelSpec.oscillator([1, 2, 3, 4])), 2_000_000, seed=6, bin_width=0.005).histogram
    xc = shell_geometry(ModelSpec.oscillator([1] * s)).xi_crit
    keep = h.left + h.bin_width <= xc
    d, se = h.density[keep], bin_stderr(h)[keep]
    rises = (d[1:] - d[:-1]) > 3 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
    assert rises.mean() < 0.01


def test_sampler_rejects_zero_samples():
    with pytest.raises(ValueError):
        sample_limit_distribution(shell_geometry(OSC2), 0)


# -- comparison helpers -----------------------------------------------------


def test_distance_of_law_to_itself_is_zero():
    h = Histogram(0.01)
    h.add(np.linspace(0.0, 0.499, 1000))
    masses = h.counts / h.total
    d = histogram_distance(h, masses, 0.5)
    assert d["sup_norm"] == 0.0 and d["l1"] == 0.0
    assert d["bins"] == h.n_bins - 5


def test_bin_masses_sum_to_one():
    h = Histogram(0.01).add([0.499])
    m = bin_masses(lambda x: closed_form_cdf2(OSC2, x), h.pad_to(60))
    assert m.sum() == pytest.approx(1.0, abs=1e-15)


def test_tail_fit_recovers_a_known_power():
    # density proportional to (1/2 - xi)^0.5 on [0, 1/2): cdf 1 - (1 - 2 xi)^1.5
    rng = np.random.default_rng(0)
    u = rng.random(3_000_000)
    xi = 0.5 * (1 - (1 - u) ** (1 / 1.5))
    h = Histogram(0.0005).add(xi)
    assert fit_tail_exponent(h, 0.5) == pytest.approx(0.5, abs=0.05)
