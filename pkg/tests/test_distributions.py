import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crossderiv.distributions import (
    Gaussian,
    ProductDistribution,
    RandomStream,
    Uniform,
    cdf,
    parse_distribution,
    pdf,
    quantile,
    sample_matrix,
    uniform_substreams,
)
from crossderiv.errors import DomainError, ParameterError
from oracles import normal_quantile_bisect, star_discrepancy


def test_sample_matrix_uniform_in_support():
    X = sample_matrix(ProductDistribution.iid(Uniform(0, 1), 2), 3, RandomStream(7))
    assert X.shape == (3, 2)
    assert np.all((X > 0) & (X < 1))


def test_gaussian_sample_mean():
    X = sample_matrix(ProductDistribution((Gaussian(0, 1),)), 10**5, RandomStream(1))
    assert abs(X.mean()) < 3 / math.sqrt(10**5)


def test_sobol_beats_pseudo_discrepancy():
    n = 8
    wins = 0
    for seed in range(20):
        qmc_pts = RandomStream(seed, "sobol").uniform(n, 2)
        mc_pts = RandomStream(seed, "pseudo").uniform(n, 2)
        wins += star_discrepancy(qmc_pts) < star_discrepancy(mc_pts)
    assert wins >= 17


def test_sobol_first_points_form_a_net():
    # each of the 8 points sits in its own 1/8 strip per coordinate
    u = RandomStream(3, "sobol").uniform(8, 3)
    for k in range(3):
        assert len(set((u[:, k] * 8).astype(int))) == 8


def test_distribution_function_examples():
    assert cdf(Uniform(-math.pi, math.pi), 0.0) == pytest.approx(0.5)
    assert pdf(Uniform(0, 1), 0.3) == 1.0
    assert float(quantile(Gaussian(0, 1), 0.975)) == pytest.approx(normal_quantile_bisect(0.975), abs=1e-9)
    assert float(quantile(Gaussian(0, 1), 0.975)) == pytest.approx(1.959964, abs=1e-5)


def test_uniform_pdf_zero_outside():
    assert pdf(Uniform(0, 1), 1.5) == 0.0
    assert pdf(Uniform(0, 1), -0.1) == 0.0


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5, float("nan")])
def test_quantile_domain_error(p):
    with pytest.raises(DomainError):
        quantile(Uniform(0, 1), p)
    with pytest.raises(DomainError):
        quantile(Gaussian(0, 1), p)


def test_invalid_marginals():
    with pytest.raises(ParameterError):
        Uniform(1, 1)
    with pytest.raises(ParameterError):
        Gaussian(0, 0)
    with pytest.raises(ParameterError):
        ProductDistribution(())


@pytest.mark.parametrize("m", [Uniform(-2, 3), Gaussian(1, 2), Gaussian(0, 1)])
def test_round_trip(m):
    p = RandomStream(5).uniform(1000, 1)[:, 0]
    assert np.max(np.abs(m.cdf(m.quantile(p)) - p)) <= 1e-10


def test_gaussian_matches_erf_oracle():
    m = Gaussian(0, 1)
    for p in (0.01, 0.2, 0.5, 0.8, 0.999):
        assert float(m.quantile(p)) == pytest.approx(normal_quantile_bisect(p), abs=1e-9)


@pytest.mark.parametrize("m", [Uniform(0, 2), Gaussian(0, 1)])
def test_kolmogorov_smirnov(m):
    n = 10**5
    x = np.sort(sample_matrix(ProductDistribution((m,)), n, RandomStream(11))[:, 0])
    F = m.cdf(x)
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(n) / n
    ks = max(np.max(ecdf_hi - F), np.max(F - ecdf_lo))
    assert ks < 1.63 / math.sqrt(n)


def test_substream_independence():
    s = RandomStream(42)
    a = s.substream(0).uniform(10**4, 1)[:, 0]
    b = s.substream(1).uniform(10**4, 1)[:, 0]
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02
    c = RandomStream(42, "sobol")
    a = c.substream(0).uniform(10**4, 1)[:, 0]
    b = c.substream(1).uniform(10**4, 1)[:, 0]
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02


@pytest.mark.parametrize("kind", ["pseudo", "sobol"])
def test_stream_reproducible(kind):
    a = RandomStream(9, kind, (2, 3)).uniform(50, 4)
    b = RandomStream(9, kind).substream(2).substream(3).uniform(50, 4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, RandomStream(9, kind, (2, 4)).uniform(50, 4))


@pytest.mark.parametrize("kind", ["pseudo", "sobol"])
def test_uniform_substreams_matches_individual(kind):
    s = RandomStream(4, kind)
    stacked = uniform_substreams(s, 6, 5, 3)
    for i in range(6):
        assert np.array_equal(stacked[i], s.substream(i).uniform(5, 3))


def test_parse_distribution_literals():
    dist = parse_distribution("uniform(-pi,pi), gaussian(0,1),uniform(0, 2*pi)")
    assert dist.d == 3
    assert dist.marginals[0] == Uniform(-math.pi, math.pi)
    assert dist.marginals[1] == Gaussian(0.0, 1.0)
    assert dist.marginals[2] == Uniform(0.0, 2 * math.pi)
    assert parse_distribution(dist.literal()) == dist
    for bad in ("beta(1,2)", "uniform(0)", "uniform(0,1) gaussian(0,1)", "uniform(a,b)"):
        with pytest.raises(ParameterError):
            parse_distribution(bad)


@given(st.floats(-50, 50), st.floats(0.01, 50), st.floats(1e-6, 1 - 1e-6))
def test_property_cdf_monotone_and_round_trip(a, width, p):
    m = Uniform(a, a + width)
    assert abs(float(m.cdf(m.quantile(p))) - p) <= 1e-10
    g = Gaussian(a, width)
    assert abs(float(g.cdf(g.quantile(p))) - p) <= 1e-10
    xs = np.linspace(a - width, a + 2 * width, 50)
    assert np.all(np.diff(m.cdf(xs)) >= 0) and np.all(np.diff(g.cdf(xs)) >= 0)
    inner = np.linspace(a, a + width, 12)[1:-1]
    assert np.all(m.pdf(inner) > 0)


def test_contains_is_open_support():
    dist = ProductDistribution.iid(Uniform(0, 1), 2)
    assert dist.contains([[0.5, 0.5], [0.0, 0.5], [0.5, 1.0]]).tolist() == [True, False, False]
