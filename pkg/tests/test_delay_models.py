import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fow.delay_models import (
    DelayDistribution,
    InfeasibleFit,
    exponential_mixture_cdf,
    fit_rate_to_endpoints,
    make_rng,
)


def ks_distance(dist, samples):
    """Sup distance between the empirical and analytic P(delay <= t)."""
    finite = np.sort(samples[~np.isnan(samples)])
    n = len(samples)
    upper = np.arange(1, len(finite) + 1) / n
    lower = np.arange(0, len(finite)) / n
    analytic = dist.cdf(finite)
    gap = max(np.max(np.abs(upper - analytic)), np.max(np.abs(analytic - lower))) if len(finite) else 0.0
    # beyond the last sample the empirical CDF is n_conv / n, the analytic one tends to p_conv
    return max(gap, abs(len(finite) / n - dist.p_conv))


def test_exponential_cdf_examples():
    d = DelayDistribution.exponential(0.18, 2.06)
    assert d.cdf(0.0) == 0.0
    assert d.cdf(1.0) == pytest.approx(0.18 * (1 - math.exp(-2.06)), abs=1e-15)
    assert d.cdf(1.0) == pytest.approx(0.157, abs=5e-4)


def test_cdf_rejects_negative_time():
    with pytest.raises(ValueError):
        DelayDistribution.exponential(0.2, 1.0).cdf(-0.01)


@pytest.mark.parametrize("t", [0.5, 1.0, 3.0])
def test_weibull_shape_one_is_exponential(t):
    w = DelayDistribution.weibull(0.3, 1.0, 2.5)
    e = DelayDistribution.exponential(0.3, 1 / 2.5)
    assert w.cdf(t) == pytest.approx(e.cdf(t), rel=1e-14)


@pytest.mark.parametrize(
    "ctor",
    [
        lambda: DelayDistribution.exponential(1.2, 1.0),
        lambda: DelayDistribution.exponential(0.2, 0.0),
        lambda: DelayDistribution.weibull(0.2, -1.0, 1.0),
        lambda: DelayDistribution("zero_inflated_gamma", 0.2),
        lambda: DelayDistribution("empirical_histogram", 0.5, bin_edges=(0.0, 1.0), bin_masses=(0.4,)),
        lambda: DelayDistribution.histogram([0.5, 1.0], [0.1]),
    ],
)
def test_invalid_parameters(ctor):
    with pytest.raises(ValueError):
        ctor()


def test_histogram_is_piecewise_linear():
    d = DelayDistribution.histogram([0.0, 1.0, 3.0], [0.1, 0.2])
    assert d.p_conv == pytest.approx(0.3)
    assert d.cdf(0.5) == pytest.approx(0.05)
    assert d.cdf(2.0) == pytest.approx(0.2)
    assert d.cdf(10.0) == pytest.approx(0.3)


def test_sample_p_conv_zero_never_converts():
    d = DelayDistribution.exponential(0.0, 1.0)
    assert np.isnan(d.sample(make_rng(1), 1000)).all()
    assert d.sample_delay(make_rng(2)) is None


def test_sample_mean_matches_analytic():
    rate = 1.7
    x = DelayDistribution.exponential(1.0, rate).sample(make_rng(3), 100_000)
    se = (1 / rate) / math.sqrt(len(x))
    assert abs(x.mean() - 1 / rate) < 3 * se


def test_sampling_is_deterministic():
    d = DelayDistribution.weibull(0.4, 0.8, 2.0)
    a = d.sample(make_rng(7, 0, 3), 500)
    b = d.sample(make_rng(7, 0, 3), 500)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(np.nan_to_num(a), np.nan_to_num(d.sample(make_rng(7, 0, 4), 500)))


@pytest.mark.parametrize(
    "dist",
    [
        DelayDistribution.exponential(0.18, 2.06),
        DelayDistribution.weibull(0.3, 0.7, 1.5),
        DelayDistribution.weibull(0.9, 2.5, 3.0),
        DelayDistribution.histogram_from_cdf(
            exponential_mixture_cdf([0.16, 0.06], [3.0, 0.05]),
            np.concatenate([np.arange(0, 14, 0.05), np.arange(14, 181, 1.0)]),
        ),
    ],
    ids=["exponential", "weibull-k07", "weibull-k25", "histogram"],
)
def test_ks_distance_at_1e5_samples(dist):
    samples = dist.sample(make_rng(11), 100_000)
    assert ks_distance(dist, samples) <= 0.01


params = st.tuples(
    st.floats(0.01, 1.0),
    st.sampled_from(["exp", "weibull"]),
    st.floats(0.05, 5.0),
    st.floats(0.2, 4.0),
)


def _build(p):
    p_conv, fam, a, b = p
    if fam == "exp":
        return DelayDistribution.exponential(p_conv, a)
    return DelayDistribution.weibull(p_conv, b, a)


@given(params)
def test_cdf_monotone_and_bounded(p):
    d = _build(p)
    t = np.linspace(0.0, 4 * 7.0, 1000)
    c = d.cdf(t)
    assert c[0] == 0.0
    assert np.all(np.diff(c) >= 0)
    assert np.all(c <= d.p_conv + 1e-15)


@given(st.floats(0.01, 1.0), st.floats(0.05, 5.0))
def test_exponential_cdf_concave(p_conv, rate):
    c = DelayDistribution.exponential(p_conv, rate).cdf(np.linspace(0.01, 10.0, 500))
    assert np.all(np.diff(c, 2) <= 1e-15)


def test_fit_rate_to_paper_endpoints():
    p_conv, rate = fit_rate_to_endpoints(0.157, 0.180, 1.0, 7.0)
    assert rate == pytest.approx(2.06, abs=0.01)
    assert p_conv == pytest.approx(0.180, abs=1e-3)
    d = DelayDistribution.exponential(p_conv, rate)
    assert abs(d.cdf(1.0) - 0.157) < 1e-9
    assert abs(d.cdf(7.0) - 0.180) < 1e-9


def test_fit_rejects_linear_boundary():
    with pytest.raises(InfeasibleFit, match="no feasible rate"):
        fit_rate_to_endpoints(0.18 / 7, 0.18, 1.0, 7.0)
    with pytest.raises(InfeasibleFit):
        fit_rate_to_endpoints(0.01, 0.18, 1.0, 7.0)


@given(st.floats(0.05, 0.8), st.floats(0.05, 4.0))
def test_fit_roundtrip(p_conv, rate):
    d = DelayDistribution.exponential(p_conv, rate)
    ps, pl = d.cdf(1.0), d.cdf(7.0)
    if not ps < pl:
        return  # saturated: the ratio is 1 to machine precision
    fp, fr = fit_rate_to_endpoints(ps, pl, 1.0, 7.0)
    fitted = DelayDistribution.exponential(min(fp, 1.0), fr)
    assert abs(fitted.cdf(1.0) - ps) < 1e-9
    assert abs(fitted.cdf(7.0) - pl) < 1e-9


def test_dict_roundtrip_and_mixture_form():
    for d in (DelayDistribution.exponential(0.2, 1.3), DelayDistribution.weibull(0.3, 0.8, 2.0),
              DelayDistribution.histogram([0, 1, 2], [0.1, 0.05])):
        assert DelayDistribution.from_dict(d.to_dict()) == d
    mix = DelayDistribution.from_dict(
        {"family": "empirical_histogram", "mixture": {"weights": [0.5, 0.5], "rates": [3.0, 0.3]},
         "bin_edges": list(np.arange(0, 60.5, 0.5))},
        p_conv=1.0,
    )
    assert mix.p_conv == pytest.approx(1.0)
    assert mix.cdf(60.0) == pytest.approx(1.0)
