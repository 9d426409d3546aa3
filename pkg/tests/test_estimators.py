import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fow.core_types import LabeledExample, WindowSpec
from fow.delay_models import DelayDistribution
from fow.estimators import (
    CLIP,
    InsufficientData,
    Kind,
    TrainingSettings,
    UntrainedMethod,
    interp_method,
    train_bucket,
    train_method,
    train_methods,
    train_mtml_base,
    train_seven_head,
)
from fow.interpolation import AlphaDesign
from fow.simulation import Drift, StreamConfig, generate_stream

W = WindowSpec(1.0, 7.0, 7.0)
KINDS = [k.value for k in Kind]


def stationary(rates=(0.1, 0.3), p=(0.2, 0.5), days=40, per_day=5000, seed=3):
    delays = tuple(DelayDistribution.exponential(1.0, r) for r in rates)
    cfg = StreamConfig(len(rates), days, per_day, tuple(p), delays, Drift(), seed)
    return cfg, generate_stream(cfg)


@pytest.fixture(scope="module")
def big():
    return stationary(rates=(2.06, 0.6), p=(0.18, 0.4))


@pytest.fixture(scope="module")
def small():
    cfg = StreamConfig(4, 30, 400, (0.1, 0.2, 0.3, 0.4), (DelayDistribution.exponential(1, 1.0),) * 4,
                       Drift("sinusoid", 0.3, 14.0), 9)
    return generate_stream(cfg)


def ex(seg, label, i=0):
    return LabeledExample(i, seg, label, False)


def test_train_bucket_examples():
    m = train_bucket([ex(0, True), ex(0, False), ex(0, False)], smoothing=1.0, prior=0.2)
    assert m.predict(0) == pytest.approx(0.3)
    m = train_bucket([], smoothing=1.0, prior=0.2, num_segments=3)
    assert m.values.tolist() == [0.2, 0.2, 0.2]
    m = train_bucket([ex(1, i < 5) for i in range(10)], smoothing=0.0, prior=0.9)
    assert m.predict(1) == 0.5
    assert m.predict(0) == 0.9


def test_bucket_clips():
    m = train_bucket([ex(0, True)] * 10, smoothing=0.0, prior=0.5)
    assert m.predict(0) == 1 - CLIP


def test_mtml_base_matches_oracle(big):
    cfg, log = big
    base = train_mtml_base(log, 40.0, W, TrainingSettings(2.0, None, 0.3))
    for s, d in enumerate(cfg.delays):
        truth = d.with_p_conv(cfg.base_p_conv[s])
        assert base.short.values[s] == pytest.approx(truth.cdf(1.0), abs=0.01)
        assert base.end_values()[s] == pytest.approx(truth.cdf(7.0), abs=0.01)


def test_mtml_base_needs_matured_data(small):
    with pytest.raises(InsufficientData):
        train_mtml_base(small, 6.0, W)
    with pytest.raises(InsufficientData):
        train_mtml_base(small.select(small.day > 20), 25.0, W)


def test_conditional_head_floor_when_everyone_converts_early():
    fast = DelayDistribution.histogram([0.0, 0.5], [1.0])
    cfg = StreamConfig(1, 20, 500, (0.5,), (fast,), Drift(), 1)
    base = train_mtml_base(generate_stream(cfg), 20.0, W)
    assert base.cond.values[0] == CLIP


def test_training_is_deterministic(small):
    a = train_methods(KINDS, small, 25.0, W)
    b = train_methods(KINDS, small, 25.0, W)
    for k in KINDS:
        for t in range(1, 8):
            np.testing.assert_array_equal(a[k].predict_segments(t), b[k].predict_segments(t))


def test_endpoint_identities(small):
    m = train_methods(KINDS, small, 25.0, W, designs={"linear": AlphaDesign("linear", 1 / 6)})
    p1, p7 = m["P1D"].predict_segments(1.0), m["P7D"].predict_segments(7.0)
    for k in ("INTERP_LINEAR", "INTERP_RATIONAL", "INTERP_EXP"):
        np.testing.assert_array_equal(m[k].predict_segments(1.0), p1)
        np.testing.assert_array_equal(m[k].predict_segments(7.0), p7)
    # the default linear slope does not pin T_s by its formula; serving does
    lin = train_method("INTERP_LINEAR", small, 25.0, W, AlphaDesign("linear", 0.1))
    np.testing.assert_array_equal(lin.predict_segments(1.0), p1)


def test_dedicated_at_long_end_shares_the_base_tail(small):
    ded = train_method("DEDICATED", small, 25.0, W).per_window[7.0]
    base = train_mtml_base(small, 25.0, W)
    np.testing.assert_array_equal(ded.cond.values, base.cond.values)
    # its short head also waits t_long: events in [25 - 7 - 4, 25 - 7] with final 1-day labels
    rows = (small.day >= 14.0) & (small.day <= 18.0)
    y = small.window_labels(1.0)
    for s in range(4):
        sel = rows & (small.segment == s)
        assert ded.short.totals[s] == sel.sum()
        assert ded.short.positives[s] == (sel & y).sum()


def test_ndub_matches_oracle(big):
    cfg, log = big
    ndub = train_method("NDUB", log, 33.0, W, settings=TrainingSettings(2.0, None, 0.3))
    for t in (2.0, 4.0, 6.0):
        for s, d in enumerate(cfg.delays):
            truth = d.with_p_conv(cfg.base_p_conv[s]).cdf(t)
            assert ndub.predict_segments(t)[s] == pytest.approx(truth, abs=0.01)


def test_seven_head_pooling(small):
    s0 = TrainingSettings(2.0, 4.0, 0.0)
    indep = train_seven_head(small, 25.0, W, s0, 4)
    for j, d in enumerate(indep.head_days):
        one = train_seven_head(small, 25.0, WindowSpec(1.0, 7.0, 7.0), s0, 4)
        np.testing.assert_array_equal(one.heads[j], indep.heads[j])
    full = train_seven_head(small, 25.0, W, TrainingSettings(2.0, 4.0, 1.0), 4)
    assert np.allclose(full.heads, full.heads[0], rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        train_seven_head(small, 25.0, W, TrainingSettings(2.0, 4.0, 1.5), 4)


def test_untrained_window(small):
    ded = train_method("DEDICATED", small, 25.0, W)
    with pytest.raises(UntrainedMethod):
        ded.predict_segments(2.5)


def test_design_family_must_match_kind(small):
    with pytest.raises(ValueError):
        train_method("INTERP_EXP", small, 25.0, W, AlphaDesign("linear", 0.1))


def test_predict_single_event(small):
    m = train_method("INTERP_RATIONAL", small, 25.0, W)
    e = small.event(0)
    assert m.predict(e, 3.0) == m.predict_segments(3.0)[e.segment]


@pytest.fixture(scope="module")
def trained(small):
    return train_methods(KINDS, small, 25.0, W)


@settings(max_examples=40)
@given(st.sampled_from(["linear", "rational", "exponential"]), st.floats(0, 1))
def test_interp_bounds_and_monotone(trained, fam, u):
    lo, hi = {"linear": (0, 1 / 6), "rational": (0, 0.99), "exponential": (0, 5)}[fam]
    design = AlphaDesign(fam, lo + u * (hi - lo))
    m = interp_method(trained["P1D"].base, design, 1.0, 7.0)
    grid = np.linspace(1.0, 7.0, 61)
    preds = np.array([m.predict_segments(t) for t in grid])
    assert np.all(np.diff(preds, axis=0) >= 0)
    p1 = trained["P1D"].predict_segments(3.0)
    p7 = trained["P7D"].predict_segments(3.0)
    assert np.all(p1 <= preds + 1e-15) and np.all(preds <= p7 + 1e-15)


def test_all_predictions_clipped(trained):
    for m in trained.values():
        for t in range(1, 8):
            p = m.predict_segments(float(t))
            assert np.all(p >= CLIP) and np.all(p <= 1 - CLIP)
