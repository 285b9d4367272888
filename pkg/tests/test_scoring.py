import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsmgan.gan.training import ResidualRecord, ResidualSet
from rsmgan.mts import AnomalyWindow
from rsmgan.scoring import (
    METHODS,
    ThresholdSet,
    fit_thresholds,
    method_scores,
    score_series,
    score_step,
)


def thresholds(theta_b=1.0, theta_h=1.0, theta_latent=1.0, cut=0.0, **kw):
    return ThresholdSet(theta_b, theta_h, theta_latent, 1.0, 1.0, 1.0, 1.0, cut, **kw)


def residuals(context, latent=None, step_size=5, first_end=4):
    context = np.asarray(context, dtype=float)
    S = len(context)
    latent = np.zeros((S, 3)) if latent is None else np.asarray(latent, dtype=float)
    steps = np.arange(S)
    return ResidualSet(steps, first_end + step_size * steps, context, latent, step_size)


FOUR = np.array(
    [
        [0.9, 0.9, 0.9, 0.1],
        [0.9, 0.1, 0.9, 0.1],
        [0.9, 0.9, 0.1, 0.1],
        [0.1, 0.1, 0.1, 0.1],
    ]
)


def test_zero_residual_scores_zero():
    rec = ResidualRecord(0, 4, np.zeros((4, 4)), np.zeros(3))
    for m in METHODS:
        assert score_step(rec, m, thresholds()) == 0


def test_context_h_hand_case():
    rec = ResidualRecord(0, 4, FOUR, np.zeros(3))
    # row 0 has 3 of 4 broken (> 2): counted; rows 1 and 2 have 2: dropped
    assert score_step(rec, "context_h", thresholds(theta_b=0.5, theta_h=0.5)) == 3
    assert score_step(rec, "context_b", thresholds(theta_b=0.05, theta_h=0.05)) == 16
    assert score_step(rec, "context_b", thresholds(theta_b=0.5, theta_h=0.5)) == 7


def test_latent_b_and_combined():
    rec = ResidualRecord(0, 4, FOUR, np.array([2.0, 0.5, 3.0]))
    th = thresholds(theta_b=0.5, theta_h=0.5, theta_latent=1.0, max_train_context=6.0, max_train_latent=4.0)
    assert score_step(rec, "latent_b", th) == 2
    assert score_step(rec, "combined", th) == pytest.approx(0.5 * 3 / 6 + 0.5 * 2 / 4)


def test_unknown_method():
    with pytest.raises(ValueError):
        score_step(ResidualRecord(0, 4, FOUR, np.zeros(3)), "context_x", thresholds())


def test_threshold_invariants():
    with pytest.raises(ValueError):
        thresholds(theta_b=0.5, theta_h=0.6)
    with pytest.raises(ValueError):
        thresholds(cut=-1.0)


def test_score_series_expansion():
    ctx = np.zeros((6, 4, 4))
    ctx[3] = 5.0
    s = score_series(residuals(ctx), "context_b", thresholds(cut=0.0))
    assert s.flags.tolist() == [False, False, False, True, False, False]
    flags = s.point_flags(30)
    assert flags.sum() == 5
    assert np.flatnonzero(flags).tolist() == [15, 16, 17, 18, 19]
    assert not score_series(residuals(np.zeros((6, 4, 4))), "context_b", thresholds()).flags.any()


def test_monotone_scores_flag_suffix():
    ctx = np.stack([np.full((4, 4), v) for v in np.linspace(0, 2, 9)])
    s = score_series(residuals(ctx), "context_b", thresholds(theta_b=0.9, theta_h=0.9, cut=8))
    f = s.flags
    assert f.any() and np.all(f[np.argmax(f):])


def test_score_series_requires_order():
    r = residuals(np.zeros((3, 4, 4)))
    r.step_index = r.step_index[::-1].copy()
    with pytest.raises(ValueError):
        score_series(r, "context_b", thresholds())


def test_scores_csv(tmp_path):
    s = score_series(residuals(np.zeros((2, 4, 4))), "context_b", thresholds())
    s.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "step_index,raw_start,raw_end,score,flag,method"
    assert lines[1] == "0,0,4,0.0,0,context_b"


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), theta=st.floats(0.0, 1.0))
def test_monotone_and_h_le_b(seed, theta):
    rng = np.random.default_rng(seed)
    a = rng.random((1, 5, 5))
    a = (a + a.transpose(0, 2, 1)) / 2
    b = a + rng.random((1, 5, 5)) * 0.3
    lat = rng.random((1, 3))
    th = thresholds(theta, theta, theta)
    for m in ("latent_b", "context_b", "context_h"):
        assert method_scores(residuals(b, lat + 0.1), m, th)[0] >= method_scores(residuals(a, lat), m, th)[0]
    r = residuals(a, lat)
    assert method_scores(r, "context_h", th)[0] <= method_scores(r, "context_b", th)[0]


def test_zero_training_residuals_zero_thresholds():
    train = residuals(np.zeros((10, 4, 4)))
    with pytest.warns(UserWarning, match="no labeled validation"):
        th = fit_thresholds(train)
    assert th.theta_b == th.theta_h == th.theta_latent == th.eta996_context == 0.0
    assert th.beta_b == 1.0 and th.flag_threshold == 0.0


def test_percentile_of_uniform():
    rng = np.random.default_rng(0)
    train = residuals(rng.random((5000, 4, 4)), rng.random((5000, 3)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        th = fit_thresholds(train)
    assert abs(th.eta996_context - 0.996) < 0.01
    assert abs(th.eta996_latent - 0.996) < 0.01


def test_empty_grid():
    with pytest.raises(ValueError):
        fit_thresholds(residuals(np.zeros((3, 4, 4))), beta_grid=[])


def engineered_validation():
    """Training residuals with eta = 1; anomalous steps carry tiles at 1.5, normal ones at 0.8 or 2.5 in few tiles."""
    rng = np.random.default_rng(1)
    train = rng.random((2000, 4, 4))
    train[:, 0, 0] = np.linspace(0, 1, 2000)
    S = 40
    val = np.full((S, 4, 4), 0.2)
    anomalous = np.zeros(S, dtype=bool)
    anomalous[[5, 6, 7, 20, 21, 30]] = True
    val[anomalous] = 1.5
    # normal steps with a single large tile: broken at beta 1 or 0.5 but harmless once the flag cutoff is set
    val[~anomalous, 0, 0] = 2.5
    # normal steps whose bulk sits between 0.5 and 1: separating them needs beta >= 1
    val[[10, 11, 12], :, :] = 0.8
    labels = [AnomalyWindow(5 * i, 5 * i + 4) for i in np.flatnonzero(anomalous)]
    return residuals(train), residuals(val), labels


def test_beta_search_recovers_separating_beta():
    train, val, labels = engineered_validation()
    th = fit_thresholds(train, (val, labels), beta_grid=[0.5, 1.0, 2.0], method="context_b")
    eta = th.eta996_context
    # beta 0.5 breaks the 0.8 steps too; beta 2 misses 1.5; only beta 1 separates
    assert 0.5 * eta < 0.8 < eta < 1.5 < 2 * eta
    assert th.beta_b == 1.0
    assert th.theta_b == pytest.approx(eta)
    flags = score_series(val, "context_b", th).flags
    np.testing.assert_array_equal(flags, np.isin(np.arange(40), [5, 6, 7, 20, 21, 30]))


def test_pooled_validation_parts():
    train, val, labels = engineered_validation()
    single = fit_thresholds(train, (val, labels), beta_grid=[0.5, 1.0, 2.0], method="context_b")
    assert fit_thresholds(train, [(val, labels)], beta_grid=[0.5, 1.0, 2.0], method="context_b") == single
    # a second copy with the same layout pools to the same optimum
    pooled = fit_thresholds(train, [(val, labels), (val, labels)], beta_grid=[0.5, 1.0, 2.0], method="context_b")
    assert pooled == single
    # an unlabeled part still counts its flags as false positives
    clean = residuals(np.full((40, 4, 4), 0.2))
    th = fit_thresholds(train, [(val, labels), (clean, [])], beta_grid=[0.5, 1.0, 2.0], method="context_b")
    assert th.beta_b == 1.0
    with pytest.warns(UserWarning, match="no labeled validation"):
        fit_thresholds(train, [(val, []), (clean, [])])


def test_context_h_search_respects_beta_b():
    train, val, labels = engineered_validation()
    th = fit_thresholds(train, (val, labels), beta_grid=[0.5, 1.0, 2.0], method="context_h")
    assert th.beta_h <= th.beta_b
    assert th.theta_h <= th.theta_b


def test_threshold_json_round_trip(tmp_path):
    th = thresholds(theta_b=2.0, theta_h=1.5, combined_weights=(0.3, 0.7))
    th.save(tmp_path / "t.json")
    assert ThresholdSet.load(tmp_path / "t.json") == th


def test_events_merge_across_gap():
    ctx = np.zeros((10, 4, 4))
    ctx[[1, 2, 4, 8]] = 5.0
    s = score_series(residuals(ctx), "context_b", thresholds())
    assert s.events(gap=1) == [(1, 4), (8, 8)]
    assert s.events(gap=0) == [(1, 2), (4, 4), (8, 8)]
