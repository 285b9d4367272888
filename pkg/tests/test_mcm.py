import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsmgan.mcm import (
    InsufficientDataError,
    MCMTensor,
    SeasonalConfig,
    build_samples,
    compute_mcm,
    step_flags,
)
from rsmgan.mts import MTS, HolidayCalendar

from .oracles.mcm_bruteforce import mcm_loops


def test_constant_series_inclusive_sum():
    mcm = compute_mcm(MTS(np.ones((2, 50))), windows=(5,), step_size=5)
    np.testing.assert_allclose(mcm.data, 6 / 5)


def test_constant_series_w_terms():
    mcm = compute_mcm(MTS(np.ones((2, 50))), windows=(5,), step_size=5, inclusive=False)
    np.testing.assert_allclose(mcm.data, 1.0)


def test_zero_series():
    mcm = compute_mcm(MTS(np.zeros((3, 100))))
    assert not mcm.data.any()


@pytest.mark.parametrize("inclusive", [True, False])
def test_matches_bruteforce(rng, inclusive):
    X = rng.normal(size=(3, 100))
    mcm = compute_mcm(MTS(X), (5, 10, 30), 5, inclusive)
    ends, expected = mcm_loops(X, (5, 10, 30), 5, inclusive)
    np.testing.assert_array_equal(mcm.end_index, ends)
    assert np.max(np.abs(mcm.data - expected)) < 1e-10


def test_step_count_and_alignment():
    mcm = compute_mcm(MTS(np.zeros((2, 100))), (5, 10, 30), 5)
    # steps end at 4, 9, ..., 99; the first with 31 samples of history ends at 34
    assert mcm.end_index[0] == 34
    assert mcm.end_index[-1] == 99
    assert mcm.M == 100 // 5 - 6


def test_insufficient_data():
    with pytest.raises(InsufficientDataError):
        compute_mcm(MTS(np.zeros((2, 20))), (5, 10, 30), 5)


def test_symmetric(rng):
    mcm = compute_mcm(MTS(rng.normal(size=(6, 400))))
    np.testing.assert_array_equal(mcm.data, np.swapaxes(mcm.data, 2, 3))


def test_shift_equivariance(rng):
    X = rng.normal(size=(4, 300))
    k = 7
    padded = np.concatenate([np.full((4, 5 * k), 0.5), X], axis=1)
    a = compute_mcm(MTS(X))
    b = compute_mcm(MTS(padded))
    np.testing.assert_array_equal(b.end_index[-a.M :], a.end_index + 5 * k)
    np.testing.assert_allclose(b.data[-a.M :], a.data, rtol=0, atol=1e-12)


def test_deterministic(rng):
    X = rng.normal(size=(5, 500))
    assert compute_mcm(MTS(X)).data.tobytes() == compute_mcm(MTS(X)).data.tobytes()


def test_cache_round_trip(tmp_path, rng):
    mcm = compute_mcm(MTS(rng.normal(size=(4, 300))))
    mcm.save(tmp_path / "m.bin")
    back = MCMTensor.load(tmp_path / "m.bin")
    np.testing.assert_array_equal(back.data, mcm.data)
    np.testing.assert_array_equal(back.end_index, mcm.end_index)
    assert back.windows == mcm.windows and back.step_size == 5 and back.inclusive


def test_history_only_samples(rng):
    mcm = compute_mcm(MTS(rng.normal(size=(10, 500))))
    samples = build_samples(mcm, h=4)
    assert len(samples) == mcm.M - 4
    s = samples[0]
    assert s.history.shape == (4, 3, 10, 10)
    assert s.seasonal.shape[0] == 0
    np.testing.assert_array_equal(s.current, mcm.data[4])
    np.testing.assert_array_equal(s.history, mcm.data[0:4])
    assert samples.kinds == ("history",) * 4 + ("current",)


def test_constant_series_seasonal_equals_current():
    mcm = compute_mcm(MTS(np.full((3, 3000), 1.7)))
    samples = build_samples(mcm, 2, SeasonalConfig(((600, 2), (1200, 1)), 30))
    for i in (0, len(samples) // 2, len(samples) - 1):
        s = samples[i]
        np.testing.assert_allclose(s.seasonal, np.broadcast_to(s.current, s.seasonal.shape), rtol=1e-15)


def test_daily_smoothing_is_seven_step_mean(rng):
    mcm = compute_mcm(MTS(rng.normal(size=(3, 4 * 1440))))
    samples = build_samples(mcm, 4, SeasonalConfig(((1440, 2),), 30))
    kinds = np.array(samples.kinds)
    seasonal_pos = np.flatnonzero(kinds == "seasonal")
    for i in (0, 10, len(samples) - 1):
        t = samples.step_index[i]
        for pos, j in zip(seasonal_pos, (2, 1)):
            center = t - j * 288
            near = [center + d for d in range(-3, 4) if center + d >= 0]
            expected = sum(mcm.data[k] for k in near) / len(near)
            np.testing.assert_allclose(samples.stacks[i, pos], expected, rtol=1e-12)


def test_skip_infeasible_leading_steps(rng):
    mcm = compute_mcm(MTS(rng.normal(size=(3, 2000))))
    samples = build_samples(mcm, 4, SeasonalConfig(((1440, 1),), 30))
    assert samples.step_index[0] == 288
    assert len(samples) == mcm.M - 288


def test_holiday_bits():
    T = 2000
    flagged = np.zeros(T, dtype=bool)
    flagged[1000:1010] = True
    mcm = compute_mcm(MTS(np.ones((2, T))))
    flags = step_flags(mcm, HolidayCalendar(flagged))
    # a step is flagged when its 31-sample window touches 1000..1009
    touching = (mcm.end_index >= 1000) & (mcm.end_index - 30 <= 1009)
    np.testing.assert_array_equal(flags, touching)

    samples = build_samples(mcm, 4, calendar=HolidayCalendar(flagged))
    assert samples.bits[:, -1].all()
    for i in range(len(samples)):
        t = samples.step_index[i]
        np.testing.assert_array_equal(samples.bits[i, :4], ~flags[t - 4 : t])


def test_seasonal_bit_uses_any_smoothed_step():
    T = 3000
    flagged = np.zeros(T, dtype=bool)
    flagged[500] = True
    mcm = compute_mcm(MTS(np.ones((2, T))))
    samples = build_samples(mcm, 1, SeasonalConfig(((600, 1),), 30), HolidayCalendar(flagged))
    flags = step_flags(mcm, HolidayCalendar(flagged))
    for i in range(len(samples)):
        center = samples.step_index[i] - 120
        expected = not flags[max(center - 3, 0) : center + 4].any()
        assert samples.bits[i, 0] == expected


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(2, 5),
    T=st.integers(31, 120),
    step=st.integers(1, 7),
    seed=st.integers(0, 1000),
)
def test_property_matches_loops(n, T, step, seed):
    X = np.random.default_rng(seed).normal(size=(n, T))
    try:
        mcm = compute_mcm(MTS(X), (3, 8), step)
    except InsufficientDataError:
        return
    ends, expected = mcm_loops(X, (3, 8), step)
    np.testing.assert_array_equal(mcm.end_index, ends)
    np.testing.assert_allclose(mcm.data, expected, rtol=0, atol=1e-10)
    np.testing.assert_array_equal(mcm.data, np.swapaxes(mcm.data, 2, 3))
