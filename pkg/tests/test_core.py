import json

import numpy as np
import pytest

from sgdinfer.core import AveragedAccumulator, LearningRateSchedule, RunningCovariance
from sgdinfer.errors import ConfigError


# ---------------------------------------------------------------------------
# learning rate schedule


def test_rate_first_step_returns_gamma():
    assert LearningRateSchedule(1.0, 0.75).rate(1) == 1.0
    assert LearningRateSchedule(0.5, 0.6).rate(1) == 0.5


def test_rate_power_of_two_case():
    # 16**(-3/4) = 1/8
    assert LearningRateSchedule(1.0, 0.75).rate(16) == pytest.approx(0.125, rel=1e-12)


def test_rate_monotone_decreasing_and_linear_in_gamma():
    sched1 = LearningRateSchedule(1.0, 2.0 / 3.0)
    sched2 = LearningRateSchedule(2.0, 2.0 / 3.0)
    rates = [sched1.rate(n) for n in range(1, 200)]
    assert all(a > b for a, b in zip(rates, rates[1:]))
    for n in (1, 7, 500, 12345):
        assert sched2.rate(n) == 2.0 * sched1.rate(n)


@pytest.mark.parametrize("gamma,alpha", [(0.0, 0.75), (-1.0, 0.75), (1.0, 0.5), (1.0, 1.0), (1.0, 1.5)])
def test_rate_rejects_bad_parameters(gamma, alpha):
    with pytest.raises(ConfigError):
        LearningRateSchedule(gamma, alpha)


def test_rate_rejects_zero_index():
    with pytest.raises(ConfigError):
        LearningRateSchedule().rate(0)


def test_schedule_state_round_trip():
    sched = LearningRateSchedule(0.3, 0.7)
    again = LearningRateSchedule.from_state(sched.state())
    assert again.rate(17) == sched.rate(17)


# ---------------------------------------------------------------------------
# averaged accumulator


def test_average_no_burn_in():
    acc = AveragedAccumulator(burn_in=0)
    acc.push(np.array([2.0]))
    acc.push(np.array([4.0]))
    assert acc.average() == pytest.approx([3.0])
    assert acc.count_used == 2


def test_average_skips_burn_in_prefix():
    acc = AveragedAccumulator(burn_in=1)
    for v in (100.0, 4.0, 6.0):
        acc.push(np.array([v]))
    assert acc.average() == pytest.approx([5.0])
    assert acc.count_seen == 3
    assert acc.count_used == 2


def test_average_all_burned_falls_back_to_last_raw():
    acc = AveragedAccumulator(burn_in=2)
    acc.push(np.array([1.0]))
    acc.push(np.array([2.0]))
    assert acc.count_used == 0
    assert acc.average() == pytest.approx([2.0])


def test_average_empty_raises():
    with pytest.raises(ValueError):
        AveragedAccumulator().average()


def test_average_rejects_negative_burn_in():
    with pytest.raises(ConfigError):
        AveragedAccumulator(burn_in=-1)


def test_average_matches_brute_force_mean():
    rng = np.random.default_rng(101)
    for _ in range(25):
        n = int(rng.integers(1, 60))
        burn = int(rng.integers(0, n + 3))
        shape = (int(rng.integers(1, 4)), int(rng.integers(1, 5)))
        values = rng.standard_normal((n, *shape)) * 10.0
        acc = AveragedAccumulator(burn_in=burn)
        for v in values:
            acc.push(v)
        if burn >= n:
            np.testing.assert_array_equal(acc.average(), values[-1])
        else:
            expected = values[burn:].mean(axis=0)
            np.testing.assert_allclose(acc.average(), expected, rtol=1e-12, atol=1e-14)


def test_average_state_round_trip_is_bitwise():
    rng = np.random.default_rng(5)
    values = rng.standard_normal((40, 3))
    whole = AveragedAccumulator(burn_in=7)
    split = AveragedAccumulator(burn_in=7)
    for v in values[:18]:
        whole.push(v)
        split.push(v)
    # serialize through JSON text, as a checkpoint would
    restored = AveragedAccumulator.from_state(json.loads(json.dumps(split.state())))
    for v in values[18:]:
        whole.push(v)
        restored.push(v)
    np.testing.assert_array_equal(whole.average(), restored.average())
    assert whole.count_seen == restored.count_seen


# ---------------------------------------------------------------------------
# running covariance


def test_covariance_two_point_example():
    rc = RunningCovariance(dim=2)
    rc.push(np.array([1.0, 0.0]))
    rc.push(np.array([-1.0, 0.0]))
    np.testing.assert_allclose(rc.covariance(), [[2.0, 0.0], [0.0, 0.0]], atol=1e-15)


def test_covariance_constant_sample_is_zero():
    rc = RunningCovariance(dim=2)
    for _ in range(5):
        rc.push(np.array([3.0, -7.0]))
    np.testing.assert_array_equal(rc.covariance(), np.zeros((2, 2)))


def test_covariance_scalar_example():
    rc = RunningCovariance(dim=1)
    rc.push(np.array([0.0]))
    rc.push(np.array([2.0]))
    np.testing.assert_allclose(rc.covariance(), [[2.0]])


def test_covariance_needs_two_points():
    rc = RunningCovariance(dim=1)
    rc.push(np.array([1.0]))
    with pytest.raises(ValueError):
        rc.covariance()


def test_covariance_matches_two_pass():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        n = int(rng.integers(2, 120))
        p = int(rng.integers(1, 6))
        data = rng.standard_normal((n, p)) * rng.uniform(0.1, 30.0)
        data += rng.standard_normal(p) * 5.0
        rc = RunningCovariance(dim=p)
        for row in data:
            rc.push(row)
        np.testing.assert_allclose(rc.covariance(), np.cov(data.T, ddof=1).reshape(p, p),
                                   rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(rc.mean, data.mean(axis=0), rtol=1e-12, atol=1e-13)


def test_covariance_bitwise_symmetric_and_near_psd():
    rng = np.random.default_rng(99)
    rc = RunningCovariance(dim=4)
    for _ in range(300):
        rc.push(rng.standard_normal(4) * 100.0)
    cov = rc.covariance()
    assert np.array_equal(cov, cov.T)
    eigs = np.linalg.eigvalsh(cov)
    assert eigs.min() >= -1e-9 * np.trace(cov)


def test_covariance_state_round_trip():
    rng = np.random.default_rng(11)
    rc = RunningCovariance(dim=3)
    for _ in range(10):
        rc.push(rng.standard_normal(3))
    back = RunningCovariance.from_state(json.loads(json.dumps(rc.state())))
    for _ in range(10):
        v = rng.standard_normal(3)
        rc.push(v)
        back.push(v)
    np.testing.assert_array_equal(rc.covariance(), back.covariance())
