import math

import numpy as np
import pytest
from scipy import stats

from profilebench import defaults
from profilebench.model import rodrigues
from profilebench.sampling import (SampleRecord, SampleSpec, SamplingError, assign_split,
                                   compose_global, generator, sample_record, sample_seed,
                                   split_sizes, truncated_normal, truncated_normal_std, yaw_of)

SMALL = SampleSpec(shape_dim=20)


def test_record_is_pure_function_of_id():
    a = sample_record(SMALL, 17)
    # drawing other ids first must not matter
    for i in range(5):
        sample_record(SMALL, i)
    b = sample_record(SMALL, 17)
    np.testing.assert_array_equal(a.beta, b.beta)
    np.testing.assert_array_equal(a.theta.as_vector(), b.theta.as_vector())
    assert a.yaw_deg == b.yaw_deg and a.seed == b.seed


def test_ids_and_seeds_give_distinct_records():
    a, b = sample_record(SMALL, 0), sample_record(SMALL, 1)
    assert not np.array_equal(a.beta, b.beta)
    other = SampleSpec(shape_dim=20, base_seed=7)
    assert sample_seed(42, 0) != sample_seed(7, 0)
    assert not np.array_equal(sample_record(other, 0).beta, a.beta)


def test_record_dict_round_trip():
    r = sample_record(SMALL, 3, sizes=(2, 1, 1))
    back = SampleRecord.from_dict(r.to_dict())
    np.testing.assert_array_equal(back.beta, r.beta)
    np.testing.assert_array_equal(back.theta.as_vector(), r.theta.as_vector())
    assert back.split == "test" and back.id == 3


def test_truncated_normal_std_matches_scipy():
    for sigma, clip in ((0.7, 2.0), (1.0, 0.5), (2.0, 10.0)):
        ref = stats.truncnorm(-clip / sigma, clip / sigma, scale=sigma).std()
        assert truncated_normal_std(sigma, clip) == pytest.approx(ref, rel=1e-12)


def test_truncated_normal_bounds_and_moments():
    x = truncated_normal(generator(5), 200_000, 0.7, 2.0)
    assert np.abs(x).max() <= 2.0
    assert x.std() == pytest.approx(truncated_normal_std(0.7, 2.0), rel=0.01)
    assert abs(x.mean()) < 0.01


def test_truncated_normal_gives_up_on_hopeless_clip():
    with pytest.raises(SamplingError):
        truncated_normal(generator(0), 10, 1.0, 1e-9)


def test_yaw_range_and_profile_heading():
    yaws = np.array([sample_record(SMALL, i).yaw_deg for i in range(400)])
    assert yaws.min() >= 85.0 and yaws.max() <= 95.0
    assert stats.kstest(yaws, stats.uniform(85, 10).cdf).statistic < 0.08


def test_compose_global_applies_yaw_first():
    rest = np.array([0.2, -0.1])
    r = rodrigues(compose_global(90.0, rest))
    expected = rodrigues(np.array([0.2, 0.0, -0.1])) @ rodrigues(np.array([0.0, math.pi / 2, 0.0]))
    np.testing.assert_allclose(r, expected, atol=1e-12)


def test_yaw_of_pure_yaw():
    from profilebench.model import PoseParams
    for yaw in (-90.0, 10.0, 89.0):
        p = PoseParams(compose_global(yaw, np.zeros(2)), np.zeros((1, 3)))
        assert yaw_of(p) == pytest.approx(yaw, abs=1e-9)


def test_spec_validation():
    for kw in ({"sigma": 0}, {"clip": -1}, {"yaw_min": 95, "yaw_max": 85}, {"pose_dim": 4}):
        with pytest.raises(ValueError):
            SampleSpec(**kw)
    assert SampleSpec.for_joints(3).pose_dim == 8
    assert SampleSpec().n_joints == 2


def test_split_boundaries():
    sizes = defaults.SPLIT_SIZES
    assert assign_split(0, sizes) == "train"
    assert assign_split(79_999, sizes) == "train"
    assert assign_split(80_000, sizes) == "val"
    assert assign_split(89_999, sizes) == "val"
    assert assign_split(90_000, sizes) == "test"
    assert assign_split(99_999, sizes) == "test"
    for bad in (-1, 100_000):
        with pytest.raises(IndexError):
            assign_split(bad, sizes)


def test_split_sizes_sum_to_count():
    assert split_sizes(100_000) == defaults.SPLIT_SIZES
    assert split_sizes(10) == (8, 1, 1)
    for n in range(1, 60):
        s = split_sizes(n)
        assert sum(s) == n and min(s) >= 0
