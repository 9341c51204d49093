import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from owcnet.allocator import MULTI_AP, SINGLE_AP
from owcnet.scenario import (FAILURES, DropPlan, SplitMix64, aggregate, build_instance, compare_modes,
                             generate_drops, run_experiment, user_sinr_db)


def test_splitmix_reference_values():
    # published first outputs for seed 1234567
    rng = SplitMix64(1234567)
    assert [rng.next_u64() for _ in range(3)] == [6457827717110365317, 3203168211198807973,
                                                 9817491932198370423]


@given(seed=st.integers(0, 2**64 - 1), n=st.integers(1, 1000))
def test_below_in_range(seed, n):
    rng = SplitMix64(seed)
    assert all(0 <= rng.below(n) < n for _ in range(5))


def test_below_rejects_nonpositive():
    with pytest.raises(ValueError):
        SplitMix64(0).below(0)


def test_full_permutation():
    for drop in generate_drops(DropPlan(seed=9, n_users=32, n_drops=5)):
        assert sorted(drop) == list(range(32))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**63), n=st.integers(0, 32))
def test_drops_distinct_and_reproducible(seed, n):
    plan = DropPlan(seed=seed, n_users=n, n_drops=4)
    a, b = generate_drops(plan), generate_drops(plan)
    assert a == b
    for d in a:
        assert len(d) == n == len(set(d)) and all(0 <= i < 32 for i in d)


def test_drop_uniformity():
    drops = generate_drops(DropPlan(seed=4, n_users=2, n_drops=10_000))
    counts = np.bincount([i for d in drops for i in d], minlength=32)
    p = 2 / 32
    mean = 10_000 * p
    sd = math.sqrt(10_000 * p * (1 - p))
    assert np.all(np.abs(counts - mean) <= 3 * sd + 1)


def test_plan_validation():
    with pytest.raises(ValueError):
        DropPlan(n_users=33)
    with pytest.raises(ValueError):
        DropPlan(n_drops=-1)


def test_build_instance_masks(default_channel):
    drop = (3, 17)
    base = build_instance(default_channel, drop)
    both = build_instance(default_channel, drop, FAILURES["ap1_and_ap5"])
    assert base.ap_available.all()
    assert both.ap_available.sum() == 6 and not both.ap_available[0] and not both.ap_available[4]
    assert np.array_equal(base.R, both.R)
    assert base.sigma == pytest.approx(3.4965e-14, rel=1e-4)
    with pytest.raises(IndexError):
        build_instance(default_channel, (40,))


def test_user_sinr_combiners():
    assert user_sinr_db([]) == 0.0
    assert user_sinr_db([100.0, 10.0], "max") == pytest.approx(20.0)
    assert user_sinr_db([100.0, 10.0], "min") == pytest.approx(10.0)
    assert user_sinr_db([100.0, 10.0]) == pytest.approx(10 * math.log10(55.0))


def test_experiment_invariants(default_channel):
    plan = DropPlan(seed=1, n_users=3, n_drops=6)
    stats = run_experiment(default_channel, plan)
    assert sum(stats.ap_count_histogram.values()) == 6 * 3
    assert set(stats.ap_count_histogram) == set(range(9))
    best = max(stats.ap_count_histogram.values())
    assert stats.ap_count_mode == min(k for k, v in stats.ap_count_histogram.items() if v == best)
    assert stats.overall_avg_sinr_db == pytest.approx(np.mean(stats.per_drop_avg_sinr_db))
    z_db = 10 * math.log10(10**1.38)
    for d in stats.drops:
        assert d.valid
        for links in d.user_links:
            for *_, g in links:
                assert g >= 10**1.38
        for s, links in zip(d.user_sinr_db, d.user_links):
            assert (s == 0.0) == (not links)
            assert s == 0.0 or s >= z_db - 1e-9


def test_failure_monotone_per_drop(default_channel):
    plan = DropPlan(seed=2, n_users=3, n_drops=8)
    base = run_experiment(default_channel, plan)
    for name in ("ap1", "ap5", "ap1_and_ap5"):
        failed = run_experiment(default_channel, plan, name)
        assert all(f <= b * (1 + 1e-12) for f, b in zip(failed.per_drop_objective, base.per_drop_objective))
        assert [d.locations for d in failed.drops] == [d.locations for d in base.drops]


def test_compare_modes_paired(default_channel):
    cmp = compare_modes(default_channel, DropPlan(seed=3, n_users=2, n_drops=5))
    assert [d.locations for d in cmp.single_ap.drops] == [d.locations for d in cmp.multi_ap.drops]
    assert all(x >= -1e-9 for x in cmp.per_drop_objective_delta)
    assert cmp.overall_delta_db == pytest.approx(np.mean(cmp.per_drop_sinr_delta_db))
    assert all(c <= 1 for d in cmp.single_ap.drops for c in d.user_ap_count)


def test_workers_bit_identical(default_channel):
    plan = DropPlan(seed=5, n_users=4, n_drops=4)
    a = run_experiment(default_channel, plan, workers=1)
    b = run_experiment(default_channel, plan, workers=2)
    assert a.per_drop_objective == b.per_drop_objective
    assert a.per_drop_avg_sinr_db == b.per_drop_avg_sinr_db


def test_aggregate_empty():
    st_ = aggregate([], 0, MULTI_AP, "none")
    assert st_.ap_count_mode == 0 and math.isnan(st_.overall_avg_sinr_db)


def test_unknown_failure_index():
    with pytest.raises(ValueError):
        FAILURES["ap5"].mask(3)
