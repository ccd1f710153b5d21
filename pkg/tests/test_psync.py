import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geolearn.psync import (BarrierMsg, CompositeSig, IterTick, LrDropped,
                            SoftCtl, ThresholdSchedule, WeightShard,
                            accumulate_and_flush, apply_barrier,
                            clear_barrier_on_update, gate_read,
                            maybe_emit_barrier, mirror_clock_gate,
                            significance, significance_scores, ssp_gate,
                            soft_threshold_adjust, threshold_decay)


# ---------------------------------------------------------------------------
# significance


def test_relative_significance_oracle():
    assert significance(0.5, 10.0) == pytest.approx(0.05)
    assert significance(-0.5, 10.0) == pytest.approx(0.05)
    # tiny weights fall back to the epsilon denominator
    assert significance(1e-3, 0.0) == pytest.approx(1e-3 / 1e-6)


def test_composite_significance_oracle():
    # product a*b = 6; bump a by 1: (3+1)*2 = 8, relative change 2/6
    assert significance(1.0, [3.0, 2.0], fn="composite",
                        position=0) == pytest.approx(2.0 / 6.0)
    # a zero member freezes the product: score 0 against the epsilon floor
    assert significance(1.0, [3.0, 0.0], fn="composite", position=0) == 0.0


def test_significance_rejects_unknown_fn():
    with pytest.raises(ValueError):
        significance(1.0, 1.0, fn="cosine")


def test_significance_scores_vectorized_matches_scalar():
    v = np.array([0.5, 0.0, -2.0])
    w = np.array([10.0, 1.0, 4.0])
    np.testing.assert_allclose(significance_scores(v, w),
                               [0.05, 0.0, 0.5])


def test_composite_sig_group_registry():
    sig = CompositeSig(groups=((0, 2), (1, 3)))
    assert sig.group_of(2) == (0, 2)
    with pytest.raises(ValueError):
        sig.group_of(4)
    with pytest.raises(ValueError):
        CompositeSig(groups=((0, 1), (1, 2)))


def test_significance_scores_composite_path():
    sig = CompositeSig(groups=((0, 1),))
    v = np.array([1.0, 0.0])
    w = np.array([3.0, 2.0])
    scores = significance_scores(v, w, sig_fn=sig)
    np.testing.assert_allclose(scores, [2.0 / 6.0, 0.0])


# ---------------------------------------------------------------------------
# accumulate and flush


def test_accumulate_and_flush_oracle():
    shard = WeightShard.fresh(np.array([10.0, 10.0, 10.0]))
    shard.v[:] = [0.5, 2.0, -3.0]      # scores 0.05, 0.2, 0.3
    idx, vals = accumulate_and_flush(shard, 0.1)
    np.testing.assert_array_equal(idx, [1, 2])
    np.testing.assert_array_equal(vals, [2.0, -3.0])
    np.testing.assert_array_equal(shard.v, [0.5, 0.0, 0.0])


def test_accumulate_and_flush_rejects_negative_threshold():
    with pytest.raises(ValueError):
        accumulate_and_flush(WeightShard.fresh(np.ones(2)), -0.1)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=12),
       st.floats(0.0, 2.0))
@settings(max_examples=60)
def test_flush_leaves_only_subthreshold_residue(vals, threshold):
    w = np.full(len(vals), 5.0)
    shard = WeightShard.fresh(w)
    shard.v[:] = vals
    idx, flushed = accumulate_and_flush(shard, threshold)
    # emitted values carried the accumulated update out exactly
    residue = significance_scores(shard.v, shard.w)
    assert np.all(residue <= threshold + 1e-12)
    # flushed + residue reconstructs the original accumulation
    rebuilt = shard.v.copy()
    rebuilt[idx] += flushed
    np.testing.assert_allclose(rebuilt, vals)


# ---------------------------------------------------------------------------
# threshold decay


def test_threshold_decay_follows_lr_drops():
    sched = ThresholdSchedule(t0=0.02, mode="lr")
    t = threshold_decay(sched, 0.02, LrDropped(ratio=0.1))
    assert t == pytest.approx(0.002)
    # invsqrt schedule ignores lr events
    sched2 = ThresholdSchedule(t0=0.02, mode="invsqrt")
    assert threshold_decay(sched2, 0.01, LrDropped(ratio=0.1)) == 0.01


def test_threshold_decay_invsqrt_oracle():
    sched = ThresholdSchedule(t0=0.1, mode="invsqrt")
    assert threshold_decay(sched, 1.0, IterTick(t=4)) == pytest.approx(0.05)
    assert threshold_decay(sched, 1.0, IterTick(t=1)) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        threshold_decay(sched, 1.0, IterTick(t=0))


def test_threshold_schedule_validates_mode():
    with pytest.raises(ValueError):
        ThresholdSchedule(t0=0.1, mode="linear")


# ---------------------------------------------------------------------------
# selective barrier


def test_barrier_emitted_only_when_saturated():
    assert maybe_emit_barrier(100.0, 200.0, [1, 2], "a", 5) is None
    assert maybe_emit_barrier(300.0, 200.0, [], "a", 5) is None
    msg = maybe_emit_barrier(300.0, 200.0, [3, 1, 3], "a", 5)
    assert msg == BarrierMsg(source="a", clock=5, indexes=(1, 3))


def test_barrier_block_and_release_cycle():
    shard = WeightShard.fresh(np.zeros(4))
    apply_barrier(shard, BarrierMsg(source="b", clock=3, indexes=(0, 2)))
    np.testing.assert_array_equal(gate_read(shard, [0, 1]), [0])
    np.testing.assert_array_equal(gate_read(shard, [1, 3]), [])
    # an older flush does not release a newer barrier
    clear_barrier_on_update(shard, "b", 2, [0])
    np.testing.assert_array_equal(gate_read(shard, [0]), [0])
    # the matching flush does
    clear_barrier_on_update(shard, "b", 3, [0, 2])
    np.testing.assert_array_equal(gate_read(shard, [0, 2]), [])
    assert shard.barrier_waits == {}


def test_barrier_tracks_sources_independently():
    shard = WeightShard.fresh(np.zeros(2))
    apply_barrier(shard, BarrierMsg(source="b", clock=1, indexes=(0,)))
    apply_barrier(shard, BarrierMsg(source="c", clock=4, indexes=(0,)))
    clear_barrier_on_update(shard, "b", 1, [0])
    # c's barrier still holds
    np.testing.assert_array_equal(gate_read(shard, [0]), [0])
    clear_barrier_on_update(shard, "c", 5, [0])
    np.testing.assert_array_equal(gate_read(shard, [0]), [])


def test_barrier_keeps_newest_clock_per_source():
    shard = WeightShard.fresh(np.zeros(1))
    apply_barrier(shard, BarrierMsg(source="b", clock=5, indexes=(0,)))
    apply_barrier(shard, BarrierMsg(source="b", clock=2, indexes=(0,)))
    assert shard.barrier_waits[0]["b"] == 5


# ---------------------------------------------------------------------------
# progress gates


def test_mirror_clock_gate_oracle():
    assert mirror_clock_gate(5, 3, 2)
    assert not mirror_clock_gate(6, 3, 2)
    assert mirror_clock_gate(0, 0, 0)
    with pytest.raises(ValueError):
        mirror_clock_gate(1, 0, -1)


def test_ssp_gate_oracle():
    assert ssp_gate(4, 4, 0)
    assert not ssp_gate(5, 4, 0)
    assert ssp_gate(7, 4, 3)
    with pytest.raises(ValueError):
        ssp_gate(1, 1, -2)


# ---------------------------------------------------------------------------
# soft threshold control


def test_soft_control_disabled_pins_to_hard():
    ctl = SoftCtl(enabled=False)
    assert soft_threshold_adjust(ctl, 0.1, 0.001, 0.02) == 0.02


def test_soft_control_adjusts_with_headroom():
    ctl = SoftCtl(enabled=True, target=0.8, adjust=2.0, floor=1e-4)
    # idle link: halve the soft threshold
    assert soft_threshold_adjust(ctl, 0.2, 0.01, 0.02) == pytest.approx(0.005)
    # floor holds
    assert soft_threshold_adjust(ctl, 0.2, 1.5e-4, 0.02) == pytest.approx(1e-4)
    # saturated link: back toward hard, capped at hard
    assert soft_threshold_adjust(ctl, 0.95, 0.015, 0.02) == pytest.approx(0.02)


def test_soft_control_validates_fields():
    with pytest.raises(ValueError):
        SoftCtl(enabled=True, adjust=1.0)
    with pytest.raises(ValueError):
        SoftCtl(enabled=True, target=0.0)
