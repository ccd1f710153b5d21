import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geolearn.data import (MFDatasetSpec, MinibatchStream, SkewSpec,
                           dump_dataset_csv, gen_cluster_data, gen_mf_data,
                           label_histogram, load_dataset_csv,
                           partition_label_skew, partition_uniform)
from geolearn.rng import seed_stream


# ---------------------------------------------------------------------------
# generators


def test_gen_mf_data_shape_and_determinism():
    spec = MFDatasetSpec(rows=10, cols=8, rank=2, density=0.5,
                         noise_sigma=0.1, seed=3)
    entries, floor = gen_mf_data(spec)
    assert len(entries) == 40          # round(0.5 * 80)
    assert entries.row.max() < 10 and entries.col.max() < 8
    again, floor2 = gen_mf_data(spec)
    np.testing.assert_array_equal(entries.val, again.val)
    assert floor == floor2


def test_gen_mf_data_noise_floor_zero_when_clean():
    spec = MFDatasetSpec(rows=6, cols=6, rank=2, density=1.0,
                         noise_sigma=0.0, seed=1)
    _, floor = gen_mf_data(spec)
    assert floor == 0.0


def test_gen_mf_data_rejects_bad_density():
    with pytest.raises(ValueError):
        gen_mf_data(MFDatasetSpec(rows=4, cols=4, rank=1, density=0.0,
                                  noise_sigma=0.0, seed=0))


def test_gen_cluster_data_tags_share_geometry():
    train = gen_cluster_data(3, 4, 20, 1.0, seed=9, tag="train")
    test = gen_cluster_data(3, 4, 5, 1.0, seed=9, tag="test")
    # same seeded centers: per-class means should agree far better than
    # the sample noise scale
    for c in range(3):
        mu_train = train.X[train.y == c].mean(axis=0)
        mu_test = test.X[test.y == c].mean(axis=0)
        assert np.linalg.norm(mu_train - mu_test) < 2.0
    # but the samples themselves are different draws
    assert not np.array_equal(train.X[:5], test.X[:5])


def test_gen_cluster_data_balanced_labels():
    data = gen_cluster_data(4, 2, 25, 0.5, seed=2)
    np.testing.assert_array_equal(label_histogram(data, np.arange(len(data))),
                                  [25, 25, 25, 25])


# ---------------------------------------------------------------------------
# partitioning


def _cover_exactly_once(parts, n):
    merged = np.concatenate(parts)
    assert merged.size == n
    np.testing.assert_array_equal(np.sort(merged), np.arange(n))


def test_partition_uniform_covers_and_balances():
    parts = partition_uniform(100, 3, seed=0)
    _cover_exactly_once(parts, 100)
    sizes = sorted(p.size for p in parts)
    assert sizes == [33, 33, 34]


def test_partition_label_skew_alpha1_disjoint_labels():
    data = gen_cluster_data(6, 2, 30, 1.0, seed=4)
    parts = partition_label_skew(data, SkewSpec(partitions=3, alpha=1.0,
                                                seed=4))
    _cover_exactly_once(parts, len(data))
    label_sets = [set(np.unique(data.y[p])) for p in parts]
    assert label_sets == [{0, 1}, {2, 3}, {4, 5}]


def test_partition_label_skew_alpha0_is_balanced():
    data = gen_cluster_data(4, 2, 25, 1.0, seed=8)
    parts = partition_label_skew(data, SkewSpec(partitions=4, alpha=0.0,
                                                seed=8))
    _cover_exactly_once(parts, 100)
    assert all(p.size == 25 for p in parts)


def test_partition_label_skew_remainder_labels_to_low_partitions():
    # 5 labels over 2 partitions: partition 0 owns 3, partition 1 owns 2
    data = gen_cluster_data(5, 2, 10, 1.0, seed=6)
    parts = partition_label_skew(data, SkewSpec(partitions=2, alpha=1.0,
                                                seed=6))
    assert set(np.unique(data.y[parts[0]])) == {0, 1, 2}
    assert set(np.unique(data.y[parts[1]])) == {3, 4}


@given(alpha=st.floats(0.0, 1.0), k=st.sampled_from([1, 2, 3, 6]),
       seed=st.integers(0, 50))
@settings(max_examples=40, deadline=None)
def test_partition_label_skew_properties(alpha, k, seed):
    # the +-K size bound is promised for class counts divisible by K;
    # k always divides the 6 classes here
    data = gen_cluster_data(6, 2, 10, 1.0, seed=seed)
    parts = partition_label_skew(data, SkewSpec(partitions=k, alpha=alpha,
                                                seed=seed))
    _cover_exactly_once(parts, 60)
    for p in parts:
        assert abs(p.size - 60 / k) <= k
    # indices sorted, as documented
    for p in parts:
        assert np.all(np.diff(p) > 0) or p.size <= 1


def test_partition_label_skew_validates_inputs():
    data = gen_cluster_data(2, 2, 5, 1.0, seed=0)
    with pytest.raises(ValueError):
        partition_label_skew(data, SkewSpec(partitions=2, alpha=1.5, seed=0))
    with pytest.raises(ValueError):
        partition_label_skew(data, SkewSpec(partitions=11, alpha=0.5, seed=0))


# ---------------------------------------------------------------------------
# minibatch stream


def test_minibatch_stream_epoch_is_permutation():
    idx = np.arange(10, 20)
    stream = MinibatchStream(idx, 3, seed_stream(0, "test"))
    assert stream.batches_per_epoch == 4
    seen = np.concatenate([stream.next_batch() for _ in range(4)])
    np.testing.assert_array_equal(np.sort(seen), idx)
    assert seen.size == 10             # last batch short, nothing repeated


def test_minibatch_stream_peek_matches_next():
    stream = MinibatchStream(np.arange(7), 2, seed_stream(1, "test"))
    for _ in range(9):
        upcoming = stream.peek().copy()
        np.testing.assert_array_equal(stream.next_batch(), upcoming)


def test_minibatch_stream_seeded_determinism():
    a = MinibatchStream(np.arange(30), 4, seed_stream(2, "x"))
    b = MinibatchStream(np.arange(30), 4, seed_stream(2, "x"))
    for _ in range(12):
        np.testing.assert_array_equal(a.next_batch(), b.next_batch())


def test_minibatch_stream_rejects_bad_batch_size():
    with pytest.raises(ValueError):
        MinibatchStream(np.arange(4), 5, seed_stream(0, "t"))
    with pytest.raises(ValueError):
        MinibatchStream(np.arange(4), 0, seed_stream(0, "t"))


# ---------------------------------------------------------------------------
# CSV round trip


def test_dataset_csv_round_trip(tmp_path):
    data = gen_cluster_data(3, 4, 6, 0.7, seed=12)
    path = tmp_path / "blobs.csv"
    dump_dataset_csv(data, path)
    loaded = load_dataset_csv(path)
    np.testing.assert_allclose(loaded.X, data.X)
    np.testing.assert_array_equal(loaded.y, data.y)
    assert loaded.classes == data.classes
