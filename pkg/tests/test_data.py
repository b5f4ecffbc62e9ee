import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isdl.data import (
    LabeledDataset,
    SplitRatios,
    SyntheticSpec,
    UnlabeledPool,
    class_counts,
    imbalance_ratio,
    make_synthetic,
    make_synthetic_test,
    map_diagnosis_label,
    read_labeled_csv,
    read_unlabeled_csv,
    stratified_split,
    write_labeled_csv,
)
from isdl.errors import EmptyDataset, InvalidRatios, InvalidSpec, UnknownDiagnosis


def _dataset(counts, d=2, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(len(counts)), counts)
    return LabeledDataset(rng.normal(size=(y.size, d)), y, [f"k{c}" for c in range(len(counts))])


class TestDiagnosisMapping:
    @pytest.mark.parametrize(
        "raw, year, target",
        [
            ("nv", 2018, "NV"),
            ("NV", 2019, "NV"),
            ("naevusn", 2020, "NV"),
            ("Melanoma", 2020, "MEL"),
            ("mel", 2018, "MEL"),
            ("akiec", 2018, "AK"),
            ("AK", 2019, "AK"),
            ("SCC", 2019, "SCC"),
            ("vasc", 2018, "VASC"),
            ("DF", 2019, "DF"),
            ("Seborrheic keratosis", 2020, "BKL"),
            ("lentigo NOS", 2020, "BKL"),
            ("Atypical", 2020, "Unknown"),
            ("atypical melanocytic proliferation", 2020, "Unknown"),
            ("cafe-au-lait macule", 2020, "Unknown"),
            ("  Nv ", 2018, "NV"),
        ],
    )
    def test_table_rows(self, raw, year, target):
        assert map_diagnosis_label(raw, year) == target

    @pytest.mark.parametrize("raw, year", [("banana", 2018), ("scc", 2018), ("akiec", 2020), ("nv", 2017)])
    def test_unmapped(self, raw, year):
        with pytest.raises(UnknownDiagnosis, match=raw):
            map_diagnosis_label(raw, year)


class TestStratifiedSplit:
    def test_largest_remainder_example(self):
        ds = _dataset([90, 10])
        train, val, test = stratified_split(ds, SplitRatios(0.8, 0.1, 0.1), seed=3)
        assert train.class_counts().tolist() == [72, 8]
        assert val.class_counts().tolist() == [9, 1]
        assert test.class_counts().tolist() == [9, 1]

    def test_singleton_goes_to_train(self):
        ds = _dataset([20, 1])
        train, val, test = stratified_split(ds, SplitRatios(), seed=0)
        assert train.class_counts()[1] == 1
        assert val.class_counts()[1] == 0 and test.class_counts()[1] == 0

    def test_singleton_goes_to_train_even_when_train_ratio_small(self):
        ds = _dataset([20, 1])
        train, _, _ = stratified_split(ds, SplitRatios(0.2, 0.4, 0.4), seed=0)
        assert train.class_counts()[1] == 1

    def test_remainder_ties_prefer_train_then_val(self):
        # 5 * (0.4, 0.3, 0.3) = (2, 1.5, 1.5); the single leftover goes to val.
        ds = _dataset([5, 5])
        train, val, test = stratified_split(ds, SplitRatios(0.4, 0.3, 0.3), seed=0)
        assert (len(train), len(val), len(test)) == (4, 4, 2)

    def test_deterministic(self):
        ds = _dataset([40, 13, 7])
        a = stratified_split(ds, SplitRatios(), seed=11)
        b = stratified_split(ds, SplitRatios(), seed=11)
        for x, y in zip(a, b):
            assert x.ids.tobytes() == y.ids.tobytes()
            assert x.features.tobytes() == y.features.tobytes()

    def test_seed_changes_membership(self):
        ds = _dataset([40, 13, 7])
        a = stratified_split(ds, SplitRatios(), seed=1)[0]
        b = stratified_split(ds, SplitRatios(), seed=2)[0]
        assert set(a.ids) != set(b.ids)

    @settings(max_examples=60, deadline=None)
    @given(counts=st.lists(st.integers(1, 60), min_size=2, max_size=6),
           train=st.floats(0.3, 0.8), val_share=st.floats(0.1, 0.9), seed=st.integers(0, 99))
    def test_partition_and_proportions(self, counts, train, val_share, seed):
        val = (1 - train) * val_share
        ratios = SplitRatios(train, val, 1 - train - val)
        ds = _dataset(counts)
        parts = stratified_split(ds, ratios, seed)
        ids = np.concatenate([p.ids for p in parts])
        assert sorted(ids.tolist()) == list(range(len(ds)))
        for p, r in zip(parts, ratios.as_tuple()):
            np.testing.assert_array_less(np.abs(p.class_counts() - np.asarray(counts) * r), 1.0 + 1e-9)

    @pytest.mark.parametrize("ratios", [(0.8, 0.1, 0.2), (1.0, 0.0, 0.0), (0.5, 0.6, -0.1)])
    def test_invalid_ratios(self, ratios):
        with pytest.raises(InvalidRatios):
            SplitRatios(*ratios)

    def test_class_without_samples(self):
        ds = LabeledDataset(np.zeros((3, 1)), [0, 0, 0], ["a", "b"])
        with pytest.raises(EmptyDataset):
            stratified_split(ds, SplitRatios(), 0)


class TestCounts:
    def test_ratio(self):
        assert imbalance_ratio([100, 50, 10]) == 10.0
        assert imbalance_ratio([7, 7, 7]) == 1.0

    def test_zero_counts_excluded(self):
        assert imbalance_ratio([100, 0, 25]) == 4.0

    def test_empty(self):
        ds = LabeledDataset(np.zeros((0, 2)), [], ["a", "b"])
        with pytest.raises(EmptyDataset):
            class_counts(ds)

    @given(st.lists(st.integers(0, 1000), min_size=2, max_size=10).filter(lambda c: any(c)))
    def test_ratio_at_least_one(self, counts):
        r = imbalance_ratio(counts)
        nonzero = {c for c in counts if c}
        assert r >= 1.0
        assert (r == 1.0) == (len(nonzero) == 1)

    def test_counts_sum_to_n(self):
        ds = _dataset([4, 9, 1])
        assert class_counts(ds).sum() == len(ds)


class TestSynthetic:
    def test_imbalance_by_construction(self):
        ds, pool = make_synthetic(SyntheticSpec(counts=[200, 2], n_features=3, n_unlabeled=0), seed=0)
        assert imbalance_ratio(ds) == 100.0
        assert len(pool) == 0 and pool.n_features == 3

    def test_deterministic(self):
        spec = SyntheticSpec(counts=[30, 5, 5], n_features=2, n_unlabeled=40)
        a, pa = make_synthetic(spec, 4)
        b, pb = make_synthetic(spec, 4)
        assert a.features.tobytes() == b.features.tobytes()
        assert pa.features.tobytes() == pb.features.tobytes()

    def test_pool_follows_class_priors(self):
        spec = SyntheticSpec(counts=[900, 100], n_features=1, n_unlabeled=20000,
                             means=[[-50.0], [50.0]], scales=1.0)
        _, pool = make_synthetic(spec, 0)
        frac_minority = np.mean(pool.features[:, 0] > 0)
        assert abs(frac_minority - 0.1) < 0.01

    def test_test_set_uses_same_geometry(self):
        spec = SyntheticSpec(counts=[10, 10], n_features=2, test_counts=[500, 500], separation=5.0)
        ds, _ = make_synthetic(spec, 0)
        test = make_synthetic_test(spec, 1)
        for c in range(2):
            assert np.linalg.norm(test.features[test.labels == c].mean(0) - spec.resolved_means()[c]) < 0.2
        assert not set(test.ids) & set(ds.ids)

    @pytest.mark.parametrize("kwargs", [dict(counts=[0, 0]), dict(counts=[3, 3], n_features=0), dict(counts=[5])])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidSpec):
            make_synthetic(SyntheticSpec(**kwargs), 0)


class TestContainers:
    def test_immutable(self):
        ds = _dataset([2, 2])
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0

    def test_pool_ids_unique(self):
        with pytest.raises(ValueError):
            UnlabeledPool(np.zeros((2, 1)), [1, 1])

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((1, 1)), [2], ["a", "b"])


def test_csv_roundtrip(tmp_path):
    ds = _dataset([3, 2], d=3)
    write_labeled_csv(ds, tmp_path / "l.csv")
    back = read_labeled_csv(tmp_path / "l.csv", class_names=ds.class_names)
    assert back.features.tobytes() == ds.features.tobytes()
    assert back.labels.tolist() == ds.labels.tolist()
    pool = read_unlabeled_csv(tmp_path / "l.csv")
    assert pool.features.shape == (5, 3)
