import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isdl.classifier import MLPClassifier, TrainConfig
from isdl.data import LabeledDataset, SyntheticSpec, UnlabeledPool, make_synthetic
from isdl.errors import DegenerateCounts, EmptyDataset, ShapeError
from isdl.selftrain import (
    PseudoLabelBatch,
    SamplingSchedule,
    SelfTrainConfig,
    proportion_isdl,
    proportion_isdlplus,
    rank_classes,
    sampling_schedule,
    select_pseudo,
    self_train,
    write_generation_csv,
)

positive_counts = st.lists(st.integers(1, 10_000), min_size=2, max_size=9).map(lambda c: sorted(c, reverse=True))
alphas = st.sampled_from([0.5, 1.0, 3.0])


def z_vector(rule, counts, alpha):
    return [rule(counts, l, alpha) for l in range(1, len(counts) + 1)]


def selected_counts(rule, counts, alpha):
    """Enumeration oracle: ceil(z_l * n_l) per rank when every pseudo-label is admissible."""
    return [math.ceil(z * n) for z, n in zip(z_vector(rule, counts, alpha), counts)]


class TestRanking:
    def test_descending_with_index_ties(self):
        assert rank_classes([5, 10, 10]).order == (1, 2, 0)

    def test_all_equal_is_identity(self):
        assert rank_classes([4, 4, 4, 4]).order == (0, 1, 2, 3)

    def test_zero_count_last(self):
        r = rank_classes([0, 3])
        assert r.order == (1, 0) and r.counts == (3, 0)
        assert r.rank_of(0) == 2


class TestProportions:
    def test_isdl_example(self):
        assert z_vector(proportion_isdl, [100, 50, 10], 1) == [0.1, 0.5, 1.0]

    def test_isdlplus_example(self):
        assert z_vector(proportion_isdlplus, [100, 50, 10], 1) == [0.05, 0.5, 0.95]

    def test_isdl_sqrt(self):
        assert proportion_isdl([100, 50, 10], 1, 0.5) == pytest.approx(0.316228, abs=1e-6)

    @given(positive_counts)
    def test_alpha_zero_is_one(self, counts):
        assert z_vector(proportion_isdl, counts, 0) == [1.0] * len(counts)
        assert z_vector(proportion_isdlplus, counts, 0) == [1.0] * len(counts)

    @given(positive_counts)
    def test_isdlplus_majority_is_half_at_alpha_one(self, counts):
        assert proportion_isdlplus(counts, 1, 1.0) == pytest.approx(proportion_isdl(counts, 1, 1.0) / 2, rel=1e-15)

    @settings(max_examples=1000)
    @given(positive_counts, alphas)
    def test_schedule_invariants(self, counts, alpha):
        for rule in (proportion_isdl, proportion_isdlplus):
            z = z_vector(rule, counts, alpha)
            assert all(0 < v <= 1 for v in z)
            assert all(a <= b for a, b in zip(z, z[1:]))
            assert z[-1] == max(z)
        assert proportion_isdlplus(counts, 1, alpha) < proportion_isdl(counts, 1, alpha)

    def test_degenerate(self):
        with pytest.raises(DegenerateCounts):
            proportion_isdl([0, 0], 1, 1.0)
        with pytest.raises(DegenerateCounts):
            proportion_isdlplus([0, 0], 2, 1.0)

    def test_unsorted_counts_rejected(self):
        with pytest.raises(ValueError):
            proportion_isdl([10, 50], 1, 1.0)


class TestSelectedImbalance:
    @settings(max_examples=1000)
    @given(st.lists(st.integers(1, 500), min_size=2, max_size=8, unique=True).map(lambda c: sorted(c, reverse=True)),
           alphas)
    def test_isdlplus_selects_no_more_majority(self, counts, alpha):
        isdl = selected_counts(proportion_isdl, counts, alpha)
        plus = selected_counts(proportion_isdlplus, counts, alpha)
        assert plus[0] <= isdl[0]

    def test_selected_imbalance_not_always_lower(self):
        # Two classes at alpha = 1: ISDL admits N_2 of each class while
        # ISDLplus halves the majority share, so its selection is more skewed.
        isdl = selected_counts(proportion_isdl, [100, 10], 1.0)
        plus = selected_counts(proportion_isdlplus, [100, 10], 1.0)
        assert isdl == [10, 10] and plus == [5, 10]
        assert max(plus) / min(plus) > max(isdl) / min(isdl)

    @given(positive_counts, alphas)
    def test_extreme_minority_admits_less_than_isdl(self, counts, alpha):
        L = len(counts)
        assert proportion_isdl(counts, L, alpha) == 1.0
        assert proportion_isdlplus(counts, L, alpha) < 1.0

    @settings(max_examples=300)
    @given(positive_counts, alphas)
    def test_isdlplus_above_isdl_exactly_when_majority_covers_the_pair(self, counts, alpha):
        # at rank l, ISDLplus exceeds ISDL iff N_1 > N_l + N_{L+1-l}
        L = len(counts)
        for l in range(1, L + 1):
            gap = counts[0] - counts[l - 1] - counts[L - l]
            plus, isdl = proportion_isdlplus(counts, l, alpha), proportion_isdl(counts, l, alpha)
            if gap > 0:
                assert plus > isdl
            elif gap < 0:
                assert plus < isdl

    def test_middle_rank_counterexample(self):
        assert proportion_isdlplus([100, 60, 50], 2, 1.0) == 0.5
        assert proportion_isdl([100, 60, 50], 2, 1.0) == 0.6

    def test_selected_imbalance_lower_at_strong_rebalancing(self):
        isdl = selected_counts(proportion_isdl, [100, 50, 10], 3.0)
        plus = selected_counts(proportion_isdlplus, [100, 50, 10], 3.0)
        assert max(plus) / min(plus) <= max(isdl) / min(isdl)


def _batch(labels, conf, ids=None):
    ids = np.arange(len(labels)) if ids is None else np.asarray(ids)
    return PseudoLabelBatch(ids, np.asarray(labels), np.asarray(conf, dtype=float))


class TestSelectPseudo:
    def test_full_fraction_for_extreme_minority(self):
        ranking = rank_classes([100, 4])
        schedule = SamplingSchedule(1.0, "ISDL", (0.04, 1.0))
        out = select_pseudo(_batch([1, 1, 1, 1], [0.6, 0.7, 0.8, 0.9]), ranking, schedule)
        assert sorted(out.sample_ids.tolist()) == [0, 1, 2, 3]

    def test_single_best_for_majority(self):
        ranking = rank_classes([100, 10])
        schedule = SamplingSchedule(1.0, "ISDL", (0.1, 1.0))
        conf = np.linspace(0.5, 0.95, 10)
        out = select_pseudo(_batch([0] * 10, conf), ranking, schedule)
        assert out.sample_ids.tolist() == [9]

    def test_floor_filters_first(self):
        ranking = rank_classes([5, 5])
        schedule = SamplingSchedule(0.0, "ISDL", (1.0, 1.0))
        out = select_pseudo(_batch([0, 1, 0, 1], [0.5] * 4), ranking, schedule, floor=0.99)
        assert len(out) == 0

    def test_ties_by_sample_id(self):
        ranking = rank_classes([10, 1])
        schedule = SamplingSchedule(1.0, "ISDL", (0.5, 1.0))
        out = select_pseudo(_batch([0] * 4, [0.8] * 4, ids=[7, 3, 9, 5]), ranking, schedule)
        assert out.sample_ids.tolist() == [3, 5]

    def test_empty_batch(self):
        ranking = rank_classes([3, 1])
        out = select_pseudo(_batch([], []), ranking, SamplingSchedule(1.0, "ISDL", (1.0, 1.0)))
        assert len(out) == 0

    def test_schedule_length_checked(self):
        with pytest.raises(ShapeError):
            select_pseudo(_batch([0], [0.9]), rank_classes([3, 1]), SamplingSchedule(1.0, "ISDL", (1.0,)))

    @settings(max_examples=100)
    @given(st.data())
    def test_permutation_invariant(self, data):
        n = data.draw(st.integers(0, 40))
        labels = data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
        conf = data.draw(st.lists(st.sampled_from([0.4, 0.5, 0.6, 0.9]), min_size=n, max_size=n))
        perm = data.draw(st.permutations(range(n)))
        ranking = rank_classes([30, 12, 3])
        schedule = sampling_schedule(ranking, data.draw(alphas), data.draw(st.sampled_from(["ISDL", "ISDLplus"])))
        batch = _batch(labels, conf)
        a = select_pseudo(batch, ranking, schedule, floor=0.45)
        b = select_pseudo(batch.subset(np.array(perm, dtype=np.int64)), ranking, schedule, floor=0.45)
        assert a.sample_ids.tolist() == b.sample_ids.tolist()

    @given(st.lists(st.integers(0, 2), max_size=30), positive_counts.filter(lambda c: len(c) == 3))
    def test_alpha_zero_takes_everything_above_floor(self, labels, counts):
        conf = np.linspace(0.2, 0.9, len(labels))
        ranking = rank_classes(counts)
        for variant in ("ISDL", "ISDLplus"):
            out = select_pseudo(_batch(labels, conf), ranking, sampling_schedule(ranking, 0.0, variant), floor=0.5)
            assert len(out) == int(np.sum(conf >= 0.5))


# --------------------------------------------------------------------------
# loop

CFG = TrainConfig(epochs=8, batch_size=32, base_lr=1e-2, hidden_units=4)


def _problem(n_unlabeled=60, seed=0):
    spec = SyntheticSpec(counts=[60, 20, 6], n_features=2, n_unlabeled=n_unlabeled, separation=4.0)
    return make_synthetic(spec, seed)


def _factory(ds):
    return lambda: MLPClassifier(ds.n_classes, ds.n_features, CFG.hidden_units)


class TestSelfTrain:
    def test_empty_pool_equals_baseline(self):
        ds, pool = _problem(n_unlabeled=0)
        result = self_train(ds, pool, _factory(ds), CFG, SelfTrainConfig(generations=3), seed=5)
        baseline = _factory(ds)()
        baseline.fit(ds, CFG, 5)
        assert result.model.params.tobytes() == baseline.params.tobytes()
        assert all(sum(g.n_selected) == 0 for g in result.generations[1:])

    def test_alpha_zero_ingests_whole_pool(self):
        ds, pool = _problem()
        cfg = SelfTrainConfig(generations=1, alpha=0.0, confidence_floor=0.0)
        result = self_train(ds, pool, _factory(ds), CFG, cfg, seed=0)
        assert sum(result.generations[1].n_selected) == len(pool)
        assert len(result.working_set) == len(ds) + len(pool)

    def test_stats_shape_and_counts(self):
        ds, pool = _problem()
        cfg = SelfTrainConfig(generations=3, alpha=1.0, variant="ISDLplus")
        result = self_train(ds, pool, _factory(ds), CFG, cfg, seed=1)
        assert [g.generation for g in result.generations] == [0, 1, 2, 3]
        total = sum(sum(g.n_selected) for g in result.generations)
        assert len(result.working_set) == len(ds) + total
        assert len(set(result.working_set.ids.tolist())) == len(result.working_set)
        for prev, g in zip(result.generations, result.generations[1:]):
            assert np.array_equal(np.add(prev.working_counts, g.n_selected), g.working_counts)

    def test_removal_flag_off_allows_reselection(self):
        ds, pool = _problem()
        cfg = SelfTrainConfig(generations=2, alpha=0.0, remove_selected_from_pool=False)
        result = self_train(ds, pool, _factory(ds), CFG, cfg, seed=0)
        assert sum(result.generations[2].n_selected) == len(pool)

    def test_deterministic(self):
        ds, pool = _problem()
        cfg = SelfTrainConfig(generations=2, alpha=1.0)
        a = self_train(ds, pool, _factory(ds), CFG, cfg, seed=2)
        b = self_train(ds, pool, _factory(ds), CFG, cfg, seed=2)
        assert a.model.params.tobytes() == b.model.params.tobytes()

    def test_empty_labeled(self):
        empty = LabeledDataset(np.zeros((0, 2)), [], ["a", "b"])
        with pytest.raises(EmptyDataset):
            self_train(empty, UnlabeledPool(np.zeros((0, 2))), _factory(empty), CFG, SelfTrainConfig(), 0)

    def test_dimension_mismatch(self):
        ds, _ = _problem()
        with pytest.raises(ShapeError):
            self_train(ds, UnlabeledPool(np.zeros((3, 5))), _factory(ds), CFG, SelfTrainConfig(), 0)

    def test_generation_csv(self, tmp_path):
        ds, pool = _problem()
        result = self_train(ds, pool, _factory(ds), CFG, SelfTrainConfig(generations=1), seed=0)
        path = tmp_path / "g.csv"
        write_generation_csv(path, [({"variant": "ISDL"}, result.generations)], ds.class_names)
        lines = path.read_text().splitlines()
        assert lines[0] == "variant,generation,class,rank,z,n_pseudo,n_selected,working_count"
        assert len(lines) == 1 + 2 * ds.n_classes
