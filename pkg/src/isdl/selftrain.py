"""Class-rebalancing self-training.

Each generation the current teacher labels the unlabeled pool, and for the
class at count rank ``l`` (rank 1 = majority) only the top-confidence
fraction ``z_l`` of its pseudo-labels is admitted.  Two proportion rules are
provided:

``ISDL``
    ``z_l = (N_{L+1-l} / N_1) ** alpha``
``ISDLplus``
    ``z_l = ((N_{L+1-l} + N_1 - N_l) / (2 N_1)) ** alpha``

where ``N`` are the class counts sorted in descending order.  Minority ranks
therefore get a larger share, and ``alpha`` scales how aggressive the
rebalancing is (``alpha = 0`` admits everything).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .classifier import ClassifierModel, TrainConfig
from .data import LabeledDataset, UnlabeledPool
from .errors import DegenerateCounts, EmptyDataset, ShapeError

logger = logging.getLogger(__name__)

__all__ = [
    "VARIANTS",
    "ClassRanking",
    "SamplingSchedule",
    "PseudoLabelBatch",
    "SelfTrainConfig",
    "GenerationStats",
    "SelfTrainResult",
    "rank_classes",
    "proportion_isdl",
    "proportion_isdlplus",
    "sampling_schedule",
    "pseudo_label",
    "select_pseudo",
    "self_train",
    "write_generation_csv",
]

VARIANTS = ("ISDL", "ISDLplus")


@dataclass(frozen=True)
class ClassRanking:
    """``order[r]`` is the class at rank ``r + 1``; ``counts`` follow that order."""

    order: tuple
    counts: tuple

    def rank_of(self, cls: int) -> int:
        return self.order.index(cls) + 1

    @property
    def n_classes(self) -> int:
        return len(self.order)


def rank_classes(counts: Sequence[int]) -> ClassRanking:
    """Sort classes by count, descending; ties go to the lower class index."""
    counts = [int(c) for c in counts]
    if len(counts) < 2:
        raise ValueError("need at least two classes to rank")
    order = sorted(range(len(counts)), key=lambda c: (-counts[c], c))
    return ClassRanking(tuple(order), tuple(counts[c] for c in order))


def _check_ranked(counts_ranked, l):
    N = [float(c) for c in counts_ranked]
    if any(a < b for a, b in zip(N, N[1:])):
        raise ValueError("counts must be sorted in nonincreasing order")
    if not N or N[0] <= 0:
        raise DegenerateCounts("majority class count N_1 is zero")
    if not 1 <= l <= len(N):
        raise ValueError(f"rank {l} outside 1..{len(N)}")
    return N


def proportion_isdl(counts_ranked, l: int, alpha: float) -> float:
    N = _check_ranked(counts_ranked, l)
    L = len(N)
    return (N[L - l] / N[0]) ** alpha


def proportion_isdlplus(counts_ranked, l: int, alpha: float) -> float:
    N = _check_ranked(counts_ranked, l)
    L = len(N)
    return ((N[L - l] + (N[0] - N[l - 1])) / (2.0 * N[0])) ** alpha


_PROPORTION = {"ISDL": proportion_isdl, "ISDLplus": proportion_isdlplus}


@dataclass(frozen=True)
class SamplingSchedule:
    alpha: float
    variant: str
    z: tuple  # indexed by rank - 1

    def for_class(self, ranking: ClassRanking, cls: int) -> float:
        return self.z[ranking.rank_of(cls) - 1]


def sampling_schedule(ranking: ClassRanking, alpha: float, variant: str) -> SamplingSchedule:
    if variant not in _PROPORTION:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    rule = _PROPORTION[variant]
    z = tuple(rule(ranking.counts, l, alpha) for l in range(1, ranking.n_classes + 1))
    return SamplingSchedule(float(alpha), variant, z)


@dataclass(frozen=True, eq=False)
class PseudoLabelBatch:
    sample_ids: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray

    def __len__(self):
        return self.sample_ids.shape[0]

    def subset(self, index) -> "PseudoLabelBatch":
        return PseudoLabelBatch(self.sample_ids[index], self.labels[index], self.confidence[index])


def pseudo_label(model: ClassifierModel, pool: UnlabeledPool) -> PseudoLabelBatch:
    if len(pool) == 0:
        empty = np.zeros(0)
        return PseudoLabelBatch(empty.astype(np.int64), empty.astype(np.int64), empty)
    proba = model.predict_proba(pool.features)
    labels = np.argmax(proba, axis=1)
    return PseudoLabelBatch(pool.sample_ids.copy(), labels, proba[np.arange(len(labels)), labels])


def select_pseudo(batch: PseudoLabelBatch, ranking: ClassRanking, schedule: SamplingSchedule,
                  floor: float = 0.0) -> PseudoLabelBatch:
    """Keep the ``ceil(z_l * n_c)`` most confident above-floor pseudo-labels of each class.

    A pseudo-label passes the floor when its confidence is ``>= floor``.
    Equal confidences are resolved by ascending sample id.  The result is
    ordered by (class, descending confidence, sample id), so it does not
    depend on the order of ``batch``.
    """
    if len(schedule.z) != ranking.n_classes:
        raise ShapeError("schedule length does not match the number of ranked classes")
    keep = []
    for cls in range(ranking.n_classes):
        idx = np.flatnonzero((batch.labels == cls) & (batch.confidence >= floor))
        if idx.size == 0:
            continue
        idx = idx[np.lexsort((batch.sample_ids[idx], -batch.confidence[idx]))]
        # shrink by one part in 1e12 so that products like 0.1 * 10 do not round up to 2
        n_take = math.ceil(schedule.for_class(ranking, cls) * idx.size * (1.0 - 1e-12))
        keep.append(idx[:max(0, min(n_take, idx.size))])
    if not keep:
        return batch.subset(np.zeros(0, dtype=np.int64))
    return batch.subset(np.concatenate(keep))


@dataclass(frozen=True)
class SelfTrainConfig:
    generations: int = 5
    alpha: float = 3.0
    variant: str = "ISDL"
    confidence_floor: float = 0.0
    remove_selected_from_pool: bool = True
    recompute_ranking_each_generation: bool = True

    def __post_init__(self):
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not 0.0 <= self.confidence_floor < 1.0:
            raise ValueError("confidence_floor must lie in [0, 1)")


@dataclass
class GenerationStats:
    generation: int
    ranking: ClassRanking | None = None
    z: tuple = ()
    n_pseudo: tuple = ()
    n_selected: tuple = ()
    working_counts: tuple = ()
    metrics: dict | None = None

    def rows(self, class_names):
        """One CSV row per class: generation, class, rank, z, n_pseudo, n_selected, working_count."""
        out = []
        for c, name in enumerate(class_names):
            rank = self.ranking.rank_of(c) if self.ranking else ""
            z = self.z[rank - 1] if self.ranking else ""
            out.append([
                self.generation, name, rank, z,
                self.n_pseudo[c] if self.n_pseudo else 0,
                self.n_selected[c] if self.n_selected else 0,
                self.working_counts[c],
            ])
        return out


@dataclass
class SelfTrainResult:
    model: ClassifierModel
    generations: list = field(default_factory=list)
    working_set: LabeledDataset | None = None
    teacher: ClassifierModel | None = None


def self_train(labeled: LabeledDataset, pool: UnlabeledPool, model_factory: Callable[[], ClassifierModel],
               train_cfg: TrainConfig, st_cfg: SelfTrainConfig, seed: int,
               evaluate: Callable[[ClassifierModel], dict] | None = None) -> SelfTrainResult:
    """Run the teacher plus ``st_cfg.generations`` rebalanced pseudo-labeling rounds.

    Every model, including the generation-0 teacher, is trained from scratch
    with the same ``seed`` so that runs differing only in their working set
    are directly comparable; with nothing selected the final model is the
    supervised baseline bit for bit.  ``evaluate``, if given, is called on
    each generation's model and its result stored in that generation's stats.
    """
    if len(labeled) == 0:
        raise EmptyDataset("labeled set is empty")
    if len(pool) and pool.n_features != labeled.n_features:
        raise ShapeError(f"pool has {pool.n_features} features, labeled set has {labeled.n_features}")

    def train(ds):
        model = model_factory()
        model.fit(ds, train_cfg, seed)
        return model

    working = labeled
    model = train(working)
    teacher = model
    stats = [GenerationStats(0, working_counts=tuple(int(c) for c in working.class_counts()),
                             metrics=evaluate(model) if evaluate else None)]
    ranking = rank_classes(labeled.class_counts())
    for gen in range(1, st_cfg.generations + 1):
        if st_cfg.recompute_ranking_each_generation:
            ranking = rank_classes(working.class_counts())
        schedule = sampling_schedule(ranking, st_cfg.alpha, st_cfg.variant)
        batch = pseudo_label(model, pool)
        chosen = select_pseudo(batch, ranking, schedule, st_cfg.confidence_floor)
        L = labeled.n_classes
        above = batch.labels[batch.confidence >= st_cfg.confidence_floor]
        n_pseudo = np.bincount(above, minlength=L)
        n_selected = np.bincount(chosen.labels, minlength=L)
        if len(chosen):
            rows = pool.features[_rows_for(pool, chosen.sample_ids)]
            working = working.append(rows, chosen.labels, chosen.sample_ids)
            if st_cfg.remove_selected_from_pool:
                pool = pool.without(chosen.sample_ids)
            model = train(working)
        logger.debug("generation %d: selected %s", gen, n_selected.tolist())
        stats.append(GenerationStats(
            gen, ranking, schedule.z, tuple(int(c) for c in n_pseudo), tuple(int(c) for c in n_selected),
            tuple(int(c) for c in working.class_counts()), evaluate(model) if evaluate else None,
        ))
    return SelfTrainResult(model, stats, working, teacher)


def _rows_for(pool: UnlabeledPool, sample_ids) -> np.ndarray:
    position = {int(s): i for i, s in enumerate(pool.sample_ids)}
    return np.array([position[int(s)] for s in sample_ids], dtype=np.int64)


def write_generation_csv(path, results, class_names) -> None:
    """``results`` is an iterable of ``(label_fields: dict, GenerationStats list)``.

    ``label_fields`` are written as leading columns (e.g. variant, alpha, seed).
    """
    results = list(results)
    lead = list(results[0][0].keys()) if results else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(lead + ["generation", "class", "rank", "z", "n_pseudo", "n_selected", "working_count"])
        for fields, gens in results:
            for g in gens:
                for row in g.rows(class_names):
                    if row[3] != "":
                        row[3] = "%.8g" % row[3]
                    w.writerow([fields[k] for k in lead] + row)
