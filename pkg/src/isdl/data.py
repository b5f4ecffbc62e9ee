"""Datasets, label mapping, stratified splitting and synthetic data.

Datasets are small frozen containers around numpy arrays.  Operations that
derive a new dataset (splitting, appending pseudo-labels) always return a
fresh object and never mutate their inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyDataset, InvalidRatios, InvalidSpec, ShapeError, UnknownDiagnosis

__all__ = [
    "LabeledDataset",
    "UnlabeledPool",
    "SplitRatios",
    "SyntheticSpec",
    "TARGET_CLASSES",
    "map_diagnosis_label",
    "stratified_split",
    "class_counts",
    "imbalance_ratio",
    "make_synthetic",
    "make_synthetic_test",
    "read_labeled_csv",
    "read_unlabeled_csv",
    "write_labeled_csv",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix ``(N, d)`` with integer labels in ``[0, L)``.

    ``ids`` defaults to ``0..N-1`` and is carried through splits so that
    samples stay traceable (CSV ``id`` column, explain requests).
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple
    ids: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, 0)
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if X.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ShapeError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if X.shape[1] < 1:
            raise ShapeError("need at least one feature column")
        names = tuple(self.class_names)
        if len(names) < 2:
            raise InvalidSpec("need at least two classes")
        if y.size and (y.min() < 0 or y.max() >= len(names)):
            raise ValueError(f"labels must lie in [0, {len(names)})")
        ids = np.arange(len(y), dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != y.shape:
            raise ShapeError("ids must have one entry per sample")
        object.__setattr__(self, "features", _readonly(X))
        object.__setattr__(self, "labels", _readonly(y))
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "ids", _readonly(ids))

    def __len__(self):
        return self.labels.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index, dtype=np.int64)
        return LabeledDataset(self.features[index], self.labels[index], self.class_names, self.ids[index])

    def append(self, features, labels, ids) -> "LabeledDataset":
        features = np.asarray(features, dtype=np.float64).reshape(-1, self.n_features)
        return LabeledDataset(
            np.vstack([self.features, features]),
            np.concatenate([self.labels, np.asarray(labels, dtype=np.int64)]),
            self.class_names,
            np.concatenate([self.ids, np.asarray(ids, dtype=np.int64)]),
        )


@dataclass(frozen=True, eq=False)
class UnlabeledPool:
    features: np.ndarray
    sample_ids: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise ShapeError(f"pool features must be 2-D, got shape {X.shape}")
        ids = np.arange(X.shape[0], dtype=np.int64) if self.sample_ids is None else np.asarray(self.sample_ids, dtype=np.int64)
        if ids.shape != (X.shape[0],):
            raise ShapeError("sample_ids must have one entry per row")
        if np.unique(ids).size != ids.size:
            raise ValueError("sample_ids must be unique")
        object.__setattr__(self, "features", _readonly(X))
        object.__setattr__(self, "sample_ids", _readonly(ids))

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def without(self, sample_ids) -> "UnlabeledPool":
        keep = ~np.isin(self.sample_ids, np.asarray(sample_ids, dtype=np.int64))
        return UnlabeledPool(self.features[keep], self.sample_ids[keep])


@dataclass(frozen=True)
class SplitRatios:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1

    def __post_init__(self):
        parts = (self.train, self.val, self.test)
        if not all(0.0 < p < 1.0 for p in parts):
            raise InvalidRatios(f"each ratio must lie in (0, 1), got {parts}")
        if abs(sum(parts) - 1.0) > 1e-12:
            raise InvalidRatios(f"ratios must sum to 1, got {sum(parts)!r}")

    def as_tuple(self):
        return (self.train, self.val, self.test)


# --------------------------------------------------------------------------
# label mapping

TARGET_CLASSES = ("NV", "MEL", "BCC", "BKL", "AK", "SCC", "VASC", "DF", "Unknown")

_BKL_2020 = ("seborrheic keratosis", "lichenoid keratosis", "solar lentigo", "lentigo nos", "nos")
_UNKNOWN_2020 = ("cafe-au-lait macule", "atypical melanocytic proliferation", "unknown", "atypical")

_DIAGNOSIS_TABLE = {
    2018: {"nv": "NV", "mel": "MEL", "bcc": "BCC", "bkl": "BKL", "akiec": "AK", "vasc": "VASC", "df": "DF"},
    2019: {
        "nv": "NV", "mel": "MEL", "bcc": "BCC", "bkl": "BKL", "ak": "AK",
        "scc": "SCC", "vasc": "VASC", "df": "DF",
    },
    2020: {
        "naevusn": "NV", "naevus": "NV", "nevus": "NV", "melanoma": "MEL",
        **{k: "BKL" for k in _BKL_2020},
        **{k: "Unknown" for k in _UNKNOWN_2020},
    },
}


def map_diagnosis_label(raw: str, year: int) -> str:
    """Map an ISIC diagnosis string of a given challenge year to its target class.

    Matching ignores case and surrounding whitespace.  Strings outside the
    year's vocabulary raise :class:`UnknownDiagnosis`.
    """
    try:
        table = _DIAGNOSIS_TABLE[int(year)]
    except (KeyError, TypeError, ValueError):
        raise UnknownDiagnosis(raw, year) from None
    key = " ".join(str(raw).strip().lower().split())
    if key not in table:
        raise UnknownDiagnosis(raw, year)
    return table[key]


# --------------------------------------------------------------------------
# counts and splitting

def class_counts(ds: LabeledDataset) -> np.ndarray:
    if len(ds) == 0:
        raise EmptyDataset("dataset has no samples")
    return ds.class_counts()


def imbalance_ratio(ds_or_counts) -> float:
    """Largest class count over the smallest nonzero one."""
    if isinstance(ds_or_counts, LabeledDataset):
        counts = class_counts(ds_or_counts)
    else:
        counts = np.asarray(ds_or_counts)
    nonzero = counts[counts > 0]
    if nonzero.size == 0:
        raise EmptyDataset("all class counts are zero")
    return float(nonzero.max() / nonzero.min())


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    # Largest remainder; equal remainders resolve in split order (train, val, test).
    quotas = [n * r for r in ratios]
    alloc = [math.floor(q) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda k: (-(quotas[k] - alloc[k]), k))
    for k in order[: n - sum(alloc)]:
        alloc[k] += 1
    if n > 0 and alloc[0] == 0:
        donor = max(range(1, len(alloc)), key=lambda k: (alloc[k], -k))
        alloc[donor] -= 1
        alloc[0] += 1
    return alloc


def stratified_split(ds: LabeledDataset, ratios: SplitRatios, seed: int):
    """Split into (train, val, test) keeping per-class proportions.

    Each class is shuffled with a generator seeded from ``seed`` and cut
    according to a largest-remainder allocation of ``count * ratio``.
    Within each split, samples keep their original relative order.
    """
    if not isinstance(ratios, SplitRatios):
        ratios = SplitRatios(*ratios)
    counts = class_counts(ds)
    if np.any(counts == 0):
        missing = [ds.class_names[c] for c in np.flatnonzero(counts == 0)]
        raise EmptyDataset(f"classes without samples: {missing}")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in range(ds.n_classes):
        members = np.flatnonzero(ds.labels == c)
        members = members[rng.permutation(members.size)]
        start = 0
        for k, size in enumerate(_allocate(members.size, ratios.as_tuple())):
            parts[k].append(members[start:start + size])
            start += size
    return tuple(ds.subset(np.sort(np.concatenate(p))) for p in parts)


# --------------------------------------------------------------------------
# synthetic data

@dataclass
class SyntheticSpec:
    """Isotropic Gaussian blobs, one per class.

    ``means`` may be given explicitly (``L x d``); otherwise they are drawn
    once from ``N(0, separation^2)`` with ``layout_seed`` so that the class
    geometry is fixed by this object while ``make_synthetic``'s seed only
    varies the samples.
    """

    counts: Sequence[int]
    n_features: int = 2
    n_unlabeled: int = 0
    means: Sequence[Sequence[float]] | None = None
    scales: Sequence[float] | float = 1.0
    separation: float = 3.0
    layout_seed: int = 0
    test_counts: Sequence[int] | None = None
    class_names: Sequence[str] | None = None

    @property
    def n_classes(self) -> int:
        return len(self.counts)

    def validate(self):
        if self.n_classes < 2:
            raise InvalidSpec("need at least two classes")
        if self.n_features < 1:
            raise InvalidSpec("n_features must be >= 1")
        if any(int(c) < 0 for c in self.counts) or self.n_unlabeled < 0:
            raise InvalidSpec("counts must be nonnegative")
        if sum(int(c) for c in self.counts) == 0:
            raise InvalidSpec("all class counts are zero")
        if self.means is not None and np.shape(self.means) != (self.n_classes, self.n_features):
            raise InvalidSpec(f"means must have shape ({self.n_classes}, {self.n_features})")
        if np.ndim(self.scales) and len(self.scales) != self.n_classes:
            raise InvalidSpec("scales must be a scalar or one value per class")
        if np.any(np.asarray(self.scales, dtype=float) <= 0):
            raise InvalidSpec("scales must be positive")
        if self.test_counts is not None and len(self.test_counts) != self.n_classes:
            raise InvalidSpec("test_counts must have one entry per class")

    def resolved_means(self) -> np.ndarray:
        if self.means is not None:
            return np.asarray(self.means, dtype=np.float64)
        rng = np.random.default_rng(self.layout_seed)
        return rng.normal(0.0, self.separation, size=(self.n_classes, self.n_features))

    def resolved_scales(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.scales, dtype=np.float64), (self.n_classes,)).copy()

    def names(self) -> tuple:
        if self.class_names is not None:
            return tuple(self.class_names)
        return tuple(f"c{k}" for k in range(self.n_classes))


def _draw_blobs(spec: SyntheticSpec, counts, rng):
    means, scales = spec.resolved_means(), spec.resolved_scales()
    labels = np.repeat(np.arange(spec.n_classes), counts)
    noise = rng.standard_normal((labels.size, spec.n_features))
    return means[labels] + noise * scales[labels, None], labels


def make_synthetic(spec: SyntheticSpec, seed: int):
    """Draw a labeled dataset and an unlabeled pool from ``spec``.

    The pool is sampled from the class mixture weighted by the labeled
    class proportions; its true labels are not exposed.  Pool ids continue
    after the labeled ids so the two never collide.
    """
    spec.validate()
    counts = np.asarray(spec.counts, dtype=np.int64)
    rng = np.random.default_rng(seed)
    X, y = _draw_blobs(spec, counts, rng)
    priors = counts / counts.sum()
    pool_counts = rng.multinomial(spec.n_unlabeled, priors)
    Z, _ = _draw_blobs(spec, pool_counts, rng)
    Z = Z[rng.permutation(Z.shape[0])]
    ds = LabeledDataset(X, y, spec.names())
    pool = UnlabeledPool(Z.reshape(-1, spec.n_features), np.arange(Z.shape[0]) + len(ds))
    return ds, pool


def make_synthetic_test(spec: SyntheticSpec, seed: int) -> LabeledDataset:
    """Independent held-out set drawn from the same blobs with ``spec.test_counts``."""
    spec.validate()
    if spec.test_counts is None:
        raise InvalidSpec("spec has no test_counts")
    rng = np.random.default_rng(seed)
    X, y = _draw_blobs(spec, np.asarray(spec.test_counts, dtype=np.int64), rng)
    return LabeledDataset(X, y, spec.names(), ids=np.arange(len(y)) + 1_000_000_000)


# --------------------------------------------------------------------------
# CSV

def read_labeled_csv(path, class_names: Sequence[str] | None = None) -> LabeledDataset:
    """Read ``id,label,f0..f{d-1}``.

    ``label`` may be an integer index or a class name.  Without
    ``class_names``, names are taken in sorted order of appearance.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["id", "label"] or len(header) < 3:
            raise ShapeError(f"{path}: expected header id,label,f0,..., got {header[:3]}")
        rows = [r for r in reader if r]
    ids = [int(r[0]) for r in rows]
    raw = [r[1] for r in rows]
    X = np.array([[float(v) for v in r[2:]] for r in rows], dtype=np.float64).reshape(len(rows), len(header) - 2)
    if class_names is None:
        if all(s.lstrip("-").isdigit() for s in raw):
            n = max(int(s) for s in raw) + 1 if raw else 2
            class_names = [str(k) for k in range(max(n, 2))]
        else:
            class_names = sorted(set(raw))
    names = list(class_names)
    lookup = {name: k for k, name in enumerate(names)}
    y = [lookup[s] if s in lookup else int(s) for s in raw]
    return LabeledDataset(X, y, tuple(names), ids)


def read_unlabeled_csv(path) -> UnlabeledPool:
    """Read ``id,f0..f{d-1}`` (a ``label`` column, if present, is ignored)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        skip = 2 if header[:2] == ["id", "label"] else 1
        rows = [r for r in reader if r]
    ids = [int(r[0]) for r in rows]
    X = np.array([[float(v) for v in r[skip:]] for r in rows], dtype=np.float64).reshape(len(rows), len(header) - skip)
    return UnlabeledPool(X, ids)


def write_labeled_csv(ds: LabeledDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"] + [f"f{j}" for j in range(ds.n_features)])
        for i, label, row in zip(ds.ids, ds.labels, ds.features):
            w.writerow([int(i), ds.class_names[label]] + ["%.17g" % v for v in row])
