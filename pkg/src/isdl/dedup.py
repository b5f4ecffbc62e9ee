"""Byte-identical duplicate detection across train/test corpora.

Removal policy:

1. among copies spread over the training sets, keep one (earliest year,
   then smallest ``file_id``) and drop the others as
   ``cross-train-duplicate``;
2. drop every remaining training file whose bytes also occur in a test set
   as ``train-test-leak``.

Test sets are never modified.
"""

from __future__ import annotations

import csv
import hashlib
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

__all__ = [
    "CorpusEntry",
    "DuplicateReport",
    "fingerprint",
    "entry_from_file",
    "read_manifest",
    "find_duplicates",
    "apply_removal_policy",
    "summarize",
    "format_summary",
    "write_removed_csv",
]

CROSS_TRAIN = "cross-train-duplicate"
LEAK = "train-test-leak"
_CHUNK = 1 << 20


@dataclass(frozen=True, order=True)
class CorpusEntry:
    set_id: str
    file_id: str
    digest: str
    byte_length: int = 0

    @property
    def kind(self) -> str:
        return set_kind(self.set_id)


def set_kind(set_id: str) -> str:
    s = set_id.lower()
    if s.startswith("train"):
        return "train"
    if s.startswith("test"):
        return "test"
    raise ValueError(f"cannot tell whether set {set_id!r} is a train or test set")


def set_year(set_id: str):
    m = re.search(r"(\d{4})", set_id)
    return int(m.group(1)) if m else None


def _keep_key(e: CorpusEntry):
    year = set_year(e.set_id)
    return (year is None, year or 0, e.file_id, e.set_id)


def fingerprint(source) -> str:
    """SHA-256 hex digest of ``bytes``, a binary file object, or a path."""
    h = hashlib.sha256()
    if isinstance(source, (bytes, bytearray, memoryview)):
        h.update(source)
    elif hasattr(source, "read"):
        for chunk in iter(lambda: source.read(_CHUNK), b""):
            h.update(chunk)
    else:
        with open(source, "rb") as fh:
            for chunk in iter(lambda: fh.read(_CHUNK), b""):
                h.update(chunk)
    return h.hexdigest()


def entry_from_file(set_id: str, file_id: str, path) -> CorpusEntry:
    path = Path(path)
    return CorpusEntry(set_id, file_id, fingerprint(path), path.stat().st_size)


def read_manifest(path) -> list:
    """Fingerprint every file listed in a ``set_id,file_id,path`` CSV.

    Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    corpus = []
    for row in rows:
        p = Path(row["path"])
        if not p.is_absolute():
            p = path.parent / p
        corpus.append(entry_from_file(row["set_id"], row["file_id"], p))
    return corpus


def _check_unique(corpus):
    keys = [(e.set_id, e.file_id) for e in corpus]
    if len(set(keys)) != len(keys):
        raise ValueError("(set_id, file_id) pairs must be unique")


def find_duplicates(corpus) -> list:
    """Groups (size >= 2) of entries sharing a digest, ordered by digest, set_id, file_id."""
    by_digest = defaultdict(list)
    for e in corpus:
        by_digest[e.digest].append(e)
    return [sorted(g, key=lambda e: (e.set_id, e.file_id))
            for _, g in sorted(by_digest.items()) if len(g) > 1]


@dataclass
class DuplicateReport:
    groups: list = field(default_factory=list)
    removed: list = field(default_factory=list)  # (set_id, file_id, reason)
    set_ids: list = field(default_factory=list)

    def removed_keys(self) -> set:
        return {(s, f) for s, f, _ in self.removed}

    def summary(self) -> dict:
        counts = {s: 0 for s in self.set_ids}
        for s, _, _ in self.removed:
            counts[s] = counts.get(s, 0) + 1
        return counts


def apply_removal_policy(corpus):
    """Return ``(cleaned_corpus, report)``; cleaned keeps the input order."""
    corpus = list(corpus)
    _check_unique(corpus)
    groups = find_duplicates(corpus)
    removed = {}
    for g in groups:
        train = sorted((e for e in g if e.kind == "train"), key=_keep_key)
        has_test = any(e.kind == "test" for e in g)
        for e in train[1:]:
            removed[(e.set_id, e.file_id)] = CROSS_TRAIN
        if has_test and train:
            removed[(train[0].set_id, train[0].file_id)] = LEAK
    cleaned = [e for e in corpus if (e.set_id, e.file_id) not in removed]
    report = DuplicateReport(
        groups=groups,
        removed=sorted((s, f, r) for (s, f), r in removed.items()),
        set_ids=sorted({e.set_id for e in corpus}),
    )
    return cleaned, report


def summarize(report: DuplicateReport) -> list:
    """Rows ``(set_id, in_duplicate_groups, removed)`` per set, then a ``Total`` row."""
    members = defaultdict(int)
    for g in report.groups:
        for e in g:
            members[e.set_id] += 1
    removed = report.summary()
    sets = sorted(set(report.set_ids) | set(members) | set(removed))
    rows = [(s, members.get(s, 0), removed.get(s, 0)) for s in sets]
    rows.append(("Total", sum(r[1] for r in rows), sum(r[2] for r in rows)))
    return rows


def format_summary(rows) -> str:
    """Fixed-width text table of :func:`summarize` rows."""
    header = ("Set", "In duplicate groups", "Removed")
    width = max([len(header[0])] + [len(str(r[0])) for r in rows])
    lines = [f"{header[0]:<{width}}  {header[1]:>19}  {header[2]:>7}"]
    lines.append("-" * len(lines[0]))
    for s, m, r in rows:
        if s == "Total":
            lines.append("-" * len(lines[0]))
        lines.append(f"{s:<{width}}  {m:>19,}  {r:>7,}")
    return "\n".join(lines) + "\n"


def write_removed_csv(report: DuplicateReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["set_id", "file_id", "reason"])
        w.writerows(report.removed)
