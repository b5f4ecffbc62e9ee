"""Config-driven experiment harness.

A config names a dataset (synthetic blobs or CSV files), a split, a
classifier and self-training setup, the arms to run (``naive`` is the
supervised baseline, ``ISDL``/``ISDLplus`` the self-training variants), the
alpha values and the seeds.  :func:`run` executes every arm for every seed
and writes a deterministic output tree::

    report.json            per-run metrics, generation stats, aggregates
    generations.csv        per-generation class statistics (self-training arms only)
    <run>/roc_<class>.csv  one-vs-rest ROC points
    <run>/explain_*        requested attribution heatmaps

Seed derivation: every randomness source of seed ``s`` comes from
``SeedSequence([root_seed, s])``, independent of the arm, so all arms of a
seed see the same data, split and initialization.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifier import MLPClassifier, TrainConfig
from .data import (
    LabeledDataset,
    SplitRatios,
    SyntheticSpec,
    UnlabeledPool,
    make_synthetic,
    make_synthetic_test,
    read_labeled_csv,
    read_unlabeled_csv,
    stratified_split,
)
from .errors import ConfigError, ISDLError
from .kernel_shap import FULL, ExplainerConfig, explain, render_heatmap, tile_grouping
from .metrics import round_floats, evaluate, write_roc_csv
from .selftrain import VARIANTS, SelfTrainConfig, pseudo_label, rank_classes, sampling_schedule, select_pseudo, \
    self_train, write_generation_csv

__all__ = [
    "ARMS",
    "ExperimentConfig",
    "DatasetConfig",
    "ExplainRequest",
    "load_config",
    "parse_config",
    "run_seeds",
    "prepare_data",
    "run",
    "aggregate_runs",
    "scalar_metrics",
    "sweep_alpha",
    "compare",
    "load_report",
    "explain_instance",
]

logger = logging.getLogger(__name__)

NAIVE = "naive"
ARMS = (NAIVE,) + VARIANTS
REPORT_NAME = "report.json"


# --------------------------------------------------------------------------
# config

@dataclass(frozen=True)
class DatasetConfig:
    source: str
    synthetic: SyntheticSpec | None = None
    labeled: Path | None = None
    unlabeled: Path | None = None
    test: Path | None = None
    class_names: tuple | None = None


@dataclass(frozen=True)
class ExplainRequest:
    instance: int
    top_n: int = 3
    variant: str | None = None
    alpha: float | None = None
    seed: int | None = None
    budget: int | str = FULL
    background: str = "train_mean"
    image_shape: tuple | None = None
    tile: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    split: SplitRatios = field(default_factory=SplitRatios)
    split_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    self_train: SelfTrainConfig = field(default_factory=SelfTrainConfig)
    variants: tuple = ARMS
    alphas: tuple = (3.0,)
    seeds: tuple = (0,)
    root_seed: int = 0
    output_dir: Path | None = None
    explain: tuple = ()
    top_k: tuple = (1, 2)
    record_timing: bool = False

    def arms(self) -> list:
        """``(variant, alpha)`` pairs in run order; naive has no alpha."""
        out = []
        for v in self.variants:
            if v == NAIVE:
                out.append((v, None))
            else:
                out.extend((v, a) for a in self.alphas)
        return out

    def to_dict(self) -> dict:
        d = {
            "dataset": {k: (str(v) if isinstance(v, Path) else v) for k, v in asdict(self.dataset).items()
                        if v is not None},
            "split": {"train": self.split.train, "val": self.split.val, "test": self.split.test,
                      "seed": self.split_seed},
            "train": asdict(self.train),
            "self_train": {k: v for k, v in asdict(self.self_train).items() if k not in ("alpha", "variant")},
            "variants": list(self.variants),
            "alphas": list(self.alphas),
            "seeds": list(self.seeds),
            "root_seed": self.root_seed,
            "explain": [{k: v for k, v in asdict(r).items() if v is not None} for r in self.explain],
            "top_k": list(self.top_k),
            "record_timing": self.record_timing,
        }
        if self.dataset.synthetic is not None:
            d["dataset"]["synthetic"] = {k: v for k, v in asdict(self.dataset.synthetic).items() if v is not None}
        # JSON-native form, so parse_config(cfg.to_dict()) round-trips
        return json.loads(json.dumps(d))


def _section(d, path, allowed):
    if not isinstance(d, dict):
        raise ConfigError(path or "<root>", "expected a JSON object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown field")
    return d


def _typed(d, key, path, kind, default=None, required=False):
    where = f"{path}.{key}" if path else key
    if key not in d:
        if required:
            raise ConfigError(where, "required field missing")
        return default
    value = d[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ConfigError(where, f"expected {kind.__name__}, got {type(value).__name__}")
    return float(value) if kind is float else value


def _number_list(d, key, path, kind, default):
    values = _typed(d, key, path, list, default)
    for i, v in enumerate(values):
        where = f"{path + '.' if path else ''}{key}[{i}]"
        _typed({where: v}, where, "", kind)
    return tuple(kind(v) for v in values)


def _build(cls, path, kwargs):
    try:
        return cls(**kwargs)
    except ISDLError as exc:
        raise ConfigError(path, str(exc)) from exc
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from exc


def _parse_dataset(d, base: Path) -> DatasetConfig:
    d = _section(d, "dataset", ("source", "synthetic", "labeled", "unlabeled", "test", "class_names"))
    source = _typed(d, "source", "dataset", str, required=True)
    if source == "synthetic":
        s = _section(_typed(d, "synthetic", "dataset", dict, required=True), "dataset.synthetic",
                     ("counts", "n_features", "n_unlabeled", "means", "scales", "separation", "layout_seed",
                      "test_counts", "class_names"))
        path = "dataset.synthetic"
        _typed(s, "counts", path, list, required=True)
        spec = _build(SyntheticSpec, path, {
            "counts": _number_list(s, "counts", path, int, None),
            "n_features": _typed(s, "n_features", path, int, 2),
            "n_unlabeled": _typed(s, "n_unlabeled", path, int, 0),
            "means": _typed(s, "means", path, list),
            "scales": s.get("scales", 1.0),
            "separation": _typed(s, "separation", path, float, 3.0),
            "layout_seed": _typed(s, "layout_seed", path, int, 0),
            "test_counts": _number_list(s, "test_counts", path, int, None) if "test_counts" in s else None,
            "class_names": tuple(_typed(s, "class_names", path, list)) if "class_names" in s else None,
        })
        try:
            spec.validate()
        except ISDLError as exc:
            raise ConfigError(path, str(exc)) from exc
        return DatasetConfig("synthetic", synthetic=spec)
    if source == "csv":
        def resolve(key, required=False):
            p = _typed(d, key, "dataset", str, required=required)
            if p is None:
                return None
            p = Path(p)
            return p if p.is_absolute() else base / p
        names = _typed(d, "class_names", "dataset", list)
        return DatasetConfig("csv", labeled=resolve("labeled", True), unlabeled=resolve("unlabeled"),
                             test=resolve("test"), class_names=tuple(names) if names else None)
    raise ConfigError("dataset.source", f"expected 'synthetic' or 'csv', got {source!r}")


def _parse_explain(items) -> tuple:
    out = []
    for i, r in enumerate(items):
        path = f"explain[{i}]"
        r = _section(r, path, ("instance", "top_n", "variant", "alpha", "seed", "budget", "background",
                               "image_shape", "tile"))
        budget = r.get("budget", FULL)
        if budget != FULL and (not isinstance(budget, int) or isinstance(budget, bool)):
            raise ConfigError(f"{path}.budget", "expected 'FULL' or an integer")
        background = _typed(r, "background", path, str, "train_mean")
        if background not in ("train_mean", "zeros"):
            raise ConfigError(f"{path}.background", "expected 'train_mean' or 'zeros'")
        variant = _typed(r, "variant", path, str)
        if variant is not None and variant not in ARMS:
            raise ConfigError(f"{path}.variant", f"expected one of {ARMS}")
        shape = _number_list(r, "image_shape", path, int, None) if "image_shape" in r else None
        if shape is not None and len(shape) not in (2, 3):
            raise ConfigError(f"{path}.image_shape", "expected [height, width] or [height, width, channels]")
        out.append(ExplainRequest(
            instance=_typed(r, "instance", path, int, required=True),
            top_n=_typed(r, "top_n", path, int, 3),
            variant=variant,
            alpha=_typed(r, "alpha", path, float),
            seed=_typed(r, "seed", path, int),
            budget=budget,
            background=background,
            image_shape=shape,
            tile=_typed(r, "tile", path, int),
        ))
    return tuple(out)


def parse_config(d: dict, base_dir=".") -> ExperimentConfig:
    """Validate a config mapping; errors carry the offending field path."""
    base = Path(base_dir)
    d = _section(d, "", ("dataset", "split", "train", "self_train", "variants", "alphas", "seeds", "root_seed",
                         "output_dir", "explain", "top_k", "record_timing"))
    dataset = _parse_dataset(_typed(d, "dataset", "", dict, required=True), base)

    sp = _section(_typed(d, "split", "", dict, {}), "split", ("train", "val", "test", "seed"))
    split = _build(SplitRatios, "split", {k: _typed(sp, k, "split", float, v)
                                          for k, v in asdict(SplitRatios()).items()})

    tr = _section(_typed(d, "train", "", dict, {}), "train", [f for f in asdict(TrainConfig())])
    train = _build(TrainConfig, "train", {k: _typed(tr, k, "train", type(v) if v is not None else float, v)
                                          for k, v in asdict(TrainConfig()).items()})

    defaults = {k: v for k, v in asdict(SelfTrainConfig()).items() if k not in ("alpha", "variant")}
    st = _section(_typed(d, "self_train", "", dict, {}), "self_train", defaults)
    st_cfg = _build(SelfTrainConfig, "self_train", {k: _typed(st, k, "self_train", type(v), v)
                                                    for k, v in defaults.items()})

    variants = tuple(_typed(d, "variants", "", list, list(ARMS)))
    if not variants:
        raise ConfigError("variants", "must not be empty")
    for i, v in enumerate(variants):
        if v not in ARMS:
            raise ConfigError(f"variants[{i}]", f"expected one of {ARMS}, got {v!r}")
    if len(set(variants)) != len(variants):
        raise ConfigError("variants", "duplicate entries")
    alphas = _number_list(d, "alphas", "", float, [3.0])
    for i, a in enumerate(alphas):
        if a < 0:
            raise ConfigError(f"alphas[{i}]", "alpha must be >= 0")
    if any(v != NAIVE for v in variants) and not alphas:
        raise ConfigError("alphas", "must not be empty")
    seeds = _number_list(d, "seeds", "", int, [0])
    if not seeds:
        raise ConfigError("seeds", "must not be empty")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds", "duplicate entries")
    top_k = _number_list(d, "top_k", "", int, [1, 2])
    for i, k in enumerate(top_k):
        if k < 1:
            raise ConfigError(f"top_k[{i}]", "k must be >= 1")

    out = _typed(d, "output_dir", "", str)
    return ExperimentConfig(
        dataset=dataset,
        split=split,
        split_seed=_typed(sp, "seed", "split", int, 0),
        train=train,
        self_train=st_cfg,
        variants=variants,
        alphas=alphas,
        seeds=seeds,
        root_seed=_typed(d, "root_seed", "", int, 0),
        output_dir=None if out is None else (Path(out) if Path(out).is_absolute() else base / out),
        explain=_parse_explain(_typed(d, "explain", "", list, [])),
        top_k=top_k,
        record_timing=_typed(d, "record_timing", "", bool, False),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(str(path), "config file not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    return parse_config(d, base_dir=path.parent)


# --------------------------------------------------------------------------
# data

@dataclass
class PreparedData:
    train: LabeledDataset
    val: LabeledDataset
    test: LabeledDataset
    pool: UnlabeledPool
    seeds: tuple  # (data, split, train)

    @property
    def class_names(self) -> tuple:
        return self.train.class_names


def run_seeds(root_seed: int, seed: int) -> tuple:
    """``(data_seed, split_seed, train_seed, test_seed)`` for one seed index, shared by all arms."""
    state = np.random.SeedSequence([int(root_seed), int(seed)]).generate_state(4)
    return tuple(int(s) for s in state)


def _check_paths(ds: DatasetConfig):
    for key in ("labeled", "unlabeled", "test"):
        p = getattr(ds, key)
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"dataset.{key}", f"file not found: {p}")


def prepare_data(cfg: ExperimentConfig, seed: int) -> PreparedData:
    """Build the split and pool for seed index ``seed``.

    An explicit held-out set (synthetic ``test_counts`` or a ``test`` CSV)
    replaces the split's test part for evaluation.
    """
    data_seed, split_seed, train_seed, test_seed = run_seeds(cfg.root_seed, seed)
    ds_cfg = cfg.dataset
    held_out = None
    if ds_cfg.source == "synthetic":
        labeled, pool = make_synthetic(ds_cfg.synthetic, data_seed)
        if ds_cfg.synthetic.test_counts is not None:
            held_out = make_synthetic_test(ds_cfg.synthetic, test_seed)
    else:
        _check_paths(ds_cfg)
        labeled = read_labeled_csv(ds_cfg.labeled, ds_cfg.class_names)
        if ds_cfg.unlabeled is not None:
            pool = read_unlabeled_csv(ds_cfg.unlabeled)
        else:
            pool = UnlabeledPool(np.zeros((0, labeled.n_features)))
        if ds_cfg.test is not None:
            held_out = read_labeled_csv(ds_cfg.test, labeled.class_names)
    split_seed = int(np.random.SeedSequence([cfg.split_seed, split_seed]).generate_state(1)[0])
    train, val, test = stratified_split(labeled, cfg.split, split_seed)
    return PreparedData(train, val, held_out if held_out is not None else test, pool,
                        (data_seed, split_seed, train_seed))


# --------------------------------------------------------------------------
# run

def scalar_metrics(metrics: dict) -> dict:
    """Flat ``name -> value`` view of a metrics block; undefined values are dropped."""
    out = {}
    for key in ("accuracy", "macro_sensitivity", "macro_specificity", "macro_f1", "macro_auc"):
        if metrics.get(key) is not None:
            out[key] = metrics[key]
    for k, v in sorted(metrics.get("top_k_accuracy", {}).items(), key=lambda kv: int(kv[0])):
        out[f"top_{k}_accuracy"] = v
    return out


def aggregate_runs(runs: list) -> list:
    """Min/median/max of every scalar metric per ``(variant, alpha)`` arm.

    Computed from the values exactly as they appear in the run records, so
    recomputing from a loaded report reproduces the stored aggregate.
    """
    arms = []
    for r in runs:
        key = (r["variant"], r["alpha"])
        if key not in arms:
            arms.append(key)
    out = []
    for variant, alpha in arms:
        mine = [r for r in runs if (r["variant"], r["alpha"]) == (variant, alpha)]
        ok = [scalar_metrics(r["metrics"]) for r in mine if r["status"] == "ok"]
        names = sorted({k for m in ok for k in m})
        stats = {}
        for name in names:
            values = [m[name] for m in ok if name in m]
            stats[name] = {"min": min(values), "median": statistics.median(values), "max": max(values),
                           "n": len(values)}
        out.append({"variant": variant, "alpha": alpha, "n_ok": len(ok), "n_failed": len(mine) - len(ok),
                    "metrics": stats})
    return round_floats(out)


def _run_key(variant, alpha, seed) -> str:
    if alpha is None:
        return f"{variant}_s{seed}"
    return f"{variant}_a{'%.8g' % alpha}_s{seed}"


def _safe(name) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", str(name))


def _model_factory(cfg: ExperimentConfig, data: PreparedData):
    L, d = len(data.class_names), data.train.n_features
    return lambda: MLPClassifier(L, d, cfg.train.hidden_units)


def _fit_arm(cfg: ExperimentConfig, data: PreparedData, variant, alpha):
    """Trained model and generation stats (``None`` for the naive arm)."""
    factory = _model_factory(cfg, data)
    train_seed = data.seeds[2]
    if variant == NAIVE:
        model = factory()
        model.fit(data.train, cfg.train, train_seed)
        return model, None

    def on_val(model):
        if len(data.val) == 0:
            return None
        m = evaluate(model.predict_proba(data.val.features), data.val.labels, data.class_names, ks=())
        return {"val_accuracy": m.accuracy, "val_macro_f1": m.macro_f1}

    st_cfg = replace(cfg.self_train, variant=variant, alpha=alpha)
    result = self_train(data.train, data.pool, factory, cfg.train, st_cfg, train_seed, evaluate=on_val)
    return result.model, result.generations


def _generation_records(gens, class_names) -> list:
    out = []
    for g in gens:
        out.append({
            "generation": g.generation,
            "ranking": [class_names[c] for c in g.ranking.order] if g.ranking else None,
            "z": list(g.z),
            "n_pseudo": list(g.n_pseudo),
            "n_selected": list(g.n_selected),
            "working_counts": list(g.working_counts),
            "val_metrics": g.metrics,
        })
    return out


def _background(req: ExplainRequest, data: PreparedData) -> np.ndarray:
    if req.background == "zeros":
        return np.zeros(data.train.n_features)
    return data.train.features.mean(axis=0)


def _find_instance(instance: int, data: PreparedData) -> np.ndarray:
    for ds in (data.test, data.val, data.train):
        hit = np.flatnonzero(ds.ids == instance)
        if hit.size:
            return ds.features[hit[0]]
    raise ConfigError("explain.instance", f"no sample with id {instance}")


def _explain(req: ExplainRequest, model, data: PreparedData, out_dir: Path | None, prefix: str) -> list:
    x = _find_instance(req.instance, data)
    d = x.size
    grouping = None
    shape = (1, d)
    if req.image_shape is not None:
        shape = tuple(req.image_shape)
        h, w = shape[0], shape[1]
        c = shape[2] if len(shape) > 2 else 1
        if h * w * c != d:
            raise ConfigError("explain.image_shape", f"{h}x{w}x{c} does not match {d} features")
        if req.tile:
            grouping = tile_grouping(h, w, c, req.tile)
        elif c > 1:
            grouping = tile_grouping(h, w, c, 1)
    ex_cfg = ExplainerConfig(background=_background(req, data), grouping=grouping, budget=req.budget,
                             seed=data.seeds[2])
    exps = explain(model, x, ex_cfg, top_n=min(req.top_n, len(data.class_names)), class_names=data.class_names)
    records = []
    for e in exps:
        rec = {"instance": req.instance, **e.to_dict()}
        if out_dir is not None:
            paths = render_heatmap(e, shape, grouping, out_dir / f"{prefix}explain_{req.instance}_{_safe(e.class_name)}")
            rec["files"] = {k: str(p.relative_to(out_dir)) for k, p in sorted(paths.items())}
        records.append(rec)
    return records


def _requests_for(cfg: ExperimentConfig, variant, alpha, seed) -> list:
    arms = cfg.arms()
    default_variant, default_alpha = next(((v, a) for v, a in arms if v != NAIVE), arms[0])
    out = []
    for req in cfg.explain:
        want_v = req.variant if req.variant is not None else default_variant
        want_a = None if want_v == NAIVE else (req.alpha if req.alpha is not None else
                                               (default_alpha if default_alpha is not None else cfg.alphas[0]))
        want_s = req.seed if req.seed is not None else cfg.seeds[0]
        if (want_v, want_a, want_s) == (variant, alpha, seed):
            out.append(req)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(round_floats(obj), indent=2, sort_keys=True) + "\n")


def run(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Execute every ``(variant, alpha, seed)`` run; returns the report mapping.

    Module errors inside a run are recorded as a failure for that run and
    do not stop the others.  With ``out_dir`` (or ``cfg.output_dir``) the
    output tree is written there.
    """
    out = Path(out_dir) if out_dir is not None else cfg.output_dir
    if cfg.dataset.source == "csv":
        _check_paths(cfg.dataset)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    runs, gen_tables, explanations = [], [], []
    class_names = None
    for seed in cfg.seeds:
        try:
            data = prepare_data(cfg, seed)
        except ConfigError:
            raise
        except ISDLError as exc:
            for variant, alpha in cfg.arms():
                runs.append(_failure(variant, alpha, seed, exc))
            continue
        class_names = data.class_names
        for variant, alpha in cfg.arms():
            key = _run_key(variant, alpha, seed)
            started = time.perf_counter()
            try:
                model, gens = _fit_arm(cfg, data, variant, alpha)
                proba = model.predict_proba(data.test.features)
                metrics = evaluate(proba, data.test.labels, class_names, ks=cfg.top_k)
            except ConfigError:
                raise
            except ISDLError as exc:
                logger.warning("run %s failed: %s", key, exc)
                runs.append(_failure(variant, alpha, seed, exc))
                continue
            record = {"variant": variant, "alpha": alpha, "seed": seed, "status": "ok",
                      "n_test": len(data.test), "metrics": metrics.to_dict()}
            if gens is not None:
                record["generations"] = _generation_records(gens, class_names)
                gen_tables.append(({"variant": variant, "alpha": "%.8g" % alpha, "seed": seed}, gens))
            if out is not None:
                run_dir = out / key
                run_dir.mkdir(exist_ok=True)
                for c, name in enumerate(class_names):
                    positives = data.test.labels == c
                    if positives.any() and not positives.all():
                        write_roc_csv(run_dir / f"roc_{_safe(name)}.csv", proba[:, c], positives)
            for req in _requests_for(cfg, variant, alpha, seed):
                prefix = f"{key}/" if out is not None else ""
                for rec in _explain(req, model, data, out, prefix):
                    explanations.append({"run": key, **rec})
            if cfg.record_timing:
                record["wall_clock_s"] = time.perf_counter() - started
            runs.append(record)

    report = {
        "config": cfg.to_dict(),
        "class_names": list(class_names) if class_names is not None else None,
        "runs": round_floats(runs),
    }
    report["aggregate"] = aggregate_runs(report["runs"])
    if explanations:
        report["explanations"] = explanations
    if out is not None:
        _write_json(out / REPORT_NAME, report)
        if gen_tables:
            write_generation_csv(out / "generations.csv", gen_tables, class_names)
    return round_floats(report)


def _failure(variant, alpha, seed, exc) -> dict:
    return {"variant": variant, "alpha": alpha, "seed": seed, "status": "failed",
            "error": type(exc).__name__, "message": str(exc)}


def n_failed(report: dict) -> int:
    return sum(r["status"] != "ok" for r in report["runs"])


# --------------------------------------------------------------------------
# alpha sweep

def sweep_alpha(cfg: ExperimentConfig) -> list:
    """Generation-1 selected pseudo-label counts per seed, variant and alpha.

    The teacher depends only on the seed, so it is trained once per seed and
    its pseudo-labels are reused across variants and alphas.
    """
    if len(cfg.alphas) < 2:
        raise ConfigError("alphas", "a sweep needs at least two alpha values")
    variants = [v for v in cfg.variants if v != NAIVE] or list(VARIANTS)
    rows = []
    for seed in cfg.seeds:
        data = prepare_data(cfg, seed)
        teacher = _model_factory(cfg, data)()
        teacher.fit(data.train, cfg.train, data.seeds[2])
        batch = pseudo_label(teacher, data.pool)
        floor = cfg.self_train.confidence_floor
        above = int(np.count_nonzero(batch.confidence >= floor))
        ranking = rank_classes(data.train.class_counts())
        for variant in variants:
            for alpha in cfg.alphas:
                schedule = sampling_schedule(ranking, alpha, variant)
                chosen = select_pseudo(batch, ranking, schedule, floor)
                per_class = np.bincount(chosen.labels, minlength=len(data.class_names))
                rows.append({"seed": seed, "variant": variant, "alpha": alpha, "above_floor": above,
                             "total": int(len(chosen)), "per_class": [int(c) for c in per_class],
                             "z": list(schedule.for_class(ranking, c) for c in range(len(data.class_names)))})
    return rows


def write_sweep_csv(rows: list, class_names, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["seed", "variant", "alpha", "above_floor", "total"] + [f"n_{_safe(c)}" for c in class_names])
    for r in rows:
        w.writerow([r["seed"], r["variant"], "%.8g" % r["alpha"], r["above_floor"], r["total"]] + r["per_class"])


# --------------------------------------------------------------------------
# compare

def load_report(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_NAME
    return json.loads(path.read_text())


def _runs_for_arm(report: dict, arm):
    arms = []
    for r in report["runs"]:
        key = (r["variant"], r["alpha"])
        if key not in arms:
            arms.append(key)
    if arm is None:
        if len(arms) != 1:
            raise ValueError(f"report holds {len(arms)} arms; choose one of {arms}")
        arm = arms[0]
    variant, alpha = arm
    runs = {r["seed"]: r for r in report["runs"]
            if r["variant"] == variant and r["alpha"] == alpha and r["status"] == "ok"}
    if not runs:
        raise ValueError(f"no successful runs for arm {arm}")
    return runs


def parse_arm(text: str):
    """``"naive"`` or ``"ISDL@3"`` to a ``(variant, alpha)`` pair."""
    if "@" in text:
        v, a = text.split("@", 1)
        return v, float(a)
    return text, None


def compare(report_a: dict, report_b: dict, arm_a=None, arm_b=None) -> dict:
    """Per-metric ``b - a`` deltas over the seeds both arms completed.

    Returns ``metric -> {median_a, median_b, delta_median, per_seed, wins_a,
    wins_b, ties}``.  Metric keys must agree on every paired seed.
    """
    ra, rb = _runs_for_arm(report_a, arm_a), _runs_for_arm(report_b, arm_b)
    seeds = sorted(set(ra) & set(rb))
    if not seeds:
        raise ValueError("the two arms share no seed")
    ma = {s: scalar_metrics(ra[s]["metrics"]) for s in seeds}
    mb = {s: scalar_metrics(rb[s]["metrics"]) for s in seeds}
    keys = set(ma[seeds[0]])
    for s in seeds:
        if set(ma[s]) != keys or set(mb[s]) != keys:
            only_a = sorted(set(ma[s]) - set(mb[s]))
            only_b = sorted(set(mb[s]) - set(ma[s]))
            raise KeyError(f"metric keys differ at seed {s}: only in a {only_a}, only in b {only_b}")
    out = {}
    for k in sorted(keys):
        a = [ma[s][k] for s in seeds]
        b = [mb[s][k] for s in seeds]
        per_seed = [y - x for x, y in zip(a, b)]
        out[k] = {
            "median_a": statistics.median(a),
            "median_b": statistics.median(b),
            "delta_median": statistics.median(b) - statistics.median(a),
            "per_seed": dict(zip(seeds, per_seed)),
            "wins_a": sum(d < 0 for d in per_seed),
            "wins_b": sum(d > 0 for d in per_seed),
            "ties": sum(d == 0 for d in per_seed),
        }
    return out


# --------------------------------------------------------------------------
# explain

def explain_instance(cfg: ExperimentConfig, instance: int, out_dir=None, variant=None, alpha=None,
                     seed=None, top_n=None) -> list:
    """Train one arm and explain one sample; heatmaps go to ``out_dir`` if given."""
    arms = cfg.arms()
    if variant is None:
        variant, alpha_default = next(((v, a) for v, a in arms if v != NAIVE), arms[0])
        alpha = alpha if alpha is not None else alpha_default
    elif variant != NAIVE and alpha is None:
        alpha = cfg.alphas[0]
    if variant == NAIVE:
        alpha = None
    seed = cfg.seeds[0] if seed is None else seed
    template = next((r for r in cfg.explain if r.instance == instance), ExplainRequest(instance))
    req = replace(template, top_n=top_n or template.top_n)
    data = prepare_data(cfg, seed)
    model, _ = _fit_arm(cfg, data, variant, alpha)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    return [{"run": _run_key(variant, alpha, seed), **rec} for rec in _explain(req, model, data, out, "")]
