"""Model-agnostic kernel SHAP with an exact brute-force Shapley oracle.

Features (or groups of raw dimensions, e.g. image tiles) are switched
between the explained instance and a background reference according to a
coalition bit vector.  The attribution is the weighted least-squares fit of
an additive model to the masked model outputs under the Shapley kernel,
with the empty and full coalitions imposed as equality constraints.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetExceeded, ConstraintCoalition, RankDeficient, ShapeError
from .images import write_grid_csv, write_pgm

__all__ = [
    "FULL",
    "ExplainerConfig",
    "Explanation",
    "kernel_weight",
    "mask_instance",
    "coalitions",
    "solve_attribution",
    "exact_shapley",
    "kernel_shap",
    "explain",
    "tile_grouping",
    "render_heatmap",
]

FULL = "FULL"
MAX_FULL_FEATURES = 25
MAX_EXACT_FEATURES = 12
RIDGE = 1e-10


def kernel_weight(F: int, s: int) -> float:
    """Shapley kernel weight of one coalition with ``s`` of ``F`` features present."""
    if not 0 < s < F:
        raise ConstraintCoalition(f"coalition size {s} of {F} is a constraint, not a weighted row")
    return (F - 1) / (math.comb(F, s) * s * (F - s))


def _check_grouping(grouping, d):
    flat = sorted(i for g in grouping for i in g)
    if flat != list(range(d)):
        raise ShapeError(f"grouping must partition 0..{d - 1} exactly")


@dataclass
class ExplainerConfig:
    """Background reference, optional feature grouping and coalition budget.

    ``background`` is one row or a small set of rows; with several rows
    the model output is averaged over them.  ``grouping`` lists the raw
    dimensions switched together by each coalition bit.
    """

    background: np.ndarray
    grouping: Sequence[Sequence[int]] | None = None
    budget: int | str = FULL
    seed: int = 0

    def __post_init__(self):
        bg = np.asarray(self.background, dtype=np.float64)
        self.background = bg[None, :] if bg.ndim == 1 else bg
        if self.background.ndim != 2 or self.background.shape[0] == 0:
            raise ShapeError("background must be one row or a 2-D set of rows")
        if self.grouping is not None:
            self.grouping = [list(map(int, g)) for g in self.grouping]
            _check_grouping(self.grouping, self.n_dims)
        if self.budget != FULL and int(self.budget) < self.n_explained + 2:
            raise ValueError(f"sampling budget must be >= F + 2 = {self.n_explained + 2}")

    @property
    def n_dims(self) -> int:
        return self.background.shape[1]

    @property
    def n_explained(self) -> int:
        return len(self.grouping) if self.grouping is not None else self.n_dims

    def dim_mask(self, Z) -> np.ndarray:
        """Expand coalition rows ``(n, F)`` to raw-dimension masks ``(n, d)``."""
        Z = np.asarray(Z, dtype=bool)
        if self.grouping is None:
            return Z
        owner = np.empty(self.n_dims, dtype=np.int64)
        for j, g in enumerate(self.grouping):
            owner[g] = j
        return Z[:, owner]


@dataclass
class Explanation:
    class_id: int
    base_value: float
    phi: np.ndarray
    class_name: str | None = None

    def to_dict(self) -> dict:
        return {
            "class": self.class_name if self.class_name is not None else int(self.class_id),
            "base_value": float("%.8g" % self.base_value),
            "phi": [float("%.8g" % v) for v in self.phi],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def mask_instance(x, cfg: ExplainerConfig, coalition) -> np.ndarray:
    """Take ``x`` where the coalition bit is 1, the (first) background row where it is 0."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    z = np.asarray(coalition, dtype=bool).reshape(-1)
    if x.size != cfg.n_dims or z.size != cfg.n_explained:
        raise ShapeError(f"expected x of length {cfg.n_dims} and coalition of length {cfg.n_explained}")
    m = cfg.dim_mask(z[None, :])[0]
    return np.where(m, x, cfg.background[0])


def _masked_outputs(f, x, cfg: ExplainerConfig, Z) -> np.ndarray:
    """Model output for every coalition, averaged over background rows."""
    M = cfg.dim_mask(Z)
    out = 0.0
    for b in cfg.background:
        values = np.asarray(f(np.where(M, x, b)), dtype=np.float64)
        out = out + values
    return out / cfg.background.shape[0]


def coalitions(F: int, budget=FULL, seed: int = 0):
    """Coalition rows ``(n, F)`` (bool) and their kernel weights.

    ``FULL`` lists all ``2**F`` coalitions in binary-counting order.  A
    numeric budget counts coalitions including the empty and full ones;
    sizes are filled completely in pairs ``(s, F - s)`` from the extremes
    inward while they fit, and the rest of the budget is spent on distinct
    random coalitions from the remaining sizes, drawn with probability
    proportional to each size's kernel mass.  Partially sampled sizes share
    their total mass evenly.  Empty and full coalitions get weight 0: they
    enter the solve as constraints.
    """
    if F < 1:
        raise ValueError("need at least one feature")
    if budget == FULL:
        if F > MAX_FULL_FEATURES:
            raise BudgetExceeded(f"full enumeration of {F} features exceeds the {MAX_FULL_FEATURES}-feature guard")
        codes = np.arange(2 ** F, dtype=np.int64)
        Z = ((codes[:, None] >> np.arange(F)) & 1).astype(bool)
        sizes = Z.sum(axis=1)
        w = np.array([kernel_weight(F, s) if 0 < s < F else 0.0 for s in sizes])
        return Z, w
    budget = int(budget)
    if budget < F + 2:
        raise ValueError(f"budget must be >= F + 2 = {F + 2}")
    if F <= MAX_FULL_FEATURES and budget >= 2 ** F:
        return coalitions(F, FULL)

    rows = [np.zeros(F, dtype=bool), np.ones(F, dtype=bool)]
    weights = [0.0, 0.0]
    remaining = budget - 2
    open_sizes = []
    for s in range(1, F // 2 + 1):
        level = [s] if s == F - s else [s, F - s]
        n_level = sum(math.comb(F, k) for k in level)
        if not open_sizes and n_level <= remaining:
            for k in level:
                for combo in itertools.combinations(range(F), k):
                    z = np.zeros(F, dtype=bool)
                    z[list(combo)] = True
                    rows.append(z)
                    weights.append(kernel_weight(F, k))
            remaining -= n_level
        else:
            open_sizes.extend(level)

    if remaining > 0 and open_sizes:
        rng = np.random.default_rng(seed)
        mass = np.array([(F - 1) / (k * (F - k)) for k in open_sizes])
        capacity = sum(math.comb(F, k) for k in open_sizes)
        target = min(remaining, capacity)
        seen, picked, drawn = set(), [], {k: [] for k in open_sizes}
        while len(seen) < target:
            k = open_sizes[rng.choice(len(open_sizes), p=mass / mass.sum())]
            members = tuple(sorted(rng.choice(F, size=k, replace=False).tolist()))
            if members in seen:
                continue
            seen.add(members)
            picked.append(members)
            drawn[k].append(members)
        # extreme sizes first, draw order within a size
        for members in sorted(picked, key=lambda m: min(len(m), F - len(m))):
            k = len(members)
            z = np.zeros(F, dtype=bool)
            z[list(members)] = True
            rows.append(z)
            weights.append(math.comb(F, k) * kernel_weight(F, k) / len(drawn[k]))
    return np.array(rows), np.array(weights)


def solve_attribution(Z, f_values, weights, f_empty, f_full):
    """Constrained weighted least squares for ``(phi0, phi)``.

    ``phi0`` is fixed to ``f_empty`` and ``sum(phi)`` to ``f_full - f_empty``
    by eliminating the last coefficient; the reduced normal equations get
    a ``1e-10`` ridge.  ``f_values`` may be ``(n,)`` or ``(n, K)`` for ``K``
    outputs solved together.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(f_values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    squeeze = y.ndim == 1
    y = y.reshape(Z.shape[0], -1)
    f_empty = np.asarray(f_empty, dtype=np.float64).reshape(-1)
    f_full = np.asarray(f_full, dtype=np.float64).reshape(-1)
    F = Z.shape[1]
    total = f_full - f_empty
    if F == 1:
        phi = total[None, :]
    else:
        sizes = Z.sum(axis=1)
        inner = (sizes > 0) & (sizes < F) & (w > 0)
        Zi, yi, wi = Z[inner], y[inner], w[inner]
        A = Zi[:, :-1] - Zi[:, -1:]
        b = yi - f_empty - Zi[:, -1:] * total
        if Zi.shape[0] < F - 1 or np.linalg.matrix_rank(A * np.sqrt(wi)[:, None]) < F - 1:
            raise RankDeficient(f"coalition rows span fewer than {F - 1} independent directions")
        AtW = A.T * wi
        beta = np.linalg.solve(AtW @ A + RIDGE * np.eye(F - 1), AtW @ b)
        phi = np.vstack([beta, total - beta.sum(axis=0)])
    if squeeze:
        return float(f_empty[0]), phi[:, 0]
    return f_empty, phi


def exact_shapley(f: Callable, x, background, F: int | None = None, grouping=None) -> np.ndarray:
    """Brute-force Shapley values over every subset of the ``F`` players.

    ``f`` maps a ``(n, d)`` array to ``(n,)`` outputs.  Independent of the
    regression path; used as the test oracle.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    bg = np.asarray(background, dtype=np.float64)
    bg = bg[None, :] if bg.ndim == 1 else bg
    groups = [list(g) for g in grouping] if grouping is not None else [[j] for j in range(x.size)]
    F = len(groups) if F is None else F
    if F != len(groups):
        raise ShapeError("F does not match the number of players")
    if F > MAX_EXACT_FEATURES:
        raise BudgetExceeded(f"exact Shapley limited to {MAX_EXACT_FEATURES} players")

    value = {}
    for code in range(2 ** F):
        rows = bg.copy()
        for j in range(F):
            if code >> j & 1:
                rows[:, groups[j]] = x[groups[j]]
        value[code] = float(np.mean(f(rows)))

    phi = np.zeros(F)
    for j in range(F):
        for code in range(2 ** F):
            if code >> j & 1:
                continue
            s = bin(code).count("1")
            coef = math.factorial(s) * math.factorial(F - s - 1) / math.factorial(F)
            phi[j] += coef * (value[code | 1 << j] - value[code])
    return phi


def kernel_shap(f: Callable, x, cfg: ExplainerConfig):
    """``(phi0, phi)`` for a scalar- or vector-valued ``f``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != cfg.n_dims:
        raise ShapeError(f"instance has {x.size} dims, background has {cfg.n_dims}")
    Z, w = coalitions(cfg.n_explained, cfg.budget, cfg.seed)
    values = _masked_outputs(f, x, cfg, Z)
    f_empty = _masked_outputs(f, x, cfg, np.zeros((1, cfg.n_explained), dtype=bool))[0]
    f_full = np.asarray(f(x[None, :]), dtype=np.float64)[0]
    return solve_attribution(Z, values, w, f_empty, f_full)


def explain(model, instance, cfg: ExplainerConfig, top_n: int = 3, class_names=None) -> list:
    """Explanations of the ``top_n`` most probable classes, most probable first."""
    x = np.asarray(instance, dtype=np.float64).reshape(-1)
    proba = model.predict_proba(x[None, :])[0]
    if not 1 <= top_n <= proba.size:
        raise ValueError(f"top_n must lie in 1..{proba.size}")
    classes = np.argsort(-proba, kind="stable")[:top_n]
    phi0, phi = kernel_shap(lambda rows: model.predict_proba(rows)[:, classes], x, cfg)
    return [
        Explanation(int(c), float(phi0[k]), phi[:, k].copy(),
                    None if class_names is None else str(class_names[c]))
        for k, c in enumerate(classes)
    ]


# --------------------------------------------------------------------------
# image groupings and heatmaps

def tile_grouping(height: int, width: int, channels: int = 1, block: int = 4) -> list:
    """Square ``block x block`` tiles (edge tiles may be smaller) over row-major ``(h, w, c)`` dims."""
    groups = []
    for r0 in range(0, height, block):
        for c0 in range(0, width, block):
            g = [
                (r * width + c) * channels + ch
                for r in range(r0, min(r0 + block, height))
                for c in range(c0, min(c0 + block, width))
                for ch in range(channels)
            ]
            groups.append(g)
    return groups


def heatmap_grid(exp: Explanation, shape, grouping=None) -> np.ndarray:
    """Broadcast each player's value onto its pixels; returns ``(height, width)``."""
    h, w = int(shape[0]), int(shape[1])
    c = int(shape[2]) if len(shape) > 2 else 1
    grouping = grouping if grouping is not None else [[j] for j in range(h * w * c)]
    if len(grouping) != len(exp.phi):
        raise ShapeError(f"{len(exp.phi)} attributions for {len(grouping)} groups")
    _check_grouping(grouping, h * w * c)
    grid = np.full(h * w, np.nan)
    for value, g in zip(exp.phi, grouping):
        pixels = np.unique(np.asarray(g) // c)
        if c > 1 and len(g) != pixels.size * c:
            raise ShapeError("a group must hold every channel of its pixels")
        grid[pixels] = value
    return grid.reshape(h, w)


def render_heatmap(exp: Explanation, shape, grouping, out_prefix) -> dict:
    """Write ``<prefix>.csv`` (signed), ``<prefix>.pgm`` (|phi| scaled to 255) and ``<prefix>_sign.csv``."""
    grid = heatmap_grid(exp, shape, grouping)
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = {
        "signed": prefix.with_name(prefix.name + ".csv"),
        "magnitude": prefix.with_name(prefix.name + ".pgm"),
        "sign": prefix.with_name(prefix.name + "_sign.csv"),
    }
    write_grid_csv(paths["signed"], grid)
    peak = np.abs(grid).max()
    write_pgm(paths["magnitude"], np.abs(grid) / peak * 255.0 if peak > 0 else np.zeros_like(grid))
    write_grid_csv(paths["sign"], np.sign(grid), fmt="%d")
    return paths
