"""Fine-tuning a meta-model into per-weight submodels.

Two strategies share the same single-task update:

* vanilla: every target weight is fine-tuned directly from the meta-model
  for a fixed number of steps;
* hierarchical: a tree of simplex cells is refined level by level.  Each
  cell's model starts from its parent cell's model and is fine-tuned at the
  cell center; the target weights are finally fine-tuned from the deepest
  cell containing them.  Intermediate models are shared by all weights in
  a cell, which buys many more effective updates per weight at equal total
  step budget.

Cells: for two objectives, level l splits the first weight component into
2^l equal intervals.  For three objectives, level l is the 4^l-cell
triangular subdivision with side 2^l: 'up' cells indexed by nonnegative
(a, b, c) summing to H-1 and 'down' cells summing to H-2 (H = 2^l).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore
from .checkpoint import save_checkpoint
from .optim import adam_init, adam_step
from .policy import ModelConfig, MultiTaskParams, rollout_episodes
from .training import reinforce_loss, scalarized_costs, shared_baseline
from .problems import generate_instance


def branching_factor(M: int) -> int:
    if M == 2:
        return 2
    if M == 3:
        return 4
    raise ValueError("the cell hierarchy is defined for two or three objectives")


@dataclass(frozen=True)
class Cell:
    level: int
    index: int                 # position within its level's fixed ordering
    center: np.ndarray         # simplex weight at the cell center
    parent: int | None         # index in the previous level (None at level 1)


def _level_cells_2d(level: int) -> list[Cell]:
    n = 2 ** level
    cells = []
    for i in range(n):
        lam1 = (2 * i + 1) / (2 * n)
        cells.append(Cell(level, i, np.array([lam1, 1.0 - lam1]),
                          None if level == 1 else i // 2))
    return cells


def _tri_cells(level: int) -> list[tuple[str, tuple[int, int, int]]]:
    """Fixed ordering of the triangular cells: all up cells in lexicographic
    order, then all down cells."""
    H = 2 ** level
    ups = [("up", abc) for abc in itertools.product(range(H), repeat=3)
           if sum(abc) == H - 1]
    downs = [("down", abc) for abc in itertools.product(range(H), repeat=3)
             if sum(abc) == H - 2]
    return ups + downs


def _tri_center(orientation: str, abc: tuple[int, int, int],
                H: int) -> np.ndarray:
    a, b, c = abc
    if orientation == "up":
        return np.array([3 * a + 1, 3 * b + 1, 3 * c + 1]) / (3 * H)
    return np.array([3 * a + 2, 3 * b + 2, 3 * c + 2]) / (3 * H)


def _tri_contains(orientation: str, abc: tuple[int, int, int], H: int,
                  weight: np.ndarray, tol: float = 1e-12) -> bool:
    scaled = H * np.asarray(weight)
    lo = np.asarray(abc, dtype=np.float64)
    if orientation == "up":
        return bool(np.all(scaled >= lo - tol))
    return bool(np.all(scaled <= lo + 1.0 + tol))


def _level_cells_3d(level: int) -> list[Cell]:
    H = 2 ** level
    raw = _tri_cells(level)
    parents = None if level == 1 else _tri_cells(level - 1)
    cells = []
    for i, (orient, abc) in enumerate(raw):
        center = _tri_center(orient, abc, H)
        parent = None
        if parents is not None:
            parent = _containing_index(parents, 2 ** (level - 1), center)
        cells.append(Cell(level, i, center, parent))
    return cells


def _containing_index(raw_cells, H: int, weight: np.ndarray) -> int:
    for i, (orient, abc) in enumerate(raw_cells):
        if _tri_contains(orient, abc, H, weight):
            return i
    raise ValueError(f"weight {weight} is outside every cell")


def build_hierarchy(M: int, L: int) -> list[list[Cell]]:
    """Internal levels 1..L-1 of the cell tree (level L is the target
    weights themselves)."""
    if L < 1:
        raise ValueError("hierarchy needs at least one level")
    branching_factor(M)  # validates M
    maker = _level_cells_2d if M == 2 else _level_cells_3d
    # L = 1 has no internal levels: the leaves hang off the meta-model
    return [maker(level) for level in range(1, L)]


def containing_cell(cells: list[Cell], weight: np.ndarray) -> int:
    """Index of the lowest-indexed cell of one level containing the weight."""
    level = cells[0].level
    M = len(weight)
    if M == 2:
        n = 2 ** level
        x = float(weight[0]) * n
        i = min(int(np.floor(x)), n - 1)
        # boundary weights belong to the lower-indexed interval
        if i > 0 and abs(x - i) < 1e-12:
            i -= 1
        return i
    raw = _tri_cells(level)
    return _containing_index(raw, 2 ** level, weight)


def step_budget(M: int, N: int, K: int, L: int) -> dict:
    """Fine-tuning step counts: the idealized geometric-series total, the
    exact hierarchical total (internal levels plus the N leaves), and the
    per-weight vanilla budget that matches it."""
    a = branching_factor(M)
    idealized = K * a * (a ** L - 1) // (a - 1)
    internal = sum(a ** level for level in range(1, L))
    exact = internal * K + N * K
    return {
        "branching": a,
        "idealized_total": idealized,
        "exact_total": exact,
        "internal_steps": internal * K,
        "leaf_steps": N * K,
        "matched_vanilla_steps": int(round(exact / N)),
    }


# ---------------------------------------------------------------------------
# single-task fine-tuning


@dataclass(frozen=True)
class FinetuneConfig:
    n: int                       # instance size
    steps: int                   # K: update steps per (sub)model
    batch_size: int = 64
    learning_rate: float = 1e-4
    mode: str = "full"           # "full" | "head-only" | "decoder-only"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("full", "head-only", "decoder-only"):
            raise ValueError(f"unknown fine-tune mode {self.mode!r}")


def _trainable_paths(params: ParamStore, mode: str) -> list[str]:
    if mode == "full":
        return params.paths()
    if mode == "head-only":
        return params.paths("head")
    return [p for p in params.paths() if p.startswith("dec.")]


def finetune_submodel(params: ParamStore, model_cfg: ModelConfig,
                      weight: np.ndarray, cfg: FinetuneConfig,
                      rng: np.random.Generator) -> ParamStore:
    """K steps of single-task policy-gradient fine-tuning toward one weight.
    Returns a new store; the input model is untouched."""
    sub = params.copy()
    state = adam_init(sub, cfg.learning_rate,
                      paths=_trainable_paths(sub, cfg.mode))
    kind = model_cfg.kind
    for _ in range(cfg.steps):
        seeds = rng.integers(0, 2 ** 31, size=cfg.batch_size)
        instances = [generate_instance(kind, cfg.n, int(s)) for s in seeds]
        pv = sub.as_vars()
        batch = rollout_episodes(pv, model_cfg, instances, "sample", rng)
        costs = scalarized_costs(batch.objectives, weight, kind.maximize)
        base = shared_baseline(costs, batch.ep2inst, len(instances))
        loss = reinforce_loss(costs, base, batch.log_prob)
        grads = ad.gradients(loss, {p: pv[p] for p in sub.paths()})
        adam_step(sub, grads, state)
    return sub


# ---------------------------------------------------------------------------
# submodel sets


@dataclass
class SubmodelSet:
    weights: list[np.ndarray]
    models: list[ParamStore]
    strategy: str                          # "hierarchical" | "vanilla"
    total_steps: int
    lineage: list[list[str]] = field(default_factory=list)

    def save(self, directory: str | Path, model_cfg: ModelConfig) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        import json
        for i, (w, m) in enumerate(zip(self.weights, self.models)):
            save_checkpoint(directory / f"submodel_{i:03d}.json", m,
                            model_cfg.kind.to_json(),
                            {"weight": list(w), "strategy": self.strategy})
        manifest = {
            "strategy": self.strategy,
            "total_steps": self.total_steps,
            "model": model_cfg.to_json(),
            "weights": [list(w) for w in self.weights],
            "lineage": self.lineage,
            "files": [f"submodel_{i:03d}.json"
                      for i in range(len(self.weights))],
        }
        (directory / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n")


def _node_rng(seed: int, level: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, level, index]))


def hierarchical_finetune(meta: ParamStore, model_cfg: ModelConfig,
                          weights: list[np.ndarray], L: int,
                          cfg: FinetuneConfig,
                          progress: bool = False) -> SubmodelSet:
    """Refine the meta-model down the cell tree, then fine-tune each target
    weight from its deepest containing cell."""
    M = model_cfg.kind.M
    levels = build_hierarchy(M, L)
    level_models: list[list[ParamStore]] = []
    steps = 0
    for cells in levels:
        models = []
        for cell in cells:
            parent = meta if cell.parent is None \
                else level_models[-1][cell.parent]
            models.append(finetune_submodel(
                parent, model_cfg, cell.center, cfg,
                _node_rng(cfg.seed, cell.level, cell.index)))
            steps += cfg.steps
            if progress:
                print(f"cell level {cell.level} #{cell.index} done", flush=True)
        level_models.append(models)

    out_models, lineage = [], []
    for i, w in enumerate(weights):
        if levels:
            c = containing_cell(levels[-1], w)
            parent_model = level_models[-1][c]
            cell: Cell | None = levels[-1][c]
        else:
            parent_model, cell = meta, None
        out_models.append(finetune_submodel(
            parent_model, model_cfg, w, cfg, _node_rng(cfg.seed, L, i)))
        steps += cfg.steps
        trail = []
        while cell is not None:
            trail.append(f"level{cell.level}/cell{cell.index}")
            cell = (levels[cell.level - 2][cell.parent]
                    if cell.parent is not None else None)
        lineage.append(["meta"] + trail[::-1] + [f"weight{i}"])
    return SubmodelSet(list(weights), out_models, "hierarchical", steps,
                       lineage)


def vanilla_finetune(meta: ParamStore, model_cfg: ModelConfig,
                     weights: list[np.ndarray],
                     cfg: FinetuneConfig) -> SubmodelSet:
    """Each weight fine-tuned independently from the meta-model.  Identical
    to a one-level hierarchy (same seeds), which keeps the degenerate case
    exactly comparable."""
    models = [finetune_submodel(meta, model_cfg, w, cfg,
                                _node_rng(cfg.seed, 1, i))
              for i, w in enumerate(weights)]
    lineage = [["meta", f"weight{i}"] for i in range(len(weights))]
    return SubmodelSet(list(weights), models, "vanilla",
                       cfg.steps * len(weights), lineage)
