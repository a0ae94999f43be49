"""Meta-training: multi-task inner loop plus interpolated meta update.

Each meta-iteration samples a fresh set of preference weights, clones the
current meta-model into a multi-task model (shared body, one head per
weight), trains it for a fixed number of policy-gradient steps, and folds
the result back: the body is taken over as-is, the meta head moves a step
of size epsilon toward the mean of the task heads.  Epsilon anneals
linearly to zero over the run.  Optimizer state never survives a
meta-iteration.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Var
from .checkpoint import save_checkpoint
from .decomposition import (ScaleEstimate, estimate_ideal_scale,
                            random_sample, scaled_symmetric_sample,
                            symmetric_sample, weighted_sum)
from .optim import adam_init, adam_step
from .policy import (HEAD_PATH, ModelConfig, MultiTaskParams, build_multitask,
                     encode_batch, init_params, rollout_episodes,
                     rollout_multistart)
from .problems import Instance, generate_instance

SAMPLING_MODES = ("scaled-symmetric", "symmetric", "random")


@dataclass(frozen=True)
class MetaConfig:
    model: ModelConfig
    n: int                             # instance size
    n_tasks: int = 2                   # weights per meta-iteration
    batch_size: int = 64
    inner_steps: int = 10              # policy-gradient steps per iteration
    meta_iterations: int = 3000
    learning_rate: float = 1e-4
    epsilon0: float = 1.0              # initial meta interpolation step
    sampling: str = "scaled-symmetric"
    scale_every: int = 1               # re-estimate objective scales cadence
    n_validation: int = 32
    checkpoint_every: int = 0          # 0 disables periodic checkpoints
    seed: int = 0

    def __post_init__(self):
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if self.scale_every < 1 or self.inner_steps < 1:
            raise ValueError("scale_every and inner_steps must be >= 1")

    def to_json(self) -> dict:
        return {
            "model": self.model.to_json(), "n": self.n,
            "n_tasks": self.n_tasks, "batch_size": self.batch_size,
            "inner_steps": self.inner_steps,
            "meta_iterations": self.meta_iterations,
            "learning_rate": self.learning_rate, "epsilon0": self.epsilon0,
            "sampling": self.sampling, "scale_every": self.scale_every,
            "n_validation": self.n_validation,
            "checkpoint_every": self.checkpoint_every, "seed": self.seed,
        }

    @staticmethod
    def from_json(doc: dict) -> "MetaConfig":
        doc = dict(doc)
        doc["model"] = ModelConfig.from_json(doc["model"])
        return MetaConfig(**doc)


@dataclass
class TrainLog:
    """Per-iteration records; wall time is informational only and excluded
    from any reproducibility comparison."""
    rows: list[dict] = field(default_factory=list)

    FIELDS = ("iteration", "epsilon", "mean_cost", "task_costs",
              "scale_estimate", "wall_time")

    def append(self, **row) -> None:
        self.rows.append(row)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.FIELDS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)


def scalarized_costs(objectives: np.ndarray, weight: np.ndarray,
                     maximize: bool) -> np.ndarray:
    """Per-episode scalarized cost, lower is better regardless of sense."""
    costs = objectives @ weight
    return -costs if maximize else costs


def shared_baseline(costs: np.ndarray, ep2inst: np.ndarray,
                    n_instances: int) -> np.ndarray:
    """Per-episode baseline: the mean cost of that episode's instance over
    all of its starts (the multi-start shared baseline)."""
    sums = np.zeros(n_instances)
    counts = np.zeros(n_instances)
    np.add.at(sums, ep2inst, costs)
    np.add.at(counts, ep2inst, 1.0)
    return (sums / counts)[ep2inst]


def reinforce_loss(costs: np.ndarray, baseline: np.ndarray,
                   log_prob: Var) -> Var:
    """Advantage-weighted log-likelihood, averaged over episodes."""
    adv = costs - baseline
    weighted = ad.mul(log_prob, Var(adv, name="advantage"))
    return ad.mean(weighted)


def multitask_step(mt: MultiTaskParams, cfg: ModelConfig,
                   instances: list[Instance], weights: list[np.ndarray],
                   rng: np.random.Generator) -> dict[str, np.ndarray | float]:
    """One policy-gradient step of the multi-task model: sampled rollouts for
    every task on the same instance batch, summed REINFORCE loss, gradients.

    Returns {grads, task_costs}; the encoder runs once and is shared."""
    pv = mt.params.as_vars()
    feats = np.stack([i.node_features for i in instances])
    depot = (np.stack([i.depot for i in instances])
             if cfg.kind.family == "mocvrp" else None)
    emb = encode_batch(pv, cfg, feats, depot)

    loss = None
    task_costs = []
    for i, w in enumerate(weights):
        batch = rollout_episodes(pv, cfg, instances, "sample", rng,
                                 head_path=mt.head_path(i), emb=emb)
        costs = scalarized_costs(batch.objectives, w, cfg.kind.maximize)
        base = shared_baseline(costs, batch.ep2inst, len(instances))
        task_loss = reinforce_loss(costs, base, batch.log_prob)
        loss = task_loss if loss is None else ad.add(loss, task_loss)
        task_costs.append(float(costs.mean()))
    loss = ad.scalar_mul(loss, 1.0 / len(weights))
    grads = ad.gradients(loss, {p: pv[p] for p in mt.params.paths()})
    return {"grads": grads, "task_costs": np.array(task_costs)}


def inner_loop(mt: MultiTaskParams, cfg: ModelConfig,
               instance_fn, weights: list[np.ndarray],
               inner_steps: int, learning_rate: float,
               rng: np.random.Generator) -> np.ndarray:
    """Train the multi-task model in place with a fresh optimizer.
    `instance_fn()` yields one training batch.  Returns the last step's
    mean cost per task."""
    state = adam_init(mt.params, learning_rate)
    task_costs = np.zeros(len(weights))
    for _ in range(inner_steps):
        out = multitask_step(mt, cfg, instance_fn(), weights, rng)
        adam_step(mt.params, out["grads"], state)
        task_costs = out["task_costs"]
    return task_costs


def meta_update(meta: ParamStore, mt: MultiTaskParams,
                epsilon: float) -> None:
    """Fold the trained multi-task model back into the meta-model, in place.

    The body is taken over verbatim.  The head interpolates toward the mean
    task head; epsilon == 1.0 assigns that mean exactly (no arithmetic on
    the old head), which makes the single-task case a verbatim copy."""
    for path in meta.paths("body"):
        meta.tensors[path][...] = mt.params.tensors[path]
    head_mean = np.mean([mt.head(i) for i in range(mt.n_tasks)], axis=0)
    if epsilon == 1.0:
        meta.tensors[HEAD_PATH][...] = head_mean
    else:
        old = meta.tensors[HEAD_PATH]
        meta.tensors[HEAD_PATH][...] = old + epsilon * (head_mean - old)


def _sample_weights(mode: str, rng: np.random.Generator,
                    scale: ScaleEstimate | None, n_tasks: int,
                    M: int) -> list[np.ndarray]:
    if mode == "scaled-symmetric":
        return scaled_symmetric_sample(rng, scale, n_tasks, M)
    if mode == "symmetric":
        return symmetric_sample(rng, n_tasks, M)
    return random_sample(rng, n_tasks, M)


def meta_train(cfg: MetaConfig, initial: ParamStore | None = None,
               checkpoint_dir: str | Path | None = None,
               start_iteration: int = 0,
               progress: bool = False) -> tuple[ParamStore, TrainLog]:
    """Full meta-training run.  Deterministic for a fixed config: all
    randomness flows from per-purpose child streams of the config seed, and
    resuming at iteration t reproduces the tail of an uninterrupted run."""
    model_cfg = cfg.model
    kind = model_cfg.kind
    # stateless stream derivation: (seed, purpose[, iteration]); resuming at
    # iteration t therefore replays exactly the streams of a full run
    meta = initial.copy() if initial is not None else \
        init_params(model_cfg,
                    np.random.default_rng(np.random.SeedSequence([cfg.seed, 0])))

    val_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    val_seeds = val_rng.integers(0, 2 ** 31, size=cfg.n_validation)
    validation = [generate_instance(kind, cfg.n, int(s)) for s in val_seeds]

    log = TrainLog()
    epsilon = cfg.epsilon0 - start_iteration * cfg.epsilon0 / cfg.meta_iterations
    scale: ScaleEstimate | None = None

    for t in range(start_iteration, cfg.meta_iterations):
        t0 = time.time()
        it_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2, t]))

        if cfg.sampling == "scaled-symmetric" and (
                scale is None or t % cfg.scale_every == 0):
            scale = estimate_scale_with_model(meta, model_cfg, validation, t)
        weights = _sample_weights(cfg.sampling, it_rng, scale,
                                  cfg.n_tasks, kind.M)

        mt = build_multitask(meta, len(weights))

        def make_batch():
            seeds = it_rng.integers(0, 2 ** 31, size=cfg.batch_size)
            return [generate_instance(kind, cfg.n, int(s)) for s in seeds]

        task_costs = inner_loop(mt, model_cfg, make_batch, weights,
                                cfg.inner_steps, cfg.learning_rate, it_rng)
        meta_update(meta, mt, epsilon)
        epsilon = max(0.0, epsilon - cfg.epsilon0 / cfg.meta_iterations)

        log.append(iteration=t, epsilon=epsilon,
                   mean_cost=float(task_costs.mean()),
                   task_costs=";".join(f"{c:.6f}" for c in task_costs),
                   scale_estimate=(";".join(f"{v:.6f}" for v in scale.values)
                                   if scale is not None else ""),
                   wall_time=time.time() - t0)
        if progress:
            print(f"iter {t}: cost {task_costs.mean():.4f} "
                  f"eps {epsilon:.4f}", flush=True)
        if checkpoint_dir and cfg.checkpoint_every and \
                (t + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(Path(checkpoint_dir) / f"meta_{t + 1:06d}.json",
                            meta, kind.to_json(),
                            {"meta_config": cfg.to_json(), "iteration": t + 1})

    if checkpoint_dir:
        save_checkpoint(Path(checkpoint_dir) / "meta_final.json", meta,
                        kind.to_json(),
                        {"meta_config": cfg.to_json(),
                         "iteration": cfg.meta_iterations})
    return meta, log


def estimate_scale_with_model(params: ParamStore, cfg: ModelConfig,
                              validation: list[Instance],
                              iteration: int = 0) -> ScaleEstimate:
    """Objective-scale estimate from greedy multi-start rollouts of the
    current model on the validation set."""
    def rollout_fn(inst):
        return np.stack([r.objective_vector
                         for r in rollout_multistart(params, cfg, inst)])
    return estimate_ideal_scale(rollout_fn, validation, cfg.kind.M,
                                cfg.kind.maximize, iteration)
