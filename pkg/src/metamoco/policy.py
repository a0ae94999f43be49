"""Attention encoder-decoder construction policy with multi-start rollouts.

The network follows the standard attention-model recipe: a linear input
projection, attention layers with skip connections and batch normalization,
then a decoder that attends from a problem-specific context embedding and
scores nodes through a final single-head attention whose key projection is
the model *head*.  Everything else is the *body*; the head is what gets
task-specialized during multi-task training and fine-tuning.

The preference weight is never a network input: subproblem identity enters
only through the loss and through distinct heads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Var
from .problems import (Instance, ProblemKind, apply_action, feasible_mask,
                       initial_state, is_terminal, objectives)

HEAD_PATH = "dec.key.W"


@dataclass(frozen=True)
class ModelConfig:
    kind: ProblemKind
    d_model: int = 32
    n_encoder_layers: int = 2
    n_attention_heads: int = 4
    ff_hidden: int | None = None
    clip: float = 10.0
    graph_pool: str = "mean"     # "sum" matches the summed graph embedding

    def __post_init__(self):
        if self.d_model % self.n_attention_heads != 0:
            raise ValueError("d_model must be divisible by n_attention_heads")
        if self.graph_pool not in ("mean", "sum"):
            raise ValueError(f"unknown graph_pool {self.graph_pool!r}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_attention_heads

    @property
    def ff_dim(self) -> int:
        return self.ff_hidden if self.ff_hidden is not None else 4 * self.d_model

    @property
    def context_dim(self) -> int:
        d = self.d_model
        family = self.kind.family
        if family in ("motsp1", "motsp2"):
            return 3 * d
        if family == "mocvrp":
            return 2 * d + 1
        return d + 1  # mokp

    def to_json(self) -> dict:
        return {
            "kind": self.kind.to_json(),
            "d_model": self.d_model,
            "n_encoder_layers": self.n_encoder_layers,
            "n_attention_heads": self.n_attention_heads,
            "ff_hidden": self.ff_hidden,
            "clip": self.clip,
            "graph_pool": self.graph_pool,
        }

    @staticmethod
    def from_json(doc: dict) -> "ModelConfig":
        return ModelConfig(ProblemKind.from_json(doc["kind"]), doc["d_model"],
                           doc["n_encoder_layers"], doc["n_attention_heads"],
                           doc["ff_hidden"], doc["clip"], doc["graph_pool"])


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ParamStore:
    """Uniform(-1/sqrt(fan_in), +) initialization, like the usual attention
    model; the final key projection is the only 'head' parameter."""
    store = ParamStore()
    d, ff = cfg.d_model, cfg.ff_dim

    def u(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    F = cfg.kind.feature_dim
    store.add("enc.init.W", u((F, d), F))
    store.add("enc.init.b", np.zeros(d))
    if cfg.kind.family == "mocvrp":
        store.add("enc.init_depot.W", u((2, d), 2))
        store.add("enc.init_depot.b", np.zeros(d))
    for i in range(cfg.n_encoder_layers):
        p = f"enc.l{i}"
        for w in ("Wq", "Wk", "Wv", "Wo"):
            store.add(f"{p}.mha.{w}", u((d, d), d))
        store.add(f"{p}.ff.W1", u((d, ff), d))
        store.add(f"{p}.ff.b1", np.zeros(ff))
        store.add(f"{p}.ff.W2", u((ff, d), ff))
        store.add(f"{p}.ff.b2", np.zeros(d))
        for bn in ("bn1", "bn2"):
            store.add(f"{p}.{bn}.gamma", np.ones(d))
            store.add(f"{p}.{bn}.beta", np.zeros(d))
    store.add("dec.ctx.Wq", u((cfg.context_dim, d), cfg.context_dim))
    store.add("dec.ctx.Wk", u((d, d), d))
    store.add("dec.ctx.Wv", u((d, d), d))
    store.add("dec.ctx.Wo", u((d, d), d))
    store.add(HEAD_PATH, u((d, d), d), partition="head")
    return store


# ---------------------------------------------------------------------------
# encoder


def _split_heads(x: Var, cfg: ModelConfig) -> Var:
    """(B, N, d) -> (B, H, N, dh)"""
    b, n, _ = x.shape
    x = ad.reshape(x, (b, n, cfg.n_attention_heads, cfg.head_dim))
    return ad.transpose(x, (0, 2, 1, 3))


def _merge_heads(x: Var, cfg: ModelConfig) -> Var:
    """(B, H, N, dh) -> (B, N, d)"""
    b, _, n, _ = x.shape
    x = ad.transpose(x, (0, 2, 1, 3))
    return ad.reshape(x, (b, n, cfg.d_model))


def _encoder_mha(pv, prefix: str, h: Var, cfg: ModelConfig) -> Var:
    q = _split_heads(ad.matmul(h, pv[f"{prefix}.Wq"]), cfg)
    k = _split_heads(ad.matmul(h, pv[f"{prefix}.Wk"]), cfg)
    v = _split_heads(ad.matmul(h, pv[f"{prefix}.Wv"]), cfg)
    scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2)))
    scores = ad.scalar_mul(scores, 1.0 / math.sqrt(cfg.head_dim))
    att = ad.softmax(scores, name=f"{prefix}.att")
    out = _merge_heads(ad.matmul(att, v), cfg)
    return ad.matmul(out, pv[f"{prefix}.Wo"])


def encode_batch(pv: dict[str, Var], cfg: ModelConfig,
                 features: np.ndarray,
                 depot: np.ndarray | None = None) -> Var:
    """Node embeddings for a batch of same-size instances.

    features: (B, n, F); depot: (B, 2) for mocvrp, whose embedding becomes
    row 0.  Returns (B, nodes, d_model)."""
    if features.shape[-1] != cfg.kind.feature_dim:
        raise ad.ShapeError(
            f"feature dim {features.shape[-1]} != expected "
            f"{cfg.kind.feature_dim} for {cfg.kind.family}")
    h = ad.add(ad.matmul(Var(features, name="features"), pv["enc.init.W"]),
               pv["enc.init.b"])
    if cfg.kind.family == "mocvrp":
        if depot is None:
            raise ValueError("mocvrp encoding requires depot coordinates")
        hd = ad.add(ad.matmul(Var(depot[:, None, :], name="depot"),
                              pv["enc.init_depot.W"]),
                    pv["enc.init_depot.b"])
        h = ad.concat([hd, h], axis=1)
    for i in range(cfg.n_encoder_layers):
        p = f"enc.l{i}"
        h = ad.batch_norm(ad.add(h, _encoder_mha(pv, f"{p}.mha", h, cfg)),
                          pv[f"{p}.bn1.gamma"], pv[f"{p}.bn1.beta"])
        ff = ad.add(ad.matmul(ad.relu(
            ad.add(ad.matmul(h, pv[f"{p}.ff.W1"]), pv[f"{p}.ff.b1"])),
            pv[f"{p}.ff.W2"]), pv[f"{p}.ff.b2"])
        h = ad.batch_norm(ad.add(h, ff),
                          pv[f"{p}.bn2.gamma"], pv[f"{p}.bn2.beta"])
    return h


def encode(params: ParamStore, cfg: ModelConfig,
           instance: Instance) -> np.ndarray:
    """Embeddings of one instance, (nodes, d_model)."""
    with ad.no_grad():
        h = encode_batch(params.as_vars(), cfg,
                         instance.node_features[None, :, :],
                         None if instance.depot is None
                         else instance.depot[None, :])
    return h.value[0]


def graph_embedding(emb: Var, cfg: ModelConfig) -> Var:
    pooled = ad.mean(emb, axis=1) if cfg.graph_pool == "mean" \
        else ad.sum_(emb, axis=1)
    return pooled


# ---------------------------------------------------------------------------
# decoder


@dataclass
class DecodeCache:
    """Per-rollout precomputation: these do not change across decode steps."""
    emb: Var                     # (E, nodes, d)
    graph: Var                   # (E, d)
    glimpse_k: Var               # (E, H, nodes, dh)
    glimpse_v: Var               # (E, H, nodes, dh)
    final_k: dict[str, Var]      # head path -> (E, nodes, d)


def build_decode_cache(pv: dict[str, Var], cfg: ModelConfig, emb: Var,
                       head_paths: list[str]) -> DecodeCache:
    return DecodeCache(
        emb=emb,
        graph=graph_embedding(emb, cfg),
        glimpse_k=_split_heads(ad.matmul(emb, pv["dec.ctx.Wk"]), cfg),
        glimpse_v=_split_heads(ad.matmul(emb, pv["dec.ctx.Wv"]), cfg),
        final_k={hp: ad.matmul(emb, pv[hp]) for hp in head_paths},
    )


def decode_step_rows(pv: dict[str, Var], cfg: ModelConfig, cache: DecodeCache,
                     rows: np.ndarray, context: Var, mask: np.ndarray,
                     head_path: str = HEAD_PATH) -> Var:
    """Selection probabilities for the episode rows in `rows`.

    context: (K, context_dim); mask: (K, nodes) boolean, True = forbidden.
    Returns (K, nodes) with masked entries exactly zero."""
    if not (~mask).any(axis=1).all():
        raise ValueError("a decode row has every action masked")
    K = len(rows)
    nodes = cache.emb.shape[1]
    d, H, dh = cfg.d_model, cfg.n_attention_heads, cfg.head_dim

    gk = ad.take_rows(cache.glimpse_k, rows)
    gv = ad.take_rows(cache.glimpse_v, rows)
    fk = ad.take_rows(cache.final_k[head_path], rows)

    q = ad.matmul(context, pv["dec.ctx.Wq"])            # (K, d)
    q = ad.transpose(ad.reshape(q, (K, 1, H, dh)), (0, 2, 1, 3))
    scores = ad.matmul(q, ad.transpose(gk, (0, 1, 3, 2)))
    scores = ad.scalar_mul(scores, 1.0 / math.sqrt(dh))
    att = ad.softmax(
        scores, np.broadcast_to(mask[:, None, None, :], scores.shape),
        name="dec.glimpse")
    glimpse = ad.reshape(ad.transpose(ad.matmul(att, gv), (0, 2, 1, 3)),
                         (K, d))
    q_c = ad.matmul(glimpse, pv["dec.ctx.Wo"])          # (K, d)

    logits = ad.reshape(
        ad.matmul(ad.reshape(q_c, (K, 1, d)), ad.transpose(fk, (0, 2, 1))),
        (K, nodes))
    logits = ad.scalar_mul(logits, 1.0 / math.sqrt(d / H))
    logits = ad.scalar_mul(ad.tanh(logits), cfg.clip)
    return ad.softmax(logits, mask, name="dec.probs")


def context_embedding_rows(cfg: ModelConfig, cache: DecodeCache,
                           rows: np.ndarray, states,
                           first_nodes: np.ndarray) -> Var:
    """Context vectors for the given episodes: graph embedding plus the
    problem-specific slots (last/first node embedding, remaining capacity)."""
    family = cfg.kind.family
    graph = ad.take_rows(cache.graph, rows)
    emb_rows = ad.take_rows(cache.emb, rows)
    if family in ("motsp1", "motsp2"):
        cur = np.array([s.current for s in states])
        last = ad.take_along_batch(emb_rows, cur)
        first = ad.take_along_batch(emb_rows, first_nodes)
        return ad.concat([graph, last, first])
    if family == "mocvrp":
        cur = np.array([s.current for s in states])
        last = ad.take_along_batch(emb_rows, cur)
        cap = Var(np.array([[s.remaining] for s in states]), name="capacity")
        return ad.concat([graph, last, cap])
    cap = Var(np.array([[s.remaining] for s in states]), name="capacity")
    return ad.concat([graph, cap])


def context_embedding(params: ParamStore, cfg: ModelConfig,
                      instance: Instance, state) -> np.ndarray:
    """Single-state context vector (inference view of the batched builder)."""
    emb = encode(params, cfg, instance)
    with ad.no_grad():
        cache = build_decode_cache(params.as_vars(), cfg,
                                   Var(emb[None], name="emb"), [HEAD_PATH])
        first = np.array([_first_node(cfg.kind, state)])
        ctx = context_embedding_rows(cfg, cache, np.array([0]), [state], first)
    return ctx.value[0]


def _first_node(kind: ProblemKind, state) -> int:
    if kind.family == "mocvrp":
        return state.sequence[1]
    return state.sequence[0]


def decode_step(params: ParamStore, cfg: ModelConfig, embeddings: np.ndarray,
                context: np.ndarray, mask: np.ndarray,
                head: np.ndarray | None = None) -> np.ndarray:
    """One-state decode: probabilities over actions.  `head` overrides the
    stored final key projection (used by the multi-task variant)."""
    pv = params.as_vars()
    if head is not None:
        pv = dict(pv)
        pv[HEAD_PATH] = Var(head, name=HEAD_PATH)
    with ad.no_grad():
        cache = build_decode_cache(pv, cfg, Var(embeddings[None], name="emb"),
                                   [HEAD_PATH])
        probs = decode_step_rows(pv, cfg, cache, np.array([0]),
                                 Var(context[None], name="ctx"),
                                 mask[None, :])
    return probs.value[0]


# ---------------------------------------------------------------------------
# multi-task model


@dataclass
class MultiTaskParams:
    """Shared body plus one final key projection per task."""
    params: ParamStore
    n_tasks: int

    def head_path(self, i: int) -> str:
        return f"{HEAD_PATH}@{i}"

    def head_paths(self) -> list[str]:
        return [self.head_path(i) for i in range(self.n_tasks)]

    def head(self, i: int) -> np.ndarray:
        return self.params.tensors[self.head_path(i)]


def build_multitask(meta: ParamStore, n_tasks: int) -> MultiTaskParams:
    """Copy the meta body once and replicate the meta head n_tasks times."""
    store = ParamStore()
    for path in meta.paths("body"):
        store.add(path, meta.tensors[path].copy(), "body")
    for i in range(n_tasks):
        store.add(f"{HEAD_PATH}@{i}", meta.tensors[HEAD_PATH].copy(), "head")
    return MultiTaskParams(store, n_tasks)


def multi_task_decode_step(multitask: MultiTaskParams, cfg: ModelConfig,
                           embeddings: np.ndarray,
                           contexts: list[np.ndarray],
                           masks: list[np.ndarray]) -> list[np.ndarray]:
    """Per-task probability vectors for one shared state batch of size 1."""
    body = ParamStore()
    for path in multitask.params.paths("body"):
        body.add(path, multitask.params.tensors[path], "body")
    body.add(HEAD_PATH, np.zeros_like(multitask.head(0)), "head")
    return [decode_step(body, cfg, embeddings, contexts[i], masks[i],
                        head=multitask.head(i))
            for i in range(multitask.n_tasks)]


# ---------------------------------------------------------------------------
# rollouts


@dataclass
class Rollout:
    instance_index: int
    start_index: int
    sequence: tuple[int, ...]
    objective_vector: np.ndarray


@dataclass
class RolloutBatch:
    """All multi-start episodes of one batch, in episode order."""
    episodes: list[Rollout]
    ep2inst: np.ndarray              # episode -> instance index
    objectives: np.ndarray           # (E, M)
    log_prob: Var | None             # (E,) summed log-likelihood, if recorded
    skipped_starts: list[tuple[int, int]] = field(default_factory=list)


def _episode_starts(instances: list[Instance]) -> tuple[list[tuple[int, int]],
                                                         list[tuple[int, int]]]:
    episodes, skipped = [], []
    for j, inst in enumerate(instances):
        if inst.kind.family == "mokp":
            for s in range(inst.n):
                if inst.item_weights[s] <= inst.capacity + 1e-12:
                    episodes.append((j, s))
                else:
                    skipped.append((j, s))
        else:
            for s in range(inst.n):
                episodes.append((j, s))
    return episodes, skipped


def _choose(probs: np.ndarray, mask: np.ndarray, mode: str,
            rng: np.random.Generator | None) -> np.ndarray:
    if mode == "greedy":
        return probs.argmax(axis=1)
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random(probs.shape[0])
    actions = (cdf < u[:, None]).sum(axis=1)
    # numerical guard: never return a masked action
    bad = mask[np.arange(len(actions)), actions]
    if bad.any():
        actions[bad] = np.where(mask[bad], -np.inf, probs[bad]).argmax(axis=1)
    return actions


def rollout_episodes(pv: dict[str, Var], cfg: ModelConfig,
                     instances: list[Instance], mode: str,
                     rng: np.random.Generator | None = None,
                     head_path: str = HEAD_PATH,
                     emb: Var | None = None,
                     cache: DecodeCache | None = None,
                     record: bool = True,
                     forced: list[tuple[int, ...]] | None = None) -> RolloutBatch:
    """Multi-start construction over a batch of same-shape instances.

    One episode per (instance, start).  `emb`/`cache` allow sharing the
    encoder output (and per-head key caches) across tasks.  Mode "replay"
    follows `forced` (per-episode action lists, excluding the forced
    start), which makes the log-likelihood differentiable at fixed actions."""
    if mode not in ("greedy", "sample", "replay"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode requires an rng")
    if mode == "replay" and forced is None:
        raise ValueError("replay mode requires forced action lists")
    kind = cfg.kind

    episode_keys, skipped = _episode_starts(instances)
    ep2inst = np.array([j for j, _ in episode_keys], dtype=np.intp)
    starts = np.array([s for _, s in episode_keys], dtype=np.intp)
    E = len(episode_keys)

    if cache is None:
        if emb is None:
            feats = np.stack([i.node_features for i in instances])
            depot = (np.stack([i.depot for i in instances])
                     if kind.family == "mocvrp" else None)
            emb = encode_batch(pv, cfg, feats, depot)
        emb_ep = ad.take_rows(emb, ep2inst)
        cache = build_decode_cache(pv, cfg, emb_ep, [head_path])

    states = [initial_state(instances[j], s) for j, s in episode_keys]
    if kind.family == "mocvrp":
        first_nodes = starts + 1
    else:
        first_nodes = starts

    logp_total: Var | None = None
    cursor = np.zeros(E, dtype=np.intp)  # replay position per episode
    active = [e for e in range(E)
              if not is_terminal(instances[ep2inst[e]], states[e])]
    while active:
        rows = np.array(active, dtype=np.intp)
        mask = np.stack([~feasible_mask(instances[ep2inst[e]], states[e])
                         for e in active])
        ctx = context_embedding_rows(cfg, cache, rows,
                                     [states[e] for e in active],
                                     first_nodes[rows])
        probs = decode_step_rows(pv, cfg, cache, rows, ctx, mask, head_path)
        if mode == "replay":
            actions = np.array([forced[e][cursor[e]] for e in active])
            cursor[rows] += 1
        else:
            actions = _choose(probs.value, mask, mode, rng)
        if record:
            step_logp = ad.log(ad.take_along_batch(probs, actions))
            scattered = ad.scatter_rows(step_logp, rows, E)
            logp_total = scattered if logp_total is None \
                else ad.add(logp_total, scattered)
        next_active = []
        for e, a in zip(active, actions):
            inst = instances[ep2inst[e]]
            states[e] = apply_action(inst, states[e], int(a))
            if not is_terminal(inst, states[e]):
                next_active.append(e)
        active = next_active

    episodes = []
    objs = np.zeros((E, kind.M))
    for e, (j, s) in enumerate(episode_keys):
        seq = states[e].sequence
        objs[e] = objectives(instances[j], seq)
        episodes.append(Rollout(j, s, seq, objs[e]))
    return RolloutBatch(episodes, ep2inst, objs, logp_total, skipped)


def rollout_multistart(params: ParamStore, cfg: ModelConfig,
                       instance: Instance, mode: str = "greedy",
                       rng: np.random.Generator | None = None) -> list[Rollout]:
    """All multi-start rollouts of a single instance (no gradients)."""
    with ad.no_grad():
        batch = rollout_episodes(params.as_vars(), cfg, [instance], mode, rng,
                                 record=False)
    return batch.episodes
