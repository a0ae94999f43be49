"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The heavyweight fixtures (the trained desk-scale meta-model and its
held-out instance set) are module-scoped and shared by the end-to-end
criteria.
"""

import numpy as np
import pytest

from metamoco import autodiff as ad
from metamoco.autodiff import Var
from metamoco.decomposition import (ScaleEstimate, das_dennis_weights,
                                    random_sample, scaled_symmetric_sample,
                                    symmetric_sample)
from metamoco.evaluation import (brute_force_pareto, hv_ratio, hypervolume,
                                 mc_hypervolume, pareto_filter, refpoints,
                                 solve_instance)
from metamoco.finetune import (FinetuneConfig, hierarchical_finetune,
                               step_budget, vanilla_finetune)
from metamoco.policy import (HEAD_PATH, ModelConfig, build_multitask,
                             context_embedding, decode_step, encode,
                             init_params, multi_task_decode_step,
                             rollout_episodes)
from metamoco.problems import (ProblemKind, apply_action, augment,
                               check_feasible, feasible_mask,
                               generate_instance, initial_state, is_terminal,
                               objectives)
from metamoco.training import MetaConfig, meta_train

DESK_KIND = ProblemKind("motsp1", 2)
DESK_MODEL = ModelConfig(DESK_KIND, d_model=32, n_encoder_layers=2)
DESK_WEIGHTS = das_dennis_weights(2, 10)          # N = 11


def report(num, name, ok, detail=""):
    print(f"[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'} "
          f"{detail}".rstrip())
    assert ok, f"criterion {num} ({name}): {detail}"


@pytest.fixture(scope="module")
def desk_meta():
    cfg = MetaConfig(DESK_MODEL, n=6, n_tasks=2, batch_size=16,
                     inner_steps=10, meta_iterations=200, seed=0)
    meta, _ = meta_train(cfg)
    return meta


@pytest.fixture(scope="module")
def held_out():
    rng = np.random.default_rng(np.random.SeedSequence([123, 9]))
    seeds = rng.integers(0, 2 ** 31, size=20)
    return [generate_instance(DESK_KIND, 6, int(s)) for s in seeds]


def test_criterion_01_budget_arithmetic():
    full = step_budget(M=2, N=101, K=20, L=7)
    ok = full["idealized_total"] == 5080 and full["exact_total"] == 4540
    report(1, "budget arithmetic", ok,
           f"idealized={full['idealized_total']} exact={full['exact_total']}")


def test_criterion_02_weight_generation():
    bi = das_dennis_weights(2, 100)
    tri = das_dennis_weights(3, 13)
    on_simplex = all(
        abs(w.sum() - 1.0) <= 1e-12 and np.all(w >= -1e-12)
        for w in bi + tri)
    ok = len(bi) == 101 and len(tri) == 105 and on_simplex
    report(2, "weight generation", ok, f"counts={len(bi)}/{len(tri)}")


def _surrogate_report(kind, n, d, seed):
    cfg = ModelConfig(kind, d_model=d, n_encoder_layers=2,
                      n_attention_heads=2 if d == 4 else 4)
    params = init_params(cfg, np.random.default_rng(seed))
    instances = [generate_instance(kind, n, seed)]
    batch = rollout_episodes(params.as_vars(), cfg, instances, "sample",
                             np.random.default_rng(seed + 1))
    # cvrp sequences open with the implicit depot plus the forced start
    skip = 2 if kind.family == "mocvrp" else 1
    forced = [r.sequence[skip:] for r in batch.episodes]
    adv = np.linspace(-1.0, 1.0, len(batch.episodes))

    def fn(leaves):
        b = rollout_episodes(leaves, cfg, instances, "replay", forced=forced)
        return ad.mean(ad.mul(b.log_prob, Var(adv)))

    return ad.check_gradients(fn, dict(params.tensors), tolerance=1e-3)


def test_criterion_03_gradient_correctness():
    # autodiff primitives first, tighter tolerance
    r = np.random.default_rng(0)
    prim_errs = []
    for fn, scale, shift in (
        (lambda v: ad.sum_(ad.mul(ad.softmax(v["a"]), v["b"])), 1.0, 2.0),
        (lambda v: ad.sum_(ad.mul(ad.batch_norm(v["a"], v["g"], v["be"]),
                                  v["b"])), 1.0, 2.0),
        # keep matmul outputs inside tanh's non-saturated range
        (lambda v: ad.sum_(ad.tanh(ad.matmul(v["a"],
                                             ad.transpose(v["b"], (1, 0))))),
         0.3, 0.0),
        (lambda v: ad.mean(ad.log(ad.add(ad.mul(v["a"], v["a"]),
                                         ad.relu(v["b"])))), 1.0, 2.0),
    ):
        tensors = {"a": r.normal(size=(4, 6)) * scale + shift,
                   "b": r.normal(size=(4, 6)) * scale + shift,
                   "g": r.normal(size=(6,)), "be": r.normal(size=(6,))}
        rep = ad.check_gradients(fn, tensors, tolerance=1e-4)
        prim_errs.append(rep["max_relative_error"])
        assert rep["passed"], rep

    kinds = [ProblemKind("motsp1", 2), ProblemKind("motsp2", 2),
             ProblemKind("mocvrp", 2), ProblemKind("mokp", 2),
             ProblemKind("motsp1", 3)]
    configs = [(k, n, d) for k in kinds for n, d in
               ((3, 4), (4, 4), (5, 4), (4, 8))]
    worst = 0.0
    for seed, (kind, n, d) in enumerate(configs):
        rep = _surrogate_report(kind, n, d, seed)
        worst = max(worst, rep["max_relative_error"])
        assert rep["passed"], (kind.family, n, d, rep["max_relative_error"])
    ok = worst < 1e-3 and max(prim_errs) < 1e-4
    report(3, "gradient correctness", ok,
           f"{len(configs)} configs, worst policy rel err {worst:.2e}, "
           f"worst primitive {max(prim_errs):.2e}")


def test_criterion_04_multitask_equivalence():
    kind = ProblemKind("motsp1", 2)
    cfg = ModelConfig(kind, d_model=16, n_encoder_layers=1)
    params = init_params(cfg, np.random.default_rng(1))
    rng = np.random.default_rng(2)
    worst = 0.0
    for n_tasks in (1, 2, 3):
        mt = build_multitask(params, n_tasks)
        for trial in range(100):
            inst = generate_instance(kind, 5, trial)
            state = initial_state(inst, int(rng.integers(5)))
            for _ in range(int(rng.integers(3))):
                if is_terminal(inst, state):
                    break
                mask = feasible_mask(inst, state)
                state = apply_action(inst, state,
                                     int(rng.choice(np.flatnonzero(mask))))
            emb = encode(params, cfg, inst)
            ctx = context_embedding(params, cfg, inst, state)
            mask = ~feasible_mask(inst, state)
            base = decode_step(params, cfg, emb, ctx, mask)
            for p in multi_task_decode_step(mt, cfg, emb, [ctx] * n_tasks,
                                            [mask] * n_tasks):
                worst = max(worst, float(np.max(np.abs(p - base))))
    report(4, "multi-task equivalence", worst <= 1e-12,
           f"max deviation {worst:.2e} over 100 states x 3 task counts")


def test_criterion_05_reptile_degenerate():
    from metamoco.training import (_sample_weights, estimate_scale_with_model,
                                   inner_loop)
    cfg = MetaConfig(ModelConfig(DESK_KIND, d_model=16, n_encoder_layers=1),
                     n=5, n_tasks=1, batch_size=4, inner_steps=2,
                     meta_iterations=1, epsilon0=1.0, n_validation=4, seed=4)
    meta, _ = meta_train(cfg)

    # replay the single meta-iteration by hand
    initial = init_params(cfg.model,
                          np.random.default_rng(np.random.SeedSequence([4, 0])))
    val_rng = np.random.default_rng(np.random.SeedSequence([4, 1]))
    validation = [generate_instance(DESK_KIND, 5, int(s))
                  for s in val_rng.integers(0, 2 ** 31, size=4)]
    it_rng = np.random.default_rng(np.random.SeedSequence([4, 2, 0]))
    scale = estimate_scale_with_model(initial, cfg.model, validation, 0)
    weights = _sample_weights(cfg.sampling, it_rng, scale, 1, 2)
    mt = build_multitask(initial, 1)

    def make_batch():
        seeds = it_rng.integers(0, 2 ** 31, size=cfg.batch_size)
        return [generate_instance(DESK_KIND, 5, int(s)) for s in seeds]

    inner_loop(mt, cfg.model, make_batch, weights, cfg.inner_steps,
               cfg.learning_rate, it_rng)
    bit_equal = all(
        np.array_equal(meta.tensors[p], mt.params.tensors[p])
        for p in meta.paths("body")) and np.array_equal(
            meta.tensors[HEAD_PATH], mt.params.tensors["dec.key.W@0"])
    report(5, "reptile degenerate case", bit_equal,
           "meta == inner-trained model bitwise")


def test_criterion_06_sampling_stabilization():
    ones = ScaleEstimate(np.ones(2))
    rng = np.random.default_rng(6)
    exact_half = all(
        ((p[0] + p[1]) / 2.0 == 0.5).all()
        for p in (np.array(scaled_symmetric_sample(rng, ones, 2, 2))
                  for _ in range(10_000)))

    ones3 = ScaleEstimate(np.ones(3))
    a = scaled_symmetric_sample(np.random.default_rng(7), ones3, 6, 3)
    b = symmetric_sample(np.random.default_rng(7), 6, 3)
    scaled_matches = all(np.allclose(x, y, atol=1e-12) for x, y in zip(a, b))

    rng_s, rng_r = np.random.default_rng(8), np.random.default_rng(8)
    sym_means = [np.mean([w[0] for w in symmetric_sample(rng_s, 2, 2)])
                 for _ in range(10_000)]
    rnd_means = [np.mean([w[0] for w in random_sample(rng_r, 2, 2)])
                 for _ in range(10_000)]
    var_sym, var_rnd = np.var(sym_means), np.var(rnd_means)
    ok = exact_half and scaled_matches and var_sym == 0.0 and var_rnd > 0.01
    report(6, "sampling stabilization", ok,
           f"var(symmetric)={var_sym:.3g} var(random)={var_rnd:.3g}")


def test_criterion_07_hypervolume_correctness():
    hand = hypervolume([(1, 2), (2, 1)], (3, 3))
    rng = np.random.default_rng(70)
    worst_sigmas = 0.0
    n = 1_000_000
    for M in (2, 3):
        for trial in range(50):
            pts = rng.uniform(0.05, 0.95, size=(rng.integers(1, 12), M))
            front = pareto_filter(pts).points
            exact = hypervolume(front, np.ones(M))
            mc = mc_hypervolume(front, np.ones(M), np.zeros(M), n,
                                seed=1000 * M + trial)
            sigma = np.sqrt(max(exact * (1 - exact), 1e-12) / n)
            worst_sigmas = max(worst_sigmas, abs(mc - exact) / sigma)
    ok = hand == 3.0 and worst_sigmas < 3.0
    report(7, "hypervolume correctness", ok,
           f"hand case {hand}, worst |exact-MC| = {worst_sigmas:.2f} sigma "
           f"over 100 fronts")


def _walk_random(inst, rng, start=None):
    if start is None:
        start = 0
        if inst.kind.family == "mokp":
            fits = np.flatnonzero(inst.item_weights <= inst.capacity)
            start = int(fits[0])
    state = initial_state(inst, start)
    while not is_terminal(inst, state):
        mask = feasible_mask(inst, state)
        state = apply_action(inst, state, int(rng.choice(np.flatnonzero(mask))))
    return state


def test_criterion_08_feasibility_and_augmentation():
    rng = np.random.default_rng(80)
    kinds = [ProblemKind("motsp1", 2), ProblemKind("motsp2", 2),
             ProblemKind("mocvrp", 2), ProblemKind("mokp", 2)]
    rollouts_per_kind = 10_000
    for kind in kinds:
        for trial in range(rollouts_per_kind):
            inst = generate_instance(kind, 6, trial % 50)
            start = None
            if kind.family == "mokp":
                fits = np.flatnonzero(inst.item_weights <= inst.capacity)
                start = int(fits[trial % len(fits)])
            state = _walk_random(inst, rng, start)
            check_feasible(inst, state.sequence)

    counts_ok = True
    invariance_ok = True
    for kind, expected in [(ProblemKind("motsp1", 2), 64),
                           (ProblemKind("motsp1", 3), 512),
                           (ProblemKind("motsp2", 2), 16),
                           (ProblemKind("motsp2", 3), 128),
                           (ProblemKind("mocvrp", 2), 8)]:
        inst = generate_instance(kind, 6, 0)
        copies = augment(inst)
        counts_ok &= len(copies) == expected
        seq = _walk_random(inst, np.random.default_rng(0)).sequence
        ref = objectives(inst, seq)
        invariance_ok &= all(
            np.allclose(objectives(c, seq), ref, atol=1e-9) for c in copies)
    ok = counts_ok and invariance_ok
    report(8, "feasibility and augmentation", ok,
           f"{rollouts_per_kind} rollouts x {len(kinds)} problems feasible; "
           f"transform counts and invariance hold")


def test_criterion_09_end_to_end_desk_scale(desk_meta, held_out):
    fcfg = FinetuneConfig(n=6, steps=5, batch_size=16, seed=0)
    subset = hierarchical_finetune(desk_meta, DESK_MODEL, DESK_WEIGHTS, L=3,
                                   cfg=fcfg)
    assert subset.total_steps == 85

    untrained = init_params(DESK_MODEL, np.random.default_rng(999))
    untrained_set = vanilla_finetune(
        untrained, DESK_MODEL, DESK_WEIGHTS,
        FinetuneConfig(n=6, steps=0, batch_size=16))

    r, z = refpoints(DESK_KIND, 6)
    model_r, oracle_r, untrained_r = [], [], []
    for inst in held_out:
        front = solve_instance(subset, DESK_MODEL, inst,
                               use_augmentation=True)
        model_r.append(hv_ratio(front.points, r, z))
        oracle_r.append(hv_ratio(brute_force_pareto(inst).points, r, z))
        f0 = solve_instance(untrained_set, DESK_MODEL, inst,
                            use_augmentation=True)
        untrained_r.append(hv_ratio(f0.points, r, z))
    mr, mo, mu = map(float, map(np.mean, (model_r, oracle_r, untrained_r)))
    ok = mr >= 0.95 * mo and mr > mu
    report(9, "end-to-end desk scale", ok,
           f"model {mr:.4f} vs oracle {mo:.4f} ({mr / mo:.1%}), "
           f"untrained {mu:.4f}")


def test_criterion_10_hierarchical_vs_vanilla(desk_meta, held_out):
    r, z = refpoints(DESK_KIND, 6)
    details = []
    ok = True
    for K in (1, 5):
        budget = step_budget(2, len(DESK_WEIGHTS), K, 3)
        h = hierarchical_finetune(
            desk_meta, DESK_MODEL, DESK_WEIGHTS, L=3,
            cfg=FinetuneConfig(n=6, steps=K, batch_size=16, seed=1))
        v = vanilla_finetune(
            desk_meta, DESK_MODEL, DESK_WEIGHTS,
            FinetuneConfig(n=6, steps=budget["matched_vanilla_steps"],
                           batch_size=16, seed=1))
        hr = float(np.mean([hv_ratio(
            solve_instance(h, DESK_MODEL, i).points, r, z)
            for i in held_out]))
        vr = float(np.mean([hv_ratio(
            solve_instance(v, DESK_MODEL, i).points, r, z)
            for i in held_out]))
        ok &= hr >= vr
        details.append(f"K={K}: hier {hr:.4f} vs vanilla {vr:.4f}")
    report(10, "hierarchical vs vanilla at matched budget", ok,
           "; ".join(details))


def test_criterion_11_reproducibility(tmp_path, monkeypatch):
    from metamoco.cli import main

    def pipeline(tag):
        # each run works under its own root with identical relative paths,
        # so the recorded configs (and their hashes) must match exactly
        root = tmp_path / tag
        root.mkdir()
        monkeypatch.chdir(root)
        assert main(["train", "--problem", "motsp1", "--objectives", "2",
                     "--size", "5", "--d-model", "16", "--encoder-layers",
                     "1", "--n-tasks", "2", "--batch-size", "4",
                     "--inner-steps", "2", "--meta-iterations", "2",
                     "--seed", "0", "--out", "train"]) == 0
        assert main(["finetune", "--checkpoint", "train/meta_final.json",
                     "--mode", "hierarchical", "--levels", "2", "--steps",
                     "1", "--lattice-h", "2", "--batch-size", "2",
                     "--seed", "0", "--out", "ft"]) == 0
        assert main(["eval", "--submodels", "ft", "--count", "2", "--size",
                     "5", "--seed", "0", "--threads", "1",
                     "--out", "ev"]) == 0
        return (root / "train/meta_final.json").read_bytes(), \
            (root / "ft/manifest.json").read_bytes(), \
            (root / "ev/results.json").read_bytes()

    a, b = pipeline("a"), pipeline("b")
    ok = a == b
    report(11, "reproducibility", ok,
           "checkpoints, manifests and results byte-identical across runs")
