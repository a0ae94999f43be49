"""Command-line harness: train, finetune, eval, oracle, budget, plot.

Every run resolves its configuration (defaults < config file < flags),
hashes it, and embeds {version, config hash, seed} in all artifacts so
equal triples mean byte-identical outputs (wall-clock fields excluded).

Exit codes: 0 success, 2 usage/config error, 3 data error (missing or
mismatched inputs), 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import NumericError
from .checkpoint import load_checkpoint, save_checkpoint
from .decomposition import das_dennis_weights
from .evaluation import (brute_force_pareto, hv_ratio, hypervolume,
                         pareto_filter, refpoints, solve_instance)
from .evaluation import gap as hv_gap
from .finetune import (FinetuneConfig, SubmodelSet, hierarchical_finetune,
                       step_budget, vanilla_finetune)
from .plotting import save_front_svg
from .policy import ModelConfig, init_params
from .problems import (Instance, ProblemKind, generate_instance,
                       load_instances, save_instances)
from .training import MetaConfig, meta_train


class UsageError(Exception):
    exit_code = 2


class DataError(Exception):
    exit_code = 3


def _out_root() -> Path:
    return Path(os.environ.get("METAMOCO_OUT", "runs"))


# ---------------------------------------------------------------------------
# configuration plumbing


def _read_config_file(path: str) -> dict[str, str]:
    """KEY=VALUE lines, '#' comments; keys use flag spelling without '--'."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataError(f"cannot read config file {path}: {e}") from e
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected KEY=VALUE")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _subparser(parser: argparse.ArgumentParser,
               command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise AssertionError("no subparsers registered")


def _apply_config_file(parser: argparse.ArgumentParser,
                       args: argparse.Namespace,
                       argv: list[str]) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    raw = _read_config_file(args.config)
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions}
    explicit = _explicit_flags(argv)
    for key, value in raw.items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r}")
        if key in explicit:
            continue  # command line wins
        action = actions[key]
        try:
            if isinstance(action, argparse._StoreTrueAction):
                parsed: object = value.lower() in ("1", "true", "yes", "on")
            else:
                parsed = (action.type or str)(value)
        except ValueError as e:
            raise UsageError(f"config key {key!r}: {e}") from e
        setattr(args, key, parsed)
    return args


def _explicit_flags(argv: list[str]) -> set[str]:
    return {a.lstrip("-").split("=", 1)[0].replace("-", "_")
            for a in argv if a.startswith("--")}


def resolved_config(args: argparse.Namespace) -> dict:
    # threads and verbosity never change results, so they stay out of the
    # hash; equal hashes must mean byte-identical outputs
    skip = ("func", "out", "resume", "config", "threads", "verbose")
    return {k: v for k, v in sorted(vars(args).items())
            if k not in skip and not callable(v)}


def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _stamp(args: argparse.Namespace) -> dict:
    return {
        "version": __version__,
        "config_hash": config_hash(resolved_config(args)),
        "seed": getattr(args, "seed", None),
    }


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _kind(args) -> ProblemKind:
    try:
        return ProblemKind(args.problem, args.objectives)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _model_config(args, kind: ProblemKind) -> ModelConfig:
    return ModelConfig(kind, d_model=args.d_model,
                       n_encoder_layers=args.encoder_layers,
                       n_attention_heads=args.attention_heads,
                       graph_pool=args.graph_pool)


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    kind = _kind(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = MetaConfig(
        model=_model_config(args, kind), n=args.size, n_tasks=args.n_tasks,
        batch_size=args.batch_size, inner_steps=args.inner_steps,
        meta_iterations=args.meta_iterations,
        learning_rate=args.learning_rate, epsilon0=args.epsilon0,
        sampling=args.sampling, scale_every=args.scale_every,
        checkpoint_every=args.checkpoint_every, seed=args.seed)

    initial, start = None, 0
    if args.resume:
        latest = sorted(out.glob("meta_[0-9]*.json"))
        if not latest:
            raise DataError(f"--resume: no checkpoints under {out}")
        loaded = load_checkpoint(latest[-1])
        initial = loaded["params"]
        start = loaded["hyperparameters"]["iteration"]

    _write_json(out / "config.json",
                {**_stamp(args), "meta_config": cfg.to_json()})
    meta, log = meta_train(cfg, initial=initial, checkpoint_dir=out,
                           start_iteration=start, progress=args.verbose)
    log.write_csv(out / "train_log.csv")
    print(f"wrote {out / 'meta_final.json'}")
    return 0


def _load_meta(path: str):
    try:
        doc = load_checkpoint(path)
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    meta_cfg = MetaConfig.from_json(doc["hyperparameters"]["meta_config"])
    return doc["params"], meta_cfg


def cmd_finetune(args) -> int:
    meta, meta_cfg = _load_meta(args.checkpoint)
    model_cfg = meta_cfg.model
    M = model_cfg.kind.M
    H = args.lattice_h if args.lattice_h else (100 if M == 2 else 13)
    weights = das_dennis_weights(M, H)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    budget = step_budget(M, len(weights), args.steps, args.levels)
    if args.mode == "hierarchical":
        cfg = FinetuneConfig(meta_cfg.n, args.steps, args.batch_size,
                             args.learning_rate, args.finetune_mode,
                             args.seed)
        subset = hierarchical_finetune(meta, model_cfg, weights, args.levels,
                                       cfg, progress=args.verbose)
    else:
        steps = args.ktilde if args.ktilde else budget["matched_vanilla_steps"]
        cfg = FinetuneConfig(meta_cfg.n, steps, args.batch_size,
                             args.learning_rate, args.finetune_mode,
                             args.seed)
        subset = vanilla_finetune(meta, model_cfg, weights, cfg)
    subset.save(out, model_cfg)
    _write_json(out / "budget.json",
                {**_stamp(args), "budget": budget,
                 "actual_total_steps": subset.total_steps})
    print(f"wrote {len(weights)} submodels to {out} "
          f"({subset.total_steps} fine-tune steps)")
    return 0


def _load_submodels(directory: str) -> tuple[SubmodelSet, ModelConfig]:
    d = Path(directory)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
    except OSError as e:
        raise DataError(f"cannot read submodel manifest in {directory}: {e}") \
            from e
    model_cfg = ModelConfig.from_json(manifest["model"])
    models = [load_checkpoint(d / f)["params"] for f in manifest["files"]]
    weights = [np.array(w) for w in manifest["weights"]]
    return SubmodelSet(weights, models, manifest["strategy"],
                       manifest["total_steps"], manifest["lineage"]), model_cfg


def _eval_instances(args, kind: ProblemKind) -> list[Instance]:
    if args.instances:
        try:
            instances = load_instances(args.instances)
        except OSError as e:
            raise DataError(f"cannot read instances {args.instances}: {e}") \
                from e
        for inst in instances:
            if inst.kind != kind:
                raise DataError(
                    f"instance kind {inst.kind.family} M={inst.kind.M} does "
                    f"not match submodels {kind.family} M={kind.M}")
        return instances
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 9]))
    seeds = rng.integers(0, 2 ** 31, size=args.count)
    return [generate_instance(kind, args.size, int(s)) for s in seeds]


def _front_csv(path: Path, front) -> None:
    M = front.points.shape[1] if len(front) else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"objective_{m + 1}" for m in range(M)]
                        + ["weight_index", "augmentation_index"])
        for p, meta in zip(front.points, front.provenance):
            writer.writerow([f"{v:.12g}" for v in p]
                            + [meta.get("weight_index", ""),
                               meta.get("augmentation_index", "")])


def cmd_eval(args) -> int:
    subset, model_cfg = _load_submodels(args.submodels)
    kind = model_cfg.kind
    instances = _eval_instances(args, kind)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    r_star, z_star = refpoints(kind, instances[0].n)
    sense = "max" if kind.maximize else "min"

    def eval_one(item):
        i, inst = item
        front = solve_instance(subset, model_cfg, inst, args.augment)
        hv = hypervolume(front.points, r_star, sense)
        ratio = hv_ratio(front.points, r_star, z_star, sense)
        row = {"index": i, "hv": hv, "hv_ratio": ratio}
        if args.oracle_compare:
            oracle = brute_force_pareto(inst)
            oracle_ratio = hv_ratio(oracle.points, r_star, z_star, sense)
            row["oracle_hv_ratio"] = oracle_ratio
            row["gap_to_oracle"] = hv_gap(ratio, oracle_ratio)
        return row, front

    t0 = time.time()
    items = list(enumerate(instances))
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(eval_one, items))
    else:
        results = [eval_one(it) for it in items]
    rows = [r for r, _ in results]

    for i, (_, front) in enumerate(results):
        _front_csv(out / f"front_{i:03d}.csv", front)
    for i in range(min(args.plot_instances, len(results))):
        save_front_svg(out / f"front_{i:03d}.svg",
                       [("model", results[i][1].points)])

    doc = {
        **_stamp(args),
        "problem": kind.to_json(), "n": instances[0].n,
        "augmentation": args.augment,
        "r_star": r_star.tolist(), "z_star": z_star.tolist(),
        "per_instance": rows,
        "mean_hv": float(np.mean([r["hv"] for r in rows])),
        "mean_hv_ratio": float(np.mean([r["hv_ratio"] for r in rows])),
    }
    _write_json(out / "results.json", doc)
    # wall time kept out of results.json so reruns are byte-identical
    _write_json(out / "timing.json", {"wall_time_seconds": time.time() - t0})
    print(f"mean HV ratio {doc['mean_hv_ratio']:.4f} over "
          f"{len(instances)} instances -> {out / 'results.json'}")
    return 0


def cmd_oracle(args) -> int:
    from .evaluation import ORACLE_LIMITS
    kind = _kind(args)
    limit = ORACLE_LIMITS[kind.family]
    if args.size > limit:
        raise UsageError(
            f"exact enumeration of {kind.family} is limited to n <= {limit}, "
            f"got --size {args.size}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 9]))
    seeds = rng.integers(0, 2 ** 31, size=args.count)
    instances = [generate_instance(kind, args.size, int(s)) for s in seeds]
    save_instances(out / "instances.json", instances)
    r_star, z_star = refpoints(kind, args.size)
    sense = "max" if kind.maximize else "min"
    rows = []
    for i, inst in enumerate(instances):
        try:
            front = brute_force_pareto(inst)
        except ValueError as e:
            raise UsageError(str(e)) from e
        _front_csv(out / f"oracle_front_{i:03d}.csv", front)
        rows.append({"index": i,
                     "hv": hypervolume(front.points, r_star, sense),
                     "hv_ratio": hv_ratio(front.points, r_star, z_star,
                                          sense),
                     "front_size": len(front)})
    _write_json(out / "oracle.json", {**_stamp(args), "per_instance": rows})
    print(f"wrote exact fronts for {len(instances)} instances to {out}")
    return 0


def cmd_budget(args) -> int:
    M = args.objectives
    H = args.lattice_h if args.lattice_h else (100 if M == 2 else 13)
    N = len(das_dennis_weights(M, H))
    doc = step_budget(M, N, args.steps, args.levels)
    doc["n_weights"] = N
    print(json.dumps(doc, sort_keys=True, indent=1))
    return 0


def cmd_plot(args) -> int:
    series = []
    for path in args.front:
        try:
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader)
                M = sum(1 for h in header if h.startswith("objective_"))
                pts = np.array([[float(v) for v in row[:M]]
                                for row in reader])
        except OSError as e:
            raise DataError(f"cannot read front {path}: {e}") from e
        series.append((Path(path).stem, pts))
    save_front_svg(args.out, series)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for instance evaluation; 1 is the "
                        "canonical reproducibility reference")
    p.add_argument("--config", help="KEY=VALUE config file; flags override")
    p.add_argument("--verbose", action="store_true")


def _add_problem(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", required=True,
                   choices=("motsp1", "motsp2", "mocvrp", "mokp"))
    p.add_argument("--objectives", type=int, default=2)
    p.add_argument("--size", type=int, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metamoco",
        description="meta-trained multi-objective construction policies")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="meta-train a policy")
    _add_problem(p)
    p.add_argument("--d-model", type=int, default=128)
    p.add_argument("--encoder-layers", type=int, default=6)
    p.add_argument("--attention-heads", type=int, default=4)
    p.add_argument("--graph-pool", choices=("mean", "sum"), default="mean")
    p.add_argument("--n-tasks", type=int, default=None,
                   help="weights per meta-iteration (default: M)")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--inner-steps", type=int, default=100)
    p.add_argument("--meta-iterations", type=int, default=3000)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--epsilon0", type=float, default=1.0)
    p.add_argument("--sampling", default="scaled-symmetric",
                   choices=("scaled-symmetric", "symmetric", "random"))
    p.add_argument("--scale-every", type=int, default=1)
    p.add_argument("--checkpoint-every", type=int, default=100)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--out", default=str(_out_root() / "train"))
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="specialize a meta-model per weight")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=("hierarchical", "vanilla"),
                   default="hierarchical")
    p.add_argument("--levels", type=int, default=7)
    p.add_argument("--steps", type=int, default=20,
                   help="K: steps per hierarchy node")
    p.add_argument("--ktilde", type=int, default=None,
                   help="vanilla steps per weight (default: matched budget)")
    p.add_argument("--lattice-h", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--finetune-mode", default="full",
                   choices=("full", "head-only", "decoder-only"))
    p.add_argument("--out", default=str(_out_root() / "finetune"))
    _add_common(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a submodel set")
    p.add_argument("--submodels", required=True)
    p.add_argument("--instances", help="instance JSON file (else generated)")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--size", type=int, default=20)
    p.add_argument("--augment", action="store_true")
    p.add_argument("--oracle-compare", action="store_true")
    p.add_argument("--plot-instances", type=int, default=1)
    p.add_argument("--out", default=str(_out_root() / "eval"))
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exact fronts for tiny instances")
    _add_problem(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--out", default=str(_out_root() / "oracle"))
    _add_common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("budget", help="fine-tuning step accounting")
    p.add_argument("--objectives", type=int, default=2)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--levels", type=int, default=7)
    p.add_argument("--lattice-h", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("plot", help="SVG scatter from front CSV files")
    p.add_argument("--front", nargs="+", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(parser, args,
                                  argv if argv is not None else sys.argv[1:])
        if getattr(args, "n_tasks", "x") is None:
            args.n_tasks = args.objectives
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4
    except KeyError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
