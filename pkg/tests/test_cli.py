import json

import numpy as np
import pytest

from metamoco.cli import main

TRAIN_FLAGS = ["--problem", "motsp1", "--objectives", "2", "--size", "5",
               "--d-model", "16", "--encoder-layers", "1", "--n-tasks", "2",
               "--batch-size", "4", "--inner-steps", "2",
               "--meta-iterations", "2", "--checkpoint-every", "1"]


def run(argv):
    return main(argv)


def train(tmp_path, seed="0", extra=()):
    out = tmp_path / f"train{seed}"
    code = run(["train", *TRAIN_FLAGS, "--seed", seed,
                "--out", str(out), *extra])
    assert code == 0
    return out


def test_budget_command(capsys):
    assert run(["budget", "--objectives", "2", "--steps", "20",
                "--levels", "7"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["idealized_total"] == 5080
    assert doc["exact_total"] == 4540
    assert doc["n_weights"] == 101


def test_missing_problem_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        run(["train", "--size", "5"])
    assert e.value.code == 2


def test_invalid_config_value_is_usage_error(tmp_path):
    code = run(["train", "--problem", "mocvrp", "--objectives", "3",
                "--size", "5", "--out", str(tmp_path / "x")])
    assert code == 2


def test_train_writes_artifacts_and_is_reproducible(tmp_path):
    a = train(tmp_path, "0")
    assert (a / "meta_final.json").exists()
    assert (a / "train_log.csv").exists()
    assert json.loads((a / "config.json").read_text())["config_hash"]
    b_out = tmp_path / "again"
    run(["train", *TRAIN_FLAGS, "--seed", "0", "--out", str(b_out)])
    assert (a / "meta_final.json").read_bytes() == \
        (b_out / "meta_final.json").read_bytes()


def test_resume_matches_uninterrupted(tmp_path):
    full = train(tmp_path, "0")
    part = tmp_path / "part"
    part.mkdir()
    import shutil
    shutil.copy(full / "meta_000001.json", part)
    code = run(["train", *TRAIN_FLAGS, "--seed", "0", "--out", str(part),
                "--resume"])
    assert code == 0
    assert (full / "meta_final.json").read_bytes() == \
        (part / "meta_final.json").read_bytes()


def test_resume_without_checkpoints_is_data_error(tmp_path):
    code = run(["train", *TRAIN_FLAGS, "--seed", "0",
                "--out", str(tmp_path / "empty"), "--resume"])
    assert code == 3


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# desk run\nsteps = 20\nlevels = 7\n")
    assert run(["budget", "--objectives", "2", "--config", str(cfg)]) == 0
    assert json.loads(capsys.readouterr().out)["exact_total"] == 4540
    # flag wins over file
    assert run(["budget", "--objectives", "2", "--config", str(cfg),
                "--levels", "3", "--lattice-h", "10"]) == 0
    assert json.loads(capsys.readouterr().out)["exact_total"] == \
        (2 + 4) * 20 + 11 * 20


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("warp_speed = 9\n")
    assert run(["budget", "--config", str(cfg)]) == 2


def test_full_pipeline_and_eval_determinism(tmp_path):
    t = train(tmp_path, "0")
    f = tmp_path / "ft"
    code = run(["finetune", "--checkpoint", str(t / "meta_final.json"),
                "--mode", "hierarchical", "--levels", "2", "--steps", "1",
                "--lattice-h", "3", "--batch-size", "2", "--out", str(f)])
    assert code == 0
    manifest = json.loads((f / "manifest.json").read_text())
    assert len(manifest["files"]) == 4
    budget = json.loads((f / "budget.json").read_text())
    assert budget["actual_total_steps"] == budget["budget"]["exact_total"]

    e1, e2 = tmp_path / "e1", tmp_path / "e2"
    eval_flags = ["eval", "--submodels", str(f), "--count", "2", "--size",
                  "5", "--oracle-compare", "--seed", "1"]
    assert run([*eval_flags, "--out", str(e1)]) == 0
    assert run([*eval_flags, "--out", str(e2)]) == 0
    assert (e1 / "results.json").read_bytes() == \
        (e2 / "results.json").read_bytes()
    results = json.loads((e1 / "results.json").read_text())
    assert len(results["per_instance"]) == 2
    assert "oracle_hv_ratio" in results["per_instance"][0]
    assert (e1 / "front_000.csv").exists()
    assert (e1 / "front_000.svg").read_text().startswith("<svg")


def test_eval_threads_match_single_thread(tmp_path):
    t = train(tmp_path, "0")
    f = tmp_path / "ft"
    run(["finetune", "--checkpoint", str(t / "meta_final.json"),
         "--mode", "vanilla", "--ktilde", "1", "--lattice-h", "2",
         "--batch-size", "2", "--out", str(f)])
    e1, e4 = tmp_path / "t1", tmp_path / "t4"
    base = ["eval", "--submodels", str(f), "--count", "3", "--size", "5"]
    assert run([*base, "--threads", "1", "--out", str(e1)]) == 0
    assert run([*base, "--threads", "4", "--out", str(e4)]) == 0
    assert (e1 / "results.json").read_bytes() == \
        (e4 / "results.json").read_bytes()


def test_oracle_command(tmp_path):
    out = tmp_path / "oracle"
    assert run(["oracle", "--problem", "motsp1", "--objectives", "2",
                "--size", "3", "--count", "2", "--out", str(out)]) == 0
    doc = json.loads((out / "oracle.json").read_text())
    assert all(r["front_size"] == 1 for r in doc["per_instance"])
    # over the enumeration limit: refused with a usage error
    assert run(["oracle", "--problem", "motsp1", "--objectives", "2",
                "--size", "12", "--count", "1",
                "--out", str(tmp_path / "o2")]) == 2


def test_plot_command(tmp_path):
    out = tmp_path / "oracle"
    run(["oracle", "--problem", "motsp1", "--objectives", "2", "--size", "4",
         "--count", "1", "--out", str(out)])
    svg = tmp_path / "p.svg"
    assert run(["plot", "--front", str(out / "oracle_front_000.csv"),
                "--out", str(svg)]) == 0
    assert svg.read_text().startswith("<svg")


def test_plot_missing_file_is_data_error(tmp_path):
    assert run(["plot", "--front", str(tmp_path / "nope.csv"),
                "--out", str(tmp_path / "p.svg")]) == 3
