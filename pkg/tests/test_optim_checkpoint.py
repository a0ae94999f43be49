import numpy as np
import pytest

from metamoco.autodiff import ParamStore
from metamoco.checkpoint import load_checkpoint, save_checkpoint
from metamoco.optim import adam_init, adam_step


def make_store():
    ps = ParamStore()
    ps.add("w", np.array([1.0, -2.0]))
    ps.add("k", np.array([[0.5]]), partition="head")
    return ps


def test_adam_first_step_matches_hand_calc():
    ps = make_store()
    state = adam_init(ps, learning_rate=0.1)
    g = {"w": np.array([1.0, 1.0]), "k": np.array([[2.0]])}
    adam_step(ps, g, state)
    # first step: m_hat = g, v_hat = g^2, update = lr * g/(|g|+eps) = lr*sign
    assert np.allclose(ps.tensors["w"], [0.9, -2.1], atol=1e-6)
    assert np.allclose(ps.tensors["k"], [[0.4]], atol=1e-6)


def test_adam_reference_sequence():
    # compare three steps against an independent scalar reimplementation
    ps = ParamStore()
    ps.add("x", np.array([0.3]))
    state = adam_init(ps, learning_rate=0.01)
    x, m, v = 0.3, 0.0, 0.0
    for t in range(1, 4):
        grad = 2.0 * x
        adam_step(ps, {"x": np.array([2.0 * ps.tensors["x"][0]])}, state)
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad * grad
        x -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert np.allclose(ps.tensors["x"], [x], atol=1e-12)


def test_adam_respects_frozen_paths():
    ps = make_store()
    state = adam_init(ps, paths=["k"])
    before = ps.tensors["w"].copy()
    adam_step(ps, {"w": np.ones(2), "k": np.ones((1, 1))}, state)
    assert np.array_equal(ps.tensors["w"], before)
    assert not np.allclose(ps.tensors["k"], 0.5)


def test_adam_missing_gradient_raises():
    ps = make_store()
    state = adam_init(ps)
    with pytest.raises(KeyError):
        adam_step(ps, {"w": np.ones(2)}, state)


def test_checkpoint_roundtrip(tmp_path):
    ps = make_store()
    state = adam_init(ps)
    adam_step(ps, {"w": np.ones(2), "k": np.ones((1, 1))}, state)
    path = tmp_path / "ck.json"
    save_checkpoint(path, ps, {"family": "motsp1", "M": 2}, {"lr": 1e-4},
                    state)
    loaded = load_checkpoint(path)
    assert loaded["params"].allclose(ps)
    assert loaded["params"].partition["k"] == "head"
    assert loaded["adam_state"].step_count == 1
    assert np.array_equal(loaded["adam_state"].m["w"], state.m["w"])


def test_checkpoint_byte_identical(tmp_path):
    ps = make_store()
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(a, ps, {"family": "mokp", "M": 2}, {"x": 1})
    save_checkpoint(b, ps.copy(), {"family": "mokp", "M": 2}, {"x": 1})
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_rejects_unknown_version(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format_version": 99}')
    with pytest.raises(ValueError):
        load_checkpoint(path)
