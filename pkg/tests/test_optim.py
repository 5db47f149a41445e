import numpy as np
import pytest

from citris.diffcore import tensor as T
from citris.diffcore.optim import ParamStore, warmup_cosine_lr


def test_zero_gradient_leaves_parameters_unchanged():
    store = ParamStore()
    p = store.add("p", np.array([1.0, -2.0]))
    p.grad = np.zeros(2)
    store.adam_step(lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    assert store.step_count == 1


def test_first_step_moves_by_lr_times_sign():
    store = ParamStore()
    p = store.add("p", np.array(0.0))
    p.grad = np.array(1.0)
    store.adam_step(lr=0.1)
    # bias-corrected first step is lr * g / (|g| + eps') ~= lr
    assert abs(p.data + 0.1) < 1e-6


def test_hundred_steps_minimize_square():
    # independent scalar reference loop: same update rule written longhand
    def reference(p0, lr, steps):
        m = v = 0.0
        p = p0
        for t in range(1, steps + 1):
            g = 2.0 * p
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            p -= lr * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        return p

    store = ParamStore()
    p = store.add("p", np.array(1.0))
    for _ in range(100):
        store.zero_grad()
        loss = T.square(p)
        loss.backward()
        store.adam_step(lr=0.1)
    assert abs(p.data) < 0.05
    assert np.isclose(float(p.data), reference(1.0, 0.1, 100), atol=1e-12)


def test_gradient_shape_mismatch_rejected():
    store = ParamStore()
    p = store.add("p", np.zeros(3))
    p.grad = np.zeros(2)
    with pytest.raises(ValueError):
        store.adam_step(lr=0.1)


def test_lr_must_be_positive():
    with pytest.raises(ValueError):
        ParamStore().adam_step(lr=0.0)


def test_warmup_cosine_shape():
    base = 1e-3
    lrs = [warmup_cosine_lr(s, 1000, base, warmup_steps=100) for s in range(1000)]
    assert lrs[0] == pytest.approx(base / 100)
    assert lrs[99] == pytest.approx(base)
    assert max(lrs) <= base + 1e-12
    assert lrs[-1] < 1e-5  # decayed near zero
    assert all(a >= b - 1e-15 for a, b in zip(lrs[100:-1], lrs[101:]))  # monotone decay


def test_state_roundtrip_bit_exact():
    rng = np.random.default_rng(0)
    store = ParamStore()
    store.add("a", rng.standard_normal((3, 2)))
    store.add("b", rng.standard_normal(4))
    saved = store.state_arrays()
    store.params["a"].data[:] = 0.0
    store.load_state_arrays(saved)
    np.testing.assert_array_equal(store.params["a"].data, saved["a"])
