import numpy as np
import pytest

from gldfn.network import WeightStore
from gldfn.optim import AdamState, adam_step, scheduled_lr
from gldfn.tensor import ShapeError, Tensor


def store_with(values):
    store = WeightStore()
    for i, v in enumerate(values):
        store[f"p{i}"] = Tensor(np.asarray(v, dtype=np.float32), requires_grad=True)
    return store


def test_zero_gradient_leaves_weights():
    store = store_with([np.ones((1, 2, 2, 2))])
    state = AdamState(store)
    store["p0"].grad = np.zeros((1, 2, 2, 2), dtype=np.float32)
    before = store["p0"].data.copy()
    adam_step(store, state, lr=0.1)
    np.testing.assert_array_equal(store["p0"].data, before)
    assert state.step == 1


def test_first_step_magnitude():
    store = store_with([np.zeros((1, 1, 2, 2))])
    state = AdamState(store)
    store["p0"].grad = np.ones((1, 1, 2, 2), dtype=np.float32)
    adam_step(store, state, lr=0.01)
    expected = 0.01 * 1.0 / (1.0 + state.eps)
    np.testing.assert_allclose(store["p0"].data, -expected, rtol=1e-6)


def test_moments_decay_without_gradient():
    store = store_with([np.zeros((1, 1, 1, 1))])
    state = AdamState(store)
    store["p0"].grad = np.ones((1, 1, 1, 1), dtype=np.float32)
    adam_step(store, state, lr=0.01)
    m1 = state.m["p0"].copy()
    store["p0"].grad = None
    adam_step(store, state, lr=0.01)
    np.testing.assert_allclose(state.m["p0"], state.beta1 * m1, rtol=1e-7)


def test_identical_runs_bit_identical():
    rng = np.random.default_rng(0)
    grads = [rng.standard_normal((1, 2, 3, 3)).astype(np.float32) for _ in range(20)]

    def run():
        store = store_with([np.ones((1, 2, 3, 3))])
        state = AdamState(store)
        for i, g in enumerate(grads):
            store["p0"].grad = g.copy()
            adam_step(store, state, lr=scheduled_lr(1e-3, i, 8))
        return store["p0"].data.copy()

    np.testing.assert_array_equal(run(), run())


def test_shape_mismatch_rejected():
    store = store_with([np.zeros((1, 1, 2, 2))])
    state = AdamState(store)
    store["p0"].grad = np.zeros((1, 1, 3, 3), dtype=np.float32)
    with pytest.raises(ShapeError):
        adam_step(store, state, lr=0.1)


def test_lr_schedule_formula():
    assert scheduled_lr(4e-4, 0, 200_000) == 4e-4
    assert scheduled_lr(4e-4, 199_999, 200_000) == 4e-4
    assert scheduled_lr(4e-4, 200_000, 200_000) == 2e-4
    assert scheduled_lr(4e-4, 600_000, 200_000) == 0.5e-4
