import numpy as np
import pytest

from fedrecsam.optim import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    AdamState,
    SgdState,
    apply_update,
    make_optimizer,
)


def test_sgd_arithmetic():
    state = make_optimizer("sgd", 2)
    params = np.array([1.0, 1.0])
    apply_update(state, params, np.array([2.0, 2.0]), 0.5)
    assert np.array_equal(params, np.zeros(2))
    assert state.step == 1


def test_sgd_zero_gradient_no_change():
    state = make_optimizer("sgd", 3)
    params = np.array([1.0, -2.0, 3.0])
    before = params.copy()
    apply_update(state, params, np.zeros(3), 0.1)
    assert np.array_equal(params, before)


def test_adam_first_step_magnitude():
    # Bias-corrected first step moves each coordinate by ~lr.
    state = make_optimizer("adam", 2)
    params = np.zeros(2)
    apply_update(state, params, np.ones(2), 0.1)
    m_hat = (1 - ADAM_BETA1) / (1 - ADAM_BETA1)
    v_hat = (1 - ADAM_BETA2) / (1 - ADAM_BETA2)
    expected = -0.1 * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    assert params == pytest.approx([expected, expected], abs=1e-15)
    assert abs(params[0] + 0.1) < 1e-7


def test_adam_recurrence_two_steps():
    # Evaluate the textbook recurrence independently and compare.
    state = make_optimizer("adam", 1)
    params = np.array([0.5])
    grads = [np.array([0.3]), np.array([-0.2])]
    lr = 0.05

    m = v = 0.0
    theta = 0.5
    for t, g in enumerate(grads, start=1):
        m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g[0]
        v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g[0] ** 2
        theta -= lr * (m / (1 - ADAM_BETA1 ** t)) / (np.sqrt(v / (1 - ADAM_BETA2 ** t)) + ADAM_EPS)
        apply_update(state, params, g, lr)
    assert params[0] == pytest.approx(theta, abs=1e-15)
    assert state.step == 2


def test_state_copy_is_independent():
    state = make_optimizer("adam", 2)
    params = np.zeros(2)
    apply_update(state, params, np.ones(2), 0.1)
    clone = state.copy()
    apply_update(state, params, np.ones(2), 0.1)
    assert clone.step == 1 and state.step == 2
    assert not np.array_equal(clone.m, state.m)


def test_dimension_mismatch_rejected():
    state = make_optimizer("sgd", 2)
    with pytest.raises(ValueError):
        apply_update(state, np.zeros(2), np.zeros(3), 0.1)


def test_unknown_variant():
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", 2)


def test_moment_shapes():
    state = make_optimizer("adam", 5)
    assert isinstance(state, AdamState)
    assert state.m.shape == (5,) and state.v.shape == (5,)
    assert isinstance(make_optimizer("sgd", 5), SgdState)
