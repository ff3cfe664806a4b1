import numpy as np
import pytest

from retone.errors import NumericsError
from retone.nn.adam import AdamState, adam_step


def test_zero_gradient_leaves_params_unchanged():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    state = AdamState(lr=0.1)
    adam_step(params, {"w": np.zeros(3)}, state)
    assert np.array_equal(params["w"], [1.0, -2.0, 3.0])
    assert state.t == 1


def test_first_step_is_signed_learning_rate():
    for g in (0.5, -4.0, 1e-3):
        params = {"w": np.array([0.0])}
        state = AdamState(lr=0.01)
        adam_step(params, {"w": np.array([g])}, state)
        # bias correction makes m_hat = g and v_hat = g^2 at t=1
        assert params["w"][0] == pytest.approx(-0.01 * np.sign(g), rel=1e-4)


def test_scalar_quadratic_descent():
    params = {"w": np.array([0.0])}
    state = AdamState(lr=0.01)
    for _ in range(5000):
        grad = 2.0 * (params["w"] - 3.0)
        adam_step(params, {"w": grad}, state)
        if abs(params["w"][0] - 3.0) < 0.01:
            break
    assert abs(params["w"][0] - 3.0) < 0.01


def test_nonfinite_gradient_rejected():
    params = {"w": np.zeros(2)}
    state = AdamState()
    with pytest.raises(NumericsError):
        adam_step(params, {"w": np.array([1.0, np.nan])}, state)


def test_matches_reference_formula_sequence():
    """Cross-check a few steps against a direct transcription of the update."""
    rng = np.random.default_rng(0)
    w = rng.standard_normal(4)
    params = {"w": w.copy()}
    state = AdamState(lr=0.002)
    m = np.zeros(4)
    v = np.zeros(4)
    ref = w.copy()
    for t in range(1, 6):
        g = rng.standard_normal(4)
        adam_step(params, {"w": g.copy()}, state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.002 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert np.allclose(params["w"], ref, atol=1e-12)
