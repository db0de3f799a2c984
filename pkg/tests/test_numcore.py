import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from numcore import (
    ADAM, SGD, BoxBounds, OptimizerState, PlateauScheduler, adam_update, box_lbfgs_minimize,
    finite_diff_grad, max_relative_error, sgd_update,
)
from numcore import ops
from utils.errors import NumericError, StructuralError


# ---------------------------------------------------------------------------
# SGD / Adam
# ---------------------------------------------------------------------------

def test_sgd_single_step():
    state = OptimizerState(kind=SGD, lr=0.1)
    updated = sgd_update({"p": np.array(1.0)}, {"p": np.array(0.5)}, state)
    assert updated["p"] == pytest.approx(0.95)
    assert state.step == 1


def test_sgd_zero_gradient_keeps_params():
    state = OptimizerState(kind=SGD, lr=0.1)
    params = {"w": np.array([1.0, -2.0, 3.0])}
    updated = sgd_update(params, {"w": np.zeros(3)}, state)
    np.testing.assert_array_equal(updated["w"], params["w"])


def test_sgd_three_steps_on_square():
    state = OptimizerState(kind=SGD, lr=0.1)
    params = {"p": np.array(1.0)}
    for _ in range(3):
        params = sgd_update(params, {"p": 2.0 * params["p"]}, state)
    assert float(params["p"]) == pytest.approx(0.512, abs=1e-12)


def test_sgd_shape_mismatch():
    state = OptimizerState(kind=SGD, lr=0.1)
    with pytest.raises(StructuralError):
        sgd_update({"p": np.zeros(3)}, {"p": np.zeros(2)}, state)


def test_adam_zero_gradient_keeps_params():
    state = OptimizerState(kind=ADAM, lr=0.01)
    params = {"w": np.array([0.3, -0.7])}
    updated = adam_update(params, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(updated["w"], params["w"])


def test_adam_first_step_moves_by_lr():
    state = OptimizerState(kind=ADAM, lr=0.01)
    updated = adam_update({"w": np.array([1.0, 1.0])}, {"w": np.array([3.0, -0.2])}, state)
    np.testing.assert_allclose(updated["w"], [1.0 - 0.01, 1.0 + 0.01], atol=1e-8)


def test_adam_matches_scalar_recurrence():
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    state = OptimizerState(kind=ADAM, lr=lr)
    params = {"p": np.array(2.0)}
    p, m, v = 2.0, 0.0, 0.0
    for t in (1, 2):
        g = 2.0 * p
        params = adam_update(params, {"p": np.array(2.0 * float(params["p"]))}, state)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    assert abs(float(params["p"]) - p) <= 1e-12


def test_adam_rejects_non_finite_gradient():
    state = OptimizerState(kind=ADAM, lr=0.01)
    with pytest.raises(NumericError):
        adam_update({"w": np.zeros(2)}, {"w": np.array([np.nan, 0.0])}, state)


def test_plateau_scheduler_halves_learning_rate():
    state = OptimizerState(kind=SGD, lr=0.1)
    scheduler = PlateauScheduler(state, factor=0.5, patience=2)
    assert scheduler.step(1.0) is False
    assert scheduler.step(1.0) is False
    assert scheduler.step(1.0) is True
    assert state.lr == pytest.approx(0.05)
    assert scheduler.step(0.5) is False
    assert state.lr == pytest.approx(0.05)


# ---------------------------------------------------------------------------
# Box L-BFGS
# ---------------------------------------------------------------------------

def _quadratic(c):
    def objective(x):
        d = x - c
        return float(np.sum(d * d)), 2.0 * d
    return objective


def test_lbfgs_finds_interior_optimum():
    c = np.array([0.2, 0.7, 0.4])
    bounds = BoxBounds(np.zeros(3), np.ones(3))
    result = box_lbfgs_minimize(_quadratic(c), np.full(3, 0.5), bounds, max_iter=100, tol=1e-10)
    np.testing.assert_allclose(result.x, c, atol=1e-7)
    assert result.converged


def test_lbfgs_clips_exterior_optimum_to_box():
    c = np.array([-0.5, 0.3, 1.8, 0.9])
    bounds = BoxBounds(np.zeros(4), np.ones(4))
    result = box_lbfgs_minimize(_quadratic(c), np.full(4, 0.5), bounds, max_iter=100, tol=1e-10)
    np.testing.assert_allclose(result.x, np.clip(c, 0.0, 1.0), atol=1e-7)


def _rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100.0 * (b - a * a) ** 2
    grad = np.array([-2 * (1 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)])
    return f, grad


def test_lbfgs_callback_stops_at_requested_iteration():
    seen = []

    def callback(iteration, x, f):
        seen.append((iteration, x.copy()))
        return iteration == 3

    bounds = BoxBounds(np.full(2, -5.0), np.full(2, 5.0))
    result = box_lbfgs_minimize(_rosenbrock, np.array([-1.2, 1.0]), bounds, max_iter=200, callback=callback)
    assert result.iterations == 3
    assert result.stopped_by_callback
    np.testing.assert_array_equal(result.x, seen[-1][1])


def test_lbfgs_non_finite_start_raises():
    bounds = BoxBounds(np.zeros(2), np.ones(2))
    with pytest.raises(NumericError):
        box_lbfgs_minimize(lambda x: (np.inf, np.zeros(2)), np.zeros(2), bounds)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2.0, 3.0), min_size=1, max_size=6), st.floats(0.0, 0.45))
def test_lbfgs_iterate_stays_in_box(center, radius):
    c = np.asarray(center)
    bounds = BoxBounds.around(np.full(c.size, 0.5), radius)
    result = box_lbfgs_minimize(_quadratic(c), np.full(c.size, 0.5), bounds, max_iter=30)
    assert bounds.contains(result.x, atol=1e-12)


def test_box_bounds_around_intersects_unit_interval():
    bounds = BoxBounds.around(np.array([0.02, 0.5, 0.99]), 0.05)
    np.testing.assert_allclose(bounds.lower, [0.0, 0.45, 0.94])
    np.testing.assert_allclose(bounds.upper, [0.07, 0.55, 1.0])


# ---------------------------------------------------------------------------
# Finite differences and ops
# ---------------------------------------------------------------------------

def test_finite_diff_square():
    grad = finite_diff_grad(lambda x: float(np.sum(x ** 2)), np.array([3.0]), h=1e-4)
    assert grad[0] == pytest.approx(6.0, abs=1e-7)


def test_finite_diff_constant_is_zero():
    grad = finite_diff_grad(lambda x: 4.2, np.ones((2, 3)))
    np.testing.assert_array_equal(grad, np.zeros((2, 3)))


def test_finite_diff_sine():
    grad = finite_diff_grad(lambda x: float(np.sin(x[0])), np.array([0.0]), h=1e-5)
    assert grad[0] == pytest.approx(1.0, abs=1e-8)


def test_finite_diff_rejects_non_positive_step():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda x: 0.0, np.zeros(1), h=0.0)


def test_max_relative_error():
    assert max_relative_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert max_relative_error([1.0, 2.0], [1.0, 1.0]) == pytest.approx(0.5)
    assert max_relative_error([0.0], [0.0]) == 0.0
    with pytest.raises(StructuralError):
        max_relative_error(np.zeros(3), np.zeros((3, 1)))


def test_conv_keeps_constant_input_constant():
    x = np.full((1, 2, 5, 5), 0.4)
    weight = np.random.default_rng(0).standard_normal((3, 2, 3, 3))
    bias = np.array([0.1, -0.2, 0.0])
    out, _ = ops.conv2d_forward(x, weight, bias)
    expected = 0.4 * weight.sum(axis=(1, 2, 3)) + bias
    np.testing.assert_allclose(out[0, :, 2, 2], expected)
    np.testing.assert_allclose(out, np.broadcast_to(expected[None, :, None, None], out.shape))


def test_conv_backward_matches_finite_differences():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 2, 4, 4))
    weight = rng.standard_normal((2, 2, 3, 3))
    bias = rng.standard_normal(2)
    upstream = rng.standard_normal((1, 2, 4, 4))

    def objective(inp):
        out, _ = ops.conv2d_forward(inp, weight, bias)
        return float(np.sum(out * upstream))

    _, cache = ops.conv2d_forward(x, weight, bias)
    grad_x, _, _ = ops.conv2d_backward(upstream, cache)
    assert max_relative_error(grad_x, finite_diff_grad(objective, x)) < 1e-6


def test_sign_of_zero_is_zero():
    np.testing.assert_array_equal(ops.sign(np.array([-2.0, 0.0, 3.0])), [-1.0, 0.0, 1.0])


def test_log_softmax_is_stable():
    out = ops.log_softmax(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(out))
    assert out[0, 0] == pytest.approx(0.0)
