import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsprl import diffcomp as dc
from tsprl.diffcomp import Tensor


def square_graph(params, inputs):
    x = params["x"]
    return dc.total(x * x)


def test_square_value_and_gradient():
    params = dc.ParameterStore()
    params.add("x", [3.0])
    out, grads = dc.evaluate_with_gradients(square_graph, None, params)
    assert out == 9.0
    assert grads["x"] == pytest.approx([6.0])


def test_init_range_and_determinism():
    store = dc.init_parameters([("W", [2, 128])], seed=1)
    bound = 1 / np.sqrt(2)
    assert np.all(np.abs(store["W"].value) <= bound)
    again = dc.init_parameters([("W", [2, 128])], seed=1)
    np.testing.assert_array_equal(store["W"].value, again["W"].value)


def test_gate_init_squashes_to_half():
    store = dc.init_parameters([("gate", [1], "zeros")], seed=0)
    assert dc.sigmoid(store["gate"]).item() == 0.5


def test_duplicate_names_rejected():
    with pytest.raises(ValueError):
        dc.init_parameters([("W", [2, 2]), ("W", [3, 3])], seed=0)


def test_bad_shape_rejected():
    with pytest.raises(ValueError):
        dc.init_parameters([("W", [0, 2])], seed=0)


def test_non_scalar_root_rejected():
    params = dc.ParameterStore()
    params.add("x", np.ones(3))
    with pytest.raises(ValueError):
        dc.evaluate_with_gradients(lambda p, _: p["x"] * 2.0, None, params)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        dc.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    with pytest.raises(ValueError):
        dc.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_masked_softmax_masked_gradient_zero():
    params = dc.ParameterStore()
    params.add("u", [0.3, -1.2, 2.0, 0.7])
    mask = np.array([False, True, False, False])
    weights = np.array([1.0, 5.0, -2.0, 0.5])

    def graph(p, _):
        return dc.total(dc.masked_softmax(p["u"], mask) * weights)

    _, grads = dc.evaluate_with_gradients(graph, None, params)
    assert grads["u"][1] == 0.0
    assert np.all(grads["u"][[0, 2, 3]] != 0.0)


def test_masked_softmax_all_masked():
    with pytest.raises(ValueError):
        dc.masked_softmax(Tensor(np.zeros(3)), np.ones(3, bool))


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 30), seed=st.integers(0, 2**31 - 1))
def test_masked_softmax_normalised(n, seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(scale=5, size=n)
    mask = rng.random(n) < 0.5
    mask[rng.integers(n)] = False
    p = dc.masked_softmax(Tensor(u), mask).value
    assert np.all(p[mask] == 0.0)
    assert abs(p[~mask].sum() - 1.0) < 1e-12
    logp = dc.masked_log_softmax(Tensor(u), mask).value
    np.testing.assert_allclose(np.exp(logp[~mask]), p[~mask], rtol=1e-12)


def two_layer(params, x):
    h = dc.tanh(Tensor(x) @ params["w1"] + params["b1"])
    return dc.mean(dc.tanh(h @ params["w2"]))


def test_two_layer_tanh_matches_finite_differences():
    params = dc.init_parameters([("w1", (3, 5)), ("b1", (5,)), ("w2", (5, 2))], seed=4)
    x = np.random.default_rng(0).normal(size=(7, 3))
    _, grads = dc.evaluate_with_gradients(two_layer, x, params)
    eps = 1e-5
    for name, t in params.items():
        for idx in np.ndindex(t.shape):
            orig = t.value[idx]
            t.value[idx] = orig + eps
            hi = two_layer(params, x).item()
            t.value[idx] = orig - eps
            lo = two_layer(params, x).item()
            t.value[idx] = orig
            numeric = (hi - lo) / (2 * eps)
            assert abs(numeric - grads[name][idx]) / max(abs(numeric), abs(grads[name][idx]), 1e-8) < 1e-4


def test_fd_check_healthy_model():
    params = dc.init_parameters([("w1", (3, 5)), ("b1", (5,)), ("w2", (5, 2))], seed=4)
    x = np.random.default_rng(0).normal(size=(7, 3))
    assert dc.finite_difference_check(two_layer, x, params, probe_count=25, epsilon=1e-5) < 1e-4


def test_fd_check_constant_graph_is_zero():
    params = dc.init_parameters([("w", (3, 3))], seed=0)
    const = lambda p, _: dc.total(Tensor(np.ones(3)))  # noqa: E731
    assert dc.finite_difference_check(const, None, params, probe_count=5) == 0.0


def test_fd_check_detects_scaled_gradient():
    params = dc.init_parameters([("w1", (3, 5)), ("b1", (5,)), ("w2", (5, 2))], seed=4)
    x = np.random.default_rng(0).normal(size=(7, 3))
    _, grads = dc.evaluate_with_gradients(two_layer, x, params)
    doubled = {k: 2 * v for k, v in grads.items()}
    err = dc.finite_difference_check(two_layer, x, params, probe_count=10, grads=doubled)
    assert err == pytest.approx(0.5, abs=1e-4)


def test_fd_check_rejects_bad_epsilon():
    params = dc.init_parameters([("w", (2,))], seed=0)
    with pytest.raises(ValueError):
        dc.finite_difference_check(square_graph, None, params, epsilon=0)


def test_op_gradients_each_match_fd():
    rng = np.random.default_rng(3)
    params = dc.ParameterStore()
    params.add("A", rng.normal(size=(4, 3)))
    params.add("v", rng.normal(size=3))
    params.add("s", [0.4])
    params.add("pos", rng.uniform(0.5, 2.0, size=3))
    mask = np.array([False, True, False, False])

    def graph(p, _):
        a = p["A"]
        row = a[2]
        mat = dc.relu(a @ p["v"] + 0.1)
        z = dc.sigmoid(p["s"]) * (a @ p["v"]) - mat
        ls = dc.masked_log_softmax(z, mask)
        return dc.total(ls * np.array([1.0, 0.0, 2.0, 3.0])) + dc.total(dc.log(p["pos"])) + row @ p["v"] \
            + dc.mean(a * a) + (1.0 - dc.sigmoid(p["s"])).__mul__(2.0)[0]

    assert dc.finite_difference_check(graph, None, params, probe_count=22) < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_gradient_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    params = dc.ParameterStore()
    params.add("w", rng.normal(size=(3, 3)))
    x = rng.normal(size=(2, 3))
    f = lambda p, _: dc.total(dc.tanh(Tensor(x) @ p["w"]))  # noqa: E731
    g = lambda p, _: dc.mean(dc.relu(Tensor(x) @ p["w"]) * 2.0)  # noqa: E731
    combo = lambda p, _: f(p, _) * a + g(p, _) * b  # noqa: E731
    _, gf = dc.evaluate_with_gradients(f, None, params)
    _, gg = dc.evaluate_with_gradients(g, None, params)
    _, gc = dc.evaluate_with_gradients(combo, None, params)
    np.testing.assert_allclose(gc["w"], a * gf["w"] + b * gg["w"], atol=1e-12)


def test_gradients_accumulate_and_zero():
    params = dc.ParameterStore()
    params.add("x", [2.0])
    dc.backward(square_graph(params, None))
    dc.backward(square_graph(params, None))
    assert params["x"].grad == pytest.approx([8.0])
    params.zero_grad()
    assert np.all(params["x"].grad == 0.0)


def test_no_grad_records_nothing():
    params = dc.ParameterStore()
    params.add("x", [2.0])
    with dc.no_grad():
        out = square_graph(params, None)
    assert not out.parents
    assert out.item() == 4.0


def test_clip_and_optimizers():
    params = dc.ParameterStore()
    params.add("x", [3.0, 4.0])
    params["x"].grad[:] = [3.0, 4.0]
    assert dc.clip_grad_norm(params, 1.0) == pytest.approx(5.0)
    assert params.grad_norm() == pytest.approx(1.0)
    dc.SGD(params, 0.5).step()
    np.testing.assert_allclose(params["x"].value, [3.0 - 0.3, 4.0 - 0.4])
    opt = dc.Adam(params, lr=0.1)
    before = params["x"].value.copy()
    opt.step()
    # first Adam step moves each coordinate by lr against the gradient sign
    np.testing.assert_allclose(params["x"].value, before - 0.1, atol=1e-6)


def test_adam_minimises_quadratic():
    params = dc.ParameterStore()
    params.add("x", [3.0, -2.0])
    opt = dc.Adam(params, lr=0.05)
    for _ in range(500):
        params.zero_grad()
        dc.backward(square_graph(params, None))
        opt.step()
    assert np.all(np.abs(params["x"].value) < 1e-2)


def test_maximize_climbs():
    for make in (lambda p: dc.SGD(p, 0.1, maximize=True), lambda p: dc.Adam(p, 0.1, maximize=True)):
        params = dc.ParameterStore()
        params.add("x", [1.0])
        params["x"].grad[:] = [2.0]
        make(params).step()
        assert params["x"].value[0] > 1.0


def test_extended_check_resolves_small_gradients():
    # a large constant offset makes float64 differences coarse next to the tiny slope
    params = dc.ParameterStore()
    params.add("w", [0.3, -0.2])

    def graph(p, _):
        return dc.total(p["w"] * np.array([1e-8, 2e-8])) + 10.0

    assert dc.finite_difference_check(graph, None, params, extended=False) > 1e-4
    assert dc.finite_difference_check(graph, None, params) < 1e-4
    assert params["w"].value.dtype == np.float64
