import numpy as np
import pytest

from asvrl import neural
from asvrl.verify import fd_gradient


def _flat_loss(weights, x, g0, ws=None):
    def f(_vec_unused=None):
        y, _ = neural.mlp_forward(weights, x, ws=ws)
        return float(np.sum(y * g0))
    return f


def test_forward_zero_weights():
    w = [np.zeros((4, 6)), np.zeros((2, 5))]
    y, _ = neural.mlp_forward(w, np.random.default_rng(0).normal(size=(3, 5)))
    assert np.all(y == 0.0)


def test_forward_single_layer_identity():
    w = [np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])]
    y, _ = neural.mlp_forward(w, np.array([[2.5, -1.25]]))
    assert np.allclose(y, [[2.5, -1.25]])


def test_forward_matches_equation_level_recomputation():
    rng = np.random.default_rng(5)
    w = neural.init_mlp([7, 16, 16, 3], rng)
    x = rng.normal(size=(6, 7))
    y, _ = neural.mlp_forward(w, x)

    def relu(z):
        return np.maximum(z, 0.0)

    for i in range(x.shape[0]):
        z = x[i]
        manual = w[2] @ np.concatenate([
            relu(w[1] @ np.concatenate([
                relu(w[0] @ np.concatenate([z, [1.0]])), [1.0]])), [1.0]])
        assert np.max(np.abs(y[i] - manual)) <= 1e-12


def test_forward_workspace_path_identical():
    rng = np.random.default_rng(8)
    w = neural.init_mlp([5, 12, 12, 2], rng)
    x = rng.normal(size=(9, 5))
    y_plain, cache_plain = neural.mlp_forward(w, x)
    ws = {}
    y_ws, cache_ws = neural.mlp_forward(w, x, ws=ws, tag="t")
    assert np.array_equal(y_plain, y_ws)
    g0 = rng.normal(size=y_plain.shape)
    g_plain, gin_plain = neural.mlp_backward(w, cache_plain, g0)
    g_ws, gin_ws = neural.mlp_backward(w, cache_ws, g0, ws=ws, tag="t")
    for a, b in zip(g_plain, g_ws):
        assert np.array_equal(a, b)
    assert np.array_equal(gin_plain, gin_ws)


def test_forward_dimension_mismatch():
    w = neural.init_mlp([4, 3, 2], np.random.default_rng(0))
    with pytest.raises(ValueError):
        neural.mlp_forward(w, np.zeros((2, 5)))


def test_backward_zero_upstream():
    rng = np.random.default_rng(1)
    w = neural.init_mlp([4, 8, 2], rng)
    x = rng.normal(size=(5, 4))
    _, cache = neural.mlp_forward(w, x)
    grads, gin = neural.mlp_backward(w, cache, np.zeros((5, 2)))
    assert all(np.all(g == 0.0) for g in grads)
    assert np.all(gin == 0.0)


def test_backward_linear_net_closed_form():
    rng = np.random.default_rng(2)
    w = [rng.normal(size=(3, 5))]
    x = rng.normal(size=(4, 4))
    _, cache = neural.mlp_forward(w, x)
    g0 = rng.normal(size=(4, 3))
    grads, gin = neural.mlp_backward(w, cache, g0)
    aug = np.concatenate([x, np.ones((4, 1))], axis=1)
    assert np.allclose(grads[0], g0.T @ aug, atol=1e-13)
    assert np.allclose(gin, g0 @ w[0][:, :-1], atol=1e-13)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    w = neural.init_mlp([6, 10, 10, 2], rng)
    x = rng.normal(size=(4, 6))
    g0 = rng.normal(size=(4, 2))
    _, cache = neural.mlp_forward(w, x)
    grads, _ = neural.mlp_backward(w, cache, g0)

    for li in range(len(w)):
        def loss_of_layer(mat, li=li):
            saved = w[li]
            w[li] = mat
            y, _ = neural.mlp_forward(w, x)
            w[li] = saved
            return float(np.sum(y * g0))

        g_fd = fd_gradient(loss_of_layer, w[li].copy(), h=1e-5)
        rel = np.abs(grads[li] - g_fd) / np.maximum(
            np.maximum(np.abs(grads[li]), np.abs(g_fd)), 1e-8)
        assert rel.max() <= 1e-6


def test_adam_zero_gradient_keeps_params():
    rng = np.random.default_rng(4)
    params = [rng.normal(size=(3, 4))]
    before = [p.copy() for p in params]
    state = neural.AdamState.for_params(params, lr=0.01)
    neural.adam_step(params, [np.zeros((3, 4))], state)
    assert np.array_equal(params[0], before[0])
    assert state.step == 1


def test_adam_first_step_is_signed_learning_rate():
    params = [np.zeros(3)]
    g = np.array([0.5, -2.0, 1e-4])
    state = neural.AdamState.for_params(params, lr=0.01)
    neural.adam_step(params, [g], state)
    expected = -0.01 * g / (np.abs(g) + state.eps)
    assert np.allclose(params[0], expected, rtol=1e-6)


def test_adam_scale_equivariant_first_step():
    g = np.array([0.3, -1.2, 0.7, -0.01])
    outs = []
    for scale in (1.0, 10.0):
        params = [np.zeros(4)]
        state = neural.AdamState.for_params(params, lr=0.05)
        neural.adam_step(params, [g * scale], state)
        outs.append(np.sign(params[0]))
    assert np.array_equal(outs[0], outs[1])


def test_adam_converges_on_quadratic():
    curv = np.array([0.5, 1.0, 4.0, 10.0])
    x_star = np.array([1.0, -0.5, 0.25, 2.0])
    params = [x_star + np.array([0.5, -0.4, 0.3, -0.5])]
    state = neural.AdamState.for_params(params, lr=0.05)
    for _ in range(200):
        grad = curv * (params[0] - x_star)
        neural.adam_step(params, [grad], state)
    assert np.max(np.abs(params[0] - x_star)) < 1e-3


def test_sample_action_at_mode():
    mean = np.zeros((1, 2))
    a, logp, _ = neural.sample_action(mean, np.zeros((1, 2)),
                                      np.zeros((1, 2)), np.array([1.0, 1.0]))
    assert np.allclose(a, 0.0)
    expected = -np.log(2 * np.pi) - 2 * np.log(1.0 + 1e-6)
    assert logp[0] == pytest.approx(expected, abs=1e-12)


def test_sample_action_saturates():
    mean = np.array([[50.0, -50.0]])
    tau = np.array([20.0, 200.0])
    a, logp, _ = neural.sample_action(mean, np.zeros((1, 2)),
                                      np.zeros((1, 2)), tau)
    assert a[0, 0] == pytest.approx(20.0)
    assert a[0, 1] == pytest.approx(-200.0)
    assert np.isfinite(logp[0])


def test_sampled_actions_strictly_inside_for_moderate_preactivations():
    rng = np.random.default_rng(6)
    mean = rng.uniform(-5, 5, size=(200, 2))
    log_sigma = rng.uniform(-3, 1, size=(200, 2))
    noise = np.clip(rng.standard_normal((200, 2)), -3, 3)
    tau = np.array([20.0, 20.0])
    a, logp, aux = neural.sample_action(mean, log_sigma, noise, tau)
    assert np.all(np.abs(aux["pre"]) < 15.0)
    assert np.all(np.abs(a) < tau)
    assert np.all(np.isfinite(logp))


def test_log_prob_finite_at_clamp_edges():
    for ls in (neural.LOG_SIGMA_MIN, neural.LOG_SIGMA_MAX):
        mean = np.array([[0.5, -0.5]])
        _, logp, _ = neural.sample_action(mean, np.full((1, 2), ls),
                                          np.ones((1, 2)),
                                          np.array([1.0, 1.0]))
        assert np.isfinite(logp[0])


def test_clamp_log_sigma_mask():
    raw = np.array([[-25.0, 0.0, 3.0]])
    clamped, mask = neural.clamp_log_sigma(raw)
    assert np.allclose(clamped, [[-20.0, 0.0, 2.0]])
    assert np.array_equal(mask, [[False, True, False]])


def test_monte_carlo_entropy_matches_quadrature():
    from scipy.integrate import quad
    rng = np.random.default_rng(9)
    mean = np.array([0.4, -0.8])
    log_sigma = np.array([-0.5, 0.2])
    tau = np.array([20.0, 200.0])
    n = 100_000
    noise = rng.standard_normal((n, 2))
    _, logp, _ = neural.sample_action(np.tile(mean, (n, 1)),
                                      np.tile(log_sigma, (n, 1)), noise, tau)
    mc_entropy = float(np.mean(-logp))

    # independent oracle: H(tanh-squashed) = H(gauss) + E[log |jacobian|]
    exact = 0.0
    for m, ls, t in zip(mean, log_sigma, tau):
        s = np.exp(ls)
        exact += 0.5 * np.log(2 * np.pi * np.e) + ls
        f = lambda x: (np.log(t * (1 - np.tanh(x) ** 2) + 1e-6)
                       * np.exp(-0.5 * ((x - m) / s) ** 2)
                       / (s * np.sqrt(2 * np.pi)))
        val, _ = quad(f, m - 10 * s, m + 10 * s, limit=200)
        exact += val
    assert abs(mc_entropy - exact) <= 0.01 * abs(exact)


def test_deterministic_action():
    out = neural.deterministic_action(np.array([0.0, 100.0]),
                                      np.array([5.0, 7.0]))
    assert out[0] == 0.0
    assert out[1] == pytest.approx(7.0)
