import numpy as np
import pytest

from asvrl.environment import Obstacle
from asvrl.verify import (TabularMdp, brute_force_closest,
                          entropy_augmented_reward, fd_gradient, random_mdp,
                          soft_policy_evaluation, soft_policy_iteration,
                          tabular_policy_improvement, tabular_soft_backup)


def _single_state_mdp(gamma=0.9, alpha=0.0, r=-1.0):
    return TabularMdp(transitions=np.ones((1, 1, 1)),
                      rewards=np.array([[r]]), gamma=gamma, alpha=alpha)


def _uniform(mdp):
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)


def test_geometric_series_fixed_point():
    mdp = _single_state_mdp()
    policy = _uniform(mdp)
    q = np.zeros((1, 1))
    for _ in range(2000):
        q = tabular_soft_backup(mdp, q, policy)
    assert q[0, 0] == pytest.approx(-10.0, abs=1e-8)
    assert soft_policy_evaluation(mdp, policy)[0, 0] == pytest.approx(-10.0)


def test_zero_discount_backs_up_reward_only():
    rng = np.random.default_rng(0)
    mdp = random_mdp(rng, 4, 3, gamma=0.0, alpha=0.7)
    policy = _uniform(mdp)
    q = tabular_soft_backup(mdp, rng.standard_normal((4, 3)), policy)
    assert np.allclose(q, mdp.rewards)
    assert np.allclose(entropy_augmented_reward(mdp, policy), mdp.rewards)


def test_backup_is_gamma_contraction():
    rng = np.random.default_rng(1)
    for _ in range(30):
        mdp = random_mdp(rng, int(rng.integers(2, 11)),
                         int(rng.integers(2, 5)), gamma=0.9)
        policy = tabular_policy_improvement(
            mdp, rng.standard_normal((mdp.n_states, mdp.n_actions)))
        q1 = rng.standard_normal((mdp.n_states, mdp.n_actions))
        q2 = rng.standard_normal((mdp.n_states, mdp.n_actions))
        num = np.max(np.abs(tabular_soft_backup(mdp, q1, policy)
                            - tabular_soft_backup(mdp, q2, policy)))
        den = np.max(np.abs(q1 - q2))
        assert num <= 0.9 * den + 1e-12


def test_iterated_backup_converges_with_shrinking_steps():
    rng = np.random.default_rng(2)
    mdp = random_mdp(rng, 6, 3, gamma=0.9, alpha=0.5)
    policy = _uniform(mdp)
    q = rng.standard_normal((6, 3))
    diffs = []
    for _ in range(60):
        q_next = tabular_soft_backup(mdp, q, policy)
        diffs.append(np.max(np.abs(q_next - q)))
        q = q_next
    ratios = [b / a for a, b in zip(diffs, diffs[1:]) if a > 1e-14]
    assert all(r <= 0.9 + 1e-9 for r in ratios)
    fixed = soft_policy_evaluation(mdp, policy)
    assert np.max(np.abs(q - fixed)) < 1e-2


def test_converged_q_respects_reward_bound():
    rng = np.random.default_rng(3)
    for _ in range(20):
        mdp = random_mdp(rng, 5, 3, gamma=0.9, alpha=0.4)
        policy = _uniform(mdp)
        q = soft_policy_evaluation(mdp, policy)
        r_hat = entropy_augmented_reward(mdp, policy)
        bound = np.max(np.abs(r_hat)) / (1.0 - mdp.gamma)
        assert np.max(np.abs(q)) <= bound + 1e-9


def test_policy_improvement_uniform_and_greedy_limits():
    mdp = random_mdp(np.random.default_rng(4), 3, 4, alpha=0.5)
    pi = tabular_policy_improvement(mdp, np.zeros((3, 4)))
    assert np.allclose(pi, 0.25)

    q = np.array([[1.0, 0.0, 0.0, 0.0]] * 3)
    mdp_cold = TabularMdp(mdp.transitions, mdp.rewards, mdp.gamma, 1e-3)
    pi = tabular_policy_improvement(mdp_cold, q)
    assert np.all(pi[:, 0] > 1.0 - 1e-9)


def test_policy_improvement_monotone_q():
    rng = np.random.default_rng(5)
    for _ in range(30):
        mdp = random_mdp(rng, int(rng.integers(2, 8)),
                         int(rng.integers(2, 4)), gamma=0.9,
                         alpha=float(rng.uniform(0.2, 1.0)))
        pi_old = _uniform(mdp)
        q_old = soft_policy_evaluation(mdp, pi_old)
        pi_new = tabular_policy_improvement(mdp, q_old)
        q_new = soft_policy_evaluation(mdp, pi_new)
        assert np.min(q_new - q_old) >= -1e-9


def test_policy_iteration_terminates_at_fixed_policy():
    rng = np.random.default_rng(6)
    mdp = random_mdp(rng, 5, 3, gamma=0.9, alpha=0.5)
    policy, q, rounds = soft_policy_iteration(mdp)
    assert rounds < 500
    again = tabular_policy_improvement(mdp, soft_policy_evaluation(mdp, policy))
    assert np.max(np.abs(again - policy)) < 1e-9


def test_mdp_validation():
    with pytest.raises(ValueError):
        TabularMdp(np.ones((2, 2, 2)), np.zeros((2, 2)), 0.9, 0.5)
    with pytest.raises(ValueError):
        TabularMdp(np.ones((1, 1, 1)), np.array([[1.0]]), 0.9, 0.5)
    with pytest.raises(ValueError):
        TabularMdp(np.ones((1, 1, 1)), np.array([[-1.0]]), 1.0, 0.5)


def test_fd_gradient_linear_and_quadratic_exact():
    w = np.array([2.0, -3.0, 0.5])
    lin = lambda x: float(w @ x)
    x0 = np.array([0.3, 0.7, -0.2])
    assert np.allclose(fd_gradient(lin, x0, h=0.1), w, atol=1e-10)

    quad = lambda x: float(0.5 * x @ x)
    assert np.allclose(fd_gradient(quad, x0, h=1e-3), x0, atol=1e-10)


def test_brute_force_receding_takes_current_distance():
    ob = Obstacle(p=np.array([3.0, 4.0]), v=np.zeros(2), d_o=1.0, d_s=2.5)
    d = brute_force_closest(np.zeros(2), np.array([-1.0, 0.0]), ob)
    assert d == pytest.approx(5.0, abs=1e-9)


def test_brute_force_perpendicular_case():
    ob = Obstacle(p=np.array([4.0, 3.0]), v=np.zeros(2), d_o=1.0, d_s=2.5)
    d = brute_force_closest(np.zeros(2), np.array([1.0, 0.0]), ob)
    assert d == pytest.approx(3.0, abs=1e-9)


def test_brute_force_zero_relative_velocity():
    ob = Obstacle(p=np.array([3.0, 4.0]), v=np.array([1.0, 0.0]),
                  d_o=1.0, d_s=2.5)
    d = brute_force_closest(np.zeros(2), np.array([1.0, 0.0]), ob)
    assert d == pytest.approx(5.0)
