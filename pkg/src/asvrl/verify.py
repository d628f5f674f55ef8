"""Independent oracles: exact tabular soft policy iteration, central-difference
gradients, and brute-force closest-approach geometry.

These never share code with the paths they check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import Obstacle


@dataclass
class TabularMdp:
    transitions: np.ndarray   # P[s, a, s'], rows sum to 1
    rewards: np.ndarray       # R[s, a] <= 0
    gamma: float
    alpha: float

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        if not np.allclose(self.transitions.sum(axis=2), 1.0, atol=1e-12):
            raise ValueError("transition rows must sum to 1")
        if np.any(self.rewards > 0):
            raise ValueError("rewards must be non-positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int,
               gamma: float = 0.9, alpha: float = 0.5) -> TabularMdp:
    raw = rng.uniform(0.05, 1.0, size=(n_states, n_actions, n_states))
    P = raw / raw.sum(axis=2, keepdims=True)
    R = -rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    return TabularMdp(P, R, gamma, alpha)


def entropy_augmented_reward(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """Reward with the discounted next-state policy entropy folded in."""
    ent = -np.einsum("xa,xa->x", policy, np.log(policy))
    return mdp.rewards + mdp.gamma * mdp.alpha * (mdp.transitions @ ent)


def tabular_soft_backup(mdp: TabularMdp, q: np.ndarray,
                        policy: np.ndarray) -> np.ndarray:
    """One exact application of the soft Bellman operator under a fixed policy."""
    next_v = np.einsum("xa,xa->x", policy, q - mdp.alpha * np.log(policy))
    return mdp.rewards + mdp.gamma * (mdp.transitions @ next_v)


def tabular_policy_improvement(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    """KL projection onto the softmax family: pi proportional to exp(Q/alpha)."""
    if mdp.alpha <= 0:
        raise ValueError("alpha must be positive")
    z = q / mdp.alpha
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def soft_policy_evaluation(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """Fixed point of the soft Bellman operator via a dense linear solve."""
    S, A = mdp.n_states, mdp.n_actions
    r_hat = entropy_augmented_reward(mdp, policy)
    # T^pi is affine: Q = r_hat + gamma * P * Pi * Q
    m = np.einsum("xay,yb->xayb", mdp.transitions, policy).reshape(S * A, S * A)
    q = np.linalg.solve(np.eye(S * A) - mdp.gamma * m, r_hat.reshape(-1))
    return q.reshape(S, A)


def soft_policy_iteration(mdp: TabularMdp, max_rounds: int = 500,
                          policy_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray, int]:
    """Alternate exact evaluation and softmax improvement until the policy
    stops changing; returns (policy, Q, rounds)."""
    policy = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    q = soft_policy_evaluation(mdp, policy)
    for k in range(max_rounds):
        new_policy = tabular_policy_improvement(mdp, q)
        if np.max(np.abs(new_policy - policy)) < policy_tol:
            return new_policy, q, k
        policy = new_policy
        q = soft_policy_evaluation(mdp, policy)
    return policy, q, max_rounds


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences per coordinate."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def brute_force_closest(p_a: np.ndarray, v_a: np.ndarray, obstacle: Obstacle,
                        horizon: float | None = None,
                        grid: int = 4000) -> float:
    """Minimum future distance by grid search plus exact quadratic refinement
    of the squared distance (which is quadratic in time)."""
    if grid <= 2:
        raise ValueError("grid must exceed 2")
    rel_p = obstacle.p - np.asarray(p_a, dtype=float)
    rel_v = np.asarray(v_a, dtype=float) - obstacle.v
    speed = float(np.hypot(*rel_v))
    if speed == 0.0:
        return float(np.hypot(*rel_p))
    if horizon is None:
        horizon = 2.0 * float(np.hypot(*rel_p)) / speed + 1.0
    ts = np.linspace(0.0, horizon, grid)
    d2 = ((rel_p[0] - rel_v[0] * ts) ** 2
          + (rel_p[1] - rel_v[1] * ts) ** 2)
    k = int(np.argmin(d2))
    if 0 < k < grid - 1:
        t0, t1, t2 = ts[k - 1:k + 2]
        y0, y1, y2 = d2[k - 1:k + 2]
        denom = (y0 - 2.0 * y1 + y2)
        if denom > 0:
            step = ts[1] - ts[0]
            t_star = t1 + 0.5 * step * (y0 - y2) / denom
            t_star = min(max(t_star, 0.0), horizon)
            d2_star = ((rel_p[0] - rel_v[0] * t_star) ** 2
                       + (rel_p[1] - rel_v[1] * t_star) ** 2)
            return float(np.sqrt(min(d2_star, d2[k])))
    return float(np.sqrt(d2[k]))
