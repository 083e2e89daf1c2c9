import numpy as np
import pytest

from lstdq_lab.instances import random_mdp, random_policy, random_mu_d


@pytest.fixture
def small_mdp():
    return random_mdp(4, 2, 0.8, seed=3, reward_noise=0.1)


@pytest.fixture
def small_policy():
    return random_policy(4, 2, seed=4)


@pytest.fixture
def small_mu_d():
    return random_mu_d(8, seed=5, floor=0.05)


def value_iteration_q(mdp, pi, tol=1e-14, max_iter=100_000):
    """Independent Q^pi oracle by fixed-point iteration on the Bellman operator."""
    P, R, g = mdp.transition, mdp.mean_reward, mdp.gamma
    q = np.zeros_like(R)
    for _ in range(max_iter):
        v = np.sum(pi.action_probs * q, axis=1)
        q_new = R + g * P @ v
        if np.max(np.abs(q_new - q)) < tol:
            return q_new.ravel()
        q = q_new
    raise RuntimeError("value iteration did not converge")


def rollout_occupancy(mdp, pi, horizon=5000):
    """Discounted occupancy by forward propagation of the state-action marginal."""
    S, A, g = mdp.num_states, mdp.num_actions, mdp.gamma
    d = (mdp.initial_dist[:, None] * pi.action_probs)
    total = np.zeros((S, A))
    w = 1.0
    for _ in range(horizon):
        total += w * d
        state = np.einsum("sa,sat->t", d, mdp.transition)
        d = state[:, None] * pi.action_probs
        w *= g
        if w < 1e-18:
            break
    return (1 - g) * total.ravel()
