"""Seeded generators for MDPs, policies, data distributions and audit instances."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .features import (AbstractionSpec, FeatureMap, abstraction_features,
                       realizable_random_features, tabular_features)
from .mdp import Policy, StateActionDist, TabularMDP, transition_kernel_pi


@dataclass(frozen=True, eq=False)
class Instance:
    """One ``(MDP, pi, mu_d, features)`` tuple, optionally with an abstraction."""

    mdp: TabularMDP
    pi: Policy
    mu_d: StateActionDist
    fmap: FeatureMap
    spec: Optional[AbstractionSpec] = None
    label: str = ""


def _rng(seed):
    return np.random.default_rng(seed)


def random_mdp(num_states, num_actions, gamma, seed, reward_noise=0.0, r_max=1.0,
               concentration=1.0):
    """Dirichlet transitions, uniform mean rewards, Dirichlet initial distribution."""
    rng = _rng(seed)
    P = rng.dirichlet(np.full(num_states, concentration), size=(num_states, num_actions))
    R = rng.uniform(reward_noise, r_max - reward_noise, size=(num_states, num_actions))
    rho0 = rng.dirichlet(np.ones(num_states))
    return TabularMDP(P, R, gamma, rho0, r_max, reward_noise)


def random_policy(num_states, num_actions, seed):
    return Policy(_rng(seed).dirichlet(np.ones(num_actions), size=num_states))


def random_mu_d(num_pairs, seed, floor=0.0):
    """Dirichlet data distribution, optionally mixed with ``floor`` uniform mass."""
    p = _rng(seed).dirichlet(np.ones(num_pairs))
    p = (1.0 - floor) * p + floor / num_pairs
    return StateActionDist(p / p.sum())


def alternating_chain(gamma, rewards=(1.0, 0.0)):
    """Two states, one action, deterministic swap, start in state 0."""
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 0] = 1.0
    return TabularMDP(P, np.array(rewards, dtype=float).reshape(2, 1), gamma, [1.0, 0.0])


def random_abstraction(num_states, num_blocks, seed):
    """Random surjective ``psi``: every block gets at least one state."""
    rng = _rng(seed)
    psi = np.concatenate([np.arange(num_blocks),
                          rng.integers(0, num_blocks, num_states - num_blocks)])
    return AbstractionSpec(rng.permutation(psi), num_blocks)


def consistent_policy(spec, num_actions, seed):
    """Random policy whose action distribution depends only on the block."""
    block_pi = _rng(seed).dirichlet(np.ones(num_actions), size=spec.num_blocks)
    return Policy(block_pi[spec.state_to_block])


def block_homogeneous_mdp(spec, num_actions, gamma, seed, reward_noise=0.0, r_max=1.0):
    """MDP whose rewards and block-level transitions depend on ``psi(s)`` only.

    Each state splits its block-level next-block distribution over the member
    states of that block with its own random proportions, so rows of ``P``
    differ inside a block while ``P(psi(s') | s, a)`` does not.  Abstraction
    features are Bellman-complete for any abstraction-consistent policy.
    """
    rng = _rng(seed)
    psi = spec.state_to_block
    S, K, A = psi.size, spec.num_blocks, num_actions
    q_block = rng.dirichlet(np.ones(K), size=(K, A))
    r_block = rng.uniform(reward_noise, r_max - reward_noise, size=(K, A))
    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            for k2 in range(K):
                members = np.flatnonzero(psi == k2)
                split = rng.dirichlet(np.ones(members.size))
                P[s, a, members] = q_block[psi[s], a, k2] * split
    P /= P.sum(axis=2, keepdims=True)
    R = r_block[psi]
    return TabularMDP(P, R, gamma, rng.dirichlet(np.ones(S)), r_max, reward_noise)


def stationary_pair_dist(mdp, pi):
    """Stationary distribution of the state-action chain (leading eigenvector)."""
    K = transition_kernel_pi(mdp, pi)
    w, v = np.linalg.eig(K)
    i = int(np.argmin(np.abs(w - 1.0)))
    p = np.abs(np.real(v[:, i]))
    return p / p.sum()


def random_realizable(seed, max_states=6, max_actions=3, max_dim=8, gamma=None):
    """Random realizable instance with ``|S| <= 6``, ``|A| <= 3``, ``d <= 8``."""
    rng = _rng(seed)
    S = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(1, max_actions + 1))
    if S * A < 2:
        A = 2
    g = float(rng.uniform(0.0, 0.95)) if gamma is None else gamma
    mdp = random_mdp(S, A, g, rng.integers(2**32))
    pi = random_policy(S, A, rng.integers(2**32))
    d = int(rng.integers(2, min(max_dim, S * A) + 1))
    fmap = realizable_random_features(mdp, pi, d, rng.integers(2**32))
    mu_d = random_mu_d(S * A, rng.integers(2**32), floor=0.05)
    return Instance(mdp, pi, mu_d, fmap, label="realizable")


def random_tabular(seed, max_states=6, max_actions=3):
    rng = _rng(seed)
    S = int(rng.integers(1, max_states + 1))
    A = int(rng.integers(1, max_actions + 1))
    mdp = random_mdp(S, A, float(rng.uniform(0.0, 0.95)), rng.integers(2**32))
    pi = random_policy(S, A, rng.integers(2**32))
    mu_d = random_mu_d(S * A, rng.integers(2**32), floor=0.05)
    return Instance(mdp, pi, mu_d, tabular_features(mdp), label="tabular")


def random_abstraction_instance(seed, max_states=8, max_actions=3):
    """Random MDP with a random abstraction and an abstraction-consistent policy."""
    rng = _rng(seed)
    S = int(rng.integers(2, max_states + 1))
    K = int(rng.integers(1, S + 1))
    A = int(rng.integers(1, max_actions + 1))
    spec = random_abstraction(S, K, rng.integers(2**32))
    mdp = random_mdp(S, A, float(rng.uniform(0.0, 0.95)), rng.integers(2**32))
    pi = consistent_policy(spec, A, rng.integers(2**32))
    mu_d = random_mu_d(S * A, rng.integers(2**32), floor=0.05)
    return Instance(mdp, pi, mu_d, abstraction_features(mdp, spec), spec, "abstraction")


def bellman_complete_instance(seed, max_states=8, max_actions=3):
    """Abstraction features on a block-homogeneous MDP (complete by construction)."""
    rng = _rng(seed)
    S = int(rng.integers(2, max_states + 1))
    K = int(rng.integers(1, S + 1))
    A = int(rng.integers(1, max_actions + 1))
    spec = random_abstraction(S, K, rng.integers(2**32))
    mdp = block_homogeneous_mdp(spec, A, float(rng.uniform(0.0, 0.95)), rng.integers(2**32))
    pi = consistent_policy(spec, A, rng.integers(2**32))
    mu_d = random_mu_d(S * A, rng.integers(2**32), floor=0.05)
    return Instance(mdp, pi, mu_d, abstraction_features(mdp, spec), spec, "complete")


def mean_matching_instance(seed, num_states=4, num_actions=3, extra_dim=2, perturb=True):
    """Instance satisfying the mean-matching on-policy condition with a bias feature.

    ``rho0`` is the stationary state distribution, so ``phi0`` equals the
    stationary mean feature.  The data distribution is the stationary pair
    distribution, optionally perturbed along a direction invisible to both
    ``Phi^T`` and ``Phi^T K``; the perturbed ``mu_d`` is not stationary but
    keeps the mean features equal to ``phi0``.
    """
    rng = _rng(seed)
    S, A = num_states, num_actions
    mdp0 = random_mdp(S, A, float(rng.uniform(0.3, 0.95)), rng.integers(2**32))
    pi = random_policy(S, A, rng.integers(2**32))
    stat = stationary_pair_dist(mdp0, pi)
    state_stat = stat.reshape(S, A).sum(axis=1)
    mdp = TabularMDP(mdp0.transition, mdp0.mean_reward, mdp0.gamma,
                     state_stat / state_stat.sum(), mdp0.r_max)
    phi = np.column_stack([np.ones(S * A), rng.standard_normal((S * A, extra_dim))])
    mu = stat
    if perturb:
        K = transition_kernel_pi(mdp, pi)
        constraints = np.vstack([phi.T, phi.T @ K])
        _, sv, vt = np.linalg.svd(constraints)
        rank = int(np.sum(sv > 1e-10 * sv[0]))
        null = vt[rank:]
        if null.shape[0]:
            direction = null.T @ rng.standard_normal(null.shape[0])
            step = 0.5 * np.min(stat) / np.max(np.abs(direction))
            mu = stat + step * direction
    fmap = FeatureMap(phi)
    return Instance(mdp, pi, StateActionDist(mu / mu.sum()), fmap, label="mean-matching")


def noisy_bandit(num_states=4, num_actions=2, seed=0, reward_noise=0.3):
    """``gamma = 0`` instance: uniform contexts, uniform policy, noisy rewards.

    Returns an :class:`Instance` with tabular features and on-policy data
    (``mu_d = rho0 x pi``), so every pair has mass ``1 / (S A)``.
    """
    mdp = random_mdp(num_states, num_actions, 0.0, seed, reward_noise=reward_noise)
    mdp = TabularMDP(mdp.transition, mdp.mean_reward, 0.0, np.full(num_states, 1.0 / num_states),
                     mdp.r_max, reward_noise)
    pi = Policy.uniform(num_states, num_actions)
    mu = StateActionDist.uniform(num_states * num_actions)
    return Instance(mdp, pi, mu, tabular_features(mdp), label="noisy-bandit")


def mixing_chain(gamma=0.9, rewards=(0.3, 0.7), reward_noise=0.2):
    """Two states, one action, next state uniform regardless of the current one.

    With on-policy data this is a well-conditioned discounted instance:
    ``A = diag(mu)(I - gamma P)`` has ``sigma_min = (1 - gamma) / 2``.
    """
    P = np.full((2, 1, 2), 0.5)
    R = np.array(rewards, dtype=float).reshape(2, 1)
    mdp = TabularMDP(P, R, gamma, [0.5, 0.5], 1.0, reward_noise)
    pi = Policy.uniform(2, 1)
    mu = StateActionDist([0.5, 0.5])
    return Instance(mdp, pi, mu, tabular_features(mdp), label="mixing-chain")
