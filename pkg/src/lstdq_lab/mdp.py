"""Finite discounted MDPs, policies, and exact dynamic-programming oracles.

State-action pairs are flattened row-major with the state outer and the
action inner, ``index = s * num_actions + a``.  Every module relies on this
ordering.
"""

from dataclasses import dataclass, field

import numpy as np

PROB_ATOL = 1e-12


def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_simplex(arr, axis, name):
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries")
    sums = arr.sum(axis=axis)
    if np.any(np.abs(sums - 1.0) > PROB_ATOL):
        raise ValueError(f"{name} does not sum to 1 (max deviation {np.max(np.abs(sums - 1.0)):.3g})")


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite MDP ``(S, A, P, R, gamma, rho0)`` with bounded rewards.

    Parameters
    ----------
    transition : array_like, shape (S, A, S)
        ``transition[s, a, s']`` is ``P(s' | s, a)``.
    mean_reward : array_like, shape (S, A)
        Mean reward ``R(s, a)``.
    gamma : float
        Discount factor in ``[0, 1)``.
    initial_dist : array_like, shape (S,)
        Initial state distribution ``rho0``.
    r_max : float
        Reward upper bound.
    reward_noise_halfwidth : float
        Sampled rewards are ``mean_reward + U[-h, h]``.  The noisy support
        must stay inside ``[0, r_max]``.
    """

    transition: np.ndarray
    mean_reward: np.ndarray
    gamma: float
    initial_dist: np.ndarray
    r_max: float = 1.0
    reward_noise_halfwidth: float = 0.0

    def __post_init__(self):
        P = _frozen(self.transition)
        R = _frozen(self.mean_reward)
        rho0 = _frozen(self.initial_dist)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "mean_reward", R)
        object.__setattr__(self, "initial_dist", rho0)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "r_max", float(self.r_max))
        object.__setattr__(self, "reward_noise_halfwidth", float(self.reward_noise_halfwidth))

        if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A = P.shape[:2]
        if R.shape != (S, A):
            raise ValueError(f"mean_reward must have shape {(S, A)}, got {R.shape}")
        if rho0.shape != (S,):
            raise ValueError(f"initial_dist must have shape {(S,)}, got {rho0.shape}")
        _check_simplex(P, 2, "transition")
        _check_simplex(rho0, 0, "initial_dist")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")
        h = self.reward_noise_halfwidth
        if h < 0:
            raise ValueError("reward_noise_halfwidth must be nonnegative")
        if np.any(R - h < 0) or np.any(R + h > self.r_max):
            raise ValueError("mean_reward +/- reward_noise_halfwidth must lie in [0, r_max]")

    @property
    def num_states(self):
        return self.transition.shape[0]

    @property
    def num_actions(self):
        return self.transition.shape[1]

    @property
    def num_pairs(self):
        return self.num_states * self.num_actions

    @property
    def v_max(self):
        return self.r_max / (1.0 - self.gamma)

    def pair_index(self, s, a):
        return s * self.num_actions + a


@dataclass(frozen=True, eq=False)
class Policy:
    """Stochastic policy ``action_probs[s, a] = pi(a | s)``."""

    action_probs: np.ndarray

    def __post_init__(self):
        pi = _frozen(self.action_probs)
        if pi.ndim != 2:
            raise ValueError(f"action_probs must be 2-D, got shape {pi.shape}")
        _check_simplex(pi, 1, "action_probs")
        object.__setattr__(self, "action_probs", pi)

    @property
    def num_states(self):
        return self.action_probs.shape[0]

    @property
    def num_actions(self):
        return self.action_probs.shape[1]

    @classmethod
    def uniform(cls, num_states, num_actions):
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions, num_actions):
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, num_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)


@dataclass(frozen=True, eq=False)
class StateActionDist:
    """Distribution over flattened state-action pairs."""

    probs: np.ndarray = field()

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probs must be a nonempty vector")
        _check_simplex(p, 0, "probs")
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.size

    def as_matrix(self, num_actions):
        return self.probs.reshape(-1, num_actions)

    @classmethod
    def uniform(cls, num_pairs):
        return cls(np.full(num_pairs, 1.0 / num_pairs))

    @classmethod
    def point_mass(cls, num_pairs, index):
        p = np.zeros(num_pairs)
        p[index] = 1.0
        return cls(p)


def _check_compatible(mdp, pi):
    if pi.action_probs.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError(
            f"policy shape {pi.action_probs.shape} does not match MDP "
            f"({mdp.num_states}, {mdp.num_actions})"
        )


def forward_kernel(mdp, pi):
    """Row-stochastic kernel ``F[(s,a), (s',a')] = P(s'|s,a) pi(a'|s')``."""
    _check_compatible(mdp, pi)
    F = mdp.transition[:, :, :, None] * pi.action_probs[None, None, :, :]
    return F.reshape(mdp.num_pairs, mdp.num_pairs)


def transition_kernel_pi(mdp, pi):
    """Markov kernel over state-action pairs induced by ``pi``.

    Follows the stochastic-process convention: the current pair indexes the
    column and the next pair the row, so the result is column-stochastic and
    ``mu_{t+1} = K @ mu_t``.
    """
    return forward_kernel(mdp, pi).T


def initial_pair_dist(mdp, pi):
    """``mu0(s, a) = rho0(s) pi(a | s)`` as a flat vector."""
    _check_compatible(mdp, pi)
    return (mdp.initial_dist[:, None] * pi.action_probs).ravel()


def exact_q(mdp, pi):
    """Solve ``Q = R + gamma * F Q`` for the action-value function of ``pi``."""
    F = forward_kernel(mdp, pi)
    n = mdp.num_pairs
    return np.linalg.solve(np.eye(n) - mdp.gamma * F, mdp.mean_reward.ravel())


def bellman_residual(mdp, pi, q):
    """Max-norm of ``q - T^pi q``."""
    F = forward_kernel(mdp, pi)
    return float(np.max(np.abs(q - mdp.mean_reward.ravel() - mdp.gamma * F @ q)))


def occupancy(mdp, pi):
    """Normalized discounted occupancy ``mu^pi`` over state-action pairs.

    Solves the flow equation ``(I - gamma K) mu = (1 - gamma) mu0``.
    """
    K = transition_kernel_pi(mdp, pi)
    mu0 = initial_pair_dist(mdp, pi)
    mu = np.linalg.solve(np.eye(mdp.num_pairs) - mdp.gamma * K, (1.0 - mdp.gamma) * mu0)
    # Roundoff can leave tiny negatives / a sum off by ~1e-16.
    mu = np.clip(mu, 0.0, None)
    return StateActionDist(mu / mu.sum())


def exact_return(mdp, pi):
    """Expected discounted return ``J(pi)``.

    Computed as ``<mu0, Q>`` and cross-checked against
    ``<mu^pi, R> / (1 - gamma)``.
    """
    q = exact_q(mdp, pi)
    j_value = float(initial_pair_dist(mdp, pi) @ q)
    j_flow = float(occupancy(mdp, pi).probs @ mdp.mean_reward.ravel()) / (1.0 - mdp.gamma)
    if abs(j_value - j_flow) > 1e-9 * max(1.0, mdp.v_max):
        raise RuntimeError(f"return routes disagree: {j_value!r} vs {j_flow!r}")
    return j_value
