"""State-action feature maps and the realizability / completeness verifiers."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _linalg
from .mdp import StateActionDist, exact_q, forward_kernel, initial_pair_dist, occupancy

#: Relative tolerance for span-membership tests.
SPAN_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Feature matrix ``Phi`` with one row ``phi(s, a)`` per flattened pair.

    ``feature_bound`` defaults to the largest row norm.
    """

    matrix: np.ndarray
    feature_bound: Optional[float] = None

    def __post_init__(self):
        phi = np.array(self.matrix, dtype=float, copy=True)
        if phi.ndim != 2 or phi.shape[1] < 1:
            raise ValueError(f"feature matrix must be 2-D with d >= 1, got shape {phi.shape}")
        phi.setflags(write=False)
        object.__setattr__(self, "matrix", phi)
        norms = np.linalg.norm(phi, axis=1)
        bound = float(norms.max()) if self.feature_bound is None else float(self.feature_bound)
        if np.any(norms > bound + 1e-12):
            raise ValueError(f"row norm {norms.max():.6g} exceeds feature_bound {bound:.6g}")
        object.__setattr__(self, "feature_bound", bound)

    @property
    def dim(self):
        return self.matrix.shape[1]

    @property
    def num_pairs(self):
        return self.matrix.shape[0]

    def scaled(self, c):
        """Feature map ``c * Phi`` with bound ``c * B_phi``."""
        if c <= 0:
            raise ValueError("scale must be positive")
        return FeatureMap(c * self.matrix, c * self.feature_bound)

    def with_columns(self, extra):
        """Append columns; the bound is recomputed from the new rows."""
        return FeatureMap(np.column_stack([self.matrix, extra]))


@dataclass(frozen=True, eq=False)
class AbstractionSpec:
    """State abstraction ``psi: S -> [K]``."""

    state_to_block: np.ndarray
    num_blocks: int

    def __post_init__(self):
        psi = np.array(self.state_to_block, dtype=int, copy=True)
        if psi.ndim != 1:
            raise ValueError("state_to_block must be a vector")
        k = int(self.num_blocks)
        if np.any(psi < 0) or np.any(psi >= k):
            raise ValueError(f"block indices must lie in [0, {k})")
        if np.unique(psi).size != k:
            raise ValueError("every block must contain at least one state")
        psi.setflags(write=False)
        object.__setattr__(self, "state_to_block", psi)
        object.__setattr__(self, "num_blocks", k)

    @classmethod
    def identity(cls, num_states):
        return cls(np.arange(num_states), num_states)


@dataclass(frozen=True)
class RealizabilityCheck:
    realizable: bool
    residual: float
    theta_star: Optional[np.ndarray]


@dataclass(frozen=True)
class CompletenessCheck:
    complete: bool
    reward_residual: float
    dynamics_residual: float


def _check_rows(mdp, fmap):
    if fmap.num_pairs != mdp.num_pairs:
        raise ValueError(f"feature map has {fmap.num_pairs} rows, MDP has {mdp.num_pairs} pairs")


def tabular_features(mdp):
    return FeatureMap(np.eye(mdp.num_pairs), 1.0)


def abstraction_features(mdp, spec):
    """One-hot features ``e_{psi(s), a}`` of dimension ``K * |A|``."""
    if spec.state_to_block.size != mdp.num_states:
        raise ValueError("abstraction does not cover every state")
    S, A, K = mdp.num_states, mdp.num_actions, spec.num_blocks
    phi = np.zeros((S * A, K * A))
    rows = np.arange(S * A)
    cols = (spec.state_to_block[:, None] * A + np.arange(A)[None, :]).ravel()
    phi[rows, cols] = 1.0
    return FeatureMap(phi, 1.0)


def realizable_random_features(mdp, pi, d, seed, bound=1.0):
    """Random full-column-rank features whose span contains ``Q^pi``.

    ``Q^pi`` is placed as one column next to ``d - 1`` Gaussian columns, the
    columns are mixed by a random orthogonal matrix, and all rows are scaled
    by a common factor so the largest row norm equals ``bound``.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    if mdp.num_pairs < d:
        raise ValueError(f"cannot build rank-{d} features on {mdp.num_pairs} state-action pairs")
    q = exact_q(mdp, pi)
    rng = np.random.default_rng(seed)
    for _ in range(100):
        cols = np.column_stack([q, rng.standard_normal((mdp.num_pairs, d - 1))])
        mix, _ = np.linalg.qr(rng.standard_normal((d, d)))
        phi = cols @ mix
        if np.linalg.matrix_rank(phi) == d:
            norms = np.linalg.norm(phi, axis=1)
            return FeatureMap(phi * (bound / norms.max()), bound)
    raise RuntimeError("failed to draw full-rank features")


def check_realizability(mdp, pi, fmap, rtol=SPAN_RTOL):
    """Is ``Q^pi`` linear in the features?

    The residual is the max-norm of the least-squares misfit; the verdict
    uses ``rtol * max(1, V_max)``.  ``theta_star`` is the minimum-norm fit.
    """
    _check_rows(mdp, fmap)
    q = exact_q(mdp, pi)
    theta, resid = _linalg.lstsq_residual(fmap.matrix, q)
    ok = resid <= rtol * max(1.0, mdp.v_max)
    return RealizabilityCheck(bool(ok), resid, theta if ok else None)


def expected_next_features(mdp, pi, fmap):
    """Rows ``E_{s' ~ P(.|s,a)}[phi(s', pi)]`` for every pair."""
    _check_rows(mdp, fmap)
    return forward_kernel(mdp, pi) @ fmap.matrix


def check_bellman_completeness(mdp, pi, fmap, mu_d=None, rtol=SPAN_RTOL):
    """Closure of the linear class under ``T^pi``.

    Tests whether the mean reward and every coordinate of the expected next
    feature lie in the feature span.  The projections are weighted by
    ``mu_d`` (uniform when omitted), so the dynamics residual equals the
    worst next-feature prediction error of the regression that defines
    ``B^pi``.  Residuals are max-norms over all pairs.
    """
    _check_rows(mdp, fmap)
    w = np.ones(mdp.num_pairs) if mu_d is None else np.asarray(mu_d.probs)
    sw = np.sqrt(w)[:, None]
    phi = fmap.matrix
    targets = np.column_stack([mdp.mean_reward.ravel(), expected_next_features(mdp, pi, fmap)])
    coef, *_ = np.linalg.lstsq(sw * phi, sw * targets, rcond=None)
    resid = np.abs(targets - phi @ coef)
    reward_res = float(resid[:, 0].max())
    dyn_res = float(resid[:, 1:].max())
    tol = rtol * max(1.0, fmap.feature_bound, mdp.r_max)
    return CompletenessCheck(bool(reward_res <= tol and dyn_res <= tol), reward_res, dyn_res)


def phi0(fmap, mdp, pi):
    """Mean initial feature ``E_{s0 ~ rho0, a0 ~ pi}[phi(s0, a0)]``."""
    _check_rows(mdp, fmap)
    return fmap.matrix.T @ initial_pair_dist(mdp, pi)


def phi_pi(fmap, mdp, pi):
    """Mean feature under the discounted occupancy of ``pi``."""
    _check_rows(mdp, fmap)
    return fmap.matrix.T @ occupancy(mdp, pi).probs


def mean_feature(fmap, dist: StateActionDist):
    return fmap.matrix.T @ dist.probs
