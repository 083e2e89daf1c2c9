"""LSTDQ moments, solvers, and the return / function estimates built on them."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _linalg
from ._linalg import SingularMatrixError
from .features import expected_next_features, phi0 as _phi0
from .mdp import exact_q, initial_pair_dist

POPULATION = "population"
EMPIRICAL = "empirical"
SAMPLED = "sampled"
EXPECTED = "expected"
INVERSE = "inverse"
LOSS_MIN = "loss_min"


@dataclass(frozen=True, eq=False)
class MomentSet:
    """Sufficient statistics of LSTDQ.

    ``sigma = E[phi phi^T]``, ``sigma_cr = E[phi(s,a) phi(s',a')^T]``,
    ``b_vec = E[phi r]`` and the mean initial feature ``phi0``.  ``a_mat`` is
    always recomputed as ``sigma - gamma * sigma_cr``.
    """

    sigma: np.ndarray
    sigma_cr: np.ndarray
    b_vec: np.ndarray
    phi0: np.ndarray
    gamma: float
    provenance: str = POPULATION
    n: Optional[int] = None
    next_feature_mode: str = EXPECTED

    def __post_init__(self):
        for name in ("sigma", "sigma_cr", "b_vec", "phi0"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        d = self.phi0.size
        if self.sigma.shape != (d, d) or self.sigma_cr.shape != (d, d) or self.b_vec.shape != (d,):
            raise ValueError("moment shapes are inconsistent")
        if self.provenance not in (POPULATION, EMPIRICAL):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.next_feature_mode not in (SAMPLED, EXPECTED):
            raise ValueError(f"unknown next_feature_mode {self.next_feature_mode!r}")
        if self.provenance == EMPIRICAL and (self.n is None or self.n < 1):
            raise ValueError("empirical moments need a positive sample count")
        object.__setattr__(self, "gamma", float(self.gamma))
        if not np.allclose(self.sigma, self.sigma.T, rtol=0, atol=1e-10):
            raise ValueError("sigma is not symmetric")

    @property
    def dim(self):
        return self.phi0.size

    @property
    def a_mat(self):
        return self.sigma - self.gamma * self.sigma_cr


@dataclass(frozen=True, eq=False)
class LstdqSolution:
    """Output of an LSTDQ solver.

    ``theta`` is ``None`` when the inverse solver meets a singular ``A``.
    ``unique`` is ``False`` when the loss-minimization problem has several
    minimizers and the minimum-norm one was returned.
    """

    theta: Optional[np.ndarray]
    solver: str
    invertible: bool
    min_singular_a: float
    unique: bool = True


@dataclass(frozen=True)
class LossMinConfig:
    b_theta: float
    tolerance: float = 1e-12
    max_iter: int = 500

    def __post_init__(self):
        if self.b_theta <= 0:
            raise ValueError("b_theta must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


def population_moments(mdp, pi, mu_d, fmap):
    """Exact moments under ``mu_d`` using expected next features."""
    phi = fmap.matrix
    w = mu_d.probs
    wphi = phi * w[:, None]
    sigma = phi.T @ wphi
    sigma = 0.5 * (sigma + sigma.T)
    sigma_cr = wphi.T @ expected_next_features(mdp, pi, fmap)
    b = wphi.T @ mdp.mean_reward.ravel()
    return MomentSet(sigma, sigma_cr, b, _phi0(fmap, mdp, pi), mdp.gamma,
                     POPULATION, None, EXPECTED)


def empirical_moments(dataset, fmap, gamma, pi, mode=SAMPLED, initial_dist=None):
    """Sample averages of the LSTDQ moments.

    Parameters
    ----------
    dataset : Dataset
    fmap : FeatureMap
    gamma : float
    pi : Policy
        Target policy; used for ``phi0`` and for the ``"expected"`` mode.
    mode : {"sampled", "expected"}
        Second factor of the cross moment: ``phi(s', a')`` with the logged
        ``a'``, or ``sum_a' pi(a'|s') phi(s', a')``.
    initial_dist : array_like, shape (S,)
        Initial state distribution, needed for ``phi0``.
    """
    if mode not in (SAMPLED, EXPECTED):
        raise ValueError(f"unknown mode {mode!r}")
    if initial_dist is None:
        raise ValueError("initial_dist is required to form phi0")
    A = pi.num_actions
    phi = fmap.matrix
    cur = phi[dataset.s * A + dataset.a]
    if mode == SAMPLED:
        nxt = phi[dataset.s_next * A + dataset.a_next]
    else:
        phi_state = np.einsum("sa,sad->sd", pi.action_probs, phi.reshape(-1, A, phi.shape[1]))
        nxt = phi_state[dataset.s_next]
    n = dataset.n
    sigma = cur.T @ cur / n
    sigma = 0.5 * (sigma + sigma.T)
    sigma_cr = cur.T @ nxt / n
    b = cur.T @ dataset.r / n
    mu0 = (np.asarray(initial_dist, dtype=float)[:, None] * pi.action_probs).ravel()
    return MomentSet(sigma, sigma_cr, b, phi.T @ mu0, gamma, EMPIRICAL, n, mode)


def lstdq_solve(m):
    """Inverse-form LSTDQ ``theta = A^{-1} b``.

    A singular ``A`` (``sigma_min <= 1e-10 sigma_max``) is reported through
    ``invertible=False``.
    """
    A = m.a_mat
    smin = _linalg.sigma_min(A)
    if _linalg.is_singular(A):
        return LstdqSolution(None, INVERSE, False, smin)
    return LstdqSolution(np.linalg.solve(A, m.b_vec), INVERSE, True, smin)


def _whitener(m):
    if _linalg.is_singular(m.sigma):
        raise SingularMatrixError("sigma is singular; whitening is undefined")
    return _linalg.sym_inv_sqrt(m.sigma)


def _ridge_path(u, s, vt, c, lam):
    # theta(lam) = V diag(s / (s^2 + lam)) U^T c
    return vt.T @ (s / (s**2 + lam) * (u.T @ c))


def lossmin_solve(m, cfg):
    """Loss-minimization LSTDQ over the ball ``||theta|| <= b_theta``.

    Minimizes ``||Sigma^{-1/2}(A theta - b)||`` by bisection on the ridge
    multiplier ``lam`` of ``(M^T M + lam I) theta = M^T c`` with
    ``M = Sigma^{-1/2} A`` and ``c = Sigma^{-1/2} b``.
    """
    W = _whitener(m)
    M = W @ m.a_mat
    c = W @ m.b_vec
    u, s, vt = np.linalg.svd(M)
    smin = float(s[-1])
    invertible = not _linalg.is_singular(m.a_mat)
    radius = cfg.b_theta

    keep = s > _linalg.SINGULAR_RTOL * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    rank_deficient = not keep.all()
    uk, sk, vtk = u[:, keep], s[keep], vt[keep]
    theta0 = _ridge_path(uk, sk, vtk, c, 0.0) if keep.any() else np.zeros(m.dim)
    if np.linalg.norm(theta0) <= radius:
        if invertible:
            # Same linear system as the inverse solver.
            theta0 = np.linalg.solve(m.a_mat, m.b_vec)
        return LstdqSolution(theta0, LOSS_MIN, invertible, smin, unique=not rank_deficient)

    # ||theta(lam)|| decreases from ||theta0|| > radius to 0; bracket the root.
    lo, hi = 0.0, float(np.linalg.norm(M.T @ c)) / radius
    theta = _ridge_path(uk, sk, vtk, c, hi)
    for _ in range(cfg.max_iter):
        mid = 0.5 * (lo + hi)
        theta = _ridge_path(uk, sk, vtk, c, mid)
        norm = np.linalg.norm(theta)
        if abs(norm - radius) <= cfg.tolerance * radius:
            break
        if norm > radius:
            lo = mid
        else:
            hi = mid
    # A boundary minimizer is unique: two distinct ones would have an interior
    # midpoint that is also optimal, contradicting ||theta0|| > radius.
    return LstdqSolution(theta, LOSS_MIN, invertible, smin, unique=True)


def estimate_return(fmap, mdp, pi, theta):
    """Plug-in return ``phi0^T theta``."""
    return float(_phi0(fmap, mdp, pi) @ theta)


def function_error(fmap, mdp, pi, theta, nu):
    """Root-mean-square error of ``Phi theta`` against ``Q^pi`` under ``nu``."""
    err = exact_q(mdp, pi) - fmap.matrix @ theta
    return float(np.sqrt(nu.probs @ err**2))


def mwl_weight(m, fmap):
    """Linear MWL weight ``w(s,a) = (1 - gamma) phi0^T A^{-1} phi(s,a)``."""
    A = m.a_mat
    if _linalg.is_singular(A):
        raise SingularMatrixError("A is singular")
    v = np.linalg.solve(A.T, m.phi0)
    return (1.0 - m.gamma) * (fmap.matrix @ v)


def brm_objective(m, theta):
    """Projected Bellman residual ``||Sigma^{-1/2}(A theta - b)||^2``.

    For a linear class this is the value of the BRM minimax objective.
    """
    W = _whitener(m)
    r = W @ (m.a_mat @ np.asarray(theta, dtype=float) - m.b_vec)
    return float(r @ r)


def return_error(fmap, mdp, pi, theta, j_true=None):
    """``|phi0^T theta - J(pi)|``; ``J`` is recomputed when not given."""
    if j_true is None:
        j_true = float(initial_pair_dist(mdp, pi) @ exact_q(mdp, pi))
    return abs(estimate_return(fmap, mdp, pi, theta) - j_true)
