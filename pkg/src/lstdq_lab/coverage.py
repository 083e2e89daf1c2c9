"""Coverage parameters and spectral diagnostics of LSTDQ instances."""

import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from . import _linalg
from ._linalg import SingularMatrixError
from .estimators import EMPIRICAL, population_moments
from .features import mean_feature, phi_pi as _phi_pi
from .mdp import Policy, TabularMDP, occupancy

INF = math.inf


@dataclass(frozen=True, eq=False)
class FeatureDynamics:
    """Compressed feature dynamics ``x_{t+1} = B^pi x_t`` with ``x_0 = phi0``.

    ``nu_phi`` is the discounted feature occupancy, present only when
    ``gamma * rho(B^pi) < 1``.
    """

    b_pi: np.ndarray
    spectral_radius: float
    occupancy_defined: bool
    nu_phi: Optional[np.ndarray]


class SigmaMinComparison(NamedTuple):
    lhs: float
    rhs: float


def _require_sigma(m):
    if _linalg.is_singular(m.sigma):
        raise SingularMatrixError("sigma is singular")


def feature_dynamics(m):
    """``B^pi = (Sigma^{-1} Sigma_cr)^T`` and its discounted occupancy."""
    _require_sigma(m)
    b_pi = np.linalg.solve(m.sigma, m.sigma_cr).T
    rho = _linalg.spectral_radius(b_pi)
    defined = m.gamma * rho < 1.0
    nu = None
    if defined:
        nu = (1.0 - m.gamma) * np.linalg.solve(np.eye(m.dim) - m.gamma * b_pi, m.phi0)
    return FeatureDynamics(b_pi, rho, bool(defined), nu)


def _coverage_form(m, phi0):
    """``(1-gamma)^2 phi0^T A^{-1} Sigma A^{-T} phi0`` or ``inf`` for singular A."""
    A = m.a_mat
    if _linalg.is_singular(A):
        return INF
    lu = scipy.linalg.lu_factor(A)
    u = scipy.linalg.lu_solve(lu, phi0, trans=1)
    return float((1.0 - m.gamma) ** 2 * (u @ m.sigma @ u))


def cvrg_population(m):
    """Feature-dynamics coverage ``C_phi``; ``inf`` when ``A`` is singular."""
    return _coverage_form(m, m.phi0)


def cvrg_empirical(m):
    """Empirical feature-dynamics coverage from sample moments."""
    if m.provenance != EMPIRICAL:
        raise ValueError("cvrg_empirical needs empirical moments")
    return _coverage_form(m, m.phi0)


def cvrg_lin(m, phi_pi):
    """Linear coverage ``phi_pi^T Sigma^{-1} phi_pi``."""
    _require_sigma(m)
    phi_pi = np.asarray(phi_pi, dtype=float)
    return float(phi_pi @ scipy.linalg.solve(m.sigma, phi_pi, assume_a="sym"))


def cvrg_fn(m, fmap, nu):
    """Function-estimation coverage averaged over start pairs drawn from ``nu``."""
    A = m.a_mat
    if _linalg.is_singular(A):
        return INF
    support = np.flatnonzero(nu.probs)
    U = scipy.linalg.lu_solve(scipy.linalg.lu_factor(A), fmap.matrix[support].T, trans=1)
    per_point = np.einsum("dk,de,ek->k", U, m.sigma, U)
    return float((1.0 - m.gamma) ** 2 * (nu.probs[support] @ per_point))


def chi2_tabular(mdp, pi, mu_d):
    """``E_{mu_d}[(mu^pi / mu_d)^2]`` from the exact occupancy."""
    mu_pi = occupancy(mdp, pi).probs
    return _chi2(mu_pi, mu_d.probs)


def _chi2(target, data):
    covered = data > 0
    if np.any(target[~covered] > 0):
        return INF
    return float(np.sum(target[covered] ** 2 / data[covered]))


def is_abstraction_consistent(pi, spec, atol=1e-12):
    """Does ``pi(.|s)`` depend on ``s`` only through ``psi(s)``?"""
    probs = pi.action_probs
    for k in range(spec.num_blocks):
        rows = probs[spec.state_to_block == k]
        if np.any(np.abs(rows - rows[0]) > atol):
            return False
    return True


def abstract_model(mdp, pi, mu_d, spec):
    """Abstract MDP ``M_psi``, its policy and the aggregated data distribution.

    Transitions of each abstract pair ``(k, a)`` are the ``mu_d``-weighted
    mixture of ``P(psi(s') | s, a)`` over the states in block ``k``.  Pairs
    with zero data mass use the unweighted mixture; they only matter when the
    abstract occupancy reaches them, and then the coverage is infinite.

    Returns
    -------
    abstract_mdp : TabularMDP
    abstract_pi : Policy
    phi_d : ndarray, shape (K * A,)
    """
    if not is_abstraction_consistent(pi, spec):
        raise ValueError("policy is not consistent with the abstraction")
    S, A, K = mdp.num_states, mdp.num_actions, spec.num_blocks
    psi = spec.state_to_block
    member = np.zeros((S, K))
    member[np.arange(S), psi] = 1.0
    mu = mu_d.as_matrix(A)
    p_block = np.einsum("sat,tk->sak", mdp.transition, member)
    phi_d = member.T @ mu
    weighted = np.einsum("sk,sa,saj->kaj", member, mu, p_block)
    sizes = member.sum(axis=0)
    plain = np.einsum("sk,saj->kaj", member, p_block) / sizes[:, None, None]
    safe = np.where(phi_d > 0, phi_d, 1.0)
    p_abs = np.where((phi_d > 0)[:, :, None], weighted / safe[:, :, None], plain)
    p_abs /= p_abs.sum(axis=2, keepdims=True)
    first = np.array([np.flatnonzero(psi == k)[0] for k in range(K)])
    abstract = TabularMDP(
        transition=p_abs,
        mean_reward=np.zeros((K, A)),
        gamma=mdp.gamma,
        initial_dist=member.T @ mdp.initial_dist,
    )
    return abstract, Policy(pi.action_probs[first]), phi_d.ravel()


def aggregated_concentrability(mdp, pi, mu_d, spec):
    """Chi-squared aggregated concentrability of the abstract model."""
    abstract, abstract_pi, phi_d = abstract_model(mdp, pi, mu_d, spec)
    return _chi2(occupancy(abstract, abstract_pi).probs, phi_d)


def perdomo_comparison(m):
    """Whitened-norm form of the coverage and its ``sigma_min`` upper bound.

    ``lhs = ||W^{-T} Sigma^{-1/2} phi0||`` and
    ``rhs = ||phi0||_{Sigma^{-1}} / sigma_min(W)`` with
    ``W = I - gamma Sigma^{-1/2} Sigma_cr Sigma^{-1/2}``.  Both omit the
    common ``(1 - gamma)`` prefactor, so ``(1 - gamma) * lhs == sqrt(C_phi)``.
    Both are ``inf`` when ``W`` is singular.
    """
    _require_sigma(m)
    root = _linalg.sym_inv_sqrt(m.sigma)
    W = np.eye(m.dim) - m.gamma * root @ m.sigma_cr @ root
    if _linalg.is_singular(W):
        return SigmaMinComparison(INF, INF)
    white = root @ m.phi0
    lhs = np.linalg.norm(np.linalg.solve(W.T, white))
    rhs = np.linalg.norm(white) / _linalg.sigma_min(W)
    return SigmaMinComparison(float(lhs), float(rhs))


def bias_coefficients(fmap, atol=1e-8):
    """``theta0`` with ``Phi theta0 = 1``, or ``None`` if there is no bias direction."""
    theta0, resid = _linalg.lstsq_residual(fmap.matrix, np.ones(fmap.num_pairs))
    return theta0 if resid <= atol else None


def onpolicy_check(m, fmap, mu_d, atol=1e-8):
    """Certify ``C_phi <= 1`` via the mean-matching on-policy condition.

    Certified when the features contain a bias direction, ``gamma *
    rho(B^pi) < 1``, and the data mean of ``phi(s, a)`` and of the next
    feature both equal ``phi0``.  The next-feature mean is read off the
    moments as ``Sigma_cr^T theta0``.
    """
    theta0 = bias_coefficients(fmap, atol)
    if theta0 is None or _linalg.is_singular(m.sigma):
        return False
    if not feature_dynamics(m).occupancy_defined:
        return False
    tol = atol * max(1.0, fmap.feature_bound)
    mean_cur = mean_feature(fmap, mu_d)
    mean_next = m.sigma_cr.T @ theta0
    if np.max(np.abs(mean_cur - m.phi0)) > tol or np.max(np.abs(mean_next - m.phi0)) > tol:
        return False
    c = cvrg_population(m)
    if not c <= 1.0 + 1e-8:
        raise RuntimeError(f"certified instance has C_phi = {c!r} > 1")
    return True


def burn_in_estimate(m, fmap, delta):
    """Order-of-magnitude burn-in ``((B^2 + smax(A)) / smin(A))^2 log(d / delta)``.

    The hidden constant is taken as 1.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    A = m.a_mat
    if _linalg.is_singular(A):
        return INF
    s = _linalg.singular_values(A)
    ratio = (fmap.feature_bound**2 + s[0]) / s[-1]
    return float(ratio**2 * math.log(m.dim / delta))


@dataclass(frozen=True)
class CoverageReport:
    """All coverage scalars for one ``(MDP, features, mu_d, pi)`` instance.

    ``None`` marks quantities that were not requested or do not apply;
    ``inf`` marks the vacuous value produced by a singular matrix.
    """

    c_phi: float
    c_phi_emp: Optional[float]
    c_lin: float
    chi2_tabular: Optional[float]
    agg_concentrability_chi2: Optional[float]
    perdomo_lhs: float
    perdomo_rhs: float
    sigma_min_a: float
    lambda_min_sigma: float
    kappa_sigma: float
    rho_bpi: float
    burn_in_n0: float
    onpolicy_certified: bool

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def as_dict(self):
        return asdict(self)


def coverage_report(mdp, pi, mu_d, fmap, empirical=None, spec=None, delta=0.05):
    """Assemble a :class:`CoverageReport`.

    Parameters
    ----------
    empirical : MomentSet, optional
        Sample moments; fills ``c_phi_emp`` when given.
    spec : AbstractionSpec, optional
        Fills ``agg_concentrability_chi2`` when ``pi`` is consistent with it.
    """
    m = population_moments(mdp, pi, mu_d, fmap)
    lam = _linalg.sym_eig(m.sigma)[0]
    lam_min, lam_max = float(lam[0]), float(lam[-1])
    sigma_ok = not _linalg.is_singular(m.sigma)
    agg = None
    if spec is not None and is_abstraction_consistent(pi, spec):
        agg = aggregated_concentrability(mdp, pi, mu_d, spec)
    if sigma_ok:
        c_lin = cvrg_lin(m, _phi_pi(fmap, mdp, pi))
        rho = feature_dynamics(m).spectral_radius
        perdomo = perdomo_comparison(m)
        certified = onpolicy_check(m, fmap, mu_d)
    else:
        c_lin, rho, perdomo, certified = INF, INF, SigmaMinComparison(INF, INF), False
    return CoverageReport(
        c_phi=cvrg_population(m),
        c_phi_emp=None if empirical is None else cvrg_empirical(empirical),
        c_lin=c_lin,
        chi2_tabular=chi2_tabular(mdp, pi, mu_d),
        agg_concentrability_chi2=agg,
        perdomo_lhs=perdomo.lhs,
        perdomo_rhs=perdomo.rhs,
        sigma_min_a=_linalg.sigma_min(m.a_mat),
        lambda_min_sigma=lam_min,
        kappa_sigma=lam_max / lam_min if lam_min > 0 else INF,
        rho_bpi=rho,
        burn_in_n0=burn_in_estimate(m, fmap, delta),
        onpolicy_certified=certified,
    )
