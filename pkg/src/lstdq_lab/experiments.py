"""Monte-Carlo sweeps, rate fits, and proposition audits.

Every random quantity is drawn from a named substream of one root seed, so
results are reproducible cell by cell regardless of execution order.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import _linalg
from . import coverage as cov
from . import estimators as est
from . import instances as inst
from .features import (SPAN_RTOL, check_bellman_completeness, check_realizability,
                       expected_next_features, phi_pi)
from .mdp import exact_q, exact_return
from .sampling import sample_dataset, substream_seed


class ConfigurationError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True, eq=False)
class SweepConfig:
    mdp: object
    pi: object
    fmap: object
    mu_d: object
    n_grid: List[int]
    num_seeds: int = 100
    seed: int = 0
    delta: float = 0.05
    estimator: str = est.INVERSE
    next_feature_mode: str = est.SAMPLED
    lossmin: Optional[est.LossMinConfig] = None
    realizability_rtol: float = SPAN_RTOL

    def __post_init__(self):
        grid = [int(n) for n in self.n_grid]
        if not grid or any(n < 1 for n in grid):
            raise ConfigurationError("n_grid must hold positive sample sizes")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("n_grid must be strictly increasing")
        object.__setattr__(self, "n_grid", grid)
        if self.num_seeds < 30:
            raise ConfigurationError("num_seeds must be at least 30")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        if self.estimator not in (est.INVERSE, est.LOSS_MIN):
            raise ConfigurationError(f"unknown estimator {self.estimator!r}")
        if self.estimator == est.LOSS_MIN and self.lossmin is None:
            raise ConfigurationError("loss_min estimator needs a LossMinConfig")
        if self.next_feature_mode not in (est.SAMPLED, est.EXPECTED):
            raise ConfigurationError(f"unknown next_feature_mode {self.next_feature_mode!r}")


CELL_COLUMNS = ["n", "seed_index", "dataset_seed", "j_hat", "error", "c_hat", "invertible"]
AGGREGATE_COLUMNS = ["n", "num_cells", "invertibility_rate", "rmse", "error_quantile",
                     "c_hat_median", "thm2_rhs", "bound_ratio", "above_burn_in"]


@dataclass(eq=False)
class SweepResult:
    """Per-cell records and per-``n`` aggregates of a sweep.

    Cells without an estimate (singular ``A`` with the inverse solver) carry
    ``nan`` error and ``inf`` empirical coverage.  Aggregates are recomputed
    from ``cells`` by :func:`aggregate_cells`.
    """

    j_true: float
    dim: int
    v_max: float
    gamma: float
    delta: float
    burn_in_n0: float
    cells: List[dict]
    aggregates: List[dict] = field(default_factory=list)
    slope: float = math.nan


def _quantile(x, q):
    return float(np.quantile(x, q)) if len(x) else math.nan


def aggregate_cells(cells, n_grid, *, dim, v_max, gamma, delta, burn_in_n0):
    scale = v_max / (1.0 - gamma)
    rows = []
    for n in n_grid:
        group = [c for c in cells if c["n"] == n]
        ok = [c for c in group if c["invertible"]]
        err = np.array([c["error"] for c in ok], dtype=float)
        c_hat = np.array([c["c_hat"] for c in group], dtype=float)
        c_med = float(np.median(c_hat)) if c_hat.size else math.nan
        rmse = float(np.sqrt(np.mean(err**2))) if err.size else math.nan
        q = _quantile(err, 1.0 - delta)
        rhs = scale * math.sqrt(c_med * (dim + math.log(1.0 / delta)) / n) if np.isfinite(c_med) else math.inf
        rows.append({
            "n": n,
            "num_cells": len(group),
            "invertibility_rate": len(ok) / len(group) if group else math.nan,
            "rmse": rmse,
            "error_quantile": q,
            "c_hat_median": c_med,
            "thm2_rhs": rhs,
            "bound_ratio": q / rhs if rhs > 0 and math.isfinite(rhs) else math.nan,
            "above_burn_in": bool(n >= 10.0 * burn_in_n0),
        })
    return rows


def _solve(cfg, m):
    if cfg.estimator == est.INVERSE:
        return est.lstdq_solve(m)
    return est.lossmin_solve(m, cfg.lossmin)


def run_sweep(cfg):
    """Estimate ``J(pi)`` on ``num_seeds`` datasets for every ``n`` in the grid.

    Raises
    ------
    ConfigurationError
        If ``Q^pi`` is not linear in the features.
    """
    mdp, pi, fmap, mu_d = cfg.mdp, cfg.pi, cfg.fmap, cfg.mu_d
    if not check_realizability(mdp, pi, fmap, cfg.realizability_rtol).realizable:
        raise ConfigurationError("Q^pi is not realizable by the features")
    j_true = exact_return(mdp, pi)
    pop = est.population_moments(mdp, pi, mu_d, fmap)
    n0 = cov.burn_in_estimate(pop, fmap, cfg.delta)
    phi0 = pop.phi0
    cells = []
    for n in cfg.n_grid:
        for i in range(cfg.num_seeds):
            seed = substream_seed(cfg.seed, f"sweep:{n}:{i}")
            data = sample_dataset(mdp, pi, mu_d, n, seed)
            m = est.empirical_moments(data, fmap, mdp.gamma, pi, cfg.next_feature_mode,
                                      initial_dist=mdp.initial_dist)
            sol = _solve(cfg, m)
            has_estimate = sol.theta is not None
            j_hat = float(phi0 @ sol.theta) if has_estimate else math.nan
            cells.append({
                "n": n,
                "seed_index": i,
                "dataset_seed": seed,
                "j_hat": j_hat,
                "error": abs(j_hat - j_true) if has_estimate else math.nan,
                "c_hat": cov.cvrg_empirical(m),
                "invertible": bool(has_estimate),
            })
    result = SweepResult(j_true, fmap.dim, mdp.v_max, mdp.gamma, cfg.delta, n0, cells)
    result.aggregates = aggregate_cells(cells, cfg.n_grid, dim=fmap.dim, v_max=mdp.v_max,
                                        gamma=mdp.gamma, delta=cfg.delta, burn_in_n0=n0)
    finite = [a for a in result.aggregates if np.isfinite(a["rmse"]) and a["rmse"] > 0]
    if len(finite) >= 3:
        result.slope = fit_rate_slope(result)
    return result


def fit_rate_slope(result):
    """Least-squares slope of ``log RMSE`` against ``log n``."""
    rows = result.aggregates if isinstance(result, SweepResult) else result
    pts = [(a["n"], a["rmse"]) for a in rows if np.isfinite(a["rmse"]) and a["rmse"] > 0]
    if len(pts) < 3:
        raise ValueError("need at least 3 grid points with finite RMSE")
    x, y = np.log(np.array(pts, dtype=float)).T
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def counterexample_instance(epsilon, gamma):
    """Synthetic population moments where the ``sigma_min`` bound is loose by ``1/epsilon``.

    ``d = 2``, ``phi0 = e_2``, ``Sigma = I``,
    ``Sigma_cr = diag(1 - epsilon, 0) / gamma``.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    sigma_cr = np.diag([1.0 - epsilon, 0.0]) / gamma
    return est.MomentSet(np.eye(2), sigma_cr, np.zeros(2), np.array([0.0, 1.0]), gamma,
                         est.POPULATION, None, est.EXPECTED)


# ---------------------------------------------------------------------------
# Property audits


@dataclass(frozen=True)
class AuditRow:
    instance_id: int
    property_id: str
    residual: float
    passed: bool


AUDIT_COLUMNS = ["instance_id", "property_id", "residual", "pass"]


def _abs_gap(a, b):
    if math.isinf(a) and math.isinf(b):
        return 0.0
    return abs(a - b)


def _exactness_errors(x):
    m = est.population_moments(x.mdp, x.pi, x.mu_d, x.fmap)
    if not check_realizability(x.mdp, x.pi, x.fmap).realizable or _linalg.sigma_min(m.a_mat) <= 1e-6:
        return None
    theta = est.lstdq_solve(m).theta
    q_err = float(np.max(np.abs(x.fmap.matrix @ theta - exact_q(x.mdp, x.pi))))
    j_err = abs(est.estimate_return(x.fmap, x.mdp, x.pi, theta) - exact_return(x.mdp, x.pi))
    return q_err, j_err


def _prop_exact_q(x):
    errs = _exactness_errors(x)
    return None if errs is None else (errs[0], 1e-8)


def _prop_exact_j(x):
    errs = _exactness_errors(x)
    return None if errs is None else (errs[1], 1e-9)


def _prop_tabular_chi2(x):
    if x.fmap.dim != x.mdp.num_pairs or not np.array_equal(x.fmap.matrix, np.eye(x.mdp.num_pairs)):
        return None
    m = est.population_moments(x.mdp, x.pi, x.mu_d, x.fmap)
    return _abs_gap(cov.cvrg_population(m), cov.chi2_tabular(x.mdp, x.pi, x.mu_d)), 1e-8


def _prop_lin_dyn(x):
    m = est.population_moments(x.mdp, x.pi, x.mu_d, x.fmap)
    if _linalg.is_singular(m.sigma) or _linalg.is_singular(m.a_mat):
        return None
    fd = cov.feature_dynamics(m)
    if not fd.occupancy_defined:
        return None
    return abs(cov.cvrg_lin(m, fd.nu_phi) - cov.cvrg_population(m)), 1e-8


def _prop_perdomo(x):
    m = est.population_moments(x.mdp, x.pi, x.mu_d, x.fmap)
    if _linalg.is_singular(m.sigma) or _linalg.is_singular(m.a_mat):
        return None
    lhs, rhs = cov.perdomo_comparison(m)
    agree = abs((1.0 - x.mdp.gamma) * lhs - math.sqrt(cov.cvrg_population(m)))
    violation = max(lhs - rhs, 0.0)
    return max(agree, violation), 1e-8


def _prop_abstraction(x):
    if x.spec is None or not cov.is_abstraction_consistent(x.pi, x.spec):
        return None
    m = est.population_moments(x.mdp, x.pi, x.mu_d, x.fmap)
    agg = cov.aggregated_concentrability(x.mdp, x.pi, x.mu_d, x.spec)
    return _abs_gap(cov.cvrg_population(m), agg), 1e-8


def completeness_residuals(x):
    """Residuals of the four consequences of Bellman completeness.

    Returns a dict with keys ``next_feature``, ``occupancy``,
    ``spectral_radius`` (excess over 1) and ``coverage``.
    """
    m = est.population_moments(x.mdp, x.pi, x.mu_d, x.fmap)
    fd = cov.feature_dynamics(m)
    predicted = x.fmap.matrix @ fd.b_pi.T
    nxt = expected_next_features(x.mdp, x.pi, x.fmap)
    target = phi_pi(x.fmap, x.mdp, x.pi)
    occ = float(np.max(np.abs(fd.nu_phi - target))) if fd.occupancy_defined else math.inf
    return {
        "next_feature": float(np.max(np.linalg.norm(predicted - nxt, axis=1))),
        "occupancy": occ,
        "spectral_radius": max(fd.spectral_radius - 1.0, 0.0),
        "coverage": abs(cov.cvrg_population(m) - cov.cvrg_lin(m, target)),
    }


def _completeness_item(key, tol):
    def prop(x):
        if not check_bellman_completeness(x.mdp, x.pi, x.fmap, x.mu_d).complete:
            return None
        if _linalg.is_singular(est.population_moments(x.mdp, x.pi, x.mu_d, x.fmap).sigma):
            return None
        return completeness_residuals(x)[key], tol
    return prop


def _prop_onpolicy(x):
    m = est.population_moments(x.mdp, x.pi, x.mu_d, x.fmap)
    if not cov.onpolicy_check(m, x.fmap, x.mu_d):
        return None
    return max(cov.cvrg_population(m) - 1.0, 0.0), 1e-8


def _prop_mwl(x):
    m = est.population_moments(x.mdp, x.pi, x.mu_d, x.fmap)
    if _linalg.is_singular(m.a_mat):
        return None
    w = est.mwl_weight(m, x.fmap)
    return abs(float(x.mu_d.probs @ w**2) - cov.cvrg_population(m)), 1e-8


def _prop_scale(x):
    m = est.population_moments(x.mdp, x.pi, x.mu_d, x.fmap)
    if _linalg.is_singular(m.sigma) or _linalg.is_singular(m.a_mat):
        return None
    ref = _scale_quantities(x, 1.0)
    worst = 0.0
    for c in (0.1, 10.0):
        other = _scale_quantities(x, c)
        worst = max(worst, max(abs(a - b) / max(1.0, abs(a)) for a, b in zip(ref, other)))
    return worst, 1e-9


def _scale_quantities(x, c):
    fmap = x.fmap.scaled(c)
    m = est.population_moments(x.mdp, x.pi, x.mu_d, fmap)
    theta = est.lstdq_solve(m).theta
    return (est.estimate_return(fmap, x.mdp, x.pi, theta), cov.cvrg_population(m),
            cov.cvrg_lin(m, phi_pi(fmap, x.mdp, x.pi)), cov.feature_dynamics(m).spectral_radius)


PROPERTIES: Dict[str, Callable] = {
    "exactness-q": _prop_exact_q,
    "exactness-j": _prop_exact_j,
    "tabular-chi2": _prop_tabular_chi2,
    "feature-occupancy": _prop_lin_dyn,
    "perdomo": _prop_perdomo,
    "aggregated-concentrability": _prop_abstraction,
    "completeness-next-feature": _completeness_item("next_feature", 1e-8),
    "completeness-occupancy": _completeness_item("occupancy", 1e-8),
    "completeness-spectral-radius": _completeness_item("spectral_radius", 1e-9),
    "completeness-coverage": _completeness_item("coverage", 1e-8),
    "onpolicy": _prop_onpolicy,
    "mwl": _prop_mwl,
    "scale-invariance": _prop_scale,
}


def verify_propositions(batch, properties=None):
    """Run every applicable property on every instance.

    A property that does not apply to an instance (e.g. the chi-squared
    identity on non-tabular features) produces no row.

    Returns
    -------
    rows : list of AuditRow
    passed : bool
        ``True`` iff every row passed.
    """
    names = list(PROPERTIES) if properties is None else list(properties)
    unknown = set(names) - set(PROPERTIES)
    if unknown:
        raise ConfigurationError(f"unknown properties: {sorted(unknown)}")
    rows = []
    for idx, x in enumerate(batch):
        for name in names:
            out = PROPERTIES[name](x)
            if out is None:
                continue
            residual, tol = out
            rows.append(AuditRow(idx, name, float(residual), bool(residual <= tol)))
    return rows, all(r.passed for r in rows)


SUITES = {
    "tabular-chi2": (inst.random_tabular, ["tabular-chi2"]),
    "realizable": (inst.random_realizable,
                   ["exactness-q", "exactness-j", "feature-occupancy", "perdomo", "mwl",
                    "scale-invariance"]),
    "abstraction": (inst.random_abstraction_instance, ["aggregated-concentrability", "mwl"]),
    "completeness": (inst.bellman_complete_instance,
                     ["completeness-next-feature", "completeness-occupancy",
                      "completeness-spectral-radius", "completeness-coverage"]),
    "onpolicy": (inst.mean_matching_instance, ["onpolicy"]),
}


def make_suite(name, num_instances, seed=0):
    """Seeded instance batch for a named suite, with its property list."""
    if name not in SUITES:
        raise ConfigurationError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    gen, props = SUITES[name]
    batch = [gen(substream_seed(seed, f"instance:{name}:{i}")) for i in range(num_instances)]
    return batch, props


def run_suite(name, num_instances, seed=0):
    batch, props = make_suite(name, num_instances, seed)
    return verify_propositions(batch, props)
