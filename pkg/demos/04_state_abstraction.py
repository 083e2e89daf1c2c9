"""
Coverage under a state abstraction
==================================

With one-hot features over blocks of states, the coverage parameter equals
the chi-squared concentrability of an abstract MDP whose transitions are
averaged within each block according to the data distribution.  That
abstract model need not be exact for the identity to hold.
"""

import numpy as np

from lstdq_lab import (AbstractionSpec, StateActionDist, abstract_model, abstraction_features,
                       aggregated_concentrability, check_bellman_completeness, cvrg_population,
                       population_moments)
from lstdq_lab.instances import consistent_policy, random_mdp

mdp = random_mdp(6, 2, gamma=0.8, seed=3)
spec = AbstractionSpec([0, 0, 1, 1, 2, 2], num_blocks=3)
pi = consistent_policy(spec, 2, seed=4)
mu_d = StateActionDist(np.random.default_rng(5).dirichlet(np.ones(12)))
fmap = abstraction_features(mdp, spec)

# %%
chk = check_bellman_completeness(mdp, pi, fmap, mu_d)
print("abstraction features Bellman complete?", chk.complete,
      f"(dynamics residual {chk.dynamics_residual:.3f})")

m = population_moments(mdp, pi, mu_d, fmap)
print(f"C_phi with abstraction features   = {cvrg_population(m):.12f}")
print(f"aggregated concentrability (chi2) = {aggregated_concentrability(mdp, pi, mu_d, spec):.12f}")

# %%
# The abstract model itself: block-level transitions for action 0.
abstract, _, phi_d = abstract_model(mdp, pi, mu_d, spec)
np.set_printoptions(precision=3, suppress=True)
print("\nabstract P(. | k, a=0):\n", abstract.transition[:, 0, :])
print("aggregated data mass per (block, action):", phi_d)
