"""
Coverage on a tabular problem
=============================

With one-hot features, the LSTDQ coverage parameter reduces to the
chi-squared divergence between the target occupancy and the data
distribution.  This script builds a small random MDP, compares the two
numbers, and shows how coverage blows up as the data starve one pair.
"""

import numpy as np

from lstdq_lab import (StateActionDist, chi2_tabular, cvrg_population, occupancy,
                       population_moments, tabular_features)
from lstdq_lab.instances import random_mdp, random_policy

# %%
# A 5-state, 2-action MDP, a random target policy and uniform data.
mdp = random_mdp(5, 2, gamma=0.9, seed=1)
pi = random_policy(5, 2, seed=2)
fmap = tabular_features(mdp)
uniform = StateActionDist.uniform(mdp.num_pairs)

m = population_moments(mdp, pi, uniform, fmap)
print(f"C_phi (feature dynamics)  = {cvrg_population(m):.12f}")
print(f"E_D[(mu_pi / mu_D)^2]      = {chi2_tabular(mdp, pi, uniform):.12f}")

# %%
# On-policy data (the occupancy itself) gives coverage exactly one.
mu_pi = occupancy(mdp, pi)
print("on-policy coverage:", cvrg_population(population_moments(mdp, pi, mu_pi, fmap)))

# %%
# Shrink the mass on the pair the target policy visits most.
target = int(np.argmax(mu_pi.probs))
print("\nmass on busiest pair   C_phi")
for mass in (1e-1, 1e-2, 1e-3, 1e-4):
    p = np.full(mdp.num_pairs, (1 - mass) / (mdp.num_pairs - 1))
    p[target] = mass
    c = cvrg_population(population_moments(mdp, pi, StateActionDist(p), fmap))
    print(f"{mass:>20.0e}   {c:10.2f}")
