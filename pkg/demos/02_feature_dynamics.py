"""
Compressed feature dynamics
===========================

LSTDQ implicitly fits a linear model ``x' = B x`` of how features evolve.
Its discounted occupancy ``nu`` is a ``d``-dimensional stand-in for the
state-action occupancy, and the coverage parameter is exactly the linear
coverage of ``nu``.  Here we check that on a realizable instance and watch
the power series converge.
"""

import numpy as np

from lstdq_lab import cvrg_lin, cvrg_population, feature_dynamics, population_moments
from lstdq_lab.instances import random_realizable

x = random_realizable(seed=7)
m = population_moments(x.mdp, x.pi, x.mu_d, x.fmap)
fd = feature_dynamics(m)
print(f"|S|={x.mdp.num_states} |A|={x.mdp.num_actions} d={x.fmap.dim} gamma={m.gamma:.3f}")
print(f"spectral radius of B: {fd.spectral_radius:.4f}  (needs < {1 / m.gamma:.4f})")

# %%
# The coverage computed two ways.
print(f"C_phi          = {cvrg_population(m):.12f}")
print(f"nu' Sigma^-1 nu = {cvrg_lin(m, fd.nu_phi):.12f}")

# %%
# Partial sums of (1 - gamma) sum_t gamma^t B^t phi0.
partial = np.zeros(m.dim)
term = m.phi0.copy()
for t in range(1, 401):
    partial += term
    term = m.gamma * fd.b_pi @ term
    if t in (1, 10, 50, 100, 200, 400):
        gap = np.max(np.abs((1 - m.gamma) * partial - fd.nu_phi))
        print(f"T={t:4d}  max |partial - nu| = {gap:.3e}")
