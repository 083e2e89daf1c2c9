"""
When a smallest-singular-value bound is loose
=============================================

A common way to bound the LSTDQ error divides by the smallest singular
value of the whitened system matrix ``W``.  The coverage parameter uses the
direction of ``phi0`` instead.  On the two-dimensional instance below, ``W``
is nearly singular in a direction ``phi0`` never touches, so the singular
value bound grows like ``1 / epsilon`` while the true quantity stays at 1.
"""

from lstdq_lab import counterexample_instance, cvrg_population, perdomo_comparison

print(" epsilon      lhs          rhs     rhs/lhs")
for eps in (0.5, 0.1, 0.01, 0.001):
    m = counterexample_instance(eps, gamma=0.9)
    lhs, rhs = perdomo_comparison(m)
    print(f"{eps:8.3f} {lhs:8.4f} {rhs:12.4f} {rhs / lhs:11.2f}")

# %%
# The prefactor-free lhs relates to the coverage by (1 - gamma) * lhs = sqrt(C).
m = counterexample_instance(0.01, 0.9)
lhs, _ = perdomo_comparison(m)
print("\n(1 - gamma) * lhs =", (1 - 0.9) * lhs, " sqrt(C_phi) =", cvrg_population(m) ** 0.5)
