"""
Riccati gains and the optimal stationary pair
=============================================

Solve the scalar example, watch the finite-horizon gains approach the
steady gain, and check that the stationary cost equals tr(P Sigma_W).
"""

# %%
import numpy as np

from lqturnpike.model import scalar_example
from lqturnpike.riccati import riccati_backward, solve_dare
from lqturnpike.stationary import build_stationary_pair

pb = scalar_example()
sol = solve_dare(pb.system, pb.cost)
print(f"P = {sol.P[0, 0]:.8f}   K = {sol.K[0, 0]:.8f}   iterations = {sol.iterations}")

# %% [markdown]
# The scalar DARE reduces to P^2 - 3.2 P - 5 = 0, so the iteration can be
# checked against the quadratic formula.

# %%
print("closed form:", (3.2 + np.sqrt(30.24)) / 2)

# %%
# gains for N = 20 with zero terminal weight: close to K early, zero at the end
g = riccati_backward(pb.system, pb.cost, 20)
for k in (0, 5, 10, 15, 18, 19):
    print(f"k={k:2d}  K_N(k) = {g.gain(k)[0, 0]: .6f}")

# %%
pair = build_stationary_pair(pb.system, sol)
print(f"Sigma_s = {pair.Sigma_s[0, 0]:.5f}")
print(f"stationary stage cost = {pair.stage_cost(pb.cost):.5f}")
print(f"tr(P Sigma_W)         = {np.trace(sol.P @ pb.system.Sigma_W):.5f}")
