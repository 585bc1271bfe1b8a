"""
Dissipativity certificate
=========================
"""

# %%
import numpy as np

from lqturnpike.dissipativity import certify, lower_bound_M, verify_dissipation_chain
from lqturnpike.model import scalar_example
from lqturnpike.riccati import riccati_backward, solve_dare
from lqturnpike.stationary import AffineControl, build_stationary_pair

pb = scalar_example()
sol = solve_dare(pb.system, pb.cost)
pair = build_stationary_pair(pb.system, sol)
cert = certify(pb.system, pb.cost, sol)
print("Stilde =", cert.Stilde.ravel(), " gamma =", cert.gamma)
print("H =\n", cert.H)
print("certified lower bound on lambda_min(H):", cert.lambda_min_H_lower)

# %%
# the three dissipation equalities under the finite-horizon optimal control
N = 30
gains = riccati_backward(pb.system, pb.cost, N)
rep = verify_dissipation_chain(pb.system, pb.cost, cert, pair, gains, pb.x0, N)
print(rep.to_dict())

# %%
# same check for a control that also reacts to the stationary state
rng = np.random.default_rng(0)
base = AffineControl.from_schedule(gains)
G = base.G.copy()
G[:, 0, 1] += 0.2
odd = AffineControl(G, rng.normal(size=(N, 1)))
print(verify_dissipation_chain(pb.system, pb.cost, cert, pair, odd, pb.x0, N).to_dict())

# %%
# storage function stays above its lower bound
M = lower_bound_M(sol.P, cert.S, pair.Sigma_s)
print(f"M = {M:.3f}   min lambda_tilde along the path = {rep.lambda_tilde.min():.3f}")
