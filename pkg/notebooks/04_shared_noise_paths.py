"""
Paths under one noise realization
=================================

One draw of w drives the optimal paths for N = 10, 20, 40 and the
stationary path. Mid-horizon the optimal paths sit on the stationary one;
near k = N they tend to peel away because the terminal weight is zero.
Whether the final gap beats the mid-window gap is a property of the single
realization: on this seed the N = 10 path ends close to the stationary one.
"""

# %%
import numpy as np

from lqturnpike.model import scalar_example
from lqturnpike.riccati import riccati_backward, solve_dare
from lqturnpike.simulate import sample_noise, simulate_pair
from lqturnpike.stationary import build_stationary_pair
from lqturnpike.turnpike import figure1_metrics

pb = scalar_example()
sol = solve_dare(pb.system, pb.cost)
pair = build_stationary_pair(pb.system, sol)
noise = sample_noise(seed=7, N=40, Sigma_W=pb.system.Sigma_W)
paths = {N: simulate_pair(pb.system, riccati_backward(pb.system, pb.cost, N), pair, pb.x0, noise, path_seed=8)
         for N in (10, 20, 40)}

# %%
print(" k     xs      x_N10     x_N20     x_N40")
for k in range(0, 41, 4):
    cols = [f"{paths[N].x[k, 0]:9.3f}" if k <= N else "         " for N in (10, 20, 40)]
    print(f"{k:2d} {paths[40].xs[k, 0]:8.3f} " + " ".join(cols))

# %%
for m in figure1_metrics(paths):
    print(m.to_dict())

# %%
# with the steady gain the gap shrinks geometrically on every path
steady = simulate_pair(pb.system, sol.K, pair, pb.x0, noise, path_seed=8, N=40)
d = steady.x[:, 0] - steady.xs[:, 0]
print(np.allclose(d, d[0] * pair.A_K[0, 0] ** np.arange(41), atol=1e-10))
