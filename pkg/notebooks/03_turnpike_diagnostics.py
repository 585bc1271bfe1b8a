"""
Turnpike counts
===============

For each horizon, count the steps where E|(X - Xs, U - Us)|_H^2 <= eps and
compare with the guaranteed lower bound N - (delta + C)/eps. The bound is
loose on this example; the counts themselves show the turnpike clearly.
"""

# %%
from lqturnpike.dissipativity import certify
from lqturnpike.model import scalar_example
from lqturnpike.riccati import riccati_backward, solve_dare
from lqturnpike.simulate import simulate_ensemble
from lqturnpike.stationary import build_stationary_pair
from lqturnpike.turnpike import moment_turnpike, probability_turnpike

pb = scalar_example()
sol = solve_dare(pb.system, pb.cost)
pair = build_stationary_pair(pb.system, sol)
cert = certify(pb.system, pb.cost, sol)

# %%
print(" N   eps    Q_eps   bound")
for N in (5, 10, 20, 40, 80):
    rep = moment_turnpike(pb.system, pb.cost, cert, riccati_backward(pb.system, pb.cost, N),
                          pair, pb.x0, N, [0.5, 1, 2, 5])
    for r in rep.eps_results:
        print(f"{N:3d} {r.eps:5.1f} {r.Q:7d} {r.bound:8.2f}")

# %% [markdown]
# In probability: the Markov route uses the exact moments, the empirical
# route counts exceedances over 10 000 simulated paths.

# %%
N = 40
gains = riccati_backward(pb.system, pb.cost, N)
rep = moment_turnpike(pb.system, pb.cost, cert, gains, pair, pb.x0, N, [2.0])
ens = simulate_ensemble(pb.system, gains, pair, pb.x0, seed=1, M=10_000)
for eta in (0.1, 0.25, 0.5):
    r = probability_turnpike(rep, 2.0, eta, ens)
    print(f"eta={eta:4.2f}  markov={r.exact:3d}  empirical={r.empirical:3d}  bound={r.bound:8.2f}")
