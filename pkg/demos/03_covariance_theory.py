"""
Two-time covariances: theory against simulation
===============================================

The components of ``gamma_k(t)`` behave as a Gaussian process whose
covariance ``C_k(t, s)`` follows a closed recursion.  Compare it with the
empirical overlaps ``gamma_k(t) . gamma_k(s) / n_k`` of a few runs.
"""

import numpy as np

from rbmtap import (GeneratingFunction, build_operator, predict, run, sample,
                    solve_rs_fixed_point, theta_analytic)

alpha, beta, h1, h2, n1, T = 0.5, 2.0, 2.0, 1.0, 2048, 8
gf = GeneratingFunction.iid(alpha, beta)
op = solve_rs_fixed_point(gf, h1, h2)
cov, report = predict(op, theta_analytic(op, gf), T)

emp = np.zeros((T, T))
seeds = (0, 1, 2)
for seed in seeds:
    A = build_operator(sample("iid", n1, n1 // 2, beta, seed), op)
    traj = run(A, op, T, seed=100 + seed, tol=0, keep_trajectory=True).trajectory
    g = np.array([st.gamma1 for st in traj[1:]])
    emp += g @ g.T / n1 / len(seeds)

print(f"mu_gamma = {report.mu_gamma:.4f}")
print(" t  s   theory C1   empirical   relative sq. error")
for t, s in [(1, 1), (2, 1), (3, 1), (3, 2), (5, 4), (8, 1), (8, 7)]:
    th, em = cov.at(1, t, s), emp[t - 1, s - 1]
    print(f"{t:2d} {s:2d}  {th:10.6f}  {em:10.6f}   {((th - em) / th) ** 2:.1e}")
