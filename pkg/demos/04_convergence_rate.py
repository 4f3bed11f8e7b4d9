"""
Rate of convergence
===================

Below the instability the step sizes ``Delta(t)`` decay like ``mu_gamma^t``
until they reach the round-off plateau.  The fitted log-slope is compared
with ``ln mu_gamma`` for a few inverse temperatures.  Closer to the instability
the decay is slower, the fit reaches later times and finite-size corrections
become visible at this modest ``n1``.
"""

import numpy as np

from rbmtap import (GeneratingFunction, build_operator, g_prime, mu_gamma, run, sample,
                    solve_rs_fixed_point, theta_analytic)
from rbmtap.harness import fit_log_slope, machine_floor

alpha, h1, h2, n1 = 0.5, 2.0, 1.0, 2048

print(" beta   mu_gamma   fitted slope   ln mu")
for beta in (1.0, 2.0, 4.0, 6.0):
    gf = GeneratingFunction.iid(alpha, beta)
    op = solve_rs_fixed_point(gf, h1, h2)
    rep = mu_gamma(theta_analytic(op, gf), g_prime(h1, op.chi1, op.qhat1),
                   g_prime(h2, op.chi2, op.qhat2))
    res = run(build_operator(sample("iid", n1, n1 // 2, beta, 0), op), op, T=80, seed=1, tol=0)
    slope, used = fit_log_slope(res.delta1, 5, 80, machine_floor(op.qhat1))
    print(f"{beta:5.1f}   {rep.mu_gamma:.4f}     {slope:8.4f}     {np.log(rep.mu_gamma):8.4f}"
          f"   (fit over t = {used[0]}..{used[-1]})")
