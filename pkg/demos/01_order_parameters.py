"""
Order parameters of the two ensembles
=====================================

Solve the replica-symmetric fixed point for i.i.d. Gaussian and
column-orthogonal couplings, then repeat the solve from the empirical spectrum
of one sampled matrix (the Green function route).
"""

import numpy as np

from rbmtap import (GeneratingFunction, GreenFunction, compute_svd, sample, solve,
                    solve_green_fixed_point, theta_analytic)

alpha, beta, h1, h2 = 0.5, 2.0, 2.0, 1.0

for model in ("iid", "column_orthogonal"):
    gf = GeneratingFunction.for_model(model, alpha, beta)
    op = solve(gf, h1, h2)
    print(f"{model:>18}: chi = ({op.chi1:.6f}, {op.chi2:.6f})  "
          f"qhat = ({op.qhat1:.6f}, {op.qhat2:.6f})  psi = ({op.psi1:.6f}, {op.psi2:.6f})")

# for i.i.d. couplings the field variances have closed forms in chi
op = solve(GeneratingFunction.iid(alpha, beta), h1, h2)
print("qhat1 - (1 - chi2) alpha beta =", op.qhat1 - (1 - op.chi2) * alpha * beta)
print("qhat2 - (1 - chi1) beta       =", op.qhat2 - (1 - op.chi1) * beta)

# the same equations driven by a sampled spectrum
spec = compute_svd(sample("iid", 2000, 1000, beta, seed=0))
g = GreenFunction.from_spectral(spec)
emp = solve_green_fixed_point(g, h1, h2)
print(f"sampled spectrum, n1=2000: chi1 = {emp.chi1:.6f} (theory {op.chi1:.6f}), "
      f"qhat2 = {emp.qhat2:.6f} (theory {op.qhat2:.6f})")

print("Theta coefficients (a11, a12, a21, a22):")
print(np.round(theta_analytic(op, GeneratingFunction.iid(alpha, beta)).matrix.ravel(), 6))
