"""
Line of dynamical instability
=============================

``mu_gamma`` grows with the coupling strength; the iteration stops converging
where it crosses one.  Bisection locates the crossing for both ensembles.
"""

import numpy as np

from rbmtap import instability_bisection
from rbmtap.dft_theory import mu_at_beta

alpha, h1, h2 = 0.5, 2.0, 1.0

for model, hi in (("iid", 12.0), ("column_orthogonal", 40.0)):
    beta_star = instability_bisection(model, alpha, h1, h2, 1.0, hi, tol=1e-8)
    print(f"{model}: beta* = {beta_star:.4f}")
    for beta in np.linspace(1.0, hi, 6):
        print(f"    beta = {beta:6.2f}   mu_gamma = {mu_at_beta(model, alpha, h1, h2, beta):.4f}")

# the line in the (alpha, beta) plane for i.i.d. couplings
for a in (0.25, 0.5, 0.75, 1.0):
    print(f"alpha = {a:.2f}: beta* = {instability_bisection('iid', a, h1, h2, 0.5, 40.0):.4f}")
