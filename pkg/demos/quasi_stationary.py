"""Quasi-stationary law Q_A of the SR statistic and its stationary limit.

Q_A is the law of R_n given no alarm yet, in the long run.  As A grows it
approaches the stationary law x/(1+x) of the unstopped statistic, and its
mean mu_A grows like log A.

    python demos/quasi_stationary.py
"""
import math

import numpy as np

from srdetect import asymptotics as asy
from srdetect import oc
from srdetect.model import beta_model

model = beta_model()
x = np.array([0.5, 1.0, 2.0, 5.0, 10.0, 20.0])
print("x            " + " ".join(f"{v:>7g}" for v in x))
print("x/(1+x)      " + " ".join(f"{v:>7.4f}" for v in x / (1 + x)))
for A in (43.0, 426.5, 4259.0):
    q = oc.quasi_stationary(model, A)
    cdf = q.cdf(x[x < A])
    print(f"Q_A, A={A:<6g} " + " ".join(f"{v:>7.4f}" for v in cdf))
print()
for A in (10.0, 100.0, 1000.0, 10_000.0):
    q = oc.quasi_stationary(model, A)
    print(f"A = {A:>7g}: lambda_A = {q.eigenvalue:.6f}, mu_A = {q.mean:.4f}, mu_A - log A = {q.mean - math.log(A):+.4f}")

# the stationary laws from their own integral equations on a compactified grid
laws = asy.stationary_laws(model)
grid = np.linspace(0, laws.x_max / 2, 2001)
print()
print("sup |q_st - x/(1+x)|    =", f"{np.abs(laws.cdf_st(grid) - grid / (1 + grid)).max():.2e}")
print("sup |q_tilde - x/(1+x)| =", f"{np.abs(laws.cdf_tilde(grid) - grid / (1 + grid)).max():.2e}")
