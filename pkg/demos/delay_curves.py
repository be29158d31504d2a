"""Conditional detection delay E_nu(T - nu | T > nu) as a function of nu.

SR is worst at nu = 0, SR-r(mu_A) at nu = infinity, and SRP is flat.  The
head start r* solving C_r = C_inf is meant to balance the two ends; at
moderate thresholds the balance is only approximate.

    python demos/delay_curves.py
"""
import numpy as np

from srdetect import asymptotics as asy
from srdetect import oc
from srdetect.detectors import Procedure
from srdetect.model import beta_model

model = beta_model()
gamma = 100
r_star = asy.design_head_start("equalizer", model)
procs = {
    "SR": Procedure.sr(),
    "SR-r(mu_A)": Procedure.sr_r("mu_A"),
    f"SR-r({r_star:.3f})": Procedure.sr_r(r_star),
    "SRP": Procedure.srp(),
}
curves = {}
for name, proc in procs.items():
    A = oc.calibrate_threshold(model, proc, gamma)
    res = oc.operating_characteristics(model, proc, A, nu_max=60)
    curves[name] = (res.delay_curve, res.add_infinity)
    print(f"{name:>14}: A = {A:8.4f}  SADD = {res.sadd:.4f} ({res.argmax_kind})")

print()
print("  nu " + " ".join(f"{name:>14}" for name in curves))
for nu in (0, 1, 2, 3, 5, 10, 20, 40):
    row = []
    for delays, tail in curves.values():
        row.append(delays[nu] if nu < delays.size else tail)
    print(f"{nu:>4} " + " ".join(f"{v:>14.4f}" for v in row))
print(" inf " + " ".join(f"{tail:>14.4f}" for _, tail in curves.values()))

# the r* curve: its two ends close in as A grows
for A in (43.0, 426.5, 4259.0):
    c = oc.delay_curve(model, A, r_star)
    print(f"A = {A:7.1f}: ADD_inf - delay(0) = {c.add_infinity - c.delays[0]:.4f}")
print("max |SRP delay - E_0 T|:", float(np.ptp(curves["SRP"][0])))
