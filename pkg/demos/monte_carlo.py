"""Monte Carlo cross-check of the integral-equation solver.

Estimates are reproducible from the seed alone and do not depend on the
number of worker threads.

    python demos/monte_carlo.py
"""
from srdetect import oc
from srdetect.detectors import Procedure
from srdetect.model import beta_model
from srdetect.montecarlo import McConfig, estimate_add, estimate_arl, estimate_stadd, verify_martingale

model = beta_model()
cfg = McConfig(50_000, seed=11, parallel_width=4)


def show(label, est, ref):
    print(f"{label:<22} mc {est.mean:9.4f} +- {est.std_error:.4f}   solver {ref:9.4f}   z {est.z_score(ref):+.2f}")


show("ARL SR, A=42", estimate_arl(model, Procedure.sr(), 42.0, cfg), oc.arl(model, Procedure.sr(), 42.0))
show("ARL SRP, A=43", estimate_arl(model, Procedure.srp(), 43.0, cfg), oc.arl(model, Procedure.srp(), 43.0))
show("delay SR, nu=0", estimate_add(model, Procedure.sr(), 42.0, 0, cfg), oc.conditional_delay(model, Procedure.sr(), 42.0, 0))
show("delay SR, nu=10", estimate_add(model, Procedure.sr(), 42.0, 10, cfg), oc.conditional_delay(model, Procedure.sr(), 42.0, 10))
show("STADD SR, A=42", estimate_stadd(model, 42.0, 2000, cfg), oc.lower_bound(model, 42.0))

m = verify_martingale(model, 43.0, 2.603, cfg)
print(f"E T = {m.lhs.mean:.3f}, E R_T - r = {m.rhs.mean:.3f}, paired difference {m.difference.mean:+.3f} +- {m.difference.std_error:.3f}")
