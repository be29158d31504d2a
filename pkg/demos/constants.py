"""Renewal-theory constants behind the asymptotic approximations.

zeta and varkappa come from a series/Monte Carlo estimator; C_0, C_inf and the
equalizing head start r* from quadrature against the stationary laws, with
the beta model's closed forms alongside.

    python demos/constants.py [paths]
"""
import math
import sys

from srdetect import asymptotics as asy
from srdetect.model import beta_model

paths = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
model = beta_model()
over = asy.overshoot_constants(model, mc_paths=paths, rng=1)
print(f"zeta     = {over.zeta:.5f} +- {over.zeta_se:.5f}  ({paths} paths, {over.terms_used} terms)")
print(f"varkappa = {over.varkappa:.5f} +- {over.varkappa_se:.5f}")

laws = asy.stationary_laws(model)
for label, r, exact in (("C_0", 0.0, 1.0), ("C_2", 2.0, 1.5 * math.log(3)), ("C_inf", asy.INFINITY, math.pi**2 / 6)):
    print(f"{label:<6} quadrature {asy.constant_c(model, r, laws, 'quadrature'):.5f}  closed form {exact:.5f}")
print(f"r*     quadrature {asy.design_head_start('equalizer', model, laws=laws, method='quadrature'):.4f}"
      f"  closed form {asy.design_head_start('equalizer', model):.4f}")

const = asy.asymptotic_constants(model, overshoot=over)
for gamma in (100, 10_000):
    print(f"gamma = {gamma:>6}: SADD(SR) ~ {asy.approx_sadd('SR', const, gamma=gamma):.3f},"
          f" SADD(SRP) ~ {asy.approx_sadd('SRP', const, gamma=gamma):.3f}")
