"""
Expurgated exponent of a Rayleigh block-fading MIMO channel
===========================================================

The closed form (a Hankel determinant of Laguerre moments) is checked
against Monte Carlo, then used in the joint source-channel optimization for
a scalar Gaussian source.
"""

# %%
import math

from semantic_jscc import (DistortionPair, ExpurgatedParams, GaussianSourceSpec,
                           JsccProblem, MimoChannelSpec, eex_closed, eex_mc,
                           ergodic_capacity, jscc_exponent_mimo)

spec = MimoChannelSpec(3, 3, power=15.0)
for rho in (0.25, 0.5, 1.0):
    p = ExpurgatedParams(rho, 0.4 / 15)
    est = eex_mc(spec, p, 100_000, seed=0)
    print(f"rho={rho:<4}  closed {eex_closed(spec, p):.5f}  "
          f"mc {est.value:.5f} +- {est.std_error:.5f}")

# %%
cap = ergodic_capacity(spec, 100_000, seed=0)
print(f"ergodic capacity {cap.value:.4f} nats ({cap.value / math.log(2):.4f} bits)")

# %% [markdown]
# The joint exponent E_J(R) = t E_src(R / t) + E_ch(R). The channel term is
# set to zero at and above the ergodic capacity, so the curve drops at the
# right end of the interval; with these parameters that end point is the
# minimizer.

# %%
src = GaussianSourceSpec.isotropic(1, 1, 4.0, 1.0, math.sqrt(0.5))
prob = JsccProblem(src, spec, DistortionPair(2.0, 1.0), 2.0)
rep = jscc_exponent_mimo(prob, grid=12)
for r, e in rep.curve.points:
    print(f"R={r:7.4f}  E_J={e:.5f}")
print(f"E* = {rep.e_star:.5f} at R* = {rep.r_star:.4f} (rho* = {rep.rho_star:.3g})")
