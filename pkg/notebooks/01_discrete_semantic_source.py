"""
Semantic rate-distortion and exponent bounds for a discrete source
==================================================================

A ternary hidden state S is seen through a binary observation X. Both the
state and the observation are reconstructed, each under its own Hamming
budget, and the code is sent over a binary symmetric channel.
"""

# %%
import math

import numpy as np

from semantic_jscc import (DiscreteSemanticSource, DistortionPair, JsccProblem,
                           jscc_bounds_dmc, semantic_rd_discrete)
from semantic_jscc.prob import dmc_capacity

ps = np.array([[2 / 3, 1 / 3, 0.0], [1 / 9, 1 / 3, 5 / 9]])
hamming2 = np.array([[0.0, 1.0], [1.0, 0.0]])
src = DiscreteSemanticSource([0.4, 0.6], ps, 1 - np.eye(3), hamming2)
bsc = np.array([[0.7, 0.3], [0.3, 0.7]])

# %% [markdown]
# The semantic budget only matters once it binds. With D_s = inf the
# problem reduces to ordinary rate-distortion of X.

# %%
for d_s in (0.45, 0.5, 0.6, math.inf):
    r = semantic_rd_discrete(src, DistortionPair(d_s, 0.1)).value
    print(f"D_s={d_s:<5}  R(D_s, 0.1) = {r:.4f} nats")

# %% [markdown]
# Exponent bounds at t = 0.2 source symbols per channel use. The feasible
# code rates run from t R(D) up to the channel capacity.

# %%
prob = JsccProblem(src, bsc, DistortionPair(0.6, 0.1), 0.2)
upper, lower = jscc_bounds_dmc(prob, grid=12)
print(f"capacity {dmc_capacity(bsc):.4f}, interval [{upper.interval.lo:.4f}, "
      f"{upper.interval.hi:.4f}]")
print(f"upper E* = {upper.e_star:.5f} at R = {upper.r_star:.4f}")
print(f"lower E* = {lower.e_star:.5f} at R = {lower.r_star:.4f}")
