"""Excess-distortion exponents for semantic joint source-channel coding.

Discrete sources with a hidden semantic component over DMCs, and Gaussian
sources over MIMO block-fading channels. All rates and exponents are in
nats unless a function says otherwise.
"""

from .dmc import ChannelExponentResult, expurgated_dmc, sphere_packing_dmc
from .jscc import (ExponentCurve, FeasibleInterval, JsccExponentReport, JsccProblem,
                   convexity_report, csiszar_bounds_dmc, feasible_interval,
                   jscc_bounds_dmc, jscc_exponent_mimo, optimal_code_rate,
                   optimal_code_rate_stationary)
from .mimo import (CapabilityError, ExpurgatedParams, McEstimate, MimoChannelSpec,
                   MimoDomainError, channel_exponent_mimo, eex_closed, eex_definition_oracle,
                   eex_derivatives, eex_mc, ergodic_capacity, random_coding_mimo)
from .prob import (BITS_PER_NAT, ConvergenceError, dmc_capacity, entropy, kl_divergence,
                   mutual_information)
from .ratedist import (DiscreteSemanticSource, DistortionPair, GaussianSourceSpec,
                       InfeasibleDistortionError, UnsupportedStructureError, rate_distortion,
                       semantic_rd_discrete, semantic_rd_gaussian)
from .source import (SourceExponentQuery, gaussian_kl_conditional, gaussian_kl_marginal,
                     source_exponent_discrete, source_exponent_gaussian)
from .special import hyp2f0, hyp2f0_series

__all__ = [
    "BITS_PER_NAT",
    "CapabilityError",
    "ChannelExponentResult",
    "ConvergenceError",
    "DiscreteSemanticSource",
    "DistortionPair",
    "ExponentCurve",
    "ExpurgatedParams",
    "FeasibleInterval",
    "GaussianSourceSpec",
    "InfeasibleDistortionError",
    "JsccExponentReport",
    "JsccProblem",
    "McEstimate",
    "MimoChannelSpec",
    "MimoDomainError",
    "SourceExponentQuery",
    "UnsupportedStructureError",
    "channel_exponent_mimo",
    "convexity_report",
    "csiszar_bounds_dmc",
    "dmc_capacity",
    "eex_closed",
    "eex_definition_oracle",
    "eex_derivatives",
    "eex_mc",
    "entropy",
    "ergodic_capacity",
    "expurgated_dmc",
    "feasible_interval",
    "gaussian_kl_conditional",
    "gaussian_kl_marginal",
    "hyp2f0",
    "hyp2f0_series",
    "jscc_bounds_dmc",
    "jscc_exponent_mimo",
    "kl_divergence",
    "mutual_information",
    "optimal_code_rate",
    "optimal_code_rate_stationary",
    "random_coding_mimo",
    "rate_distortion",
    "semantic_rd_discrete",
    "semantic_rd_gaussian",
    "source_exponent_discrete",
    "source_exponent_gaussian",
    "sphere_packing_dmc",
]

__version__ = "0.1.0"
