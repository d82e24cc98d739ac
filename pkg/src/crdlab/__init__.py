"""Causal rate-distortion laboratory for scalar Gauss-Markov sources."""

from .coder import CoderConfig, decode, design_coder, encode, evaluate
from .constructions import (
    BlockChannel,
    concatenate_first_samples,
    conditionally_independent_copy,
    qjs_audit,
    replicate_blocks,
    shift_stationarize,
)
from .gauss import (
    ArSourceModel,
    CovarianceMatrix,
    IndexSet,
    JointProcessModel,
    causality_audit,
    conditional_mutual_information,
    geometric_decay_certificate,
    markov_chain_check,
    mutual_information,
)
from .solver import brute_force_irdf, finite_horizon_irdf, stationary_irdf

__version__ = "0.1.0"
