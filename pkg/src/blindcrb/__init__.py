"""Fisher information and constrained Cramer-Rao bounds for blind FIR
multichannel estimation.

The package computes the Fisher information matrices of the deterministic
and Gaussian symbol models of a blind FIR multichannel, classifies their
singularities from the channel's zero structure, and evaluates constrained
Cramer-Rao bounds (including the minimal, pseudo-inverse bound). Every
analytic object is validated against an independent numerical oracle in the
test suite; a Monte Carlo score-covariance estimator and MSE-vs-bound
experiments live in :mod:`blindcrb.simulate`.
"""

__version__ = "0.1.0"

from .channel import (
    COMPLEX,
    REAL,
    Channel,
    SymbolBurst,
    ReducibleDecomposition,
    DecompositionError,
    block_toeplitz,
    toeplitz_op,
    commutativity_op,
    realify_channel,
    subchannel_zeros,
    common_zeros,
    reducible_decompose,
    tc_matrix,
    ti_matrix,
    conjugate_reciprocal_pairs,
    channel_from_json,
    channel_to_json,
    load_channel,
    example_channel,
)
from .crb import (
    ConstraintSet,
    CrbResult,
    constrained_crb,
    constrained_crb_projector_form,
    gaussian_blind_crb,
    known_coeff_constraint,
    linear_constraint,
    minimal_crb,
    norm_constraint,
    phase_constraint,
    reducible_constraints,
)
from .fim import (
    DETERMINISTIC,
    GAUSSIAN,
    FimResult,
    GaussianModelConfig,
    MomentStack,
    ParamBlock,
    ParamLayout,
    SingularityReport,
    analyze_singularities,
    deterministic_fim,
    deterministic_reduced_fim,
    gaussian_fim_complex,
    gaussian_fim_generic,
    gaussian_fim_real,
    schur_reduce,
)
from .identifiability import (
    IdentifiabilityVerdict,
    deterministic_verdict,
    gaussian_verdict,
    verdict_vs_fim,
)
from .linalg import (
    SingularFimError,
    null_space_basis,
    projector,
    complement_projector,
    pseudo_inverse,
    realify_fim,
    realify_vector,
    real_complex_map,
    trace_crb_complex,
)
from .simulate import (
    ExperimentConfig,
    McFimEstimate,
    adjust_estimate,
    alternating_ls_estimator,
    mse_vs_crb_experiment,
    score_covariance_fim,
    simulate_burst,
    stream_rng,
)
