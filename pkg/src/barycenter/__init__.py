"""Exponentially weighted barycenters for derivative-free optimization."""
from .analysis import (
    NoisePrediction,
    StepMoments,
    f_and_fbar,
    finite_difference_gradient,
    finite_difference_hessian,
    interference_factor_sq,
    noise_prediction,
    noise_prediction_from_arrays,
    predicted_mean_step,
    predicted_step_variance,
    predicted_weight_discount,
    quotient_moments,
)
from .core import (
    EvalRecord,
    Exponent,
    ScaledComplexWeight,
    batch_barycenter,
    forgetting_batch_barycenter,
    make_record,
    weight_of,
)
from .errors import (
    BarycenterError,
    ConfigError,
    DegenerateMass,
    EmptyAccumulator,
    EmptyBatch,
    ExponentMismatch,
    InvalidForgetting,
    InvalidValue,
    NotFound,
    OracleError,
    ZeroDenominator,
)
from .experiment import BoxShift, shift_box
from .oracles import (
    CORPUS_NAMES,
    NoisyOracle,
    Oracle,
    PartialSumOracle,
    corpus,
    evaluate_noisy,
    evaluate_partial,
    make_oracle,
)
from .recursive import (
    Accumulator,
    absorb,
    absorb_forgetting,
    merge,
    merge_all,
    readout,
    reschedule_nu,
)
from .rng import stream
from .strategies import (
    CuriosityDistribution,
    RunRecord,
    SearchConfig,
    StepRow,
    next_query,
    run_parallel,
    run_search,
    sample_curiosity,
    sample_mixture,
)

__version__ = "0.1.0"
