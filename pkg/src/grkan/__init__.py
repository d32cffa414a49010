"""Group-wise rational layer with instrumented backward accumulation strategies."""

from .access import (
    AccessCounter,
    AccessReport,
    FlopsConfig,
    flops_grkan,
    flops_kan,
    flops_mlp,
    instrumented_backward,
    params_grkan,
    params_kan,
    params_mlp,
    predict_accesses_blocked,
    predict_accesses_naive,
)
from .backward import (
    COMBINE_ORDERED,
    COMBINE_UNORDERED,
    DEFAULT_BLOCK_SIZE,
    STRATEGY_BLOCKED,
    STRATEGY_NAIVE,
    ExecutionPlan,
    GradBundle,
    backward_blocked,
    backward_naive,
    combine_partials,
    run_backward,
)
from .errors import (
    AccumulationOverflowError,
    ActivationFitError,
    DegenerateAlphaError,
    GridGeometryError,
    GrkanError,
    LayoutMismatchError,
    NonFiniteInputError,
    PartialCoverageError,
    TailNotCoveredError,
)
from .layer import (
    ActivationFit,
    GrKanLayer,
    InitSpec,
    estimate_alpha,
    fit_activation_coeffs,
    init_variance_preserving,
    layer_backward,
    layer_forward,
    load_coeff_preset,
    make_layer,
    save_coeff_preset,
)
from .rational import (
    ActivationTensor,
    ElementGrads,
    GroupLayout,
    GroupRationalParams,
    elementwise_grads,
    eval_rational,
    forward_tensor,
)
from .verification import (
    DESK_ROUNDING_SHAPE,
    FULL_SCALE_ROUNDING_SHAPE,
    FiniteDiffReport,
    RoundingReport,
    SuiteResult,
    finite_diff_check,
    layer_finite_diff_check,
    oracle_backward,
    rounding_experiment,
    run_suite,
)

__version__ = "0.1.0"
