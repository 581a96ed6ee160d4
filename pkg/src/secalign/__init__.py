"""Reference-frame alignment from shared singlet pairs."""
from .errors import (
    AccuracyError,
    DegenerateFrameError,
    InvalidArgumentError,
    InvalidStateError,
    ParseError,
    RetryExhaustedError,
    SecalignError,
    TranscriptError,
)
from .estimation import (
    CorrelationStat,
    DirectionEstimate,
    Frame,
    align_frame,
    correlation,
    estimate_2d,
    estimate_method_a,
    estimate_method_b,
    fidelity,
    likelihood,
    posterior_density,
)
from .fidelity import (
    TABLE_COLUMNS,
    AdmissibilityReport,
    FidelityPoint,
    admissible_probability,
    chebyshev_inadmissible_bound,
    fidelity_2d_exact,
    fidelity_3d_method_a,
    fidelity_3d_method_b,
    fidelity_exact,
    fidelity_monte_carlo,
    optimal_fidelity_baseline,
)
from .quantum import (
    Direction,
    JointDistribution,
    OutcomeRecord,
    PureState,
    ghz_state,
    joint_distribution,
    marginal_pair_distribution,
    sample_record,
    singlet_state,
)

__version__ = "0.1.0"
