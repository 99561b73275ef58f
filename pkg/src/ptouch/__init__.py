"""Sliding-paraboloid touching estimates on uniform grids.

Grid-based machinery for touching continuous functions from below with
paraboloids of prescribed opening: Moreau envelopes and proximal hulls,
touchable/bad-set masks, Pucci extremal operators and supersolution
certification, closed-form constants of the associated measure-decay
estimates, and the experiments that probe the decay exponent empirically.
"""

__version__ = "0.1.0"

from .constants import ConstantsReport, compute_constants, polynomial_decay_check
from .envelope import (
    Paraboloid,
    TouchReport,
    contact_set,
    default_touch_tol,
    infconv_regularize,
    min_touch_opening,
    moreau_lower,
    proximal_hull,
    touchable_mask,
    touchable_masks,
)
from .errors import (
    ConfigError,
    ContractViolation,
    DomainError,
    ParameterError,
    PTouchError,
    SamplingError,
    SolverError,
)
from .experiments import (
    CZResult,
    DecayTable,
    ExperimentReport,
    IterationTable,
    Status,
    calibrate_seed_scale,
    cz_decompose,
    derive_surrogate,
    fit_exponent,
    iterate_decay,
    measure_bad_set,
    rescale,
    verify_localization,
    verify_measure_lemma,
    verify_strong_measure_lemma,
    verify_touching,
)
from .generators import (
    BarrierParams,
    CoefficientRecipe,
    StrongSolveResult,
    barrier,
    cone,
    quadratic,
    radial_power,
    strong_supersolution,
)
from .grid import (
    DomainSpec,
    GridFunction,
    GridMask,
    GridSpec,
    grid_over_cube,
    mask_of_domain,
    measure,
    read_pgrid,
    sample,
    write_pgrid,
)
from .pucci import (
    CertificationReport,
    CoefficientField,
    EllipticityParams,
    SymmetricMatrixField,
    discrete_hessian,
    linear_apply,
    pucci_minus,
    pucci_plus,
    radial_spectrum,
    trace_det_check,
    verify_supersolution,
)
