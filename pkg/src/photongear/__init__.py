"""Simulation and estimation toolkit for gear-enhanced angle metrology."""

from .probes import (
    BellState,
    ImperfectionModel,
    ProbeSpec,
    Strategy,
    coherent_count_probability,
    detection_probability,
    entangled_joint_probability,
    gear_ratio,
    visibility_from_efficiencies,
)
from .fisher import (
    FITTED_FALLOFF,
    BoundReport,
    HeuristicVisibilityModel,
    c_function,
    cfi_polarization,
    coherent_cfi_numeric,
    crb,
    enhancement_ratio,
    heuristic_effective_factor,
    qfi_single_photon,
    qfi_with_losses,
)
from .sampling import (
    Dataset,
    sample_coherent,
    sample_entangled,
    sample_single_photons,
    subseed,
)
from .bayes import (
    DegeneratePosteriorError,
    EstimationResult,
    PosteriorGrid,
    estimate,
    likelihood,
    posterior,
    posterior_from_counts,
    uncertainty,
)
from .adaptive import (
    DEVICE_CHARGES,
    ProtocolConfig,
    ProtocolResult,
    ResolutionConstraintError,
    StepPlan,
    StepResult,
    adapt_phase,
    candidates_step1,
    check_resolution_constraint,
    circular_error,
    plan_charges,
    prune_candidates,
    run_protocol,
    symmetry_fallback,
)
from .fringes import (
    FitConvergenceError,
    FringeFitResult,
    FringeScan,
    fit_fringe,
    frequency_scan,
)

__version__ = "0.1.0"
