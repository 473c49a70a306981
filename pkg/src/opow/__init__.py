"""Phase-space Monte Carlo toolkit for the degenerate optical parametric
oscillator.

Three stochastic representations of the same physics (positive_w,
positive_p, truncated_wigner, plus a deterministic classical reference)
share one trajectory-ensemble driver, and a truncated-Fock-space master
equation provides exact-within-truncation expectation values to check
them against.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    ModelParams,
    PhasePoint,
    classical_drift,
    critical_pump,
    semiclassical_steady_state,
)
from .noise import (  # noqa: F401
    CumulantTable,
    RngStream,
    SigmaParams,
    draw_sigma,
    empirical_cumulants,
    hubbard_stratonovich_check,
    numerical_sigma_params,
    optimal_sigma_params,
    sigma_cumulant_targets,
    standard_complex_gaussian,
)
from .integrators import (  # noqa: F401
    InitialStateSpec,
    StepConfig,
    sample_increments,
    sample_initial,
    step_classical,
    step_positive_p,
    step_positive_w,
    step_truncated_wigner,
)
from .ensemble import (  # noqa: F401
    Accumulator,
    ObservableSeries,
    RunConfig,
    compare_series,
    divergence_scan,
    merge,
    run_ensemble,
)
from .oracle import (  # noqa: F401
    DensityMatrix,
    coherent_density,
    evolve,
    expectation_Xa,
    liouvillian_rhs,
    oracle_series,
)
