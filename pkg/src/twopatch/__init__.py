"""Minimal-time decontamination of a two-patch water resource.

Two perfectly mixed patches of a water resource, coupled by pollutant
diffusion, are cleaned through a side bioreactor whose two pumps return
treated water at the extraction flow rates.  The package implements the
minimal-time feedback synthesis for the reduced two-state model, the full
slow-fast model with the bioreactor resolved, closed-form and simulated
value functions with analytic bounds, competing strategies, and a-posteriori
verification through the maximum principle and the dynamic-programming
equation.
"""

from .dynamics import (
    Control,
    FullParams,
    PhysicalParams,
    ReducedParams,
    SimConfig,
    Trajectory,
    default_horizon,
    full_rhs,
    integrate,
    reduced_rhs,
    to_reduced,
)
from .errors import ContractViolation, InfeasibleSearch, NumericalFailure
from .growth import (
    CustomGrowth,
    DrainTime,
    Monod,
    best_setpoint,
    best_setpoint_grid,
    best_treatment_rate,
    best_treatment_rate_grid,
    best_treatment_rate_prime,
    treatment_rate,
    validate_growth_model,
)
from .pmp import (
    CostatePath,
    ExtremalReport,
    VerifyTolerances,
    costate_path,
    hamiltonian_q,
    hjb_residual_zero_diffusion,
    switching_value,
    switching_value_rate,
    terminal_costate,
    verify_extremal,
)
from .strategies import (
    ConstantSetpoint,
    ConstantZeta,
    CorruptedTwoPump,
    Homogenizing,
    OnePump,
    OptimalTwoPump,
    best_constant_search,
    constant_zeta_control,
    homogenizing_feedback,
    one_pump_feedback,
    optimal_feedback,
    parse_strategy,
    simulate_constant_batch,
)
from .value import (
    ValueGrid,
    capture_concentration_bounds,
    homogenization_rates,
    homogenization_time_bound,
    value_grid,
    value_infinite_diffusion,
    value_simulated,
    value_zero_diffusion,
)

__version__ = "0.1.0"
