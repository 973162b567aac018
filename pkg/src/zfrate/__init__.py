"""Convergence-rate certificates for gradient-driven vehicles via alpha-IQCs
with Zames-Falb multipliers."""

from .certifier import GRID_TOL, CertificationError, RateEstimate, certify_rate
from .multiplier import MultiplierClass, MultiplierConfig, build_basis, h_eval
from .plants import (
    PlantModel,
    builtin,
    load_plant,
    lpv_vehicle_example,
    nonmin_phase_example,
    quadrotor_surrogate,
    save_plant,
    two_mode_quadrotor,
)
from .psi import SectorBounds, build_P, build_psi
from .sim import (
    FieldSpec,
    FlockSpec,
    Trajectory,
    fit_decay_rate,
    flocking_simulate,
    quadratic_field,
    simulate_closed_loop,
    worst_case_quadratic_rate,
)
from .ss import ReferenceGains, StateSpace, build_vehicle_G

__all__ = [
    "GRID_TOL",
    "CertificationError",
    "RateEstimate",
    "certify_rate",
    "MultiplierClass",
    "MultiplierConfig",
    "build_basis",
    "h_eval",
    "PlantModel",
    "builtin",
    "load_plant",
    "save_plant",
    "lpv_vehicle_example",
    "nonmin_phase_example",
    "quadrotor_surrogate",
    "two_mode_quadrotor",
    "SectorBounds",
    "build_P",
    "build_psi",
    "FieldSpec",
    "FlockSpec",
    "Trajectory",
    "fit_decay_rate",
    "flocking_simulate",
    "quadratic_field",
    "simulate_closed_loop",
    "worst_case_quadratic_rate",
    "ReferenceGains",
    "StateSpace",
    "build_vehicle_G",
]
