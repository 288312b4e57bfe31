"""Reduced vehicle fuel-consumption models.

Submodules
----------
simplified        closed-form fuel model and feasible region, bundled parameter sets
semi_principled   instantaneous gear-resolved powertrain model
map_fitting       test-schedule generation and empirical map / constant fitting
reduction         fitting simplified models to any fuel-rate oracle
grid_dump         tabulated black-box oracles and their trilinear reconstruction
drive_cycles      cycle ingestion, trip integration and validation tables
cli               the ``vehicle-energy`` command
"""

from .errors import (
    ConfigurationError,
    ConvergenceError,
    FitError,
    InputError,
    MapDomainError,
    ParseError,
    SingularityError,
    UnsupportedOperationError,
    VehicleEnergyError,
)
from .simplified import (
    Duty,
    Feasibility,
    OperatingPoint,
    SimplifiedModel,
    SimplifiedParams,
    a_max_feasible,
    a_min,
    bundled_vehicles,
    eval_fuel_rate,
    evaluate,
    fuel_cut_boundary,
    load_bundled,
    load_params,
    save_params,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConvergenceError",
    "Duty",
    "Feasibility",
    "FitError",
    "InputError",
    "MapDomainError",
    "OperatingPoint",
    "ParseError",
    "SimplifiedModel",
    "SimplifiedParams",
    "SingularityError",
    "UnsupportedOperationError",
    "VehicleEnergyError",
    "a_max_feasible",
    "a_min",
    "bundled_vehicles",
    "eval_fuel_rate",
    "evaluate",
    "fuel_cut_boundary",
    "load_bundled",
    "load_params",
    "save_params",
]
