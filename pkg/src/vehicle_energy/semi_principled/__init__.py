"""Instantaneous gear-resolved fuel model built from constants and fitted maps."""

from .demo import demo_vehicle
from .maps import (
    ExtrapolationCounter,
    GearGrid,
    GearLookup,
    Grid1D,
    Grid2D,
    LinearForm,
    TensorPoly,
    TwoFacetSurface,
    interp_map_1d,
    interp_map_2d,
)
from .model import (
    SemiBatch,
    SemiOutput,
    SemiPrincipledModel,
    eval,
    eval_manual,
    evaluate,
    evaluate_any,
    evaluate_manual,
    gear_table,
    wheel_force,
)
from .vehicle import (
    EmpiricalConstants,
    EmpiricalMaps,
    PrincipledConstants,
    PrincipledMaps,
    SemiPrincipledVehicle,
    Transmission,
    Weights,
    is_vehicle_document,
    load_vehicle,
    save_vehicle,
)

__all__ = [
    "EmpiricalConstants",
    "EmpiricalMaps",
    "ExtrapolationCounter",
    "GearGrid",
    "GearLookup",
    "Grid1D",
    "Grid2D",
    "LinearForm",
    "PrincipledConstants",
    "PrincipledMaps",
    "SemiBatch",
    "SemiOutput",
    "SemiPrincipledModel",
    "SemiPrincipledVehicle",
    "TensorPoly",
    "Transmission",
    "TwoFacetSurface",
    "Weights",
    "demo_vehicle",
    "eval",
    "eval_manual",
    "evaluate",
    "evaluate_any",
    "evaluate_manual",
    "gear_table",
    "interp_map_1d",
    "interp_map_2d",
    "is_vehicle_document",
    "load_vehicle",
    "save_vehicle",
    "wheel_force",
]
