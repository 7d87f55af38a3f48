"""Cable-length kinematic calibration for serial robot arms.

Identifies small deviations of the Denavit-Hartenberg parameters of an
arm from distance-only measurements taken by a draw-wire sensor anchored
at a fixed point.  The search combines beetle antennae search (BAS), a
cubic-interpolated variant (CIBAS), and an optional particle-filter
refinement stage.
"""

from armcal.kinematics import (
    DHTable,
    apply_deviation,
    deviation_size,
    end_position,
    error_jacobian,
    forward_kinematics,
    link_transform,
    read_dh_file,
    write_dh_file,
    zero_deviation,
)
from armcal.objective import (
    MeasurementSet,
    Metrics,
    fitness,
    metrics,
    nominal_cable_length,
    read_dataset,
    residuals,
    write_dataset,
)
from armcal.optimizer import SearchConfig, SearchResult, cubic_fit, cubic_minimum, optimize
from armcal.particle_filter import PFConfig, PFResult, pf_run
from armcal.pipeline import CalibrationConfig, CalibrationReport, calibrate, compare
from armcal.simdata import NoiseModel, ScenarioConfig, demo_table, simulate_measurements

__version__ = "0.1.0"

__all__ = [
    "CalibrationConfig",
    "CalibrationReport",
    "DHTable",
    "MeasurementSet",
    "Metrics",
    "NoiseModel",
    "PFConfig",
    "PFResult",
    "ScenarioConfig",
    "SearchConfig",
    "SearchResult",
    "apply_deviation",
    "calibrate",
    "compare",
    "cubic_fit",
    "cubic_minimum",
    "demo_table",
    "deviation_size",
    "end_position",
    "error_jacobian",
    "fitness",
    "forward_kinematics",
    "link_transform",
    "metrics",
    "nominal_cable_length",
    "optimize",
    "pf_run",
    "read_dataset",
    "read_dh_file",
    "residuals",
    "simulate_measurements",
    "write_dataset",
    "write_dh_file",
    "zero_deviation",
]
