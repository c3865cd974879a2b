"""Gaussian-moment simulation and optimization of QND-assisted Rabi clock interrogation."""

__version__ = "0.1.0"

from .errors import (DerivativeUnstable, InvalidArgument, NumericalDegeneracy, ProtocolInfeasible,
                     QndClockError, QuadratureError, Unidentifiable, WitnessUndefined)
from .gaussian import AtomNumberKind, AtomNumberModel, PhaseSpaceState
from .protocol import (DEFAULT_ETA_GAMMA, CavityModel, MeasurementModel, PhysicalParams, ProtocolSpec,
                       measurement_model, reference_protocol, run_protocol, three_pulse_protocol)
from .estimator import SensitivityCurve, estimate_detuning, mse, mse_at, sensitivity_curve
from .optimizer import (ConstraintKind, ConstraintSet, OptimizationResult, best_operating_detuning,
                        improvement_db, optimize_protocol)
from .allan import LaserNoiseModel, allan_deviation, averaged_mse, averaged_mse_regularized
from .witness import WitnessReport, squeezing_inequality, witness_scan, witness_xi2

__all__ = [
    "DerivativeUnstable", "InvalidArgument", "NumericalDegeneracy", "ProtocolInfeasible",
    "QndClockError", "QuadratureError", "Unidentifiable", "WitnessUndefined",
    "AtomNumberKind", "AtomNumberModel", "PhaseSpaceState",
    "DEFAULT_ETA_GAMMA", "CavityModel", "MeasurementModel", "PhysicalParams", "ProtocolSpec",
    "measurement_model", "reference_protocol", "run_protocol", "three_pulse_protocol",
    "SensitivityCurve", "estimate_detuning", "mse", "mse_at", "sensitivity_curve",
    "ConstraintKind", "ConstraintSet", "OptimizationResult", "best_operating_detuning",
    "improvement_db", "optimize_protocol",
    "LaserNoiseModel", "allan_deviation", "averaged_mse", "averaged_mse_regularized",
    "WitnessReport", "squeezing_inequality", "witness_scan", "witness_xi2",
]
