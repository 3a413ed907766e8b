"""Fitting, calibration and planning."""

from .fits import (FitResult, calibrate_gradient_per_current, fit_damped_sinusoid,
                   fit_echo_modulation, fit_gyromagnetic_ratio, fit_multi_lorentzian,
                   gradient_from_splitting)
from .optimize import LeastSquaresResult, levenberg_marquardt
from .planner import PlannerReport, plan_feasibility, planner_sweep

__all__ = [
    "FitResult", "LeastSquaresResult", "PlannerReport", "calibrate_gradient_per_current",
    "fit_damped_sinusoid", "fit_echo_modulation", "fit_gyromagnetic_ratio", "fit_multi_lorentzian",
    "gradient_from_splitting", "levenberg_marquardt", "plan_feasibility", "planner_sweep",
]
