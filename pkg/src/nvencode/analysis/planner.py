"""Dynamic-range versus bandwidth feasibility for a gradient microcoil."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..coil_field import CoilLimits, switching_bandwidth, thermal_rise
from ..spin_physics import NVParams, addressing_fidelity

# a ~30 MHz Zeeman step at 5 MHz Rabi frequency, i.e. 30^2 / (30^2 + 5^2)
DEFAULT_FIDELITY_FLOOR = 36.0 / 37.0
DEFAULT_SLOPE_REF = 0.45  # G nm^-1 A^-1 at the reference wire separation
DEFAULT_LENGTH_REF = 1000.0  # nm
DEFAULT_CURRENT_REF = 250.0  # mA
DEFAULT_THERMAL_CAP = 40.0  # K


@dataclass(frozen=True)
class PlannerReport:
    dynamic_range: float
    bandwidth: float  # MHz
    required_current: float  # mA
    used_current: float  # mA
    gradient: float  # G/nm achieved at used_current
    thermal_rise: float  # K
    fidelity: float
    feasible: bool

    @property
    def DR(self):
        return self.dynamic_range

    @property
    def BW(self):
        return self.bandwidth

    def to_dict(self) -> dict:
        return {k: (float(v) if not isinstance(v, bool) else v) for k, v in asdict(self).items()}


def required_detuning(omega: float, fidelity_floor: float) -> float:
    """Smallest site-to-site detuning (MHz) reaching the fidelity floor."""
    if not 0 <= fidelity_floor < 1:
        raise ValueError("fidelity floor must lie in [0, 1)")
    return omega * np.sqrt(fidelity_floor / (1 - fidelity_floor))


def plan_feasibility(L: float, D: float, omega: float = 5.0, cooling_mode: str = "air",
                     limits: CoilLimits | None = None, params: NVParams = NVParams(), *,
                     fidelity_floor: float = DEFAULT_FIDELITY_FLOOR,
                     slope_ref: float = DEFAULT_SLOPE_REF, length_ref: float = DEFAULT_LENGTH_REF,
                     bandwidth_ref: float | None = None, current_ref: float = DEFAULT_CURRENT_REF,
                     thermal_cap: float = DEFAULT_THERMAL_CAP) -> PlannerReport:
    """Operating point for addressing sites of pitch ``D`` across a coil gap ``L`` (both nm).

    Gradient per current falls as 1/L^2 from ``slope_ref`` at ``length_ref``;
    bandwidth scales as 1/I from ``bandwidth_ref`` (default: the switching
    bandwidth of the limits' rise time) at ``current_ref``.
    """
    if not (L >= D > 0):
        raise ValueError("need L >= D > 0")
    if limits is None:
        limits = CoilLimits.for_cooling(cooling_mode)
    if bandwidth_ref is None:
        bandwidth_ref = switching_bandwidth(limits.rise_time)
    dr = L / D
    delta = required_detuning(omega, fidelity_floor)
    gradient_req = delta / (params.gamma_e * D)
    slope = slope_ref * (length_ref / L) ** 2
    i_req = gradient_req / slope * 1e3
    i_used = min(i_req, limits.max_current)
    gradient = slope * i_used * 1e-3
    fid = addressing_fidelity(omega, gradient, D, params)
    heat = thermal_rise(limits, i_used)
    bw = bandwidth_ref * current_ref / i_used
    feasible = heat <= thermal_cap + 1e-9 and fid >= fidelity_floor - 1e-12
    return PlannerReport(dr, bw, i_req, i_used, gradient, heat, fid, bool(feasible))


def planner_sweep(lengths, D: float, **kw) -> list[PlannerReport]:
    return [plan_feasibility(L, D, **kw) for L in lengths]
