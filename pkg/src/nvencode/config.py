"""JSON run configuration with range checking and a defaults preset."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .array_model import generate_array, generate_lattice
from .coil_field import CoilGeometry, CoilLimits, preset_geometry
from .errors import ConfigParseError, ConfigRangeError, MissingInputError
from .sequence_engine import DEFAULT_RABI_PROFILE, ExperimentConfig
from .spin_physics import NVParams

PRESET = {
    "coil": {
        "inner_half_spacing": 2900.0,
        "wire_height": 500.0,
        "return_offset": 20000.0,
        "loop_length": 100000.0,
        "segments": None,
    },
    "array": {
        "site_count": 4,
        "site_pitch": 100.0,
        "aperture_diameter": 60.0,
        "mean_nvs_per_site": 3.0,
        "placement": "1d",
        "depth": 20.0,
        "t2_by_site": [3.8, 4.6, 1.8, 3.8],
        "t2_default": 4.5,
        "t2_star": 0.58,
        "t1": 1.0,
        "contrast": 0.005,
        "t2_spread": 0.0,
        "nv_polar_deg": 0.0,
        "nv_azimuth_deg": 0.0,
    },
    "nv_params": {
        "zero_field_splitting": 2870.0,
        "gamma_e": 2.8,
        "gamma_n": 0.43,
        "hyperfine": 3.0,
        "enhancement_factor": 14.0,
    },
    "experiment": {
        "bias_field": 128.0,
        "coil_current": 250.0,
        "mw_frequency": None,
        "target_site": "A",
        "rabi_profile": dict(DEFAULT_RABI_PROFILE),
        "photons_per_point": 1e7,
        "seed": 13,
        "power_broadening": 6.0,
        "background_contrast": 0.0,
        "nmr_depth": 0.5,
        "echo_stretch": 1.0,
        "k_convention": "waveform",
        "dephasing_wait": None,
        "gradient_2d": 0.1,
        "rabi_2d": 5.0,
    },
    "limits": {
        "cooling_mode": "air",
        "max_current": None,  # None: 700 mA air, 1400 mA water
        "heat_coefficient": None,
        "rise_time": 400.0,
    },
    "esr": {"freq_min": 3100.0, "freq_max": 3340.0, "points": 601, "n_peaks": 4, "expected_fwhm": 10.0},
    "rabi": {"t_max": 1.5, "points": 151},
    "echo": {"tau_max": 6.0, "points": 301, "site": "C"},
    "fourier": {"tau": 0.9, "points": 512, "k_max": 0.021, "site": None, "zero_pad": 8,
                "expected_sites": 4},
    "select2d": {"rows": 3, "cols": 3, "pitch": 100.0, "target": [1, 1]},
    "calibrate": {"current_min": 50.0, "current_max": 300.0, "points": 6},
    "plan": {"L": 1000.0, "D": 100.0, "omega": 5.0, "cooling_mode": None,
             "fidelity_floor": 36.0 / 37.0, "slope_ref": 0.45, "length_ref": 1000.0,
             "current_ref": 250.0, "thermal_cap": 40.0, "sweep_min": 1000.0, "sweep_max": 2400.0,
             "points": 15},
}

_NULLABLE = {("coil", "segments"), ("experiment", "mw_frequency"), ("experiment", "dephasing_wait"),
             ("limits", "max_current"), ("limits", "heat_coefficient"), ("echo", "site"),
             ("fourier", "site"), ("plan", "cooling_mode")}


@dataclass
class ValidatedConfig:
    experiment: ExperimentConfig
    geometry: CoilGeometry
    limits: CoilLimits
    nv_params: NVParams
    sections: dict  # fully resolved document

    @property
    def digest(self) -> str:
        return config_digest(self.sections)

    def array_spec(self) -> dict:
        return dict(self.sections["array"])

    def nv_axis(self) -> tuple:
        a = self.sections["array"]
        th, ph = math.radians(a["nv_polar_deg"]), math.radians(a["nv_azimuth_deg"])
        return (math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th))

    def build_array(self, seed: int | None = None, **overrides):
        a = self.sections["array"]
        kw = dict(site_count=a["site_count"], site_pitch=a["site_pitch"],
                  aperture_diameter=a["aperture_diameter"], mean_nvs_per_site=a["mean_nvs_per_site"],
                  seed=self.experiment.seed if seed is None else seed, placement=a["placement"],
                  depth=a["depth"], t2_by_site=tuple(a["t2_by_site"]), t2_default=a["t2_default"],
                  t2_star=a["t2_star"], t1=a["t1"], contrast=a["contrast"], t2_spread=a["t2_spread"],
                  nv_axis=self.nv_axis())
        kw.update(overrides)
        return generate_array(**kw)

    def build_lattice(self, seed: int | None = None):
        a, s = self.sections["array"], self.sections["select2d"]
        return generate_lattice(s["rows"], s["cols"], s["pitch"], a["aperture_diameter"],
                                a["mean_nvs_per_site"], self.experiment.seed if seed is None else seed,
                                t2_star=a["t2_star"], t1=a["t1"], contrast=a["contrast"],
                                depth=a["depth"], nv_axis=self.nv_axis())


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_digest(doc: dict) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def _merge(user: dict) -> dict:
    if not isinstance(user, dict):
        raise ConfigParseError("top level of the config must be a JSON object")
    out = copy.deepcopy(PRESET)
    for section, body in user.items():
        if section not in PRESET:
            raise ConfigParseError(f"unknown section {section!r}")
        if not isinstance(body, dict):
            raise ConfigParseError(f"section {section!r} must be an object")
        for key, val in body.items():
            if key not in PRESET[section]:
                raise ConfigParseError(f"unknown field {section}.{key}")
            default = PRESET[section][key]
            if val is None:
                if (section, key) not in _NULLABLE:
                    raise ConfigParseError(f"{section}.{key} may not be null")
            elif default is None and isinstance(val, int) and not isinstance(val, bool):
                val = float(val)  # nullable numeric fields are all floats
            elif isinstance(default, bool) != isinstance(val, bool):
                raise ConfigParseError(f"{section}.{key} has the wrong type")
            elif isinstance(default, (int, float)) and not isinstance(default, bool):
                if not isinstance(val, (int, float)):
                    raise ConfigParseError(f"{section}.{key} must be a number")
                if isinstance(default, float):
                    val = float(val)  # 200 and 200.0 must digest alike
            elif isinstance(default, str) and not isinstance(val, str):
                raise ConfigParseError(f"{section}.{key} must be a string")
            elif isinstance(default, (list, dict)) and not isinstance(val, type(default)):
                raise ConfigParseError(f"{section}.{key} must be a {type(default).__name__}")
            out[section][key] = val
    return out


def _require(cond: bool, field: str, msg: str):
    if not cond:
        raise ConfigRangeError(field, msg)


def _check_ranges(doc: dict, limits: CoilLimits):
    e, a, lim = doc["experiment"], doc["array"], doc["limits"]
    _require(e["coil_current"] >= 0, "coil_current", "current must be non-negative")
    _require(e["coil_current"] <= limits.max_current, "coil_current",
             f"{e['coil_current']} mA exceeds the {limits.cooling_mode}-cooled limit of "
             f"{limits.max_current:g} mA (about 40 K of heating)")
    _require(e["bias_field"] >= 0, "bias_field", "bias field must be non-negative")
    _require(e["photons_per_point"] >= 1, "photons_per_point", "must be at least 1")
    _require(isinstance(e["seed"], int) and e["seed"] >= 0, "seed", "must be a non-negative integer")
    _require(e["power_broadening"] >= 0, "power_broadening", "must be non-negative")
    _require(0 <= e["nmr_depth"] <= 1, "nmr_depth", "must lie in [0, 1]")
    _require(e["echo_stretch"] > 0, "echo_stretch", "must be positive")
    _require(e["k_convention"] in ("waveform", "nominal"), "k_convention", "waveform or nominal")
    _require(e["dephasing_wait"] is None or e["dephasing_wait"] >= 0, "dephasing_wait", "must be >= 0")
    _require(all(v > 0 for v in e["rabi_profile"].values()), "rabi_profile", "Rabi frequencies must be positive")
    _require(a["site_pitch"] > 0, "site_pitch", "pitch must be positive")
    _require(a["aperture_diameter"] > 0, "aperture_diameter", "must be positive")
    _require(isinstance(a["site_count"], int) and a["site_count"] >= 1, "site_count", "must be an integer >= 1")
    _require(a["mean_nvs_per_site"] >= 0, "mean_nvs_per_site", "must be non-negative")
    _require(a["placement"] in ("1d", "disc", "center"), "placement", "1d, disc or center")
    _require(0 < a["contrast"] <= 0.05, "contrast", "must lie in (0, 0.05]")
    _require(min(a["t2_star"], a["t1"], a["t2_default"], *a["t2_by_site"]) > 0, "t2", "coherence times must be positive")
    _require(lim["cooling_mode"] in ("air", "water"), "cooling_mode", "air or water")
    _require(lim["rise_time"] > 0, "rise_time", "must be positive")
    for k, v in doc["nv_params"].items():
        _require(v > 0, k, "must be positive")
    s = doc["esr"]
    _require(s["freq_max"] > s["freq_min"], "freq_max", "must exceed freq_min")
    _require(s["points"] >= 4 * s["n_peaks"] + 2, "esr.points", "too few points for the peak count")
    _require(doc["rabi"]["t_max"] > 0 and doc["rabi"]["points"] >= 8, "rabi", "t_max > 0 and points >= 8")
    _require(doc["echo"]["tau_max"] > 0 and doc["echo"]["points"] >= 8, "echo", "tau_max > 0 and points >= 8")
    f = doc["fourier"]
    _require(f["tau"] > 0, "fourier.tau", "must be positive")
    _require(f["points"] >= 8, "fourier.points", "need at least 8 k points")
    _require(f["k_max"] > 0, "fourier.k_max", "must be positive")
    sel = doc["select2d"]
    _require(sel["rows"] >= 1 and sel["cols"] >= 1 and sel["pitch"] > 0, "select2d", "invalid lattice")
    c = doc["calibrate"]
    _require(0 <= c["current_min"] < c["current_max"] <= limits.max_current, "calibrate.current_max",
             f"sweep must stay within [0, {limits.max_current:g}] mA")
    p = doc["plan"]
    _require(p["L"] >= p["D"] > 0, "plan.L", "need L >= D > 0")
    _require(p["omega"] > 0, "plan.omega", "must be positive")
    _require(0 <= p["fidelity_floor"] < 1, "plan.fidelity_floor", "must lie in [0, 1)")
    _require(p["sweep_max"] >= p["sweep_min"] >= p["D"], "plan.sweep_min", "sweep must satisfy L >= D")


def resolve(user: dict) -> ValidatedConfig:
    doc = _merge(user)
    lim = doc["limits"]
    try:
        over = {k: lim[k] for k in ("max_current", "heat_coefficient") if lim[k] is not None}
        limits = CoilLimits.for_cooling(lim["cooling_mode"], rise_time=lim["rise_time"], **over)
    except ValueError as exc:
        raise ConfigRangeError("limits", str(exc)) from exc
    _check_ranges(doc, limits)
    c = doc["coil"]
    if c["segments"] is not None:
        try:
            geometry = CoilGeometry.from_dict({"segments": c["segments"]})
        except (ValueError, TypeError) as exc:
            raise ConfigRangeError("coil.segments", str(exc)) from exc
    else:
        _require(c["inner_half_spacing"] > 0 and c["loop_length"] > 0 and c["return_offset"] > 0,
                 "coil", "loop dimensions must be positive")
        geometry = preset_geometry(c["inner_half_spacing"], c["wire_height"], c["return_offset"],
                                   c["loop_length"])
    params = NVParams(**doc["nv_params"])
    e = dict(doc["experiment"])
    exp = ExperimentConfig(geometry=geometry, nv_params=params, **e)
    return ValidatedConfig(exp, geometry, limits, params, doc)


def validate_config(path=None) -> ValidatedConfig:
    """Read, merge with the preset and range-check a JSON config file.

    ``path=None`` returns the preset itself.
    """
    if path is None:
        return resolve({})
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"config file {p} not found")
    text = p.read_text()
    if not text.strip():
        return resolve({})
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{p}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return resolve(user)


def jsonable(obj):
    """Recursively convert numpy scalars/arrays for JSON output."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
