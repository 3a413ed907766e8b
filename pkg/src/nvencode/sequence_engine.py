"""Synthetic measurement records for the addressing protocols.

Every sweep point draws its shot noise from its own generator, seeded by
``(seed, protocol tag, point index)``, so results are independent of the
order (or parallelism) in which points are evaluated.
"""

from __future__ import annotations

import csv
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .array_model import NVArray
from .coil_field import CoilGeometry, GradientWaveform, coil_field, effective_gradient, preset_geometry
from .errors import ConfigError, ProtocolError
from .spin_physics import NVParams, decompose_field, esr_frequencies_axial, esr_linewidth, \
    echo_signal_model, nmr_larmor, orientation_axes, rabi_population

DEFAULT_RABI_PROFILE = {"A": 4.4, "B": 4.2, "C": 3.3, "D": 2.7}


@dataclass(frozen=True)
class ExperimentConfig:
    """Run parameters shared by all protocols.

    ``photons_per_point = inf`` switches off shot noise.  When
    ``mw_frequency`` is None, pulsed protocols tune to the upper ESR line of
    ``target_site``.
    """

    bias_field: float = 128.0  # G along nv_axis
    coil_current: float = 250.0  # mA
    mw_frequency: float | None = None  # MHz
    target_site: str = "A"
    rabi_profile: dict = field(default_factory=lambda: dict(DEFAULT_RABI_PROFILE))
    photons_per_point: float = 1e7
    seed: int = 0
    power_broadening: float = 6.0  # MHz, quadrature-added to 1/(pi T2*)
    background_contrast: float = 0.0
    nmr_depth: float = 0.5
    echo_stretch: float = 1.0
    k_convention: str = "waveform"
    dephasing_wait: float | None = None  # us; None means 5 T2*
    gradient_2d: float = 0.1  # G/nm
    rabi_2d: float = 5.0  # MHz
    geometry: CoilGeometry = field(default_factory=preset_geometry)
    nv_params: NVParams = field(default_factory=NVParams)

    def __post_init__(self):
        if self.bias_field < 0:
            raise ValueError("bias_field must be non-negative")
        if not self.photons_per_point >= 1:
            raise ValueError("photons_per_point must be at least 1")
        if self.coil_current < 0:
            raise ValueError("coil_current must be non-negative")
        if self.k_convention not in ("waveform", "nominal"):
            raise ValueError("k_convention must be 'waveform' or 'nominal'")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def noiseless(self) -> bool:
        return math.isinf(self.photons_per_point)


@dataclass(frozen=True)
class Spectrum:
    frequency: np.ndarray
    contrast: np.ndarray
    noise_sigma: np.ndarray
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        if not len(self.frequency) == len(self.contrast) == len(self.noise_sigma):
            raise ValueError("spectrum axes must have equal length")
        if np.any(np.diff(self.frequency) <= 0):
            raise ValueError("frequencies must be strictly increasing")


@dataclass(frozen=True)
class ExperimentTrace:
    time: np.ndarray
    signal: np.ndarray
    noise_sigma: np.ndarray
    components: dict = field(default_factory=dict)
    mw_frequency: float | None = None

    def __post_init__(self):
        if not len(self.time) == len(self.signal) == len(self.noise_sigma):
            raise ValueError("trace axes must have equal length")
        if np.any(np.asarray(self.time) < 0) or np.any(np.diff(self.time) <= 0):
            raise ValueError("time axis must be non-negative and increasing")


@dataclass(frozen=True)
class KSpaceRecord:
    k: np.ndarray  # 1/nm
    signal: np.ndarray
    tau: float  # us
    selected_site: str | None = None
    noise_sigma: np.ndarray | None = None
    k_convention: str = "waveform"
    warnings: tuple = ()

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        k = np.asarray(self.k)
        if np.any(k < 0) or np.any(np.diff(k) <= 0):
            raise ValueError("k axis must be non-negative and increasing")

    @property
    def k_max(self) -> float:
        return float(self.k[-1])


@dataclass(frozen=True)
class SelectionResult:
    polarization: dict  # label -> Bloch z component
    population: dict  # label -> |0> population
    target: str
    success: bool


# ---------------------------------------------------------------- randomness

def point_rng(seed: int, tag: str, index: int) -> np.random.Generator:
    """Independent generator for one sweep point."""
    return np.random.default_rng([int(seed), zlib.crc32(tag.encode()), int(index)])


def sample_readout(expected_contrast: float, photons_per_point: float,
                   rng: np.random.Generator | None) -> float:
    """Shot-noise-limited contrast estimate from reference and signal photon counts."""
    if not 0.0 <= expected_contrast <= 1.0:
        raise ValueError("expected contrast must lie in [0, 1]")
    if not photons_per_point >= 1:
        raise ValueError("photons_per_point must be at least 1")
    if math.isinf(photons_per_point):
        return float(expected_contrast)
    ref = rng.poisson(photons_per_point)
    sig = rng.poisson(photons_per_point * (1.0 - expected_contrast))
    if ref == 0:
        return 0.0
    return 1.0 - sig / ref


def readout_sigma(expected_contrast, photons_per_point: float):
    """Approximate std of ``sample_readout``."""
    c = np.asarray(expected_contrast, dtype=float)
    if math.isinf(photons_per_point):
        return np.zeros_like(c)
    return np.sqrt(((1 - c) + (1 - c) ** 2) / photons_per_point)


def _sweep(fn: Callable[[int], float], n: int, workers: int | None) -> np.ndarray:
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(fn, range(n))), dtype=float)
    return np.array([fn(i) for i in range(n)], dtype=float)


def _noisy(expected: np.ndarray, config: ExperimentConfig, tag: str,
           workers: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Apply readout noise (with background added then removed) to expected contrasts."""
    bg = config.background_contrast
    level = np.clip(expected + bg, 0.0, 1.0)
    n_ph = config.photons_per_point
    if config.noiseless:
        return expected.astype(float).copy(), np.zeros_like(expected, dtype=float)
    vals = _sweep(lambda i: sample_readout(float(level[i]), n_ph, point_rng(config.seed, tag, i)),
                  len(level), workers)
    return vals - bg, readout_sigma(level, n_ph)


# ------------------------------------------------------------------ helpers

def _nv_fields(array: NVArray, config: ExperimentConfig, current: float | None = None,
               orientation_class: int = 0):
    """Table of class NVs with their lab-frame total field and ESR lines."""
    tab = array.nv_table(orientation_class)
    if current is None:
        current = config.coil_current
    lab = array.to_lab(tab["position"])
    if len(lab):
        b = coil_field(config.geometry, current, lab)
    else:
        b = np.zeros((0, 3))
    b_total = b + config.bias_field * np.asarray(array.nv_axis)
    axis = orientation_axes(array.nv_axis)[orientation_class]
    axial, perp = decompose_field(b_total, axis)
    _, coil_perp = decompose_field(b, axis)
    if len(lab):
        f_minus, f_plus = esr_frequencies_axial(axial, perp, config.nv_params)
    else:
        f_minus = f_plus = np.zeros(0)
    tab.update(lab=lab, b=b_total, axial=axial, perp=perp, coil_perp=coil_perp,
               f_minus=f_minus, f_plus=f_plus)
    return tab


def site_resonance(array: NVArray, config: ExperimentConfig, label: str) -> float:
    """Contrast-weighted mean upper ESR line of a site (MHz)."""
    tab = _nv_fields(array, config)
    m = tab["site"] == array.site_index(label)
    if not np.any(m):
        raise ConfigError(f"site {label} has no NVs of the selected orientation")
    return float(np.average(tab["f_plus"][m], weights=tab["contrast"][m]))


def _lorentzian(f, center, fwhm):
    hw = fwhm / 2
    return hw**2 / ((f - center) ** 2 + hw**2)


# ---------------------------------------------------------------- protocols

def esr_expected(array: NVArray, config: ExperimentConfig, frequency) -> tuple[np.ndarray, dict]:
    """Noiseless ESR contrast and its per-site components."""
    f = np.asarray(frequency, dtype=float)
    tab = _nv_fields(array, config)
    total = np.zeros_like(f)
    comps = {lab: np.zeros_like(f) for lab in array.labels}
    for k in range(len(tab["site"])):
        w = esr_linewidth(tab["t2_star"][k], config.power_broadening)
        line = tab["contrast"][k] * (_lorentzian(f, tab["f_plus"][k], w) + _lorentzian(f, tab["f_minus"][k], w))
        comps[array.labels[tab["site"][k]]] += line
    for lab in array.labels:
        total = total + comps[lab]
    return total, comps


def run_cw_esr(array: NVArray, config: ExperimentConfig, freq_range=None, n_points: int = 401,
               workers: int | None = None) -> Spectrum:
    """CW ESR of the selected-orientation NVs under bias plus fixed coil field."""
    if not array.sites:
        raise ValueError("array has no sites")
    if freq_range is None:
        lo = config.nv_params.zero_field_splitting + config.nv_params.gamma_e * config.bias_field
        freq_range = (lo - 120.0, lo + 120.0)
    f0, f1 = freq_range
    if not f1 > f0 or n_points < 2:
        raise ValueError("frequency range must be nonempty")
    f = np.linspace(f0, f1, n_points)
    expected, comps = esr_expected(array, config, f)
    vals, sig = _noisy(expected, config, "esr", workers)
    return Spectrum(f, vals, sig, comps)


def _rabi_for(array: NVArray, config: ExperimentConfig, tab) -> np.ndarray:
    unknown = set(config.rabi_profile) - set(array.labels)
    if unknown:
        raise ConfigError(f"rabi_profile names unknown sites: {sorted(unknown)}")
    missing = [lab for lab in array.labels if lab not in config.rabi_profile]
    if missing:
        raise ConfigError(f"rabi_profile does not cover sites {missing}")
    return np.array([config.rabi_profile[array.labels[s]] for s in tab["site"]], dtype=float)


def run_rabi(array: NVArray, config: ExperimentConfig, durations: Sequence[float],
             workers: int | None = None) -> ExperimentTrace:
    """Square-pulse Rabi trace; signal is the contrast-weighted flipped fraction."""
    t = np.asarray(durations, dtype=float)
    tab = _nv_fields(array, config)
    omega = _rabi_for(array, config, tab)
    f_mw = config.mw_frequency
    if f_mw is None:
        f_mw = site_resonance(array, config, config.target_site)
    c = tab["contrast"]
    c_tot = c.sum()
    if c_tot == 0:
        raise ConfigError("no NVs of the selected orientation")
    pops = rabi_population(omega[:, None], (tab["f_plus"] - f_mw)[:, None], t[None, :])
    comps = {}
    for i, lab in enumerate(array.labels):
        m = tab["site"] == i
        comps[lab] = (c[m] @ pops[m]) / c_tot if np.any(m) else np.zeros_like(t)
    expected = c @ pops
    vals, sig = _noisy(expected, config, "rabi", workers)
    return ExperimentTrace(t, vals / c_tot, sig / c_tot, comps, float(f_mw))


def run_hahn_echo(array: NVArray, config: ExperimentConfig, taus: Sequence[float],
                  site: str | None = None, workers: int | None = None) -> ExperimentTrace:
    """Hahn-echo trace with 15N envelope modulation from the transverse coil field.

    With ``site`` given the MW is taken to address that site alone under the
    DC gradient; otherwise no gradient is applied and all sites contribute.
    """
    t = np.asarray(taus, dtype=float)
    p = config.nv_params
    if site is None:
        tab = _nv_fields(array, config, current=0.0)
        m = np.ones(len(tab["site"]), dtype=bool)
        f_b = np.zeros(len(tab["site"]))
    else:
        if config.coil_current <= 0:
            raise ValueError("site-selective echo needs a nonzero gradient current")
        tab = _nv_fields(array, config)
        m = tab["site"] == array.site_index(site)
        f_b = nmr_larmor(tab["coil_perp"], p)
    c = np.where(m, tab["contrast"], 0.0)
    c_tot = c.sum()
    if c_tot == 0:
        raise ConfigError("no NVs participate in the echo")
    expected = np.zeros_like(t)
    for k in np.flatnonzero(m):
        expected += c[k] * echo_signal_model(t, tab["t2"][k], config.echo_stretch, p.hyperfine,
                                             f_b[k], config.nmr_depth)
    vals, sig = _noisy(expected, config, f"echo:{site}", workers)
    return ExperimentTrace(t, vals / c_tot, sig / c_tot, {"f_nmr": f_b[m]}, config.mw_frequency)


def k_from_amplitude(amplitudes, tau: float, config: ExperimentConfig):
    """k (1/nm) for sinusoidal gradient amplitudes under the configured convention."""
    g = np.asarray(amplitudes, dtype=float)
    gamma = config.nv_params.gamma_e
    if config.k_convention == "nominal":
        return gamma * tau * g
    return gamma * tau * (2 / np.pi) * g


def amplitude_for_k(k, tau: float, config: ExperimentConfig):
    """Inverse of ``k_from_amplitude``."""
    k = np.asarray(k, dtype=float)
    gamma = config.nv_params.gamma_e
    if config.k_convention == "nominal":
        return k / (gamma * tau)
    return k / (gamma * tau * (2 / np.pi))


def fourier_expected(array: NVArray, config: ExperimentConfig, tau: float, g_amplitudes,
                     site: str | None = None) -> tuple[np.ndarray, float]:
    """Noiseless s(k) and the participating contrast total.

    Positions are measured in the array-local frame, relative to site A.
    """
    g = np.asarray(g_amplitudes, dtype=float)
    tab = array.nv_table(0)
    if site is None:
        m = np.ones(len(tab["site"]), dtype=bool)
    else:
        m = tab["site"] == array.site_index(site)
    c = tab["contrast"][m]
    if c.sum() == 0:
        raise ConfigError("no NVs participate in the k-space record")
    x = tab["position"][m, 0] - array.sites[0].center[0]
    geff = np.array([effective_gradient(GradientWaveform("sinusoidal", a, tau), tau) for a in g])
    phase = 2 * np.pi * config.nv_params.gamma_e * tau * geff[:, None] * x[None, :]
    return (np.cos(phase) @ c) / c.sum(), float(c.sum())


def run_fourier_kspace(array: NVArray, config: ExperimentConfig, tau: float,
                       g_amplitudes: Sequence[float], site: str | None = None,
                       workers: int | None = None) -> KSpaceRecord:
    """Phase-encoded echo record s(k) for a list of sinusoidal gradient amplitudes."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    g = np.asarray(g_amplitudes, dtype=float)
    if np.any(g < 0) or np.any(np.diff(g) <= 0):
        raise ValueError("gradient amplitudes must be non-negative and increasing")
    s, c_tot = fourier_expected(array, config, tau, g, site)
    # population picture: readout contrast c_tot (1 + s)/2
    level = c_tot * (1 + s) / 2
    vals, sig = _noisy(level, config, f"fourier:{site}", workers)
    signal = s if config.noiseless else 2 * vals / c_tot - 1
    t2 = np.mean(array.nv_table(0)["t2"]) if array.nv_table(0)["t2"].size else np.inf
    warnings = ("tau exceeds 3 T2: decoherence dominated",) if tau > 3 * t2 else ()
    return KSpaceRecord(k_from_amplitude(g, tau, config), signal, tau, site, 2 * sig / c_tot,
                        config.k_convention, warnings)


def preset_amplitudes(config: ExperimentConfig, n_points: int = 512, k_max: float = 0.021,
                      tau: float = 0.9) -> np.ndarray:
    """Equally spaced amplitudes from 0 reaching ``k_max`` under the configured convention."""
    return amplitude_for_k(np.linspace(0.0, k_max, n_points), tau, config)


# ------------------------------------------------------------- 2D selection

def _rotate(vec: np.ndarray, omega: float, detuning, duration: float) -> np.ndarray:
    """Rotate Bloch vectors (N, 3) about (omega, 0, detuning) by 2 pi Omega_R t."""
    det = np.asarray(detuning, dtype=float)
    om_r = np.sqrt(omega**2 + det**2)
    safe = np.where(om_r > 0, om_r, 1.0)
    n = np.stack([np.full_like(det, omega), np.zeros_like(det), det], axis=1) / safe[:, None]
    ang = 2 * np.pi * om_r * duration
    cos, sin = np.cos(ang)[:, None], np.sin(ang)[:, None]
    dot = np.einsum("ij,ij->i", n, vec)[:, None]
    out = vec * cos + np.cross(n, vec) * sin + n * dot * (1 - cos)
    return np.where((om_r > 0)[:, None], out, vec)


def run_2d_selection(array_2d: NVArray, config: ExperimentConfig, target: tuple[int, int],
                     simultaneous_gradients: bool = False, resolve_nvs: bool = False) -> SelectionResult:
    """Bloch-vector simulation of the two-stage row/column selection.

    Each stage: ideal global pi/2, frequency-selective 3pi/2 under a gradient
    (x for rows, y for columns), then a wait that dephases transverse
    components.  Spins returned to the pole by both stages end polarized.
    By default every site is represented by its centre.
    """
    grid = [s.grid_index for s in array_2d.sites]
    if any(g is None for g in grid):
        raise ProtocolError("2D selection needs a lattice with grid indices")
    rows = 1 + max(g[0] for g in grid)
    cols = 1 + max(g[1] for g in grid)
    if len(set(grid)) != rows * cols or len(grid) != rows * cols:
        raise ProtocolError("site lattice is not rectangular")
    if tuple(target) not in grid:
        raise ProtocolError(f"target {target} outside the lattice")
    if simultaneous_gradients and rows > 1 and cols > 1:
        raise ProtocolError("simultaneous x and y encoding gradients leave row and column degenerate")
    tgt = array_2d.sites[grid.index(tuple(target))]

    if resolve_nvs:
        owners, pos, t2s = [], [], []
        for i, s in enumerate(array_2d.sites):
            for nv in s.selected(0):
                owners.append(i)
                pos.append(nv.position)
                t2s.append(nv.t2_star)
        owners = np.array(owners, dtype=int)
        pos = np.array(pos, dtype=float).reshape(-1, 3)
        t2s = np.array(t2s, dtype=float)
    else:
        owners = np.arange(len(array_2d.sites))
        pos = np.array([s.center for s in array_2d.sites], dtype=float)
        t2s = np.array([min((nv.t2_star for nv in s.nvs), default=0.58) for s in array_2d.sites])

    gamma = config.nv_params.gamma_e
    omega = config.rabi_2d
    grad = config.gradient_2d
    wait = config.dephasing_wait
    vec = np.tile([0.0, 0.0, 1.0], (len(pos), 1))
    for axis in (0, 1):
        # (i) global pi/2 without gradient
        vec = _rotate(vec, omega, np.zeros(len(pos)), 0.25 / omega)
        # (ii) selective 3pi/2 on resonance with the target line
        det = gamma * grad * (pos[:, axis] - tgt.center[axis])
        vec = _rotate(vec, omega, det, 0.75 / omega)
        # (iii) transverse dephasing
        w = 5 * t2s if wait is None else np.full(len(pos), wait)
        vec[:, :2] *= np.exp(-w / t2s)[:, None]

    pol, popn = {}, {}
    for i, s in enumerate(array_2d.sites):
        m = owners == i
        z = float(vec[m, 2].mean()) if np.any(m) else 0.0
        pol[s.label] = z
        popn[s.label] = (1 + z) / 2
    others = [pol[s.label] for s in array_2d.sites if s is not tgt]
    success = pol[tgt.label] > 0.95 and all(z <= 0.5 for z in others)
    return SelectionResult(pol, popn, tgt.label, bool(success))


# ------------------------------------------------------------------ output

def write_series_csv(path, axis_name: str, axis, value_name: str, value, sigma=None) -> Path:
    """Three-column CSV with round-trip float text; headers carry units."""
    path = Path(path)
    sigma = np.zeros(len(axis)) if sigma is None else sigma
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([axis_name, value_name, "noise_sigma"])
        for a, v, s in zip(axis, value, sigma):
            w.writerow([repr(float(a)), repr(float(v)), repr(float(s))])
    return path


def write_spectrum(path, spectrum: Spectrum) -> Path:
    return write_series_csv(path, "frequency_MHz", spectrum.frequency, "contrast", spectrum.contrast,
                            spectrum.noise_sigma)


def write_trace(path, trace: ExperimentTrace) -> Path:
    return write_series_csv(path, "time_us", trace.time, "signal", trace.signal, trace.noise_sigma)


def write_kspace(path, record: KSpaceRecord) -> Path:
    return write_series_csv(path, "k_per_nm", record.k, "signal", record.signal, record.noise_sigma)


def read_series_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(rows[0]))
