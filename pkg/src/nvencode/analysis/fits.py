"""Spectral and time-trace fitters plus physical parameter extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ..errors import InitializationError, RankError
from ..spin_physics import NVParams
from .optimize import levenberg_marquardt

# two-sided 67 % coverage of a normal variate
CONFIDENCE = 0.67
Z_CONF = float(norm.ppf(0.5 + CONFIDENCE / 2))


@dataclass
class FitResult:
    """Best-fit parameters with 67 % confidence half-widths."""

    params: dict
    errors: dict
    residual_norm: float
    converged: bool
    iterations: int
    reliable: bool = True
    covariance: np.ndarray | None = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if not self.converged:
            self.reliable = False

    def __getitem__(self, name):
        return self.params[name]

    def series(self, prefix: str) -> np.ndarray:
        """Values of ``prefix_0, prefix_1, ...`` in index order."""
        keys = sorted((k for k in self.params if k.startswith(prefix + "_")),
                      key=lambda k: int(k.rsplit("_", 1)[1]))
        return np.array([self.params[k] for k in keys])

    def series_errors(self, prefix: str) -> np.ndarray:
        keys = sorted((k for k in self.errors if k.startswith(prefix + "_")),
                      key=lambda k: int(k.rsplit("_", 1)[1]))
        return np.array([self.errors[k] for k in keys])

    def to_dict(self) -> dict:
        return {
            "params": {k: float(v) for k, v in self.params.items()},
            "confidence_67": {k: float(v) for k, v in self.errors.items()},
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "reliable": bool(self.reliable),
            "iterations": int(self.iterations),
            "notes": list(self.notes),
        }


def _covariance(jac: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    n, m = jac.shape
    dof = max(n - m, 1)
    s2 = float(residuals @ residuals) / dof
    try:
        return s2 * np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return s2 * np.linalg.pinv(jac.T @ jac)


def _package(names, res, extra_reliable=True, notes=()) -> FitResult:
    cov = _covariance(res.jacobian, res.residuals)
    half = Z_CONF * np.sqrt(np.clip(np.diag(cov), 0, None))
    return FitResult(
        dict(zip(names, res.x.tolist())),
        dict(zip(names, half.tolist())),
        float(np.linalg.norm(res.residuals)),
        bool(res.converged),
        int(res.iterations),
        bool(extra_reliable),
        cov,
        list(notes),
    )


# ------------------------------------------------------------- Lorentzians

def lorentzian_sum(f, centers, fwhms, amplitudes, baseline=0.0):
    f = np.asarray(f, dtype=float)[:, None]
    hw = np.asarray(fwhms, dtype=float)[None] / 2
    return baseline + (np.asarray(amplitudes)[None] * hw**2 / ((f - np.asarray(centers)[None]) ** 2 + hw**2)).sum(1)


def moving_average(y, width: int):
    width = max(int(width), 1)
    if width == 1:
        return np.asarray(y, dtype=float).copy()
    kernel = np.ones(width) / width
    pad = width // 2
    yp = np.pad(np.asarray(y, dtype=float), (pad, width - 1 - pad), mode="edge")
    return np.convolve(yp, kernel, mode="valid")


def pick_peaks(x, y, n_peaks: int, smooth_width: float, min_separation: float | None = None):
    """Indices of the ``n_peaks`` largest local maxima of the smoothed signal."""
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    ys = moving_average(y, round(smooth_width / dx))
    noise = 1.4826 * np.median(np.abs(np.diff(np.asarray(y, dtype=float)))) / np.sqrt(2)
    floor = np.percentile(ys, 10) + 3 * max(noise / np.sqrt(max(smooth_width / dx, 1)), 1e-15)
    cand = [i for i in range(1, len(ys) - 1) if ys[i] > ys[i - 1] and ys[i] >= ys[i + 1] and ys[i] > floor]
    # strongest first, ties by lower frequency
    cand.sort(key=lambda i: (-ys[i], x[i]))
    sep = smooth_width if min_separation is None else min_separation
    chosen = []
    for i in cand:
        if all(abs(x[i] - x[j]) >= sep for j in chosen):
            chosen.append(i)
        if len(chosen) == n_peaks:
            break
    return sorted(chosen), ys


def fit_multi_lorentzian(spectrum, n_peaks: int, expected_fwhm: float = 10.0,
                         max_iter: int = 200) -> FitResult:
    """Sum of ``n_peaks`` Lorentzians on a constant baseline.

    Parameters are ``center_i``, ``fwhm_i``, ``amplitude_i`` (centres sorted
    ascending) and ``baseline``.
    """
    if n_peaks < 1:
        raise ValueError("n_peaks must be at least 1")
    f = np.asarray(spectrum.frequency, dtype=float)
    y = np.asarray(spectrum.contrast, dtype=float)
    if len(f) < 4 * n_peaks + 2:
        raise ValueError("spectrum too short for the requested number of peaks")
    idx, ys = pick_peaks(f, y, n_peaks, expected_fwhm / 2, min_separation=expected_fwhm)
    if len(idx) < n_peaks:
        raise InitializationError(f"found {len(idx)} candidate peaks, need {n_peaks}")
    base0 = float(np.percentile(ys, 10))
    c0 = f[idx]
    w0 = np.full(n_peaks, expected_fwhm)
    a0 = np.maximum(ys[idx] - base0, 1e-12)

    def resid(p):
        c, w, a = p[:n_peaks], p[n_peaks:2 * n_peaks], p[2 * n_peaks:3 * n_peaks]
        return lorentzian_sum(f, c, w, a, p[-1]) - y

    res = levenberg_marquardt(resid, np.concatenate([c0, w0, a0, [base0]]), max_iter=max_iter)
    p = res.x
    p[n_peaks:2 * n_peaks] = np.abs(p[n_peaks:2 * n_peaks])
    order = np.argsort(p[:n_peaks])
    perm = np.concatenate([order, n_peaks + order, 2 * n_peaks + order, [3 * n_peaks]])
    res.x = p[perm]
    res.jacobian = res.jacobian[:, perm]
    names = ([f"center_{i}" for i in range(n_peaks)] + [f"fwhm_{i}" for i in range(n_peaks)]
             + [f"amplitude_{i}" for i in range(n_peaks)] + ["baseline"])
    return _package(names, res)


# ------------------------------------------------------------- sinusoids

def damped_sinusoid(t, frequency, amplitude, phase, decay_rate, offset):
    t = np.asarray(t, dtype=float)
    return offset + amplitude * np.exp(-decay_rate * t) * np.cos(2 * np.pi * frequency * t + phase)


def dominant_frequency(t, y, pad: int = 8) -> tuple[float, float, float]:
    """Frequency, amplitude and phase of the largest non-DC bin of a padded DFT."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float) - np.mean(y)
    n = len(t)
    dt = (t[-1] - t[0]) / (n - 1)
    spec = np.fft.rfft(y, pad * n)
    freqs = np.fft.rfftfreq(pad * n, dt)
    mag = np.abs(spec)
    mag[0] = 0
    k = int(np.argmax(mag))
    amp = 2 * mag[k] / n
    phase = float(np.angle(spec[k] * np.exp(2j * np.pi * freqs[k] * t[0])))
    return float(freqs[k]), float(amp), phase


def fit_damped_sinusoid(trace, max_iter: int = 200) -> FitResult:
    """offset + amplitude exp(-t/decay) cos(2 pi f t + phase).

    The result carries ``decay_rate`` (1/us); ``decay`` is its inverse.
    """
    t = np.asarray(trace.time, dtype=float)
    y = np.asarray(trace.signal, dtype=float)
    if len(t) < 8:
        raise ValueError("need at least 8 points")
    offset0 = float(np.mean(y))
    spread = float(np.std(y))
    span = t[-1] - t[0]
    if spread < 1e-12 * max(1.0, abs(offset0)):
        names = ["frequency", "amplitude", "phase", "decay_rate", "offset"]
        return FitResult(dict(zip(names, [0.0, 0.0, 0.0, 0.0, offset0])), dict.fromkeys(names, 0.0),
                         0.0, True, 0, reliable=False, notes=["constant trace: frequency undefined"])
    f0, a0, ph0 = dominant_frequency(t, y)
    notes = []
    reliable = True
    if f0 * span < 1.0:
        reliable = False
        notes.append("trace shorter than one period of the initial frequency")

    def resid(p):
        return damped_sinusoid(t, *p) - y

    res = levenberg_marquardt(resid, np.array([f0, a0, ph0, 0.1 / span, offset0]), max_iter=max_iter)
    p = res.x
    if p[1] < 0:  # fold sign into the phase
        p[1] = -p[1]
        p[2] += np.pi
        res.jacobian[:, 1] *= -1
    p[2] = (p[2] + np.pi) % (2 * np.pi) - np.pi
    out = _package(["frequency", "amplitude", "phase", "decay_rate", "offset"], res, reliable, notes)
    rate = out.params["decay_rate"]
    out.params["decay"] = 1.0 / rate if rate > 0 else np.inf
    return out


def fit_echo_modulation(trace, f_a: float = 3.0, stretch: float = 1.0, fit_stretch: bool = False,
                        f_grid=None, max_iter: int = 300) -> FitResult:
    """Fit the 15N-modulated echo model; returns ``f_nmr`` in MHz.

    The hyperfine frequency ``f_a`` is held fixed.  ``f_nmr`` and ``t2`` are
    initialised by a grid search with amplitude and depth solved linearly.
    """
    t = np.asarray(trace.time, dtype=float)
    y = np.asarray(trace.signal, dtype=float)
    if len(t) < 8:
        raise ValueError("need at least 8 points")
    pos = y > 0.05 * max(y.max(), 1e-12)
    slope = np.polyfit(t[pos], np.log(y[pos]), 1)[0] if pos.sum() >= 2 else -0.25
    t2_0 = -1.0 / slope if slope < 0 else 10 * (t[-1] - t[0])
    if f_grid is None:
        nyq = 0.5 / np.median(np.diff(t))
        f_grid = np.linspace(0.02, min(2.0, 0.9 * nyq), 400)
    f_grid = np.asarray(f_grid, dtype=float)
    # y = amp env - (amp depth) env mod is linear in (amp, amp depth); solve
    # the 2x2 normal equations for every (t2, f_nmr) pair on a coarse grid
    mods = np.sin(np.pi * f_a * t)[None] ** 2 * np.sin(np.pi * f_grid[:, None] * t[None]) ** 2
    best = (np.inf, f_grid[0], 0.0, 1.0, t2_0)
    for t2c in t2_0 * np.geomspace(0.5, 2.0, 25):
        env = np.exp(-((t / t2c) ** stretch))
        u = env[None] * mods
        s11, s12, s22 = env @ env, -(u @ env), np.einsum("ij,ij->i", u, u)
        b1, b2 = env @ y, -(u @ y)
        det = s11 * s22 - s12**2
        ok = det > 1e-15 * s11 * np.maximum(s22, 1e-300)
        det = np.where(ok, det, 1.0)
        c1 = np.where(ok, (s22 * b1 - s12 * b2) / det, b1 / s11)
        c2 = np.where(ok, (s11 * b2 - s12 * b1) / det, 0.0)
        ssr = np.sum((c1[:, None] * env[None] - c2[:, None] * u - y[None]) ** 2, axis=1)
        i = int(np.argmin(ssr))
        if ssr[i] < best[0]:
            amp = float(c1[i])
            depth = c2[i] / amp if amp != 0 else 0.0
            best = (float(ssr[i]), float(f_grid[i]), float(np.clip(depth, 0.0, 1.0)), amp, float(t2c))
    _, fb0, depth0, amp0, t2_0 = best

    def model(p):
        amp, t2, depth, fb = p[:4]
        p_ = p[4] if fit_stretch else stretch
        env = np.exp(-((t / abs(t2)) ** abs(p_)))
        mod = np.sin(np.pi * f_a * t) ** 2 * np.sin(np.pi * fb * t) ** 2
        return amp * env * (1 - depth * mod)

    x0 = [amp0, t2_0, depth0 if depth0 > 0 else 0.3, fb0] + ([stretch] if fit_stretch else [])
    res = levenberg_marquardt(lambda p: model(p) - y, np.array(x0, dtype=float), max_iter=max_iter)
    res.x[1] = abs(res.x[1])
    names = ["amplitude", "t2", "depth", "f_nmr"] + (["stretch"] if fit_stretch else [])
    return _package(names, res)


# ------------------------------------------------------- parameter lines

def gradient_from_splitting(delta_f: float, delta_x: float, params: NVParams = NVParams()) -> float:
    """Field gradient (G/nm) from a resonance splitting (MHz) across a distance (nm)."""
    if not delta_x > 0:
        raise ValueError("delta_x must be positive")
    return delta_f / (params.gamma_e * delta_x)


def _slope_through_origin(x, y) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sxx = float(x @ x)
    slope = float(x @ y) / sxx
    r = y - slope * x
    dof = max(len(x) - 1, 1)
    se = np.sqrt(float(r @ r) / dof / sxx)
    return slope, Z_CONF * se


def calibrate_gradient_per_current(points) -> FitResult:
    """Least-squares slope through the origin of gradient (G/nm) versus current (mA).

    The slope is reported per ampere.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    currents = pts[:, 0] * 1e-3
    if len(np.unique(currents)) < 2:
        raise RankError("calibration needs at least two distinct currents")
    slope, half = _slope_through_origin(currents, pts[:, 1])
    resid = pts[:, 1] - slope * currents
    return FitResult({"slope": slope}, {"slope": half}, float(np.linalg.norm(resid)), True, 1)


def fit_gyromagnetic_ratio(points, enhancement: float = 14.0, through_origin: bool = True) -> FitResult:
    """Nuclear gyromagnetic ratio (kHz/G) from (B_perp G, f_NMR MHz) pairs."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    b, f = pts[:, 0], pts[:, 1]
    if len(np.unique(b)) < 2 or not np.any(b != 0):
        raise RankError("need at least two distinct, nonzero transverse fields")
    if through_origin:
        slope, half = _slope_through_origin(b, f)
        resid = f - slope * b
        params = {"gamma_n": slope * 1e3 / enhancement}
        errors = {"gamma_n": half * 1e3 / enhancement}
    else:
        X = np.stack([b, np.ones_like(b)], axis=1)
        coef, *_ = np.linalg.lstsq(X, f, rcond=None)
        resid = f - X @ coef
        dof = max(len(b) - 2, 1)
        cov = float(resid @ resid) / dof * np.linalg.inv(X.T @ X)
        params = {"gamma_n": coef[0] * 1e3 / enhancement, "intercept": coef[1]}
        errors = {"gamma_n": Z_CONF * np.sqrt(cov[0, 0]) * 1e3 / enhancement,
                  "intercept": Z_CONF * np.sqrt(cov[1, 1])}
    return FitResult(params, errors, float(np.linalg.norm(resid)), True, 1)
