"""Real-space reconstruction of cosine-encoded k-space records."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DetectionError


@dataclass(frozen=True)
class RealSpaceImage:
    position: np.ndarray  # nm
    magnitude: np.ndarray
    resolution: float  # nm
    zero_pad_factor: int
    complex_image: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.asarray(self.magnitude) < 0):
            raise ValueError("magnitude must be non-negative")


@dataclass(frozen=True)
class SitePeak:
    center: float
    fwhm: float
    amplitude: float

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError("fwhm must be positive")


def resolution(k_max: float) -> float:
    """Real-space resolution (nm) of a record reaching ``k_max`` (1/nm)."""
    if not k_max > 0:
        raise ValueError("k_max must be positive")
    return 1.0 / (2.0 * k_max)


def _uniform_step(k: np.ndarray) -> float:
    if len(k) < 8:
        raise ValueError("reconstruction needs at least 8 k points")
    dk = np.diff(k)
    step = float(np.mean(dk))
    if not step > 0 or np.max(np.abs(dk - step)) > 1e-6 * step:
        raise ValueError("k axis must be uniformly spaced")
    return step


def mirror_record(k, s) -> tuple[np.ndarray, np.ndarray]:
    """Extend an even signal to negative k.

    The record must start at k = 0 (the origin is not duplicated) or at
    half a step, so the mirrored axis stays uniform.
    """
    k = np.asarray(k, dtype=float)
    s = np.asarray(s, dtype=float)
    dk = _uniform_step(k)
    if abs(k[0]) <= 1e-9 * dk:
        return np.concatenate([-k[:0:-1], k]), np.concatenate([s[:0:-1], s])
    if abs(k[0] - dk / 2) <= 1e-6 * dk:
        return np.concatenate([-k[::-1], k]), np.concatenate([s[::-1], s])
    raise ValueError("k axis must start at 0 or at half a step for mirroring")


def reconstruct_real_space(record, zero_pad_factor: int = 8) -> RealSpaceImage:
    """|S(x)| with S(x) = (1/N) sum_j s(k_j) exp(-2 pi i k_j x) over the mirrored record."""
    if zero_pad_factor < 1:
        raise ValueError("zero_pad_factor must be at least 1")
    k_full, s_full = mirror_record(record.k, record.signal)
    dk = _uniform_step(np.asarray(record.k, dtype=float))
    n = len(s_full)
    m = zero_pad_factor * n
    spec = np.fft.fftshift(np.fft.fft(s_full, m))
    x = np.fft.fftshift(np.fft.fftfreq(m, d=dk))
    # shift theorem: the DFT index 0 corresponds to k_full[0], not k = 0
    image = np.exp(-2j * np.pi * k_full[0] * x) * spec / n
    k_max = float(np.max(record.k))
    return RealSpaceImage(x, np.abs(image), resolution(k_max), int(zero_pad_factor), image)


def _half_max_width(x: np.ndarray, y: np.ndarray, i: int) -> float:
    half = y[i] / 2
    lo = i
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = i
    while hi < len(y) - 1 and y[hi] > half:
        hi += 1
    if y[lo] > half or y[hi] > half:
        return float("nan")
    xl = x[lo] + (half - y[lo]) * (x[lo + 1] - x[lo]) / (y[lo + 1] - y[lo])
    xr = x[hi - 1] + (half - y[hi - 1]) * (x[hi] - x[hi - 1]) / (y[hi] - y[hi - 1])
    return float(xr - xl)


def noise_floor(magnitude, n_mad: float = 3.0) -> float:
    m = np.asarray(magnitude, dtype=float)
    med = np.median(m)
    return float(med + n_mad * np.median(np.abs(m - med)))


def locate_sites(image: RealSpaceImage, expected_count: int, n_mad: float = 3.0) -> list[SitePeak]:
    """The ``expected_count`` strongest peaks at x >= 0, sorted by position.

    Cosine encoding leaves the sign of x undetermined, so only the
    non-negative half of the (even) image is searched.
    """
    if expected_count < 1:
        raise ValueError("expected_count must be at least 1")
    x = np.asarray(image.position, dtype=float)
    y = np.asarray(image.magnitude, dtype=float)
    floor = noise_floor(y, n_mad)
    tol = 1e-9 * (x[1] - x[0])
    idx = [i for i in range(1, len(y) - 1)
           if x[i] >= -tol and y[i] > y[i - 1] and y[i] >= y[i + 1] and y[i] > floor]
    idx.sort(key=lambda i: (-y[i], x[i]))
    peaks = []
    for i in idx:
        # parabolic refinement of the maximum
        a, b, c = y[i - 1], y[i], y[i + 1]
        den = a - 2 * b + c
        shift = 0.5 * (a - c) / den if den != 0 else 0.0
        center = x[i] + shift * (x[1] - x[0])
        amp = b - 0.25 * (a - c) * shift
        width = _half_max_width(x, y, i)
        if np.isfinite(width) and width > 0:
            peaks.append(SitePeak(float(abs(center)), width, float(amp)))
    if len(peaks) < expected_count:
        raise DetectionError(f"found {len(peaks)} peaks above the noise floor, expected {expected_count}",
                             found=sorted(peaks, key=lambda p: p.center))
    return sorted(peaks[:expected_count], key=lambda p: p.center)


def write_image_csv(path, image: RealSpaceImage) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_nm", "magnitude"])
        for a, v in zip(image.position, image.magnitude):
            w.writerow([repr(float(a)), repr(float(v))])
    return path


def peaks_to_json(peaks) -> str:
    return json.dumps([asdict(p) for p in peaks], indent=1)
