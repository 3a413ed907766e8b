"""Microcoil magnetic fields from straight current filaments.

Lab frame: x is the gradient (encoding) axis, y runs along the wires and
z is the surface normal.  Lengths are nm, currents mA, fields Gauss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import GeometryError, SingularityError

# mu0/(4 pi) in G nm / mA
BIOT_SAVART_PREFACTOR = 1000.0
SINGULAR_DISTANCE = 1.0  # nm

DEFAULT_NV_AXIS = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class CoilGeometry:
    """Polyline wire layout.

    Each segment is ``(start, end, share)`` with ``share`` the signed
    fraction of the drive current flowing from start to end.
    """

    segments: tuple
    nominal_wire_spacing: float = 2500.0
    wire_width: float = 2000.0
    wire_thickness: float = 1000.0

    def __post_init__(self):
        segs = []
        for seg in self.segments:
            start, end, share = seg
            start = np.asarray(start, dtype=float).reshape(3)
            end = np.asarray(end, dtype=float).reshape(3)
            if not np.isfinite(share):
                raise GeometryError("segment current share must be finite")
            if np.linalg.norm(end - start) == 0.0:
                raise GeometryError(f"zero-length segment at {start.tolist()}")
            start.setflags(write=False)
            end.setflags(write=False)
            segs.append((start, end, float(share)))
        object.__setattr__(self, "segments", tuple(segs))

    @property
    def starts(self) -> NDArray:
        return np.array([s[0] for s in self.segments])

    @property
    def ends(self) -> NDArray:
        return np.array([s[1] for s in self.segments])

    @property
    def shares(self) -> NDArray:
        return np.array([s[2] for s in self.segments])

    def to_dict(self) -> dict:
        return {
            "segments": [[s.tolist(), e.tolist(), c] for s, e, c in self.segments],
            "nominal_wire_spacing": self.nominal_wire_spacing,
            "wire_width": self.wire_width,
            "wire_thickness": self.wire_thickness,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CoilGeometry":
        segs = tuple((tuple(s), tuple(e), float(c)) for s, e, c in data["segments"])
        kw = {k: float(data[k]) for k in ("nominal_wire_spacing", "wire_width", "wire_thickness") if k in data}
        return cls(segs, **kw)


@dataclass(frozen=True)
class FieldSample:
    position: NDArray
    b_vec: NDArray
    b_axial: float
    b_perp: float


@dataclass(frozen=True)
class GradientWaveform:
    """Gradient schedule during one echo; ``amplitude`` in G/nm, ``period`` in us."""

    kind: str = "sinusoidal"
    amplitude: float = 0.0
    period: float | None = None
    current: float = 0.0

    def __post_init__(self):
        if self.kind not in ("DC", "sinusoidal"):
            raise ValueError(f"unknown waveform kind {self.kind!r}")
        if self.amplitude < 0:
            raise ValueError("gradient amplitude must be non-negative")
        if self.kind == "sinusoidal" and (self.period is None or self.period <= 0):
            raise ValueError("sinusoidal waveform needs a positive period")


# 40 K at 0.7 A in air, 40 K at 1.4 A water cooled
AIR_HEAT_COEFFICIENT = 40.0 / 0.7**2
WATER_HEAT_COEFFICIENT = 40.0 / 1.4**2


@dataclass(frozen=True)
class CoilLimits:
    cooling_mode: str = "air"
    max_current: float = 700.0  # mA
    heat_coefficient: float = AIR_HEAT_COEFFICIENT  # K/A^2
    rise_time: float = 400.0  # ns
    slew_rate: float | None = None  # V/s
    peak_voltage: float | None = None  # V

    def __post_init__(self):
        if self.cooling_mode not in ("air", "water"):
            raise ValueError(f"unknown cooling mode {self.cooling_mode!r}")
        if not self.max_current > 0:
            raise ValueError("max_current must be positive")
        if not self.heat_coefficient > 0:
            raise ValueError("heat_coefficient must be positive")
        if not self.rise_time > 0:
            raise ValueError("rise_time must be positive")

    @classmethod
    def for_cooling(cls, mode: str, **overrides) -> "CoilLimits":
        if mode == "air":
            base = dict(max_current=700.0, heat_coefficient=AIR_HEAT_COEFFICIENT)
        elif mode == "water":
            base = dict(max_current=1400.0, heat_coefficient=WATER_HEAT_COEFFICIENT)
        else:
            raise ValueError(f"unknown cooling mode {mode!r}")
        base.update(overrides)
        return cls(cooling_mode=mode, **base)


def _segment_kernel(starts: NDArray, ends: NDArray, points: NDArray, check: bool = True) -> NDArray:
    """Geometric part of the finite-segment Biot-Savart field, shape (P, S, 3), 1/nm."""
    r1 = points[:, None, :] - starts[None, :, :]
    r2 = points[:, None, :] - ends[None, :, :]
    n1 = np.linalg.norm(r1, axis=-1)
    n2 = np.linalg.norm(r2, axis=-1)
    if check:
        seg = ends - starts
        length2 = np.einsum("ij,ij->i", seg, seg)
        t = np.clip(np.einsum("psk,sk->ps", r1, seg) / length2, 0.0, 1.0)
        closest = r1 - t[..., None] * seg[None]
        dist = np.linalg.norm(closest, axis=-1)
        if np.any(dist < SINGULAR_DISTANCE):
            p, s = np.argwhere(dist < SINGULAR_DISTANCE)[0]
            raise SingularityError(
                f"point {points[p].tolist()} lies within {SINGULAR_DISTANCE} nm of segment {s}"
            )
    # (u x r1)/d^2 * (cos a1 - cos a2): avoids the cancellation in
    # |r1||r2| + r1.r2 next to long wires
    u = (ends - starts) / np.linalg.norm(ends - starts, axis=1)[:, None]
    perp = np.cross(u[None], r1)
    d2 = np.einsum("psk,psk->ps", perp, perp)
    cos_diff = np.einsum("psk,sk->ps", r1, u) / n1 - np.einsum("psk,sk->ps", r2, u) / n2
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(d2 > 0, cos_diff / np.where(d2 > 0, d2, 1.0), 0.0)
    return perp * scale[..., None]


def segment_field(segment, current: float, point: ArrayLike) -> NDArray:
    """Field (G) at ``point`` of one straight segment ``(start, end)`` carrying ``current`` mA."""
    start = np.asarray(segment[0], dtype=float).reshape(1, 3)
    end = np.asarray(segment[1], dtype=float).reshape(1, 3)
    if np.linalg.norm(end - start) == 0.0:
        raise GeometryError("zero-length segment")
    p = np.asarray(point, dtype=float).reshape(1, 3)
    return BIOT_SAVART_PREFACTOR * current * _segment_kernel(start, end, p)[0, 0]


def coil_field(geometry: CoilGeometry, current: float, points: ArrayLike) -> NDArray:
    """Superposed field (G) at points of shape (..., 3)."""
    pts = np.asarray(points, dtype=float)
    shape = pts.shape
    flat = pts.reshape(-1, 3)
    kern = _segment_kernel(geometry.starts, geometry.ends, flat)
    b = BIOT_SAVART_PREFACTOR * current * np.einsum("psk,s->pk", kern, geometry.shares)
    return b.reshape(shape)


def _unit(v) -> NDArray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("direction must be nonzero")
    return v / n


def coil_field_at(geometry: CoilGeometry, current: float, point: ArrayLike,
                  nv_axis: ArrayLike = DEFAULT_NV_AXIS) -> FieldSample:
    p = np.asarray(point, dtype=float).reshape(3)
    b = coil_field(geometry, current, p[None])[0]
    axis = _unit(nv_axis)
    axial = float(b @ axis)
    perp = float(np.linalg.norm(b - axial * axis))
    return FieldSample(position=p, b_vec=b, b_axial=axial, b_perp=perp)


def axial_field(geometry: CoilGeometry, current: float, points: ArrayLike,
                nv_axis: ArrayLike = DEFAULT_NV_AXIS) -> NDArray:
    return coil_field(geometry, current, points) @ _unit(nv_axis)


@dataclass(frozen=True)
class GradientProfile:
    """dB_axial/ds sampled along a line; ``offsets`` are signed distances from the origin."""

    offsets: NDArray
    points: NDArray
    gradients: NDArray

    def __iter__(self) -> Iterator[tuple[float, float]]:
        return iter(zip(self.offsets.tolist(), self.gradients.tolist()))

    def __len__(self):
        return len(self.offsets)


def gradient_profile(geometry: CoilGeometry, current: float, line, n_points: int = 101,
                     nv_axis: ArrayLike = DEFAULT_NV_AXIS, step: float = 1.0) -> GradientProfile:
    """Central-difference gradient of the axial field along ``line = (origin, direction, extent)``.

    Samples are spread over ``origin +/- extent/2``.
    """
    origin, direction, extent = line
    if not extent > 0:
        raise ValueError("extent must be positive")
    d = np.asarray(direction, dtype=float)
    if not np.isclose(np.linalg.norm(d), 1.0, atol=1e-9):
        raise ValueError("direction must be normalized")
    offsets = np.linspace(-extent / 2, extent / 2, n_points)
    pts = np.asarray(origin, dtype=float)[None] + offsets[:, None] * d[None]
    coil_field(geometry, current, pts)  # raises if the line touches a wire
    fwd = axial_field(geometry, current, pts + step * d, nv_axis)
    back = axial_field(geometry, current, pts - step * d, nv_axis)
    return GradientProfile(offsets, pts, (fwd - back) / (2 * step))


def gradient_uniformity(geometry: CoilGeometry, current: float, center: ArrayLike,
                        size: Sequence[float] = (1200.0, 8000.0), n: tuple[int, int] = (25, 41),
                        nv_axis: ArrayLike = DEFAULT_NV_AXIS) -> float:
    """Largest relative deviation of dB_axial/dx over an x-y rectangle from its central value."""
    c = np.asarray(center, dtype=float)
    xs = np.linspace(-size[0] / 2, size[0] / 2, n[0])
    ys = np.linspace(-size[1] / 2, size[1] / 2, n[1])
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = c + np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
    ex = np.array([1.0, 0.0, 0.0])
    g = (axial_field(geometry, current, pts + ex, nv_axis) - axial_field(geometry, current, pts - ex, nv_axis)) / 2
    g0 = (axial_field(geometry, current, c + ex, nv_axis) - axial_field(geometry, current, c - ex, nv_axis)) / 2
    return float(np.max(np.abs(g / g0 - 1.0)))


def effective_gradient(waveform: GradientWaveform, tau: float) -> float:
    """Magnitude of the echo-sign-weighted mean gradient over total time ``tau`` (us).

    The refocusing pulse at tau/2 flips the sign of accumulated phase, so a
    constant gradient cancels exactly.
    """
    if not tau > 0:
        raise ValueError("echo time must be positive")
    if waveform.kind == "DC" or waveform.amplitude == 0:
        return 0.0
    T = waveform.period
    # closed form of (1/tau)[int_0^{tau/2} - int_{tau/2}^tau] G sin(2 pi t/T) dt
    val = (T / (2 * np.pi)) * (1 - 2 * np.cos(np.pi * tau / T) + np.cos(2 * np.pi * tau / T))
    return float(abs(val) / tau * waveform.amplitude)


def thermal_rise(limits: CoilLimits, current: float) -> float:
    """Steady temperature rise (K) for a current in mA, quadratic in current."""
    if current < 0:
        raise ValueError("current must be non-negative")
    return limits.heat_coefficient * (current / 1000.0) ** 2


def switching_bandwidth(rise_time: float) -> float:
    """3 dB bandwidth (MHz) of a first-order response with 10-90 % rise time in ns."""
    if not rise_time > 0:
        raise ValueError("rise time must be positive")
    return np.log(9.0) / (2 * np.pi * rise_time) * 1e3


def slew_limited_bandwidth(slew_rate: float, peak_voltage: float) -> float:
    """Large-signal bandwidth (MHz) from amplifier slew rate (V/s) and peak voltage (V)."""
    if not slew_rate > 0 or not peak_voltage > 0:
        raise ValueError("slew rate and peak voltage must be positive")
    return slew_rate / (2 * np.pi * peak_voltage) * 1e-6


def rectangular_loop(x_inner: float, x_outer: float, length: float, height: float,
                     share: float = 1.0) -> list:
    """Closed rectangle in the plane z = height; the x_inner leg carries +y current."""
    y0, y1 = -length / 2, length / 2
    c = [(x_inner, y0, height), (x_inner, y1, height), (x_outer, y1, height), (x_outer, y0, height)]
    return [(c[i], c[(i + 1) % 4], share) for i in range(4)]


# calibrated so that dB/dx ~ 0.108 G/nm at 250 mA in the array plane
PRESET_INNER_HALF_SPACING = 2900.0
PRESET_WIRE_HEIGHT = 500.0
PRESET_RETURN_OFFSET = 20000.0
PRESET_LOOP_LENGTH = 100000.0


def preset_geometry(inner_half_spacing: float = PRESET_INNER_HALF_SPACING,
                    wire_height: float = PRESET_WIRE_HEIGHT,
                    return_offset: float = PRESET_RETURN_OFFSET,
                    loop_length: float = PRESET_LOOP_LENGTH) -> CoilGeometry:
    """Anti-Helmholtz pair of rectangular loops straddling the array.

    Both inner legs carry +y current, so B_z is odd in x about the
    midpoint while B_x (transverse for a z-oriented NV) is even.
    """
    a = inner_half_spacing
    segs = rectangular_loop(a, a + return_offset, loop_length, wire_height)
    segs += rectangular_loop(-a, -a - return_offset, loop_length, wire_height)
    # orientation check: the -a loop is traversed with its inner leg also along +y
    return CoilGeometry(tuple(segs))


def write_field_map(path, geometry: CoilGeometry, current: float, points: ArrayLike,
                    nv_axis: ArrayLike = DEFAULT_NV_AXIS) -> Path:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    b = coil_field(geometry, current, pts)
    axis = _unit(nv_axis)
    axial = b @ axis
    perp = np.linalg.norm(b - axial[:, None] * axis, axis=1)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_nm", "y_nm", "z_nm", "Bx_G", "By_G", "Bz_G", "B_axial_G", "B_perp_G"])
        for p, bv, ba, bp in zip(pts, b, axial, perp):
            w.writerow([repr(float(v)) for v in (*p, *bv, ba, bp)])
    return path
