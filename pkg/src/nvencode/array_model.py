"""Hierarchical NV arrays: regions of sites, sites of individual NV centres.

Site positions are kept in array-local coordinates (site A at the origin,
sites stepping along +x).  ``NVArray.lab_offset`` places the array in the
coil frame.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

# informational limits for future devices (not enforced anywhere)
IMPLANT_DEPTH_NM = 15.0
MIN_NV_SEPARATION_NM = 4.0
MIN_SITE_AREA_NM2 = 10.0**2
MIN_SITE_SPACING_NM = 10.0

DEFAULT_DEPTH = 20.0  # nm below the surface
DEFAULT_T2_BY_SITE = (3.8, 4.6, 1.8, 3.8)  # us
DEFAULT_T2 = 4.5
DEFAULT_T2_STAR = 0.58
DEFAULT_T1 = 1.0  # ms
DEFAULT_CONTRAST = 0.005

N_ORIENTATIONS = 4


@dataclass(frozen=True)
class NVCenter:
    position: tuple
    orientation_class: int = 0
    t2_star: float = DEFAULT_T2_STAR
    t2: float = DEFAULT_T2
    t1: float = DEFAULT_T1
    contrast: float = DEFAULT_CONTRAST

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if len(self.position) != 3:
            raise ValueError("position must be a 3-vector")
        if self.orientation_class not in range(N_ORIENTATIONS):
            raise ValueError("orientation_class must be 0..3")
        if min(self.t2_star, self.t2, self.t1) <= 0:
            raise ValueError("coherence times must be positive")
        if not 0 < self.contrast <= 0.05:
            raise ValueError("contrast must lie in (0, 0.05]")


@dataclass(frozen=True)
class NVSite:
    center: tuple
    aperture_diameter: float
    nvs: tuple = ()
    label: str = "A"
    grid_index: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "nvs", tuple(self.nvs))
        if self.aperture_diameter <= 0:
            raise ValueError("aperture_diameter must be positive")
        c = np.asarray(self.center)
        for nv in self.nvs:
            lateral = np.asarray(nv.position[:2]) - c[:2]
            if np.linalg.norm(lateral) > self.aperture_diameter / 2 + 1e-9:
                raise ValueError(f"NV at {nv.position} lies outside site {self.label}")

    def selected(self, orientation_class: int = 0) -> tuple:
        return tuple(nv for nv in self.nvs if nv.orientation_class == orientation_class)


@dataclass(frozen=True)
class NVArray:
    sites: tuple
    site_pitch: float
    region_pitch: float | None = None
    nv_axis: tuple = (0.0, 0.0, 1.0)
    lab_offset: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        axis = np.asarray(self.nv_axis, dtype=float)
        object.__setattr__(self, "nv_axis", tuple((axis / np.linalg.norm(axis)).tolist()))
        object.__setattr__(self, "lab_offset", tuple(float(v) for v in self.lab_offset))
        if self.site_pitch <= 0:
            raise ValueError("site_pitch must be positive")
        labels = [s.label for s in self.sites]
        if len(set(labels)) != len(labels):
            raise ValueError("site labels must be unique")
        xs = [s.center[0] for s in self.sites]
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValueError("sites must be ordered along the gradient axis")

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.sites]

    def site(self, label: str) -> NVSite:
        for s in self.sites:
            if s.label == label:
                return s
        raise KeyError(label)

    def site_index(self, label: str) -> int:
        return self.labels.index(label)

    def to_lab(self, positions) -> np.ndarray:
        return np.asarray(positions, dtype=float) + np.asarray(self.lab_offset)

    def with_offset(self, lab_offset) -> "NVArray":
        return replace(self, lab_offset=tuple(lab_offset))

    def selected_nvs(self, orientation_class: int = 0) -> list[tuple[int, NVCenter]]:
        """``(site_index, nv)`` for every NV of the given orientation class."""
        return [(i, nv) for i, s in enumerate(self.sites) for nv in s.selected(orientation_class)]

    def nv_table(self, orientation_class: int | None = 0) -> dict:
        """Column arrays over NVs (all classes if ``orientation_class`` is None)."""
        rows = [(i, nv) for i, s in enumerate(self.sites) for nv in s.nvs
                if orientation_class is None or nv.orientation_class == orientation_class]
        n = len(rows)
        return {
            "site": np.array([r[0] for r in rows], dtype=int),
            "position": np.array([r[1].position for r in rows], dtype=float).reshape(n, 3),
            "orientation": np.array([r[1].orientation_class for r in rows], dtype=int),
            "t2_star": np.array([r[1].t2_star for r in rows], dtype=float),
            "t2": np.array([r[1].t2 for r in rows], dtype=float),
            "t1": np.array([r[1].t1 for r in rows], dtype=float),
            "contrast": np.array([r[1].contrast for r in rows], dtype=float),
        }

    def to_dict(self) -> dict:
        return {
            "site_pitch": self.site_pitch,
            "region_pitch": self.region_pitch,
            "nv_axis": list(self.nv_axis),
            "lab_offset": list(self.lab_offset),
            "sites": [
                {
                    "label": s.label,
                    "center": list(s.center),
                    "aperture_diameter": s.aperture_diameter,
                    "grid_index": None if s.grid_index is None else list(s.grid_index),
                    "nvs": [
                        {
                            "position": list(nv.position),
                            "orientation_class": nv.orientation_class,
                            "t2_star": nv.t2_star,
                            "t2": nv.t2,
                            "t1": nv.t1,
                            "contrast": nv.contrast,
                        }
                        for nv in s.nvs
                    ],
                }
                for s in self.sites
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "NVArray":
        sites = []
        for s in data["sites"]:
            nvs = tuple(NVCenter(**nv) for nv in s["nvs"])
            gi = s.get("grid_index")
            sites.append(NVSite(tuple(s["center"]), s["aperture_diameter"], nvs, s["label"],
                                None if gi is None else tuple(gi)))
        return cls(tuple(sites), data["site_pitch"], data.get("region_pitch"),
                   tuple(data.get("nv_axis", (0, 0, 1))), tuple(data.get("lab_offset", (0, 0, 0))))

    @classmethod
    def from_json(cls, text: str) -> "NVArray":
        return cls.from_dict(json.loads(text))


def site_label(index: int) -> str:
    """A, B, ..., Z, AA, AB, ..."""
    letters = string.ascii_uppercase
    out = ""
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        out = letters[rem] + out
    return out


def _offsets(rng: np.random.Generator, n: int, diameter: float, placement: str) -> np.ndarray:
    r = diameter / 2
    if placement == "1d":
        return np.stack([rng.uniform(-r, r, n), np.zeros(n)], axis=1)
    if placement == "center":
        return np.zeros((n, 2))
    if placement == "disc":
        rad = r * np.sqrt(rng.uniform(0, 1, n))
        ang = rng.uniform(0, 2 * np.pi, n)
        return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    raise ValueError(f"unknown placement {placement!r}")


def _populate_site(rng, center, diameter, mean_nvs, placement, t2, t2_star, t1,
                   contrast, t2_spread, only_selected):
    """Draw the NVs of one site.

    ``mean_nvs`` is the mean number of NVs per orientation class; with all
    classes present the total is Poisson(4 * mean) with uniform classes.
    """
    if only_selected:
        n = rng.poisson(mean_nvs)
        classes = np.zeros(n, dtype=int)
    else:
        n = rng.poisson(N_ORIENTATIONS * mean_nvs)
        classes = rng.integers(0, N_ORIENTATIONS, n)
    offs = _offsets(rng, n, diameter, placement)
    t2s = np.full(n, t2)
    if t2_spread > 0:
        t2s = t2 * np.exp(t2_spread * rng.standard_normal(n))
    nvs = []
    for k in range(n):
        pos = (center[0] + offs[k, 0], center[1] + offs[k, 1], center[2])
        nvs.append(NVCenter(pos, int(classes[k]), t2_star, float(t2s[k]), t1, contrast))
    return tuple(nvs)


def generate_array(site_count: int = 4, site_pitch: float = 100.0, aperture_diameter: float = 60.0,
                   mean_nvs_per_site: float = 3.0, seed: int = 0, *, placement: str = "1d",
                   depth: float = DEFAULT_DEPTH, t2_by_site: Sequence[float] = DEFAULT_T2_BY_SITE,
                   t2_default: float = DEFAULT_T2, t2_star: float = DEFAULT_T2_STAR,
                   t1: float = DEFAULT_T1, contrast: float = DEFAULT_CONTRAST,
                   t2_spread: float = 0.0, only_selected: bool = False,
                   nv_axis=(0.0, 0.0, 1.0), lab_offset=None, region_pitch: float | None = None) -> NVArray:
    """Linear array of sites along x, deterministic for a fixed seed.

    With ``lab_offset=None`` the array is centred on the coil midpoint.
    """
    if site_count < 1:
        raise ValueError("site_count must be at least 1")
    if site_pitch <= 0 or aperture_diameter <= 0:
        raise ValueError("site_pitch and aperture_diameter must be positive")
    if mean_nvs_per_site < 0:
        raise ValueError("mean_nvs_per_site must be non-negative")
    rng = np.random.default_rng(seed)
    sites = []
    for i in range(site_count):
        center = (i * site_pitch, 0.0, -depth)
        t2 = t2_by_site[i] if i < len(t2_by_site) else t2_default
        nvs = _populate_site(rng, center, aperture_diameter, mean_nvs_per_site, placement,
                             t2, t2_star, t1, contrast, t2_spread, only_selected)
        sites.append(NVSite(center, aperture_diameter, nvs, site_label(i)))
    if lab_offset is None:
        lab_offset = (-(site_count - 1) * site_pitch / 2, 0.0, 0.0)
    return NVArray(tuple(sites), site_pitch, region_pitch, tuple(nv_axis), tuple(lab_offset))


def generate_lattice(rows: int = 3, cols: int = 3, site_pitch: float = 100.0,
                     aperture_diameter: float = 60.0, mean_nvs_per_site: float = 3.0, seed: int = 0,
                     *, placement: str = "disc", depth: float = DEFAULT_DEPTH,
                     t2: float = DEFAULT_T2, t2_star: float = DEFAULT_T2_STAR,
                     t1: float = DEFAULT_T1, contrast: float = DEFAULT_CONTRAST,
                     only_selected: bool = True, nv_axis=(0.0, 0.0, 1.0), lab_offset=None) -> NVArray:
    """Rectangular ``rows x cols`` lattice.

    Row index steps along x (the first encoding gradient) and column index
    along y, so an x gradient distinguishes rows.
    """
    if rows < 1 or cols < 1:
        raise ValueError("lattice needs at least one row and one column")
    if site_pitch <= 0 or aperture_diameter <= 0:
        raise ValueError("site_pitch and aperture_diameter must be positive")
    rng = np.random.default_rng(seed)
    sites = []
    for r in range(rows):
        for c in range(cols):
            center = (r * site_pitch, c * site_pitch, -depth)
            nvs = _populate_site(rng, center, aperture_diameter, mean_nvs_per_site, placement,
                                 t2, t2_star, t1, contrast, 0.0, only_selected)
            sites.append(NVSite(center, aperture_diameter, nvs, f"r{r}c{c}", (r, c)))
    if lab_offset is None:
        lab_offset = (-(rows - 1) * site_pitch / 2, -(cols - 1) * site_pitch / 2, 0.0)
    return NVArray(tuple(sites), site_pitch, None, tuple(nv_axis), tuple(lab_offset))


def expected_nv_count(aperture_area: float, dosage: float, conversion_efficiency: float) -> float:
    """Mean NV number for an aperture area (nm^2), ion dose (cm^-2) and yield."""
    if min(aperture_area, dosage, conversion_efficiency) < 0:
        raise ValueError("inputs must be non-negative")
    return dosage * aperture_area * 1e-14 * conversion_efficiency


def aperture_area(diameter: float) -> float:
    return np.pi * diameter**2 / 4


def offset_std_1d(aperture_diameter: float) -> float:
    """Std of a uniform offset across the diameter, d / (2 sqrt 3)."""
    return aperture_diameter / (2 * np.sqrt(3.0))


def pair_separation_stats(site_area: float, site_spacing: float, n_samples: int = 200_000,
                          seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo mean and std of the distance between random NVs in two disc sites.

    For spacing much larger than the site radius R the std tends to R/sqrt(2).
    """
    if site_area < 0 or site_spacing <= 0:
        raise ValueError("site_area must be non-negative and site_spacing positive")
    if site_area == 0:
        return float(site_spacing), 0.0
    diameter = 2 * np.sqrt(site_area / np.pi)
    rng = np.random.default_rng(seed)
    a = _offsets(rng, n_samples, diameter, "disc")
    b = _offsets(rng, n_samples, diameter, "disc")
    b[:, 0] += site_spacing
    d = np.linalg.norm(b - a, axis=1)
    return float(d.mean()), float(d.std())
