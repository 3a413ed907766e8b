"""Command line runner: ``nvencode <protocol> [--config PATH] [--seed N] [--out DIR]``.

Exit codes: 0 success, 2 parse error, 3 range error, 4 missing input,
5 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (calibrate_gradient_per_current, fit_damped_sinusoid, fit_echo_modulation,
                       fit_multi_lorentzian, plan_feasibility)
from .analysis.fits import damped_sinusoid, lorentzian_sum
from .coil_field import gradient_profile, write_field_map
from .config import ValidatedConfig, config_digest, jsonable, resolve, validate_config
from .errors import MissingInputError, NVEncodeError
from .imaging import locate_sites, peaks_to_json, reconstruct_real_space, write_image_csv
from .sequence_engine import (preset_amplitudes, run_2d_selection, run_cw_esr, run_fourier_kspace,
                              run_hahn_echo, run_rabi, write_kspace, write_series_csv, write_spectrum,
                              write_trace)
from .spin_physics import echo_signal_model

SUBCOMMANDS = ("esr", "rabi", "echo", "fourier", "select2d", "calibrate", "plan")


@dataclass
class RunManifest:
    config_digest: str
    seed: int
    tool_version: str
    subcommand: str
    outputs: list = field(default_factory=list)
    duration_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))


class _Outputs:
    """Tracks written files so a failed run can remove them."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.files.append(p)
        return p

    def json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(jsonable(obj), indent=1, sort_keys=True) + "\n")
        return p

    def cleanup(self):
        for p in self.files:
            if p.exists():
                p.unlink()


def _write_rows(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _esr(cfg: ValidatedConfig, out: _Outputs, points):
    s = cfg.sections["esr"]
    arr = cfg.build_array()
    spec = run_cw_esr(arr, cfg.experiment, (s["freq_min"], s["freq_max"]), points or s["points"])
    write_spectrum(out.path("esr.csv"), spec)
    fit = fit_multi_lorentzian(spec, s["n_peaks"], s["expected_fwhm"])
    centers = fit.series("center")
    model = lorentzian_sum(spec.frequency, centers, fit.series("fwhm"), fit.series("amplitude"), fit["baseline"])
    write_series_csv(out.path("esr_residuals.csv"), "frequency_MHz", spec.frequency, "residual",
                     spec.contrast - model, spec.noise_sigma)
    out.json("esr_fit.json", {"fit": fit.to_dict(), "splittings_MHz": np.diff(centers),
                              "centers_MHz": centers, "fwhm_MHz": fit.series("fwhm")})


def _rabi(cfg, out, points):
    r = cfg.sections["rabi"]
    arr = cfg.build_array()
    t = np.linspace(0.0, r["t_max"], points or r["points"])
    tr = run_rabi(arr, cfg.experiment, t)
    write_trace(out.path("rabi.csv"), tr)
    fit = fit_damped_sinusoid(tr)
    model = damped_sinusoid(t, *(fit[k] for k in ("frequency", "amplitude", "phase", "decay_rate", "offset")))
    write_series_csv(out.path("rabi_residuals.csv"), "time_us", t, "residual", tr.signal - model, tr.noise_sigma)
    out.json("rabi_fit.json", {"fit": fit.to_dict(), "mw_frequency_MHz": tr.mw_frequency,
                               "target_site": cfg.experiment.target_site})


def _echo(cfg, out, points):
    e = cfg.sections["echo"]
    arr = cfg.build_array()
    t = np.linspace(0.0, e["tau_max"], points or e["points"])
    tr = run_hahn_echo(arr, cfg.experiment, t, site=e["site"])
    write_trace(out.path("echo.csv"), tr)
    fit = fit_echo_modulation(tr, f_a=cfg.nv_params.hyperfine, stretch=cfg.experiment.echo_stretch)
    model = fit["amplitude"] * echo_signal_model(t, fit["t2"], cfg.experiment.echo_stretch, cfg.nv_params.hyperfine,
                                                 fit["f_nmr"], float(np.clip(fit["depth"], 0.0, 1.0)))
    write_series_csv(out.path("echo_residuals.csv"), "time_us", t, "residual", tr.signal - model, tr.noise_sigma)
    out.json("echo_fit.json", {"fit": fit.to_dict(), "site": e["site"]})


def _fourier(cfg, out, points):
    f = cfg.sections["fourier"]
    arr = cfg.build_array()
    g = preset_amplitudes(cfg.experiment, points or f["points"], f["k_max"], f["tau"])
    rec = run_fourier_kspace(arr, cfg.experiment, f["tau"], g, site=f["site"])
    write_kspace(out.path("kspace.csv"), rec)
    img = reconstruct_real_space(rec, f["zero_pad"])
    write_image_csv(out.path("image.csv"), img)
    peaks = locate_sites(img, 1 if f["site"] else f["expected_sites"])
    p = out.path("peaks.json")
    p.write_text(peaks_to_json(peaks) + "\n")
    out.json("fourier_summary.json", {"resolution_nm": img.resolution, "k_max_per_nm": rec.k_max,
                                      "warnings": list(rec.warnings), "selected_site": rec.selected_site})


def _select2d(cfg, out, points):
    s = cfg.sections["select2d"]
    lat = cfg.build_lattice()
    res = run_2d_selection(lat, cfg.experiment, tuple(s["target"]))
    rows = [(site.label, site.grid_index[0], site.grid_index[1], res.polarization[site.label],
             res.population[site.label]) for site in lat.sites]
    _write_rows(out.path("select2d.csv"), ["site", "row", "col", "polarization_z", "population_0"], rows)
    out.json("select2d.json", {"target": res.target, "success": res.success})


def _calibrate(cfg, out, points):
    c = cfg.sections["calibrate"]
    arr = cfg.build_array()
    currents = np.linspace(c["current_min"], c["current_max"], points or c["points"])
    center = arr.to_lab(np.mean([s.center for s in arr.sites], axis=0))
    grads = [float(gradient_profile(cfg.geometry, I, (center, (1.0, 0.0, 0.0), 1.0), n_points=1,
                                    nv_axis=arr.nv_axis).gradients[0]) for I in currents]
    _write_rows(out.path("calibrate.csv"), ["current_mA", "gradient_G_per_nm"], zip(currents, grads))
    fit = calibrate_gradient_per_current(list(zip(currents, grads)))
    xs = np.linspace(center[0] - 600, center[0] + 600, 61)
    pts = np.stack([xs, np.full_like(xs, center[1]), np.full_like(xs, center[2])], axis=1)
    write_field_map(out.path("field_map.csv"), cfg.geometry, cfg.experiment.coil_current, pts, arr.nv_axis)
    out.json("calibration.json", {"fit": fit.to_dict(), "slope_G_per_nm_per_A": fit["slope"]})


def _plan(cfg, out, points):
    p = cfg.sections["plan"]
    mode = p["cooling_mode"] or cfg.limits.cooling_mode
    limits = cfg.limits if mode == cfg.limits.cooling_mode else None
    kw = dict(omega=p["omega"], cooling_mode=mode, limits=limits, params=cfg.nv_params,
              fidelity_floor=p["fidelity_floor"], slope_ref=p["slope_ref"], length_ref=p["length_ref"],
              current_ref=p["current_ref"], thermal_cap=p["thermal_cap"])
    rep = plan_feasibility(p["L"], p["D"], **kw)
    out.json("plan.json", rep.to_dict())
    lengths = np.linspace(p["sweep_min"], p["sweep_max"], points or p["points"])
    rows = []
    for L in lengths:
        r = plan_feasibility(L, p["D"], **kw)
        rows.append((float(L), r.dynamic_range, r.bandwidth, r.required_current, r.thermal_rise,
                     r.fidelity, int(r.feasible)))
    _write_rows(out.path("plan_sweep.csv"),
                ["L_nm", "DR", "BW_MHz", "required_current_mA", "thermal_rise_K", "fidelity", "feasible"], rows)


_RUNNERS = {"esr": _esr, "rabi": _rabi, "echo": _echo, "fourier": _fourier, "select2d": _select2d,
            "calibrate": _calibrate, "plan": _plan}


def run_experiment(subcommand: str, config: ValidatedConfig, seed: int | None = None,
                   out_dir=".", noiseless: bool = False, points: int | None = None) -> RunManifest:
    """Run one protocol and write its data files, a config sidecar and ``manifest.json``."""
    if subcommand not in _RUNNERS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    start = time.perf_counter()
    sections = json.loads(json.dumps(config.sections))
    if seed is not None:
        sections["experiment"]["seed"] = int(seed)
    if noiseless:
        sections["experiment"]["photons_per_point"] = math.inf
    cfg = resolve(sections) if (seed is not None or noiseless) else config
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = _Outputs(out_dir)
    try:
        _RUNNERS[subcommand](cfg, out, points)
        out.json(f"{subcommand}_config.json", {"config": cfg.sections, "seed": cfg.experiment.seed,
                                               "subcommand": subcommand, "points": points})
        manifest = RunManifest(config_digest(cfg.sections), cfg.experiment.seed, __version__, subcommand,
                               [p.name for p in out.files], 0.0)
        manifest.duration_s = round(time.perf_counter() - start, 6)
        mp = out.path("manifest.json")
        mp.write_text(manifest.to_json() + "\n")
    except BaseException:
        out.cleanup()
        raise
    return manifest


def emit_plot_data(manifest_path, out_path=None) -> Path:
    """Merge a run's series into a long-format CSV (series, x, y, sigma)."""
    mp = Path(manifest_path)
    if mp.is_dir():
        mp = mp / "manifest.json"
    if not mp.exists():
        raise MissingInputError(f"manifest {mp} not found")
    try:
        manifest = RunManifest.from_json(mp.read_text())
    except (json.JSONDecodeError, TypeError) as exc:
        raise MissingInputError(f"manifest {mp} is unreadable: {exc}") from exc
    files = [f for f in manifest.outputs if f != "manifest.json"]
    if not files:
        raise MissingInputError("manifest lists no outputs")
    base = mp.parent
    for f in files:
        if not (base / f).exists():
            raise MissingInputError(f"result file {f} listed in the manifest is missing")
    rows = []

    def series_from(name, label):
        with (base / name).open() as fh:
            rd = csv.reader(fh)
            header = next(rd)
            for r in rd:
                sig = r[2] if len(header) > 2 else "0.0"
                rows.append((label, r[0], r[1], sig))
        return header

    for f in files:
        if f.endswith(".csv") and f not in ("select2d.csv", "plan_sweep.csv", "field_map.csv", "calibrate.csv"):
            series_from(f, f[:-4])
    if "esr_fit.json" in files:
        fit = json.loads((base / "esr_fit.json").read_text())["fit"]["params"]
        with (base / "esr.csv").open() as fh:
            freqs = [float(r[0]) for r in list(csv.reader(fh))[1:]]
        n = sum(1 for k in fit if k.startswith("center_"))
        for i in range(n):
            y = lorentzian_sum(freqs, [fit[f"center_{i}"]], [fit[f"fwhm_{i}"]], [fit[f"amplitude_{i}"]],
                               fit["baseline"])
            rows += [(f"peak_{i}", repr(x), repr(float(v)), "0.0") for x, v in zip(freqs, y)]
    if "calibrate.csv" in files:
        series_from("calibrate.csv", "calibrate")
    if "plan_sweep.csv" in files:
        with (base / "plan_sweep.csv").open() as fh:
            rd = list(csv.reader(fh))[1:]
        rows += [("plan_BW_vs_DR", r[1], r[2], "0.0") for r in rd]
    if "select2d.csv" in files:
        with (base / "select2d.csv").open() as fh:
            rd = list(csv.reader(fh))[1:]
        rows += [("select2d_polarization", f"{r[1]}:{r[2]}", r[3], "0.0") for r in rd]
    target = Path(out_path) if out_path else base / "plot_data.csv"
    with target.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "x", "y", "sigma"])
        w.writerows(rows)
    return target


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvencode", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} protocol")
        p.add_argument("--config", type=Path, default=None, help="JSON config (defaults to the preset)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--noiseless", action="store_true", help="disable shot noise")
        p.add_argument("--points", type=int, default=None, help="override the sweep length")
    p = sub.add_parser("plotdata", help="merge a run's outputs into a tidy CSV")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "plotdata":
            path = emit_plot_data(args.manifest, args.out)
            print(path)
            return 0
        if args.seed is not None and args.seed < 0:
            parser.print_usage(sys.stderr)
            print("nvencode: error: --seed must be non-negative", file=sys.stderr)
            return 3
        if args.points is not None and args.points < 2:
            print("nvencode: error: --points must be at least 2", file=sys.stderr)
            return 3
        cfg = validate_config(args.config)
        manifest = run_experiment(args.command, cfg, args.seed, args.out, args.noiseless, args.points)
        print(json.dumps({"outputs": manifest.outputs, "digest": manifest.config_digest}))
        return 0
    except NVEncodeError as exc:
        print(f"nvencode: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"nvencode: numeric failure: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
