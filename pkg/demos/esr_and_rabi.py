"""Resolve the four preset sites in a CW ESR sweep, then tune the drive to each site and fit its Rabi rate."""

import dataclasses

import numpy as np

from nvencode.analysis import fit_damped_sinusoid, fit_multi_lorentzian
from nvencode.config import validate_config
from nvencode.sequence_engine import run_cw_esr, run_rabi


def main():
    cfg = validate_config(None)
    arr = cfg.build_array()
    esr = cfg.sections["esr"]
    spectrum = run_cw_esr(arr, cfg.experiment, (esr["freq_min"], esr["freq_max"]), esr["points"])
    fit = fit_multi_lorentzian(spectrum, esr["n_peaks"], esr["expected_fwhm"])
    centers, fwhm = fit.series("center"), fit.series("fwhm")
    print("ESR peaks (MHz):", np.round(centers, 1))
    print("  FWHM (MHz):   ", np.round(fwhm, 1))
    print("  splittings:   ", np.round(np.diff(centers), 1))

    t = np.linspace(0, cfg.sections["rabi"]["t_max"], cfg.sections["rabi"]["points"])
    for lab in arr.labels:
        trace = run_rabi(arr, dataclasses.replace(cfg.experiment, target_site=lab), t)
        print(f"Rabi site {lab}: {fit_damped_sinusoid(trace)['frequency']:.2f} MHz")


if __name__ == "__main__":
    main()
