"""Sweep the gradient amplitude to sample k-space, reconstruct a 1D image and locate the sites."""

import numpy as np

from nvencode.config import validate_config
from nvencode.imaging import locate_sites, reconstruct_real_space
from nvencode.sequence_engine import preset_amplitudes, run_fourier_kspace


def main():
    cfg = validate_config(None)
    arr = cfg.build_array()
    f = cfg.sections["fourier"]
    amps = preset_amplitudes(cfg.experiment, f["points"], f["k_max"], f["tau"])
    record = run_fourier_kspace(arr, cfg.experiment, f["tau"], amps)
    image = reconstruct_real_space(record, zero_pad_factor=f["zero_pad"])
    print(f"k_max {record.k.max():.4f} 1/nm -> resolution {image.resolution:.1f} nm")
    truth = [arr.to_lab(s.center)[0] - arr.to_lab(arr.sites[0].center)[0] for s in arr.sites]
    print("site offsets from A (nm):", np.round(truth, 1))
    for p in locate_sites(image, f["expected_sites"]):
        print(f"  peak at {p.center:7.1f} nm, FWHM {p.fwhm:5.1f} nm, amplitude {p.amplitude:.4f}")


if __name__ == "__main__":
    main()
