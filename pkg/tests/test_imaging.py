import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvencode.array_model import generate_array
from nvencode.errors import DetectionError
from nvencode.imaging import (RealSpaceImage, SitePeak, locate_sites, mirror_record, peaks_to_json,
                              reconstruct_real_space, resolution, write_image_csv)
from nvencode.sequence_engine import ExperimentConfig, KSpaceRecord, preset_amplitudes, run_fourier_kspace

K_MAX = 0.021
N_K = 512


def axis(n=N_K, k_max=K_MAX):
    return np.linspace(0.0, k_max, n)


def record(signal, k=None):
    k = axis(len(signal)) if k is None else k
    return KSpaceRecord(k, np.asarray(signal, dtype=float), tau=0.9)


def direct_dft(k, s, x):
    """S(x) = (1/N) sum_j s_j exp(-2 pi i k_j x), one explicit loop per position."""
    out = np.empty(len(x), dtype=complex)
    n = len(k)
    for i, xi in enumerate(x):
        acc = 0j
        for kj, sj in zip(k, s):
            acc += sj * complex(np.cos(2 * np.pi * kj * xi), -np.sin(2 * np.pi * kj * xi))
        out[i] = acc / n
    return out


class TestResolution:
    @pytest.mark.parametrize("k,dx", [(0.021, 23.80952380952381), (0.005, 100.0), (0.042, 11.904761904761905)])
    def test_values(self, k, dx):
        assert resolution(k) == pytest.approx(dx, rel=1e-12)

    @pytest.mark.parametrize("k", [0.0, -0.1])
    def test_nonpositive(self, k):
        with pytest.raises(ValueError):
            resolution(k)

    def test_image_records_it(self):
        img = reconstruct_real_space(record(np.ones(64)))
        assert img.resolution == resolution(K_MAX)


class TestMirror:
    def test_origin_not_duplicated(self):
        k = axis(10)
        kf, sf = mirror_record(k, np.arange(10.0))
        assert len(kf) == 19
        np.testing.assert_allclose(np.diff(kf), k[1] - k[0], rtol=1e-9)
        np.testing.assert_array_equal(sf, sf[::-1])

    def test_half_step_start(self):
        dk = 0.001
        k = dk / 2 + dk * np.arange(12)
        kf, sf = mirror_record(k, np.ones(12))
        assert len(kf) == 24
        np.testing.assert_allclose(np.diff(kf), dk, rtol=1e-9)

    def test_rejects_offset_start(self):
        with pytest.raises(ValueError):
            mirror_record(0.0003 + 0.001 * np.arange(12), np.ones(12))

    def test_non_uniform(self):
        k = axis(16)
        k[5] += 1e-5
        with pytest.raises(ValueError):
            reconstruct_real_space(KSpaceRecord(k, np.ones(16), tau=0.9))

    def test_too_short(self):
        with pytest.raises(ValueError):
            reconstruct_real_space(record(np.ones(7)))


class TestDftOracle:
    @pytest.mark.parametrize("positions", [[100.0], [0.0, 96.0, 192.0, 288.0], [37.5, 140.0]])
    def test_against_direct_sum(self, positions):
        k = axis(64, 0.02)
        s = np.mean([np.cos(2 * np.pi * k * p) for p in positions], axis=0)
        img = reconstruct_real_space(record(s, k), zero_pad_factor=2)
        kf, sf = mirror_record(k, s)
        sel = np.linspace(0, len(img.position) - 1, 41).astype(int)
        want = direct_dft(kf, sf, img.position[sel])
        np.testing.assert_allclose(img.complex_image[sel], want, rtol=1e-9, atol=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=8, max_size=24), st.integers(1, 4))
    def test_random_records(self, vals, pad):
        k = np.linspace(0, 0.01, len(vals))
        img = reconstruct_real_space(record(vals, k), zero_pad_factor=pad)
        kf, sf = mirror_record(k, vals)
        sel = np.arange(0, len(img.position), max(1, len(img.position) // 17))
        want = direct_dft(kf, sf, img.position[sel])
        np.testing.assert_allclose(img.complex_image[sel], want, rtol=1e-9, atol=1e-12)


class TestProperties:
    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=8, max_size=64))
    def test_parseval(self, vals):
        k = np.linspace(0, 0.01, len(vals))
        img = reconstruct_real_space(record(vals, k), zero_pad_factor=1)
        _, sf = mirror_record(k, vals)
        energy = float(np.sum(np.abs(img.complex_image) ** 2)) * len(sf)
        assert energy == pytest.approx(float(np.sum(sf**2)), rel=1e-9, abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0, 400), st.floats(0, 400), st.floats(-2, 2))
    def test_linearity(self, x1, x2, a):
        k = axis(128)
        s1, s2 = np.cos(2 * np.pi * k * x1), np.cos(2 * np.pi * k * x2)
        i1 = reconstruct_real_space(record(s1, k)).complex_image
        i2 = reconstruct_real_space(record(s2, k)).complex_image
        i12 = reconstruct_real_space(record(s1 + a * s2, k)).complex_image
        np.testing.assert_allclose(i12, i1 + a * i2, atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=8, max_size=40))
    def test_even_magnitude(self, vals):
        img = reconstruct_real_space(record(vals, np.linspace(0, 0.01, len(vals))))
        mag = img.magnitude
        # axis runs -m/2 .. m/2-1 steps; pair x with -x
        np.testing.assert_allclose(mag[1:], mag[1:][::-1], atol=1e-12)

    def test_axis_span(self):
        k = axis(64)
        img = reconstruct_real_space(record(np.ones(64), k), zero_pad_factor=4)
        dk = k[1] - k[0]
        assert img.position[0] == pytest.approx(-1 / (2 * dk), rel=1e-12)
        np.testing.assert_allclose(np.diff(img.position), img.position[1] - img.position[0], rtol=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.one_of(st.floats(0.0, 11.9), st.floats(23.9, 2000.0)))
    def test_localization(self, x0):
        # between dx/2 and dx the site merges with its mirror image at -x0
        img = reconstruct_real_space(record(np.cos(2 * np.pi * axis() * x0)))
        (peak,) = locate_sites(img, 1)
        assert abs(peak.center - x0) <= img.resolution / 2


class TestLocate:
    def test_constant_record_peak_at_zero(self):
        img = reconstruct_real_space(record(np.ones(N_K)))
        (p,) = locate_sites(img, 1)
        assert abs(p.center) < img.resolution / 2
        assert p.amplitude == pytest.approx(1.0, rel=0.01)

    def test_cosine_100(self):
        img = reconstruct_real_space(record(np.cos(2 * np.pi * axis() * 100.0)))
        (p,) = locate_sites(img, 1)
        assert abs(p.center - 100.0) <= img.resolution / 2

    def test_four_sites(self, point_array):
        cfg = ExperimentConfig(photons_per_point=float("inf"))
        rec = run_fourier_kspace(point_array, cfg, 0.9, preset_amplitudes(cfg))
        img = reconstruct_real_space(rec)
        peaks = locate_sites(img, 4)
        for p, truth in zip(peaks, (0.0, 96.0, 192.0, 288.0)):
            assert abs(p.center - truth) <= img.resolution / 2
        assert np.mean(np.diff([p.center for p in peaks])) == pytest.approx(96.0, abs=4.0)

    def test_flat_image(self):
        img = RealSpaceImage(np.linspace(-100, 100, 201), np.full(201, 0.3), 24.0, 1)
        with pytest.raises(DetectionError) as err:
            locate_sites(img, 1)
        assert err.value.found == []

    def test_too_few(self):
        x = np.linspace(-300, 300, 601)
        img = RealSpaceImage(x, np.exp(-0.5 * ((x - 80) / 10) ** 2), 24.0, 1)
        with pytest.raises(DetectionError) as err:
            locate_sites(img, 2)
        assert [round(p.center) for p in err.value.found] == [80]

    def test_bad_count(self):
        img = reconstruct_real_space(record(np.ones(32)))
        with pytest.raises(ValueError):
            locate_sites(img, 0)

    def test_fwhm_of_point_site(self):
        # Dirichlet kernel over the mirrored span N dk: FWHM = 1.2067 / (N dk)
        k = axis()
        img = reconstruct_real_space(record(np.ones(N_K), k))
        (p,) = locate_sites(img, 1)
        span = (2 * N_K - 1) * (k[1] - k[0])
        assert p.fwhm == pytest.approx(1.2067 / span, rel=5e-3)

    def test_mirror_partner_halves_amplitude(self):
        (p,) = locate_sites(reconstruct_real_space(record(np.cos(2 * np.pi * axis() * 150.0))), 1)
        assert p.amplitude == pytest.approx(0.5, abs=0.02)

    def test_spread_population_statistics(self):
        # over seeds, the median mean separation and width sit in the measured bands
        cfg = ExperimentConfig(photons_per_point=float("inf"))
        g = preset_amplitudes(cfg)
        seps, widths = [], []
        for seed in range(40):
            arr = generate_array(seed=seed)
            if any(not s.selected(0) for s in arr.sites):
                continue
            try:
                peaks = locate_sites(reconstruct_real_space(run_fourier_kspace(arr, cfg, 0.9, g)), 4)
            except DetectionError:
                continue
            seps.append(np.mean(np.diff([p.center for p in peaks])))
            widths.append(np.mean([p.fwhm for p in peaks]))
        assert 93 <= np.median(seps) <= 99
        assert 25 <= np.median(widths) <= 40


def test_sitepeak_positive_width():
    with pytest.raises(ValueError):
        SitePeak(1.0, 0.0, 1.0)


def test_exports(tmp_path):
    img = reconstruct_real_space(record(np.cos(2 * np.pi * axis(64) * 50.0), axis(64)))
    path = write_image_csv(tmp_path / "img.csv", img)
    lines = path.read_text().splitlines()
    assert lines[0] == "x_nm,magnitude"
    assert len(lines) == len(img.position) + 1
    data = json.loads(peaks_to_json(locate_sites(img, 1)))
    assert set(data[0]) == {"center", "fwhm", "amplitude"}
