import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvencode.array_model import (NVArray, NVCenter, NVSite, aperture_area, expected_nv_count,
                                  generate_array, generate_lattice, offset_std_1d,
                                  pair_separation_stats, site_label)


class TestGenerate:
    def test_deterministic(self):
        a = generate_array(seed=11)
        b = generate_array(seed=11)
        assert a.to_json() == b.to_json()

    def test_seed_changes_population(self):
        assert generate_array(seed=1).to_json() != generate_array(seed=2).to_json()

    def test_preset_layout(self, preset_array):
        assert preset_array.labels == ["A", "B", "C", "D"]
        xs = [s.center[0] for s in preset_array.sites]
        np.testing.assert_allclose(np.diff(xs), 100.0)
        # centred on the coil midpoint
        lab = preset_array.to_lab([s.center for s in preset_array.sites])
        assert lab[:, 0].mean() == pytest.approx(0.0, abs=1e-12)

    def test_per_site_t2(self):
        arr = generate_array(seed=4, site_count=5)
        t2 = {s.label: {nv.t2 for nv in s.nvs} for s in arr.sites if s.nvs}
        for label, want in zip("ABCDE", (3.8, 4.6, 1.8, 3.8, 4.5)):
            if label in t2:
                assert t2[label] == {want}

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from(["1d", "disc", "center"]))
    def test_nvs_inside_aperture(self, seed, placement):
        arr = generate_array(seed=seed, placement=placement)
        for s in arr.sites:
            for nv in s.nvs:
                lat = np.subtract(nv.position[:2], s.center[:2])
                assert np.linalg.norm(lat) <= s.aperture_diameter / 2 + 1e-9
                assert nv.position[2] == s.center[2]

    def test_only_selected(self):
        arr = generate_array(seed=9, only_selected=True)
        assert all(nv.orientation_class == 0 for s in arr.sites for nv in s.nvs)

    def test_mean_counts(self):
        # Poisson(4 * mean) per site over many seeds
        totals = [sum(len(s.nvs) for s in generate_array(seed=k).sites) for k in range(300)]
        assert np.mean(totals) / 4 == pytest.approx(12.0, rel=0.05)
        sel = [len(generate_array(seed=k).selected_nvs()) for k in range(300)]
        assert np.mean(sel) / 4 == pytest.approx(3.0, rel=0.08)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            generate_array(site_count=0)
        with pytest.raises(ValueError):
            generate_array(placement="ring")
        with pytest.raises(ValueError):
            generate_array(mean_nvs_per_site=-1)


class TestLattice:
    def test_grid(self):
        lat = generate_lattice(3, 3, seed=2)
        assert len(lat.sites) == 9
        for s in lat.sites:
            r, c = s.grid_index
            assert s.label == f"r{r}c{c}"
            assert s.center[:2] == (r * 100.0, c * 100.0)
        lab = lat.to_lab([s.center for s in lat.sites])
        np.testing.assert_allclose(lab[:, :2].mean(axis=0), 0.0, atol=1e-12)


class TestSerialization:
    def test_round_trip(self, preset_array):
        back = NVArray.from_json(preset_array.to_json())
        assert back == preset_array
        assert back.to_json() == preset_array.to_json()

    def test_lattice_round_trip(self):
        lat = generate_lattice(2, 3, seed=5)
        assert NVArray.from_dict(lat.to_dict()) == lat

    def test_nv_table(self, preset_array):
        tab = preset_array.nv_table(None)
        n = sum(len(s.nvs) for s in preset_array.sites)
        assert tab["position"].shape == (n, 3)
        sel = preset_array.nv_table(0)
        assert len(sel["site"]) == len(preset_array.selected_nvs())


class TestValidation:
    def test_nv_outside_site(self):
        nv = NVCenter((40.0, 0.0, -20.0))
        with pytest.raises(ValueError):
            NVSite((0.0, 0.0, -20.0), 60.0, (nv,))

    @pytest.mark.parametrize("kw", [dict(orientation_class=4), dict(t2=0.0), dict(contrast=0.2),
                                    dict(contrast=0.0)])
    def test_nv_fields(self, kw):
        with pytest.raises(ValueError):
            NVCenter((0, 0, 0), **kw)

    def test_duplicate_labels(self):
        s = NVSite((0, 0, 0), 10.0)
        with pytest.raises(ValueError):
            NVArray((s, s), 100.0)

    def test_unordered_sites(self):
        a = NVSite((100, 0, 0), 10.0, label="A")
        b = NVSite((0, 0, 0), 10.0, label="B")
        with pytest.raises(ValueError):
            NVArray((a, b), 100.0)

    def test_axis_normalised(self):
        arr = NVArray((NVSite((0, 0, 0), 10.0),), 100.0, nv_axis=(0, 0, 3))
        assert arr.nv_axis == (0.0, 0.0, 1.0)


@pytest.mark.parametrize("i,label", [(0, "A"), (3, "D"), (25, "Z"), (26, "AA"), (27, "AB"), (701, "ZZ"),
                                     (702, "AAA")])
def test_site_label(i, label):
    assert site_label(i) == label


class TestStatistics:
    def test_expected_count(self):
        # 60 nm aperture, 1e12 cm^-2 dose, 1% yield
        n = expected_nv_count(aperture_area(60.0), 1e12, 0.01)
        assert n == pytest.approx(np.pi * 900 * 1e-2 * 0.01, rel=1e-12)
        with pytest.raises(ValueError):
            expected_nv_count(-1, 1, 1)

    def test_offset_std(self):
        rng = np.random.default_rng(0)
        u = rng.uniform(-30, 30, 400_000)
        assert offset_std_1d(60.0) == pytest.approx(u.std(), rel=5e-3)

    @pytest.mark.parametrize("area,spacing", [(100.0, 10.0), (900.0, 96.0), (2827.4, 100.0)])
    def test_pair_separation_far_field(self, area, spacing):
        mean, std = pair_separation_stats(area, spacing, seed=1)
        radius = np.sqrt(area / np.pi)
        if spacing > 3 * radius:
            # transverse spread R^2/2 lengthens the mean by about R^2 / (4 D)
            assert mean == pytest.approx(spacing + radius**2 / (4 * spacing), rel=2e-3)
            assert std == pytest.approx(radius / np.sqrt(2), rel=0.03)
        else:
            assert std > 0

    def test_point_sites(self):
        assert pair_separation_stats(0.0, 50.0) == (50.0, 0.0)
        with pytest.raises(ValueError):
            pair_separation_stats(10.0, 0.0)
