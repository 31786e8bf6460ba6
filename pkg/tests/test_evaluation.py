"""NMSE metric, method evaluation, heatmap export, and table round trips."""

import math

import numpy as np
import pytest

from atfrecon import evaluation as ev
from atfrecon import krr, oracle
from atfrecon.core import ComplexPressure, Position3, default_scenario, wavenumber_of


def complex_list(values):
    return [ComplexPressure(z.real, z.imag) for z in values]


class TestNMSE:
    def test_exact_match_is_sentinel(self):
        vals = complex_list([1 + 2j, -0.5j, 3.0])
        assert ev.nmse(vals, vals) == ev.NMSE_SENTINEL

    def test_zero_predictor_is_zero_db(self):
        truth = complex_list([1 + 2j, -0.5j, 3.0])
        zero = complex_list([0j, 0j, 0j])
        assert ev.nmse(zero, truth) == pytest.approx(0.0, abs=1e-12)

    def test_half_scale(self):
        # |P - P/2|^2 / |P|^2 = 1/4 everywhere: 10 log10(0.25) dB
        rng = np.random.default_rng(0)
        truth = rng.normal(size=20) + 1j * rng.normal(size=20)
        assert ev.nmse(0.5 * truth, truth) == pytest.approx(-6.020599913279624, abs=1e-9)

    def test_all_zero_truth_rejected(self):
        with pytest.raises(ValueError):
            ev.nmse(complex_list([1 + 0j]), complex_list([0j]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ev.nmse(np.ones(3, dtype=complex), np.ones(4, dtype=complex))

    def test_invariant_under_common_complex_scale(self):
        rng = np.random.default_rng(1)
        truth = rng.normal(size=30) + 1j * rng.normal(size=30)
        pred = truth + 0.1 * (rng.normal(size=30) + 1j * rng.normal(size=30))
        scale = 2.3 - 1.7j
        assert ev.nmse(scale * pred, scale * truth) == pytest.approx(ev.nmse(pred, truth), rel=1e-12)

    def test_invariant_under_pair_permutation(self):
        rng = np.random.default_rng(2)
        truth = rng.normal(size=25) + 1j * rng.normal(size=25)
        pred = truth + 0.2 * rng.normal(size=25)
        perm = rng.permutation(25)
        assert ev.nmse(pred[perm], truth[perm]) == pytest.approx(ev.nmse(pred, truth), rel=1e-14)


class TestEvaluateMethod:
    def scenario(self):
        return default_scenario(frequencies=[400.0, 900.0])

    def test_oracle_scores_sentinel_everywhere(self):
        sc = self.scenario()
        ds = oracle.synth_dataset(sc, "test")
        table = ev.evaluate_method(oracle.scenario_oracle_predictor(sc), ds, method="oracle")
        assert len(table.rows) == 2
        assert all(r.nmse_db == ev.NMSE_SENTINEL for r in table.rows)
        assert all(r.n_pairs == 1920 for r in table.rows)

    def test_zero_predictor_scores_zero_db(self):
        sc = self.scenario()
        ds = oracle.synth_dataset(sc, "test")
        table = ev.evaluate_method(ev.zero_predictor(), ds, method="zero")
        assert all(r.nmse_db == pytest.approx(0.0, abs=1e-12) for r in table.rows)

    def test_row_count_matches_frequencies(self):
        sc = self.scenario()
        ds = oracle.synth_dataset(sc, "train")
        table = ev.evaluate_method(ev.zero_predictor(), ds)
        assert [r.frequency for r in table.sorted_rows()] == [400.0, 900.0]

    def test_unbatched_predictor_equivalent(self):
        sc = default_scenario(frequencies=[500.0])
        ds = oracle.synth_dataset(sc, "train")

        def slow_oracle(r, s, f):
            k = wavenumber_of(f, sc.speed_of_sound)
            return oracle.green_free_field(r, s, k)

        fast = ev.evaluate_method(oracle.scenario_oracle_predictor(sc), ds)
        slow = ev.evaluate_method(slow_oracle, ds)
        assert fast.rows[0].nmse_db == slow.rows[0].nmse_db == ev.NMSE_SENTINEL

    def test_whole_dataset_equals_concatenated_pairs(self):
        # per-frequency rows must aggregate over raw pairs, not sub-averages
        sc = default_scenario(frequencies=[700.0])
        ds = oracle.synth_dataset(sc, "test")
        truth = ds.pressures()
        rng = np.random.default_rng(3)
        noise = 0.3 * np.abs(truth).mean() * (rng.normal(size=truth.size) + 1j * rng.normal(size=truth.size))

        class Noisy:
            def __call__(self, r, s, f):
                raise AssertionError("batched path expected")

            def predict_many(self, R, S, f):
                return truth + noise

        table = ev.evaluate_method(Noisy(), ds)
        assert table.rows[0].nmse_db == pytest.approx(ev.nmse(truth + noise, truth), rel=1e-14)


class TestCompareMethods:
    def test_interleaved_rows_and_checksums(self):
        sc = default_scenario(frequencies=[300.0])
        train = oracle.synth_dataset(sc, "train")
        k = wavenumber_of(300.0, sc.speed_of_sound)
        krr_model = krr.fit(train.for_frequency(300.0), krr.KernelConfig(wavenumber=k, regularization=1e-10))

        from atfrecon import models as md, training as tr

        norm = md.InputNorm.from_box(sc.union_box())
        bank = {}
        for part in ("real", "imag"):
            m = tr.make_bin_model(
                "full", norm, 300.0, part, init_seed=1,
                phi_spec=md.MLPSpec(3, (6,), 4), rho_spec=md.MLPSpec(4, (6,), 1),
            )
            bank[(300.0, part)] = m
        table = ev.compare_methods(sc, bank, {300.0: krr_model})
        methods = [r.method for r in table.sorted_rows()]
        assert methods == ["krr", "pinn"]
        assert table.dataset_checksum != ""

    def test_missing_coverage_raises(self):
        sc = default_scenario(frequencies=[300.0, 600.0])
        with pytest.raises(ev.CoverageError):
            ev.compare_methods(sc, {}, {})


class TestHeatmap:
    def test_grid_shape_and_coordinates(self):
        sc = default_scenario(frequencies=[1500.0])
        grid = ev.oracle_heatmap(sc, source_index=2, frequency=1500.0, part="real")
        assert grid.values.shape == (57, 57)
        assert grid.xs[0] == pytest.approx(-0.14)
        assert grid.xs[-1] == pytest.approx(0.14)
        assert np.allclose(np.diff(grid.xs), 0.005)

    def test_zero_predictor_all_zero(self):
        sc = default_scenario(frequencies=[500.0])
        grid = ev.export_heatmap(ev.zero_predictor(), sc, 0, 500.0, "real")
        assert np.all(grid.values == 0.0)

    def test_wave_structure_has_expected_spatial_period(self):
        # along the row through the source direction, sign changes of the
        # real part are half a wavelength apart: c / f / 2
        sc = default_scenario(frequencies=[1500.0])
        grid = ev.oracle_heatmap(sc, source_index=0, frequency=1500.0, part="real")
        mid = np.argmin(np.abs(grid.ys))  # row nearest y = 0 (source 0 sits at angle 0)
        row = grid.values[mid]
        signs = np.sign(row)
        crossings = np.flatnonzero(np.diff(signs) != 0)
        assert len(crossings) >= 2
        spacing = np.diff(grid.xs[crossings]).mean()
        half_wavelength = sc.speed_of_sound / 1500.0 / 2.0
        assert spacing == pytest.approx(half_wavelength, rel=0.1)

    def test_out_of_domain_grid_rejected(self):
        sc = default_scenario(frequencies=[500.0])
        with pytest.raises(ValueError):
            ev.export_heatmap(ev.zero_predictor(), sc, 0, 500.0, "real", n_points=201, pitch=0.005)

    def test_bad_source_index_rejected(self):
        sc = default_scenario(frequencies=[500.0])
        with pytest.raises(ValueError):
            ev.export_heatmap(ev.zero_predictor(), sc, 60, 500.0)

    def test_csv_round_trip_layout(self, tmp_path):
        sc = default_scenario(frequencies=[500.0])
        grid = ev.oracle_heatmap(sc, 0, 500.0, n_points=5, pitch=0.005)
        path = tmp_path / "grid.csv"
        grid.save_csv(str(path))
        lines = path.read_text().splitlines()
        assert len(lines) == 6  # header + 5 rows
        header = lines[0].split(",")
        assert header[0] == "" and len(header) == 6
        first_row = lines[1].split(",")
        assert float(first_row[0]) == pytest.approx(grid.ys[0])


class TestTableSerialization:
    def make_table(self):
        return ev.NMSETable(
            rows=[
                ev.NMSERow(500.0, "pinn", "full", -12.5, 1920),
                ev.NMSERow(500.0, "krr", "", ev.NMSE_SENTINEL, 1920),
                ev.NMSERow(1000.0, "pinn", "full", 0.25, 1920),
            ],
            dataset_checksum="abc123",
            config_hash="def456",
        )

    def test_round_trip(self, tmp_path):
        table = self.make_table()
        path = tmp_path / "table.csv"
        table.save_csv(str(path))
        loaded = ev.NMSETable.load_csv(str(path))
        assert loaded.dataset_checksum == "abc123"
        assert loaded.config_hash == "def456"
        assert loaded.sorted_rows() == table.sorted_rows()

    def test_sentinel_printed_readably(self):
        text = self.make_table().to_csv_text()
        assert "<-300" in text
        assert "-inf" not in text

    def test_merge_rejects_different_datasets(self):
        a = self.make_table()
        b = self.make_table()
        b.dataset_checksum = "zzz"
        with pytest.raises(ValueError):
            a.merged_with(b)
