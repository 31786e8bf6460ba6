"""Analytic field oracles: closed forms, reciprocity, Helmholtz residuals,
scenario synthesis, and impulse-response ingestion."""

import json
import math

import numpy as np
import pytest

from atfrecon import core, oracle
from atfrecon.core import ComplexPressure, Position3


class TestFreeField:
    def test_unit_distance_full_cycle(self):
        # d = 1, k = 2*pi: phase factor exp(-j 2 pi) = 1, value 1/(4 pi)
        g = oracle.green_free_field(Position3(0, 0, 0), Position3(1, 0, 0), 2.0 * math.pi)
        assert g.re == pytest.approx(1.0 / (4.0 * math.pi), rel=1e-12)
        assert g.im == pytest.approx(0.0, abs=1e-12)

    def test_static_limit(self):
        g = oracle.green_free_field(Position3(0, 0, 0), Position3(0, 0, 2.0), 0.0)
        assert g.re == pytest.approx(1.0 / (8.0 * math.pi), rel=1e-12)
        assert g.im == 0.0

    def test_reciprocity_randomized(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            r = Position3(*rng.uniform(-1, 1, 3))
            s = Position3(*rng.uniform(1.5, 3.0, 3))
            k = float(rng.uniform(0.5, 40.0))
            a = oracle.green_free_field(r, s, k).as_complex()
            b = oracle.green_free_field(s, r, k).as_complex()
            assert abs(a - b) <= 1e-12 * abs(a)

    def test_singularity_guarded(self):
        with pytest.raises(ValueError):
            oracle.green_free_field(Position3(0, 0, 0), Position3(0, 0, 1e-9), 1.0)

    def test_magnitude_decays_as_inverse_distance(self):
        k = 10.0
        g1 = oracle.green_free_field(Position3(0, 0, 0), Position3(1, 0, 0), k)
        g2 = oracle.green_free_field(Position3(0, 0, 0), Position3(2, 0, 0), k)
        assert g1.abs() == pytest.approx(2.0 * g2.abs(), rel=1e-12)


class TestFloorReflection:
    def test_zero_beta_equals_free_field(self):
        r, s = Position3(0.1, 0.2, 0.5), Position3(1.0, 1.2, 0.8)
        k = 7.0
        a = oracle.green_floor_reflection(r, s, k, floor_z=-1.0, beta=0.0)
        b = oracle.green_free_field(r, s, k)
        assert a == b

    def test_reciprocity_randomized(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            r = Position3(*rng.uniform(-1, 1, 2), rng.uniform(0.1, 1.0))
            s = Position3(*rng.uniform(1.5, 3.0, 2), rng.uniform(0.1, 1.0))
            k = float(rng.uniform(0.5, 40.0))
            a = oracle.green_floor_reflection(r, s, k, floor_z=0.0, beta=0.8).as_complex()
            b = oracle.green_floor_reflection(s, r, k, floor_z=0.0, beta=0.8).as_complex()
            assert abs(a - b) <= 1e-12 * abs(a)

    def test_image_path_geometry(self):
        # equal heights h above the floor: image path sqrt(dxy^2 + (2h)^2)
        h, dxy, k = 0.7, 2.0, 3.0
        r, s = Position3(0, 0, h), Position3(dxy, 0, h)
        got = oracle.green_floor_reflection(r, s, k, floor_z=0.0, beta=1.0).as_complex()
        d_image = math.hypot(dxy, 2 * h)
        want = (
            np.exp(-1j * k * dxy) / (4 * np.pi * dxy)
            + np.exp(-1j * k * d_image) / (4 * np.pi * d_image)
        )
        assert got == pytest.approx(want, rel=1e-12)

    def test_position_below_floor_rejected(self):
        with pytest.raises(ValueError):
            oracle.green_floor_reflection(Position3(0, 0, -0.1), Position3(1, 0, 0.5), 1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            oracle.green_floor_reflection(Position3(0, 0, 0.5), Position3(1, 0, 0.0), 1.0, 0.0, 1.0)


class TestHelmholtzResidual:
    def test_constant_field_residual_is_k_squared(self):
        from atfrecon import autodiff as ad

        field = ad.ScalarField(root=ad.const_vector([1.0]), n_inputs=3, layout=ad.ParamLayout({}))
        k = 3.5
        got = oracle.helmholtz_residual_numeric(field, [0.1, 0.2, 0.3], k)
        assert got == pytest.approx(k * k, rel=1e-12)

    @pytest.mark.parametrize("k", [2.0, 27.5])
    @pytest.mark.parametrize("part", ["real", "imag"])
    def test_free_field_solves_helmholtz(self, k, part):
        src = Position3(1.5, 0.0, 0.0)
        field = oracle.free_field_scalar_field(src, k, part)
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = rng.uniform(-0.5, 0.5, 3)
            g = oracle.green_free_field(Position3(*x), src, k)
            assert oracle.helmholtz_residual_numeric(field, x, k) <= 1e-8 * k * k * g.abs()

    @pytest.mark.parametrize("part", ["real", "imag"])
    def test_floor_reflection_solves_helmholtz(self, part):
        k = 10.0
        src = Position3(1.5, 0.2, 0.5)
        field = oracle.floor_reflection_scalar_field(src, k, part, floor_z=-0.5, beta=0.9)
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = rng.uniform(-0.4, 0.4, 3)
            g = oracle.green_floor_reflection(Position3(*x), src, k, floor_z=-0.5, beta=0.9)
            assert oracle.helmholtz_residual_numeric(field, x, k) <= 1e-8 * k * k * g.abs()

    def test_field_values_match_green_function(self):
        k, src = 12.0, Position3(1.2, -0.4, 0.3)
        from atfrecon import autodiff as ad

        f_re = oracle.free_field_scalar_field(src, k, "real")
        f_im = oracle.free_field_scalar_field(src, k, "imag")
        rng = np.random.default_rng(4)
        for _ in range(20):
            x = rng.uniform(-0.5, 0.5, 3)
            g = oracle.green_free_field(Position3(*x), src, k)
            no_params = ad.ParamVector.zeros(ad.ParamLayout({}))
            assert ad.eval_field(f_re, x, no_params) == pytest.approx(g.re, rel=1e-12, abs=1e-15)
            assert ad.eval_field(f_im, x, no_params) == pytest.approx(g.im, rel=1e-12, abs=1e-15)


class TestSynthDataset:
    def test_train_split_counts(self):
        sc = core.default_scenario(frequencies=[500.0, 1000.0])
        ds = oracle.synth_dataset(sc, "train")
        assert len(ds.samples) == 30 * 28 * 2
        assert ds.frequencies() == (500.0, 1000.0)

    def test_test_split_counts(self):
        sc = core.default_scenario(frequencies=[500.0])
        ds = oracle.synth_dataset(sc, "test")
        assert len(ds.samples) == 30 * 64  # 1920 pairs per frequency

    def test_samples_validate(self):
        sc = core.default_scenario(frequencies=[750.0])
        report = core.validate_dataset(oracle.synth_dataset(sc, "train"))
        assert report.ok

    def test_values_match_oracle(self):
        sc = core.default_scenario(frequencies=[500.0])
        ds = oracle.synth_dataset(sc, "test")
        sample = ds.samples[137]
        k = core.wavenumber_of(sample.frequency, sc.speed_of_sound)
        expect = oracle.green_free_field(sample.receiver, sample.source, k)
        assert sample.pressure == expect

    def test_floor_reflection_room(self):
        sc = core.default_scenario(frequencies=[500.0], room_kind="floor_reflection", floor_z=-1.0)
        ds = oracle.synth_dataset(sc, "train")
        sample = ds.samples[0]
        k = core.wavenumber_of(sample.frequency, sc.speed_of_sound)
        expect = oracle.green_floor_reflection(sample.receiver, sample.source, k, -1.0, 1.0)
        assert sample.pressure == expect

    def test_bad_split_rejected(self):
        sc = core.default_scenario(frequencies=[500.0])
        with pytest.raises(ValueError):
            oracle.synth_dataset(sc, "validation")


class TestRIRToATF:
    def test_unit_impulse_flat_spectrum(self):
        rir = oracle.RIRRecord(
            samples=np.eye(1, 4000, 0).ravel(), sample_rate=8000.0,
            receiver=Position3(0, 0, 0), source=Position3(1, 0, 0),
        )
        h = oracle.rir_to_atf(rir, [100.0, 500.0, 1999.0])
        assert np.allclose(h, 1.0 + 0.0j, atol=1e-12)

    def test_on_grid_cosine_magnitude(self):
        # cosine at a DFT-grid frequency over L samples has magnitude L/2
        fs, L = 8000.0, 4000
        m = 50  # grid bin: f0 = m fs / L = 100 Hz
        f0 = m * fs / L
        n = np.arange(L)
        rir = oracle.RIRRecord(
            samples=np.cos(2 * np.pi * f0 * n / fs), sample_rate=fs,
            receiver=Position3(0, 0, 0), source=Position3(1, 0, 0),
        )
        h = oracle.rir_to_atf(rir, [f0], truncation_s=L / fs)
        assert abs(h[0]) == pytest.approx(L / 2.0, abs=1e-9 * L)

    def test_zero_rir(self):
        rir = oracle.RIRRecord(np.zeros(100), 1000.0, Position3(0, 0, 0), Position3(1, 0, 0))
        assert np.all(oracle.rir_to_atf(rir, [100.0, 200.0]) == 0.0)

    def test_truncation_sample_count(self):
        # first 0.5 s at 8 kHz = 4000 samples exactly; sample 4000 must not count
        fs = 8000.0
        samples = np.zeros(8000)
        samples[3999] = 1.0  # kept
        samples[4000] = 100.0  # dropped
        rir = oracle.RIRRecord(samples, fs, Position3(0, 0, 0), Position3(1, 0, 0))
        h = oracle.rir_to_atf(rir, [400.0], truncation_s=0.5)
        expect = np.exp(-2j * np.pi * 400.0 * 3999 / fs)
        assert h[0] == pytest.approx(expect, rel=1e-12)

    def test_nyquist_rejected(self):
        rir = oracle.RIRRecord(np.ones(10), 1000.0, Position3(0, 0, 0), Position3(1, 0, 0))
        with pytest.raises(ValueError):
            oracle.rir_to_atf(rir, [500.0])
        with pytest.raises(ValueError):
            oracle.rir_to_atf(rir, [0.0])

    def test_linearity_in_signal(self):
        rng = np.random.default_rng(5)
        fs = 4000.0
        a = rng.normal(size=2000)
        b = rng.normal(size=2000)
        mk = lambda sig: oracle.RIRRecord(sig, fs, Position3(0, 0, 0), Position3(1, 0, 0))
        freqs = [100.0, 700.0]
        ha = oracle.rir_to_atf(mk(a), freqs)
        hb = oracle.rir_to_atf(mk(b), freqs)
        hab = oracle.rir_to_atf(mk(2.0 * a + 3.0 * b), freqs)
        assert np.allclose(hab, 2.0 * ha + 3.0 * hb, rtol=1e-12)


class TestIngest:
    def write_manifest(self, tmp_path, entries, **overrides):
        manifest = {
            "sample_rate": 8000.0,
            "frequencies": [500.0, 1000.0],
            "truncation_s": 0.5,
            "entries": entries,
            **overrides,
        }
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps(manifest))
        return str(path)

    def test_impulse_entries(self, tmp_path):
        entries = []
        for i in range(3):
            sig = np.zeros(100)
            sig[0] = 1.0
            np.savetxt(tmp_path / f"rir{i}.csv", sig)
            entries.append(
                {"file": f"rir{i}.csv", "rx": 0.0, "ry": 0.1 * i, "rz": 0.0,
                 "sx": 1.5, "sy": 0.0, "sz": 0.0}
            )
        ds = oracle.ingest_rir_directory(self.write_manifest(tmp_path, entries))
        assert len(ds.samples) == 3 * 2
        assert all(s.pressure == ComplexPressure(1.0, 0.0) for s in ds.samples)

    def test_missing_file_named_in_error(self, tmp_path):
        entries = [{"file": "absent.csv", "rx": 0, "ry": 0, "rz": 0, "sx": 1, "sy": 0, "sz": 0}]
        with pytest.raises(oracle.IngestError, match="absent.csv"):
            oracle.ingest_rir_directory(self.write_manifest(tmp_path, entries))

    def test_inconsistent_sample_rate_rejected(self, tmp_path):
        np.savetxt(tmp_path / "a.csv", np.ones(10))
        entries = [
            {"file": "a.csv", "rx": 0, "ry": 0, "rz": 0, "sx": 1, "sy": 0, "sz": 0,
             "sample_rate": 44100.0}
        ]
        with pytest.raises(oracle.IngestError, match="sample rate"):
            oracle.ingest_rir_directory(self.write_manifest(tmp_path, entries))

    def test_malformed_manifest_rejected(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text('{"sample_rate": 8000.0}')
        with pytest.raises(oracle.IngestError, match="frequencies"):
            oracle.ingest_rir_directory(str(path))

    def test_round_trip_against_direct_oracle(self, tmp_path):
        # a pulse whose spectrum is the free-field value at each frequency:
        # synthesize the RIR as an exact fractional-delay impulse via its
        # band-limited reconstruction is overkill; instead place the impulse
        # on-grid so the delay and 1/(4 pi d) gain land exactly
        fs = 8000.0
        c = 343.0
        delay_samples = 20
        d = c * delay_samples / fs  # distance giving an integer-sample delay
        gain = 1.0 / (4.0 * np.pi * d)
        sig = np.zeros(4000)
        sig[delay_samples] = gain
        np.savetxt(tmp_path / "rir.csv", sig)
        entries = [{"file": "rir.csv", "rx": 0.0, "ry": 0.0, "rz": 0.0,
                    "sx": d, "sy": 0.0, "sz": 0.0}]
        freqs = [500.0, 1000.0, 1500.0]
        path = self.write_manifest(tmp_path, entries, frequencies=freqs, speed_of_sound=c)
        ds = oracle.ingest_rir_directory(path)
        for s in ds.samples:
            k = core.wavenumber_of(s.frequency, c)
            expect = oracle.green_free_field(s.receiver, s.source, k)
            assert s.pressure.as_complex() == pytest.approx(expect.as_complex(), rel=1e-9)
