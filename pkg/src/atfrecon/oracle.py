"""Analytic sound fields and data synthesis.

The free-field point-source solution and its single-image floor-reflection
variant are exact solutions of the homogeneous Helmholtz equation away from
the source and obey reciprocity, which makes every downstream component
verifiable without measured data.  The time-harmonic convention is
exp(+j omega t), so an outgoing wave carries exp(-j k d); under the other
convention the imaginary part flips sign.

Also here: scenario-driven dataset synthesis (train split = training
sources x training receivers, test split = held-out sources x all
receivers) and impulse-response ingestion via direct discrete-time Fourier
sums at the requested frequencies.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import (
    ATFDataset,
    ATFSample,
    ComplexPressure,
    DatasetFormatError,
    Position3,
    ScenarioConfig,
    wavenumber_of,
)

MIN_SOURCE_DISTANCE = 1e-6  # meters; oracle evaluation guard


class IngestError(ValueError):
    """Raised when an impulse-response manifest cannot be ingested."""


def _as_points(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64).reshape(-1, 3)


def green_free_field_many(receivers, sources, k: float) -> np.ndarray:
    """exp(-j k d) / (4 pi d) for paired rows of positions."""
    r, s = _as_points(receivers), _as_points(sources)
    d = np.linalg.norm(r - s, axis=1)
    if np.any(d < MIN_SOURCE_DISTANCE):
        raise ValueError(f"source/receiver distance below {MIN_SOURCE_DISTANCE} m")
    if k < 0.0:
        raise ValueError(f"wavenumber must be non-negative, got {k}")
    return np.exp(-1j * k * d) / (4.0 * np.pi * d)


def green_free_field(r: Position3, s: Position3, k: float) -> ComplexPressure:
    """Free-field point-source transfer function; symmetric in (r, s)."""
    z = green_free_field_many(r.as_array(), s.as_array(), k)[0]
    return ComplexPressure.from_complex(complex(z))


def mirror_across_floor(p, floor_z: float) -> np.ndarray:
    pts = _as_points(p).copy()
    pts[:, 2] = 2.0 * floor_z - pts[:, 2]
    return pts


def green_floor_reflection_many(receivers, sources, k: float, floor_z: float, beta: float) -> np.ndarray:
    r, s = _as_points(receivers), _as_points(sources)
    if np.any(r[:, 2] <= floor_z) or np.any(s[:, 2] <= floor_z):
        raise ValueError(f"positions must lie strictly above the floor at z={floor_z}")
    if not (0.0 <= beta <= 1.0):
        raise ValueError(f"reflection coefficient must be in [0, 1], got {beta}")
    direct = green_free_field_many(r, s, k)
    image = green_free_field_many(r, mirror_across_floor(s, floor_z), k)
    return direct + beta * image


def green_floor_reflection(r: Position3, s: Position3, k: float, floor_z: float, beta: float) -> ComplexPressure:
    """Free field plus one image source mirrored across the z=floor_z plane."""
    z = green_floor_reflection_many(r.as_array(), s.as_array(), k, floor_z, beta)[0]
    return ComplexPressure.from_complex(complex(z))


def scenario_green_many(scenario: ScenarioConfig, receivers, sources, k: float) -> np.ndarray:
    if scenario.room_kind == "free_field":
        return green_free_field_many(receivers, sources, k)
    return green_floor_reflection_many(receivers, sources, k, scenario.floor_z, scenario.reflection_coeff)


# ---------------------------------------------------------------------------
# Closed-form fields as differentiable scalar fields.  These run through the
# same differentiation engine as the models, so the Helmholtz residual check
# exercises the Laplacian machinery on a function whose residual is known to
# vanish identically.

_NO_PARAMS = ad.ParamVector.zeros(ad.ParamLayout({}))

_HALF_PI = math.pi / 2.0


def _point_source_expr(source: Position3, k: float, part: str, amplitude: float = 1.0) -> ad.FieldExpr:
    """cos(kd)/(4 pi d) or -sin(kd)/(4 pi d) over receiver coordinates."""
    diff = ad.affine_const(ad.coords([0, 1, 2]), np.eye(3), -source.as_array())
    dist = ad.sqrt_of(ad.sum_features(ad.mul_fields(diff, diff)))
    amp = ad.affine_const(ad.reciprocal_of(dist), [[amplitude / (4.0 * math.pi)]])
    if part == "real":
        # cos(k d) written as sin(k d + pi/2)
        osc = ad.sine_of(ad.affine_const(dist, [[k]], [_HALF_PI]))
    elif part == "imag":
        osc = ad.affine_const(ad.sine_of(ad.affine_const(dist, [[k]])), [[-1.0]])
    else:
        raise ValueError(f"part must be 'real' or 'imag', got {part!r}")
    return ad.mul_fields(osc, amp)


def free_field_scalar_field(source: Position3, k: float, part: str) -> ad.ScalarField:
    """One component of the free-field solution as a 3-input scalar field."""
    return ad.ScalarField(root=_point_source_expr(source, k, part), n_inputs=3, layout=ad.ParamLayout({}))


def floor_reflection_scalar_field(
    source: Position3, k: float, part: str, floor_z: float, beta: float
) -> ad.ScalarField:
    image = Position3.from_array(mirror_across_floor(source.as_array(), floor_z)[0])
    root = ad.add_fields(
        _point_source_expr(source, k, part),
        _point_source_expr(image, k, part, amplitude=beta),
    )
    return ad.ScalarField(root=root, n_inputs=3, layout=ad.ParamLayout({}))


def helmholtz_residual_numeric(field: ad.ScalarField, point, k: float) -> float:
    """|laplacian(P) + k^2 P| via engine derivatives of the closed form."""
    x = np.asarray(point, dtype=np.float64).reshape(field.n_inputs)
    lap = ad.laplacian(field, x, _NO_PARAMS, tuple(range(min(3, field.n_inputs))))
    val = ad.eval_field(field, x, _NO_PARAMS)
    return abs(lap + k * k * val)


# ---------------------------------------------------------------------------
# Scenario synthesis


def synth_dataset(scenario: ScenarioConfig, split: str) -> ATFDataset:
    """Evaluate the configured oracle over one scenario split.

    Train pairs = training sources x training receivers; test pairs =
    held-out sources x the full receiver set.  Sample order is frequency,
    then source, then receiver, matching the file format's row order.
    """
    if split == "train":
        src_idx, rec_idx = scenario.train_source_indices, scenario.train_receiver_indices
    elif split == "test":
        src_idx, rec_idx = scenario.test_source_indices, scenario.test_receiver_indices
    else:
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    receivers = scenario.receiver_positions()[list(rec_idx)]
    sources = scenario.source_positions()[list(src_idx)]
    samples: list[ATFSample] = []
    for f in scenario.frequencies:
        k = wavenumber_of(f, scenario.speed_of_sound)
        for s_row in sources:
            values = scenario_green_many(scenario, receivers, np.tile(s_row, (len(receivers), 1)), k)
            source = Position3.from_array(s_row)
            for r_row, z in zip(receivers, values):
                samples.append(
                    ATFSample(
                        receiver=Position3.from_array(r_row),
                        source=source,
                        frequency=float(f),
                        pressure=ComplexPressure.from_complex(complex(z)),
                    )
                )
    label = f"synthetic-{scenario.room_kind}-{split}"
    return ATFDataset(samples=tuple(samples), speed_of_sound=scenario.speed_of_sound, label=label)


def scenario_oracle_predictor(scenario: ScenarioConfig):
    """A predictor closure (r, s, f) -> ComplexPressure over the scenario's room."""

    def predict(r: Position3, s: Position3, f: float) -> ComplexPressure:
        k = wavenumber_of(f, scenario.speed_of_sound)
        z = scenario_green_many(scenario, r.as_array(), s.as_array(), k)[0]
        return ComplexPressure.from_complex(complex(z))

    def predict_many(receivers, sources, f: float) -> np.ndarray:
        k = wavenumber_of(f, scenario.speed_of_sound)
        return scenario_green_many(scenario, receivers, sources, k)

    predict.predict_many = predict_many
    return predict


# ---------------------------------------------------------------------------
# Impulse-response ingestion


@dataclass(frozen=True)
class RIRRecord:
    """One time-domain impulse response between a fixed pair of positions."""

    samples: np.ndarray
    sample_rate: float
    receiver: Position3
    source: Position3

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64).reshape(-1))
        if self.samples.size == 0:
            raise ValueError("impulse response must be non-empty")
        if not (self.sample_rate > 0.0):
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")


def rir_to_atf(rir: RIRRecord, frequencies, truncation_s: float = 0.5) -> np.ndarray:
    """Direct discrete-time Fourier sum of the first ``truncation_s`` seconds.

    H(f) = sum_n h[n] exp(-j 2 pi f n / fs) over n < floor(truncation_s * fs).
    Returns one complex value per requested frequency.
    """
    if not (truncation_s > 0.0):
        raise ValueError(f"truncation must be positive, got {truncation_s}")
    freqs = np.asarray(frequencies, dtype=np.float64).reshape(-1)
    nyquist = rir.sample_rate / 2.0
    for f in freqs:
        if not (0.0 < f < nyquist):
            raise ValueError(f"frequency {f} Hz outside (0, Nyquist={nyquist} Hz)")
    n_keep = int(math.floor(truncation_s * rir.sample_rate))
    h = rir.samples[:n_keep]
    n = np.arange(h.size)
    basis = np.exp((-2j * math.pi / rir.sample_rate) * np.outer(freqs, n))
    return basis @ h


RIR_MANIFEST_KEYS = ("sample_rate", "frequencies", "entries")


def ingest_rir_directory(manifest_path: str) -> ATFDataset:
    """Build an ATF dataset from a JSON manifest of impulse-response files.

    Manifest schema: {sample_rate, frequencies, entries: [{file, rx, ry, rz,
    sx, sy, sz}], truncation_s?, speed_of_sound?, label?}.  Entry files are
    CSV, one amplitude per line, relative to the manifest location.  An
    entry may carry its own sample_rate only if it matches the manifest's.
    """
    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IngestError(f"manifest is not valid JSON: {exc}") from exc
    for key in RIR_MANIFEST_KEYS:
        if key not in manifest:
            raise IngestError(f"manifest is missing required key {key!r}")
    sample_rate = float(manifest["sample_rate"])
    frequencies = [float(f) for f in manifest["frequencies"]]
    if not frequencies:
        raise IngestError("manifest lists no frequencies")
    truncation_s = float(manifest.get("truncation_s", 0.5))
    base = os.path.dirname(os.path.abspath(manifest_path))
    samples: list[ATFSample] = []
    for i, entry in enumerate(manifest["entries"]):
        try:
            rel = entry["file"]
            receiver = Position3(float(entry["rx"]), float(entry["ry"]), float(entry["rz"]))
            source = Position3(float(entry["sx"]), float(entry["sy"]), float(entry["sz"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"entry {i}: malformed record ({exc})") from exc
        if "sample_rate" in entry and float(entry["sample_rate"]) != sample_rate:
            raise IngestError(
                f"entry {i} ({rel}): sample rate {entry['sample_rate']} "
                f"differs from manifest value {sample_rate}"
            )
        path = os.path.join(base, rel)
        if not os.path.exists(path):
            raise IngestError(f"entry {i}: file not found: {rel}")
        try:
            amplitudes = np.loadtxt(path, dtype=np.float64, ndmin=1)
        except ValueError as exc:
            raise IngestError(f"entry {i} ({rel}): unreadable amplitudes ({exc})") from exc
        rir = RIRRecord(samples=amplitudes, sample_rate=sample_rate, receiver=receiver, source=source)
        for f, z in zip(frequencies, rir_to_atf(rir, frequencies, truncation_s)):
            samples.append(
                ATFSample(receiver=receiver, source=source, frequency=f,
                          pressure=ComplexPressure.from_complex(complex(z)))
            )
    if not samples:
        raise IngestError("manifest lists no entries")
    return ATFDataset(
        samples=tuple(samples),
        speed_of_sound=float(manifest.get("speed_of_sound", 343.0)),
        label=str(manifest.get("label", "ingested")),
    )
