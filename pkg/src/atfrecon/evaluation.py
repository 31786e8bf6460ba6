"""Scoring and experiment drivers: normalized error tables, the four-variant
ablation, method comparison, and heatmap export.

The metric is NMSE(f) = 10 log10( sum |P - Phat|^2 / sum |P|^2 ) over all
test pairs of one frequency.  0 dB is the all-zero predictor; an exact
reconstruction has -inf dB, represented by an explicit sentinel and printed
as "<-300" in CSV output.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import krr as kr
from . import models as md
from . import training as tr
from .core import ATFDataset, ComplexPressure, Position3, ScenarioConfig, wavenumber_of
from .fileio import sha256_hex, write_text_atomic
from .oracle import scenario_oracle_predictor, synth_dataset

NMSE_SENTINEL = float("-inf")
NMSE_SENTINEL_TEXT = "<-300"


class CoverageError(ValueError):
    """A predictor does not cover every frequency the dataset requires."""


def nmse(predictions, truths) -> float:
    """NMSE in dB over paired complex values; -inf sentinel for exact match."""
    pred = _as_complex_array(predictions)
    truth = _as_complex_array(truths)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError(f"need equal non-empty value lists, got {pred.shape} vs {truth.shape}")
    denom = float(np.sum(np.abs(truth) ** 2))
    if denom == 0.0:
        raise ValueError("NMSE is undefined for all-zero ground truth")
    num = float(np.sum(np.abs(pred - truth) ** 2))
    if num == 0.0:
        return NMSE_SENTINEL
    return 10.0 * math.log10(num / denom)


def _as_complex_array(values) -> np.ndarray:
    if isinstance(values, np.ndarray):
        return values.astype(complex).reshape(-1)
    out = []
    for v in values:
        out.append(v.as_complex() if isinstance(v, ComplexPressure) else complex(v))
    return np.array(out, dtype=complex)


@dataclass(frozen=True)
class NMSERow:
    frequency: float
    method: str
    variant: str
    nmse_db: float
    n_pairs: int

    def __post_init__(self):
        if self.n_pairs <= 0:
            raise ValueError("n_pairs must be positive")
        if math.isnan(self.nmse_db):
            raise ValueError("nmse_db must be finite or the -inf sentinel")


@dataclass
class NMSETable:
    """Rows of per-frequency scores plus provenance for reproducibility."""

    rows: list[NMSERow] = field(default_factory=list)
    dataset_checksum: str = ""
    config_hash: str = ""

    def sorted_rows(self) -> list[NMSERow]:
        return sorted(self.rows, key=lambda r: (r.frequency, r.method, r.variant))

    def merged_with(self, other: "NMSETable") -> "NMSETable":
        if other.dataset_checksum and self.dataset_checksum and other.dataset_checksum != self.dataset_checksum:
            raise ValueError("cannot merge tables scored on different datasets")
        return NMSETable(
            rows=self.rows + other.rows,
            dataset_checksum=self.dataset_checksum or other.dataset_checksum,
            config_hash=self.config_hash or other.config_hash,
        )

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# dataset_sha256={self.dataset_checksum},config_hash={self.config_hash}\n")
        buf.write("f_hz,method,variant,nmse_db,n_pairs\n")
        for r in self.sorted_rows():
            db = NMSE_SENTINEL_TEXT if r.nmse_db == NMSE_SENTINEL else repr(r.nmse_db)
            buf.write(f"{r.frequency!r},{r.method},{r.variant},{db},{r.n_pairs}\n")
        return buf.getvalue()

    def save_csv(self, path: str) -> None:
        write_text_atomic(path, self.to_csv_text())

    @staticmethod
    def from_csv_text(text: str) -> "NMSETable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        checksum, config_hash = "", ""
        if lines and lines[0].startswith("#"):
            meta = lines.pop(0)[1:].strip()
            for part in meta.split(","):
                key, _, value = part.partition("=")
                if key == "dataset_sha256":
                    checksum = value
                elif key == "config_hash":
                    config_hash = value
        if not lines or lines[0] != "f_hz,method,variant,nmse_db,n_pairs":
            raise ValueError("missing NMSE table header")
        rows = []
        for ln in lines[1:]:
            f_hz, method, variant, db, n_pairs = ln.split(",")
            value = NMSE_SENTINEL if db == NMSE_SENTINEL_TEXT else float(db)
            rows.append(NMSERow(float(f_hz), method, variant, value, int(n_pairs)))
        return NMSETable(rows=rows, dataset_checksum=checksum, config_hash=config_hash)

    @staticmethod
    def load_csv(path: str) -> "NMSETable":
        with open(path, "r", encoding="utf-8") as fh:
            return NMSETable.from_csv_text(fh.read())


# ---------------------------------------------------------------------------
# Predictors.  A predictor is a callable (Position3, Position3, f) ->
# ComplexPressure; an optional ``predict_many(R, S, f) -> complex array``
# attribute provides the batched fast path.


def model_bank_predictor(models: dict[tuple[float, str], md.Model]):
    """Batched predictor over a {(frequency, part): model} bank."""

    def pair_for(f: float) -> tuple[md.Model, md.Model]:
        try:
            return models[(f, "real")], models[(f, "imag")]
        except KeyError:
            raise CoverageError(f"no trained model pair for {f} Hz") from None

    def predict(r: Position3, s: Position3, f: float) -> ComplexPressure:
        m_re, m_im = pair_for(f)
        return md.predict_complex(m_re, m_im, r, s)

    def predict_many(receivers, sources, f: float) -> np.ndarray:
        m_re, m_im = pair_for(f)
        return md.predict_complex_many(m_re, m_im, receivers, sources)

    predict.predict_many = predict_many
    return predict


def krr_bank_predictor(models: dict[float, kr.KRRModel]):
    """Batched predictor over a {frequency: kernel model} bank."""

    def model_for(f: float) -> kr.KRRModel:
        try:
            return models[f]
        except KeyError:
            raise CoverageError(f"no kernel model for {f} Hz") from None

    def predict(r: Position3, s: Position3, f: float) -> ComplexPressure:
        return kr.predict(model_for(f), r, s)

    def predict_many(receivers, sources, f: float) -> np.ndarray:
        return kr.predict_many(model_for(f), receivers, sources)

    predict.predict_many = predict_many
    return predict


def zero_predictor():
    def predict(r: Position3, s: Position3, f: float) -> ComplexPressure:
        return ComplexPressure(0.0, 0.0)

    def predict_many(receivers, sources, f: float) -> np.ndarray:
        return np.zeros(np.asarray(receivers).reshape(-1, 3).shape[0], dtype=complex)

    predict.predict_many = predict_many
    return predict


def evaluate_method(
    predictor: Callable,
    dataset: ATFDataset,
    method: str = "method",
    variant: str = "",
) -> NMSETable:
    """One NMSE row per frequency over all of the dataset's pairs."""
    from .core import dataset_to_text

    table = NMSETable(dataset_checksum=sha256_hex(dataset_to_text(dataset).encode("utf-8")))
    batched = getattr(predictor, "predict_many", None)
    for f in dataset.frequencies():
        samples = dataset.for_frequency(f)
        truth = np.array([s.pressure.as_complex() for s in samples])
        if batched is not None:
            r = np.array([[s.receiver.x, s.receiver.y, s.receiver.z] for s in samples])
            s_ = np.array([[s.source.x, s.source.y, s.source.z] for s in samples])
            pred = batched(r, s_, f)
        else:
            pred = np.array([predictor(s.receiver, s.source, f).as_complex() for s in samples])
        table.rows.append(
            NMSERow(frequency=f, method=method, variant=variant, nmse_db=nmse(pred, truth), n_pairs=len(samples))
        )
    return table


# ---------------------------------------------------------------------------
# Experiment drivers


@dataclass
class AblationResult:
    table: NMSETable
    swap_invariant: dict[str, bool]
    models: dict[str, dict[tr.BinKey, md.Model]]
    reports: dict[str, dict[tr.BinKey, tr.LossReport]]
    failures: dict[str, dict[tr.BinKey, str]]


def run_ablation(
    scenario: ScenarioConfig,
    base_config: tr.TrainConfig,
    jobs: int = 1,
    variants: Sequence[str] = tr.VARIANTS,
) -> AblationResult:
    """Train every variant on identical data with shared seeds and score each
    on the scenario's test split.

    The per-bin seeds depend only on (config.seed, frequency, part), so all
    variants start from the same initialization family and see identical
    batch schedules; the architecture and loss terms are the only
    differences.
    """
    train_set = synth_dataset(scenario, "train")
    test_set = synth_dataset(scenario, "test")
    result = AblationResult(table=NMSETable(), swap_invariant={}, models={}, reports={}, failures={})
    for variant in variants:
        config = replace(base_config, variant=variant)
        outcome = tr.train_all_bins(train_set, scenario, config, jobs=jobs)
        result.models[variant] = outcome.models
        result.reports[variant] = outcome.reports
        if outcome.failures:
            result.failures[variant] = outcome.failures
            continue
        predictor = model_bank_predictor(outcome.models)
        part_table = evaluate_method(predictor, test_set, method="pinn", variant=variant)
        result.table = result.table.merged_with(part_table)
        result.swap_invariant[variant] = all(
            md.swap_invariance_probe(m, seed=17) for m in outcome.models.values()
        )
    return result


def compare_methods(
    scenario: ScenarioConfig,
    pinn_models: dict[tr.BinKey, md.Model],
    krr_models: dict[float, kr.KRRModel],
) -> NMSETable:
    """Interleaved per-frequency scores for both methods on one test set."""
    test_set = synth_dataset(scenario, "test")
    for f in test_set.frequencies():
        if (f, "real") not in pinn_models or (f, "imag") not in pinn_models:
            raise CoverageError(f"network models missing frequency {f} Hz")
        if f not in krr_models:
            raise CoverageError(f"kernel models missing frequency {f} Hz")
    table = evaluate_method(model_bank_predictor(pinn_models), test_set, method="pinn", variant="full")
    other = evaluate_method(krr_bank_predictor(krr_models), test_set, method="krr", variant="")
    return table.merged_with(other)


# ---------------------------------------------------------------------------
# Heatmap export


@dataclass
class HeatmapGrid:
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # (len(ys), len(xs))
    frequency: float
    part: str

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("," + ",".join(repr(float(x)) for x in self.xs) + "\n")
        for j, y in enumerate(self.ys):
            buf.write(repr(float(y)) + "," + ",".join(repr(float(v)) for v in self.values[j]) + "\n")
        return buf.getvalue()

    def save_csv(self, path: str) -> None:
        write_text_atomic(path, self.to_csv_text())


DEFAULT_HEATMAP_POINTS = 57
DEFAULT_HEATMAP_PITCH = 0.005


def export_heatmap(
    predictor: Callable,
    scenario: ScenarioConfig,
    source_index: int,
    frequency: float,
    part: str = "real",
    n_points: int = DEFAULT_HEATMAP_POINTS,
    pitch: float = DEFAULT_HEATMAP_PITCH,
) -> HeatmapGrid:
    """Sample one component of the predicted field over the receiver plane
    for a fixed source.

    The default 57x57 grid at 5 mm pitch covers the same 0.28 m square as
    the measurement grid but densely enough for smooth figures.  The grid
    must stay inside the receiver box.
    """
    if part not in ("real", "imag"):
        raise ValueError(f"part must be 'real' or 'imag', got {part!r}")
    sources = scenario.source_positions()
    if not (0 <= source_index < len(sources)):
        raise ValueError(f"source index {source_index} out of range")
    box = scenario.receiver_box()
    center = box.center()
    half = (n_points - 1) * pitch / 2.0
    lo, hi = box.bounds()
    if center[0] - half < lo[0] - 1e-9 or center[0] + half > hi[0] + 1e-9:
        raise ValueError("heatmap grid extends outside the receiver region")
    if center[1] - half < lo[1] - 1e-9 or center[1] + half > hi[1] + 1e-9:
        raise ValueError("heatmap grid extends outside the receiver region")
    xs = center[0] - half + pitch * np.arange(n_points)
    ys = center[1] - half + pitch * np.arange(n_points)
    xx, yy = np.meshgrid(xs, ys)
    receivers = np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, center[2])])
    source_row = sources[source_index]
    batched = getattr(predictor, "predict_many", None)
    if batched is not None:
        values = batched(receivers, np.tile(source_row, (len(receivers), 1)), frequency)
    else:
        source = Position3.from_array(source_row)
        values = np.array(
            [predictor(Position3.from_array(r), source, frequency).as_complex() for r in receivers]
        )
    component = values.real if part == "real" else values.imag
    return HeatmapGrid(
        xs=xs, ys=ys, values=component.reshape(n_points, n_points), frequency=frequency, part=part
    )


def oracle_heatmap(scenario: ScenarioConfig, source_index: int, frequency: float, part: str = "real",
                   n_points: int = DEFAULT_HEATMAP_POINTS, pitch: float = DEFAULT_HEATMAP_PITCH) -> HeatmapGrid:
    return export_heatmap(
        scenario_oracle_predictor(scenario), scenario, source_index, frequency, part, n_points, pitch
    )
