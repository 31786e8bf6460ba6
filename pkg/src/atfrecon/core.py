"""Core vocabulary for acoustic transfer function (ATF) data.

Positions are absolute room coordinates in meters.  An ATF sample ties one
(receiver, source, frequency) triple to a complex transfer-function value;
a dataset is a bag of samples sharing a speed of sound and a common
frequency grid.  The scenario type describes the measurement geometry used
throughout: a planar receiver grid paired with a circle of sources, split
into disjoint train/test source sets.

Everything here is an immutable value type, safe to share freely.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .fileio import fmt_float, write_text_atomic

DEFAULT_SPEED_OF_SOUND = 343.0  # m/s, air at 20 C; configurable everywhere

DATASET_FORMAT = "atf-dataset/1"

ROOM_KINDS = ("free_field", "floor_reflection")


class DatasetFormatError(ValueError):
    """Raised when a dataset or scenario file violates its schema."""


def wavenumber_of(frequency: float, speed_of_sound: float = DEFAULT_SPEED_OF_SOUND) -> float:
    """Wavenumber k = 2*pi*f/c in rad/m.

    Raises ValueError for non-positive frequency or speed of sound.
    """
    if not (frequency > 0.0) or not math.isfinite(frequency):
        raise ValueError(f"frequency must be positive and finite, got {frequency}")
    if not (speed_of_sound > 0.0) or not math.isfinite(speed_of_sound):
        raise ValueError(f"speed of sound must be positive and finite, got {speed_of_sound}")
    return 2.0 * math.pi * frequency / speed_of_sound


@dataclass(frozen=True)
class Position3:
    """A point in room coordinates, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"coordinate {name} must be finite, got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a) -> "Position3":
        a = np.asarray(a, dtype=float)
        if a.shape != (3,):
            raise ValueError(f"expected 3 coordinates, got shape {a.shape}")
        return Position3(float(a[0]), float(a[1]), float(a[2]))

    def distance_to(self, other: "Position3") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))


@dataclass(frozen=True)
class ComplexPressure:
    """One complex transfer-function value (dimensionless)."""

    re: float
    im: float

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise ValueError(f"pressure must be finite, got ({self.re}, {self.im})")

    def as_complex(self) -> complex:
        return complex(self.re, self.im)

    @staticmethod
    def from_complex(z: complex) -> "ComplexPressure":
        return ComplexPressure(float(z.real), float(z.imag))

    def abs(self) -> float:
        return abs(self.as_complex())


@dataclass(frozen=True)
class ATFSample:
    """One measured or synthetic transfer-function value."""

    receiver: Position3
    source: Position3
    frequency: float
    pressure: ComplexPressure

    def __post_init__(self):
        if not (self.frequency > 0.0) or not math.isfinite(self.frequency):
            raise ValueError(f"frequency must be positive, got {self.frequency}")
        if self.receiver.distance_to(self.source) <= 0.0:
            raise ValueError("receiver and source positions coincide")


@dataclass(frozen=True)
class ATFDataset:
    """A collection of ATF samples sharing a speed of sound.

    The samples are expected to cover a common frequency grid: every
    (receiver, source) pair appears once per frequency of the grid.  This
    is enforced when loading from disk; in-memory construction only checks
    non-emptiness so partially assembled sets remain usable.
    """

    samples: tuple[ATFSample, ...]
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if len(self.samples) == 0:
            raise ValueError("dataset must contain at least one sample")
        if not (self.speed_of_sound > 0.0) or not math.isfinite(self.speed_of_sound):
            raise ValueError(f"speed of sound must be positive, got {self.speed_of_sound}")

    def frequencies(self) -> tuple[float, ...]:
        return tuple(sorted({s.frequency for s in self.samples}))

    def for_frequency(self, frequency: float) -> tuple[ATFSample, ...]:
        return tuple(s for s in self.samples if s.frequency == frequency)

    def positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Receiver and source coordinates as (n, 3) arrays, sample order."""
        r = np.array([[s.receiver.x, s.receiver.y, s.receiver.z] for s in self.samples])
        s_ = np.array([[s.source.x, s.source.y, s.source.z] for s in self.samples])
        return r, s_

    def pressures(self) -> np.ndarray:
        return np.array([s.pressure.as_complex() for s in self.samples], dtype=complex)


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box; may be degenerate in some (not all) axes."""

    min_corner: Position3
    max_corner: Position3

    def __post_init__(self):
        lo, hi = self.min_corner.as_array(), self.max_corner.as_array()
        if np.any(lo > hi):
            raise ValueError("min_corner must be <= max_corner componentwise")
        if not np.any(lo < hi):
            raise ValueError("box must have positive extent in at least one axis")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.min_corner.as_array(), self.max_corner.as_array()

    def center(self) -> np.ndarray:
        lo, hi = self.bounds()
        return (lo + hi) / 2.0

    def half_extent(self) -> np.ndarray:
        lo, hi = self.bounds()
        return (hi - lo) / 2.0

    def contains(self, point, tol: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float).reshape(3)
        lo, hi = self.bounds()
        return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))

    def union(self, other: "DomainBox") -> "DomainBox":
        lo = np.minimum(self.bounds()[0], other.bounds()[0])
        hi = np.maximum(self.bounds()[1], other.bounds()[1])
        return DomainBox(Position3.from_array(lo), Position3.from_array(hi))

    @staticmethod
    def from_points(points) -> "DomainBox":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return DomainBox(Position3.from_array(pts.min(axis=0)), Position3.from_array(pts.max(axis=0)))


@dataclass(frozen=True)
class GridSpec:
    """Rectangular point grid: corner + per-axis spacing and counts."""

    corner: Position3
    spacing: float
    counts: tuple[int, int, int]

    def __post_init__(self):
        if not (self.spacing > 0.0):
            raise ValueError(f"grid spacing must be positive, got {self.spacing}")
        if len(self.counts) != 3 or any(int(c) < 1 for c in self.counts):
            raise ValueError(f"grid counts must be three positive integers, got {self.counts}")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def n_points(self) -> int:
        nx, ny, nz = self.counts
        return nx * ny * nz

    def points(self) -> np.ndarray:
        """All grid points, (n, 3).  Index order: z-major, then y, then x."""
        nx, ny, nz = self.counts
        c = self.corner.as_array()
        xs = c[0] + self.spacing * np.arange(nx)
        ys = c[1] + self.spacing * np.arange(ny)
        zs = c[2] + self.spacing * np.arange(nz)
        zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    def edge_indices(self) -> tuple[int, ...]:
        """Indices of perimeter points: on the boundary of every non-degenerate axis.

        For an 8x8x1 grid this is the 28 points of the square's outline.
        """
        nx, ny, nz = self.counts
        out = []
        i = 0
        for iz in range(nz):
            for iy in range(ny):
                for ix in range(nx):
                    on_edge = (
                        (nx > 1 and ix in (0, nx - 1))
                        or (ny > 1 and iy in (0, ny - 1))
                        or (nz > 1 and iz in (0, nz - 1))
                    )
                    if on_edge:
                        out.append(i)
                    i += 1
        return tuple(out)


@dataclass(frozen=True)
class CircleSpec:
    """Evenly spaced points on a circle in a z = const plane."""

    center: Position3
    radius: float
    count: int

    def __post_init__(self):
        if not (self.radius > 0.0):
            raise ValueError(f"circle radius must be positive, got {self.radius}")
        if int(self.count) < 1:
            raise ValueError(f"circle count must be positive, got {self.count}")
        object.__setattr__(self, "count", int(self.count))

    def points(self) -> np.ndarray:
        angles = 2.0 * np.pi * np.arange(self.count) / self.count
        c = self.center.as_array()
        return np.column_stack(
            [
                c[0] + self.radius * np.cos(angles),
                c[1] + self.radius * np.sin(angles),
                np.full(self.count, c[2]),
            ]
        )


def _check_indices(name: str, indices: Sequence[int], limit: int) -> tuple[int, ...]:
    out = tuple(int(i) for i in indices)
    for i in out:
        if i < 0 or i >= limit:
            raise ValueError(f"{name} contains out-of-range index {i} (limit {limit})")
    if len(set(out)) != len(out):
        raise ValueError(f"{name} contains duplicate indices")
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry and split description for synthetic experiments.

    The default factory (`default_scenario`) pairs a 60-loudspeaker circle
    of radius 1.5 m with an 8x8 receiver grid at 0.04 m pitch centered on
    the origin; training uses every other loudspeaker against the 28
    perimeter microphones, testing the remaining loudspeakers against all
    64 microphones.
    """

    receiver_grid: GridSpec
    source_circle: CircleSpec
    train_source_indices: tuple[int, ...]
    test_source_indices: tuple[int, ...]
    train_receiver_indices: tuple[int, ...]
    test_receiver_indices: tuple[int, ...]
    frequencies: tuple[float, ...]
    room_kind: str = "free_field"
    floor_z: float = -1.0
    reflection_coeff: float = 1.0
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND

    def __post_init__(self):
        n_src = self.source_circle.count
        n_rec = self.receiver_grid.n_points
        object.__setattr__(
            self, "train_source_indices", _check_indices("train_source_indices", self.train_source_indices, n_src)
        )
        object.__setattr__(
            self, "test_source_indices", _check_indices("test_source_indices", self.test_source_indices, n_src)
        )
        object.__setattr__(
            self,
            "train_receiver_indices",
            _check_indices("train_receiver_indices", self.train_receiver_indices, n_rec),
        )
        object.__setattr__(
            self,
            "test_receiver_indices",
            _check_indices("test_receiver_indices", self.test_receiver_indices, n_rec),
        )
        if set(self.train_source_indices) & set(self.test_source_indices):
            raise ValueError("train and test source index sets must be disjoint")
        freqs = tuple(float(f) for f in self.frequencies)
        if len(freqs) == 0:
            raise ValueError("scenario needs at least one frequency")
        for f in freqs:
            if not (f > 0.0) or not math.isfinite(f):
                raise ValueError(f"frequencies must be positive, got {f}")
        object.__setattr__(self, "frequencies", freqs)
        if self.room_kind not in ROOM_KINDS:
            raise ValueError(f"room_kind must be one of {ROOM_KINDS}, got {self.room_kind!r}")
        if not (0.0 <= self.reflection_coeff <= 1.0):
            raise ValueError(f"reflection_coeff must be in [0, 1], got {self.reflection_coeff}")
        if not (self.speed_of_sound > 0.0):
            raise ValueError(f"speed of sound must be positive, got {self.speed_of_sound}")

    def receiver_positions(self) -> np.ndarray:
        return self.receiver_grid.points()

    def source_positions(self) -> np.ndarray:
        return self.source_circle.points()

    def receiver_box(self) -> DomainBox:
        return DomainBox.from_points(self.receiver_positions())

    def source_box(self) -> DomainBox:
        return DomainBox.from_points(self.source_positions())

    def union_box(self) -> DomainBox:
        return self.receiver_box().union(self.source_box())


def default_scenario(
    frequencies: Iterable[float] = tuple(100.0 * i for i in range(1, 21)),
    room_kind: str = "free_field",
    floor_z: float = -1.0,
    reflection_coeff: float = 1.0,
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND,
) -> ScenarioConfig:
    """Circle-of-speakers / planar-grid scenario with an alternating source split."""
    grid = GridSpec(corner=Position3(-0.14, -0.14, 0.0), spacing=0.04, counts=(8, 8, 1))
    circle = CircleSpec(center=Position3(0.0, 0.0, 0.0), radius=1.5, count=60)
    train_sources = tuple(range(0, 60, 2))
    test_sources = tuple(range(1, 60, 2))
    return ScenarioConfig(
        receiver_grid=grid,
        source_circle=circle,
        train_source_indices=train_sources,
        test_source_indices=test_sources,
        train_receiver_indices=grid.edge_indices(),
        test_receiver_indices=tuple(range(grid.n_points)),
        frequencies=tuple(frequencies),
        room_kind=room_kind,
        floor_z=floor_z,
        reflection_coeff=reflection_coeff,
        speed_of_sound=speed_of_sound,
    )


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]


def validate_dataset(dataset: ATFDataset) -> ValidationReport:
    """Report-style dataset checks: coincident pairs, non-finite values,
    and per-pair frequency-grid consistency."""
    violations: list[str] = []
    grid = set(dataset.frequencies())
    by_pair: dict[tuple, set] = {}
    for i, s in enumerate(dataset.samples):
        r, src = s.receiver, s.source
        if r.distance_to(src) < 1e-12:
            violations.append(f"sample {i}: coincident receiver/source pair at ({r.x}, {r.y}, {r.z})")
        vals = (r.x, r.y, r.z, src.x, src.y, src.z, s.frequency, s.pressure.re, s.pressure.im)
        if not all(math.isfinite(v) for v in vals):
            violations.append(f"sample {i}: non-finite value")
        key = (r.x, r.y, r.z, src.x, src.y, src.z)
        seen = by_pair.setdefault(key, set())
        if s.frequency in seen:
            violations.append(f"sample {i}: duplicate entry for pair {key} at {s.frequency} Hz")
        seen.add(s.frequency)
    for key, freqs in by_pair.items():
        if freqs != grid:
            missing = sorted(grid - freqs)
            violations.append(f"pair {key}: frequency grid mismatch (missing {missing[:4]}{'...' if len(missing) > 4 else ''})")
    return ValidationReport(ok=not violations, violations=tuple(violations))


# ---------------------------------------------------------------------------
# Dataset file format: one text file, a JSON manifest line followed by a CSV
# body with full-precision decimal floats.

_DATASET_COLUMNS = ["rx", "ry", "rz", "sx", "sy", "sz", "f_hz", "p_re", "p_im"]


def dataset_to_text(dataset: ATFDataset) -> str:
    manifest = {
        "format": DATASET_FORMAT,
        "speed_of_sound": dataset.speed_of_sound,
        "label": dataset.label,
        "columns": _DATASET_COLUMNS,
    }
    buf = io.StringIO()
    buf.write(json.dumps(manifest, sort_keys=True))
    buf.write("\n")
    buf.write(",".join(_DATASET_COLUMNS))
    buf.write("\n")
    for s in dataset.samples:
        row = (
            s.receiver.x, s.receiver.y, s.receiver.z,
            s.source.x, s.source.y, s.source.z,
            s.frequency, s.pressure.re, s.pressure.im,
        )
        buf.write(",".join(fmt_float(v) for v in row))
        buf.write("\n")
    return buf.getvalue()


def save_dataset(dataset: ATFDataset, path: str) -> None:
    write_text_atomic(path, dataset_to_text(dataset))


def dataset_from_text(text: str) -> ATFDataset:
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError("empty dataset file")
    try:
        manifest = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"bad manifest line: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != DATASET_FORMAT:
        raise DatasetFormatError(f"unsupported dataset format: {manifest.get('format')!r}")
    if manifest.get("columns") != _DATASET_COLUMNS:
        raise DatasetFormatError(f"unexpected column schema: {manifest.get('columns')!r}")
    if len(lines) < 2 or [c.strip() for c in lines[1].split(",")] != _DATASET_COLUMNS:
        raise DatasetFormatError("missing CSV header row")
    samples = []
    for lineno, row in enumerate(csv.reader(lines[2:]), start=3):
        if not row:
            continue
        if len(row) != len(_DATASET_COLUMNS):
            raise DatasetFormatError(f"line {lineno}: expected {len(_DATASET_COLUMNS)} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from exc
        samples.append(
            ATFSample(
                receiver=Position3(vals[0], vals[1], vals[2]),
                source=Position3(vals[3], vals[4], vals[5]),
                frequency=vals[6],
                pressure=ComplexPressure(vals[7], vals[8]),
            )
        )
    if not samples:
        raise DatasetFormatError("dataset file has no sample rows")
    dataset = ATFDataset(
        samples=tuple(samples),
        speed_of_sound=float(manifest.get("speed_of_sound", DEFAULT_SPEED_OF_SOUND)),
        label=str(manifest.get("label", "")),
    )
    report = validate_dataset(dataset)
    if not report.ok:
        raise DatasetFormatError("dataset failed validation: " + "; ".join(report.violations[:5]))
    return dataset


def load_dataset(path: str) -> ATFDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return dataset_from_text(fh.read())


# ---------------------------------------------------------------------------
# Scenario JSON round trip (used by the command-line tools).


def scenario_to_dict(sc: ScenarioConfig) -> dict:
    return {
        "receiver_grid": {
            "corner": [sc.receiver_grid.corner.x, sc.receiver_grid.corner.y, sc.receiver_grid.corner.z],
            "spacing": sc.receiver_grid.spacing,
            "counts": list(sc.receiver_grid.counts),
        },
        "source_circle": {
            "center": [sc.source_circle.center.x, sc.source_circle.center.y, sc.source_circle.center.z],
            "radius": sc.source_circle.radius,
            "count": sc.source_circle.count,
        },
        "train_source_indices": list(sc.train_source_indices),
        "test_source_indices": list(sc.test_source_indices),
        "train_receiver_indices": list(sc.train_receiver_indices),
        "test_receiver_indices": list(sc.test_receiver_indices),
        "frequencies": list(sc.frequencies),
        "room_kind": sc.room_kind,
        "floor_z": sc.floor_z,
        "reflection_coeff": sc.reflection_coeff,
        "speed_of_sound": sc.speed_of_sound,
    }


def scenario_from_dict(d: dict) -> ScenarioConfig:
    try:
        grid = GridSpec(
            corner=Position3(*[float(v) for v in d["receiver_grid"]["corner"]]),
            spacing=float(d["receiver_grid"]["spacing"]),
            counts=tuple(d["receiver_grid"]["counts"]),
        )
        circle = CircleSpec(
            center=Position3(*[float(v) for v in d["source_circle"]["center"]]),
            radius=float(d["source_circle"]["radius"]),
            count=int(d["source_circle"]["count"]),
        )
        return ScenarioConfig(
            receiver_grid=grid,
            source_circle=circle,
            train_source_indices=tuple(d["train_source_indices"]),
            test_source_indices=tuple(d["test_source_indices"]),
            train_receiver_indices=tuple(d["train_receiver_indices"]),
            test_receiver_indices=tuple(d["test_receiver_indices"]),
            frequencies=tuple(d["frequencies"]),
            room_kind=d.get("room_kind", "free_field"),
            floor_z=float(d.get("floor_z", -1.0)),
            reflection_coeff=float(d.get("reflection_coeff", 1.0)),
            speed_of_sound=float(d.get("speed_of_sound", DEFAULT_SPEED_OF_SOUND)),
        )
    except KeyError as exc:
        raise DatasetFormatError(f"scenario is missing required key {exc}") from exc


def save_scenario(sc: ScenarioConfig, path: str) -> None:
    write_text_atomic(path, json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True) + "\n")


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))
