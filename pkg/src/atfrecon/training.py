"""Loss construction and optimization for per-frequency models.

The total objective is

    L_total = L_data + lambda * L_pde

where L_data is the mean squared residual against measured values and
L_pde is the mean squared Helmholtz residual |lap(P) + k^2 P|^2 at
unlabeled collocation points drawn uniformly from the receiver and source
boxes.  Four variants cover the ablation grid: the permutation-invariant
network with and without the physics term, and a plain 6-input network
with and without it.

Training is plain Adam over the flat parameter vector, deterministic for a
fixed seed, with an abort-and-report policy on non-finite losses (no
silent clipping, so instabilities stay observable).
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import models as md
from .core import ATFDataset, ATFSample, DomainBox, Position3, ScenarioConfig, wavenumber_of
from .fileio import write_text_atomic

VARIANTS = ("full", "no_pde", "plain_pinn", "plain")

LAPLACIAN_MODES = ("receiver", "source", "both_averaged")

# How the trainer conditions the physics residual before squaring it:
# "wavenumber" divides by k^2 so the residual lives in the same units as the
# field itself (equivalently, it rescales the effective weight by k^-4).
# Without this, the k^4 factor in |lap P + k^2 P|^2 numerically crushes the
# data term at acoustic wavenumbers and the network collapses to zero.
# "none" penalizes the raw residual.
RESIDUAL_SCALES = ("wavenumber", "none")


class TrainingDiverged(RuntimeError):
    """A loss term became non-finite; carries the step and offending term."""

    def __init__(self, step: int, term: str, value: float):
        super().__init__(f"training diverged at step {step}: {term} = {value}")
        self.step = step
        self.term = term
        self.value = value


def variant_uses_pde(variant: str) -> bool:
    return variant in ("full", "plain_pinn")


def variant_uses_deepset(variant: str) -> bool:
    return variant in ("full", "no_pde")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; see module docstring for variant semantics."""

    lambda_pde: float = 1.0
    variant: str = "full"
    steps: int = 8000
    learning_rate: float = 2e-3
    n_pde: int = 4096
    data_batch: int = 256
    full_batch_limit: int = 1024
    collocation_batch: int = 64
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    laplacian_mode: str = "receiver"
    resample_collocation: bool = False
    pde_residual_scale: str = "wavenumber"

    def __post_init__(self):
        if self.lambda_pde < 0.0:
            raise ValueError(f"lambda_pde must be >= 0, got {self.lambda_pde}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not (self.learning_rate > 0.0):
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.n_pde < 1 or self.data_batch < 1 or self.collocation_batch < 1:
            raise ValueError("n_pde and batch sizes must be >= 1")
        if self.laplacian_mode not in LAPLACIAN_MODES:
            raise ValueError(f"laplacian_mode must be one of {LAPLACIAN_MODES}, got {self.laplacian_mode!r}")
        if self.pde_residual_scale not in RESIDUAL_SCALES:
            raise ValueError(
                f"pde_residual_scale must be one of {RESIDUAL_SCALES}, got {self.pde_residual_scale!r}"
            )

    def to_dict(self) -> dict:
        return {
            "lambda_pde": self.lambda_pde,
            "variant": self.variant,
            "steps": self.steps,
            "learning_rate": self.learning_rate,
            "n_pde": self.n_pde,
            "data_batch": self.data_batch,
            "full_batch_limit": self.full_batch_limit,
            "collocation_batch": self.collocation_batch,
            "seed": self.seed,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "laplacian_mode": self.laplacian_mode,
            "resample_collocation": self.resample_collocation,
            "pde_residual_scale": self.pde_residual_scale,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        allowed = set(TrainConfig().to_dict())
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown train-config keys: {sorted(unknown)}")
        return TrainConfig(**d)


def save_train_config(config: TrainConfig, path: str) -> None:
    write_text_atomic(path, json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def load_train_config(path: str) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return TrainConfig.from_dict(json.load(fh))


@dataclass(frozen=True)
class CollocationSet:
    """Unlabeled (receiver, source) pairs where the PDE residual is penalized."""

    points: np.ndarray  # (n, 6): receiver columns then source columns
    seed: int
    receiver_box: DomainBox
    source_box: DomainBox

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 6 or pts.shape[0] < 1:
            raise ValueError(f"collocation points must be (n, 6), got {pts.shape}")
        object.__setattr__(self, "points", pts)
        lo_r, hi_r = self.receiver_box.bounds()
        lo_s, hi_s = self.source_box.bounds()
        if np.any(pts[:, :3] < lo_r) or np.any(pts[:, :3] > hi_r):
            raise ValueError("collocation receiver point outside its box")
        if np.any(pts[:, 3:] < lo_s) or np.any(pts[:, 3:] > hi_s):
            raise ValueError("collocation source point outside its box")

    def __len__(self) -> int:
        return self.points.shape[0]


def _uniform_in_box(rng: np.random.Generator, box: DomainBox, n: int) -> np.ndarray:
    lo, hi = box.bounds()
    return rng.uniform(lo, hi, size=(n, 3))


def sample_collocation(omega_r: DomainBox, omega_s: DomainBox, n: int, seed: int) -> CollocationSet:
    """n i.i.d. points uniform over omega_r x omega_s; deterministic per seed."""
    if n < 1:
        raise ValueError(f"need at least one collocation point, got {n}")
    rng = np.random.default_rng(seed)
    r = _uniform_in_box(rng, omega_r, n)
    s = _uniform_in_box(rng, omega_s, n)
    return CollocationSet(points=np.hstack([r, s]), seed=seed, receiver_box=omega_r, source_box=omega_s)


def scenario_collocation(scenario: ScenarioConfig, n: int, seed: int) -> CollocationSet:
    """Collocation tailored to the circle-of-sources geometry.

    Receivers are uniform over the receiver box; sources are uniform in
    angle on the source circle, where every training and held-out source
    actually lives.  Sampling the full source bounding box instead would
    spend almost the entire residual budget on source positions far from
    the interpolation region.
    """
    if n < 1:
        raise ValueError(f"need at least one collocation point, got {n}")
    rng = np.random.default_rng(seed)
    rbox = scenario.receiver_box()
    r = _uniform_in_box(rng, rbox, n)
    circle = scenario.source_circle
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    center = circle.center.as_array()
    s = np.column_stack(
        [
            center[0] + circle.radius * np.cos(theta),
            center[1] + circle.radius * np.sin(theta),
            np.full(n, center[2]),
        ]
    )
    return CollocationSet(points=np.hstack([r, s]), seed=seed, receiver_box=rbox,
                          source_box=scenario.source_box())


@dataclass
class LossReport:
    """Per-step loss history plus instrumentation counters."""

    steps: np.ndarray
    l_data: np.ndarray
    l_pde: np.ndarray
    l_total: np.ndarray
    laplacian_evals: int = 0

    def final(self) -> tuple[float, float, float]:
        return float(self.l_data[-1]), float(self.l_pde[-1]), float(self.l_total[-1])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("step,l_data,l_pde,l_total\n")
        for i in range(len(self.steps)):
            buf.write(
                f"{int(self.steps[i])},{float(self.l_data[i])!r},"
                f"{float(self.l_pde[i])!r},{float(self.l_total[i])!r}\n"
            )
        return buf.getvalue()

    def save_csv(self, path: str) -> None:
        write_text_atomic(path, self.to_csv_text())

    @staticmethod
    def from_csv_text(text: str) -> "LossReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        return LossReport(
            steps=np.array([int(r["step"]) for r in rows]),
            l_data=np.array([float(r["l_data"]) for r in rows]),
            l_pde=np.array([float(r["l_pde"]) for r in rows]),
            l_total=np.array([float(r["l_total"]) for r in rows]),
        )


# ---------------------------------------------------------------------------
# Loss terms


def _component_targets(samples: Sequence[ATFSample], part: str) -> np.ndarray:
    if part == "real":
        return np.array([s.pressure.re for s in samples])
    return np.array([s.pressure.im for s in samples])


def _sample_arrays(samples: Sequence[ATFSample]) -> tuple[np.ndarray, np.ndarray]:
    r = np.array([[s.receiver.x, s.receiver.y, s.receiver.z] for s in samples])
    s_ = np.array([[s.source.x, s.source.y, s.source.z] for s in samples])
    return r, s_


def _check_samples_match(model: md.Model, samples: Sequence[ATFSample]) -> None:
    if len(samples) == 0:
        raise ValueError("no samples for this model's frequency bin")
    for s in samples:
        if s.frequency != model.meta.frequency:
            raise ValueError(
                f"sample frequency {s.frequency} does not match model bin {model.meta.frequency}"
            )


def data_loss(model: md.Model, samples: Sequence[ATFSample]) -> float:
    """Mean squared residual against the model's component of the targets.

    Targets are divided by the model's target_scale (1.0 unless set by
    training), so the loss lives in the network's normalized output units.
    """
    _check_samples_match(model, samples)
    r, s = _sample_arrays(samples)
    targets = _component_targets(samples, model.meta.part) / model.meta.target_scale
    pred = md.forward_many(model, r, s)
    return float(np.mean((pred - targets) ** 2))


def _pde_coord_sets(mode: str) -> tuple[tuple[int, ...], ...]:
    if mode == "receiver":
        return (md.RECEIVER_COORDS,)
    if mode == "source":
        return (md.SOURCE_COORDS,)
    if mode == "both_averaged":
        return (md.RECEIVER_COORDS, md.SOURCE_COORDS)
    raise ValueError(f"laplacian_mode must be one of {LAPLACIAN_MODES}, got {mode!r}")


def _pde_loss_node(
    tape: ad.Tape,
    fld: ad.ScalarField,
    points: np.ndarray,
    leaves,
    k: float,
    mode: str,
    residual_scale: float = 1.0,
) -> ad.Var:
    terms = []
    for coords_set in _pde_coord_sets(mode):
        value, lap = ad.field_value_and_laplacian_nodes(tape, fld, points, leaves, coords_set)
        residual = tape.add(lap, tape.scale_shift(value, k * k))
        if residual_scale != 1.0:
            residual = tape.scale_shift(residual, residual_scale)
        terms.append(tape.mean(tape.square(residual)))
    if len(terms) == 1:
        return terms[0]
    return tape.scale_shift(tape.add(terms[0], terms[1]), 0.5)


def pde_loss(
    model_or_field: "md.Model | ad.ScalarField",
    collocation: CollocationSet,
    k: float,
    mode: str = "receiver",
) -> float:
    """Mean squared Helmholtz residual over the collocation points.

    Accepts a model or a bare 6-input scalar field (handy for injecting
    closed-form solutions in tests).  The residual uses derivatives in
    physical meters.
    """
    if len(collocation) == 0:
        raise ValueError("collocation set is empty")
    if not (k > 0.0):
        raise ValueError(f"wavenumber must be positive, got {k}")
    if isinstance(model_or_field, ad.ScalarField):
        fld, params = model_or_field, ad.ParamVector.zeros(model_or_field.layout)
    else:
        fld, params = md.as_scalar_field(model_or_field), model_or_field.params
    tape = ad.Tape()
    leaves = {name: tape.const(params.tensor(name)) for name in params.layout.names()}
    node = _pde_loss_node(tape, fld, collocation.points, leaves, k, mode)
    return float(node.value)


def total_loss(
    model: md.Model,
    samples: Sequence[ATFSample],
    collocation: CollocationSet,
    k: float,
    config: TrainConfig,
) -> tuple[float, float, float]:
    """(L_total, L_data, L_pde); the PDE term is omitted for data-only variants."""
    l_data = data_loss(model, samples)
    if variant_uses_pde(config.variant) and config.lambda_pde > 0.0:
        l_pde = pde_loss(model, collocation, k, config.laplacian_mode)
    else:
        l_pde = 0.0
    return l_data + config.lambda_pde * l_pde, l_data, l_pde


def total_loss_grad(
    model: md.Model,
    samples: Sequence[ATFSample],
    collocation: CollocationSet | None,
    k: float,
    config: TrainConfig,
) -> tuple[float, np.ndarray]:
    """Full-batch L_total and its parameter gradient from one tape sweep.

    This is the same graph the training loop differentiates (with raw,
    unscaled residuals), exposed for verification against finite
    differences.
    """
    _check_samples_match(model, samples)
    r, s = _sample_arrays(samples)
    targets = _component_targets(samples, model.meta.part) / model.meta.target_scale
    tape = ad.Tape()
    leaves = ad.make_param_leaves(tape, model.params)
    pred = md.pair_value_node(tape, model, r, s, leaves)
    total_node = tape.mean(tape.square(tape.sub(pred, tape.const(targets))))
    if variant_uses_pde(config.variant) and config.lambda_pde > 0.0:
        if collocation is None:
            raise ValueError("PDE variants need a collocation set")
        fld = md.as_scalar_field(model)
        l_pde_node = _pde_loss_node(tape, fld, collocation.points, leaves, k, config.laplacian_mode)
        total_node = tape.add(total_node, tape.scale_shift(l_pde_node, config.lambda_pde))
    tape.backward(total_node)
    return float(total_node.value), ad.collect_param_grads(leaves, model.params.layout)


# ---------------------------------------------------------------------------
# Training loop


def derive_boxes(samples: Sequence[ATFSample]) -> tuple[DomainBox, DomainBox]:
    """Bounding boxes of the measured receiver and source positions."""
    r, s = _sample_arrays(samples)
    return DomainBox.from_points(r), DomainBox.from_points(s)


def _deepset_data_graph(tape, model, unique, inv_r, inv_s, leaves):
    """phi over unique positions, gathered and summed, then rho; one matmul
    per layer regardless of how many pairs reuse a position."""
    scale_inv = np.array([1.0 / v for v in model.norm.scale])
    xn = tape.affine_const(tape.const(unique), np.diag(scale_inv), -np.array(model.norm.center) * scale_inv)
    act = tape.tanh if model.phi_spec.activation == "tanh" else tape.sin
    h = xn
    n_phi = len(model.phi_spec.layer_dims)
    for i in range(n_phi):
        h = tape.linear(h, leaves[f"phi.{i}.w"], leaves[f"phi.{i}.b"])
        if i < n_phi - 1:
            h = act(h)
    z = tape.add(tape.take_rows(h, inv_r), tape.take_rows(h, inv_s))
    act_rho = tape.tanh if model.rho_spec.activation == "tanh" else tape.sin
    n_rho = len(model.rho_spec.layer_dims)
    for i in range(n_rho):
        z = tape.linear(z, leaves[f"rho.{i}.w"], leaves[f"rho.{i}.b"])
        if i < n_rho - 1:
            z = act_rho(z)
    return tape.ravel(z)


def train(
    model: md.Model,
    dataset: ATFDataset,
    config: TrainConfig,
    collocation: CollocationSet | None = None,
) -> tuple[md.Model, LossReport]:
    """Adam over L_total; returns a trained copy and the loss history.

    The input model is left untouched.  Targets are scaled by the maximum
    complex magnitude over the training samples; the scale is stored in the
    returned model's metadata and undone by prediction.  Raises
    TrainingDiverged the first time a loss term leaves the finite range.
    """
    samples = [s for s in dataset.samples if s.frequency == model.meta.frequency]
    _check_samples_match(model, samples)
    k = wavenumber_of(model.meta.frequency, dataset.speed_of_sound)

    raw_targets = _component_targets(samples, model.meta.part)
    magnitudes = np.abs(
        _component_targets(samples, "real") + 1j * _component_targets(samples, "imag")
    )
    target_scale = float(np.max(magnitudes))
    if not (target_scale > 0.0):
        target_scale = 1.0
    trained = model.copy()
    trained.meta = replace(model.meta, target_scale=target_scale)
    targets = raw_targets / target_scale

    use_pde = variant_uses_pde(config.variant) and config.lambda_pde > 0.0
    if use_pde and collocation is None:
        rbox, sbox = derive_boxes(samples)
        collocation = sample_collocation(rbox, sbox, config.n_pde, config.seed)

    r_data, s_data = _sample_arrays(samples)
    n_data = len(samples)
    deepset = isinstance(trained, md.DeepSetModel)
    if deepset:
        stacked = np.vstack([r_data, s_data])
        unique, inverse = np.unique(stacked, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        inv_r, inv_s = inverse[:n_data], inverse[n_data:]
    else:
        x_data = np.hstack([r_data, s_data])
    fld = md.as_scalar_field(trained)

    res_scale = 1.0 / (k * k) if config.pde_residual_scale == "wavenumber" else 1.0
    rng = np.random.default_rng(config.seed)
    full_batch = n_data <= config.full_batch_limit
    batch_size = n_data if full_batch else config.data_batch
    colloc_full = collocation is not None and len(collocation) <= config.collocation_batch

    params = trained.params
    m = np.zeros_like(params.values)
    v = np.zeros_like(params.values)
    b1, b2, lr, eps = config.adam_beta1, config.adam_beta2, config.learning_rate, 1e-8

    hist_data = np.empty(config.steps)
    hist_pde = np.empty(config.steps)
    hist_total = np.empty(config.steps)
    laplacian_evals = 0

    for step in range(config.steps):
        if full_batch:
            idx = None
        else:
            idx = rng.choice(n_data, size=batch_size, replace=False)
        if use_pde:
            if config.resample_collocation:
                pde_pts = sample_collocation(
                    collocation.receiver_box, collocation.source_box,
                    config.collocation_batch, int(rng.integers(0, 2**63 - 1)),
                ).points
            elif colloc_full:
                pde_pts = collocation.points
            else:
                cidx = rng.choice(len(collocation), size=config.collocation_batch, replace=False)
                pde_pts = collocation.points[cidx]

        tape = ad.Tape()
        leaves = ad.make_param_leaves(tape, params)
        if deepset:
            ir = inv_r if idx is None else inv_r[idx]
            is_ = inv_s if idx is None else inv_s[idx]
            pred = _deepset_data_graph(tape, trained, unique, ir, is_, leaves)
        else:
            xb = x_data if idx is None else x_data[idx]
            pred = ad.field_value_node(tape, fld, xb, leaves)
        t_batch = targets if idx is None else targets[idx]
        l_data_node = tape.mean(tape.square(tape.sub(pred, tape.const(t_batch))))
        if use_pde:
            l_pde_node = _pde_loss_node(
                tape, fld, pde_pts, leaves, k, config.laplacian_mode, residual_scale=res_scale
            )
            laplacian_evals += len(_pde_coord_sets(config.laplacian_mode))
            total_node = tape.add(l_data_node, tape.scale_shift(l_pde_node, config.lambda_pde))
            l_pde_val = float(l_pde_node.value)
        else:
            total_node = l_data_node
            l_pde_val = 0.0
        l_data_val = float(l_data_node.value)
        l_total_val = float(total_node.value)
        hist_data[step], hist_pde[step], hist_total[step] = l_data_val, l_pde_val, l_total_val
        for term, value in (("l_data", l_data_val), ("l_pde", l_pde_val), ("l_total", l_total_val)):
            if not math.isfinite(value):
                raise TrainingDiverged(step, term, value)

        tape.backward(total_node)
        g = ad.collect_param_grads(leaves, params.layout)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        t = step + 1
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        params.values -= lr * m_hat / (np.sqrt(v_hat) + eps)

    report = LossReport(
        steps=np.arange(config.steps),
        l_data=hist_data,
        l_pde=hist_pde,
        l_total=hist_total,
        laplacian_evals=laplacian_evals,
    )
    return trained, report


# ---------------------------------------------------------------------------
# Per-bin orchestration: one model per (frequency, part), embarrassingly
# parallel across bins.

DEFAULT_PHI = md.MLPSpec(input_dim=3, hidden_widths=(128, 128), output_dim=128)
DEFAULT_RHO = md.MLPSpec(input_dim=128, hidden_widths=(128, 128), output_dim=1)
DEFAULT_PLAIN = md.MLPSpec(input_dim=6, hidden_widths=(128, 128), output_dim=1)

BinKey = tuple[float, str]


@dataclass
class TrainAllResult:
    models: dict[BinKey, md.Model]
    reports: dict[BinKey, LossReport]
    failures: dict[BinKey, str] = field(default_factory=dict)


def bin_seeds(base_seed: int, freq_index: int, part: str) -> tuple[int, int]:
    """Deterministic (init_seed, batch_seed) for one (frequency, part) bin."""
    part_index = 0 if part == "real" else 1
    state = np.random.SeedSequence([base_seed, freq_index, part_index]).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def make_bin_model(
    variant: str,
    norm: md.InputNorm,
    frequency: float,
    part: str,
    init_seed: int,
    phi_spec: md.MLPSpec = DEFAULT_PHI,
    rho_spec: md.MLPSpec = DEFAULT_RHO,
    net_spec: md.MLPSpec = DEFAULT_PLAIN,
) -> md.Model:
    meta = md.ModelMeta(frequency=frequency, part=part)
    if variant_uses_deepset(variant):
        return md.init_deepset(phi_spec, rho_spec, norm, meta, seed=init_seed)
    return md.init_plain(net_spec, norm, meta, seed=init_seed)


def _train_bin_task(args) -> tuple[BinKey, "md.Model | None", LossReport | None, str | None]:
    (key, samples, speed_of_sound, config, norm, scenario, boxes, init_seed, batch_seed, specs) = args
    frequency, part = key
    phi_spec, rho_spec, net_spec = specs
    try:
        model = make_bin_model(
            config.variant, norm, frequency, part, init_seed,
            phi_spec=phi_spec, rho_spec=rho_spec, net_spec=net_spec,
        )
        bin_config = replace(config, seed=batch_seed)
        dataset = ATFDataset(samples=samples, speed_of_sound=speed_of_sound)
        collocation = None
        if variant_uses_pde(config.variant) and config.lambda_pde > 0.0:
            if scenario is not None:
                collocation = scenario_collocation(scenario, config.n_pde, batch_seed)
            else:
                collocation = sample_collocation(boxes[0], boxes[1], config.n_pde, batch_seed)
        trained, report = train(model, dataset, bin_config, collocation=collocation)
        return key, trained, report, None
    except Exception as exc:  # keep sibling bins running
        return key, None, None, f"{type(exc).__name__}: {exc}"


def train_all_bins(
    dataset: ATFDataset,
    scenario: ScenarioConfig | None,
    config: TrainConfig,
    jobs: int = 1,
    phi_spec: md.MLPSpec = DEFAULT_PHI,
    rho_spec: md.MLPSpec = DEFAULT_RHO,
    net_spec: md.MLPSpec = DEFAULT_PLAIN,
) -> TrainAllResult:
    """Train one model per (frequency, part); failures are contained per bin.

    Geometry (input normalization and collocation boxes) comes from the
    scenario when given, otherwise from the dataset's own bounding boxes.
    Results are identical whether bins run serially or in parallel.
    """
    if scenario is not None:
        rbox, sbox = scenario.receiver_box(), scenario.source_box()
    else:
        rbox, sbox = derive_boxes(dataset.samples)
    norm = md.InputNorm.from_box(rbox.union(sbox))

    tasks = []
    for f_idx, frequency in enumerate(dataset.frequencies()):
        samples = dataset.for_frequency(frequency)
        for part in md.PARTS:
            init_seed, batch_seed = bin_seeds(config.seed, f_idx, part)
            tasks.append((
                (frequency, part), samples, dataset.speed_of_sound, config, norm, scenario,
                (rbox, sbox), init_seed, batch_seed, (phi_spec, rho_spec, net_spec),
            ))

    result = TrainAllResult(models={}, reports={})
    if jobs <= 1:
        outcomes = map(_train_bin_task, tasks)
    else:
        executor = concurrent.futures.ProcessPoolExecutor(max_workers=jobs)
        try:
            outcomes = list(executor.map(_train_bin_task, tasks))
        finally:
            executor.shutdown()
    for key, model, report, error in outcomes:
        if error is not None:
            result.failures[key] = error
        else:
            result.models[key] = model
            result.reports[key] = report
    return result
