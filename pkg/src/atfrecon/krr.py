"""Kernel ridge regression baseline for region-to-region interpolation.

The kernel is separable across the two regions: the zeroth-order spherical
Bessel function j0(k d) = sin(k d)/(k d) of the receiver distance times the
same factor for the source distance.  j0 is the diffuse-field correlation
kernel for the Helmholtz equation, so each factor matches the physics of
its region.  With ``symmetrize`` on (the default), the kernel is averaged
over the receiver/source exchange of one argument, which makes every
prediction reciprocal by construction.

Fitting solves (K + sigma I) alpha = p with a dense Cholesky factorization;
the complex targets are handled as two real right-hand sides sharing one
factorization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .core import ATFDataset, ATFSample, ComplexPressure, Position3
from .fileio import write_text_atomic

KRR_FORMAT = "atf-krr/1"


class SingularKernelError(ValueError):
    """Gram matrix cannot be factorized; advises a positive regularization."""


@dataclass(frozen=True)
class KernelConfig:
    wavenumber: float
    symmetrize: bool = True
    regularization: float = 0.0

    def __post_init__(self):
        if not (self.wavenumber > 0.0) or not math.isfinite(self.wavenumber):
            raise ValueError(f"wavenumber must be positive, got {self.wavenumber}")
        if self.regularization < 0.0:
            raise ValueError(f"regularization must be >= 0, got {self.regularization}")


def _j0(x: np.ndarray) -> np.ndarray:
    """Spherical Bessel j0 with the exact limit j0(0) = 1."""
    return np.sinc(x / np.pi)


def _pair_block(config: KernelConfig, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Base kernel between row blocks of (r | s) 6-vectors, (len(q), len(p))."""
    k = config.wavenumber
    dr = np.linalg.norm(q[:, None, :3] - p[None, :, :3], axis=2)
    ds = np.linalg.norm(q[:, None, 3:] - p[None, :, 3:], axis=2)
    return _j0(k * dr) * _j0(k * ds)


def _kernel_matrix(config: KernelConfig, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    base = _pair_block(config, q, p)
    if not config.symmetrize:
        return base
    swapped = np.hstack([p[:, 3:], p[:, :3]])
    return 0.5 * (base + _pair_block(config, q, swapped))


def kernel_eval(config: KernelConfig, pair_a, pair_b) -> float:
    """Kernel between two (receiver, source) pairs given as 6-vectors or
    (Position3, Position3) tuples."""

    def as_vec(pair):
        if isinstance(pair, tuple) and len(pair) == 2 and isinstance(pair[0], Position3):
            return np.concatenate([pair[0].as_array(), pair[1].as_array()])
        v = np.asarray(pair, dtype=np.float64).reshape(-1)
        if v.shape != (6,):
            raise ValueError(f"expected a 6-vector or (Position3, Position3), got shape {v.shape}")
        return v

    a = as_vec(pair_a)[None, :]
    b = as_vec(pair_b)[None, :]
    return float(_kernel_matrix(config, a, b)[0, 0])


@dataclass
class KRRModel:
    config: KernelConfig
    anchors: np.ndarray  # (n, 6): training (r | s) pairs
    dual_weights: np.ndarray  # (n,) complex
    gram_conditioning: float
    frequency: float = 0.0

    def __post_init__(self):
        self.anchors = np.ascontiguousarray(self.anchors, dtype=np.float64)
        self.dual_weights = np.ascontiguousarray(self.dual_weights, dtype=np.complex128)
        if self.anchors.ndim != 2 or self.anchors.shape[1] != 6:
            raise ValueError(f"anchors must be (n, 6), got {self.anchors.shape}")
        if self.dual_weights.shape != (self.anchors.shape[0],):
            raise ValueError("one dual weight per anchor required")
        if not np.all(np.isfinite(self.anchors)) or not np.all(np.isfinite(self.dual_weights)):
            raise ValueError("anchors and dual weights must be finite")


def _anchor_rows(samples: Sequence[ATFSample]) -> tuple[np.ndarray, np.ndarray]:
    rows = np.array(
        [[s.receiver.x, s.receiver.y, s.receiver.z, s.source.x, s.source.y, s.source.z] for s in samples]
    )
    targets = np.array([s.pressure.as_complex() for s in samples], dtype=np.complex128)
    return rows, targets


def _duplicate_anchor_rows(anchors: np.ndarray, symmetrize: bool) -> bool:
    seen = set()
    for row in anchors:
        key = tuple(row)
        mirrored = tuple(np.concatenate([row[3:], row[:3]]))
        if key in seen or (symmetrize and mirrored in seen):
            return True
        seen.add(key)
    return False


def fit(dataset: "ATFDataset | Sequence[ATFSample]", config: KernelConfig) -> KRRModel:
    """Solve (K + sigma I) alpha = p over the dataset's single frequency bin.

    sigma = 0 is allowed for well-conditioned systems; an exactly duplicated
    anchor pair (or, under symmetrization, a mirrored duplicate) makes the
    system singular and raises SingularKernelError.  A one-shot jitter of
    1e-12 * trace/n is tried before giving up on borderline factorizations.
    """
    samples = dataset.samples if isinstance(dataset, ATFDataset) else tuple(dataset)
    if len(samples) == 0:
        raise ValueError("need at least one sample to fit")
    freqs = {s.frequency for s in samples}
    if len(freqs) != 1:
        raise ValueError(f"fit expects a single frequency bin, got {sorted(freqs)}")
    anchors, targets = _anchor_rows(samples)
    if config.regularization == 0.0 and _duplicate_anchor_rows(anchors, config.symmetrize):
        raise SingularKernelError(
            "duplicate anchor pairs make the unregularized system singular; set regularization > 0"
        )
    gram = _kernel_matrix(config, anchors, anchors)
    n = gram.shape[0]
    system = gram + config.regularization * np.eye(n)
    try:
        factor = scipy.linalg.cho_factor(system, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(system) / n
        try:
            factor = scipy.linalg.cho_factor(system + jitter * np.eye(n), lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise SingularKernelError(
                f"kernel system is numerically singular (n={n}); set regularization > 0"
            ) from exc
    alpha_re = scipy.linalg.cho_solve(factor, targets.real, check_finite=False)
    alpha_im = scipy.linalg.cho_solve(factor, targets.imag, check_finite=False)
    conditioning = float(np.linalg.cond(system)) if n <= 4096 else float("nan")
    return KRRModel(
        config=config,
        anchors=anchors,
        dual_weights=alpha_re + 1j * alpha_im,
        gram_conditioning=conditioning,
        frequency=float(next(iter(freqs))),
    )


def predict_many(model: KRRModel, receivers, sources) -> np.ndarray:
    r = np.asarray(receivers, dtype=np.float64).reshape(-1, 3)
    s = np.asarray(sources, dtype=np.float64).reshape(-1, 3)
    queries = np.hstack([r, s])
    kmat = _kernel_matrix(model.config, queries, model.anchors)
    return kmat @ model.dual_weights


def predict(model: KRRModel, r: Position3, s: Position3) -> ComplexPressure:
    z = predict_many(model, r.as_array(), s.as_array())[0]
    return ComplexPressure.from_complex(complex(z))


def select_regularization(
    dataset: "ATFDataset | Sequence[ATFSample]",
    config: KernelConfig,
    sigma_grid: Sequence[float],
    seed: int = 0,
) -> float:
    """Pick sigma by held-out error on a deterministic 80/20 split.

    Ties (within 1e-12 relative) go to the smaller sigma; candidates whose
    fit fails are skipped.
    """
    samples = dataset.samples if isinstance(dataset, ATFDataset) else tuple(dataset)
    grid = sorted(float(s) for s in sigma_grid)
    if not grid:
        raise ValueError("sigma grid is empty")
    if len(grid) == 1:
        return grid[0]
    if len(samples) < 2:
        raise ValueError("need at least two samples to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_holdout = max(1, len(samples) // 5)
    holdout_idx = order[:n_holdout]
    train_idx = order[n_holdout:]
    train = [samples[i] for i in train_idx]
    holdout = [samples[i] for i in holdout_idx]
    rows, truth = _anchor_rows(holdout)
    denom = float(np.sum(np.abs(truth) ** 2))
    best_sigma, best_err = None, math.inf
    for sigma in grid:
        candidate = KernelConfig(config.wavenumber, config.symmetrize, sigma)
        try:
            model = fit(train, candidate)
        except SingularKernelError:
            continue
        pred = predict_many(model, rows[:, :3], rows[:, 3:])
        err = float(np.sum(np.abs(pred - truth) ** 2)) / denom if denom > 0 else math.inf
        if err < best_err * (1.0 - 1e-12):
            best_sigma, best_err = sigma, err
    if best_sigma is None:
        raise SingularKernelError("no sigma candidate produced a solvable system")
    return best_sigma


# ---------------------------------------------------------------------------
# Serialization


def krr_to_dict(model: KRRModel) -> dict:
    return {
        "format": KRR_FORMAT,
        "config": {
            "wavenumber": model.config.wavenumber,
            "symmetrize": model.config.symmetrize,
            "regularization": model.config.regularization,
        },
        "frequency": model.frequency,
        "anchors": [[float(v) for v in row] for row in model.anchors],
        "dual_weights_re": [float(v) for v in model.dual_weights.real],
        "dual_weights_im": [float(v) for v in model.dual_weights.imag],
        "gram_conditioning": model.gram_conditioning,
    }


def krr_from_dict(doc: dict) -> KRRModel:
    if not isinstance(doc, dict) or doc.get("format") != KRR_FORMAT:
        raise ValueError(f"unsupported kernel model format: {doc.get('format')!r}")
    config = KernelConfig(
        wavenumber=float(doc["config"]["wavenumber"]),
        symmetrize=bool(doc["config"]["symmetrize"]),
        regularization=float(doc["config"]["regularization"]),
    )
    weights = np.array(doc["dual_weights_re"]) + 1j * np.array(doc["dual_weights_im"])
    return KRRModel(
        config=config,
        anchors=np.array(doc["anchors"]),
        dual_weights=weights,
        gram_conditioning=float(doc["gram_conditioning"]),
        frequency=float(doc.get("frequency", 0.0)),
    )


def save_krr(model: KRRModel, path: str) -> None:
    write_text_atomic(path, json.dumps(krr_to_dict(model), sort_keys=True) + "\n")


def load_krr(path: str) -> KRRModel:
    with open(path, "r", encoding="utf-8") as fh:
        return krr_from_dict(json.load(fh))
