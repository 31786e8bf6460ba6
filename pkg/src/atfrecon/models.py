"""Per-frequency transfer-function models.

Two architectures cover the four experiment variants:

* ``DeepSetModel``: the permutation-invariant network rho(phi(r) + phi(s)).
  Both positions pass through one shared feature extractor phi and the
  latent vectors are summed, so swapping receiver and source cannot change
  the output (IEEE addition is commutative, hence the equality is bitwise).
  This bakes acoustic reciprocity into the architecture.
* ``PlainModel``: an ordinary MLP on the concatenated 6-vector (r, s),
  which has no such symmetry.

Each model instance handles one (frequency, component) pair, where the
component is the real or imaginary part of the complex transfer function;
a full predictor pairs two instances.  Inputs are normalized per axis to
roughly [-1, 1] (tanh saturates on meter-scale coordinates); the chain
rule factors live inside the scalar-field graph so spatial derivatives are
taken with respect to physical meters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .core import ComplexPressure, DomainBox, Position3
from .fileio import write_text_atomic

MODEL_FORMAT = "atf-model/1"

ACTIVATIONS = ("tanh", "sine")

PARTS = ("real", "imag")


class ModelFormatError(ValueError):
    """Raised when a model file violates its schema."""


@dataclass(frozen=True)
class MLPSpec:
    """Shape of one multilayer perceptron."""

    input_dim: int
    hidden_widths: tuple[int, ...] = (128, 128)
    output_dim: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        dims = (self.input_dim, *self.hidden_widths, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ValueError(f"all layer dimensions must be >= 1, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def layer_dims(self) -> tuple[tuple[int, int], ...]:
        dims = (self.input_dim, *self.hidden_widths, self.output_dim)
        return tuple((dims[i + 1], dims[i]) for i in range(len(dims) - 1))


@dataclass(frozen=True)
class InputNorm:
    """Per-axis affine map taking room coordinates to network inputs."""

    center: tuple[float, float, float]
    scale: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "scale", tuple(float(s) for s in self.scale))
        if len(self.center) != 3 or len(self.scale) != 3:
            raise ValueError("normalization needs exactly three axes")
        if any(not (s > 0.0) or not math.isfinite(s) for s in self.scale):
            raise ValueError(f"normalization scales must be positive, got {self.scale}")

    @staticmethod
    def identity() -> "InputNorm":
        return InputNorm((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))

    @staticmethod
    def from_box(box: DomainBox) -> "InputNorm":
        """Center/half-extent of the box; degenerate axes fall back to scale 1."""
        center = box.center()
        half = box.half_extent()
        scale = np.where(half > 0.0, half, 1.0)
        return InputNorm(tuple(center), tuple(scale))


@dataclass(frozen=True)
class ModelMeta:
    """Which slice of the complex transfer function this model covers."""

    frequency: float
    part: str
    target_scale: float = 1.0

    def __post_init__(self):
        if not (self.frequency > 0.0) or not math.isfinite(self.frequency):
            raise ValueError(f"frequency must be positive, got {self.frequency}")
        if self.part not in PARTS:
            raise ValueError(f"part must be one of {PARTS}, got {self.part!r}")
        if not (self.target_scale > 0.0) or not math.isfinite(self.target_scale):
            raise ValueError(f"target_scale must be positive, got {self.target_scale}")


def _mlp_layout_shapes(prefix: str, spec: MLPSpec) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for i, (out, inp) in enumerate(spec.layer_dims):
        shapes[f"{prefix}.{i}.w"] = (out, inp)
        shapes[f"{prefix}.{i}.b"] = (out,)
    return shapes


def _glorot_init(rng: np.random.Generator, params: ad.ParamVector, prefix: str, spec: MLPSpec) -> None:
    for i, (out, inp) in enumerate(spec.layer_dims):
        bound = math.sqrt(6.0 / (inp + out))
        params.tensor(f"{prefix}.{i}.w")[...] = rng.uniform(-bound, bound, size=(out, inp))
        # biases stay zero


@dataclass
class DeepSetModel:
    """rho(phi(r) + phi(s)) with shared phi; permutation invariant by design."""

    phi_spec: MLPSpec
    rho_spec: MLPSpec
    norm: InputNorm
    meta: ModelMeta
    params: ad.ParamVector

    def __post_init__(self):
        if self.phi_spec.input_dim != 3:
            raise ValueError(f"phi must take 3 coordinates, got {self.phi_spec.input_dim}")
        if self.rho_spec.output_dim != 1:
            raise ValueError(f"rho must produce one output, got {self.rho_spec.output_dim}")
        if self.phi_spec.output_dim != self.rho_spec.input_dim:
            raise ValueError(
                f"phi output width {self.phi_spec.output_dim} does not match "
                f"rho input width {self.rho_spec.input_dim}"
            )

    @property
    def latent_dim(self) -> int:
        return self.phi_spec.output_dim

    def copy(self) -> "DeepSetModel":
        return replace(self, params=self.params.copy())


@dataclass
class PlainModel:
    """Ordinary MLP on the concatenated (r, s) 6-vector."""

    net_spec: MLPSpec
    norm: InputNorm
    meta: ModelMeta
    params: ad.ParamVector

    def __post_init__(self):
        if self.net_spec.input_dim != 6:
            raise ValueError(f"plain network must take 6 inputs, got {self.net_spec.input_dim}")
        if self.net_spec.output_dim != 1:
            raise ValueError(f"plain network must produce one output, got {self.net_spec.output_dim}")

    def copy(self) -> "PlainModel":
        return replace(self, params=self.params.copy())


Model = DeepSetModel | PlainModel


def init_deepset(
    phi_spec: MLPSpec,
    rho_spec: MLPSpec,
    norm: InputNorm,
    meta: ModelMeta,
    seed: int,
) -> DeepSetModel:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    layout = ad.ParamLayout({**_mlp_layout_shapes("phi", phi_spec), **_mlp_layout_shapes("rho", rho_spec)})
    params = ad.ParamVector.zeros(layout)
    rng = np.random.default_rng(seed)
    _glorot_init(rng, params, "phi", phi_spec)
    _glorot_init(rng, params, "rho", rho_spec)
    return DeepSetModel(phi_spec=phi_spec, rho_spec=rho_spec, norm=norm, meta=meta, params=params)


def init_plain(net_spec: MLPSpec, norm: InputNorm, meta: ModelMeta, seed: int) -> PlainModel:
    layout = ad.ParamLayout(_mlp_layout_shapes("net", net_spec))
    params = ad.ParamVector.zeros(layout)
    rng = np.random.default_rng(seed)
    _glorot_init(rng, params, "net", net_spec)
    return PlainModel(net_spec=net_spec, norm=norm, meta=meta, params=params)


# ---------------------------------------------------------------------------
# Scalar-field construction


def _norm_expr(indices: Sequence[int], norm: InputNorm) -> ad.FieldExpr:
    n = len(indices)
    inv = np.array([1.0 / s for s in norm.scale])
    center = np.array(norm.center)
    if n == 3:
        matrix = np.diag(inv)
        offset = -center * inv
    elif n == 6:
        matrix = np.diag(np.concatenate([inv, inv]))
        offset = np.concatenate([-center * inv, -center * inv])
    else:
        raise ValueError(f"normalization applies to 3 or 6 coordinates, got {n}")
    return ad.affine_const(ad.coords(indices), matrix, offset)


def _mlp_expr(child: ad.FieldExpr, prefix: str, spec: MLPSpec) -> ad.FieldExpr:
    act = ad.tanh_of if spec.activation == "tanh" else ad.sine_of
    expr = child
    n_layers = len(spec.layer_dims)
    for i in range(n_layers):
        expr = ad.dense(expr, f"{prefix}.{i}.w", f"{prefix}.{i}.b")
        if i < n_layers - 1:
            expr = act(expr)
    return expr


RECEIVER_COORDS = (0, 1, 2)
SOURCE_COORDS = (3, 4, 5)


def as_scalar_field(model: Model) -> ad.ScalarField:
    """The model as a 6-input scalar field (receiver coordinates first).

    Derivatives taken through this field are with respect to physical
    meters: the input normalization is part of the graph, so its chain-rule
    factors are applied automatically.
    """
    if isinstance(model, DeepSetModel):
        phi_r = _mlp_expr(_norm_expr(RECEIVER_COORDS, model.norm), "phi", model.phi_spec)
        phi_s = _mlp_expr(_norm_expr(SOURCE_COORDS, model.norm), "phi", model.phi_spec)
        root = _mlp_expr(ad.add_fields(phi_r, phi_s), "rho", model.rho_spec)
    elif isinstance(model, PlainModel):
        root = _mlp_expr(_norm_expr(RECEIVER_COORDS + SOURCE_COORDS, model.norm), "net", model.net_spec)
    else:
        raise TypeError(f"not a model: {type(model).__name__}")
    return ad.ScalarField(root=root, n_inputs=6, layout=model.params.layout)


def _pair_matrix(r, s) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64).reshape(-1, 3)
    s = np.asarray(s, dtype=np.float64).reshape(-1, 3)
    if r.shape != s.shape:
        raise ValueError(f"receiver/source batches differ: {r.shape} vs {s.shape}")
    return np.hstack([r, s])


def forward_many(model: Model, receivers, sources) -> np.ndarray:
    """Raw network outputs for a batch of (receiver, source) pairs."""
    x = _pair_matrix(receivers, sources)
    return np.atleast_1d(ad.eval_field(as_scalar_field(model), x, model.params))


def forward(model: DeepSetModel, r: Position3, s: Position3) -> float:
    """rho(phi(r) + phi(s)); bitwise symmetric under swapping r and s."""
    if not isinstance(model, DeepSetModel):
        raise TypeError("forward expects a deep-set model; use forward_plain for plain networks")
    return float(forward_many(model, r.as_array(), s.as_array())[0])


def forward_plain(model: PlainModel, r: Position3, s: Position3) -> float:
    if not isinstance(model, PlainModel):
        raise TypeError("forward_plain expects a plain model")
    return float(forward_many(model, r.as_array(), s.as_array())[0])


def predict_complex_many(model_re: Model, model_im: Model, receivers, sources) -> np.ndarray:
    """Complex predictions in physical units (target scaling undone)."""
    if model_re.meta.frequency != model_im.meta.frequency:
        raise ValueError(
            f"component models disagree on frequency: "
            f"{model_re.meta.frequency} vs {model_im.meta.frequency}"
        )
    if model_re.meta.part != "real" or model_im.meta.part != "imag":
        raise ValueError("predict_complex expects (real-part model, imag-part model)")
    re = forward_many(model_re, receivers, sources) * model_re.meta.target_scale
    im = forward_many(model_im, receivers, sources) * model_im.meta.target_scale
    return re + 1j * im


def predict_complex(model_re: Model, model_im: Model, r: Position3, s: Position3) -> ComplexPressure:
    z = predict_complex_many(model_re, model_im, r.as_array(), s.as_array())[0]
    return ComplexPressure.from_complex(complex(z))


def swap_invariance_probe(model: Model, seed: int = 0, trials: int = 16, span: float = 2.0) -> bool:
    """True iff outputs are bitwise identical under receiver/source exchange."""
    rng = np.random.default_rng(seed)
    r = span * rng.uniform(-1.0, 1.0, size=(trials, 3))
    s = span * rng.uniform(-1.0, 1.0, size=(trials, 3))
    a = forward_many(model, r, s)
    b = forward_many(model, s, r)
    return bool(np.all(a == b))


# ---------------------------------------------------------------------------
# Batched training graph.  For deep-set models the receiver/source columns
# usually repeat heavily (grid x circle products), so phi runs once per
# unique position and the latent rows are gathered back; this only reorders
# which rows sit in one matmul, the arithmetic per row is unchanged.


def pair_value_node(tape: ad.Tape, model: Model, receivers: np.ndarray, sources: np.ndarray, leaves) -> ad.Var:
    if isinstance(model, PlainModel):
        return ad.field_value_node(tape, as_scalar_field(model), _pair_matrix(receivers, sources), leaves)
    r = np.asarray(receivers, dtype=np.float64).reshape(-1, 3)
    s = np.asarray(sources, dtype=np.float64).reshape(-1, 3)
    n = r.shape[0]
    stacked = np.vstack([r, s])
    unique, inverse = np.unique(stacked, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    inv = np.array([1.0 / v for v in model.norm.scale])
    xn = tape.affine_const(tape.const(unique), np.diag(inv), -np.array(model.norm.center) * inv)
    act = tape.tanh if model.phi_spec.activation == "tanh" else tape.sin
    h = xn
    n_phi = len(model.phi_spec.layer_dims)
    for i in range(n_phi):
        h = tape.linear(h, leaves[f"phi.{i}.w"], leaves[f"phi.{i}.b"])
        if i < n_phi - 1:
            h = act(h)
    z = tape.add(tape.take_rows(h, inverse[:n]), tape.take_rows(h, inverse[n:]))
    act_rho = tape.tanh if model.rho_spec.activation == "tanh" else tape.sin
    n_rho = len(model.rho_spec.layer_dims)
    for i in range(n_rho):
        z = tape.linear(z, leaves[f"rho.{i}.w"], leaves[f"rho.{i}.b"])
        if i < n_rho - 1:
            z = act_rho(z)
    return tape.ravel(z)


# ---------------------------------------------------------------------------
# Serialization: JSON header with the flat parameter vector hex-encoded
# (IEEE-754 doubles, little endian) for a bit-exact round trip.


def _spec_to_dict(spec: MLPSpec) -> dict:
    return {
        "input_dim": spec.input_dim,
        "hidden_widths": list(spec.hidden_widths),
        "output_dim": spec.output_dim,
        "activation": spec.activation,
    }


def _spec_from_dict(d: dict) -> MLPSpec:
    return MLPSpec(
        input_dim=int(d["input_dim"]),
        hidden_widths=tuple(d["hidden_widths"]),
        output_dim=int(d["output_dim"]),
        activation=str(d["activation"]),
    )


def model_to_dict(model: Model) -> dict:
    doc = {
        "format": MODEL_FORMAT,
        "norm": {"center": list(model.norm.center), "scale": list(model.norm.scale)},
        "meta": {
            "frequency": model.meta.frequency,
            "part": model.meta.part,
            "target_scale": model.meta.target_scale,
        },
        "params_hex": model.params.values.astype("<f8").tobytes().hex(),
    }
    if isinstance(model, DeepSetModel):
        doc["kind"] = "deepset"
        doc["phi_spec"] = _spec_to_dict(model.phi_spec)
        doc["rho_spec"] = _spec_to_dict(model.rho_spec)
    else:
        doc["kind"] = "plain"
        doc["net_spec"] = _spec_to_dict(model.net_spec)
    return doc


def model_from_dict(doc: dict, kind: str | None = None) -> Model:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"unsupported model format: {doc.get('format')!r}")
    file_kind = doc.get("kind")
    if kind is not None and file_kind != kind:
        raise TypeError(f"expected a {kind!r} model, file holds {file_kind!r}")
    try:
        norm = InputNorm(tuple(doc["norm"]["center"]), tuple(doc["norm"]["scale"]))
        meta = ModelMeta(
            frequency=float(doc["meta"]["frequency"]),
            part=str(doc["meta"]["part"]),
            target_scale=float(doc["meta"].get("target_scale", 1.0)),
        )
        values = np.frombuffer(bytes.fromhex(doc["params_hex"]), dtype="<f8").astype(np.float64)
        if file_kind == "deepset":
            phi_spec = _spec_from_dict(doc["phi_spec"])
            rho_spec = _spec_from_dict(doc["rho_spec"])
            layout = ad.ParamLayout(
                {**_mlp_layout_shapes("phi", phi_spec), **_mlp_layout_shapes("rho", rho_spec)}
            )
            return DeepSetModel(phi_spec, rho_spec, norm, meta, ad.ParamVector(layout, values))
        if file_kind == "plain":
            net_spec = _spec_from_dict(doc["net_spec"])
            layout = ad.ParamLayout(_mlp_layout_shapes("net", net_spec))
            return PlainModel(net_spec, norm, meta, ad.ParamVector(layout, values))
        raise ModelFormatError(f"unknown model kind {file_kind!r}")
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model document: {exc}") from exc


def save_model(model: Model, path: str) -> None:
    write_text_atomic(path, json.dumps(model_to_dict(model), sort_keys=True) + "\n")


def load_model(path: str, kind: str | None = None) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(doc, kind=kind)
