"""Differentiation engine for scalar fields built from a fixed primitive set.

A ``ScalarField`` is an expression graph over a coordinate vector and a flat
parameter vector, composed from affine maps (constant or parameterized),
tanh, sine, sqrt, reciprocal, elementwise add/multiply, feature sums, and
constants.  Every primitive has closed-form first and second derivatives,
which buys three things:

* reverse-mode parameter gradients (one tape sweep),
* spatial Laplacians via forward propagation of per-direction second-order
  jets (value, first, second directional derivative), and
* parameter gradients *of* the Laplacian: the jet propagation itself is
  recorded on the tape, so one more reverse sweep differentiates it.

All array work is batched over evaluation points; the per-point operations
required by callers are thin wrappers over the batched graph builders.
Everything is deterministic: fixed tape order, fixed reduction order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ParamLayout",
    "ParamVector",
    "Tape",
    "Var",
    "ScalarField",
    "FieldExpr",
    "coords",
    "const_vector",
    "affine_const",
    "dense",
    "tanh_of",
    "sine_of",
    "sqrt_of",
    "reciprocal_of",
    "add_fields",
    "mul_fields",
    "sum_features",
    "eval_field",
    "grad_params",
    "laplacian",
    "grad_params_of_laplacian",
    "make_param_leaves",
    "collect_param_grads",
    "field_value_node",
    "field_laplacian_node",
    "field_value_and_laplacian_nodes",
]


# ---------------------------------------------------------------------------
# Parameter vectors


class ParamLayout:
    """Bijection between named tensors and ranges of one flat vector."""

    def __init__(self, shapes: Mapping[str, tuple[int, ...]]):
        self._shapes: dict[str, tuple[int, ...]] = {}
        self._offsets: dict[str, int] = {}
        offset = 0
        for name, shape in shapes.items():
            shape = tuple(int(d) for d in shape)
            if any(d < 1 for d in shape):
                raise ValueError(f"slot {name!r} has non-positive dimension {shape}")
            self._shapes[name] = shape
            self._offsets[name] = offset
            offset += int(np.prod(shape))
        self.size = offset

    def names(self) -> tuple[str, ...]:
        return tuple(self._shapes)

    def shape_of(self, name: str) -> tuple[int, ...]:
        return self._shapes[name]

    def slice_of(self, name: str) -> slice:
        off = self._offsets[name]
        return slice(off, off + int(np.prod(self._shapes[name])))

    def __contains__(self, name: str) -> bool:
        return name in self._shapes

    def __eq__(self, other) -> bool:
        return isinstance(other, ParamLayout) and self._shapes == other._shapes

    def __repr__(self) -> str:
        return f"ParamLayout({self._shapes!r})"


@dataclass
class ParamVector:
    """Flat float64 parameter storage plus its layout."""

    layout: ParamLayout
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.shape[0] != self.layout.size:
            raise ValueError(f"expected {self.layout.size} parameters, got {self.values.shape[0]}")

    @staticmethod
    def zeros(layout: ParamLayout) -> "ParamVector":
        return ParamVector(layout, np.zeros(layout.size))

    def tensor(self, name: str) -> np.ndarray:
        return self.values[self.layout.slice_of(name)].reshape(self.layout.shape_of(name))

    def copy(self) -> "ParamVector":
        return ParamVector(self.layout, self.values.copy())


# ---------------------------------------------------------------------------
# Tape: dynamic reverse-mode over numpy arrays


class Var:
    """One tape node: a float64 array plus an optional backward rule."""

    __slots__ = ("value", "grad", "needs_grad", "_backward", "_parents")

    def __init__(self, value, needs_grad=False, backward=None, parents=()):
        self.value = value
        self.grad = None
        self.needs_grad = needs_grad
        self._backward = backward
        self._parents = parents

    def add_grad(self, g, own: bool = False) -> None:
        """Accumulate into the gradient buffer.

        ``own=True`` promises ``g`` is freshly allocated and unaliased, so it
        can be adopted as the buffer on first touch instead of copied.
        """
        if self.grad is None:
            self.grad = g if own else np.array(g)
        else:
            self.grad += g


class Tape:
    """Records operations in creation order; backward walks it in reverse."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[Var] = []

    # -- node constructors ---------------------------------------------------

    def const(self, value) -> Var:
        v = Var(np.asarray(value, dtype=np.float64))
        self.nodes.append(v)
        return v

    def leaf(self, value) -> Var:
        v = Var(np.asarray(value, dtype=np.float64), needs_grad=True)
        self.nodes.append(v)
        return v

    def _op(self, value, parents, backward) -> Var:
        needs = any(p.needs_grad for p in parents)
        v = Var(value, needs_grad=needs, backward=backward if needs else None, parents=parents)
        self.nodes.append(v)
        return v

    # -- primitives ----------------------------------------------------------

    def add(self, a: Var, b: Var) -> Var:
        def bw(out):
            # reverse order guarantees out.grad is final here, so one parent
            # may adopt the buffer; the other must accumulate a copy
            if a.needs_grad:
                a.add_grad(out.grad, own=a.grad is None)
            if b.needs_grad:
                b.add_grad(out.grad)

        return self._op(a.value + b.value, (a, b), bw)

    def sub(self, a: Var, b: Var) -> Var:
        def bw(out):
            if b.needs_grad:
                b.add_grad(-out.grad, own=True)
            if a.needs_grad:
                a.add_grad(out.grad, own=a.grad is None)

        return self._op(a.value - b.value, (a, b), bw)

    def mul(self, a: Var, b: Var) -> Var:
        def bw(out):
            if a.needs_grad:
                a.add_grad(out.grad * b.value, own=True)
            if b.needs_grad:
                b.add_grad(out.grad * a.value, own=True)

        return self._op(a.value * b.value, (a, b), bw)

    def square(self, a: Var) -> Var:
        def bw(out):
            g = out.grad * a.value
            g *= 2.0
            a.add_grad(g, own=True)

        return self._op(a.value * a.value, (a,), bw)

    def scale_shift(self, a: Var, scale: float, shift: float = 0.0) -> Var:
        def bw(out):
            a.add_grad(out.grad * scale, own=True)

        return self._op(a.value * scale + shift, (a,), bw)

    def tanh(self, a: Var) -> Var:
        t = np.tanh(a.value)

        def bw(out):
            a.add_grad(out.grad * (1.0 - t * t), own=True)

        return self._op(t, (a,), bw)

    def sin(self, a: Var) -> Var:
        s = np.sin(a.value)
        c = np.cos(a.value)

        def bw(out):
            a.add_grad(out.grad * c, own=True)

        return self._op(s, (a,), bw)

    def cos(self, a: Var) -> Var:
        c = np.cos(a.value)
        s = np.sin(a.value)

        def bw(out):
            a.add_grad(out.grad * (-s), own=True)

        return self._op(c, (a,), bw)

    def sqrt(self, a: Var) -> Var:
        r = np.sqrt(a.value)

        def bw(out):
            a.add_grad(out.grad * (0.5 / r), own=True)

        return self._op(r, (a,), bw)

    def reciprocal(self, a: Var) -> Var:
        w = 1.0 / a.value

        def bw(out):
            a.add_grad(out.grad * (-w * w), own=True)

        return self._op(w, (a,), bw)

    def linear(self, x: Var, w: Var, b: Var | None = None) -> Var:
        """y = x @ w.T (+ b) with w of shape (out, in) and x of shape (B, in)."""
        y = x.value @ w.value.T
        if b is not None:
            y = y + b.value

        def bw(out):
            if x.needs_grad:
                x.add_grad(out.grad @ w.value, own=True)
            if w.needs_grad:
                w.add_grad(out.grad.T @ x.value, own=True)
            if b is not None and b.needs_grad:
                b.add_grad(out.grad.sum(axis=0), own=True)

        parents = (x, w) if b is None else (x, w, b)
        return self._op(y, parents, bw)

    def affine_const(self, x: Var, matrix: np.ndarray, offset: np.ndarray | None = None) -> Var:
        y = x.value @ matrix.T
        if offset is not None:
            y = y + offset

        def bw(out):
            x.add_grad(out.grad @ matrix, own=True)

        return self._op(y, (x,), bw)

    def repeat_rows(self, a: Var, k: int) -> Var:
        def bw(out):
            g = out.grad.reshape(a.value.shape[0], k, *a.value.shape[1:])
            a.add_grad(g.sum(axis=1), own=True)

        return self._op(np.repeat(a.value, k, axis=0), (a,), bw)

    def sum_groups(self, a: Var, k: int) -> Var:
        rows = a.value.shape[0]
        if rows % k:
            raise ValueError(f"cannot group {rows} rows by {k}")
        value = a.value.reshape(rows // k, k, *a.value.shape[1:]).sum(axis=1)

        def bw(out):
            a.add_grad(np.repeat(out.grad, k, axis=0), own=True)

        return self._op(value, (a,), bw)

    def take_rows(self, a: Var, idx: np.ndarray) -> Var:
        idx = np.asarray(idx, dtype=np.intp)
        order = np.argsort(idx, kind="stable")
        sorted_idx = idx[order]
        starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
        touched = sorted_idx[starts]

        def bw(out):
            # grouped scatter-add: sort the cotangent rows by target index and
            # segment-sum, much faster than np.add.at for repeated indices
            sums = np.add.reduceat(out.grad[order], starts, axis=0)
            buf = np.zeros_like(a.value)
            buf[touched] = sums
            a.add_grad(buf, own=True)

        return self._op(a.value[idx], (a,), bw)

    def sum_features(self, a: Var) -> Var:
        def bw(out):
            a.add_grad(np.broadcast_to(out.grad, a.value.shape))

        return self._op(a.value.sum(axis=-1, keepdims=True), (a,), bw)

    def ravel(self, a: Var) -> Var:
        def bw(out):
            a.add_grad(out.grad.reshape(a.value.shape))

        return self._op(a.value.reshape(-1), (a,), bw)

    def mean(self, a: Var) -> Var:
        n = a.value.size

        def bw(out):
            a.add_grad(np.full_like(a.value, out.grad / n), own=True)

        return self._op(np.float64(a.value.mean()), (a,), bw)

    # -- reverse sweep ---------------------------------------------------------

    def backward(self, root: Var) -> None:
        if root.value.ndim != 0:
            raise ValueError("backward root must be a scalar node")
        root.grad = np.ones_like(root.value)
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node)


# ---------------------------------------------------------------------------
# Field expressions


class FieldExpr:
    """Base class for field expression nodes.  Instances are immutable."""

    __slots__ = ()


@dataclass(frozen=True)
class _Coords(FieldExpr):
    indices: tuple[int, ...]


@dataclass(frozen=True)
class _ConstVec(FieldExpr):
    values: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class _AffineConst(FieldExpr):
    child: FieldExpr
    matrix: np.ndarray  # (m, n)
    offset: np.ndarray | None  # (m,)


@dataclass(frozen=True)
class _Dense(FieldExpr):
    child: FieldExpr
    weight_slot: str
    bias_slot: str | None


@dataclass(frozen=True)
class _Unary(FieldExpr):
    child: FieldExpr
    kind: str  # tanh | sine | sqrt | reciprocal


@dataclass(frozen=True)
class _Binary(FieldExpr):
    left: FieldExpr
    right: FieldExpr
    kind: str  # add | mul


@dataclass(frozen=True)
class _SumFeatures(FieldExpr):
    child: FieldExpr


def coords(indices: Sequence[int]) -> FieldExpr:
    """Select input coordinates into a feature vector."""
    return _Coords(tuple(int(i) for i in indices))


def const_vector(values: Sequence[float]) -> FieldExpr:
    return _ConstVec(tuple(float(v) for v in values))


def affine_const(child: FieldExpr, matrix, offset=None) -> FieldExpr:
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    off = None if offset is None else np.asarray(offset, dtype=np.float64).reshape(-1)
    return _AffineConst(child, m, off)


def dense(child: FieldExpr, weight_slot: str, bias_slot: str | None = None) -> FieldExpr:
    return _Dense(child, weight_slot, bias_slot)


def tanh_of(child: FieldExpr) -> FieldExpr:
    return _Unary(child, "tanh")


def sine_of(child: FieldExpr) -> FieldExpr:
    return _Unary(child, "sine")


def sqrt_of(child: FieldExpr) -> FieldExpr:
    return _Unary(child, "sqrt")


def reciprocal_of(child: FieldExpr) -> FieldExpr:
    return _Unary(child, "reciprocal")


def add_fields(left: FieldExpr, right: FieldExpr) -> FieldExpr:
    return _Binary(left, right, "add")


def mul_fields(left: FieldExpr, right: FieldExpr) -> FieldExpr:
    return _Binary(left, right, "mul")


def sum_features(child: FieldExpr) -> FieldExpr:
    return _SumFeatures(child)


def _expr_width(expr: FieldExpr, n_inputs: int, layout: ParamLayout) -> int:
    if isinstance(expr, _Coords):
        for i in expr.indices:
            if i < 0 or i >= n_inputs:
                raise ValueError(f"coordinate index {i} out of range for {n_inputs} inputs")
        return len(expr.indices)
    if isinstance(expr, _ConstVec):
        return len(expr.values)
    if isinstance(expr, _AffineConst):
        w = _expr_width(expr.child, n_inputs, layout)
        if expr.matrix.shape[1] != w:
            raise ValueError(f"affine matrix expects {expr.matrix.shape[1]} features, child has {w}")
        if expr.offset is not None and expr.offset.shape[0] != expr.matrix.shape[0]:
            raise ValueError("affine offset length does not match matrix rows")
        return expr.matrix.shape[0]
    if isinstance(expr, _Dense):
        w = _expr_width(expr.child, n_inputs, layout)
        if expr.weight_slot not in layout:
            raise ValueError(f"unknown parameter slot {expr.weight_slot!r}")
        shape = layout.shape_of(expr.weight_slot)
        if len(shape) != 2 or shape[1] != w:
            raise ValueError(f"slot {expr.weight_slot!r} has shape {shape}, child width {w}")
        if expr.bias_slot is not None:
            if expr.bias_slot not in layout:
                raise ValueError(f"unknown parameter slot {expr.bias_slot!r}")
            if layout.shape_of(expr.bias_slot) != (shape[0],):
                raise ValueError(f"bias slot {expr.bias_slot!r} does not match weight rows")
        return shape[0]
    if isinstance(expr, _Unary):
        return _expr_width(expr.child, n_inputs, layout)
    if isinstance(expr, _Binary):
        lw = _expr_width(expr.left, n_inputs, layout)
        rw = _expr_width(expr.right, n_inputs, layout)
        if lw != rw:
            raise ValueError(f"binary op widths differ: {lw} vs {rw}")
        return lw
    if isinstance(expr, _SumFeatures):
        _expr_width(expr.child, n_inputs, layout)
        return 1
    raise TypeError(f"unknown field expression node {type(expr).__name__}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A smooth scalar function of (inputs, parameters)."""

    root: FieldExpr
    n_inputs: int
    layout: ParamLayout

    def __post_init__(self):
        if self.n_inputs < 1:
            raise ValueError("field needs at least one input coordinate")
        width = _expr_width(self.root, self.n_inputs, self.layout)
        if width != 1:
            raise ValueError(f"field root must produce one feature, got {width}")


# ---------------------------------------------------------------------------
# Forward evaluation with optional second-order jets.
#
# For directions {e_d : d in dirs} the jet of a feature vector u is
#   (u, [D_d u]_d, [D_d^2 u]_d)
# carried as arrays of shape (B, n), (B*D, n), (B*D, n); direction index
# varies fastest along rows.  ``None`` stands for a structurally zero jet,
# which prunes whole branches (e.g. the source half of a receiver-side
# Laplacian).


def _jet_unary(tape: Tape, kind: str, v: Var, j1: Var | None, j2: Var | None, ndirs: int):
    with_jets = j1 is not None or j2 is not None
    d1 = d2 = None  # first and second derivative of the primitive
    if kind == "tanh":
        y = tape.tanh(v)
        if with_jets:
            d1 = tape.scale_shift(tape.square(y), -1.0, 1.0)  # 1 - tanh^2
            d2 = tape.mul(tape.scale_shift(y, -2.0), d1)  # -2 t (1 - t^2)
    elif kind == "sine":
        y = tape.sin(v)
        if with_jets:
            d1 = tape.cos(v)
            d2 = tape.scale_shift(y, -1.0)  # -sin
    elif kind == "sqrt":
        y = tape.sqrt(v)
        if with_jets:
            rinv = tape.reciprocal(y)
            d1 = tape.scale_shift(rinv, 0.5)  # 1/(2 sqrt x)
            d2 = tape.scale_shift(tape.mul(tape.mul(rinv, rinv), rinv), -0.25)  # -1/(4 x^{3/2})
    elif kind == "reciprocal":
        y = tape.reciprocal(v)
        if with_jets:
            d1 = tape.scale_shift(tape.square(y), -1.0)  # -1/x^2
            d2 = tape.scale_shift(tape.mul(y, tape.square(y)), 2.0)  # 2/x^3
    else:
        raise TypeError(f"unknown unary kind {kind!r}")
    if not with_jets:
        return y, None, None
    y1 = None
    y2 = None
    if j1 is not None:
        d1_rep = tape.repeat_rows(d1, ndirs)
        y1 = tape.mul(d1_rep, j1)
        y2 = tape.mul(tape.repeat_rows(d2, ndirs), tape.square(j1))
        if j2 is not None:
            y2 = tape.add(y2, tape.mul(d1_rep, j2))
    elif j2 is not None:
        y2 = tape.mul(tape.repeat_rows(d1, ndirs), j2)
    return y, y1, y2


def _jet_forward(tape: Tape, expr: FieldExpr, x_value: np.ndarray, leaves: Mapping[str, Var],
                 dirs: tuple[int, ...]):
    """Returns (value, first, second) jet Vars for ``expr``; None means zero."""
    ndirs = len(dirs)
    batch = x_value.shape[0]

    if isinstance(expr, _Coords):
        v = tape.const(x_value[:, list(expr.indices)])
        j1 = None
        if ndirs:
            block = np.zeros((ndirs, len(expr.indices)))
            for t, d in enumerate(dirs):
                for j, sel in enumerate(expr.indices):
                    if sel == d:
                        block[t, j] = 1.0
            if np.any(block):
                j1 = tape.const(np.tile(block, (batch, 1)))
        return v, j1, None

    if isinstance(expr, _ConstVec):
        v = tape.const(np.broadcast_to(np.asarray(expr.values), (batch, len(expr.values))).copy())
        return v, None, None

    if isinstance(expr, _AffineConst):
        cv, c1, c2 = _jet_forward(tape, expr.child, x_value, leaves, dirs)
        v = tape.affine_const(cv, expr.matrix, expr.offset)
        j1 = None if c1 is None else tape.affine_const(c1, expr.matrix)
        j2 = None if c2 is None else tape.affine_const(c2, expr.matrix)
        return v, j1, j2

    if isinstance(expr, _Dense):
        cv, c1, c2 = _jet_forward(tape, expr.child, x_value, leaves, dirs)
        w = leaves[expr.weight_slot]
        b = leaves[expr.bias_slot] if expr.bias_slot is not None else None
        v = tape.linear(cv, w, b)
        j1 = None if c1 is None else tape.linear(c1, w)
        j2 = None if c2 is None else tape.linear(c2, w)
        return v, j1, j2

    if isinstance(expr, _Unary):
        cv, c1, c2 = _jet_forward(tape, expr.child, x_value, leaves, dirs)
        return _jet_unary(tape, expr.kind, cv, c1, c2, ndirs)

    if isinstance(expr, _Binary):
        av, a1, a2 = _jet_forward(tape, expr.left, x_value, leaves, dirs)
        bv, b1, b2 = _jet_forward(tape, expr.right, x_value, leaves, dirs)
        if expr.kind == "add":
            v = tape.add(av, bv)
            j1 = a1 if b1 is None else (b1 if a1 is None else tape.add(a1, b1))
            j2 = a2 if b2 is None else (b2 if a2 is None else tape.add(a2, b2))
            return v, j1, j2
        if expr.kind == "mul":
            v = tape.mul(av, bv)
            av_rep = tape.repeat_rows(av, ndirs) if ndirs and (b1 is not None or b2 is not None) else None
            bv_rep = tape.repeat_rows(bv, ndirs) if ndirs and (a1 is not None or a2 is not None) else None
            terms1 = []
            if a1 is not None:
                terms1.append(tape.mul(a1, bv_rep))
            if b1 is not None:
                terms1.append(tape.mul(av_rep, b1))
            j1 = None
            for t in terms1:
                j1 = t if j1 is None else tape.add(j1, t)
            terms2 = []
            if a2 is not None:
                terms2.append(tape.mul(a2, bv_rep))
            if a1 is not None and b1 is not None:
                terms2.append(tape.scale_shift(tape.mul(a1, b1), 2.0))
            if b2 is not None:
                terms2.append(tape.mul(av_rep, b2))
            j2 = None
            for t in terms2:
                j2 = t if j2 is None else tape.add(j2, t)
            return v, j1, j2
        raise TypeError(f"unknown binary kind {expr.kind!r}")

    if isinstance(expr, _SumFeatures):
        cv, c1, c2 = _jet_forward(tape, expr.child, x_value, leaves, dirs)
        v = tape.sum_features(cv)
        j1 = None if c1 is None else tape.sum_features(c1)
        j2 = None if c2 is None else tape.sum_features(c2)
        return v, j1, j2

    raise TypeError(f"unknown field expression node {type(expr).__name__}")


# ---------------------------------------------------------------------------
# Graph builders (batched) and the per-point operations on top of them.


def _as_batch(field: ScalarField, inputs) -> tuple[np.ndarray, bool]:
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != field.n_inputs:
        raise ValueError(f"expected inputs with {field.n_inputs} coordinates, got shape {x.shape}")
    return x, single


def make_param_leaves(tape: Tape, params: ParamVector) -> dict[str, Var]:
    """One differentiable leaf per named parameter tensor."""
    return {name: tape.leaf(params.tensor(name)) for name in params.layout.names()}


def collect_param_grads(leaves: Mapping[str, Var], layout: ParamLayout) -> np.ndarray:
    g = np.zeros(layout.size)
    for name, leaf in leaves.items():
        if leaf.grad is not None:
            g[layout.slice_of(name)] = leaf.grad.reshape(-1)
    return g


def field_value_node(tape: Tape, field: ScalarField, x: np.ndarray, leaves: Mapping[str, Var]) -> Var:
    """Batched field values, shape (B,)."""
    v, _, _ = _jet_forward(tape, field.root, x, leaves, dirs=())
    return tape.ravel(v)


def _checked_dirs(field: ScalarField, coord_indices: Sequence[int]) -> tuple[int, ...]:
    dirs = tuple(int(i) for i in coord_indices)
    if len(set(dirs)) != len(dirs):
        raise ValueError(f"coordinate indices must be distinct, got {dirs}")
    for d in dirs:
        if d < 0 or d >= field.n_inputs:
            raise ValueError(f"coordinate index {d} out of range for {field.n_inputs} inputs")
    if not dirs:
        raise ValueError("need at least one coordinate index")
    return dirs


def field_value_and_laplacian_nodes(
    tape: Tape,
    field: ScalarField,
    x: np.ndarray,
    leaves: Mapping[str, Var],
    coord_indices: Sequence[int],
) -> tuple[Var, Var]:
    """Batched (value, Laplacian) from one graph walk; both shape (B,)."""
    dirs = _checked_dirs(field, coord_indices)
    v, _, j2 = _jet_forward(tape, field.root, x, leaves, dirs)
    value = tape.ravel(v)
    if j2 is None:
        lap = tape.const(np.zeros(x.shape[0]))
    else:
        lap = tape.ravel(tape.sum_groups(j2, len(dirs)))
    return value, lap


def field_laplacian_node(
    tape: Tape,
    field: ScalarField,
    x: np.ndarray,
    leaves: Mapping[str, Var],
    coord_indices: Sequence[int],
) -> Var:
    """Batched sum of second derivatives along ``coord_indices``, shape (B,)."""
    _, lap = field_value_and_laplacian_nodes(tape, field, x, leaves, coord_indices)
    return lap


def eval_field(field: ScalarField, inputs, params: ParamVector):
    """Forward value; scalar for a single point, (B,) for a batch."""
    x, single = _as_batch(field, inputs)
    tape = Tape()
    leaves = {name: tape.const(params.tensor(name)) for name in params.layout.names()}
    out = field_value_node(tape, field, x, leaves)
    return float(out.value[0]) if single else out.value


def grad_params(field: ScalarField, inputs, params: ParamVector) -> np.ndarray:
    """Gradient of the field value at one point w.r.t. every parameter."""
    x, single = _as_batch(field, inputs)
    if not single:
        raise ValueError("grad_params expects a single evaluation point")
    tape = Tape()
    leaves = make_param_leaves(tape, params)
    out = field_value_node(tape, field, x, leaves)
    tape.backward(tape.mean(out))
    return collect_param_grads(leaves, params.layout)


def laplacian(field: ScalarField, inputs, params: ParamVector, coord_indices: Sequence[int]):
    """Sum of second derivatives over the designated input coordinates."""
    x, single = _as_batch(field, inputs)
    tape = Tape()
    leaves = {name: tape.const(params.tensor(name)) for name in params.layout.names()}
    out = field_laplacian_node(tape, field, x, leaves, coord_indices)
    return float(out.value[0]) if single else out.value


def grad_params_of_laplacian(
    field: ScalarField, inputs, params: ParamVector, coord_indices: Sequence[int]
) -> np.ndarray:
    """Gradient w.r.t. parameters of the Laplacian at one point."""
    x, single = _as_batch(field, inputs)
    if not single:
        raise ValueError("grad_params_of_laplacian expects a single evaluation point")
    tape = Tape()
    leaves = make_param_leaves(tape, params)
    out = field_laplacian_node(tape, field, x, leaves, coord_indices)
    tape.backward(tape.mean(out))
    return collect_param_grads(leaves, params.layout)
