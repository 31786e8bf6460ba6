"""Shared test utilities: independent oracles and small field builders.

The finite-difference and straight-line-forward oracles here deliberately
avoid the library's own differentiation and evaluation code paths, so the
tests compare two independent computations.
"""

from __future__ import annotations

import numpy as np

from atfrecon import autodiff as ad


def rel_err(a, b, floor: float = 1e-12) -> float:
    """Max absolute difference scaled by the magnitude of the reference."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(b))) if b.size else 0.0, floor)
    return float(np.max(np.abs(a - b))) / scale if a.size else 0.0


def fd_gradient(f, x0: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    x0 = np.asarray(x0, dtype=float)
    g = np.zeros_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (f(xp) - f(xm)) / (2.0 * step)
    return g


def fd_second_derivative(f, x0: np.ndarray, i: int, step: float = 1e-4) -> float:
    """Second-order central difference along coordinate i."""
    xp = np.asarray(x0, dtype=float).copy()
    xm = xp.copy()
    xp[i] += step
    xm[i] -= step
    return (f(xp) - 2.0 * f(np.asarray(x0, dtype=float)) + f(xm)) / (step * step)


def fd_laplacian(f, x0: np.ndarray, coord_indices, step: float = 1e-4) -> float:
    return sum(fd_second_derivative(f, x0, i, step) for i in coord_indices)


# ---------------------------------------------------------------------------
# A small random MLP field built directly from autodiff combinators, plus an
# independent straight-line numpy forward pass for the same parameters.


def make_mlp_field(n_inputs: int, widths, seed: int, activation: str = "tanh"):
    """Returns (ScalarField, ParamVector, layer dims) for a random MLP."""
    dims = [n_inputs, *widths, 1]
    shapes = {}
    for i in range(len(dims) - 1):
        shapes[f"L{i}.w"] = (dims[i + 1], dims[i])
        shapes[f"L{i}.b"] = (dims[i + 1],)
    layout = ad.ParamLayout(shapes)
    params = ad.ParamVector.zeros(layout)
    rng = np.random.default_rng(seed)
    for i in range(len(dims) - 1):
        params.tensor(f"L{i}.w")[...] = rng.normal(0.0, 0.8 / np.sqrt(dims[i]), size=(dims[i + 1], dims[i]))
        params.tensor(f"L{i}.b")[...] = rng.normal(0.0, 0.1, size=(dims[i + 1],))
    expr = ad.coords(range(n_inputs))
    for i in range(len(dims) - 1):
        expr = ad.dense(expr, f"L{i}.w", f"L{i}.b")
        if i < len(dims) - 2:
            expr = ad.tanh_of(expr) if activation == "tanh" else ad.sine_of(expr)
    field = ad.ScalarField(root=expr, n_inputs=n_inputs, layout=layout)
    return field, params, dims


def reference_mlp_forward(params: ad.ParamVector, dims, x: np.ndarray, activation: str = "tanh") -> float:
    """Straight-line forward pass written independently of the tape."""
    h = np.asarray(x, dtype=float)
    n_layers = len(dims) - 1
    for i in range(n_layers):
        w = params.tensor(f"L{i}.w")
        b = params.tensor(f"L{i}.b")
        h = w @ h + b
        if i < n_layers - 1:
            h = np.tanh(h) if activation == "tanh" else np.sin(h)
    return float(h[0])


def eval_with_params(field: ad.ScalarField, x: np.ndarray):
    """Returns f(theta) closures for finite differencing over parameters."""

    def f(theta: np.ndarray) -> float:
        pv = ad.ParamVector(field.layout, theta)
        return float(ad.eval_field(field, x, pv))

    return f


def laplacian_with_params(field: ad.ScalarField, x: np.ndarray, coord_indices):
    def f(theta: np.ndarray) -> float:
        pv = ad.ParamVector(field.layout, theta)
        return float(ad.laplacian(field, x, pv, coord_indices))

    return f
