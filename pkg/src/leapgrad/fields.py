"""Activation vector fields, readout heads, and smooth weight paths.

These are the building blocks of the layer recursions: the right-hand side
``f(z, theta)`` driving the flow, the scalar readout ``g`` applied to the
final state, and closed-form weight paths ``theta(t)`` that can be sampled
onto layer grids. Every analytic Jacobian here is paired with a
finite-difference validator so the derivatives used by the reverse
recursions can be cross-checked numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "TanhField",
    "LinearField",
    "CustomField",
    "make_field",
    "LinearReadout",
    "TanhLinearReadout",
    "make_readout",
    "TrigWeightPath",
    "JacobianReport",
    "fd_validate",
]


def _as_float_vector(x, name, dim):
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1:] != (dim,):
        raise ValueError(f"{name} has trailing dimension {arr.shape[-1:]}, expected ({dim},)")
    return arr


class TanhField:
    """Gated tanh field ``f(z) = sigma * tanh(W z + b)``.

    Weights pack into one vector as ``(sigma, W row-major, b)`` with
    ``sigma, b`` in R^d and ``W`` in R^{d x d}, so the weight dimension is
    ``n = d*d + 2*d``. The gate ``sigma`` is a vector applied elementwise.

    ``value`` broadcasts over leading batch dimensions of both ``z`` and
    ``theta``; the Jacobians expect single points.
    """

    kind = "tanh"

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("state dimension must be a positive integer")
        self.d = int(d)
        self.n = self.d * self.d + 2 * self.d

    def unpack(self, theta):
        """Split a packed weight vector into ``(sigma, W, b)`` views."""
        theta = _as_float_vector(theta, "theta", self.n)
        d = self.d
        sigma = theta[..., :d]
        w = theta[..., d:d + d * d].reshape(theta.shape[:-1] + (d, d))
        b = theta[..., d + d * d:]
        return sigma, w, b

    def pack(self, sigma, w, b):
        """Inverse of :meth:`unpack` for single points."""
        sigma = _as_float_vector(sigma, "sigma", self.d)
        b = _as_float_vector(b, "b", self.d)
        w = np.asarray(w, dtype=float).reshape(self.d, self.d)
        return np.concatenate([sigma, w.ravel(), b])

    def value(self, z, theta):
        z = _as_float_vector(z, "z", self.d)
        sigma, w, b = self.unpack(theta)
        u = np.einsum("...ij,...j->...i", w, z) + b
        return sigma * np.tanh(u)

    def jac_z(self, z, theta):
        """State Jacobian ``diag(sigma * sech^2(W z + b)) @ W``, shape (d, d)."""
        z = _as_float_vector(z, "z", self.d)
        sigma, w, b = self.unpack(theta)
        gate = sigma * (1.0 - np.tanh(w @ z + b) ** 2)
        return gate[:, None] * w

    def jac_theta(self, z, theta):
        """Weight Jacobian, shape (d, n), columns in the (sigma, W, b) packing order.

        Blocks: d/dsigma = diag(tanh(u)), d/dW_{ij} = sigma_i sech^2(u)_i z_j
        on row i, d/db = diag(sigma * sech^2(u)).
        """
        z = _as_float_vector(z, "z", self.d)
        sigma, w, b = self.unpack(theta)
        d = self.d
        t = np.tanh(w @ z + b)
        gate = sigma * (1.0 - t ** 2)
        jac = np.zeros((d, self.n))
        jac[:, :d] = np.diag(t)
        for i in range(d):
            jac[i, d + i * d:d + (i + 1) * d] = gate[i] * z
        jac[:, d + d * d:] = np.diag(gate)
        return jac


class LinearField:
    """One-dimensional linear field ``f(z) = theta * z`` (d = n = 1)."""

    kind = "linear"
    d = 1
    n = 1

    def value(self, z, theta):
        z = _as_float_vector(z, "z", 1)
        theta = _as_float_vector(theta, "theta", 1)
        return theta * z

    def jac_z(self, z, theta):
        theta = _as_float_vector(theta, "theta", 1)
        return theta.reshape(1, 1).copy()

    def jac_theta(self, z, theta):
        z = _as_float_vector(z, "z", 1)
        return z.reshape(1, 1).copy()


@dataclass(frozen=True)
class CustomField:
    """Field defined by explicit callables (no expression parsing).

    The callables must accept a state of shape (d,) and weights of shape
    (n,) and return shapes (d,), (d, d) and (d, n) respectively, finite for
    all finite inputs.
    """

    d: int
    n: int
    value_fn: Callable
    jac_z_fn: Callable
    jac_theta_fn: Callable
    kind: str = "custom"

    def _coerce(self, z, theta):
        return _as_float_vector(z, "z", self.d), _as_float_vector(theta, "theta", self.n)

    def value(self, z, theta):
        z, theta = self._coerce(z, theta)
        return np.asarray(self.value_fn(z, theta), dtype=float)

    def jac_z(self, z, theta):
        z, theta = self._coerce(z, theta)
        return np.asarray(self.jac_z_fn(z, theta), dtype=float)

    def jac_theta(self, z, theta):
        z, theta = self._coerce(z, theta)
        return np.asarray(self.jac_theta_fn(z, theta), dtype=float)


def make_field(kind: str, d: int = 1):
    if kind == "tanh":
        return TanhField(d)
    if kind == "linear":
        if d != 1:
            raise ValueError("linear field is one-dimensional (d = 1)")
        return LinearField()
    raise ValueError(f"unknown field kind {kind!r}")


class LinearReadout:
    """Scalar readout ``g(z) = c . z`` with constant gradient ``c``."""

    kind = "linear"

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float).ravel()
        if self.c.size < 1:
            raise ValueError("readout coefficient must be non-empty")

    def value(self, z):
        return np.asarray(z, dtype=float) @ self.c

    def grad(self, z):
        return self.c.copy()


class TanhLinearReadout:
    """Scalar readout ``g(z) = tanh(c . z)``."""

    kind = "tanh-linear"

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float).ravel()
        if self.c.size < 1:
            raise ValueError("readout coefficient must be non-empty")

    def value(self, z):
        return np.tanh(np.asarray(z, dtype=float) @ self.c)

    def grad(self, z):
        u = float(np.asarray(z, dtype=float) @ self.c)
        return (1.0 - np.tanh(u) ** 2) * self.c


def make_readout(kind: str, c):
    if kind == "linear":
        return LinearReadout(c)
    if kind == "tanh-linear":
        return TanhLinearReadout(c)
    raise ValueError(f"unknown readout kind {kind!r}")


class TrigWeightPath:
    """Componentwise low-order trigonometric weight path.

    Each component follows ``a_j sin(2 pi k_j t) + b_j cos(2 pi k_j t) + c_j``
    with stored coefficients, so the path is smooth on [0, 1] by
    construction. Sampling the same physical time from nested grids yields
    bitwise-identical values because times are computed as exact integer
    ratios ``l / L``.
    """

    def __init__(self, sin_amp, cos_amp, offset, freq):
        self.sin_amp = np.asarray(sin_amp, dtype=float).ravel()
        self.cos_amp = np.asarray(cos_amp, dtype=float).ravel()
        self.offset = np.asarray(offset, dtype=float).ravel()
        self.freq = np.asarray(freq, dtype=float).ravel()
        sizes = {a.size for a in (self.sin_amp, self.cos_amp, self.offset, self.freq)}
        if len(sizes) != 1 or self.offset.size < 1:
            raise ValueError("coefficient arrays must share one positive length")
        self.n = self.offset.size

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        phase = 2.0 * np.pi * self.freq * t[..., None]
        return self.sin_amp * np.sin(phase) + self.cos_amp * np.cos(phase) + self.offset

    @classmethod
    def constant(cls, values):
        values = np.asarray(values, dtype=float).ravel()
        zeros = np.zeros_like(values)
        return cls(zeros, zeros, values, np.ones_like(values))

    @classmethod
    def from_seed(cls, n, seed, sin_range=0.4, cos_range=0.4, offset_range=0.5, max_freq=2):
        """Draw path coefficients from a seeded generator.

        Amplitude ranges are kept moderate so the induced flows stay tame on
        [0, 1]; integer frequencies keep the path gentle at every grid size.
        """
        rng = np.random.default_rng(seed)
        sin_amp = rng.uniform(-sin_range, sin_range, n)
        cos_amp = rng.uniform(-cos_range, cos_range, n)
        offset = rng.uniform(-offset_range, offset_range, n)
        freq = rng.integers(1, max_freq + 1, n).astype(float)
        return cls(sin_amp, cos_amp, offset, freq)


@dataclass(frozen=True)
class JacobianReport:
    """Worst-case relative deviation between analytic and FD Jacobians."""

    samples: int
    step: float
    max_rel_err_state: float
    max_rel_err_weights: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_err_state, self.max_rel_err_weights)


def _rel_err(analytic, approx):
    scale = max(1.0, float(np.max(np.abs(analytic))))
    return float(np.max(np.abs(analytic - approx))) / scale


def _fd_jac_z(field, z, theta, step):
    cols = []
    for j in range(field.d):
        e = np.zeros(field.d)
        e[j] = step
        cols.append((field.value(z + e, theta) - field.value(z - e, theta)) / (2.0 * step))
    return np.stack(cols, axis=1)


def _fd_jac_theta(field, z, theta, step):
    cols = []
    for j in range(field.n):
        e = np.zeros(field.n)
        e[j] = step
        cols.append((field.value(z, theta + e) - field.value(z, theta - e)) / (2.0 * step))
    return np.stack(cols, axis=1)


def fd_validate(field, samples: int, seed: int, step: float = 1e-5, box: float = 2.0) -> JacobianReport:
    """Compare both analytic Jacobians against central differences.

    Draws ``samples`` random points with entries uniform in [-box, box] and
    returns the largest relative deviation seen for each Jacobian.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    worst_z = 0.0
    worst_theta = 0.0
    for _ in range(samples):
        z = rng.uniform(-box, box, field.d)
        theta = rng.uniform(-box, box, field.n)
        worst_z = max(worst_z, _rel_err(field.jac_z(z, theta), _fd_jac_z(field, z, theta, step)))
        worst_theta = max(
            worst_theta, _rel_err(field.jac_theta(z, theta), _fd_jac_theta(field, z, theta, step))
        )
    return JacobianReport(samples, step, worst_z, worst_theta)
