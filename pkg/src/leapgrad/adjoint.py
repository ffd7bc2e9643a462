"""Continuum ground truth for the discrete gradients.

The costate ODE -dp/dt = (df/dz)^T p is integrated backward from the
readout mismatch at t = 1, and contracting it against the weight Jacobian
along the exact flow yields the functional gradient of the continuous
loss, sampled on the layer grid. The one-dimensional linear field admits
closed forms for everything, which pins the whole pipeline exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backprop import LossSpec
from .errors import NumericalError
from .integrators import REFERENCE, Trajectory, reference_trajectory, rk4_step

__all__ = [
    "AdjointPath",
    "FunctionalDerivative",
    "adjoint_solve",
    "functional_derivative",
    "continuum_solution",
    "ContinuumSolution",
    "LinearModelOracle",
    "linear_model_oracle",
]


@dataclass(frozen=True)
class AdjointPath:
    """Costate samples p(t_l) at the L+1 layer times, plus the refinement used."""

    samples: np.ndarray
    refine: int

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if not np.all(np.isfinite(samples)):
            raise NumericalError("costate samples are not finite")
        object.__setattr__(self, "samples", samples)

    @property
    def L(self) -> int:
        return self.samples.shape[0] - 1


@dataclass(frozen=True)
class FunctionalDerivative:
    """Functional-gradient rows at t_l for l = 0..L-1."""

    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", np.atleast_2d(np.asarray(self.rows, dtype=float)))

    @property
    def L(self) -> int:
        return self.rows.shape[0]


def adjoint_solve(field, path, ref: Trajectory, readout, y: float, refine: int = 64) -> AdjointPath:
    """Integrate the costate backward from p(1) = (g(z(1)) - y) grad g(z(1)).

    Uses fixed 4th-order steps of size h/refine. The state is re-integrated
    backward jointly with the costate, so every stage point sees a
    consistent O(dt^4) state without interpolating stored output.
    """
    if ref is None or ref.scheme != REFERENCE:
        raise ValueError("costate solve needs a reference trajectory on the same grid")
    if refine < 1:
        raise ValueError("refine must be >= 1")
    L = ref.L
    d = ref.d
    total = L * refine
    dt = 1.0 / total

    z_final = ref.states[-1]
    mismatch = float(readout.value(z_final)) - float(y)
    p_final = mismatch * readout.grad(z_final)

    def rhs(t, zp):
        th = path(t)
        z, p = zp[:d], zp[d:]
        dz = field.value(z, th)
        dp = -(field.jac_z(z, th).T @ p)
        return np.concatenate([dz, dp])

    samples = np.empty((L + 1, d))
    samples[L] = p_final
    state = np.concatenate([z_final, p_final])
    for i in range(total, 0, -1):
        state = rk4_step(rhs, i / total, state, -dt)
        if (i - 1) % refine == 0:
            samples[(i - 1) // refine] = state[d:]
    return AdjointPath(samples, refine)


def functional_derivative(field, adjoint: AdjointPath, ref: Trajectory, path) -> FunctionalDerivative:
    """Rows p(t_l)^T df/dtheta(z(t_l), theta(t_l)) for l = 0..L-1."""
    if adjoint.samples.shape[0] != ref.states.shape[0]:
        raise ValueError(
            f"costate has {adjoint.samples.shape[0]} samples but trajectory has {ref.states.shape[0]} states"
        )
    L = ref.L
    rows = np.empty((L, field.n))
    for l in range(L):
        rows[l] = adjoint.samples[l] @ field.jac_theta(ref.states[l], path(l / L))
    return FunctionalDerivative(rows)


@dataclass(frozen=True)
class ContinuumSolution:
    """Per-pair reference trajectories and costates plus the ensemble truth."""

    refs: tuple
    adjoints: tuple
    truth: FunctionalDerivative


def continuum_solution(field, path, loss: LossSpec, L: int, refine: int = 64) -> ContinuumSolution:
    """Solve flow and costate for every data pair; truth is the pair average."""
    refs = []
    adjoints = []
    rows = np.zeros((L, field.n))
    for i in range(loss.npairs):
        x, y = loss.pair(i)
        ref = reference_trajectory(field, x, path, L, refine=refine)
        adj = adjoint_solve(field, path, ref, loss.readout, y, refine=refine)
        rows += functional_derivative(field, adj, ref, path).rows
        refs.append(ref)
        adjoints.append(adj)
    return ContinuumSolution(tuple(refs), tuple(adjoints), FunctionalDerivative(rows / loss.npairs))


@dataclass(frozen=True)
class LinearModelOracle:
    """Closed forms for the linear field f = theta z with constant weight.

    With identity readout g(z) = z and data (x, y):

        z(t) = x exp(rate t)
        p(t) = (x exp(rate) - y) exp(rate (1 - t))
        functional gradient(t) = p(t) z(t)   (constant in t)
    """

    x: float
    rate: float
    y: float

    def state(self, t):
        return self.x * np.exp(self.rate * np.asarray(t, dtype=float))

    def costate(self, t):
        mismatch = self.x * np.exp(self.rate) - self.y
        return mismatch * np.exp(self.rate * (1.0 - np.asarray(t, dtype=float)))

    def weight_gradient(self, t):
        return self.state(t) * self.costate(t)

    def reference_trajectory(self, L: int) -> Trajectory:
        times = np.arange(L + 1) / L
        return Trajectory(self.state(times)[:, None], REFERENCE)

    def adjoint_path(self, L: int) -> AdjointPath:
        times = np.arange(L + 1) / L
        return AdjointPath(self.costate(times)[:, None], refine=0)

    def truth(self, L: int) -> FunctionalDerivative:
        times = np.arange(L) / L
        return FunctionalDerivative(self.weight_gradient(times)[:, None])


def linear_model_oracle(x: float, rate: float, y: float) -> LinearModelOracle:
    """Closed-form bundle for the one-dimensional linear instance."""
    return LinearModelOracle(float(x), float(rate), float(y))
