"""Layer recursions and a high-accuracy reference solution of the flow.

Two discrete schemes build network trajectories from a weight grid: the
one-step recursion (first order in the layer width h = 1/L) and the
two-step recursion (second order). The reference solver integrates the
continuous flow with a classical 4th-order stepper on a refined sub-grid
and serves as ground truth for every accuracy statement in this package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

EULER = "euler"
LEAPFROG = "leapfrog"
REFERENCE = "reference"
_SCHEMES = (EULER, LEAPFROG, REFERENCE)

__all__ = [
    "EULER",
    "LEAPFROG",
    "REFERENCE",
    "WeightGrid",
    "Trajectory",
    "euler_trajectory",
    "leapfrog_trajectory",
    "reference_trajectory",
    "rk4_step",
]


@dataclass(frozen=True)
class WeightGrid:
    """Per-layer weight rows; row l holds the weights active at t = l/L.

    Grids sampled from a continuous path carry L+1 rows (the trailing row
    keeps the final-time weights for consumers that want them); the layer
    recursions only read rows 0..L-1.
    """

    rows: np.ndarray

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    def layer_rows(self, L: int) -> np.ndarray:
        if self.rows.shape[0] < L:
            raise ValueError(f"weight grid has {self.rows.shape[0]} rows, need at least {L}")
        return self.rows[:L]

    @classmethod
    def from_path(cls, path, L: int) -> "WeightGrid":
        """Sample a continuous path at t = l/L for l = 0..L (L+1 rows)."""
        if L < 1:
            raise ValueError("layer count must be >= 1")
        return cls(np.stack([np.asarray(path(l / L), dtype=float).ravel() for l in range(L + 1)]))


@dataclass(frozen=True)
class Trajectory:
    """Discrete states z_0..z_L together with the scheme that produced them.

    The layer count L is the number of steps (row count minus one); the
    step size h = 1/L is derived, never stored.
    """

    states: np.ndarray
    scheme: str

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if states.shape[0] < 2:
            raise ValueError("a trajectory needs at least two states")
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not np.all(np.isfinite(states)):
            raise NumericalError("trajectory states are not finite")
        object.__setattr__(self, "states", states)

    @property
    def L(self) -> int:
        return self.states.shape[0] - 1

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def h(self) -> float:
        return 1.0 / self.L

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.L + 1) / self.L


def _check_start(field, x):
    x = np.asarray(x, dtype=float).ravel()
    if x.size != field.d:
        raise ValueError(f"initial state has dimension {x.size}, field expects {field.d}")
    return x


def euler_trajectory(field, x, grid: WeightGrid, L: int) -> Trajectory:
    """One-step recursion z_{l+1} = z_l + h f(z_l, theta_l)."""
    x = _check_start(field, x)
    if L < 1:
        raise ValueError("one-step recursion needs L >= 1")
    th = grid.layer_rows(L)
    h = 1.0 / L
    states = np.empty((L + 1, field.d))
    states[0] = x
    for l in range(L):
        states[l + 1] = states[l] + h * field.value(states[l], th[l])
    return Trajectory(states, EULER)


def leapfrog_trajectory(field, x, grid: WeightGrid, L: int) -> Trajectory:
    """Two-step recursion z_{l+2} = z_l + 2h f(z_{l+1}, theta_{l+1}).

    The first step is a single one-step update. The 2h coefficient makes
    the recursion the standard second-order two-step scheme; it also fixes
    the factors appearing in its reverse-mode recursion.
    """
    x = _check_start(field, x)
    if L < 2:
        raise ValueError("two-step recursion needs L >= 2")
    th = grid.layer_rows(L)
    h = 1.0 / L
    states = np.empty((L + 1, field.d))
    states[0] = x
    states[1] = x + h * field.value(x, th[0])
    for l in range(L - 1):
        states[l + 2] = states[l] + 2.0 * h * field.value(states[l + 1], th[l + 1])
    return Trajectory(states, LEAPFROG)


def rk4_step(rhs, t, y, dt):
    """One classical 4th-order step of y' = rhs(t, y); dt may be negative."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k1)
    k3 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def reference_trajectory(field, x, path, L: int, refine: int = 64) -> Trajectory:
    """High-accuracy solution of dz/dt = f(z, theta(t)) on the layer grid.

    Integrates with ``refine`` fixed 4th-order sub-steps per layer interval,
    sampling the weight path continuously, and returns the states at the
    L+1 layer times. With the default refinement the solver error is
    O((h/64)^4), far below anything the discrete schemes are measured
    against.
    """
    x = _check_start(field, x)
    if L < 1:
        raise ValueError("layer count must be >= 1")
    if refine < 1:
        raise ValueError("refine must be >= 1")
    total = L * refine
    dt = 1.0 / total
    states = np.empty((L + 1, field.d))
    states[0] = x
    z = x.copy()

    def rhs(t, y):
        return field.value(y, path(t))

    for i in range(total):
        z = rk4_step(rhs, i / total, z, dt)
        if (i + 1) % refine == 0:
            states[(i + 1) // refine] = z
    return Trajectory(states, REFERENCE)
