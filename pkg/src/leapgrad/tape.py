"""Minimal reverse-mode tape used to certify the closed-form recursions.

The tape records a fixed vocabulary of array operations while the loss is
built and replays them once, backwards, accumulating adjoints. It exists
solely to check that the hand-derived reverse recursions equal true
reverse-mode differentiation; it is not a general autodiff framework (no
higher-order derivatives, no broadcasting, no control flow).
"""

from __future__ import annotations

import numpy as np

from .backprop import RAW, GradientGrid, LossSpec
from .integrators import EULER, LEAPFROG, WeightGrid

DEFAULT_SIZE_CAP = 2_000_000

__all__ = ["Tape", "TapeBudgetError", "tape_gradient", "tape_pullback", "DEFAULT_SIZE_CAP"]


class TapeBudgetError(RuntimeError):
    """Requested graph exceeds the configured size cap."""


class Tape:
    """Append-only op recorder with a single reverse sweep.

    Node ids are integers; values are float arrays (scalars are 0-d).
    """

    def __init__(self):
        self._values = []
        self._records = []  # (op, out, ...operands/aux)

    def _push(self, value):
        self._values.append(np.asarray(value, dtype=float))
        return len(self._values) - 1

    def value(self, i):
        return self._values[i]

    def leaf(self, value):
        return self._push(value)

    # -- recorded operations ------------------------------------------------

    def add(self, a, b):
        out = self._push(self._values[a] + self._values[b])
        self._records.append(("add", out, a, b))
        return out

    def sub(self, a, b):
        out = self._push(self._values[a] - self._values[b])
        self._records.append(("sub", out, a, b))
        return out

    def mul(self, a, b):
        out = self._push(self._values[a] * self._values[b])
        self._records.append(("mul", out, a, b))
        return out

    def scale(self, a, c):
        out = self._push(float(c) * self._values[a])
        self._records.append(("scale", out, a, float(c)))
        return out

    def matvec(self, m_flat, v, d):
        # m_flat holds a (d, d) matrix row-major
        out = self._push(self._values[m_flat].reshape(d, d) @ self._values[v])
        self._records.append(("matvec", out, m_flat, v, d))
        return out

    def tanh(self, a):
        out = self._push(np.tanh(self._values[a]))
        self._records.append(("tanh", out, a))
        return out

    def dot(self, a, b):
        out = self._push(np.dot(self._values[a], self._values[b]))
        self._records.append(("dot", out, a, b))
        return out

    def square(self, a):
        out = self._push(self._values[a] ** 2)
        self._records.append(("square", out, a))
        return out

    def narrow(self, a, start, stop):
        out = self._push(self._values[a][start:stop])
        self._records.append(("narrow", out, a, start, stop))
        return out

    # -- reverse sweep -------------------------------------------------------

    def gradients(self, out, wrt):
        """Adjoints of ``wrt`` node ids for a scalar output node."""
        if self._values[out].ndim != 0:
            raise ValueError("reverse sweep expects a scalar output")
        adj = {out: np.ones(())}

        def bump(i, delta):
            if i in adj:
                adj[i] = adj[i] + delta
            else:
                adj[i] = np.array(delta, dtype=float, copy=True)

        for rec in reversed(self._records):
            op, node = rec[0], rec[1]
            g = adj.get(node)
            if g is None:
                continue
            if op == "add":
                bump(rec[2], g)
                bump(rec[3], g)
            elif op == "sub":
                bump(rec[2], g)
                bump(rec[3], -g)
            elif op == "mul":
                bump(rec[2], g * self._values[rec[3]])
                bump(rec[3], g * self._values[rec[2]])
            elif op == "scale":
                bump(rec[2], rec[3] * g)
            elif op == "matvec":
                _, _, m_flat, v, d = rec
                bump(m_flat, np.outer(g, self._values[v]).ravel())
                bump(v, self._values[m_flat].reshape(d, d).T @ g)
            elif op == "tanh":
                bump(rec[2], (1.0 - self._values[node] ** 2) * g)
            elif op == "dot":
                bump(rec[2], g * self._values[rec[3]])
                bump(rec[3], g * self._values[rec[2]])
            elif op == "square":
                bump(rec[2], 2.0 * self._values[rec[2]] * g)
            elif op == "narrow":
                _, _, a, start, stop = rec
                full = np.zeros_like(self._values[a])
                full[start:stop] = g
                bump(a, full)
            else:  # pragma: no cover - vocabulary is closed
                raise RuntimeError(f"unknown op {op!r}")
        return [adj.get(i, np.zeros_like(self._values[i])) for i in wrt]


def _field_on_tape(tape, field, z_id, th_id):
    if field.kind == "tanh":
        d = field.d
        sig = tape.narrow(th_id, 0, d)
        w = tape.narrow(th_id, d, d + d * d)
        b = tape.narrow(th_id, d + d * d, field.n)
        u = tape.add(tape.matvec(w, z_id, d), b)
        return tape.mul(sig, tape.tanh(u))
    if field.kind == "linear":
        return tape.mul(th_id, z_id)
    raise TypeError(f"tape supports tanh and linear fields, not {field.kind!r}")


def _readout_on_tape(tape, readout, z_id):
    u = tape.dot(tape.leaf(readout.c), z_id)
    if readout.kind == "linear":
        return u
    if readout.kind == "tanh-linear":
        return tape.tanh(u)
    raise TypeError(f"tape supports linear and tanh-linear readouts, not {readout.kind!r}")


def _check_budget(field, L, size_cap):
    cap = DEFAULT_SIZE_CAP if size_cap is None else size_cap
    size = L * field.d * field.n
    if size > cap:
        raise TapeBudgetError(f"graph size L*d*n = {size} exceeds cap {cap}")


def tape_pullback(field, readout, x, y, grid: WeightGrid, L: int, scheme: str, size_cap=None):
    """Single-pair loss graph; returns (gradient rows (L, n), state adjoints (L+1, d)).

    The state adjoints are the accumulated dE/dz_l for every layer state,
    which is what the closed-form recursions encode up to their fixed
    factor-2 bookkeeping.
    """
    _check_budget(field, L, size_cap)
    tape = Tape()
    th_ids = [tape.leaf(row) for row in grid.layer_rows(L)]
    z_ids = [tape.leaf(np.asarray(x, dtype=float).ravel())]
    h = 1.0 / L
    if scheme == EULER:
        for l in range(L):
            f = _field_on_tape(tape, field, z_ids[l], th_ids[l])
            z_ids.append(tape.add(z_ids[l], tape.scale(f, h)))
    elif scheme == LEAPFROG:
        if L < 2:
            raise ValueError("two-step recursion needs L >= 2")
        f0 = _field_on_tape(tape, field, z_ids[0], th_ids[0])
        z_ids.append(tape.add(z_ids[0], tape.scale(f0, h)))
        for l in range(L - 1):
            f = _field_on_tape(tape, field, z_ids[l + 1], th_ids[l + 1])
            z_ids.append(tape.add(z_ids[l], tape.scale(f, 2.0 * h)))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    g = _readout_on_tape(tape, readout, z_ids[L])
    mismatch = tape.sub(g, tape.leaf(np.asarray(y, dtype=float)))
    e = tape.scale(tape.square(mismatch), 0.5)
    grads = tape.gradients(e, th_ids + z_ids)
    return np.stack(grads[:L]), np.stack(grads[L:])


def tape_gradient(field, loss: LossSpec, grid: WeightGrid, L: int,
                  scheme: str = LEAPFROG, size_cap=None) -> GradientGrid:
    """Gradient of the ensemble loss by taping the whole forward pass."""
    rows = np.zeros((L, field.n))
    for i in range(loss.npairs):
        x, y = loss.pair(i)
        pair_rows, _ = tape_pullback(field, loss.readout, x, y, grid, L, scheme, size_cap=size_cap)
        rows += pair_rows
    return GradientGrid(rows / loss.npairs, RAW)
