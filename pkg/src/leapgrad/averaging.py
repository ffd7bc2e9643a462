"""Block-banded averaging operators that smooth layer-indexed rows.

The reverse recursion of the two-step scheme interleaves two adjoint
sequences (one seeded with a doubled mismatch, one with nearly zero), so
its rows oscillate between consecutive layers no matter how fine the grid
is. A fixed [1/4, 1/2, 1/4] average of neighbouring rows cancels the
interleave while leaving smooth components intact; special first and
second rows handle the one-step start of the recursion:

    row 0:        1    at col 0,  3/4 at col 1,  -1/4 at col 3
    row 1:        1/2  at col 0,  1/2 at col 1,   1/4 at col 2
    rows 2..L-2:  1/4 at col i-1, 1/2 at col i,   1/4 at col i+1
    row L-1:      1/4 at col L-2, 1/2 at col L-1

Every nonzero block is a scalar multiple of the identity, so the operator
is stored as per-row (column, coefficient) stencils and applied in O(L).
The same scalar pattern averages gradient rows (block size n) and
propagator rows (block size d). Boundary row sums are 3/2, 5/4 and 3/4 by
design; they are surfaced via :meth:`AveragingMatrix.row_sums`, not
renormalised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backprop import Backpropagator, GradientGrid

__all__ = [
    "AveragingMatrix",
    "gradient_averaging_matrix",
    "propagator_averaging_matrix",
]


def _stencil_rows(L: int):
    if L < 4:
        raise ValueError(f"averaging needs L >= 4 so rows 0, 1 and 3 are distinct (got L = {L})")
    rows = [((0, 1.0), (1, 0.75), (3, -0.25)), ((0, 0.5), (1, 0.5), (2, 0.25))]
    for i in range(2, L - 1):
        rows.append(((i - 1, 0.25), (i, 0.5), (i + 1, 0.25)))
    rows.append(((L - 2, 0.25), (L - 1, 0.5)))
    return tuple(rows)


@dataclass(frozen=True)
class AveragingMatrix:
    """Sparse block-banded operator with scalar-times-identity blocks."""

    L: int
    block_size: int
    stencil: tuple

    def apply_rows(self, rows) -> np.ndarray:
        """Apply to an (L, block_size) row matrix."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape != (self.L, self.block_size):
            raise ValueError(f"expected rows of shape ({self.L}, {self.block_size}), got {rows.shape}")
        out = np.zeros_like(rows)
        for i, entries in enumerate(self.stencil):
            for j, coeff in entries:
                out[i] += coeff * rows[j]
        return out

    def apply(self, grad: GradientGrid) -> GradientGrid:
        """Averaged gradient rows; the scaling convention is preserved."""
        if grad.n != self.block_size:
            raise ValueError(f"gradient rows have width {grad.n}, operator blocks are {self.block_size}")
        return GradientGrid(self.apply_rows(grad.rows), grad.scaling)

    def apply_propagator(self, p) -> np.ndarray:
        """Averaged propagator rows (accepts a Backpropagator or a row matrix)."""
        rows = p.rows if isinstance(p, Backpropagator) else p
        return self.apply_rows(rows)

    def scalar_dense(self) -> np.ndarray:
        """Dense (L, L) matrix of the scalar block coefficients (for tests)."""
        dense = np.zeros((self.L, self.L))
        for i, entries in enumerate(self.stencil):
            for j, coeff in entries:
                dense[i, j] = coeff
        return dense

    def row_sums(self) -> np.ndarray:
        """Coefficient sums per row (interior rows sum to 1, boundaries do not)."""
        return np.array([sum(c for _, c in entries) for entries in self.stencil])

    @property
    def inf_norm(self) -> float:
        return max(sum(abs(c) for _, c in entries) for entries in self.stencil)


def gradient_averaging_matrix(L: int, n: int) -> AveragingMatrix:
    """Averaging operator for gradient rows (blocks are n x n identities)."""
    if n < 1:
        raise ValueError("block size must be positive")
    return AveragingMatrix(L, n, _stencil_rows(L))


def propagator_averaging_matrix(L: int, d: int) -> AveragingMatrix:
    """Averaging operator for propagator rows (blocks are d x d identities)."""
    if d < 1:
        raise ValueError("block size must be positive")
    return AveragingMatrix(L, d, _stencil_rows(L))
