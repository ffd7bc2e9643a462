"""Shared builders for seeded test instances."""

import numpy as np
import pytest

from leapgrad import (
    LinearField,
    LinearReadout,
    LossSpec,
    TanhField,
    TrigWeightPath,
    WeightGrid,
    leapfrog_trajectory,
)
from leapgrad.experiments import ExperimentConfig


def make_tanh_instance(seed, d, L):
    """Seeded tanh instance with a guaranteed O(1) readout mismatch.

    The target is placed a seeded offset of magnitude in [0.5, 1.5] away
    from the network output, so relative gradient comparisons never sit on
    top of an exact minimum.
    """
    rng = np.random.default_rng(seed)
    field = TanhField(d)
    path = TrigWeightPath.from_seed(field.n, seed)
    grid = WeightGrid.from_path(path, L)
    readout = LinearReadout(rng.uniform(-1.0, 1.0, d))
    x = rng.uniform(-1.0, 1.0, d)
    traj = leapfrog_trajectory(field, x, grid, L)
    y = float(readout.value(traj.states[L])) + float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5))
    return field, path, grid, LossSpec(readout, [x], [y])


def make_linear_instance():
    """The analytic instance: f = theta z, theta(t) = 1, x = 1, g = z, y = 0."""
    field = LinearField()
    readout = LinearReadout([1.0])
    path = TrigWeightPath.constant([1.0])
    loss = LossSpec(readout, [[1.0]], [0.0])
    return field, path, readout, loss


def zero_field_config():
    """Config whose field is identically zero and whose targets match exactly."""
    n = 8
    return ExperimentConfig(
        path_sin=(0.0,) * n,
        path_cos=(0.0,) * n,
        path_offset=(0.0,) * n,
        path_freq=(1.0,) * n,
        y_values=None,
        y_match=True,
        levels=(8, 16),
        refine=8,
    )


@pytest.fixture
def tanh_instance():
    return make_tanh_instance


@pytest.fixture
def linear_instance():
    return make_linear_instance()
