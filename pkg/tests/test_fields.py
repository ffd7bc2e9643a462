import itertools

import numpy as np
import pytest

from leapgrad import (
    CustomField,
    LinearField,
    LinearReadout,
    TanhField,
    TanhLinearReadout,
    TrigWeightPath,
    WeightGrid,
    fd_validate,
    make_field,
    make_readout,
)


def test_linear_field_values():
    f = LinearField()
    assert f.value([1.0], [0.0])[0] == 0.0
    assert f.value([2.0], [3.0])[0] == 6.0
    assert f.jac_z([1.0], [3.0])[0, 0] == 3.0
    assert f.jac_theta([2.0], [3.0])[0, 0] == 2.0


def test_tanh_field_zero_gate_and_zero_matrix():
    f = TanhField(1)
    theta = f.pack([1.0], [[0.0]], [0.0])
    for z in (-1.3, 0.0, 2.7):
        assert f.value([z], theta)[0] == 0.0
    assert np.array_equal(f.jac_z([0.4], theta), np.zeros((1, 1)))


def test_tanh_value_matches_direct_formula():
    f = TanhField(2)
    rng = np.random.default_rng(3)
    sigma, b, z = rng.normal(size=2), rng.normal(size=2), rng.normal(size=2)
    w = rng.normal(size=(2, 2))
    got = f.value(z, f.pack(sigma, w, b))
    expected = sigma * np.tanh(w @ z + b)
    assert np.allclose(got, expected, rtol=0, atol=0)


def test_tanh_value_broadcasts_over_batches():
    f = TanhField(2)
    rng = np.random.default_rng(4)
    thetas = rng.normal(size=(5, f.n))
    zs = rng.normal(size=(5, 2))
    batched = f.value(zs, thetas)
    for k in range(5):
        assert np.array_equal(batched[k], f.value(zs[k], thetas[k]))
    # shared weights across a batch of states
    shared = f.value(zs, thetas[0])
    for k in range(5):
        assert np.array_equal(shared[k], f.value(zs[k], thetas[0]))


def test_jac_theta_blocks_at_origin():
    f = TanhField(3)
    sigma = np.array([0.3, -1.1, 0.7])
    theta = f.pack(sigma, np.zeros((3, 3)), np.zeros(3))
    jac = f.jac_theta(np.zeros(3), theta)
    d = 3
    assert np.array_equal(jac[:, :d], np.zeros((d, d)))            # tanh(0) = 0
    assert np.array_equal(jac[:, d:d + d * d], np.zeros((d, d * d)))
    assert np.array_equal(jac[:, d + d * d:], np.diag(sigma))       # tanh'(0) = 1


@pytest.mark.parametrize("d,seed", [(1, 0), (2, 1), (3, 2), (4, 3)])
def test_tanh_jacobians_match_central_differences(d, seed):
    report = fd_validate(TanhField(d), samples=25, seed=seed)
    assert report.worst <= 1e-6


def test_fd_validate_linear_is_exact_to_roundoff():
    report = fd_validate(LinearField(), samples=50, seed=11)
    assert report.worst <= 1e-10


def test_fd_validate_tanh_hundred_samples():
    report = fd_validate(TanhField(2), samples=100, seed=5)
    assert report.worst <= 1e-6


def test_fd_validate_rejects_zero_samples():
    with pytest.raises(ValueError):
        fd_validate(TanhField(1), samples=0, seed=0)


def test_linear_growth_bound_on_lattice():
    # |f| <= (|theta|^2 + 1)(|z| + 1) with unit constant when |sigma| <= 1
    f = TanhField(2)
    sig_vals = (-1.0, 0.0, 1.0)
    wb_vals = (-2.0, 2.0)
    z_vals = np.linspace(-2.0, 2.0, 5)
    for sig in itertools.product(sig_vals, repeat=2):
        for w in itertools.product(wb_vals, repeat=4):
            for b in itertools.product(wb_vals, repeat=2):
                theta = f.pack(sig, np.reshape(w, (2, 2)), b)
                bound_theta = np.dot(theta, theta) + 1.0
                for z0 in z_vals:
                    for z1 in z_vals:
                        z = np.array([z0, z1])
                        lhs = np.linalg.norm(f.value(z, theta))
                        assert lhs <= bound_theta * (np.linalg.norm(z) + 1.0)


def test_weight_path_nested_grids_agree_bitwise():
    path = TrigWeightPath.from_seed(8, seed=42)
    coarse = WeightGrid.from_path(path, 16)
    fine = WeightGrid.from_path(path, 32)
    for l in range(17):
        assert np.array_equal(coarse.rows[l], fine.rows[2 * l])


def test_weight_path_constant():
    path = TrigWeightPath.constant([1.5, -2.0])
    for t in (0.0, 0.3, 1.0):
        assert np.array_equal(path(t), [1.5, -2.0])


def test_readout_gradients_match_central_differences():
    rng = np.random.default_rng(9)
    c = rng.normal(size=3)
    z = rng.normal(size=3)
    step = 1e-6
    for readout in (LinearReadout(c), TanhLinearReadout(c)):
        grad = readout.grad(z)
        for j in range(3):
            e = np.zeros(3)
            e[j] = step
            fd = (readout.value(z + e) - readout.value(z - e)) / (2 * step)
            assert abs(grad[j] - fd) <= 1e-8


def test_dimension_mismatch_raises():
    f = TanhField(2)
    with pytest.raises(ValueError):
        f.value([1.0], np.zeros(f.n))
    with pytest.raises(ValueError):
        f.value([1.0, 2.0], np.zeros(f.n - 1))
    with pytest.raises(ValueError):
        LinearField().value([1.0, 2.0], [1.0])


def test_custom_field_wraps_callables():
    f = CustomField(
        d=1,
        n=1,
        value_fn=lambda z, th: th * z,
        jac_z_fn=lambda z, th: np.reshape(th, (1, 1)),
        jac_theta_fn=lambda z, th: np.reshape(z, (1, 1)),
    )
    assert f.value([2.0], [3.0])[0] == 6.0
    assert fd_validate(f, samples=10, seed=1).worst <= 1e-10


def test_factories():
    assert make_field("tanh", 3).n == 15
    assert make_field("linear").kind == "linear"
    with pytest.raises(ValueError):
        make_field("relu", 2)
    with pytest.raises(ValueError):
        make_field("linear", 2)
    assert make_readout("tanh-linear", [1.0]).kind == "tanh-linear"
    with pytest.raises(ValueError):
        make_readout("softmax", [1.0])
