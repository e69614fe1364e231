import numpy as np
import pytest

from equireps import autodiff as ad
from equireps.autodiff import Value
from equireps.groups import boost_matrix, parse_group, sample_element
from equireps.models import (MLP, build_o3_model, build_o5_model,
                             build_o13_model, build_task_mlp, count_params,
                             equivariance_violation, mlp_width_for_budget,
                             transform_blocks)


def test_o5_parameter_count_matches_layer_dims():
    # (2x100) + 3 x (100x100) + (100x1), no biases anywhere
    net = build_o5_model(channels=100, seed=0)
    assert count_params(net.params) == 30_300


def test_o5_output_is_scalar():
    net = build_o5_model(channels=16, seed=0)
    out = net.forward({1: np.random.default_rng(0).standard_normal((7, 5, 2))})
    assert out.shape == (7, 1, 1)


def test_o5_invariance():
    spec = parse_group("O(5)")
    rng = np.random.default_rng(1)
    for trial in range(20):
        net = build_o5_model(channels=12, seed=trial)
        blocks = {1: rng.standard_normal((4, 5, 2))}
        g = sample_element(spec, 50 + trial)
        assert equivariance_violation(net, blocks, g) <= 1e-7


def test_o3_scalar_embeds_as_identity_matrix():
    s = Value(np.array([2.0]).reshape(1, 1, 1))
    out = ad.embed_identity(s, 3)
    assert np.array_equal(out.data[0, :, 0], 2.0 * np.eye(3).ravel())


def test_o3_vector_outer_product():
    e1 = np.zeros((1, 3, 1))
    e1[0, 0, 0] = 1.0
    sq = ad.outer_payload(Value(e1), Value(e1))
    grid = sq.data[0, :, 0].reshape(3, 3)
    assert grid[0, 0] == 1.0 and np.count_nonzero(grid) == 1


def test_o3_output_shape_and_equivariance():
    spec = parse_group("O(3)")
    rng = np.random.default_rng(2)
    net = build_o3_model(channels=8, seed=0)
    blocks = {0: rng.uniform(0.1, 2.0, (3, 1, 5)), 1: rng.standard_normal((3, 3, 5))}
    assert net.forward(blocks).shape == (3, 9, 1)
    for trial in range(10):
        g = sample_element(spec, trial)
        assert equivariance_violation(net, blocks, g) <= 1e-7


def test_o13_invariance_under_rotations_and_boosts():
    rng = np.random.default_rng(3)
    net = build_o13_model(channels=12, seed=0)
    blocks = {1: rng.standard_normal((4, 4, 4))}
    base = net.forward(blocks).data
    assert base.shape == (4, 1, 1)

    # pure spatial rotation
    rot = np.eye(4)
    rot[1:, 1:] = sample_element(parse_group("SO(3)"), 5)
    rotated = net.forward(transform_blocks(blocks, rot)).data
    assert np.max(np.abs(rotated - base)) <= 1e-7 * (1 + np.max(np.abs(base)))

    # boost of rapidity 1.0
    lam = boost_matrix(4, np.array([0.3, -0.5, 0.8]), 1.0)
    boosted = net.forward(transform_blocks(blocks, lam)).data
    assert np.max(np.abs(boosted - base)) <= 1e-6 * (1 + np.max(np.abs(base)))


def test_mlp_width_budget_solver():
    budget = count_params(build_o5_model(channels=32).params)
    w = mlp_width_for_budget(10, 1, 5, budget)
    mlp = build_task_mlp("o5", width=w)
    assert count_params(mlp.params) >= budget
    smaller = build_task_mlp("o5", width=w - 1)
    assert count_params(smaller.params) < budget


def test_mlp_forward_shapes():
    mlp = build_task_mlp("inertia", width=20, seed=0)
    rng = np.random.default_rng(4)
    blocks = {0: rng.standard_normal((6, 1, 5)), 1: rng.standard_normal((6, 3, 5))}
    assert mlp.forward(blocks).shape == (6, 9, 1)


def test_mlp_is_not_equivariant():
    # sanity check on the audit itself: the baseline must fail it
    rng = np.random.default_rng(5)
    mlp = build_task_mlp("o5", width=24, seed=0)
    blocks = {1: rng.standard_normal((4, 5, 2))}
    g = sample_element(parse_group("O(5)"), 9)
    assert equivariance_violation(mlp, blocks, g) > 1e-3


@pytest.mark.parametrize("build,task,blocks_fn", [
    (build_o5_model, "o5", lambda rng: {1: rng.standard_normal((3, 5, 2))}),
    (build_o13_model, "scattering", lambda rng: {1: rng.standard_normal((3, 4, 4))}),
    (build_o3_model, "inertia", lambda rng: {0: rng.uniform(0.1, 2, (2, 1, 5)),
                                             1: rng.standard_normal((2, 3, 5))}),
])
def test_model_gradients_match_finite_differences(build, task, blocks_fn):
    rng = np.random.default_rng(6)
    net = build(channels=6, seed=0)
    blocks = blocks_fn(rng)
    target = net.forward(blocks).data + rng.standard_normal(net.forward(blocks).shape)

    loss = ad.mse(net.forward(blocks), target)
    ad.zero_grad(net.params)
    loss.backward()
    analytic = [p.grad.copy() for p in net.params]

    def loss_fn():
        return ad.mse(net.forward(blocks), target).item()

    fd = ad.finite_difference_grad(loss_fn, net.params[:2])
    for an, f in zip(analytic[:2], fd):
        rel = np.abs(an - f) / (np.abs(an) + np.abs(f) + 1e-6)
        assert rel.max() <= 1e-4
