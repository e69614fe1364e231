import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from equireps.groups import metric_signs, parse_group, sample_element
from equireps.repalgebra import (RegularFeature, TensorType, TypedFeature,
                                 convert_up, group_average, invariant_norm,
                                 kron, metric_kron_signs, regular_lift,
                                 rep_matrix)


def test_tensor_type_parsing():
    assert TensorType.parse("2T1").terms == ((2, 1),)
    assert TensorType.parse("5T0+5T1").terms == ((5, 0), (5, 1))
    assert TensorType.parse("T1+T2+T3").terms == ((1, 1), (1, 2), (1, 3))
    assert str(TensorType.parse("5T0+5T1")) == "5T0+5T1"
    with pytest.raises(ValueError):
        TensorType.parse("T1+T1")
    with pytest.raises(ValueError):
        TensorType.parse("2X3")


@given(st.lists(st.tuples(st.integers(1, 9), st.integers(0, 4)),
                min_size=1, max_size=4, unique_by=lambda t: t[1]))
def test_tensor_type_roundtrip(terms):
    t = TensorType.of(*terms)
    assert TensorType.parse(str(t)) == t
    d = 3
    assert t.payload_length(d) == sum(c * d**m for c, m in terms)


def test_rep_matrix_basics():
    g = sample_element(parse_group("O(3)"), 0)
    assert np.array_equal(rep_matrix(g, 1), g)
    assert rep_matrix(g, 0) == pytest.approx(1.0)
    assert np.array_equal(rep_matrix(np.eye(3), 2), np.eye(9))
    with pytest.raises(ValueError):
        rep_matrix(g, 5)


def test_rep_matrix_against_double_loop_oracle():
    g = np.array([[0.0, -1.0], [1.0, 0.0]])
    got = rep_matrix(g, 2)
    oracle = np.zeros((4, 4))
    for i, j, k, l in itertools.product(range(2), repeat=4):
        oracle[2 * i + k, 2 * j + l] = g[i, j] * g[k, l]
    assert np.array_equal(got, oracle)


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_rep_matrix_is_a_homomorphism(m):
    spec = parse_group("O(3)")
    for seed in range(100):
        g1 = sample_element(spec, 2 * seed)
        g2 = sample_element(spec, 2 * seed + 1)
        lhs = rep_matrix(g1 @ g2, m)
        rhs = rep_matrix(g1, m) @ rep_matrix(g2, m)
        assert np.max(np.abs(lhs - rhs)) <= 1e-8


def test_kron_examples():
    x = np.array([1.0, 0.0])
    y = np.array([0.0, 1.0])
    assert np.array_equal(kron(x, y), [0.0, 1.0, 0.0, 0.0])
    # scalar block times anything is a plain scale
    s = np.array([2.5])
    assert np.array_equal(kron(s, y), 2.5 * y)
    a = np.ones(5)
    assert kron(a, a).shape == (25,)


def test_kron_brute_force_oracle():
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    oracle = np.array([x[i] * y[j] for i in range(3) for j in range(3)])
    assert np.allclose(kron(x, y), oracle, atol=1e-15)


def test_kron_equivariance():
    spec = parse_group("O(3)")
    rng = np.random.default_rng(1)
    for seed in range(20):
        g = sample_element(spec, seed)
        x, y = rng.standard_normal(3), rng.standard_normal(3)
        lhs = kron(g @ x, g @ y)
        rhs = rep_matrix(g, 2) @ kron(x, y)
        assert np.max(np.abs(lhs - rhs)) <= 1e-8


def test_convert_up_examples():
    x = np.array([1.0, 0.0])
    # j=1, i=2: x kron x
    assert np.array_equal(convert_up(x, 2, 1), kron(x, x))
    # j=1, i=3: single 1 at index 0
    up = convert_up(x, 3, 1)
    assert up.shape == (8,)
    assert up[0] == 1.0 and np.count_nonzero(up) == 1
    # j=2, i=3 needs the order-1 aux block
    sq = kron(x, x)
    aux = np.array([0.0, 1.0])
    assert np.array_equal(convert_up(sq, 3, 2, aux=aux), kron(sq, aux))


def test_convert_up_errors():
    x = np.ones(2)
    with pytest.raises(ValueError):
        convert_up(kron(x, x), 3, 2)  # r > 0 without aux
    with pytest.raises(ValueError):
        convert_up(x, 1, 1)


def test_convert_up_equivariance():
    spec = parse_group("O(2)")
    rng = np.random.default_rng(2)
    for seed in range(20):
        g = sample_element(spec, seed)
        x = rng.standard_normal(2)
        lhs = convert_up(g @ x, 3, 1)
        rhs = rep_matrix(g, 3) @ convert_up(x, 3, 1)
        assert np.max(np.abs(lhs - rhs)) <= 1e-8


def test_invariant_norm_examples():
    euclid = np.ones(2)
    assert invariant_norm(np.array([3.0, 4.0]), euclid, 1) == pytest.approx(5.0, abs=1e-6)
    mink = np.array([1.0, -1.0, -1.0, -1.0])
    val = invariant_norm(np.array([2.0, 1.0, 0.0, 0.0]), mink, 1)
    assert val == pytest.approx(np.sqrt(3.0), abs=1e-6)
    eye_flat = np.eye(2).ravel()
    assert invariant_norm(eye_flat, np.ones(2), 2) == pytest.approx(np.sqrt(2.0), abs=1e-6)


@pytest.mark.parametrize("name", ["O(5)", "SO(3)", "O(1,3)", "C4"])
@pytest.mark.parametrize("m", [1, 2])
def test_invariant_norm_is_invariant(name, m):
    spec = parse_group(name)
    signs = metric_signs(spec)
    rng = np.random.default_rng(3)
    for seed in range(25):
        g = sample_element(spec, seed)
        x = rng.standard_normal(spec.d**m)
        before = invariant_norm(x, signs, m)
        after = invariant_norm(rep_matrix(g, m) @ x, signs, m)
        assert abs(after - before) <= 1e-7 * (1.0 + before)


def test_metric_kron_signs():
    mink = np.array([1.0, -1.0])
    assert np.array_equal(metric_kron_signs(mink, 2), [1.0, -1.0, -1.0, 1.0])
    assert np.array_equal(metric_kron_signs(mink, 0), [1.0])


def test_group_average():
    feat = RegularFeature(4, 1, np.arange(1.0, 5.0).reshape(4, 1, 1))
    assert group_average(feat) == pytest.approx(2.5)
    const = RegularFeature(4, 1, np.full((4, 2, 3), 1.25))
    assert np.array_equal(group_average(const), np.full((2, 3), 1.25))


def test_group_average_permutation_invariant_exhaustive():
    rng = np.random.default_rng(4)
    payload = rng.standard_normal((4, 2, 3))
    base = group_average(RegularFeature(4, 1, payload))
    for perm in itertools.permutations(range(4)):
        permuted = group_average(RegularFeature(4, 1, payload[list(perm)]))
        assert np.max(np.abs(permuted - base)) <= 1e-12


def test_regular_lift_rows():
    r0, r1 = np.array([[1.0, 2.0]]), np.array([[3.0, 4.0]])
    feat = RegularFeature(2, 1, np.stack([r0, r1]))
    lifted = regular_lift(feat)
    assert lifted.order == 2 and lifted.payload.shape[0] == 4
    assert np.array_equal(lifted.payload[0], r0 * r0)
    assert np.array_equal(lifted.payload[1], r0 * r1)
    assert np.array_equal(lifted.payload[2], r1 * r0)
    assert np.array_equal(lifted.payload[3], r1 * r1)


def test_regular_lift_group_dimension():
    feat = RegularFeature(4, 1, np.random.default_rng(5).standard_normal((4, 1, 2)))
    assert regular_lift(feat).payload.shape[0] == 16


def test_lift_then_average_is_shift_invariant():
    # exhaustive over the cyclic shifts of C4 and all 4! slice permutations
    rng = np.random.default_rng(6)
    payload = rng.standard_normal((4, 2, 3))
    base = regular_lift(RegularFeature(4, 1, payload)).payload.mean(axis=0)
    for perm in itertools.permutations(range(4)):
        lifted = regular_lift(RegularFeature(4, 1, payload[list(perm)]))
        assert np.max(np.abs(lifted.payload.mean(axis=0) - base)) <= 1e-12


def test_typed_feature_validation():
    t = TensorType.parse("2T1")
    TypedFeature(t, 3, {1: np.zeros((2, 3))})
    with pytest.raises(ValueError):
        TypedFeature(t, 3, {1: np.zeros((2, 4))})
    with pytest.raises(ValueError):
        TypedFeature(t, 3, {1: np.full((2, 3), np.nan)})


def test_typed_feature_transform_roundtrip():
    t = TensorType.parse("T0+2T1+T2")
    rng = np.random.default_rng(7)
    feat = TypedFeature(t, 3, {0: rng.standard_normal((1, 1)),
                               1: rng.standard_normal((2, 3)),
                               2: rng.standard_normal((1, 9))})
    g = sample_element(parse_group("O(3)"), 11)
    back = feat.transform(g).transform(g.T)
    for m in (0, 1, 2):
        assert np.allclose(back.block(m), feat.block(m), atol=1e-12)
    flat = feat.ravel()
    again = TypedFeature.from_ravel(t, 3, flat)
    assert np.array_equal(again.ravel(), flat)
