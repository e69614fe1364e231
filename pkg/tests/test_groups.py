import numpy as np
import pytest

from equireps.groups import (Family, GroupSpec, check_element, cyclic_element,
                             enumerate_elements, metric_form, parse_group,
                             sample_element)

TOLS = {"O(5)": 1e-10, "SO(3)": 1e-10, "O(1,3)": 1e-8, "C4": 1e-12}


def test_parse_group_strings():
    assert parse_group("O(5)") == GroupSpec(Family.ORTHOGONAL, 5)
    assert parse_group("SO(3)") == GroupSpec(Family.SPECIAL_ORTHOGONAL, 3)
    assert parse_group("O(1,3)") == GroupSpec(Family.LORENTZ, 4)
    assert parse_group("C4") == GroupSpec(Family.CYCLIC, 2, 4)
    for spec in ("O(5)", "SO(3)", "O(1,3)", "C4"):
        assert str(parse_group(spec)) == spec
    with pytest.raises(ValueError):
        parse_group("U(1)")


def test_metric_forms():
    assert np.array_equal(metric_form(parse_group("O(5)")), np.eye(5))
    assert np.array_equal(metric_form(parse_group("C4")), np.eye(2))
    eta = metric_form(parse_group("O(1,3)"))
    assert np.array_equal(eta, np.diag([1.0, -1.0, -1.0, -1.0]))


@pytest.mark.parametrize("name", ["O(5)", "SO(3)", "O(1,3)", "C4"])
def test_sampled_elements_satisfy_defining_relation(name):
    spec = parse_group(name)
    for seed in range(1000):
        assert check_element(spec, sample_element(spec, seed)) <= TOLS[name]


def test_sampling_deterministic_in_seed():
    spec = parse_group("O(3)")
    assert np.array_equal(sample_element(spec, 42), sample_element(spec, 42))


def test_o_sampler_covers_both_determinant_components():
    spec = parse_group("O(4)")
    dets = {round(np.linalg.det(sample_element(spec, s))) for s in range(50)}
    assert dets == {-1, 1}


def test_c4_generator_is_quarter_turn():
    g = cyclic_element(parse_group("C4"), 1)
    assert np.allclose(g, [[0.0, -1.0], [1.0, 0.0]], atol=1e-15)


def test_c1_is_trivial():
    els = enumerate_elements(parse_group("C1"))
    assert len(els) == 1
    assert np.allclose(els[0], np.eye(2))


@pytest.mark.parametrize("n", [1, 4, 8])
def test_cyclic_enumeration_forms_a_group(n):
    els = enumerate_elements(parse_group(f"C{n}"))
    assert len(els) == n

    def index_of(m):
        hits = [k for k, e in enumerate(els) if np.allclose(e, m, atol=1e-12)]
        assert len(hits) == 1
        return hits[0]

    # brute-force multiplication table: closure, identity column, inverses
    table = np.array([[index_of(a @ b) for b in els] for a in els])
    assert index_of(np.eye(2)) == 0
    assert sorted(table[0]) == list(range(n))
    for k in range(n):
        assert 0 in table[k]


def test_c8_element_products():
    els = enumerate_elements(parse_group("C8"))
    assert np.allclose(els[3] @ els[5], np.eye(2), atol=1e-12)


def test_enumeration_rejects_continuous_groups():
    with pytest.raises(ValueError):
        enumerate_elements(parse_group("O(3)"))


@pytest.mark.parametrize("name", ["O(5)", "SO(3)", "O(1,3)", "C4"])
def test_metric_form_is_invariant(name):
    spec = parse_group(name)
    eta = metric_form(spec)
    for seed in range(100):
        g = sample_element(spec, seed)
        assert np.max(np.abs(g.T @ eta @ g - eta)) <= 1e-8


def test_group_spec_validation():
    with pytest.raises(ValueError):
        GroupSpec(Family.LORENTZ, 1)
    with pytest.raises(ValueError):
        GroupSpec(Family.CYCLIC, 3, n=4)
    with pytest.raises(ValueError):
        GroupSpec(Family.CYCLIC, 2, n=0)
