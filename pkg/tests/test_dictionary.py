import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustmean.dictionary import (
    BasisFunction,
    Dictionary,
    build_custom_dictionary,
    build_histogram_dictionary,
    build_polynomial_dictionary,
    build_trigonometric_dictionary,
    check_dictionary_condition,
    check_lasso_hypotheses,
    coherence_stats,
    dictionary_from_dict,
    quadrature_gram,
)
from robustmean.blocks import CONSTANTS
from robustmean.errors import ConstructionError, DomainError


def _two_function_dict(rho):
    gram = np.array([[1.0, rho], [rho, 1.0]])
    funcs = (BasisFunction("a", lambda x: np.ones_like(x), 1.0), BasisFunction("b", lambda x: x, 1.0))
    return Dictionary(funcs, gram, "custom")


def test_histogram_values():
    d = build_histogram_dictionary([0, 0.5, 1])
    assert d.M == 2 and d.orthonormal
    np.testing.assert_allclose(d.evaluate([0.1, 0.7]), [[math.sqrt(2), 0], [0, math.sqrt(2)]])
    one = build_histogram_dictionary([0, 1])
    np.testing.assert_allclose(one.evaluate([0.0, 0.3, 1.0]), [[1.0], [1.0], [1.0]])
    uneven = build_histogram_dictionary([0, 0.25, 1])
    np.testing.assert_allclose(uneven.evaluate([0.1, 0.5]), [[2.0, 0.0], [0.0, (4 / 3) ** 0.5]])


def test_histogram_fast_path_matches_functions():
    d = build_histogram_dictionary([0, 0.1, 0.35, 0.5, 1])
    x = np.array([0.0, 0.05, 0.1, 0.2, 0.35, 0.49, 0.5, 0.99, 1.0, 1.5, -0.2])
    slow = np.column_stack([f(x) for f in d.functions])
    np.testing.assert_array_equal(d.evaluate(x), slow)


@pytest.mark.parametrize("bad", [[0.5], [0, 0.6, 0.4, 1], [0.1, 1], [0, 0.5, 0.9]])
def test_histogram_construction_errors(bad):
    with pytest.raises(ConstructionError):
        build_histogram_dictionary(bad)


def test_trigonometric_counts_and_gram():
    assert build_trigonometric_dictionary(0).labels == ["const"]
    assert build_trigonometric_dictionary(1).M == 3
    d = build_trigonometric_dictionary(2)
    g = quadrature_gram([f.func for f in d.functions], (0.0, 1.0), 1024)
    np.testing.assert_allclose(g, np.eye(5), atol=1e-10)
    assert d.orthonormal


def test_quadrature_matches_closed_form_polynomial_gram():
    d = build_polynomial_dictionary(2)
    # <x^i, x^j> = 1 / (i + j + 1)
    inner = np.array([[1.0 / (i + j + 1) for j in range(3)] for i in range(3)])
    np.testing.assert_allclose(d.inner_products, inner, atol=1e-8)
    np.testing.assert_allclose(np.diag(d.gram), 1.0)
    np.testing.assert_allclose(d.gram, d.gram.T)
    assert not d.orthonormal


def test_custom_dictionary_errors():
    with pytest.raises(ConstructionError):
        build_custom_dictionary([])
    with pytest.raises(ConstructionError):
        build_custom_dictionary([lambda x: 0 * x])
    with pytest.raises(ConstructionError):
        build_custom_dictionary([lambda x: x], labels=["a", "b"])


def test_round_trip_serialization():
    for d in (build_histogram_dictionary([0, 0.3, 1]), build_trigonometric_dictionary(3), build_polynomial_dictionary(2)):
        e = dictionary_from_dict(d.to_dict())
        assert e.labels == d.labels
        np.testing.assert_allclose(e.gram, d.gram)


def test_coherence_zero_theta():
    d = build_trigonometric_dictionary(2)
    s = coherence_stats(d, np.zeros(5), np.ones(5), 100, 0.05)
    assert s.M_theta == 0 and s.rho_star == 0 and s.G_theta == 0
    h = check_lasso_hypotheses(s)
    assert h.H1 and h.H2


def test_coherence_orthonormal():
    d = build_histogram_dictionary(np.linspace(0, 1, 5))
    s = coherence_stats(d, np.array([1.0, 0, -2, 0]), np.full(4, 0.1), 100, 0.05, kappa_M=1.0)
    assert s.rho_theta == 0 and s.rho_star == 0
    assert s.zeta_M == pytest.approx(1.0, abs=1e-8)
    assert check_lasso_hypotheses(s).H3


def test_coherence_two_functions():
    d = _two_function_dict(0.3)
    s = coherence_stats(d, np.array([1.0, 1.0]), np.array([0.5, 0.5]), 100, 0.05)
    assert s.rho_star == pytest.approx(0.3)
    assert s.rho_theta == pytest.approx(0.3)
    assert s.M_theta == 2 and s.J_theta == (0, 1)
    assert s.G_theta == pytest.approx(0.5)
    assert s.zeta_M == pytest.approx(0.7)


def test_coherence_rejects_zero_weight():
    with pytest.raises(DomainError):
        coherence_stats(_two_function_dict(0.1), np.ones(2), np.array([1.0, 0.0]), 10, 0.1)


def test_h1_fails_at_unit_scale():
    d = build_histogram_dictionary([0, 1])
    # weights chosen so that G = F = 1
    n, delta = 100, 0.05
    w = math.sqrt(math.log(2 / delta) / n)
    s = coherence_stats(d, np.array([1.0]), np.array([w]), n, delta)
    assert s.G_global == pytest.approx(1.0) and s.F_theta == pytest.approx(1.0)
    assert not check_lasso_hypotheses(s).H1


@given(st.integers(1, 8), st.floats(0.01, 10), st.integers(10, 10_000), st.floats(0.001, 0.5))
@settings(max_examples=50)
def test_uniform_weights_collapse(k, c, n, delta):
    # with weights proportional to norms, 16 G F M(theta) reduces to 16 M(theta)
    d = build_trigonometric_dictionary(4)
    theta = np.zeros(d.M)
    theta[:k] = 1.0
    s = coherence_stats(d, theta, c * d.norms, n, delta)
    assert 16 * s.G_global * s.F_theta * s.M_theta == pytest.approx(16 * k, rel=1e-12)


def test_dictionary_condition():
    assert check_dictionary_condition([(1.0, 0.0), (3.0, 0.0)], [3, 3], 100)
    assert not check_dictionary_condition([(0.0, 1.0), (1.0, 1.0)], [10, 10], 10)
    n, V = 400, 4
    var = (0.5 / (CONSTANTS.L1 * math.sqrt(V / n))) ** 2
    assert check_dictionary_condition([(var, 1.0)], [V], n)
    with pytest.raises(DomainError):
        check_dictionary_condition([(-1.0, 1.0)], [V], n)


@given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=8))
def test_gram_symmetric_unit_diagonal(widths):
    b = np.concatenate([[0.0], np.cumsum(widths) / np.sum(widths)])
    b[-1] = 1.0
    if np.any(np.diff(b) <= 0):
        return
    d = build_histogram_dictionary(b)
    np.testing.assert_array_equal(d.gram, d.gram.T)
    np.testing.assert_array_equal(np.diag(d.gram), 1.0)
    # normalized cells have unit L2 norm
    g = quadrature_gram([f.func for f in d.functions], intervals=20000)
    np.testing.assert_allclose(np.diag(g), 1.0, atol=0.02)
