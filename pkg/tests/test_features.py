import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nsrlsvi.features import (check_psd, in_span, is_projector, projection_onto_span,
                              pseudo_inverse, quad_norm, span_basis)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_projection_of_empty_data_is_zero():
    assert np.array_equal(projection_onto_span([], dim=2), np.zeros((2, 2)))


def test_projection_onto_axis():
    assert np.allclose(projection_onto_span([np.array([1.0, 0.0])]), np.diag([1.0, 0.0]))


def test_duplicate_direction_collapses_to_rank_one():
    P = projection_onto_span([np.array([1.0, 1.0]) / np.sqrt(2), np.array([2.0, 2.0]) / np.sqrt(8)])
    assert np.allclose(P, 0.5 * np.ones((2, 2)), atol=1e-12)
    assert span_basis([np.array([1.0, 1.0]), np.array([2.0, 2.0])]).shape[1] == 1


def test_pseudo_inverse_examples():
    assert np.allclose(pseudo_inverse(np.eye(3)), np.eye(3))
    assert np.allclose(pseudo_inverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))


def test_pseudo_inverse_rank_deficient_gram():
    G = np.random.default_rng(0).normal(size=(2, 5))
    M = G.T @ G
    assert np.allclose(M @ pseudo_inverse(M) @ M, M, atol=1e-9)


def test_quad_norm_examples():
    assert quad_norm(np.array([1.0, 0.0]), np.eye(2)) == pytest.approx(1.0)
    assert quad_norm(np.array([3.0, 4.0]), np.eye(2)) == pytest.approx(5.0)
    assert quad_norm(np.array([1.0, 0.0]), np.diag([4.0, 9.0])) == pytest.approx(2.0)


def test_in_span_examples():
    P = np.diag([1.0, 0.0])
    assert in_span(np.array([1.0, 0.0]), P)
    assert not in_span(np.array([0.0, 1.0]), P)
    assert in_span(np.array([1.0, 1e-12]), P)


def test_check_psd_rejects_asymmetric():
    with pytest.raises(ValueError):
        check_psd(np.array([[1.0, 1.0], [0.0, 1.0]]))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=finite))
def test_projector_properties(data):
    P = projection_onto_span(list(data), dim=data.shape[1])
    assert np.linalg.norm(P @ P - P) <= 1e-8
    assert np.linalg.norm(P - P.T) <= 1e-10
    assert is_projector(P)
    # appending a vector already in the span changes nothing
    extra = P @ data.sum(axis=0)
    P2 = projection_onto_span(list(data) + [extra], dim=data.shape[1])
    assert np.linalg.norm(P2 - P) <= 1e-8
    # a projector is its own pseudo-inverse
    assert np.allclose(pseudo_inverse(P), P, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_cauchy_schwarz_under_pseudo_inverse(d, k, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(k, d))
    M = G.T @ G
    x = M @ rng.normal(size=d)  # in range(M)
    y = rng.normal(size=d)
    lhs = quad_norm(x, pseudo_inverse(M)) * quad_norm(y, M)
    assert lhs >= abs(x @ y) - 1e-8 * (1 + abs(x @ y))
