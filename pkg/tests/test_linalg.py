import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gaforest.errors import DegenerateMatrixError, DomainError, ShapeError
from gaforest.linalg import (SingularSpectrum, condition_number, matrix_condition, raw_condition,
                             singular_values)

from oracles import numpy_singular_values


def test_identity_and_diagonal_examples():
    np.testing.assert_allclose(singular_values(np.eye(3)).values, [1, 1, 1], atol=1e-15)
    assert condition_number(singular_values(np.eye(3))) == pytest.approx(1.0)
    assert condition_number(singular_values(np.diag([3.0, 1.0]))) == pytest.approx(3.0)


def test_tolerance_truncation_example():
    spec = SingularSpectrum.from_values([5.0, 2.0, 1e-18])
    assert spec.rank == 2
    assert condition_number(spec) == pytest.approx(2.5)
    assert raw_condition(spec) == pytest.approx(5e18)


@pytest.mark.parametrize("shape", [(1, 1), (1, 7), (7, 1), (5, 5), (40, 12), (12, 40), (128, 65)])
def test_matches_numpy_svd(shape):
    m = np.random.default_rng(sum(shape)).normal(size=shape)
    ours = singular_values(m).values
    ref = numpy_singular_values(m)
    assert ours.shape == (min(shape),)
    assert np.max(np.abs(ours - ref) / ref.max()) < 1e-12


def test_ill_conditioned_matrix_accuracy():
    rng = np.random.default_rng(4)
    u, _ = np.linalg.qr(rng.normal(size=(30, 30)))
    v, _ = np.linalg.qr(rng.normal(size=(20, 20)))
    sv = np.logspace(0, -9, 20)
    m = u[:, :20] @ np.diag(sv) @ v.T
    ours = singular_values(m).values
    assert np.max(np.abs(ours - sv) / sv) < 1e-5
    assert condition_number(singular_values(m)) == pytest.approx(1e9, rel=1e-5)


def test_values_sorted_and_nonnegative():
    vals = singular_values(np.random.default_rng(0).normal(size=(9, 6))).values
    assert np.all(vals >= 0) and np.all(np.diff(vals) <= 0)


def test_rank_deficient_matrix():
    m = np.outer(np.arange(1.0, 6.0), np.arange(1.0, 4.0))
    cond, rank = matrix_condition(m)
    assert rank == 1 and cond == pytest.approx(1.0)
    assert math.isinf(raw_condition(singular_values(m))) or raw_condition(singular_values(m)) > 1e14


def test_errors():
    with pytest.raises(DomainError):
        singular_values(np.array([[1.0, np.nan]]))
    with pytest.raises(ShapeError):
        singular_values(np.ones(3))
    with pytest.raises(ShapeError):
        singular_values(np.ones((0, 3)))
    with pytest.raises(DegenerateMatrixError):
        condition_number(singular_values(np.zeros((3, 2))))
    assert matrix_condition(np.zeros((3, 2))) == (math.inf, 0)


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 7), st.integers(2, 7)), elements=finite),
       st.floats(0.01, 100.0), st.randoms(use_true_random=False))
def test_invariances(m, scale, rnd):
    spec = singular_values(m)
    if spec.sigma_max < 1e-6:
        return
    np.testing.assert_allclose(singular_values(m.T).values, spec.values, atol=1e-12 * spec.sigma_max)
    rows = list(range(m.shape[0]))
    rnd.shuffle(rows)
    np.testing.assert_allclose(singular_values(m[rows]).values, spec.values, atol=1e-12 * spec.sigma_max)
    c1, c2 = condition_number(spec), condition_number(singular_values(scale * m))
    if c1 < 1e6:
        assert c2 == pytest.approx(c1, rel=1e-10)
