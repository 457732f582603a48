import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maurey.matnorm import (
    CpConfig,
    DiagonalCoefficients,
    MatrixTuple,
    cp_norm,
    cp_norm_detail,
    lp_l2_norm,
    maurey_ratio,
    oh_norm,
)
from maurey.measures import ParameterError
from maurey.orlicz import convexify, default_ladder

FAST = CpConfig(restarts=4)


def rand_tuple(rng, K, m):
    return MatrixTuple(rng.normal(size=(K, m, m)) + 1j * rng.normal(size=(K, m, m)))


def unitary(rng, m):
    q, r = np.linalg.qr(rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_shape_validation():
    with pytest.raises(ParameterError):
        MatrixTuple(np.zeros((2, 3, 4)))
    assert MatrixTuple(np.eye(3)).K == 1
    with pytest.raises(ValueError):
        MatrixTuple(np.eye(2)).mats[0, 0, 0] = 5


@given(st.integers(0, 2**32 - 1), st.sampled_from([1.2, 1.5, 1.8]))
@settings(max_examples=15)
def test_single_matrix_is_operator_norm(seed, p):
    rng = np.random.default_rng(seed)
    x = rand_tuple(rng, 1, 3)
    assert cp_norm(x, p, FAST) == pytest.approx(np.linalg.norm(x.mats[0], 2), rel=1e-8)


def test_scalar_tuple_is_euclidean():
    c = np.array([3.0, 4.0j, -1.0])
    x = MatrixTuple(c.reshape(3, 1, 1))
    assert cp_norm(x, 1.5) == pytest.approx(np.linalg.norm(c), rel=1e-12)
    assert oh_norm(x) == pytest.approx(np.linalg.norm(c), rel=1e-12)


def test_diagonal_units_oh():
    m = 5
    units = MatrixTuple(np.stack([np.diag(np.eye(m)[i]) for i in range(m)]))
    assert oh_norm(units) == 1.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15)
def test_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    x = rand_tuple(rng, 3, 3)
    U, V = unitary(rng, 3), unitary(rng, 3)
    y = x.rotated(U, V)
    assert oh_norm(y) == pytest.approx(oh_norm(x), rel=1e-10)
    assert cp_norm(y, 1.5, FAST) == pytest.approx(cp_norm(x, 1.5, FAST), rel=1e-6)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20)
def test_norm_axioms(seed):
    rng = np.random.default_rng(seed)
    x, y = rand_tuple(rng, 3, 4), rand_tuple(rng, 3, 4)
    c = complex(*rng.normal(size=2))
    assert oh_norm(x + y) <= oh_norm(x) + oh_norm(y) + 1e-10
    assert oh_norm(x.scaled(c)) == pytest.approx(abs(c) * oh_norm(x), rel=1e-10)
    cx, cy = cp_norm(x, 1.5, FAST), cp_norm(y, 1.5, FAST)
    assert cp_norm(x + y, 1.5, FAST) <= (cx + cy) * (1 + 1e-6)
    assert cp_norm(x.scaled(c), 1.5, FAST) == pytest.approx(abs(c) * cx, rel=1e-6)


def test_cp_between_operator_and_column_norms():
    rng = np.random.default_rng(1)
    x = rand_tuple(rng, 4, 3)
    col = np.linalg.norm(sum(a.conj().T @ a for a in x.mats), 2) ** 0.5
    hs = np.sqrt(sum(np.linalg.norm(a) ** 2 for a in x.mats))
    v = cp_norm(x, 1.5)
    assert max(np.linalg.norm(a, 2) for a in x.mats) <= v * (1 + 1e-9)
    assert v <= hs * (1 + 1e-9)
    assert col > 0


def test_history_is_monotone_and_seeded():
    rng = np.random.default_rng(2)
    x = rand_tuple(rng, 3, 4)
    r = cp_norm_detail(x, 1.4)
    assert r.converged
    assert np.all(np.diff(r.history) >= -1e-12 * r.history[-1])
    assert cp_norm_detail(x, 1.4).value == r.value


def test_cp_rejects_bad_p():
    with pytest.raises(ParameterError):
        cp_norm(MatrixTuple(np.eye(2)), 2.0)


def test_lp_l2_examples():
    a = np.array([[3.0, 4.0], [0.0, 0.0], [5.0, 12.0]])
    assert lp_l2_norm(a, 1.5) == pytest.approx((5**1.5 + 13**1.5) ** (1 / 1.5))
    assert lp_l2_norm(DiagonalCoefficients(a, 1.2)) == pytest.approx(lp_l2_norm(a, 1.2))
    with pytest.raises(ParameterError):
        lp_l2_norm(a)
    with pytest.raises(ParameterError):
        DiagonalCoefficients(a, 2.5)


@pytest.fixture(scope="module")
def F():
    x = np.concatenate([[0.0], default_ladder()])
    return convexify(x, x ** (4 / 3))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20)
def test_maurey_ratio_invariances(F, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(6, 3))
    r = maurey_ratio(0.5, a, F)
    assert maurey_ratio(0.5, a[rng.permutation(6)], F) == pytest.approx(r, rel=1e-9)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    assert maurey_ratio(0.5, a @ Q, F) == pytest.approx(r, rel=1e-9)
    assert maurey_ratio(0.5, 7.0 * a, F) == pytest.approx(r, rel=1e-9)


def test_maurey_ratio_zero(F):
    assert maurey_ratio(0.5, np.zeros((3, 2)), F) == 0.0
