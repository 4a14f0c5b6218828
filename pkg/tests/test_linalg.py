import numpy as np
import pytest
from hypothesis import given, strategies as st

from asymdiag import linalg
from asymdiag.errors import ContractViolation, InvalidInputError, SingularMatrixError
from conftest import charpoly, cplx


def test_op_norm_examples(rng):
    assert linalg.op_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-14)
    assert linalg.op_norm(np.diag([3j, -1])) == pytest.approx(3.0, rel=1e-13)
    A = cplx(rng, 4, 4)
    G = A.conj().T @ A
    top = np.max(np.roots(charpoly(G)).real)
    assert linalg.op_norm(A) == pytest.approx(np.sqrt(top), rel=1e-10)


def test_omega_examples(rng):
    assert linalg.omega(1j * np.eye(3)) == pytest.approx(0.0, abs=1e-14)
    assert linalg.omega(np.array([[0, 1], [0, 0]])) == pytest.approx(0.5, abs=1e-14)
    A = cplx(rng, 3, 3)
    x = cplx(rng, 10_000, 3)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    vals = np.einsum("ni,ij,nj->n", x.conj(), A, x).real
    w = linalg.omega(A)
    assert w >= np.max(vals) - 1e-12
    # polish the best sample by shifted power iteration; every iterate is still a unit vector,
    # so its Rayleigh quotient stays a lower bound while converging to the supremum
    v = x[np.argmax(vals)]
    shift = np.abs(A).sum()
    for _ in range(2000):
        v = A @ v + A.conj().T @ v + 2 * shift * v
        v /= np.linalg.norm(v)
    polished = np.real(v.conj() @ A @ v)
    assert polished <= w + 1e-12
    assert w <= polished + 1e-8
    H = 0.5 * (A + A.conj().T)
    assert w == pytest.approx(np.max(np.linalg.eigvalsh(H)), abs=1e-12)


def test_omega_attained_by_top_eigenvector(rng):
    A = cplx(rng, 3, 3)
    H = 0.5 * (A + A.conj().T)
    w, V = linalg.herm_eigh(H)
    v = V[:, -1]
    assert np.real(v.conj() @ A @ v) == pytest.approx(linalg.omega(A), abs=1e-12)


def test_trace_examples(rng):
    assert linalg.trace(np.eye(4)) == 4
    assert linalg.trace(np.array([[1, 9], [9, -1]])) == 0
    A, B = cplx(rng, 5, 5), cplx(rng, 5, 5)
    assert abs(linalg.trace(A @ B) - linalg.trace(B @ A)) <= 1e-12 * np.abs(linalg.trace(A @ B)) + 1e-12


def test_herm_eigs_examples(rng):
    assert np.allclose(linalg.herm_eigs(np.diag([2.0, -1.0, 0.0])), [-1, 0, 2], atol=1e-14)
    assert np.allclose(linalg.herm_eigs(np.array([[0, 1], [1, 0]])), [-1, 1], atol=1e-14)
    X = cplx(rng, 4, 4)
    H = X + X.conj().T
    oracle = np.sort(np.roots(charpoly(H)).real)
    assert np.allclose(linalg.herm_eigs(H), oracle, atol=1e-9)


def test_herm_eigh_residuals(rng):
    X = cplx(rng, 8, 8)
    H = X + X.conj().T
    w, V = linalg.herm_eigh(H)
    res = np.linalg.norm(H @ V - V * w, axis=0)
    assert np.all(res <= 1e-10 * linalg.op_norm(H))
    assert np.allclose(V.conj().T @ V, np.eye(8), atol=1e-12)


def test_herm_eigs_rejects_non_hermitian():
    with pytest.raises(ContractViolation):
        linalg.herm_eigs(np.array([[0, 1], [0, 0]]))


def test_non_finite_rejected():
    with pytest.raises(InvalidInputError):
        linalg.op_norm(np.array([[np.nan, 0], [0, 1]]))


def test_solve_linear_examples(rng):
    b = cplx(rng, 3)
    assert np.allclose(linalg.solve_linear(np.eye(3), b), b)
    assert np.allclose(linalg.solve_linear(np.diag([2, 4]), np.array([2, 8])), [1, 2])
    Q, _ = np.linalg.qr(cplx(rng, 5, 5))
    A = Q @ np.diag([1, 2, 3, 4, 5]) @ Q.conj().T
    b = cplx(rng, 5)
    x = linalg.solve_linear(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_solve_linear_matrix_rhs_and_batch(rng):
    A = cplx(rng, 7, 3, 3) + 4 * np.eye(3)
    B = cplx(rng, 7, 3, 2)
    X = linalg.solve_linear(A, B)
    assert np.allclose(A @ X, B, atol=1e-12)
    assert np.allclose(linalg.inverse(A) @ A, np.eye(3), atol=1e-12)


def test_singular_detected():
    with pytest.raises(SingularMatrixError):
        linalg.solve_linear(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))
    with pytest.raises(SingularMatrixError):
        linalg.inverse(np.zeros((3, 3)))


matrices = st.integers(1, 6).flatmap(
    lambda d: st.tuples(st.integers(0, 2**32 - 1), st.just(d))
).map(lambda s: cplx(np.random.default_rng(s[0]), s[1], s[1]))


@given(matrices, st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=10))
def test_omega_properties(A, seed, c):
    B = cplx(np.random.default_rng(seed), *A.shape)
    assert linalg.omega(A) <= linalg.op_norm(A) + 1e-12
    assert linalg.omega(A + B) <= linalg.omega(A) + linalg.omega(B) + 1e-10
    shifted = linalg.omega(A + c * np.eye(A.shape[0]))
    assert shifted == pytest.approx(linalg.omega(A) + c.real, abs=1e-10)


@given(matrices, st.integers(0, 2**32 - 1))
def test_op_norm_submultiplicative_and_dft_invariant(A, seed):
    B = cplx(np.random.default_rng(seed), *A.shape)
    assert linalg.op_norm(A @ B) <= linalg.op_norm(A) * linalg.op_norm(B) * (1 + 1e-12)
    d = A.shape[0]
    F = np.fft.fft(np.eye(d)) / np.sqrt(d)
    assert linalg.op_norm(F @ A @ F.conj().T) == pytest.approx(linalg.op_norm(A), rel=1e-11)


@given(matrices)
def test_herm_eigs_sum_is_trace(A):
    H = A + A.conj().T
    assert np.sum(linalg.herm_eigs(H)) == pytest.approx(linalg.trace(H).real, abs=1e-10 * (1 + linalg.op_norm(H)))
