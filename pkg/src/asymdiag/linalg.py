"""Small dense complex linear algebra.

All functions accept a single matrix ``(d, d)`` or a stack ``(..., d, d)`` and
broadcast over the leading axes; that is how grid functions use them.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ContractViolation, DimensionMismatchError, InvalidInputError, SingularMatrixError

HERMITIAN_TOL = 1e-12


def _as_stack(A) -> tuple[np.ndarray, tuple]:
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise InvalidInputError(f"expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("matrix has non-finite entries")
    lead = A.shape[:-2]
    return A.reshape((-1,) + A.shape[-2:]), lead


def _unstack(x: np.ndarray, lead: tuple):
    x = x.reshape(lead + x.shape[1:])
    return x if lead else x[()]


def herm_eigh(H) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of Hermitian ``H`` by cyclic Jacobi."""
    Hs, lead = _as_stack(H)
    skew = np.max(np.abs(Hs - np.conj(np.swapaxes(Hs, 1, 2))), axis=(1, 2), initial=0.0)
    size = np.max(np.abs(Hs), axis=(1, 2), initial=0.0)
    if np.any(skew > HERMITIAN_TOL * np.maximum(size, 1.0)):
        raise ContractViolation("herm_eigs requires a Hermitian matrix")
    Hs = 0.5 * (Hs + np.conj(np.swapaxes(Hs, 1, 2)))
    w, V = kernels.jacobi_eigh(Hs, True)
    return _unstack(w, lead), _unstack(V, lead)


def herm_eigs(H) -> np.ndarray:
    """Ascending real eigenvalues of a Hermitian matrix."""
    Hs, lead = _as_stack(H)
    skew = np.max(np.abs(Hs - np.conj(np.swapaxes(Hs, 1, 2))), axis=(1, 2), initial=0.0)
    size = np.max(np.abs(Hs), axis=(1, 2), initial=0.0)
    if np.any(skew > HERMITIAN_TOL * np.maximum(size, 1.0)):
        raise ContractViolation("herm_eigs requires a Hermitian matrix")
    Hs = 0.5 * (Hs + np.conj(np.swapaxes(Hs, 1, 2)))
    w, _ = kernels.jacobi_eigh(Hs, False)
    return _unstack(w, lead)


def _gram_top(As: np.ndarray) -> np.ndarray:
    G = np.conj(np.swapaxes(As, 1, 2)) @ As
    G = 0.5 * (G + np.conj(np.swapaxes(G, 1, 2)))
    w, _ = kernels.jacobi_eigh(G, False)
    return w[:, -1]


def op_norm(A):
    """Spectral norm: square root of the top eigenvalue of ``A* A``."""
    As, lead = _as_stack(A)
    top = _gram_top(As)
    return _unstack(np.sqrt(np.maximum(top, 0.0)), lead)


def omega(A):
    """Right end of the numerical range: top eigenvalue of ``(A + A*)/2``."""
    As, lead = _as_stack(A)
    Hs = 0.5 * (As + np.conj(np.swapaxes(As, 1, 2)))
    w, _ = kernels.jacobi_eigh(Hs, False)
    return _unstack(w[:, -1], lead)


def trace(A):
    A = np.asarray(A, dtype=np.complex128)
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("matrix has non-finite entries")
    return np.trace(A, axis1=-2, axis2=-1)


def vec_norm(x):
    return np.sqrt(np.sum(np.abs(np.asarray(x)) ** 2, axis=-1))


def solve_linear(A, b):
    """Solve ``A x = b`` by row-pivoted elimination.

    ``b`` may be a vector ``(..., d)`` or a matrix ``(..., d, r)``.  Raises
    :class:`SingularMatrixError` when a pivot falls below ``1e-13`` times
    the Frobenius norm of ``A``.
    """
    As, lead = _as_stack(A)
    b = np.asarray(b, dtype=np.complex128)
    d = As.shape[-1]
    vector = b.shape[-1:] == (d,) and (b.ndim == len(lead) + 1)
    if vector:
        bs = b.reshape(-1, d, 1)
    else:
        if b.shape[-2] != d:
            raise DimensionMismatchError(f"rhs shape {b.shape} does not match dim {d}")
        bs = b.reshape((-1,) + b.shape[-2:])
    if bs.shape[0] != As.shape[0]:
        bs = np.broadcast_to(bs, (As.shape[0],) + bs.shape[1:])
    if not np.all(np.isfinite(bs)):
        raise InvalidInputError("rhs has non-finite entries")
    X, singular = kernels.solve_batch(As, bs)
    if np.any(singular):
        raise SingularMatrixError(f"singular matrix at {int(np.argmax(singular))} of {len(singular)}")
    if vector:
        X = X[..., 0]
    return _unstack(X, lead)


def inverse(A):
    As, lead = _as_stack(A)
    eye = np.broadcast_to(np.eye(As.shape[-1], dtype=np.complex128), As.shape)
    X, singular = kernels.solve_batch(As, eye)
    if np.any(singular):
        raise SingularMatrixError(f"singular matrix at {int(np.argmax(singular))} of {len(singular)}")
    return _unstack(X, lead)


def dagger(A):
    return np.conj(np.swapaxes(np.asarray(A), -1, -2))
