"""Hot numeric kernels.

Each kernel exists twice: a loop version compiled by numba (``*_nb``) and a
vectorized numpy version (``*_np``) that runs the same algorithm across the
batch axis.  The public name dispatches on :data:`asymdiag._accel.USE_NUMBA`.
Both versions stay importable so tests and the benchmark can compare them.

Batched arrays put the batch axis first: matrices are ``(B, d, d)``.
"""

from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 60
SINGULAR_RTOL = 1e-13


# --------------------------------------------------------------------------
# Hermitian eigenproblem: cyclic two-sided Jacobi
# --------------------------------------------------------------------------


@njit
def _jacobi_eigh_nb(H, want_vectors):
    nb, d, _ = H.shape
    w = np.empty((nb, d))
    V = np.zeros((nb, d, d), dtype=np.complex128)
    for b in range(nb):
        A = H[b].copy()
        X = np.zeros((d, d), dtype=np.complex128)
        for i in range(d):
            X[i, i] = 1.0
        scale = 0.0
        for i in range(d):
            for j in range(d):
                scale += abs(A[i, j]) ** 2
        thresh = (JACOBI_TOL * JACOBI_TOL) * scale
        for _sweep in range(JACOBI_MAX_SWEEPS):
            off = 0.0
            for i in range(d):
                for j in range(d):
                    if i != j:
                        off += abs(A[i, j]) ** 2
            if off <= thresh:
                break
            for p in range(d - 1):
                for q in range(p + 1, d):
                    c = A[p, q]
                    ac = abs(c)
                    if ac == 0.0:
                        continue
                    # the phase via atan2 stays finite when c is subnormal
                    e = np.exp(-1j * np.arctan2(c.imag, c.real))
                    tau = (A[q, q].real - A[p, p].real) / (2.0 * ac)
                    sgn = 1.0 if tau >= 0.0 else -1.0
                    t = sgn / (abs(tau) + np.hypot(1.0, tau))
                    cs = 1.0 / np.sqrt(1.0 + t * t)
                    sn = t * cs
                    upp = cs + 0j
                    upq = sn + 0j
                    uqp = -sn * e
                    uqq = cs * e
                    for i in range(d):
                        hp = A[i, p]
                        hq = A[i, q]
                        A[i, p] = hp * upp + hq * uqp
                        A[i, q] = hp * upq + hq * uqq
                    for j in range(d):
                        hp = A[p, j]
                        hq = A[q, j]
                        A[p, j] = np.conj(upp) * hp + np.conj(uqp) * hq
                        A[q, j] = np.conj(upq) * hp + np.conj(uqq) * hq
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    if want_vectors:
                        for i in range(d):
                            xp = X[i, p]
                            xq = X[i, q]
                            X[i, p] = xp * upp + xq * uqp
                            X[i, q] = xp * upq + xq * uqq
        diag = np.empty(d)
        for i in range(d):
            diag[i] = A[i, i].real
        order = np.argsort(diag)
        for i in range(d):
            w[b, i] = diag[order[i]]
            if want_vectors:
                for r in range(d):
                    V[b, r, i] = X[r, order[i]]
    return w, V


def _jacobi_eigh_np(H, want_vectors):
    A = np.array(H, dtype=np.complex128, copy=True)
    nb, d, _ = A.shape
    X = np.broadcast_to(np.eye(d, dtype=np.complex128), A.shape).copy()
    thresh = JACOBI_TOL**2 * np.sum(np.abs(A) ** 2, axis=(1, 2))
    offmask = ~np.eye(d, dtype=bool)
    rows = np.arange(nb)
    for _sweep in range(JACOBI_MAX_SWEEPS):
        off = np.sum(np.abs(A[:, offmask]) ** 2, axis=1)
        if np.all(off <= thresh):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                c = A[:, p, q]
                ac = np.abs(c)
                live = ac > 0.0
                safe = np.where(live, ac, 1.0)
                e = np.where(live, np.exp(-1j * np.angle(c)), 1.0)
                with np.errstate(over="ignore"):
                    # tau = inf gives the zero rotation, as intended
                    tau = (A[:, q, q].real - A[:, p, p].real) / (2.0 * safe)
                sgn = np.where(tau >= 0.0, 1.0, -1.0)
                t = np.where(live, sgn / (np.abs(tau) + np.hypot(1.0, tau)), 0.0)
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * cs
                upp, upq, uqp, uqq = cs + 0j, sn + 0j, -sn * e, cs * e
                colp = A[:, :, p].copy()
                colq = A[:, :, q]
                A[:, :, p] = colp * upp[:, None] + colq * uqp[:, None]
                A[:, :, q] = colp * upq[:, None] + colq * uqq[:, None]
                rowp = A[:, p, :].copy()
                rowq = A[:, q, :]
                A[:, p, :] = np.conj(upp)[:, None] * rowp + np.conj(uqp)[:, None] * rowq
                A[:, q, :] = np.conj(upq)[:, None] * rowp + np.conj(uqq)[:, None] * rowq
                A[live, p, q] = 0.0
                A[live, q, p] = 0.0
                if want_vectors:
                    xp = X[:, :, p].copy()
                    xq = X[:, :, q]
                    X[:, :, p] = xp * upp[:, None] + xq * uqp[:, None]
                    X[:, :, q] = xp * upq[:, None] + xq * uqq[:, None]
    diag = np.real(np.diagonal(A, axis1=1, axis2=2))
    order = np.argsort(diag, axis=1, kind="stable")
    w = np.take_along_axis(diag, order, axis=1)
    V = X[rows[:, None, None], np.arange(d)[None, :, None], order[:, None, :]] if want_vectors else np.zeros_like(X)
    return w, V


def jacobi_eigh(H, want_vectors=True):
    H = np.ascontiguousarray(H, dtype=np.complex128)
    if USE_NUMBA:
        return _jacobi_eigh_nb(H, want_vectors)
    return _jacobi_eigh_np(H, want_vectors)


# --------------------------------------------------------------------------
# Dense solve: row-pivoted Gaussian elimination
# --------------------------------------------------------------------------


@njit
def _solve_nb(A, Bm):
    nb, d, _ = A.shape
    r = Bm.shape[2]
    X = np.empty((nb, d, r), dtype=np.complex128)
    singular = np.zeros(nb, dtype=np.bool_)
    for b in range(nb):
        M = A[b].copy()
        R = Bm[b].copy()
        scale = 0.0
        for i in range(d):
            for j in range(d):
                scale += abs(M[i, j]) ** 2
        scale = np.sqrt(scale)
        for k in range(d):
            piv = k
            best = abs(M[k, k])
            for i in range(k + 1, d):
                if abs(M[i, k]) > best:
                    best = abs(M[i, k])
                    piv = i
            if best <= SINGULAR_RTOL * scale or best == 0.0:
                singular[b] = True
                break
            if piv != k:
                for j in range(d):
                    tmp = M[k, j]
                    M[k, j] = M[piv, j]
                    M[piv, j] = tmp
                for j in range(r):
                    tmp = R[k, j]
                    R[k, j] = R[piv, j]
                    R[piv, j] = tmp
            for i in range(k + 1, d):
                f = M[i, k] / M[k, k]
                if f != 0.0:
                    for j in range(k, d):
                        M[i, j] -= f * M[k, j]
                    for j in range(r):
                        R[i, j] -= f * R[k, j]
        if singular[b]:
            for i in range(d):
                for j in range(r):
                    X[b, i, j] = np.nan
            continue
        for i in range(d - 1, -1, -1):
            for j in range(r):
                s = R[i, j]
                for k in range(i + 1, d):
                    s -= M[i, k] * X[b, k, j]
                X[b, i, j] = s / M[i, i]
    return X, singular


def _solve_np(A, Bm):
    M = np.array(A, dtype=np.complex128, copy=True)
    R = np.array(Bm, dtype=np.complex128, copy=True)
    nb, d, _ = M.shape
    rows = np.arange(nb)
    scale = np.sqrt(np.sum(np.abs(M) ** 2, axis=(1, 2)))
    singular = np.zeros(nb, dtype=bool)
    for k in range(d):
        piv = k + np.argmax(np.abs(M[:, k:, k]), axis=1)
        best = np.abs(M[rows, piv, k])
        singular |= (best <= SINGULAR_RTOL * scale) | (best == 0.0)
        rk = M[rows, k].copy()
        M[rows, k] = M[rows, piv]
        M[rows, piv] = rk
        rk = R[rows, k].copy()
        R[rows, k] = R[rows, piv]
        R[rows, piv] = rk
        pivval = np.where(singular, 1.0, M[:, k, k])
        f = M[:, k + 1 :, k] / pivval[:, None]
        M[:, k + 1 :, k:] -= f[:, :, None] * M[:, None, k, k:]
        R[:, k + 1 :, :] -= f[:, :, None] * R[:, None, k, :]
    X = np.empty_like(R)
    diag = np.where(singular[:, None], 1.0, np.diagonal(M, axis1=1, axis2=2))
    for i in range(d - 1, -1, -1):
        s = R[:, i, :] - np.einsum("bk,bkr->br", M[:, i, i + 1 :], X[:, i + 1 :, :])
        X[:, i, :] = s / diag[:, i, None]
    X[singular] = np.nan
    return X, singular


def solve_batch(A, Bm):
    """Solve ``A[b] X[b] = Bm[b]``; returns ``(X, singular_mask)``."""
    A = np.ascontiguousarray(A, dtype=np.complex128)
    Bm = np.ascontiguousarray(Bm, dtype=np.complex128)
    if USE_NUMBA:
        return _solve_nb(A, Bm)
    return _solve_np(A, Bm)


# --------------------------------------------------------------------------
# Classical RK4 on a batch of independent grid intervals
# --------------------------------------------------------------------------
# Asub[j, i] holds the coefficient at t_j + i*hs/2, i = 0..2s, for s substeps.


@njit
def _rk4_matrix_nb(Asub, hs):
    n, npts, d, _ = Asub.shape
    s = (npts - 1) // 2
    Phi = np.empty((n, d, d), dtype=np.complex128)
    Y = np.empty((d, d), dtype=np.complex128)
    K1 = np.empty((d, d), dtype=np.complex128)
    K2 = np.empty((d, d), dtype=np.complex128)
    K3 = np.empty((d, d), dtype=np.complex128)
    K4 = np.empty((d, d), dtype=np.complex128)
    T = np.empty((d, d), dtype=np.complex128)
    for j in range(n):
        for a in range(d):
            for c in range(d):
                Y[a, c] = 1.0 if a == c else 0.0
        for r in range(s):
            A0 = Asub[j, 2 * r]
            Am = Asub[j, 2 * r + 1]
            A1 = Asub[j, 2 * r + 2]
            _mm(A0, Y, K1)
            for a in range(d):
                for c in range(d):
                    T[a, c] = Y[a, c] + 0.5 * hs * K1[a, c]
            _mm(Am, T, K2)
            for a in range(d):
                for c in range(d):
                    T[a, c] = Y[a, c] + 0.5 * hs * K2[a, c]
            _mm(Am, T, K3)
            for a in range(d):
                for c in range(d):
                    T[a, c] = Y[a, c] + hs * K3[a, c]
            _mm(A1, T, K4)
            for a in range(d):
                for c in range(d):
                    Y[a, c] += hs / 6.0 * (K1[a, c] + 2.0 * K2[a, c] + 2.0 * K3[a, c] + K4[a, c])
        Phi[j] = Y
    return Phi


@njit
def _mm(A, B, out):
    d = A.shape[0]
    m = B.shape[1]
    for a in range(d):
        for c in range(m):
            acc = 0j
            for k in range(d):
                acc += A[a, k] * B[k, c]
            out[a, c] = acc


def _rk4_matrix_np(Asub, hs):
    n, npts, d, _ = Asub.shape
    s = (npts - 1) // 2
    Y = np.broadcast_to(np.eye(d, dtype=np.complex128), (n, d, d)).copy()
    for r in range(s):
        A0, Am, A1 = Asub[:, 2 * r], Asub[:, 2 * r + 1], Asub[:, 2 * r + 2]
        K1 = A0 @ Y
        K2 = Am @ (Y + 0.5 * hs * K1)
        K3 = Am @ (Y + 0.5 * hs * K2)
        K4 = A1 @ (Y + hs * K3)
        Y = Y + hs / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
    return Y


def rk4_matrix(Asub, hs):
    """Interval propagators of ``Y' = A Y, Y(t_j) = 1`` by ``s`` RK4 substeps."""
    Asub = np.ascontiguousarray(Asub, dtype=np.complex128)
    if USE_NUMBA:
        return _rk4_matrix_nb(Asub, float(hs))
    return _rk4_matrix_np(Asub, float(hs))


@njit
def _rk4_forced_nb(Asub, gsub, hs):
    n, npts, d, _ = Asub.shape
    s = (npts - 1) // 2
    P = np.empty((n, d), dtype=np.complex128)
    y = np.empty(d, dtype=np.complex128)
    T = np.empty(d, dtype=np.complex128)
    K1 = np.empty(d, dtype=np.complex128)
    K2 = np.empty(d, dtype=np.complex128)
    K3 = np.empty(d, dtype=np.complex128)
    K4 = np.empty(d, dtype=np.complex128)
    for j in range(n):
        for a in range(d):
            y[a] = 0.0
        for r in range(s):
            i0 = 2 * r
            _mv_add(Asub[j, i0], y, gsub[j, i0], K1)
            for a in range(d):
                T[a] = y[a] + 0.5 * hs * K1[a]
            _mv_add(Asub[j, i0 + 1], T, gsub[j, i0 + 1], K2)
            for a in range(d):
                T[a] = y[a] + 0.5 * hs * K2[a]
            _mv_add(Asub[j, i0 + 1], T, gsub[j, i0 + 1], K3)
            for a in range(d):
                T[a] = y[a] + hs * K3[a]
            _mv_add(Asub[j, i0 + 2], T, gsub[j, i0 + 2], K4)
            for a in range(d):
                y[a] += hs / 6.0 * (K1[a] + 2.0 * K2[a] + 2.0 * K3[a] + K4[a])
        P[j] = y
    return P


@njit
def _mv_add(A, x, g, out):
    d = A.shape[0]
    for a in range(d):
        acc = g[a]
        for k in range(d):
            acc += A[a, k] * x[k]
        out[a] = acc


def _rk4_forced_np(Asub, gsub, hs):
    n, npts, d, _ = Asub.shape
    s = (npts - 1) // 2
    y = np.zeros((n, d), dtype=np.complex128)

    def rhs(i, v):
        return np.einsum("nab,nb->na", Asub[:, i], v) + gsub[:, i]

    for r in range(s):
        i0 = 2 * r
        K1 = rhs(i0, y)
        K2 = rhs(i0 + 1, y + 0.5 * hs * K1)
        K3 = rhs(i0 + 1, y + 0.5 * hs * K2)
        K4 = rhs(i0 + 2, y + hs * K3)
        y = y + hs / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
    return y


def rk4_forced(Asub, gsub, hs):
    """Particular solutions of ``y' = A y + g, y(t_j) = 0`` over each interval."""
    Asub = np.ascontiguousarray(Asub, dtype=np.complex128)
    gsub = np.ascontiguousarray(gsub, dtype=np.complex128)
    if USE_NUMBA:
        return _rk4_forced_nb(Asub, gsub, float(hs))
    return _rk4_forced_np(Asub, gsub, float(hs))


# --------------------------------------------------------------------------
# Sequential recursions along the grid
# --------------------------------------------------------------------------


@njit
def _chain_nb(Phi, M0):
    n, d, _ = Phi.shape
    m = M0.shape[1]
    out = np.empty((n + 1, d, m), dtype=np.complex128)
    out[0] = M0
    for j in range(n):
        _mm(Phi[j], out[j], out[j + 1])
    return out


def _chain_np(Phi, M0):
    n = Phi.shape[0]
    out = np.empty((n + 1,) + M0.shape, dtype=np.complex128)
    out[0] = M0
    for j in range(n):
        out[j + 1] = Phi[j] @ out[j]
    return out


def chain(Phi, M0):
    """Cumulative products ``out[j+1] = Phi[j] @ out[j]``."""
    Phi = np.ascontiguousarray(Phi, dtype=np.complex128)
    M0 = np.ascontiguousarray(M0, dtype=np.complex128)
    if USE_NUMBA:
        return _chain_nb(Phi, M0)
    return _chain_np(Phi, M0)


@njit
def _forward_nb(Phi, p, u0):
    n, d, _ = Phi.shape
    u = np.empty((n + 1, d), dtype=np.complex128)
    u[0] = u0
    for j in range(n):
        for a in range(d):
            acc = p[j, a]
            for k in range(d):
                acc += Phi[j, a, k] * u[j, k]
            u[j + 1, a] = acc
    return u


def _forward_np(Phi, p, u0):
    n = Phi.shape[0]
    u = np.empty((n + 1, Phi.shape[1]), dtype=np.complex128)
    u[0] = u0
    for j in range(n):
        u[j + 1] = Phi[j] @ u[j] + p[j]
    return u


def forward_recursion(Phi, p, u0):
    """``u[j+1] = Phi[j] u[j] + p[j]`` from ``u[0] = u0``."""
    args = (np.ascontiguousarray(Phi, dtype=np.complex128),
            np.ascontiguousarray(p, dtype=np.complex128),
            np.ascontiguousarray(u0, dtype=np.complex128))
    return _forward_nb(*args) if USE_NUMBA else _forward_np(*args)


@njit
def _backward_nb(Phi_inv, p, uN):
    n, d, _ = Phi_inv.shape
    u = np.empty((n + 1, d), dtype=np.complex128)
    u[n] = uN
    for j in range(n - 1, -1, -1):
        for a in range(d):
            acc = 0j
            for k in range(d):
                acc += Phi_inv[j, a, k] * (u[j + 1, k] - p[j, k])
            u[j, a] = acc
    return u


def _backward_np(Phi_inv, p, uN):
    n = Phi_inv.shape[0]
    u = np.empty((n + 1, Phi_inv.shape[1]), dtype=np.complex128)
    u[n] = uN
    for j in range(n - 1, -1, -1):
        u[j] = Phi_inv[j] @ (u[j + 1] - p[j])
    return u


def backward_recursion(Phi_inv, p, uN):
    """Inverts ``u[j+1] = Phi[j] u[j] + p[j]`` from the right end."""
    args = (np.ascontiguousarray(Phi_inv, dtype=np.complex128),
            np.ascontiguousarray(p, dtype=np.complex128),
            np.ascontiguousarray(uN, dtype=np.complex128))
    return _backward_nb(*args) if USE_NUMBA else _backward_np(*args)


# --------------------------------------------------------------------------
# Running excess: max_b (F(b) - min_{a<=b} F(a))
# --------------------------------------------------------------------------


@njit
def _running_excess_nb(F):
    lo = F[0]
    worst = 0.0
    for j in range(F.shape[0]):
        if F[j] < lo:
            lo = F[j]
        if F[j] - lo > worst:
            worst = F[j] - lo
    return worst


def _running_excess_np(F):
    return float(np.max(F - np.minimum.accumulate(F)))


def running_excess(F):
    F = np.ascontiguousarray(F, dtype=np.float64)
    if USE_NUMBA:
        return float(_running_excess_nb(F))
    return _running_excess_np(F)


# --------------------------------------------------------------------------
# Contour quadrature of the resolvent around spectral atoms
# --------------------------------------------------------------------------
# Bdiag: (T, d) diagonal of B(t); C: (T, d, d); Hdot: (T, d, d) time
# derivative of B + C; centers: (T, J).  Returns per-atom projectors and
# their time derivatives (T, J, d, d) and a failure mask (T,).  The
# derivative uses d/dt R = -R Hdot R; moving the circle with its atom adds
# a multiple of the contour integral of R^2, which vanishes.


@njit
def _riesz_nb(Bdiag, C, Hdot, centers, radius, nc):
    T, d = Bdiag.shape
    J = centers.shape[1]
    Q = np.zeros((T, J, d, d), dtype=np.complex128)
    dQ = np.zeros((T, J, d, d), dtype=np.complex128)
    bad = np.zeros(T, dtype=np.bool_)
    M = np.empty((1, d, d), dtype=np.complex128)
    I = np.zeros((1, d, d), dtype=np.complex128)
    for a in range(d):
        I[0, a, a] = 1.0
    for t in range(T):
        for j in range(J):
            for k in range(nc):
                ph = np.exp(2j * np.pi * k / nc)
                z = centers[t, j] + radius * ph
                for a in range(d):
                    for c in range(d):
                        M[0, a, c] = C[t, a, c]
                    M[0, a, a] += Bdiag[t, a] - z
                R, sing = _solve_nb(M, I)
                if sing[0]:
                    bad[t] = True
                w = -radius / nc * ph
                RHR = R[0] @ Hdot[t] @ R[0]
                for a in range(d):
                    for c in range(d):
                        Q[t, j, a, c] += w * R[0, a, c]
                        dQ[t, j, a, c] -= w * RHR[a, c]
    return Q, dQ, bad


def _riesz_np(Bdiag, C, Hdot, centers, radius, nc, chunk=128):
    T, d = Bdiag.shape
    J = centers.shape[1]
    ph = np.exp(2j * np.pi * np.arange(nc) / nc)
    w = -radius / nc * ph
    eye = np.eye(d, dtype=np.complex128)
    Q = np.empty((T, J, d, d), dtype=np.complex128)
    dQ = np.empty((T, J, d, d), dtype=np.complex128)
    bad = np.zeros(T, dtype=bool)
    for s in range(0, T, chunk):
        e = min(T, s + chunk)
        z = centers[s:e, :, None] + radius * ph[None, None, :]
        M = C[s:e, None, None] + (Bdiag[s:e, None, None, :, None] * eye) - z[..., None, None] * eye
        shape = M.shape
        R, sing = _solve_np(M.reshape(-1, d, d), np.broadcast_to(eye, (M.shape[0] * J * nc, d, d)))
        R = R.reshape(shape)
        RHR = R @ Hdot[s:e, None, None] @ R
        Q[s:e] = np.einsum("k,tjkab->tjab", w, R)
        dQ[s:e] = -np.einsum("k,tjkab->tjab", w, RHR)
        bad[s:e] = sing.reshape(e - s, J * nc).any(axis=1)
    return Q, dQ, bad


def riesz_atoms(Bdiag, C, Hdot, centers, radius, nc):
    args = (np.ascontiguousarray(Bdiag, dtype=np.complex128),
            np.ascontiguousarray(C, dtype=np.complex128),
            np.ascontiguousarray(Hdot, dtype=np.complex128),
            np.ascontiguousarray(centers, dtype=np.complex128))
    if USE_NUMBA:
        return _riesz_nb(*args, float(radius), int(nc))
    return _riesz_np(*args, float(radius), int(nc))
