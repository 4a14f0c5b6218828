"""Linear two-point problems ``x' = A x + f``, ``P x(0) + (1 - P) x(1) = xi``.

Integration is classical RK4 applied interval by interval: every grid
interval ``[t_j, t_{j+1}]`` is split into uniform substeps so that
``substep * |A|_C <= 0.1`` (tightened further to meet :data:`RK_TOL`), with
coefficient values between nodes taken from a cubic interpolant.  The
resulting interval propagators feed

* :func:`fundamental_matrix` (their running product),
* :func:`solve_direct` (a sparse global system, stable under dichotomy, or
  single shooting through ``M``),
* :func:`solve_contraction` (Picard iteration of the Green-kernel equation,
  evaluated as a forward sweep on ``im P`` and a backward sweep on
  ``ker P``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels, linalg
from .errors import (
    ContractViolation,
    DimensionMismatchError,
    DivergenceError,
    InvalidInputError,
    NoUniqueSolutionError,
    StepFailureError,
)
from .gridfn import GridFn, norm_c, norm_l1, pointwise_norm, substep_values

RK_TOL = 1e-11
MAX_STEP_NORM = 0.1
COMMUTE_TOL = 1e-10


def substep_count(norm_a: float, h: float, rk_tol: float = RK_TOL) -> int:
    """Substeps per grid interval for RK4 with ``|A| <= norm_a``."""
    if norm_a <= 0.0:
        return 1
    # per unit time the RK4 relative error is about norm_a * (hs * norm_a)**4 / 120
    limit = min(MAX_STEP_NORM, (120.0 * rk_tol / norm_a) ** 0.25)
    return max(1, math.ceil(h * norm_a / limit - 1e-9))


class Propagator:
    """RK4 interval propagators of ``x' = A x`` on the grid of ``A``."""

    def __init__(self, A: GridFn, rk_tol: float = RK_TOL):
        if A.kind != "matrix":
            raise InvalidInputError("coefficient must be matrix valued")
        self.A = A
        self.N = A.N
        self.dim = A.dim
        self.s = substep_count(norm_c(A), A.h, rk_tol)
        self.hs = A.h / self.s
        self.Asub = substep_values(A, self.s)
        self.Phi = kernels.rk4_matrix(self.Asub, self.hs)
        if not np.all(np.isfinite(self.Phi)):
            bad = int(np.argmax(~np.all(np.isfinite(self.Phi), axis=(1, 2))))
            raise StepFailureError(f"propagator overflow on interval {bad}", node=bad)
        self._Phi_inv = None

    @property
    def Phi_inv(self) -> np.ndarray:
        if self._Phi_inv is None:
            self._Phi_inv = linalg.inverse(self.Phi)
        return self._Phi_inv

    def particular(self, g) -> np.ndarray:
        """Per-interval solutions of ``y' = A y + g`` with ``y(t_j) = 0``."""
        g = g if isinstance(g, GridFn) else GridFn(np.asarray(g, dtype=np.complex128))
        if g.kind != "vector" or g.dim != self.dim or g.N != self.N:
            raise DimensionMismatchError("forcing does not match the coefficient grid")
        gsub = substep_values(g, self.s)
        return kernels.rk4_forced(self.Asub, gsub, self.hs)


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BvpProblem:
    A: GridFn
    f: GridFn | None
    P: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.complex128)
        xi = np.asarray(self.xi, dtype=np.complex128)
        d = self.A.dim
        if self.A.kind != "matrix":
            raise InvalidInputError("A must be matrix valued")
        if P.shape != (d, d) or xi.shape != (d,):
            raise DimensionMismatchError("P and xi must match the dimension of A")
        if self.f is not None and (self.f.kind != "vector" or self.f.dim != d or self.f.N != self.A.N):
            raise DimensionMismatchError("f must be a vector function on the grid of A")
        if np.max(np.abs(P - P.conj().T)) > 1e-10 or np.max(np.abs(P @ P - P)) > 1e-10:
            raise ContractViolation("P must be an orthoprojector")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "xi", xi)

    @property
    def dim(self) -> int:
        return self.A.dim


@dataclass(frozen=True)
class ContractionParams:
    gamma: float
    theta: float
    max_iters: int = 200
    tol: float = 1e-10

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0 and 0.0 < self.theta < 1.0):
            raise InvalidInputError("gamma and theta must lie in (0, 1)")


@dataclass
class ContractionResult:
    x: GridFn
    x0: GridFn
    iterations: int
    contraction_factor: float
    differences: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------


def fundamental_matrix(A: GridFn, propagator: Propagator | None = None) -> GridFn:
    """``M' = A M``, ``M(0) = 1`` at every node."""
    prop = propagator or Propagator(A)
    M = kernels.chain(prop.Phi, np.eye(A.dim, dtype=np.complex128))
    if not np.all(np.isfinite(M)):
        bad = int(np.argmax(~np.all(np.isfinite(M), axis=(1, 2))))
        raise StepFailureError(f"fundamental matrix overflow at node {bad}", node=bad)
    return GridFn(M)


def check_dichotomy(A: GridFn, P, gamma: float) -> tuple[bool, float]:
    """Largest integral of ``omega((2P - 1) A)`` over a subinterval.

    Returns ``(worst <= -ln gamma, worst)``; the scan keeps the running
    minimum of the cumulative integral so it costs O(N).
    """
    P = np.asarray(P, dtype=np.complex128)
    J = 2 * P - np.eye(P.shape[0])
    w = linalg.omega(J @ A.values)
    F = np.zeros(A.N + 1)
    F[1:] = np.cumsum(0.5 * A.h * (w[:-1] + w[1:]))
    worst = kernels.running_excess(F)
    return worst <= -math.log(gamma), worst


def _forcing(problem: BvpProblem) -> np.ndarray:
    if problem.f is None:
        return np.zeros((problem.A.N + 1, problem.dim), dtype=np.complex128)
    return problem.f.values.astype(np.complex128)


def solve_direct(problem: BvpProblem, method: str = "global", propagator: Propagator | None = None) -> GridFn:
    """Solve the boundary problem.

    ``method="global"`` assembles ``x_{j+1} = Phi_j x_j + p_j`` for all
    intervals plus the boundary row and factors the sparse system; this
    stays accurate for strongly dichotomic coefficients.  ``"shooting"``
    uses ``x(t) = M(t) c + u(t)`` with ``c`` from the boundary condition,
    which is exact arithmetic-wise but loses digits when ``M`` grows.
    """
    prop = propagator or Propagator(problem.A)
    d, N = problem.dim, problem.A.N
    f = _forcing(problem)
    p = prop.particular(f) if np.any(f) else np.zeros((N, d), dtype=np.complex128)
    P = problem.P
    Q = np.eye(d) - P
    if method == "shooting":
        M = kernels.chain(prop.Phi, np.eye(d, dtype=np.complex128))
        u = kernels.forward_recursion(prop.Phi, p, np.zeros(d))
        try:
            c = linalg.solve_linear(P + Q @ M[-1], problem.xi - Q @ u[-1])
        except Exception as exc:
            raise NoUniqueSolutionError("boundary operator P + (1-P) M(1) is singular") from exc
        x = np.einsum("nab,b->na", M, c) + u
    elif method == "global":
        x = _solve_global(prop.Phi, p, P, Q, problem.xi)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    if not np.all(np.isfinite(x)):
        raise NoUniqueSolutionError("boundary problem has no unique solution")
    return GridFn(x)


def _solve_global(Phi, p, P, Q, xi) -> np.ndarray:
    N, d, _ = Phi.shape
    n = (N + 1) * d
    blk = np.arange(d)
    rows, cols, vals = [], [], []
    # boundary rows
    r = np.repeat(blk, d)
    c = np.tile(blk, d)
    rows += [r, r]
    cols += [c, c + N * d]
    vals += [P.ravel(), Q.ravel()]
    # interval rows: x_{j+1} - Phi_j x_j = p_j
    j = np.arange(N)
    base_r = d + j[:, None, None] * d + blk[None, :, None]
    rows.append(np.broadcast_to(base_r, (N, d, d)).ravel())
    cols.append(np.broadcast_to((j[:, None, None] + 1) * d + blk[None, :, None], (N, d, d)).ravel())
    vals.append(np.broadcast_to(np.eye(d), (N, d, d)).ravel())
    rows.append(np.broadcast_to(base_r, (N, d, d)).ravel())
    cols.append((j[:, None, None] * d + blk[None, None, :] + 0 * blk[None, :, None]).ravel())
    vals.append((-Phi).ravel())
    K = sp.csc_matrix(
        (np.concatenate(vals).astype(np.complex128), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    K.sum_duplicates()
    rhs = np.concatenate([xi, p.ravel()]).astype(np.complex128)
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise NoUniqueSolutionError("boundary problem has no unique solution") from exc
    x = lu.solve(rhs)
    resid = np.max(np.abs(K @ x - rhs))
    if not np.isfinite(resid) or resid > 1e-6 * max(1.0, np.max(np.abs(rhs))):
        raise NoUniqueSolutionError("boundary system is numerically singular")
    return x.reshape(N + 1, d)


def green_kernel(M: GridFn, P, t_idx: int, s_idx: int) -> np.ndarray:
    """``[P - H(s - t)] M(t) M(s)^{-1}`` with the Heaviside convention ``H(0) = 0``."""
    P = np.asarray(P, dtype=np.complex128)
    step = 1.0 if s_idx > t_idx else 0.0
    Ms_inv = linalg.inverse(M.values[s_idx])
    return (P - step * np.eye(P.shape[0])) @ M.values[t_idx] @ Ms_inv


def kernel_apply(prop: Propagator, P, g) -> np.ndarray:
    """``int_0^1 [P - H(s - t)] M(t) M(s)^{-1} g(s) ds`` at every node.

    Requires ``A`` to commute with ``P``: the ``im P`` part is swept forward
    from ``t = 0`` and the ``ker P`` part backward from ``t = 1``.
    """
    P = np.asarray(P, dtype=np.complex128)
    d = P.shape[0]
    part = prop.particular(g)
    fwd = kernels.forward_recursion(prop.Phi, part @ P.T, np.zeros(d))
    bwd = kernels.backward_recursion(prop.Phi_inv, part @ (np.eye(d) - P).T, np.zeros(d))
    return fwd + bwd


def solve_contraction(A: GridFn, V: GridFn, problem: BvpProblem, params: ContractionParams,
                      slack: float = 0.05) -> ContractionResult:
    """Picard iteration ``x <- x0 + K (V x)`` for the problem with coefficient ``A + V``.

    ``problem.A`` is ignored in favour of ``A`` and ``V``; ``problem.f``,
    ``problem.P`` and ``problem.xi`` define the boundary problem.
    """
    P = problem.P
    scale = max(1.0, norm_c(A))
    comm = np.max(pointwise_norm(A.values @ P - P @ A.values))
    if comm > COMMUTE_TOL * scale:
        raise ContractViolation(f"A does not commute with P (defect {comm:.3e})")
    v_l1 = norm_l1(V)
    if v_l1 > params.theta * params.gamma * (1 + 1e-12):
        raise ContractViolation(f"|V|_L1 = {v_l1:.6g} exceeds theta*gamma = {params.theta * params.gamma:.6g}")
    holds, worst = check_dichotomy(A, P, params.gamma)
    if not holds:
        raise ContractViolation(f"dichotomy condition fails: {worst:.6g} > -ln gamma")

    prop = Propagator(A)
    base = BvpProblem(A, problem.f, P, problem.xi)
    x0 = solve_direct(base, propagator=prop).values
    Vv = V.values.astype(np.complex128)
    x = x0
    diffs: list[float] = []
    factor = 0.0
    for it in range(1, params.max_iters + 1):
        g = np.einsum("nab,nb->na", Vv, x)
        x_new = x0 + kernel_apply(prop, P, g)
        diff = float(np.max(linalg.vec_norm(x_new - x)))
        size = float(np.max(linalg.vec_norm(x_new)))
        if diffs and diffs[-1] > 1e-12 * max(size, 1e-300):
            factor = max(factor, diff / diffs[-1])
        diffs.append(diff)
        x = x_new
        if diff <= params.tol * max(1.0, size):
            return ContractionResult(GridFn(x), GridFn(x0), it, factor, diffs)
    raise DivergenceError(f"no convergence in {params.max_iters} iterations (last step {diffs[-1]:.3e})")
