"""Companion systems of ``n``-th order operators with a large parameter.

``D_lambda`` carries ``p_k`` on the superdiagonal, ``(lambda + zeta)^n p_n -
q_n1`` in the lower-left corner and ``-q_kl`` on the lower band.  Its leading
part ``D0`` (corner ``lambda^n p_n`` only) is diagonalized exactly by a
scaled Vandermonde matrix ``S`` with eigenvalues ``lambda rho w^k``,
``rho = (prod p)^(1/n)``, ``w = exp(2 pi i / n)``.  After ``x = S y`` the
system is diagonal up to ``zeta rho G - sum q_mm F_m - S^{-1} S'`` and an
``O(1/lambda)`` remainder, which yields the Birkhoff leading terms.

Component indices ``k`` are 1-based here, as in the exponent ``w^k``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from . import exprparse, linalg
from .bvp import BvpProblem, solve_direct
from .errors import DomainError, InvalidInputError, InvalidParameterError, SectorError
from .frame import conjugate, TransformerBundle
from .gridfn import DEFAULT_N, GridFn, cumulative_integral, norm_l1

POSITIVITY_IMAG_TOL = 1e-12
TIE_TOL = 1e-12


def _sample(expr, N: int) -> GridFn:
    e = exprparse.parse(expr) if isinstance(expr, str) else expr
    t = np.linspace(0.0, 1.0, N + 1)
    v = np.broadcast_to(exprparse.eval(e, t), t.shape)
    dv = np.broadcast_to(exprparse.eval_deriv(e, t), t.shape)
    return GridFn(np.array(v, dtype=np.complex128), np.array(dv, dtype=np.complex128))


@dataclass(frozen=True, eq=False)
class CompanionSpec:
    """Order ``n``, shift ``zeta``, profiles ``p_1..p_n`` and lower-band ``q_kl``.

    ``p`` holds expressions or strings; ``q`` maps 1-based ``(k, l)`` with
    ``l <= k`` to expressions.  Everything is sampled on ``N + 1`` nodes with
    analytic derivatives.
    """

    n: int
    p: tuple
    zeta: complex = 0.0
    q: dict = field(default_factory=dict)
    N: int = DEFAULT_N
    p_grid: tuple = field(init=False, repr=False)
    q_grid: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 2:
            raise InvalidParameterError("order n must be at least 2")
        if len(self.p) != self.n:
            raise InvalidInputError(f"expected {self.n} profiles p, got {len(self.p)}")
        pg = []
        for i, e in enumerate(self.p, start=1):
            g = _sample(e, self.N)
            v = g.values
            if np.max(np.abs(v.imag)) > POSITIVITY_IMAG_TOL * max(1.0, np.max(np.abs(v))) or np.min(v.real) <= 0:
                raise DomainError(f"p_{i} must be real and positive at every node")
            pg.append(GridFn(v.real.astype(np.float64), g.deriv.real.astype(np.float64)))
        qg = {}
        for key, e in dict(self.q).items():
            k, l = (int(key[0]), int(key[1])) if not isinstance(key, str) else map(int, key.split(","))
            if not (1 <= l <= k <= self.n):
                raise InvalidInputError(f"q_{k}{l} lies outside the lower triangle")
            qg[(k, l)] = _sample(e, self.N)
        object.__setattr__(self, "zeta", complex(self.zeta))
        object.__setattr__(self, "p_grid", tuple(pg))
        object.__setattr__(self, "q_grid", qg)

    def q_values(self, k: int, l: int) -> np.ndarray:
        g = self.q_grid.get((k, l))
        return np.zeros(self.N + 1, dtype=np.complex128) if g is None else g.values

    def q_derivs(self, k: int, l: int) -> np.ndarray:
        g = self.q_grid.get((k, l))
        return np.zeros(self.N + 1, dtype=np.complex128) if g is None else g.deriv


def _check_lambda(lam) -> complex:
    lam = complex(lam)
    if lam == 0:
        raise InvalidParameterError("lambda must be nonzero")
    return lam


def _root(n: int, k: int) -> complex:
    return cmath.exp(2j * math.pi * k / n)


def build_D(spec: CompanionSpec, lam) -> GridFn:
    """``D_lambda`` with its derivative."""
    lam = _check_lambda(lam)
    n, T = spec.n, spec.N + 1
    D = np.zeros((T, n, n), dtype=np.complex128)
    dD = np.zeros_like(D)
    for k in range(1, n + 1):
        for l in range(1, n + 1):
            if l == k + 1:
                D[:, k - 1, l - 1] = spec.p_grid[k - 1].values
                dD[:, k - 1, l - 1] = spec.p_grid[k - 1].deriv
            elif k == n and l == 1:
                c = (lam + spec.zeta) ** n
                D[:, k - 1, l - 1] = c * spec.p_grid[n - 1].values - spec.q_values(n, 1)
                dD[:, k - 1, l - 1] = c * spec.p_grid[n - 1].deriv - spec.q_derivs(n, 1)
            elif k + 1 - n < l <= k:
                D[:, k - 1, l - 1] = -spec.q_values(k, l)
                dD[:, k - 1, l - 1] = -spec.q_derivs(k, l)
    return GridFn(D, dD)


def build_D0(spec: CompanionSpec, lam) -> GridFn:
    """Leading part: superdiagonal ``p_k`` and corner ``lambda^n p_n``."""
    lam = _check_lambda(lam)
    n, T = spec.n, spec.N + 1
    D = np.zeros((T, n, n), dtype=np.complex128)
    dD = np.zeros_like(D)
    for k in range(1, n):
        D[:, k - 1, k] = spec.p_grid[k - 1].values
        dD[:, k - 1, k] = spec.p_grid[k - 1].deriv
    D[:, n - 1, 0] = lam**n * spec.p_grid[n - 1].values
    dD[:, n - 1, 0] = lam**n * spec.p_grid[n - 1].deriv
    return GridFn(D, dD)


def amplitude_profile(spec: CompanionSpec) -> GridFn:
    """``rho = (prod p_m)^(1/n)``, the positive root, with its derivative."""
    logs = sum(np.log(p.values) for p in spec.p_grid) / spec.n
    rho = np.exp(logs)
    dlog = sum(p.deriv / p.values for p in spec.p_grid) / spec.n
    return GridFn(rho, rho * dlog)


def _prefix_products(spec: CompanionSpec):
    """``prod_{m<l} p_m`` and ``sum_{m<l} p_m'/p_m`` for ``l = 1..n``, shape (T, n)."""
    T, n = spec.N + 1, spec.n
    prod = np.ones((T, n))
    dl = np.zeros((T, n))
    for l in range(1, n):
        p = spec.p_grid[l - 1]
        prod[:, l] = prod[:, l - 1] * p.values
        dl[:, l] = dl[:, l - 1] + p.deriv / p.values
    return prod, dl


def build_S_lambda(spec: CompanionSpec, lam) -> tuple[GridFn, GridFn]:
    """Closed-form ``S`` (with analytic ``S'``) and ``S^{-1}``."""
    lam = _check_lambda(lam)
    n = spec.n
    rho = amplitude_profile(spec)
    w = np.array([_root(n, k) for k in range(1, n + 1)])
    mu = lam * rho.values[:, None] * w[None, :]               # (T, n) over k
    powers = np.arange(n)                                      # l - 1
    prod, dl = _prefix_products(spec)
    S = mu[:, None, :] ** powers[None, :, None] / prod[:, :, None]
    rate = powers[None, :] * (rho.deriv / rho.values)[:, None] - dl   # (T, n) over l
    dS = S * rate[:, :, None]
    S_inv = mu[:, :, None] ** (-powers[None, None, :]) / n * prod[:, None, :]
    return GridFn(S, dS), GridFn(S_inv)


def build_A_lambda(spec: CompanionSpec, lam) -> GridFn:
    """``diag(lambda rho w^k)``."""
    lam = _check_lambda(lam)
    n = spec.n
    rho = amplitude_profile(spec)
    w = np.array([_root(n, k) for k in range(1, n + 1)])
    eye = np.eye(n)
    return GridFn(lam * rho.values[:, None, None] * w[None, :, None] * eye,
                  lam * rho.deriv[:, None, None] * w[None, :, None] * eye)


def diag_correction(spec: CompanionSpec) -> GridFn:
    """``sum_m (2m - n - 1)/(2n) p_m'/p_m``, the common diagonal of ``S^{-1} S'``."""
    n = spec.n
    v = sum((2 * m - n - 1) / (2 * n) * spec.p_grid[m - 1].deriv / spec.p_grid[m - 1].values
            for m in range(1, n + 1))
    return GridFn(np.asarray(v, dtype=np.float64))


def gf_matrices(n: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """``G_kl = w^k`` and ``(F_m)_kl = w^((l-k)(m-1)) / n``."""
    k = np.arange(1, n + 1)
    G = np.repeat(np.exp(2j * np.pi * k / n)[:, None], n, axis=1)
    diff = k[None, :] - k[:, None]
    F = [np.exp(2j * np.pi * diff * (m - 1) / n) / n for m in range(1, n + 1)]
    return G, F


def residual_check(spec: CompanionSpec, lam) -> float:
    """``|S^{-1} (D - D0) S - zeta rho G + sum q_mm F_m|_L1``; of order ``1/|lambda|``."""
    lam = _check_lambda(lam)
    S, S_inv = build_S_lambda(spec, lam)
    diff = build_D(spec, lam).values - build_D0(spec, lam).values
    core = S_inv.values @ diff @ S.values
    rho = amplitude_profile(spec).values
    G, F = gf_matrices(spec.n)
    R = core - spec.zeta * rho[:, None, None] * G
    for m in range(1, spec.n + 1):
        R = R + spec.q_values(m, m)[:, None, None] * F[m - 1]
    return norm_l1(GridFn(R))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SectorContext:
    n: int
    m: int
    tau: tuple            # 1-based component indices, ascending Re(e^{i phi} w^k)
    midpoint_arg: float

    @property
    def direction(self) -> complex:
        return cmath.exp(1j * self.midpoint_arg)

    def contains(self, lam) -> bool:
        lo = math.pi * (self.m - 1) / self.n
        hi = math.pi * self.m / self.n
        a = cmath.phase(complex(lam)) % (2 * math.pi)
        return lo < a < hi

    def partition_sets(self, k: int):
        """0-based index sets ``(P0, P-, P+)`` for component ``k``."""
        j = self.tau.index(k)
        return ([k - 1], [c - 1 for c in self.tau[:j]], [c - 1 for c in self.tau[j + 1:]])


def sector_permutation(n: int, m: int) -> SectorContext:
    if n < 2:
        raise InvalidParameterError("order n must be at least 2")
    if not 1 <= m <= 2 * n:
        raise InvalidParameterError(f"sector index must lie in 1..{2 * n}")
    phi = (2 * m - 1) * math.pi / (2 * n)
    re = [(cmath.exp(1j * phi) * _root(n, k)).real for k in range(1, n + 1)]
    tau = tuple(int(i) + 1 for i in np.argsort(re, kind="stable"))
    vals = sorted(re)
    # at sector midpoints the real parts are distinct; guard against misuse
    assert all(b - a > TIE_TOL for a, b in zip(vals, vals[1:])), "tied directions at a sector midpoint"
    return SectorContext(n, m, tau, phi)


@dataclass(eq=False)
class BirkhoffSolution:
    y: GridFn                 # leading term in the y coordinates
    x: GridFn                 # its image S y in the original coordinates
    log_shift: np.ndarray     # the removed exponent when shifted, else zeros


def _phase_parts(spec: CompanionSpec, lam: complex, k: int):
    rho = amplitude_profile(spec)
    w = _root(spec.n, k)
    main = cumulative_integral(GridFn((lam + spec.zeta) * w * rho.values, (lam + spec.zeta) * w * rho.deriv))
    qs = sum(spec.q_values(l, l) for l in range(1, spec.n + 1)) / spec.n
    dqs = sum(spec.q_derivs(l, l) for l in range(1, spec.n + 1)) / spec.n
    rest = -cumulative_integral(GridFn(np.asarray(qs + 0j), np.asarray(dqs + 0j)))
    return main, rest


def birkhoff_solution(spec: CompanionSpec, lam, k: int, sector: SectorContext,
                      shifted: bool = False) -> BirkhoffSolution:
    """Leading term ``prod p_l^((n-2l+1)/(2n)) exp(int[(lambda+zeta) rho w^k - sum q_ll / n]) e_k``.

    With ``shifted`` the factor ``exp(int (lambda+zeta) rho w^k)`` is left out
    (and returned as ``log_shift``) so that large ``lambda`` stays finite.
    """
    lam = _check_lambda(lam)
    if not sector.contains(lam):
        raise SectorError(f"lambda = {lam} is outside sector {sector.m}")
    if not 1 <= k <= spec.n:
        raise InvalidParameterError(f"component k must lie in 1..{spec.n}")
    n = spec.n
    logamp = sum((n - 2 * l + 1) / (2 * n) * np.log(spec.p_grid[l - 1].values) for l in range(1, n + 1))
    main, rest = _phase_parts(spec, lam, k)
    expo = logamp + rest + (0 if shifted else main)
    y = np.zeros((spec.N + 1, n), dtype=np.complex128)
    y[:, k - 1] = np.exp(expo)
    S, _ = build_S_lambda(spec, lam)
    x = np.einsum("nab,nb->na", S.values, y)
    return BirkhoffSolution(GridFn(y), GridFn(x), main if shifted else np.zeros_like(main))


@dataclass
class DecayRow:
    magnitude: float
    rel_sup_error: float
    scaled_residual: float


def transformed_system(spec: CompanionSpec, lam) -> GridFn:
    """``S^{-1} D S - S^{-1} S'`` on the exact Vandermonde transformer."""
    S, S_inv = build_S_lambda(spec, lam)
    A_new, _ = conjugate(TransformerBundle(S, S_inv), build_D(spec, lam))
    return A_new


def compare_at(spec: CompanionSpec, sector: SectorContext, magnitude: float, k: int,
               side: str = "left") -> tuple[float, GridFn, GridFn]:
    """Relative sup error between the normalized direct solution and the Birkhoff term.

    Both live in ``y`` coordinates with the common factor
    ``exp(int (lambda+zeta) rho w^k)`` removed.
    """
    if side not in ("left", "right"):
        raise InvalidParameterError(f"side must be 'left' or 'right', got {side!r}")
    lam = magnitude * sector.direction
    n = spec.n
    A = transformed_system(spec, lam)
    rho = amplitude_profile(spec)
    c = (lam + spec.zeta) * _root(n, k)
    A_shift = GridFn(A.values - c * rho.values[:, None, None] * np.eye(n))
    i0, im, ip = sector.partition_sets(k)
    P = np.zeros((n, n))
    keep = (i0 + im) if side == "left" else im
    P[keep, keep] = 1.0
    xi = np.zeros(n, dtype=np.complex128)
    xi[k - 1] = 1.0
    y = solve_direct(BvpProblem(A_shift, None, P, xi)).values
    b = birkhoff_solution(spec, lam, k, sector, shifted=True).y.values
    node = 0 if side == "left" else -1
    y = y * (b[node, k - 1] / y[node, k - 1])
    err = float(np.max(linalg.vec_norm(y - b) / linalg.vec_norm(b)))
    return err, GridFn(y), GridFn(b)


def verify_asymptotics(spec: CompanionSpec, sector: SectorContext, magnitudes, k: int,
                       side: str = "left") -> list[DecayRow]:
    """Rows ``(|lambda|, rel_sup_error, |lambda| residual)`` along the sector midpoint ray."""
    rows = []
    for mag in magnitudes:
        err, _, _ = compare_at(spec, sector, float(mag), k, side)
        lam = float(mag) * sector.direction
        rows.append(DecayRow(float(mag), err, float(mag) * residual_check(spec, lam)))
    return rows
