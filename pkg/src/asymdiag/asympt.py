"""Families ``A_nu = sum_k d_nu h_k P_k + V`` and their diagonal models.

For block ``k`` the blocks are split as ``P0 = P_k``, ``P- = sum_{l<k} P_l``
and ``P+ = sum_{l>k} P_l``.  Every solve works on the shifted coefficient
``A_nu - d_nu h_k``: the shift multiplies every solution by the same scalar
``exp(int d_nu h_k)``, so pointwise relative errors are unchanged while the
exponentials stay of moderate size.

Block indices ``k`` are 0-based throughout this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, linalg
from .bvp import BvpProblem, Propagator, check_dichotomy, solve_direct
from .errors import (
    DimensionMismatchError,
    InvalidInputError,
    InvalidParameterError,
    MagnitudeTooSmallError,
    SeparationError,
)
from .frame import (
    Atom,
    Partition,
    PiFrame,
    SpectralAtoms,
    TransformerBundle,
    build_transformer,
    delta_pi,
    kappa,
)
from .gridfn import GridFn, cumulative_integral, deriv_samples, mollify, norm_l1, pointwise_norm

SEPARATION_TOL = 1e-12
DEFAULT_WIDTH = 1.0 / 64
MIN_WIDTH = 1.0 / 1024
SIDES = ("left", "right")


@dataclass(frozen=True, eq=False)
class ParamFamily:
    """Block index sets (0-based), scalar profiles, perturbation and the ray of magnitudes."""

    blocks: tuple
    h: tuple
    V: GridFn
    direction: complex = 1.0
    magnitudes: tuple = (10.0, 20.0, 40.0, 80.0)

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(i) for i in b)) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "h", tuple(self.h))
        d = self.V.dim
        if self.V.kind != "matrix":
            raise InvalidInputError("V must be matrix valued")
        if sorted(i for b in blocks for i in b) != list(range(d)) or any(not b for b in blocks):
            raise InvalidInputError("blocks must be nonempty and partition the coordinates")
        if len(self.h) != len(blocks):
            raise DimensionMismatchError("one profile per block is required")
        if any(h.kind != "scalar" or h.N != self.V.N for h in self.h):
            raise DimensionMismatchError("profiles must be scalar functions on the grid of V")
        if abs(self.direction) == 0:
            raise InvalidParameterError("direction must be nonzero")
        object.__setattr__(self, "direction", complex(self.direction) / abs(self.direction))
        mags = tuple(float(m) for m in self.magnitudes)
        if not mags or mags[0] <= 0 or any(b <= a for a, b in zip(mags, mags[1:])):
            raise InvalidParameterError("magnitudes must be positive and strictly increasing")
        object.__setattr__(self, "magnitudes", mags)
        sep = self.min_separation()
        if sep < 1.0 - SEPARATION_TOL:
            raise SeparationError(f"profiles must stay at distance >= 1, got {sep:.6g}")

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def dim(self) -> int:
        return self.V.dim

    @property
    def N(self) -> int:
        return self.V.N

    def d(self, nu_index: int) -> complex:
        return self.magnitudes[nu_index] * self.direction

    def projector(self, k: int) -> np.ndarray:
        P = np.zeros((self.dim, self.dim))
        idx = list(self.blocks[k])
        P[idx, idx] = 1.0
        return P

    def min_separation(self) -> float:
        if len(self.h) < 2:
            return math.inf
        return min(float(np.min(np.abs(a.values - b.values)))
                   for i, a in enumerate(self.h) for b in self.h[i + 1:])

    def partition(self, k: int) -> Partition:
        """Block ``k`` in the middle, lower-numbered blocks below, higher above."""
        lower = [i for b in self.blocks[:k] for i in b]
        upper = [i for b in self.blocks[k + 1:] for i in b]
        return Partition(self.dim, self.blocks[k], lower, upper)

    def full_partition_mask(self) -> np.ndarray:
        lab = np.empty(self.dim, dtype=int)
        for j, b in enumerate(self.blocks):
            lab[list(b)] = j
        return lab[:, None] == lab[None, :]

    def sorted_blocks(self, nu_index: int = 0) -> "ParamFamily":
        """Same family with blocks ordered by ascending mean of ``Re(d h)``."""
        means = [float(np.mean((self.direction * h.values).real)) for h in self.h]
        order = np.argsort(means, kind="stable")
        return ParamFamily(tuple(self.blocks[i] for i in order), tuple(self.h[i] for i in order),
                           self.V, self.direction, self.magnitudes)


@dataclass(frozen=True)
class FrameBudget:
    epsilon: float = math.inf
    alpha: float = math.inf
    beta: float = math.inf
    width_v: float = DEFAULT_WIDTH
    width_h: float = DEFAULT_WIDTH

    def __post_init__(self):
        if min(self.epsilon, self.alpha, self.beta, self.width_v, self.width_h) <= 0:
            raise InvalidParameterError("budget entries must be positive")


# ---------------------------------------------------------------------------


def _block_diag_samples(family: ParamFamily, d: complex, shift_k: int | None):
    """Diagonal of ``sum_l d (h_l - h_k) P_l`` and its derivative."""
    T = family.N + 1
    diag = np.zeros((T, family.dim), dtype=np.complex128)
    ddiag = np.zeros((T, family.dim), dtype=np.complex128)
    hk = family.h[shift_k] if shift_k is not None else None
    for b, h in zip(family.blocks, family.h):
        v = d * h.values
        dv = d * deriv_samples(h)[0]
        if hk is not None:
            v = v - d * hk.values
            dv = dv - d * deriv_samples(hk)[0]
        diag[:, list(b)] = v[:, None]
        ddiag[:, list(b)] = dv[:, None]
    return diag, ddiag


def _assemble(family: ParamFamily, nu_index: int, shift_k: int | None) -> GridFn:
    diag, ddiag = _block_diag_samples(family, family.d(nu_index), shift_k)
    eye = np.eye(family.dim)
    vals = diag[:, :, None] * eye + family.V.values
    der = None
    if family.V.has_deriv and all(h.has_deriv for h in family.h):
        der = ddiag[:, :, None] * eye + family.V.deriv
    return GridFn(vals, der)


def assemble(family: ParamFamily, nu_index: int) -> GridFn:
    """``A_nu`` at every node."""
    return _assemble(family, nu_index, None)


def assemble_shifted(family: ParamFamily, nu_index: int, k: int) -> GridFn:
    """``A_nu - d_nu h_k``."""
    return _assemble(family, nu_index, k)


def diagonal_model(family: ParamFamily, nu_index: int, k: int | None = None) -> GridFn:
    """``Delta A_nu``: three-way compression around block ``k``, or all ``m`` blocks when ``k`` is None."""
    A = assemble(family, nu_index)
    if k is not None:
        return delta_pi(family.partition(k), A)
    mask = family.full_partition_mask()
    return GridFn(A.values * mask, None if A.deriv is None else A.deriv * mask)


# ---------------------------------------------------------------------------


@dataclass
class PairCondition:
    k: int
    l: int
    worst: float
    holds: bool


@dataclass
class ConditionReport:
    separation: float
    separation_ok: bool
    pairs: dict = field(default_factory=dict)  # nu_index -> list[PairCondition]

    @property
    def holds(self) -> bool:
        return self.separation_ok and all(p.holds for ps in self.pairs.values() for p in ps)


def check_conditions(family: ParamFamily, gamma: float) -> ConditionReport:
    """Profile separation and ``int_a^b Re[d (h_k - h_l)] <= -ln gamma`` for ``k < l``."""
    if not 0.0 < gamma < 1.0:
        raise InvalidParameterError("gamma must lie in (0, 1)")
    sep = family.min_separation()
    report = ConditionReport(sep, sep >= 1.0 - SEPARATION_TOL)
    bound = -math.log(gamma)
    h = family.N ** -1
    for nu in range(len(family.magnitudes)):
        d = family.d(nu)
        rows = []
        for k in range(family.m):
            for l in range(k + 1, family.m):
                g = (d * (family.h[k].values - family.h[l].values)).real
                F = np.zeros(family.N + 1)
                F[1:] = np.cumsum(0.5 * h * (g[:-1] + g[1:]))
                worst = kernels.running_excess(F)
                rows.append(PairCondition(k, l, worst, worst <= bound))
        report.pairs[nu] = rows
    return report


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class FrameResult:
    frame: PiFrame
    partition: Partition
    shifted: GridFn
    width_v: float
    width_h: float
    smoothed_h: tuple
    measures: dict


def _smoothed_profiles(family: ParamFamily, width: float) -> tuple:
    return tuple(mollify(h, width) for h in family.h)


def build_frame_for_index(family: ParamFamily, nu_index: int, k: int,
                          budget: FrameBudget | None = None) -> FrameResult:
    """Frame for the shifted system around block ``k``.

    Atoms are ``d (g_l - g_k)`` on block ``l`` with ``g_l`` the smoothed
    profiles; ``C`` is the smoothed ``V`` cut off to vanish at both ends.
    Widths are halved from the budget value until the smoothed profiles keep
    distance ``1/2``; below ``1/1024`` that is a :class:`SeparationError`.
    """
    budget = budget or FrameBudget()
    if not 0 <= k < family.m:
        raise InvalidParameterError(f"block index {k} outside 0..{family.m - 1}")
    wh = budget.width_h
    while True:
        g = _smoothed_profiles(family, wh)
        sep = min((float(np.min(np.abs(a.values - b.values))) for i, a in enumerate(g) for b in g[i + 1:]),
                  default=math.inf)
        if sep >= 0.5:
            break
        wh *= 0.5
        if wh < MIN_WIDTH:
            raise SeparationError("smoothing destroys the profile separation at every admissible width")
    wv = min(budget.width_v, 0.25 - 1e-12)
    C = mollify(family.V, wv, vanish_at_ends=True)
    d = family.d(nu_index)
    atoms = [Atom(GridFn(d * (gl.values - g[k].values), d * (gl.deriv - g[k].deriv)), b)
             for gl, b in zip(g, family.blocks)]
    B = SpectralAtoms(family.dim, atoms)
    partition = family.partition(k)
    c_norm = float(np.max(pointwise_norm(C.values)))
    limit = abs(d) * sep / (8 * family.dim)
    if not c_norm < limit:
        need = 8 * family.dim * c_norm / sep
        raise MagnitudeTooSmallError(
            f"|C|_C = {c_norm:.6g} needs magnitude above {need:.6g}, got {abs(d):.6g}", need)
    frame = PiFrame(partition, B, C)
    measures = {
        "v_minus_c_l1": norm_l1(family.V - C.without_deriv()),
        "c_deriv_l1": norm_l1(GridFn(C.deriv)),
        "g_deriv_l1": max(norm_l1(GridFn(gl.deriv)) for gl in g),
        "separation": sep,
    }
    measures["within_budget"] = (measures["v_minus_c_l1"] < budget.epsilon / 2
                                 and measures["c_deriv_l1"] < budget.alpha
                                 and measures["g_deriv_l1"] < budget.beta)
    return FrameResult(frame, partition, assemble_shifted(family, nu_index, k), wv, wh, g, measures)


@dataclass
class PerturbationReport:
    size: float           # |S^-1 A S - A0 - S^-1 S'|_L1
    epsilon: float        # largest of the four normalized frame quantities
    components: dict
    bound: float          # (48 dim + 3) epsilon
    holds: bool


def transformed_perturbation(fr: FrameResult, bundle: TransformerBundle | None = None,
                             slack: float = 0.05) -> PerturbationReport:
    """Size of the perturbation left after the substitution ``x = S y``."""
    frame = fr.frame
    bundle = bundle or build_transformer(frame)
    A = fr.shifted
    A0 = delta_pi(fr.partition, A)
    S, Si = bundle.S.values, bundle.S_inv.values
    dS = deriv_samples(bundle.S)[0]
    size = norm_l1(GridFn(Si @ A.values @ S - A0.values - Si @ dS))
    dpi = frame.d
    c = pointwise_norm(frame.C.values)
    Bm = frame.B.as_gridfn().values
    h = frame.C.h

    def trap(g):
        return float(h * (np.sum(g) - 0.5 * (g[0] + g[-1])))

    AmC = A - frame.C.without_deriv()
    comps = {
        "kappa": kappa(frame) / dpi**2,
        "c_squared": trap(c**2) / dpi,
        "c_times_a0_minus_b": trap(c * pointwise_norm(A0.values - Bm)) / dpi,
        "off_block": norm_l1(AmC - delta_pi(fr.partition, AmC)),
    }
    eps = max(comps.values())
    bound = (48 * frame.dim + 3) * eps
    return PerturbationReport(size, eps, comps, bound, size <= bound * (1 + slack) + 1e-13)


# ---------------------------------------------------------------------------


def bc_projector(family: ParamFamily, k: int, side: str) -> np.ndarray:
    """``P`` of ``P x(0) + (1 - P) x(1) = xi`` for the left or right variant."""
    part = family.partition(k)
    if side == "left":
        return part.P0 + part.P_minus
    if side == "right":
        return part.P_minus
    raise InvalidParameterError(f"side must be 'left' or 'right', got {side!r}")


def _check_xi(family: ParamFamily, k: int, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=np.complex128)
    if xi.shape != (family.dim,):
        raise DimensionMismatchError("xi must be a vector of the family dimension")
    if not np.any(xi):
        raise InvalidInputError("xi must be nonzero")
    Pk = family.projector(k)
    if np.max(np.abs(xi - Pk @ xi)) > 1e-12 * np.max(np.abs(xi)):
        raise InvalidInputError(f"xi must lie in the range of block {k}")
    return xi


@dataclass(eq=False)
class CompareResult:
    magnitude: float
    k: int
    side: str
    x: GridFn            # solution of the shifted full system
    x0: GridFn           # solution of the shifted diagonal model
    rel_sup_error: float
    log_scale: np.ndarray  # log |exp(int_0^t d h_k)| at nodes


def _log_scale(family: ParamFamily, nu_index: int, k: int) -> np.ndarray:
    d = family.d(nu_index)
    hk = family.h[k]
    return (d * cumulative_integral(hk)).real


def asymptotic_compare(family: ParamFamily, nu_index: int, k: int, xi, side: str = "left") -> CompareResult:
    """Direct solution against the diagonal model with the same boundary data."""
    xi = _check_xi(family, k, xi)
    P = bc_projector(family, k, side)
    A = assemble_shifted(family, nu_index, k)
    A0 = delta_pi(family.partition(k), A)
    x = solve_direct(BvpProblem(A, None, P, xi))
    x0 = solve_direct(BvpProblem(A0, None, P, xi))
    den = linalg.vec_norm(x0.values)
    err = float(np.max(linalg.vec_norm(x.values - x0.values) / den))
    return CompareResult(family.magnitudes[nu_index], k, side, x, x0, err, _log_scale(family, nu_index, k))


@dataclass
class RefineResult:
    magnitude: float
    actual_gap: float
    y_norm: float
    refined_bound: float
    gamma: float
    epsilon: float
    off_block_l1: float
    holds: bool
    y: GridFn | None = None


def refine(family: ParamFamily, nu_index: int, k: int, xi, side: str = "left",
           compare: CompareResult | None = None, budget: FrameBudget | None = None) -> RefineResult:
    """Gap ``|x - x0|_C`` against ``[1 + (1/gamma + eps) |A - A0|_L1] |y|_C``.

    ``y`` solves the diagonal model forced by ``(A - A0) x0`` with zero
    boundary data.  ``gamma`` comes from the dichotomy scan of the shifted
    diagonal model and ``eps`` is the measured transformed-perturbation size
    of the frame for this magnitude.  Norms are reported after dividing all
    solutions by the common factor ``max_t |exp(int d h_k)|``, which leaves
    the inequality unchanged.
    """
    cmp = compare or asymptotic_compare(family, nu_index, k, xi, side)
    P = bc_projector(family, k, side)
    A = assemble_shifted(family, nu_index, k)
    A0 = delta_pi(family.partition(k), A)
    diff = A - A0
    forcing = GridFn(np.einsum("nab,nb->na", diff.values, cmp.x0.values))
    prop = Propagator(A0)
    y = solve_direct(BvpProblem(A0, forcing, P, np.zeros(family.dim)), propagator=prop)
    w = np.exp(cmp.log_scale - np.max(cmp.log_scale))
    gap = float(np.max(w * linalg.vec_norm(cmp.x.values - cmp.x0.values)))
    ynorm = float(np.max(w * linalg.vec_norm(y.values)))
    _, worst = check_dichotomy(A0, P, 0.5)
    gamma = math.exp(-max(worst, 0.0))
    try:
        fr = build_frame_for_index(family, nu_index, k, budget)
        eps = transformed_perturbation(fr).size
    except (MagnitudeTooSmallError, SeparationError):
        eps = math.inf
    off = norm_l1(diff)
    bound = (1.0 + (1.0 / gamma + eps) * off) * ynorm
    return RefineResult(cmp.magnitude, gap, ynorm, bound, gamma, eps, off, gap <= bound, y)


@dataclass
class SweepRow:
    magnitude: float
    rel_sup_error: float
    actual_gap: float
    y_norm: float
    refined_bound: float
    epsilon: float
    theta: float
    frame_ok: bool


def sweep_row(family: ParamFamily, nu_index: int, k: int, xi, side: str = "left",
              budget: FrameBudget | None = None) -> SweepRow:
    cmp = asymptotic_compare(family, nu_index, k, xi, side)
    ref = refine(family, nu_index, k, xi, side, compare=cmp, budget=budget)
    theta = ref.epsilon / ref.gamma
    return SweepRow(cmp.magnitude, cmp.rel_sup_error, ref.actual_gap, ref.y_norm, ref.refined_bound,
                    ref.epsilon, theta, math.isfinite(ref.epsilon))


def first_admissible(rows: list[SweepRow]) -> float | None:
    """Smallest magnitude from which on the frame exists and ``theta < 1``."""
    found = None
    for r in reversed(rows):
        if r.frame_ok and r.theta < 1:
            found = r.magnitude
        else:
            break
    return found
