"""Block-diagonal compression, frames ``{B, C}`` and the transformer ``S``.

A partition splits the coordinate indices into three blocks (``0``, ``-``,
``+``).  A frame is a diagonal operator ``B`` built from spectral atoms,
each atom a scalar profile times a coordinate projector lying inside one
block, together with a perturbation ``C`` that vanishes at both ends and is
small against the atom separation.  The transformer ``S = sum Q_b P_b``
uses Riesz projectors ``Q_b`` of ``B + C`` computed by contour quadrature
on one circle of radius ``d_atom / 2`` per atom; ``S^{-1} (B + C) S`` is
block diagonal up to ``O(|C|^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, linalg
from .errors import (
    BoundViolation,
    ContourHitsSpectrumError,
    DimensionMismatchError,
    FrameInvariantError,
    InvalidInputError,
    SeparationError,
)
from .gridfn import GridFn, deriv_samples, norm_c, norm_l1, pointwise_norm

DEFAULT_NC = 64
DEFAULT_SLACK = 0.05
END_TOL = 1e-12
ABS_FLOOR = 1e-13  # roundoff allowance when a bound's right side is zero

BLOCKS = ("0", "-", "+")


@dataclass(frozen=True)
class Partition:
    """Disjoint 0-based index sets covering ``range(dim)``."""

    dim: int
    idx0: tuple
    idx_minus: tuple = ()
    idx_plus: tuple = ()

    def __post_init__(self):
        sets = [tuple(sorted(int(i) for i in s)) for s in (self.idx0, self.idx_minus, self.idx_plus)]
        for name, s in zip(("idx0", "idx_minus", "idx_plus"), sets):
            object.__setattr__(self, name, s)
        flat = [i for s in sets for i in s]
        if sorted(flat) != list(range(self.dim)):
            raise InvalidInputError(f"index sets must partition range({self.dim}), got {sets}")

    @property
    def index_sets(self) -> tuple:
        return (self.idx0, self.idx_minus, self.idx_plus)

    def projector(self, block: str) -> np.ndarray:
        P = np.zeros((self.dim, self.dim))
        idx = list(self.index_sets[BLOCKS.index(block)])
        P[idx, idx] = 1.0
        return P

    @property
    def P0(self) -> np.ndarray:
        return self.projector("0")

    @property
    def P_minus(self) -> np.ndarray:
        return self.projector("-")

    @property
    def P_plus(self) -> np.ndarray:
        return self.projector("+")

    def block_of(self, index: int) -> str:
        for name, s in zip(BLOCKS, self.index_sets):
            if index in s:
                return name
        raise InvalidInputError(f"index {index} outside range({self.dim})")

    def labels(self) -> np.ndarray:
        """Block number (0, 1, 2 for ``0``, ``-``, ``+``) of every coordinate."""
        lab = np.empty(self.dim, dtype=int)
        for b, s in enumerate(self.index_sets):
            lab[list(s)] = b
        return lab


def delta_pi(partition: Partition, A):
    """``P0 A P0 + P- A P- + P+ A P+`` for a matrix, a stack or a GridFn."""
    lab = partition.labels()
    mask = lab[:, None] == lab[None, :]
    if isinstance(A, GridFn):
        if A.kind != "matrix" or A.dim != partition.dim:
            raise DimensionMismatchError("delta_pi needs matrix samples of the partition's dimension")
        return GridFn(A.values * mask, None if A.deriv is None else A.deriv * mask)
    A = np.asarray(A)
    if A.shape[-2:] != (partition.dim, partition.dim):
        raise DimensionMismatchError(f"matrix shape {A.shape} does not match dim {partition.dim}")
    return A * mask


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Atom:
    beta: GridFn
    indices: tuple

    def __post_init__(self):
        if self.beta.kind != "scalar":
            raise InvalidInputError("atom profile must be scalar valued")
        object.__setattr__(self, "indices", tuple(sorted(int(i) for i in self.indices)))
        if not self.indices:
            raise InvalidInputError("atom needs at least one index")


@dataclass(frozen=True, eq=False)
class SpectralAtoms:
    dim: int
    atoms: tuple

    def __post_init__(self):
        atoms = tuple(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise InvalidInputError("at least one atom is required")
        flat = [i for a in atoms for i in a.indices]
        if sorted(flat) != list(range(self.dim)):
            raise InvalidInputError("atom index sets must partition the coordinates")
        Ns = {a.beta.N for a in atoms}
        if len(Ns) != 1:
            raise DimensionMismatchError("atom profiles live on different grids")

    @property
    def N(self) -> int:
        return self.atoms[0].beta.N

    def diag(self) -> np.ndarray:
        """Diagonal of ``B`` at every node, shape ``(N+1, dim)``."""
        out = np.zeros((self.N + 1, self.dim), dtype=np.complex128)
        for a in self.atoms:
            out[:, list(a.indices)] = a.beta.values[:, None]
        return out

    def diag_deriv(self) -> np.ndarray:
        out = np.zeros((self.N + 1, self.dim), dtype=np.complex128)
        for a in self.atoms:
            out[:, list(a.indices)] = deriv_samples(a.beta)[0][:, None]
        return out

    def centers(self) -> np.ndarray:
        return np.stack([a.beta.values for a in self.atoms], axis=1).astype(np.complex128)

    def as_gridfn(self) -> GridFn:
        D = self.diag()
        dD = self.diag_deriv()
        eye = np.eye(self.dim)
        return GridFn(D[:, :, None] * eye, dD[:, :, None] * eye)

    def block_assignment(self, partition: Partition) -> list[str]:
        out = []
        for a in self.atoms:
            blocks = {partition.block_of(i) for i in a.indices}
            if len(blocks) != 1:
                raise FrameInvariantError(f"atom {a.indices} straddles blocks {sorted(blocks)}")
            out.append(blocks.pop())
        return out


def gap(atoms: SpectralAtoms, partition: Partition) -> tuple[float, float]:
    """Minimum over nodes of atom distances: across blocks, and over all pairs.

    A value of ``inf`` means there is no such pair (single atom, or a single
    occupied block).
    """
    blocks = atoms.block_assignment(partition)
    c = atoms.centers()
    J = c.shape[1]
    d_pi = math.inf
    d_atom = math.inf
    for i in range(J):
        for j in range(i + 1, J):
            dist = float(np.min(np.abs(c[:, i] - c[:, j])))
            d_atom = min(d_atom, dist)
            if blocks[i] != blocks[j]:
                d_pi = min(d_pi, dist)
    return d_pi, d_atom


@dataclass(frozen=True, eq=False)
class PiFrame:
    partition: Partition
    B: SpectralAtoms
    C: GridFn
    d_pi: float = field(init=False)
    d_atom: float = field(init=False)

    def __post_init__(self):
        if self.C.kind != "matrix" or self.C.dim != self.partition.dim or self.B.dim != self.partition.dim:
            raise DimensionMismatchError("frame parts have inconsistent dimensions")
        if self.C.N != self.B.N:
            raise DimensionMismatchError("B and C live on different grids")
        d_pi, d_atom = gap(self.B, self.partition)
        object.__setattr__(self, "d_pi", d_pi)
        object.__setattr__(self, "d_atom", d_atom)
        if d_atom <= 0.0:
            raise SeparationError("two atoms meet at some node")
        ends = max(np.max(np.abs(self.C.values[0])), np.max(np.abs(self.C.values[-1])))
        if ends > END_TOL * max(1.0, np.max(np.abs(self.C.values))):
            raise FrameInvariantError(f"C must vanish at both ends (|C| = {ends:.3e})")
        cn = norm_c(self.C)
        if math.isfinite(d_atom) and not cn < d_atom / (8 * self.dim):
            raise FrameInvariantError(
                f"|C|_C = {cn:.6g} is not below d_atom/(8 dim) = {d_atom / (8 * self.dim):.6g}")

    @property
    def dim(self) -> int:
        return self.partition.dim

    @property
    def N(self) -> int:
        return self.C.N

    @property
    def d(self) -> float:
        """Separation used in the transformer bounds."""
        return self.d_pi if math.isfinite(self.d_pi) else self.d_atom

    @property
    def radius(self) -> float:
        return 0.5 * self.d_atom if math.isfinite(self.d_atom) else 1.0


def kappa(frame: PiFrame) -> float:
    """``int [6 |C| |B'| + (4 |C| + d) |C'|] dt`` by the trapezoid rule."""
    c = pointwise_norm(frame.C.values)
    dc = pointwise_norm(deriv_samples(frame.C)[0])
    db = np.max(np.abs(frame.B.diag_deriv()), axis=1)
    d = frame.d if math.isfinite(frame.d) else 0.0
    g = 6 * c * db + (4 * c + d) * dc
    return float(frame.C.h * (np.sum(g) - 0.5 * (g[0] + g[-1])))


# ---------------------------------------------------------------------------


def _block_projectors(frame: PiFrame, nc: int, nodes=None):
    """Riesz projectors per block and their derivatives, shape (T, 3, d, d)."""
    sel = slice(None) if nodes is None else nodes
    Bd = frame.B.diag()[sel]
    C = frame.C.values[sel]
    Hdot = np.eye(frame.dim) * frame.B.diag_deriv()[sel][:, :, None] + deriv_samples(frame.C)[0][sel]
    centers = frame.B.centers()[sel]
    Q, dQ, bad = kernels.riesz_atoms(Bd, C, Hdot, centers, frame.radius, nc)
    if np.any(bad):
        raise ContourHitsSpectrumError(f"resolvent singular on a contour at node {int(np.argmax(bad))}")
    blocks = frame.B.block_assignment(frame.partition)
    T, d = Bd.shape
    Qb = np.zeros((T, 3, d, d), dtype=np.complex128)
    dQb = np.zeros_like(Qb)
    for j, b in enumerate(blocks):
        Qb[:, BLOCKS.index(b)] += Q[:, j]
        dQb[:, BLOCKS.index(b)] += dQ[:, j]
    return Qb, dQb


def riesz_projectors(frame: PiFrame, t_index: int, nc: int = DEFAULT_NC):
    """``(Q0, Q-, Q+)`` at one node; an empty block gives the zero matrix."""
    i = int(t_index)
    Qb, _ = _block_projectors(frame, nc, nodes=slice(i, i + 1))
    return Qb[0, 0], Qb[0, 1], Qb[0, 2]


@dataclass
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    excess: float
    holds: bool
    ratio: float = 0.0  # worst lhs / rhs where rhs > 0


@dataclass
class BoundReport:
    checks: dict
    kappa: float
    d: float
    slack: float

    @property
    def holds(self) -> bool:
        return all(c.holds for c in self.checks.values())

    def violations(self) -> list[str]:
        return [n for n, c in self.checks.items() if not c.holds]


@dataclass(eq=False)
class TransformerBundle:
    S: GridFn
    S_inv: GridFn
    report: BoundReport | None = None

    @classmethod
    def from_S(cls, S: GridFn) -> "TransformerBundle":
        return cls(S, GridFn(linalg.inverse(S.values)))


def _nodewise(name, lhs, rhs, slack):
    """Summary of a pointwise bound, reported at the node with the worst ratio.

    Nodes whose right side is below the roundoff floor count toward ``holds``
    but not toward the ratio, where both sides are noise.
    """
    holds = bool(np.all(lhs <= rhs * (1 + slack) + ABS_FLOOR))
    pos = rhs > ABS_FLOOR
    if np.any(pos):
        ratios = np.where(pos, lhs / np.where(pos, rhs, 1.0), -np.inf)
        i = int(np.argmax(ratios))
        ratio = float(ratios[i])
    else:
        i = int(np.argmax(lhs))
        ratio = 0.0
    return BoundCheck(name, float(lhs[i]), float(rhs[i]), float(np.max(lhs - rhs)), holds, ratio)


def build_transformer(frame: PiFrame, nc: int = DEFAULT_NC, slack: float = DEFAULT_SLACK,
                      strict: bool = False) -> TransformerBundle:
    """``S = Q0 P0 + Q- P- + Q+ P+`` with its derivative and the four bounds.

    Bound violations are recorded in the report; with ``strict`` they raise
    :class:`BoundViolation`.
    """
    Qb, dQb = _block_projectors(frame, nc)
    Ps = np.stack([frame.partition.projector(b) for b in BLOCKS])
    S = np.einsum("tbij,bjk->tik", Qb, Ps)
    dS = np.einsum("tbij,bjk->tik", dQb, Ps)
    Sg = GridFn(S, dS)
    S_inv = linalg.inverse(S)
    eye = np.eye(frame.dim)
    end_err = max(np.max(np.abs(S[0] - eye)), np.max(np.abs(S[-1] - eye)))
    if end_err > 1e-9:
        raise FrameInvariantError(f"S differs from the identity at an end by {end_err:.3e}")

    dim, d = frame.dim, frame.d
    c = pointwise_norm(frame.C.values)
    H = frame.B.as_gridfn().values + frame.C.values
    checks = {}
    if math.isfinite(d):
        checks["S_minus_identity"] = _nodewise(
            "S_minus_identity", linalg.op_norm(S - eye), 4 * dim / d * c, slack)
        checks["S_inv_minus_identity"] = _nodewise(
            "S_inv_minus_identity", linalg.op_norm(S_inv - eye), 8 * dim / d * c, slack)
        k = kappa(frame)
        lhs4 = norm_l1(GridFn(dS))
        rhs4 = 4 * dim / d**2 * k
        checks["S_deriv_l1"] = BoundCheck("S_deriv_l1", lhs4, rhs4, lhs4 - rhs4,
                                          lhs4 <= rhs4 * (1 + slack) + ABS_FLOOR,
                                          lhs4 / rhs4 if rhs4 > 0 else 0.0)
        conj = S_inv @ H @ S - delta_pi(frame.partition, H)
        checks["block_residual"] = _nodewise(
            "block_residual", linalg.op_norm(conj), 8 * dim / d * c**2, slack)
    else:
        k = 0.0
    report = BoundReport(checks, k, d, slack)
    if strict and not report.holds:
        raise BoundViolation(f"transformer bounds violated: {report.violations()}")
    return TransformerBundle(Sg, GridFn(S_inv), report)


def conjugate(bundle: TransformerBundle, A: GridFn, f: GridFn | None = None):
    """Coefficients after the substitution ``x = S y``.

    Returns ``S^{-1} A S - S^{-1} S'`` and ``S^{-1} f``.  ``S'`` comes from
    the bundle's derivative samples when present, else from differences.
    """
    S = bundle.S
    Si = bundle.S_inv.values
    dS, _ = deriv_samples(S)
    A_new = GridFn(Si @ A.values @ S.values - Si @ dS)
    f_new = None
    if f is not None:
        f_new = GridFn(np.einsum("nab,nb->na", Si, f.values))
    return A_new, f_new


@dataclass
class ConjugationReport:
    lhs: float
    rhs: float
    holds: bool


def conjugation_estimate(frame: PiFrame, bundle: TransformerBundle, A: GridFn,
                         slack: float = DEFAULT_SLACK) -> ConjugationReport:
    """``|S^{-1} A S - Delta A|_L1`` against ``3 |A - Delta A|_L1 + (16 dim / d) int |C| |Delta A|``."""
    DA = delta_pi(frame.partition, A)
    Si, S = bundle.S_inv.values, bundle.S.values
    lhs = norm_l1(GridFn(Si @ A.values @ S - DA.values))
    off = norm_l1(A - DA)
    d = frame.d
    if math.isfinite(d):
        g = pointwise_norm(frame.C.values) * pointwise_norm(DA.values)
        integral = float(frame.C.h * (np.sum(g) - 0.5 * (g[0] + g[-1])))
        rhs = 3 * off + 16 * frame.dim / d * integral
    else:
        rhs = 3 * off
    return ConjugationReport(lhs, rhs, lhs <= rhs * (1 + slack) + ABS_FLOOR)
