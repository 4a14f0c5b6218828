"""Seeded random instances shared by the tests, the self-test and the benchmark."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bvp import BvpProblem, ContractionParams, check_dichotomy
from .frame import Atom, Partition, PiFrame, SpectralAtoms, BLOCKS
from .gridfn import GridFn, norm_c, norm_l1


def _cplx(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@dataclass
class SmoothMatrix:
    fn: GridFn
    trace_integral: complex


def smooth_matrix(rng, N: int, dim: int, terms: int = 3, scale: float = 1.0) -> SmoothMatrix:
    """``X0 + sum_j [X_j cos(j pi t) + Y_j sin(j pi t)]`` with exact derivative and trace integral."""
    t = np.linspace(0.0, 1.0, N + 1)
    X0 = _cplx(rng, dim, dim)
    vals = np.broadcast_to(X0, (N + 1, dim, dim)).copy()
    der = np.zeros_like(vals)
    tr = np.trace(X0)
    for j in range(1, terms + 1):
        X, Y = _cplx(rng, dim, dim) / j, _cplx(rng, dim, dim) / j
        w = j * math.pi
        vals += np.cos(w * t)[:, None, None] * X + np.sin(w * t)[:, None, None] * Y
        der += -w * np.sin(w * t)[:, None, None] * X + w * np.cos(w * t)[:, None, None] * Y
        tr += np.trace(Y) * (1 - math.cos(w)) / w
    fn = GridFn(vals, der)
    c = scale / norm_c(fn)
    return SmoothMatrix(GridFn(vals * c, der * c), tr * c)


def smooth_vector(rng, N: int, dim: int, scale: float = 1.0) -> GridFn:
    t = np.linspace(0.0, 1.0, N + 1)
    a, b, c = _cplx(rng, dim), _cplx(rng, dim), rng.uniform(1, 4, size=dim)
    vals = a + np.sin(np.outer(t, c)) * b
    der = np.cos(np.outer(t, c)) * b * c
    return GridFn(vals * scale, der * scale)


def random_frame(rng, N: int = 256, max_dim: int = 4, fill: float = 0.8) -> PiFrame:
    """Frame with ``d_atom >= 1`` and ``|C|_C <= fill * d_atom / (8 dim)``."""
    dim = int(rng.integers(2, max_dim + 1))
    J = int(rng.integers(2, dim + 1))
    perm = rng.permutation(dim)
    cuts = np.sort(rng.choice(np.arange(1, dim), size=J - 1, replace=False))
    groups = np.split(perm, cuts)
    blocks = list(rng.integers(0, 3, size=J))
    while len(set(blocks)) < 2:
        blocks = list(rng.integers(0, 3, size=J))
    t = np.linspace(0.0, 1.0, N + 1)
    order = rng.permutation(J)
    atoms = []
    for j in range(J):
        c = 3.0 * order[j] + 1j * rng.uniform(-1, 1)
        a = 0.5 * rng.uniform() * np.exp(2j * math.pi * rng.uniform())
        f, ph = rng.uniform(0.5, 2.0), rng.uniform(0, 2 * math.pi)
        beta = GridFn(c + a * np.sin(2 * math.pi * f * t + ph), 2 * math.pi * f * a * np.cos(2 * math.pi * f * t + ph))
        atoms.append(Atom(beta, groups[j]))
    sets = {b: [i for j in range(J) if blocks[j] == b for i in groups[j]] for b in range(3)}
    part = Partition(dim, sets[0], sets[1], sets[2])
    X = [_cplx(rng, dim, dim) for _ in range(3)]
    s, ds = np.sin(math.pi * t), math.pi * np.cos(math.pi * t)
    inner = X[0] + np.sin(2 * math.pi * t)[:, None, None] * X[1] + np.cos(3 * math.pi * t)[:, None, None] * X[2]
    dinner = (2 * math.pi * np.cos(2 * math.pi * t)[:, None, None] * X[1]
              - 3 * math.pi * np.sin(3 * math.pi * t)[:, None, None] * X[2])
    C = s[:, None, None] * inner
    dC = ds[:, None, None] * inner + s[:, None, None] * dinner
    C[0] = 0.0
    C[-1] = 0.0
    B = SpectralAtoms(dim, atoms)
    probe = PiFrame(part, B, GridFn(np.zeros_like(C)))
    size = float(np.max(np.linalg.norm(C, ord=2, axis=(1, 2))))
    target = rng.uniform(0.2, 1.0) * fill * probe.d_atom / (8 * dim)
    return PiFrame(part, B, GridFn(C * (target / size), dC * (target / size)))


@dataclass
class ContractionInstance:
    A: GridFn
    V: GridFn
    problem: BvpProblem
    params: ContractionParams


def _skew(rng, N, r):
    t = np.linspace(0.0, 1.0, N + 1)
    X = _cplx(rng, r, r)
    K0 = 0.5 * (X - X.conj().T)
    f = rng.uniform(0.5, 3)
    return np.cos(f * t)[:, None, None] * K0, -f * np.sin(f * t)[:, None, None] * K0


def random_contraction(rng, N: int = 512) -> ContractionInstance:
    """Block-diagonal ``A`` commuting with ``P``, admissible ``V``, ``f`` and ``xi``."""
    d = int(rng.integers(2, 5))
    r = int(rng.integers(1, d))
    t = np.linspace(0.0, 1.0, N + 1)
    A = np.zeros((N + 1, d, d), dtype=np.complex128)
    dA = np.zeros_like(A)
    for sl, sign, size in ((slice(0, r), -1.0, r), (slice(r, d), 1.0, d - r)):
        m0 = rng.uniform(1.0, 6.0)
        m1 = rng.uniform(0.0, 1.5) * m0
        ph = rng.uniform(0, 2 * math.pi)
        mu = m0 + m1 * np.cos(2 * math.pi * t + ph)
        dmu = -2 * math.pi * m1 * np.sin(2 * math.pi * t + ph)
        K, dK = _skew(rng, N, size)
        A[:, sl, sl] = sign * mu[:, None, None] * np.eye(size) + K
        dA[:, sl, sl] = sign * dmu[:, None, None] * np.eye(size) + dK
    P = np.diag([1.0] * r + [0.0] * (d - r))
    Ag = GridFn(A, dA)
    _, worst = check_dichotomy(Ag, P, 0.5)
    gamma = math.exp(-worst) * rng.uniform(0.7, 0.95)
    theta = rng.uniform(0.2, 0.6)
    Vm = smooth_matrix(rng, N, d).fn
    V = Vm * (theta * gamma * rng.uniform(0.5, 0.95) / norm_l1(Vm))
    f = smooth_vector(rng, N, d)
    xi = _cplx(rng, d)
    return ContractionInstance(Ag, V, BvpProblem(Ag + V, f, P, xi), ContractionParams(gamma, theta))


def random_positive_expr(rng) -> str:
    a = rng.uniform(1.0, 2.0)
    b = rng.uniform(-0.6, 0.6) * a
    c, d = rng.uniform(0.5, 4.0), rng.uniform(0, 3)
    return f"{a:.4f} + {b:.4f}*sin({c:.4f}*t + {d:.4f})"


def random_smooth_expr(rng) -> str:
    a, c, d = rng.uniform(-1, 1), rng.uniform(0.5, 4.0), rng.uniform(0, 3)
    return f"{a:.4f}*cos({c:.4f}*t + {d:.4f}) + {rng.uniform(-0.5, 0.5):.4f}*t^2"
