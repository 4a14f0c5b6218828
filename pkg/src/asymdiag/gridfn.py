"""Functions on [0, 1] sampled on a uniform grid.

A :class:`GridFn` stores samples at ``t_j = j/N`` of a scalar, vector or
matrix valued function, optionally with samples of its derivative.  Norms
follow the C, L1 and W^1_1 definitions with the spectral norm pointwise;
quadrature is the composite trapezoid rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linalg
from .errors import DimensionMismatchError, InvalidInputError, InvalidParameterError

DEFAULT_N = 1024
MIN_N = 16

_KIND_BY_NDIM = {1: "scalar", 2: "vector", 3: "matrix"}


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridFn:
    values: np.ndarray
    deriv: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values)
        if not np.iscomplexobj(vals) and not np.issubdtype(vals.dtype, np.floating):
            vals = vals.astype(np.float64)
        if vals.ndim not in _KIND_BY_NDIM:
            raise InvalidInputError(f"grid samples must be 1-3 dimensional, got {vals.shape}")
        if vals.ndim == 3 and vals.shape[1] != vals.shape[2]:
            raise InvalidInputError("matrix-valued samples must be square")
        n = vals.shape[0] - 1
        if n < MIN_N or n & (n - 1):
            raise InvalidInputError(f"node count must be 2^k + 1 with 2^k >= {MIN_N}, got {n + 1}")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("grid samples contain non-finite values")
        object.__setattr__(self, "values", _freeze(vals))
        if self.deriv is not None:
            der = np.asarray(self.deriv)
            if der.shape != vals.shape:
                raise DimensionMismatchError("derivative samples must match the value samples")
            if not np.all(np.isfinite(der)):
                raise InvalidInputError("derivative samples contain non-finite values")
            object.__setattr__(self, "deriv", _freeze(der))

    # -- shape ------------------------------------------------------------
    @property
    def N(self) -> int:
        return self.values.shape[0] - 1

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    @property
    def kind(self) -> str:
        return _KIND_BY_NDIM[self.values.ndim]

    @property
    def dim(self) -> int:
        return 1 if self.kind == "scalar" else self.values.shape[1]

    @property
    def has_deriv(self) -> bool:
        return self.deriv is not None

    # -- construction -----------------------------------------------------
    @classmethod
    def from_function(cls, func: Callable, N: int = DEFAULT_N, dfunc: Callable | None = None) -> "GridFn":
        t = np.linspace(0.0, 1.0, N + 1)
        vals = np.stack([np.asarray(func(x)) for x in t])
        der = None if dfunc is None else np.stack([np.asarray(dfunc(x)) for x in t])
        return cls(vals, der)

    @classmethod
    def constant(cls, value, N: int = DEFAULT_N) -> "GridFn":
        value = np.asarray(value)
        vals = np.broadcast_to(value, (N + 1,) + value.shape)
        return cls(vals, np.zeros_like(vals))

    # -- arithmetic -------------------------------------------------------
    def _check(self, other: "GridFn"):
        if other.values.shape != self.values.shape:
            raise DimensionMismatchError(f"{self.values.shape} vs {other.values.shape}")

    def __add__(self, other):
        if isinstance(other, GridFn):
            self._check(other)
            der = self.deriv + other.deriv if self.has_deriv and other.has_deriv else None
            return GridFn(self.values + other.values, der)
        return GridFn(self.values + other, self.deriv)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return GridFn(-self.values, None if self.deriv is None else -self.deriv)

    def __mul__(self, c):
        c = complex(c) if np.iscomplexobj(c) else float(c)
        return GridFn(self.values * c, None if self.deriv is None else self.deriv * c)

    __rmul__ = __mul__

    def without_deriv(self) -> "GridFn":
        return GridFn(self.values)


def scalar_times(s: GridFn, f: GridFn) -> GridFn:
    """Pointwise product of a scalar grid function with any grid function."""
    expand = (slice(None),) + (None,) * (f.values.ndim - 1)
    vals = s.values[expand] * f.values
    der = None
    if s.has_deriv and f.has_deriv:
        der = s.deriv[expand] * f.values + s.values[expand] * f.deriv
    return GridFn(vals, der)


def matmul(F: GridFn, G: GridFn) -> GridFn:
    """Pointwise matrix product (``G`` may be matrix or vector valued)."""
    if F.kind != "matrix":
        raise InvalidInputError("left factor must be matrix valued")
    if G.kind == "matrix":
        vals = F.values @ G.values
        der = F.deriv @ G.values + F.values @ G.deriv if F.has_deriv and G.has_deriv else None
    else:
        vals = np.einsum("nab,nb->na", F.values, G.values)
        der = None
        if F.has_deriv and G.has_deriv:
            der = np.einsum("nab,nb->na", F.deriv, G.values) + np.einsum("nab,nb->na", F.values, G.deriv)
    return GridFn(vals, der)


# ---------------------------------------------------------------------------
# norms and quadrature
# ---------------------------------------------------------------------------


def pointwise_norm(values: np.ndarray) -> np.ndarray:
    """Absolute value, Euclidean norm or spectral norm at every node."""
    values = np.asarray(values)
    if values.ndim == 1:
        return np.abs(values)
    if values.ndim == 2:
        return linalg.vec_norm(values)
    return linalg.op_norm(values)


def _trapezoid(values: np.ndarray, h: float):
    return h * (0.5 * values[0] + values[1:-1].sum(axis=0) + 0.5 * values[-1])


def norm_c(f: GridFn) -> float:
    return float(np.max(pointwise_norm(f.values)))


def norm_l1(f: GridFn) -> float:
    return float(_trapezoid(pointwise_norm(f.values), f.h))


def integrate(f: GridFn):
    return _trapezoid(f.values, f.h)


def cumulative_integral(f: GridFn) -> np.ndarray:
    """Running integral from 0 to every node.

    With derivative samples the end-corrected trapezoid rule is used (exact
    for cubics); otherwise the plain trapezoid rule.
    """
    h = f.h
    cells = 0.5 * h * (f.values[:-1] + f.values[1:])
    if f.has_deriv:
        cells = cells + h * h / 12.0 * (f.deriv[:-1] - f.deriv[1:])
    out = np.zeros_like(f.values, dtype=np.result_type(cells, np.float64))
    out[1:] = np.cumsum(cells, axis=0)
    return out


def derivative(f: GridFn) -> GridFn:
    """Second-order finite differences: central inside, one-sided at the ends."""
    v = f.values
    h = f.h
    d = np.empty_like(v, dtype=np.result_type(v, np.float64))
    d[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    d[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    d[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return GridFn(d)


def deriv_samples(f: GridFn) -> tuple[np.ndarray, bool]:
    """Derivative samples and whether they came from finite differences."""
    if f.has_deriv:
        return f.deriv, False
    return derivative(f).values, True


def norm_w11(f: GridFn) -> float:
    der, _ = deriv_samples(f)
    return norm_l1(f) + float(_trapezoid(pointwise_norm(der), f.h))


@dataclass(frozen=True)
class NormReport:
    c_norm: float
    l1_norm: float
    w11_norm: float
    deriv_from_differences: bool


def norm_report(f: GridFn) -> NormReport:
    der, fd = deriv_samples(f)
    l1 = norm_l1(f)
    return NormReport(norm_c(f), l1, l1 + float(_trapezoid(pointwise_norm(der), f.h)), fd)


# ---------------------------------------------------------------------------
# interpolation between nodes (used by the integrators)
# ---------------------------------------------------------------------------


def _lagrange_weights(offsets: np.ndarray, theta: np.ndarray) -> np.ndarray:
    w = np.ones(theta.shape + (4,))
    for i in range(4):
        for m in range(4):
            if m != i:
                w[..., i] *= (theta - offsets[m]) / (offsets[i] - offsets[m])
    return w


def substep_values(f: GridFn, s: int) -> np.ndarray:
    """Values at ``t_j + i h / (2 s)``, ``i = 0..2s``, for every interval ``j``.

    Cubic Hermite interpolation when derivative samples exist, otherwise the
    four-point Lagrange cubic through neighbouring nodes.  Returns an array
    of shape ``(N, 2 s + 1) + value_shape``.
    """
    N, h = f.N, f.h
    theta = np.arange(2 * s + 1) / (2 * s)
    v = f.values
    tail = (None,) * (v.ndim - 1)
    if f.has_deriv:
        th = theta[None, :]
        h00 = 2 * th**3 - 3 * th**2 + 1
        h10 = th**3 - 2 * th**2 + th
        h01 = -2 * th**3 + 3 * th**2
        h11 = th**3 - th**2
        d = f.deriv
        out = (h00[(...,) + tail] * v[:-1, None] + h10[(...,) + tail] * h * d[:-1, None]
               + h01[(...,) + tail] * v[1:, None] + h11[(...,) + tail] * h * d[1:, None])
        return out
    j = np.arange(N)
    start = np.clip(j - 1, 0, N - 3)
    idx = start[:, None] + np.arange(4)[None, :]
    offs = idx - j[:, None]
    weights = np.empty((N, 2 * s + 1, 4))
    for o in np.unique(offs, axis=0):
        rows = np.all(offs == o, axis=1)
        weights[rows] = _lagrange_weights(o.astype(float), theta)
    nodes = v[idx]  # (N, 4, ...)
    return np.einsum("nik,nk...->ni...", weights, nodes)


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------


def _antiderivatives(vals: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    delta = vals[1:] - vals[:-1]
    f1 = np.zeros_like(vals)
    f1[1:] = np.cumsum(h * (vals[:-1] + 0.5 * delta), axis=0)
    f2 = np.zeros_like(vals)
    f2[1:] = np.cumsum(h * f1[:-1] + h * h * (0.5 * vals[:-1] + delta / 6.0), axis=0)
    return f1, f2


def _eval_antiderivatives(vals, f1, f2, h, x):
    """F1 and F2 of the piecewise-linear interpolant at positions ``x`` (grid units)."""
    q = np.clip(np.floor(x).astype(int), 0, len(vals) - 2)
    th = x - q
    tail = (slice(None),) + (None,) * (vals.ndim - 1)
    th = th[tail]
    fq = vals[q]
    dq = vals[q + 1] - fq
    F1 = f1[q] + h * (th * fq + 0.5 * th**2 * dq)
    F2 = f2[q] + h * th * f1[q] + h * h * (0.5 * th**2 * fq + th**3 / 6.0 * dq)
    return F1, F2


def mollify(f: GridFn, width: float, vanish_at_ends: bool = False) -> GridFn:
    """Convolve with the hat kernel supported on ``[-width, width]``.

    The convolution is exact for the piecewise-linear interpolant of the
    samples, extended to the left and right by even reflection, so constants
    are preserved.  Derivative samples come from the kernel formula.  With
    ``vanish_at_ends`` the result is multiplied by a C^1 cutoff equal to 0
    at both ends and 1 on ``[width, 1 - width]``.
    """
    if not (0.0 < width < 0.25):
        raise InvalidParameterError(f"mollifier width must lie in (0, 1/4), got {width}")
    N, h = f.N, f.h
    pad = int(np.ceil(width * N)) + 2
    v = f.values
    left = v[1 : pad + 1][::-1]
    right = v[-pad - 1 : -1][::-1]
    ext = np.concatenate([left, v, right], axis=0)
    f1, f2 = _antiderivatives(ext, h)
    centre = np.arange(N + 1) + pad
    wg = width / h
    F1p, F2p = _eval_antiderivatives(ext, f1, f2, h, centre + wg)
    F1m, F2m = _eval_antiderivatives(ext, f1, f2, h, centre - wg)
    F10, F20 = f1[centre], f2[centre]
    out = (F2p - 2 * F20 + F2m) / width**2
    dout = (F1p - 2 * F10 + F1m) / width**2
    if vanish_at_ends:
        t = f.t
        chi = np.ones_like(t)
        dchi = np.zeros_like(t)
        for s, sign in ((t / width, 1.0), ((1.0 - t) / width, -1.0)):
            inside = s < 1.0
            chi[inside] = 3 * s[inside] ** 2 - 2 * s[inside] ** 3
            dchi[inside] = sign * (6 * s[inside] - 6 * s[inside] ** 2) / width
        tail = (slice(None),) + (None,) * (v.ndim - 1)
        dout = dout * chi[tail] + out * dchi[tail]
        out = out * chi[tail]
    return GridFn(out, dout)
