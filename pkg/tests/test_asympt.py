import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asymdiag import asympt, frame, kernels
from asymdiag.asympt import FrameBudget, ParamFamily
from asymdiag.errors import InvalidInputError, MagnitudeTooSmallError, SeparationError
from asymdiag.gridfn import GridFn, norm_c

N = 512


def const(v, n=N):
    return GridFn.constant(complex(v), n)


def offdiag(c, dim=2, n=N):
    M = np.full((dim, dim), c, dtype=complex)
    np.fill_diagonal(M, 0)
    return GridFn.constant(M, n)


def family(h, V, direction=1.0, mags=(10, 20, 40, 80), blocks=None):
    blocks = blocks or [[i] for i in range(len(h))]
    return ParamFamily(blocks, [x if isinstance(x, GridFn) else const(x, V.N) for x in h], V, direction, mags)


def smooth_profile(c, a, f, n=N):
    t = np.linspace(0, 1, n + 1)
    return GridFn(c + a * np.sin(f * t), a * f * np.cos(f * t))


def test_family_validation():
    with pytest.raises(SeparationError):
        family([0, 0.5], offdiag(0.1))
    with pytest.raises(ValueError):
        family([0, 1], offdiag(0.1), mags=(10, 5))
    with pytest.raises(InvalidInputError):
        ParamFamily([[0], [0]], [const(0), const(1)], offdiag(0.1))


def test_assemble_examples(rng):
    fam = family([0, 2], offdiag(0.0))
    A = asympt.assemble(fam, 1)
    assert np.allclose(A.values, np.diag([0, 40]))
    assert np.array_equal(asympt.diagonal_model(fam, 1).values, A.values)
    fam = family([0, 1], offdiag(0.7))
    assert np.allclose(asympt.diagonal_model(fam, 0).values, np.diag([0, 10]))


def test_delta_idempotent_and_shift(rng):
    t = np.linspace(0, 1, N + 1)
    V = GridFn(np.einsum("t,ab->tab", np.cos(t), rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))))
    fam = family([smooth_profile(0, 0.2, 3), smooth_profile(2, 0.3, 2), smooth_profile(4, 0.1, 5)], V,
                 blocks=[[0, 3], [1], [2]])
    for k in range(3):
        part = fam.partition(k)
        A = asympt.assemble(fam, 2)
        D = frame.delta_pi(part, A)
        assert np.array_equal(frame.delta_pi(part, D).values, D.values)
        shifted = asympt.assemble_shifted(fam, 2, k)
        expected = asympt.diagonal_model(fam, 2, k).values - fam.d(2) * fam.h[k].values[:, None, None] * np.eye(4)
        assert np.allclose(frame.delta_pi(part, shifted).values, expected, atol=1e-12, rtol=0)


def test_conditions_sign_bookkeeping():
    fam = family([0, 1], offdiag(0.1), direction=-1.0)
    assert not asympt.check_conditions(fam, 0.5).holds
    assert asympt.check_conditions(fam.sorted_blocks(), 0.5).holds
    fam = family([0, 1j], offdiag(0.1))
    rep = asympt.check_conditions(fam, 0.5)
    assert rep.holds and all(p.worst == 0 for ps in rep.pairs.values() for p in ps)


@pytest.mark.parametrize("seed", range(3))
def test_conditions_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = 128
    h = [smooth_profile(2.5 * j, rng.uniform(0, 0.7), rng.uniform(1, 9), n) for j in range(3)]
    fam = family(h, offdiag(0.1, 3, n), direction=np.exp(0.3j), mags=(5, 10))
    rep = asympt.check_conditions(fam, 0.5)
    for nu, rows in rep.pairs.items():
        for p in rows:
            g = (fam.d(nu) * (h[p.k].values - h[p.l].values)).real
            F = np.concatenate([[0.0], np.cumsum(0.5 / n * (g[1:] + g[:-1]))])
            brute = max(F[b] - F[a] for b in range(n + 1) for a in range(b + 1))
            assert p.worst == pytest.approx(brute, abs=1e-12)


def test_frame_constant_profiles():
    fam = family([-1, 0, 1], offdiag(0.0, 3))
    fr = asympt.build_frame_for_index(fam, 2, 1)
    assert norm_c(fr.frame.C) == 0
    d = fam.d(2)
    for a, hl in zip(fr.frame.B.atoms, (-1, 0, 1)):
        assert np.allclose(a.beta.values, d * hl)
    assert fr.frame.d_atom == pytest.approx(abs(d))


def test_frame_smooth_profiles_pass_bounds():
    t = np.linspace(0, 1, N + 1)
    V = GridFn(np.einsum("t,ab->tab", 0.4 + 0.3 * np.sin(5 * t), np.array([[0.2, 1], [0.5j, -0.3]])))
    fam = family([smooth_profile(0, 0.3, 4), smooth_profile(2, 0.2, 7)], V, mags=(50,))
    for k in (0, 1):
        fr = asympt.build_frame_for_index(fam, 0, k)
        bundle = frame.build_transformer(fr.frame)
        assert bundle.report.holds
        rep = asympt.transformed_perturbation(fr, bundle)
        assert rep.holds and rep.size <= rep.bound * 1.05
        assert fr.frame.d_atom >= 50 / 2 * 0.95


def test_frame_magnitude_too_small():
    fam = family([0, 1], offdiag(3.0), mags=(1,))
    with pytest.raises(MagnitudeTooSmallError) as info:
        asympt.build_frame_for_index(fam, 0, 0)
    need = info.value.min_magnitude
    ok = family([0, 1], offdiag(3.0), mags=(need * 1.01,))
    asympt.build_frame_for_index(ok, 0, 0)


def test_frame_width_halving_and_failure():
    t = np.linspace(0, 1, N + 1)
    # a fast unit circle: smoothing of width w scales it by sinc(10 w)^2, about 0.21 at w = 0.2
    circle = GridFn(np.exp(20j * t), 20j * np.exp(20j * t))
    fam = family([0, circle], offdiag(0.0))
    fr = asympt.build_frame_for_index(fam, 3, 0, FrameBudget(width_h=0.2))
    assert fr.width_h == pytest.approx(0.1)
    assert fr.measures["separation"] >= 0.5
    # a +-1 square wave keeps distance 1 from 0 at the nodes; on a grid finer than the
    # smallest admissible width every smoothing of a jump crosses 0 at some node
    n = 4096
    tf = np.linspace(0, 1, n + 1)
    square = GridFn(np.where(np.floor(16 * tf) % 2 == 0, 1.0, -1.0))
    with pytest.raises(SeparationError):
        asympt.build_frame_for_index(family([const(0, n), square], offdiag(0.0, 2, n)), 0, 0)


def test_compare_without_perturbation():
    fam = family([-1, 1], offdiag(0.0))
    for side in asympt.SIDES:
        for k, xi in ((0, [1, 0]), (1, [0, 1])):
            assert asympt.asymptotic_compare(fam, 3, k, xi, side).rel_sup_error <= 1e-8
            assert asympt.refine(fam, 3, k, xi, side).actual_gap <= 1e-8


@pytest.mark.parametrize("side", asympt.SIDES)
def test_decay_two_blocks(side):
    fam = family([-1, 1], offdiag(0.5), mags=(10, 20, 40, 80))
    for k, xi in ((0, [1, 0]), (1, [0, 1])):
        errs = [asympt.asymptotic_compare(fam, nu, k, xi, side).rel_sup_error for nu in range(4)]
        assert all(b < a for a, b in zip(errs, errs[1:]))
        refs = [asympt.refine(fam, nu, k, xi, side) for nu in range(4)]
        ys = [r.y_norm for r in refs]
        assert all(b < a for a, b in zip(ys, ys[1:]))
        assert refs[-1].holds and refs[-2].holds


def test_xi_validation():
    fam = family([-1, 1], offdiag(0.5))
    with pytest.raises(InvalidInputError):
        asympt.asymptotic_compare(fam, 0, 0, [0, 1])
    with pytest.raises(InvalidInputError):
        asympt.asymptotic_compare(fam, 0, 0, [0, 0])
    with pytest.raises(ValueError):
        asympt.bc_projector(fam, 0, "middle")


def test_bc_projectors():
    fam = family([0, 2, 4], offdiag(0.0, 3))
    assert np.array_equal(asympt.bc_projector(fam, 1, "left"), np.diag([1.0, 1.0, 0.0]))
    assert np.array_equal(asympt.bc_projector(fam, 1, "right"), np.diag([1.0, 0.0, 0.0]))


def test_first_admissible():
    row = lambda m, ok, th: asympt.SweepRow(m, 0, 0, 0, 0, 0, th, ok)
    assert asympt.first_admissible([row(10, False, 0.1), row(20, True, 0.5), row(40, True, 0.2)]) == 20
    assert asympt.first_admissible([row(10, True, 0.1), row(20, True, 2.0), row(40, True, 0.2)]) == 40
    assert asympt.first_admissible([row(10, True, 0.1), row(20, False, 0.5)]) is None


@settings(max_examples=6)
@given(st.integers(0, 2**31), st.sampled_from(asympt.SIDES))
def test_decay_property_random_families(seed, side):
    rng = np.random.default_rng(seed)
    n = 256
    m = int(rng.integers(2, 4))
    h = [smooth_profile(2.0 * j, rng.uniform(0, 0.4), rng.uniform(1, 6), n) for j in range(m)]
    t = np.linspace(0, 1, n + 1)
    X = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    V = GridFn(np.einsum("t,ab->tab", 1 + 0.5 * np.cos(3 * t), 0.3 * X / np.linalg.norm(X, 2)))
    fam = family(h, V, mags=(10, 20, 40, 80))
    k = int(rng.integers(0, m))
    xi = np.eye(m)[k]
    errs = [asympt.asymptotic_compare(fam, nu, k, xi, side).rel_sup_error for nu in range(4)]
    assert errs[-1] < errs[0]
    assert all(b <= a * 1.05 for a, b in zip(errs, errs[1:]))
