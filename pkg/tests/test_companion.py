import cmath
import math

import numpy as np
import pytest

from asymdiag import asympt, companion as cp, linalg
from asymdiag.errors import DomainError, InvalidInputError, InvalidParameterError, SectorError
from asymdiag.gridfn import GridFn

N = 256


def spec(n=2, p=None, zeta=0.0, q=None, N=N):
    return cp.CompanionSpec(n, tuple(p or ["1"] * n), zeta, q or {}, N)


def smooth_spec(n, zeta=0.4 - 0.2j, N=N):
    p = ["1 + t^2/2", "2 - sin(t)", "exp(t/3)", "1.5 + cos(2*t)/4"][:n]
    q = {(1, 1): "cos(6.283185307179586*t)", (n, 1): "t", (n, n): "0.5*sin(3*t)"}
    if n > 2:
        q[(n, n - 1)] = "1 - t"
    return spec(n, p, zeta, q, N)


def test_spec_validation():
    with pytest.raises(DomainError):
        spec(2, ["t - 0.5", "1"])
    with pytest.raises(DomainError):
        spec(2, ["(1, 1)", "1"])
    with pytest.raises(InvalidInputError):
        spec(2, ["1", "1"], q={(1, 2): "1"})
    with pytest.raises(InvalidInputError):
        spec(3, ["1", "1"])
    with pytest.raises(InvalidParameterError):
        cp.build_D(spec(), 0)


def test_D_examples():
    lam = 3 - 2j
    D = cp.build_D(spec(), lam).values
    assert np.allclose(D, [[0, 1], [lam**2, 0]])
    assert np.allclose(cp.build_D0(spec(), lam).values, D)
    c = 0.7
    s = spec(2, zeta=1.0, q={(2, 1): str(c)})
    diff = cp.build_D(s, lam).values - cp.build_D0(s, lam).values
    expected = np.zeros((2, 2), dtype=complex)
    expected[1, 0] = 2 * lam + 1 - c
    assert np.allclose(diff, expected)


def test_D_band_structure():
    s = spec(3, ["1 + t", "2", "exp(t)"], 0.3, {(k, l): f"{k}*t + {l}" for k in range(1, 4) for l in range(1, k + 1)})
    lam = 5j
    diff = cp.build_D(s, lam).values - cp.build_D0(s, lam).values
    for k in range(1, 4):
        for l in range(1, 4):
            inside = (k + 1 - 3 < l <= k) or (k == 3 and l == 1)
            if not inside:
                assert np.all(diff[:, k - 1, l - 1] == 0), (k, l)
    # (1,1) lies in the band for n = 3 and carries -q_11, (2,1) does not
    assert np.allclose(diff[:, 0, 0], -(np.linspace(0, 1, N + 1) + 1))
    D = cp.build_D(s, lam)
    fd = (D.values[2:] - D.values[:-2]) * N / 2
    assert np.max(np.abs(fd - D.deriv[1:-1])) <= 1e-3 * np.max(np.abs(D.deriv))


def test_amplitude_profile():
    assert np.allclose(cp.amplitude_profile(spec()).values, 1)
    assert np.allclose(cp.amplitude_profile(spec(2, ["4", "1"])).values, 2)
    s = smooth_spec(4)
    rho = cp.amplitude_profile(s).values
    prod = np.prod([p.values for p in s.p_grid], axis=0)
    assert np.max(np.abs(rho**4 - prod) / prod) <= 1e-12


def test_S_trivial_case():
    lam = 2 + 1j
    S, _ = cp.build_S_lambda(spec(), lam)
    assert np.allclose(S.values, [[1, 1], [-lam, lam]])
    assert np.allclose(cp.build_A_lambda(spec(), lam).values, np.diag([-lam, lam]))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_exact_conjugation_and_inverse(n, rng):
    s = smooth_spec(n)
    for lam in (7 * cmath.exp(0.4j), -20j, 3.5):
        S, Si = cp.build_S_lambda(s, lam)
        D0 = cp.build_D0(s, lam).values
        A = cp.build_A_lambda(s, lam).values
        nodes = rng.choice(N + 1, 5, replace=False)
        res = linalg.op_norm(Si.values[nodes] @ D0[nodes] @ S.values[nodes] - A[nodes])
        assert np.all(res <= 1e-10 * linalg.op_norm(D0[nodes]))
        eye = np.eye(n)
        assert np.max(np.abs(Si.values @ S.values - eye)) <= 1e-12 * max(1.0, abs(lam)) ** (n - 1)
        Sv = S.values[nodes]
        num = linalg.solve_linear(Sv, np.broadcast_to(eye, Sv.shape))
        assert np.max(np.abs(num - Si.values[nodes])) <= 1e-10


def test_S_derivative_analytic():
    s = smooth_spec(3, N=1024)
    S, _ = cp.build_S_lambda(s, 4j)
    fd = (S.values[2:] - S.values[:-2]) * 1024 / 2
    assert np.max(np.abs(fd - S.deriv[1:-1])) <= 1e-4 * np.max(np.abs(S.deriv))


def test_diag_correction_examples():
    assert np.allclose(cp.diag_correction(spec(3, ["2", "3", "0.5"])).values, 0)
    assert np.allclose(cp.diag_correction(spec(2, ["exp(t)", "1"])).values, -0.25)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_diag_correction_matches_numeric(n):
    Nf = 2048
    s = smooth_spec(n, N=Nf)
    corr = cp.diag_correction(s).values
    diags = []
    for lam in (6 * cmath.exp(0.3j), -25 + 4j):
        S, Si = cp.build_S_lambda(s, lam)
        # fourth-order central differences of the S samples
        v = S.values
        dS = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) * Nf / 12
        M = Si.values[2:-2] @ dS
        dg = np.diagonal(M, axis1=1, axis2=2)
        assert np.max(np.abs(dg - corr[2:-2, None])) <= 1e-6
        diags.append(np.diagonal(Si.values @ S.deriv, axis1=1, axis2=2))
    assert np.max(np.abs(diags[0] - diags[1])) <= 1e-8
    assert np.max(np.abs(diags[0] - corr[:, None])) <= 1e-8


def test_gf_matrices():
    G, F = cp.gf_matrices(2)
    assert np.allclose(G, [[-1, -1], [1, 1]])
    assert np.allclose(F[0], 0.5)
    assert np.allclose(F[1], [[0.5, -0.5], [-0.5, 0.5]])
    for n in range(2, 7):
        G, F = cp.gf_matrices(n)
        for a, Fa in enumerate(F):
            assert np.allclose(Fa @ Fa, Fa, atol=1e-12)
            assert np.allclose(Fa, Fa.conj().T, atol=1e-12)
            assert abs(np.trace(Fa) - 1) <= 1e-12
            for b in range(a + 1, n):
                assert np.allclose(Fa @ F[b], 0, atol=1e-12)
        assert np.allclose(sum(F), np.eye(n), atol=1e-12)


def test_residual_examples():
    assert cp.residual_check(spec(), 15j) <= 1e-10
    s = spec(2, zeta=1.0)
    r20, r40 = cp.residual_check(s, 20j), cp.residual_check(s, 40j)
    assert r40 <= 0.6 * r20


@pytest.mark.parametrize("n", [2, 3])
def test_residual_scaled_band(n):
    s = smooth_spec(n)
    sector = cp.sector_permutation(n, 1)
    vals = [m * cp.residual_check(s, m * sector.direction) for m in (10, 20, 40, 80, 160)]
    assert max(vals) <= 3 * min(vals)


def test_sector_examples():
    assert cp.sector_permutation(2, 1).tau == (1, 2)
    assert cp.sector_permutation(2, 3).tau == (2, 1)
    sec = cp.sector_permutation(3, 2)
    assert sec.contains(cmath.exp(1j * sec.midpoint_arg))
    assert not sec.contains(1.0)
    with pytest.raises(InvalidParameterError):
        cp.sector_permutation(2, 5)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_sectors_satisfy_family_conditions(n):
    for m in range(1, 2 * n + 1):
        sec = cp.sector_permutation(n, m)
        h = [GridFn.constant(cmath.exp(2j * math.pi * k / n), 64) for k in sec.tau]
        fam = asympt.ParamFamily([[i] for i in range(n)], h, GridFn.constant(np.zeros((n, n)), 64),
                                 sec.direction, (10.0, 20.0))
        gaps = [(sec.direction * (h[j + 1].values[0] - h[j].values[0])).real for j in range(n - 1)]
        assert min(gaps) > 0
        assert asympt.check_conditions(fam, math.exp(-min(gaps))).holds


def test_birkhoff_trivial():
    s = spec()
    sec = cp.sector_permutation(2, 1)
    lam = 3 * sec.direction
    t = np.linspace(0, 1, N + 1)
    for k, sign in ((2, 1), (1, -1)):
        y = cp.birkhoff_solution(s, lam, k, sec).y.values
        expected = np.zeros((N + 1, 2), dtype=complex)
        expected[:, k - 1] = np.exp(sign * lam * t)
        assert np.max(np.abs(y - expected)) <= 1e-12 * np.max(np.abs(expected))


def test_birkhoff_exponential_profiles():
    s = spec(2, ["exp(t)", "exp(t)"], N=1024)
    sec = cp.sector_permutation(2, 1)
    lam = 5 * sec.direction
    t = np.linspace(0, 1, 1025)
    for k, sign in ((2, 1), (1, -1)):
        y = cp.birkhoff_solution(s, lam, k, sec).y.values[:, k - 1]
        exact = np.exp(sign * lam * (np.exp(t) - 1))
        assert np.max(np.abs(y - exact) / np.abs(exact)) <= 1e-8


def test_birkhoff_errors():
    sec = cp.sector_permutation(2, 1)
    with pytest.raises(SectorError):
        cp.birkhoff_solution(spec(), -3.0, 1, sec)
    with pytest.raises(InvalidParameterError):
        cp.birkhoff_solution(spec(), sec.direction, 3, sec)
    with pytest.raises(InvalidParameterError):
        cp.compare_at(spec(), sec, 10, 1, side="middle")


@pytest.mark.parametrize("side", ["left", "right"])
def test_verify_trivial(side):
    s = spec(N=512)
    sec = cp.sector_permutation(2, 1)
    for k in (1, 2):
        for row in cp.verify_asymptotics(s, sec, [10, 20], k, side):
            assert row.rel_sup_error <= 1e-6
            assert row.scaled_residual <= 1e-8


def test_verify_decay_example():
    s = cp.CompanionSpec(2, ("1 + t^2/2", "1"), 0.3, {(1, 1): "cos(2*3.141592653589793*t)"}, 1024)
    sec = cp.sector_permutation(2, 1)
    rows = cp.verify_asymptotics(s, sec, [10, 20, 40, 80], 1, "left")
    errs = [r.rel_sup_error for r in rows]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert all(b <= 0.7 * a for a, b in zip(errs, errs[1:]))
