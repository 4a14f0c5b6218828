"""The twelve acceptance checks, shared by the test-suite and ``asymdiag selftest``.

Every check is seeded and returns a :class:`CriterionResult`; ``metric`` is
the measured quantity compared against ``threshold`` (smaller is better
unless the description says otherwise).  The ``quick`` profile shrinks the
random sample counts; it is what the determinism check runs twice.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import asympt, bvp, companion, frame, linalg, samples
from .gridfn import GridFn, norm_c

SEED = 20240607
SLACK = 0.05


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    metric: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"criterion {self.number:2d} {status}  {self.name}: metric={self.metric:.6g} "
                f"threshold={self.threshold:.6g} ({self.seconds:.1f}s) {self.detail}").rstrip()


def pmap(fn, items, threads: int = 1):
    """Ordered map, optionally on a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _count(profile: str, full: int, quick: int) -> int:
    return full if profile == "full" else quick


# ---------------------------------------------------------------------------


def criterion_1(profile="full", threads=1) -> CriterionResult:
    rng = np.random.default_rng(SEED + 1)
    frames = [samples.random_frame(rng) for _ in range(_count(profile, 100, 10))]
    worst_ratio, worst_end, worst_sum, ok = 0.0, 0.0, 0.0, True
    for fr in frames:
        b = frame.build_transformer(fr, slack=SLACK)
        ok &= b.report.holds
        worst_ratio = max([worst_ratio] + [c.ratio for c in b.report.checks.values()])
        eye = np.eye(fr.dim)
        worst_end = max(worst_end, np.max(np.abs(b.S.values[0] - eye)), np.max(np.abs(b.S.values[-1] - eye)))
        Qb, _ = frame._block_projectors(fr, frame.DEFAULT_NC)
        worst_sum = max(worst_sum, float(np.max(np.abs(Qb.sum(axis=1) - eye))))
    passed = bool(ok and worst_end <= 1e-9 and worst_sum <= 1e-8 and worst_ratio <= 1 + SLACK)
    return CriterionResult(1, "transformer bounds", passed, worst_ratio, 1 + SLACK,
                           f"frames={len(frames)} |S-1|_ends={worst_end:.1e} |sum Q-1|={worst_sum:.1e}")


def criterion_2(profile="full", threads=1) -> CriterionResult:
    rng = np.random.default_rng(SEED + 2)
    worst = 0.0
    n = _count(profile, 50, 5)
    for _ in range(n):
        fr = samples.random_frame(rng)
        A = samples.smooth_matrix(rng, fr.N, fr.dim, scale=rng.uniform(0.1, 10.0)).fn
        b = frame.build_transformer(fr)
        rep = frame.conjugation_estimate(fr, b, A, slack=SLACK)
        worst = max(worst, rep.lhs / rep.rhs)
    return CriterionResult(2, "conjugation estimate", worst <= 1 + SLACK, worst, 1 + SLACK, f"pairs={n}")


def criterion_3(profile="full", threads=1) -> CriterionResult:
    rng = np.random.default_rng(SEED + 3)
    n = _count(profile, 50, 5)
    gap = fac = bnd = 0.0
    for _ in range(n):
        inst = samples.random_contraction(rng)
        res = bvp.solve_contraction(inst.A, inst.V, inst.problem, inst.params)
        oracle = bvp.solve_direct(inst.problem)
        th = inst.params.theta
        gap = max(gap, float(np.max(linalg.vec_norm(res.x.values - oracle.values))))
        fac = max(fac, res.contraction_factor / th)
        bnd = max(bnd, norm_c(res.x - res.x0) / (th / (1 - th) * norm_c(res.x0)))
    passed = gap <= 1e-8 and fac <= 1 + SLACK and bnd <= 1 + SLACK
    return CriterionResult(3, "contraction vs direct solve", passed, gap, 1e-8,
                           f"instances={n} factor/theta={fac:.3f} gap/bound={bnd:.3f}")


def brute_force_excess(F: np.ndarray) -> float:
    """``max_{a <= b} F[b] - F[a]`` over all node pairs."""
    diff = F[None, :] - F[:, None]
    return float(np.max(np.triu(diff)))


def criterion_4(profile="full", threads=1) -> CriterionResult:
    rng = np.random.default_rng(SEED + 4)
    N, n = 256, _count(profile, 20, 5)
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 5))
        A = samples.smooth_matrix(rng, N, d, scale=rng.uniform(1, 10)).fn
        P = np.diag(rng.integers(0, 2, size=d).astype(float))
        _, got = bvp.check_dichotomy(A, P, 0.5)
        J = 2 * P - np.eye(d)
        H = J @ A.values
        w = np.linalg.eigvalsh(0.5 * (H + np.conj(np.swapaxes(H, 1, 2))))[:, -1]
        F = np.concatenate([[0.0], np.cumsum(0.5 * (w[:-1] + w[1:]) / N)])
        worst = max(worst, abs(got - brute_force_excess(F)))
    return CriterionResult(4, "dichotomy scan", worst <= 1e-12, worst, 1e-12, f"profiles={n} N={N}")


def criterion_5(profile="full", threads=1) -> CriterionResult:
    rng = np.random.default_rng(SEED + 5)
    n = _count(profile, 20, 5)
    worst = 0.0
    for _ in range(n):
        sm = samples.smooth_matrix(rng, 1024, int(rng.integers(2, 5)), scale=rng.uniform(1, 20))
        M = bvp.fundamental_matrix(sm.fn)
        exact = np.exp(sm.trace_integral)
        worst = max(worst, abs(np.linalg.det(M.values[-1]) - exact) / abs(exact))
    return CriterionResult(5, "Liouville identity", worst <= 1e-7, worst, 1e-7, f"matrices={n}")


def criterion_6(profile="full", threads=1) -> CriterionResult:
    rng = np.random.default_rng(SEED + 6)
    worst = 0.0
    for n in (2, 3, 4):
        spec = companion.CompanionSpec(n, [samples.random_positive_expr(rng) for _ in range(n)], N=256)
        for _ in range(5):
            lam = rng.uniform(1, 100) * np.exp(2j * math.pi * rng.uniform())
            S, S_inv = companion.build_S_lambda(spec, lam)
            D0 = companion.build_D0(spec, lam).values
            A = companion.build_A_lambda(spec, lam).values
            r = linalg.op_norm(S_inv.values @ D0 @ S.values - A) / linalg.op_norm(D0)
            worst = max(worst, float(np.max(r)))
    return CriterionResult(6, "exact Vandermonde conjugation", worst <= 1e-10, worst, 1e-10, "n=2,3,4")


def _fd4(values: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central differences at nodes 2..N-2."""
    v = values
    return (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)


def criterion_7(profile="full", threads=1) -> CriterionResult:
    rng = np.random.default_rng(SEED + 7)
    match = indep = 0.0
    for n in (2, 3, 4):
        spec = companion.CompanionSpec(n, [samples.random_positive_expr(rng) for _ in range(n)], N=1024)
        closed = companion.diag_correction(spec).values[2:-2]
        diags = []
        for lam in (7.0 + 3.0j, -40.0j):
            S, S_inv = companion.build_S_lambda(spec, lam)
            dS = _fd4(S.values, 1.0 / spec.N)
            M = S_inv.values[2:-2] @ dS
            dg = np.diagonal(M, axis1=1, axis2=2)
            diags.append(dg)
            match = max(match, float(np.max(np.abs(dg - closed[:, None]))))
        indep = max(indep, float(np.max(np.abs(diags[0] - diags[1]))))
    passed = match <= 1e-6 and indep <= 1e-8
    return CriterionResult(7, "diagonal correction", passed, match, 1e-6, f"lambda spread={indep:.1e}")


def criterion_8_specs():
    return [
        companion.CompanionSpec(2, ["1 + t^2/2", "exp(0.5*t)"], 0.7 - 0.2j,
                                {(1, 1): "cos(2*t)", (2, 2): "0.5*t", (2, 1): "sin(3*t)"}, N=1024),
        companion.CompanionSpec(3, ["1 + 0.3*sin(2*t)", "2 - t", "exp(t/3)"], 0.4 + 0.1j,
                                {(1, 1): "t", (2, 2): "cos(t)", (3, 3): "0.2", (2, 1): "t^2",
                                 (3, 2): "sin(t)", (3, 1): "0.3*cos(2*t)"}, N=1024),
    ]


def criterion_8(profile="full", threads=1) -> CriterionResult:
    mags = (10, 20, 40, 80, 160)
    worst = 0.0
    for spec in criterion_8_specs():
        sec = companion.sector_permutation(spec.n, 1)
        vals = pmap(lambda m: m * companion.residual_check(spec, m * sec.direction), mags, threads)
        worst = max(worst, max(vals) / min(vals))
    return CriterionResult(8, "O(1/lambda) residual", worst <= 3.0, worst, 3.0, "band max/min over 10..160")


# -- asymptotic decay --------------------------------------------------------

DECAY_MAGS = (10.0, 20.0, 40.0, 80.0)


def decay_family() -> asympt.ParamFamily:
    N = 1024
    t = np.linspace(0.0, 1.0, N + 1)
    off = np.array([[0.0, 1.0], [1.0, 0.0]])
    V = GridFn(np.broadcast_to(0.5 * off, (N + 1, 2, 2)).astype(complex), np.zeros((N + 1, 2, 2), complex))
    h = (GridFn(-1 + 0 * t, 0 * t), GridFn(1 + 0 * t, 0 * t))
    return asympt.ParamFamily(((0,), (1,)), h, V, 1.0, DECAY_MAGS)


def decay_family_varying() -> asympt.ParamFamily:
    """Three blocks with nonconstant profiles and a smooth full perturbation."""
    N = 1024
    t = np.linspace(0.0, 1.0, N + 1)
    w = 2 * math.pi
    h = (GridFn(-2 + 0.3 * np.sin(w * t), 0.3 * w * np.cos(w * t)),
         GridFn(0.2 * t + 0j, 0.2 + 0 * t + 0j),
         GridFn(1.5 + 0.4 * np.cos(w * t) + 0.3j, -0.4 * w * np.sin(w * t) + 0j))
    rng = np.random.default_rng(SEED + 9)
    V = samples.smooth_matrix(rng, N, 3, scale=1.0).fn
    return asympt.ParamFamily(((0,), (1,), (2,)), h, V, 1.0, DECAY_MAGS)


def decay_companion_spec() -> companion.CompanionSpec:
    return companion.CompanionSpec(2, ["1 + t^2/2", "1"], 0.3, {(1, 1): "cos(2*3.141592653589793*t)"}, N=1024)


@lru_cache(maxsize=None)
def _family_sweeps(threads: int = 1):
    out = {}
    for name, fam_fn, ks in (("family2", decay_family, (0, 1)), ("family3", decay_family_varying, (0, 1, 2))):
        fam = fam_fn()
        for k in ks:
            xi = np.zeros(fam.dim)
            xi[fam.blocks[k][0]] = 1.0
            for side in asympt.SIDES:
                rows = pmap(lambda i: asympt.sweep_row(fam, i, k, xi, side), range(len(fam.magnitudes)), threads)
                out[(name, k, side)] = rows
    return out


def _decay_ok(errs) -> tuple[bool, float]:
    ratios = [b / a for a, b in zip(errs, errs[1:])]
    worst = max(ratios)
    return worst <= 0.7, worst


def criterion_9(profile="full", threads=1) -> CriterionResult:
    worst = 0.0
    fails = []
    for key, rows in _family_sweeps(threads).items():
        ok, r = _decay_ok([row.rel_sup_error for row in rows])
        worst = max(worst, r)
        if not ok:
            fails.append(str(key))
    spec = decay_companion_spec()
    sec = companion.sector_permutation(2, 1)
    for k in (1, 2):
        for side in ("left", "right"):
            errs = pmap(lambda m: companion.compare_at(spec, sec, m, k, side)[0], DECAY_MAGS, threads)
            ok, r = _decay_ok(errs)
            worst = max(worst, r)
            if not ok:
                fails.append(f"companion k={k} {side}")
    detail = "all sequences decay" if not fails else "failing: " + ", ".join(fails)
    return CriterionResult(9, "asymptotic decay", not fails, worst, 0.7, detail)


def criterion_10(profile="full", threads=1) -> CriterionResult:
    worst = 0.0
    for rows in _family_sweeps(threads).values():
        for row in rows[-2:]:
            worst = max(worst, row.actual_gap / row.refined_bound)
    return CriterionResult(10, "refined bound dominates", worst <= 1.0, worst, 1.0, "gap / bound, two largest magnitudes")


def criterion_11(profile="full", threads=1) -> CriterionResult:
    spec = companion.CompanionSpec(2, ["1", "1"], 0.0, {}, N=1024)
    sec = companion.sector_permutation(2, 1)
    lam = 50.0 * sec.direction
    t = np.linspace(0.0, 1.0, spec.N + 1)
    analytic = 0.0
    for k, sign in ((1, -1.0), (2, 1.0)):
        y = companion.birkhoff_solution(spec, lam, k, sec).y.values[:, k - 1]
        exact = np.exp(sign * lam * t)
        analytic = max(analytic, float(np.max(np.abs(y - exact) / np.abs(exact))))
    worst = 0.0
    for k in (1, 2):
        for side in ("left", "right"):
            worst = max(worst, companion.compare_at(spec, sec, 50.0, k, side)[0])
    passed = worst <= 1e-6 and analytic <= 1e-9
    return CriterionResult(11, "exactly solvable companion case", passed, worst, 1e-6,
                           f"Birkhoff vs exp: {analytic:.1e}")


def criterion_12(profile="full", threads=1) -> CriterionResult:
    from .cli import selftest_csv

    first = selftest_csv("quick", threads=1)
    second = selftest_csv("quick", threads=2)
    same = first == second
    return CriterionResult(12, "deterministic self-test output", same, 0.0 if same else 1.0, 0.0,
                           f"{len(first.encode())} bytes compared")


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11, 12: criterion_12,
}


def run(number: int, profile: str = "full", threads: int = 1) -> CriterionResult:
    start = time.perf_counter()
    res = CRITERIA[number](profile, threads)
    res.seconds = time.perf_counter() - start
    return res
