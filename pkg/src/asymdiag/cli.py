"""Command line entry point: ``asymdiag <command> --config <file> [--out DIR] [--threads K] [--strict]``.

Commands ``bvp``, ``frame``, ``family``, ``companion`` and ``selftest`` each
write one CSV file (``<command>.csv``) into the output directory.  Exit
codes: 0 ok, 2 configuration error, 3 numeric precondition failure, 4 bound
violation under ``--strict`` (and any failed self-test criterion).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import acceptance, asympt, bvp, companion, exprparse, frame, linalg, samples
from .errors import (
    AsymDiagError,
    BoundViolation,
    ConfigError,
    DimensionMismatchError,
    DomainError,
    InvalidInputError,
    InvalidParameterError,
)
from .gridfn import GridFn, norm_c

log = logging.getLogger("asymdiag")

COMMANDS = ("bvp", "frame", "family", "companion", "selftest")


@dataclass
class RunConfig:
    command: str
    N: int = 1024
    nc: int = frame.DEFAULT_NC
    slack: float = frame.DEFAULT_SLACK
    tolerance: float = 1e-10
    magnitudes: tuple = (10.0, 20.0, 40.0, 80.0)
    sector: int = 1
    seed: int = 0
    output: str = "."
    blocks: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.N < 64 or self.N & (self.N - 1):
            raise ConfigError(f"grid N must be a power of two >= 64, got {self.N}")
        if self.nc < 8:
            raise ConfigError("contour points must be at least 8")
        mags = self.magnitudes
        if not mags or mags[0] <= 0 or any(b <= a for a, b in zip(mags, mags[1:])):
            raise ConfigError("magnitudes must be positive and strictly increasing")


def load_config(command: str, path: str | None) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    elif command != "selftest":
        raise ConfigError(f"command {command!r} needs --config")
    if raw.get("command", command) != command:
        raise ConfigError(f"config is for {raw['command']!r}, not {command!r}")
    grid = raw.get("grid", {})
    try:
        return RunConfig(
            command=command,
            N=int(grid.get("N", 1024)),
            nc=int(grid.get("Nc", frame.DEFAULT_NC)),
            slack=float(raw.get("slack", frame.DEFAULT_SLACK)),
            tolerance=float(raw.get("tolerance", 1e-10)),
            magnitudes=tuple(float(m) for m in raw.get("magnitudes", (10, 20, 40, 80))),
            sector=int(raw.get("sector", 1)),
            seed=int(raw.get("seed", 0)),
            output=str(raw.get("output", ".")),
            blocks={k: raw[k] for k in COMMANDS if isinstance(raw.get(k), dict)},
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config value: {exc}") from exc


# -- value parsing -----------------------------------------------------------


def parse_complex(v) -> complex:
    """A number, a ``[re, im]`` pair, or a constant expression string."""
    if isinstance(v, bool):
        raise ConfigError("expected a number, got a boolean")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        e = exprparse.parse(v)
        a, b = exprparse.eval(e, 0.0), exprparse.eval(e, 1.0)
        if a != b or exprparse.eval_deriv(e, 0.5) != 0:
            raise ConfigError(f"expected a constant, got {v!r}")
        return complex(a)
    raise ConfigError(f"cannot read {v!r} as a complex number")


def _expr(v):
    if isinstance(v, str):
        return exprparse.parse(v)
    return exprparse.Num(parse_complex(v))


def scalar_grid(v, N: int) -> GridFn:
    e = _expr(v)
    t = np.linspace(0.0, 1.0, N + 1)
    vals = np.broadcast_to(exprparse.eval(e, t), t.shape).astype(np.complex128)
    der = np.broadcast_to(exprparse.eval_deriv(e, t), t.shape).astype(np.complex128)
    return GridFn(vals, der)


def matrix_grid(rows, N: int) -> GridFn:
    if not isinstance(rows, list) or not rows or any(not isinstance(r, list) or len(r) != len(rows) for r in rows):
        raise ConfigError("matrix entries must be a square nested list")
    d = len(rows)
    vals = np.zeros((N + 1, d, d), dtype=np.complex128)
    der = np.zeros_like(vals)
    for i, r in enumerate(rows):
        for j, v in enumerate(r):
            g = scalar_grid(v, N)
            vals[:, i, j], der[:, i, j] = g.values, g.deriv
    return GridFn(vals, der)


def vector_grid(items, N: int) -> GridFn:
    if not isinstance(items, list) or not items:
        raise ConfigError("vector entries must be a nonempty list")
    gs = [scalar_grid(v, N) for v in items]
    return GridFn(np.stack([g.values for g in gs], axis=1), np.stack([g.deriv for g in gs], axis=1))


@contextmanager
def config_stage():
    """Input validation failures while reading a config are configuration errors."""
    try:
        yield
    except ConfigError:
        raise
    except (InvalidInputError, InvalidParameterError, DimensionMismatchError, DomainError) as exc:
        raise ConfigError(str(exc)) from exc
    except (TypeError, KeyError, AttributeError) as exc:
        raise ConfigError(f"malformed config block: {exc}") from exc


def _need(block: dict, key: str):
    if key not in block:
        raise ConfigError(f"missing config key {key!r}")
    return block[key]


# -- CSV ---------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


# -- commands ----------------------------------------------------------------


def _violation(strict: bool, message: str):
    if strict:
        raise BoundViolation(message)
    log.warning("bound violation: %s", message)


def _explicit_bvp(cfg: RunConfig, b: dict):
    A = matrix_grid(_need(b, "A"), cfg.N)
    V = matrix_grid(_need(b, "V"), cfg.N)
    f = vector_grid(b["f"], cfg.N) if "f" in b else None
    P = np.array([[parse_complex(v) for v in r] for r in _need(b, "P")])
    xi = np.array([parse_complex(v) for v in _need(b, "xi")])
    params = bvp.ContractionParams(float(_need(b, "gamma")), float(_need(b, "theta")),
                                   int(b.get("max_iters", 200)), cfg.tolerance)
    return A, V, bvp.BvpProblem(A + V, f, P, xi), params


def run_bvp(cfg: RunConfig, threads: int, strict: bool) -> str:
    b = cfg.blocks.get("bvp", {"random": True})
    if b.get("random", False):
        inst = samples.random_contraction(np.random.default_rng(cfg.seed), N=cfg.N)
        A, V, problem, params = inst.A, inst.V, inst.problem, inst.params
    else:
        with config_stage():
            A, V, problem, params = _explicit_bvp(cfg, b)
    if params.tol != cfg.tolerance:
        params = bvp.ContractionParams(params.gamma, params.theta, params.max_iters, cfg.tolerance)
    res = bvp.solve_contraction(A, V, problem, params)
    oracle = bvp.solve_direct(problem)
    gap = float(np.max(linalg.vec_norm(res.x.values - oracle.values)))
    th = params.theta
    rel = norm_c(res.x - res.x0) / norm_c(res.x0)
    if res.contraction_factor > th * (1 + cfg.slack):
        _violation(strict, f"contraction factor {res.contraction_factor:.6g} exceeds theta")
    if rel > th / (1 - th) * (1 + cfg.slack):
        _violation(strict, f"solution gap {rel:.6g} exceeds theta/(1-theta)")
    header = ["seed", "dim", "iterations", "contraction_factor", "theta", "gamma",
              "relative_gap", "gap_bound", "oracle_gap"]
    row = [cfg.seed, A.dim, res.iterations, res.contraction_factor, th, params.gamma,
           rel, th / (1 - th), gap]
    return csv_text(header, [row])


def _frame_from(cfg: RunConfig) -> frame.PiFrame:
    b = _need(cfg.blocks, "frame")
    dim = int(_need(b, "dim"))
    p = b.get("partition", {})
    part = frame.Partition(dim, p.get("idx0", []), p.get("minus", []), p.get("plus", []))
    atoms = []
    for a in _need(b, "atoms"):
        g = scalar_grid(_need(a, "beta"), cfg.N)
        atoms.append(frame.Atom(g, _need(a, "indices")))
    C = matrix_grid(_need(b, "C"), cfg.N)
    return frame.PiFrame(part, frame.SpectralAtoms(dim, atoms), C)


def run_frame(cfg: RunConfig, threads: int, strict: bool) -> str:
    with config_stage():
        fr = _frame_from(cfg)
    bundle = frame.build_transformer(fr, nc=cfg.nc, slack=cfg.slack)
    rep = bundle.report
    if not rep.holds:
        _violation(strict, f"transformer bounds {rep.violations()}")
    names = ("S_minus_identity", "S_inv_minus_identity", "S_deriv_l1", "block_residual")
    short = ("s_dev", "s_inv_dev", "s_deriv_l1", "block_residual")
    header = ["d_pi", "d_atom", "kappa"]
    row = [fr.d_pi, fr.d_atom, rep.kappa]
    for n, s in zip(names, short):
        c = rep.checks.get(n)
        header += [f"{s}_lhs", f"{s}_rhs"]
        row += [c.lhs, c.rhs] if c else [0.0, math.inf]
    header.append("holds")
    row.append(rep.holds)
    return csv_text(header, [row])


def _family_from(cfg: RunConfig) -> tuple[asympt.ParamFamily, dict]:
    b = _need(cfg.blocks, "family")
    blocks = _need(b, "blocks")
    h = [scalar_grid(v, cfg.N) for v in _need(b, "h")]
    V = matrix_grid(_need(b, "V"), cfg.N)
    fam = asympt.ParamFamily(blocks, h, V, parse_complex(b.get("direction", 1.0)), cfg.magnitudes)
    return fam, b


def run_family(cfg: RunConfig, threads: int, strict: bool) -> str:
    with config_stage():
        fam, b = _family_from(cfg)
        ks = [int(k) for k in b.get("k", range(fam.m))]
        sides = list(b.get("sides", asympt.SIDES))
        if any(not 0 <= k < fam.m for k in ks) or any(s not in asympt.SIDES for s in sides):
            raise ConfigError("family k must index a block and sides must be 'left' or 'right'")
        budget = asympt.FrameBudget(**b["budget"]) if "budget" in b else None
        jobs = []
        for k in ks:
            xi = np.zeros(fam.dim, dtype=np.complex128)
            if "xi" in b:
                xi = np.array([parse_complex(v) for v in b["xi"]])
            else:
                xi[fam.blocks[k][0]] = 1.0
            xi = asympt._check_xi(fam, k, xi)
            for side in sides:
                for nu in range(len(fam.magnitudes)):
                    jobs.append((k, side, nu, xi))
    rows = acceptance.pmap(lambda j: asympt.sweep_row(fam, j[2], j[0], j[3], j[1], budget), jobs, threads)
    out = []
    for (k, side, _, _), r in zip(jobs, rows):
        if r.actual_gap > r.refined_bound:
            _violation(strict, f"refined bound fails at magnitude {r.magnitude} (k={k}, {side})")
        out.append([k, side, r.magnitude, r.rel_sup_error, r.actual_gap, r.y_norm, r.refined_bound,
                    r.epsilon, r.theta, r.frame_ok])
    header = ["k", "side", "magnitude", "rel_sup_error", "actual_gap", "y_norm", "refined_bound",
              "epsilon", "theta", "frame_ok"]
    return csv_text(header, out)


def _companion_from(cfg: RunConfig) -> tuple[companion.CompanionSpec, dict]:
    b = _need(cfg.blocks, "companion")
    q = {}
    for key, v in b.get("q", {}).items():
        try:
            k, l = (int(s) for s in key.split(","))
        except ValueError as exc:
            raise ConfigError(f"q keys must look like 'k,l', got {key!r}") from exc
        q[(k, l)] = _expr(v)
    spec = companion.CompanionSpec(int(_need(b, "n")), [_expr(v) for v in _need(b, "p")],
                                   parse_complex(b.get("zeta", 0.0)), q, N=cfg.N)
    return spec, b


def run_companion(cfg: RunConfig, threads: int, strict: bool) -> str:
    with config_stage():
        spec, b = _companion_from(cfg)
        sec = companion.sector_permutation(spec.n, cfg.sector)
        ks = [int(k) for k in b.get("k", range(1, spec.n + 1))]
        sides = list(b.get("sides", ("left",)))
        if any(not 1 <= k <= spec.n for k in ks) or any(s not in asympt.SIDES for s in sides):
            raise ConfigError("companion k must lie in 1..n and sides must be 'left' or 'right'")
    jobs = [(k, side, m) for k in ks for side in sides for m in cfg.magnitudes]

    def job(j):
        k, side, m = j
        err, _, _ = companion.compare_at(spec, sec, m, k, side)
        return err, m * companion.residual_check(spec, m * sec.direction)

    res = acceptance.pmap(job, jobs, threads)
    header = ["k", "side", "magnitude", "rel_sup_error", "scaled_residual"]
    return csv_text(header, [[k, side, m, e, r] for (k, side, m), (e, r) in zip(jobs, res)])


def selftest_csv(profile: str = "full", threads: int = 1, include_determinism: bool = False,
                 echo: bool = False) -> str:
    """Run the acceptance checks and return their CSV summary."""
    acceptance._family_sweeps.cache_clear()
    numbers = [n for n in acceptance.CRITERIA if include_determinism or n != 12]
    rows = []
    for n in numbers:
        r = acceptance.run(n, profile, threads)
        if echo:
            print(r.line(), flush=True)
        rows.append([r.number, r.name, r.passed, r.metric, r.threshold])
    return csv_text(["criterion", "name", "passed", "metric", "threshold"], rows)


def run_selftest(cfg: RunConfig, threads: int, strict: bool) -> str:
    profile = cfg.blocks.get("selftest", {}).get("profile", "full")
    if profile not in ("full", "quick"):
        raise ConfigError("selftest profile must be 'full' or 'quick'")
    text = selftest_csv(profile, threads, include_determinism=True, echo=True)
    failed = [line.split(",")[0] for line in text.splitlines()[1:] if ",false," in line]
    if failed:
        raise BoundViolation(f"acceptance criteria failed: {', '.join(failed)}")
    return text


RUNNERS = {"bvp": run_bvp, "frame": run_frame, "family": run_family,
           "companion": run_companion, "selftest": run_selftest}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="asymdiag", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--out", help="output directory (default: config 'output' or .)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for magnitude jobs")
    ap.add_argument("--strict", action="store_true", help="treat bound violations as failures")
    return ap


def _emit_error(err: AsymDiagError | Exception, code: int):
    rec = err.record() if isinstance(err, AsymDiagError) else {"error": "internal", "message": str(err)}
    rec["exit_code"] = code
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        _emit_error(ConfigError("--threads must be at least 1"), 2)
        return 2
    try:
        cfg = load_config(args.command, args.config)
        text = RUNNERS[args.command](cfg, args.threads, args.strict)
        out = Path(args.out or cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        target = out / f"{args.command}.csv"
        target.write_text(text)
        print(f"wrote {target}")
        return 0
    except AsymDiagError as err:
        _emit_error(err, err.exit_code)
        return err.exit_code
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as err:
        _emit_error(err, 3)
        return 3


if __name__ == "__main__":
    sys.exit(main())
