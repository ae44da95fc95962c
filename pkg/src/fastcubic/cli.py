"""``fastcubic`` command line: run, bench, solve-cubic, check.

Exit codes: 0 success, 1 configuration error, 2 some cell or check failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bench import ExperimentConfig, ProblemEntry, ScalingError, run_matrix, scaling_report
from .cubic_model import CubicSubproblem, eval_m, exact_solve, grad_m
from .cubic_solver import SolverConfig, choose_step, fast_cubic_min
from .errors import ConfigError, FastCubicError
from .optimizer import ERROR
from .oracles import finite_diff_hv_check, kernel_backend, make_rng
from .problems import REGISTRY, build_problem

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--eps", type=float, action="append", help="target accuracy (repeatable)")
    p.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
    p.add_argument("--solver", choices=("agd", "svrg"))
    p.add_argument("--c-const", type=float, dest="c_const")
    p.add_argument("--practical", action="store_true", help="stopping constant c = 100")
    p.add_argument("--timing", action="store_true", help="record wall_ms (breaks byte-identical output)")
    p.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fastcubic", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a single cell")
    _common(run)
    run.add_argument("--problem", help="registered problem name")
    run.add_argument("--params", default="{}", help="problem parameters as JSON")
    run.add_argument("--method", default="fastcubic", choices=("fastcubic", "gd", "exact_np"))

    bench = sub.add_parser("bench", help="run an experiment matrix")
    _common(bench)

    sc = sub.add_parser("solve-cubic", help="solve one cubic subproblem and compare to the exact oracle")
    sc.add_argument("input", type=Path, help="JSON document {g, H, L, L2}")
    sc.add_argument("--eps", type=float, default=1e-3, help="sets kappa = sqrt(900/(eps L))")
    sc.add_argument("--kappa", type=float)
    sc.add_argument("--seed", type=int, default=0)
    sc.add_argument("--solver", choices=("agd", "svrg"), default="agd")
    sc.add_argument("--out", type=Path, help="write the JSON result here instead of stdout")

    ck = sub.add_parser("check", help="invariant checks on small instances")
    ck.add_argument("--seed", type=int, default=0)
    ck.add_argument("--instances", type=int, default=20)
    return ap


def _override(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.eps:
        cfg.eps_grid = list(args.eps)
    if args.seed:
        cfg.seeds = list(args.seed)
    if args.solver:
        cfg.solver = args.solver
    if args.c_const is not None:
        cfg.c_const = args.c_const
    if args.practical:
        cfg.practical = True
    if args.timing:
        cfg.timing = True
    if args.out:
        cfg.output_dir = str(args.out)
    cfg.__post_init__()
    return cfg


def _cmd_run(args) -> int:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        if not args.problem:
            raise ConfigError("run needs --config or --problem")
        try:
            params = json.loads(args.params)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--params is not JSON: {exc}") from exc
        cfg = ExperimentConfig([ProblemEntry(args.problem, params)], [args.method],
                               args.eps or [1e-3], args.seed or [0])
    cfg = _override(cfg, args)
    n = len(cfg.problems) * len(cfg.methods) * len(cfg.eps_grid) * len(cfg.seeds)
    if n != 1:
        raise ConfigError(f"run executes exactly one cell; this config has {n} (use bench)")
    rows = run_matrix(cfg)
    print(",".join(rows[0].cells()))
    return EXIT_FAILED if rows[0].status == ERROR else EXIT_OK


def _cmd_bench(args) -> int:
    if not args.config:
        raise ConfigError("bench needs --config")
    cfg = _override(ExperimentConfig.load(args.config), args)
    rows = run_matrix(cfg)
    print(Path(cfg.output_dir, "summary.txt").read_text(), end="")
    try:
        print(scaling_report(rows), end="")
    except ScalingError as exc:
        print(f"scaling report skipped: {exc}")
    return EXIT_FAILED if any(r.status == ERROR for r in rows) else EXIT_OK


def _cmd_solve_cubic(args) -> int:
    try:
        p = CubicSubproblem.from_json(args.input.read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad subproblem document: {exc}") from exc
    kappa = args.kappa if args.kappa else math.sqrt(900.0 / (args.eps * p.L))
    cfg = SolverConfig.build(p, kappa, args.solver)
    sol = fast_cubic_min(p, cfg, make_rng(args.seed))
    h, m = choose_step(p, sol)
    hv = sol.hv_calls
    ex = exact_solve(p)
    doc = {
        "lambda": sol.lam, "branch": sol.branch, "h": h.tolist(), "m": m,
        "v_min": None if sol.v_min is None else sol.v_min.tolist(),
        "hv_calls": hv, "kappa": kappa, "eps_tilde": cfg.eps_tilde,
        "eps_tilde_raw": cfg.eps_tilde_raw,
        "grad_m_norm": float(np.linalg.norm(grad_m(p, h, tag="verify"))),
        "exact": {"lambda_star": ex.lambda_star, "h_star": ex.h_star.tolist(),
                  "m_star": ex.m_star, "hard_case": ex.hard_case},
        "ratio_m_over_mstar": (m / ex.m_star) if ex.m_star != 0 else None,
        "trace": [vars(t) for t in sol.trace],
    }
    text = json.dumps(doc, indent=1)
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _cmd_check(args) -> int:
    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name} {detail}".rstrip())

    print(f"kernel backend: {kernel_backend()}")
    rng = make_rng(args.seed)
    for name in REGISTRY:
        spec = build_problem(name, seed=args.seed)
        o = spec.oracle
        worst = 0.0
        for _ in range(5):
            x = rng.standard_normal(o.dim)
            r = min(spec.domain_radius, 2.0)
            x *= r * rng.uniform() / np.linalg.norm(x)
            worst = max(worst, finite_diff_hv_check(o, x, rng.standard_normal(o.dim)))
        report(f"hv-finite-difference[{name}]", worst <= 1e-5, f"err={worst:.2e}")
    bad = 0
    for k in range(args.instances):
        d = int(rng.integers(2, 11))
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        H = (Q * rng.uniform(-1, 1, d)) @ Q.T
        p = CubicSubproblem.from_dense(rng.standard_normal(d), 0.5 * (H + H.T), 1.0, 1.0)
        eps = 1e-3
        kappa = math.sqrt(900.0 / eps)
        sol = fast_cubic_min(p, SolverConfig.build(p, kappa), rng)
        h, m = choose_step(p, sol)
        ex = exact_solve(p)
        if not (m <= ex.m_star / 3000 or ex.m_star >= -eps ** 1.5 / 800):
            bad += 1
    report("cubic-approximation-ratio", bad == 0, f"{bad}/{args.instances} violations")
    return EXIT_FAILED if failures else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "bench": _cmd_bench, "solve-cubic": _cmd_solve_cubic,
                "check": _cmd_check}
    try:
        return handlers[args.cmd](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FastCubicError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
