"""Experiment matrix: config parsing, cell execution, CSV/JSON/summary output."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, FastCubicError
from .optimizer import (ERROR, THEORY_C, FastCubicConfig, exact_np_cubic, fast_cubic,
                        gradient_descent)
from .oracles import DENSE_LIMIT
from .problems import REGISTRY, build_problem

log = logging.getLogger(__name__)

METHODS = ("fastcubic", "gd", "exact_np")
CONFIG_KEYS = {"problems", "methods", "eps_grid", "seeds", "solver", "c_const", "max_outer",
               "output_dir", "practical", "gd_max_iter", "timing"}
PROBLEM_KEYS = {"name", "params", "label"}
COLUMNS = ("problem", "method", "eps", "seed", "outer_iters", "hv_count", "grad_count",
           "final_f", "final_grad_norm", "final_lambda_min", "wall_ms", "status")


@dataclass
class ProblemEntry:
    name: str
    params: Dict[str, float] = field(default_factory=dict)
    label: Optional[str] = None

    @property
    def key(self) -> str:
        return self.label or self.name


@dataclass
class ExperimentConfig:
    problems: List[ProblemEntry]
    methods: List[str]
    eps_grid: List[float]
    seeds: List[int]
    solver: str = "agd"
    c_const: float = THEORY_C
    max_outer: int = 500
    output_dir: str = "out"
    practical: bool = False
    gd_max_iter: int = 200000
    timing: bool = False

    def __post_init__(self):
        if not self.problems or not self.methods or not self.eps_grid or not self.seeds:
            raise ConfigError("problems, methods, eps_grid and seeds must be non-empty")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        for e in self.eps_grid:
            if not (isinstance(e, (int, float)) and e > 0):
                raise ConfigError(f"eps values must be positive, got {e!r}")
        if self.solver not in ("agd", "svrg"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        for p in self.problems:
            if p.name not in REGISTRY:
                raise ConfigError(f"unknown problem {p.name!r}")
            if not re.fullmatch(r"[A-Za-z0-9_.\-]+", p.key):
                raise ConfigError(f"problem label {p.key!r} must match [A-Za-z0-9_.-]+")
        keys = [p.key for p in self.problems]
        if len(set(keys)) != len(keys):
            raise ConfigError("problem labels must be unique (add 'label' to duplicates)")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"problems", "methods", "eps_grid", "seeds"} - set(doc)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        probs = []
        for entry in doc["problems"]:
            if isinstance(entry, str):
                entry = {"name": entry}
            if not isinstance(entry, dict):
                raise ConfigError("problem entries must be objects or names")
            bad = set(entry) - PROBLEM_KEYS
            if bad:
                raise ConfigError(f"unknown problem keys: {sorted(bad)}")
            if "name" not in entry:
                raise ConfigError("problem entry needs a name")
            probs.append(ProblemEntry(entry["name"], dict(entry.get("params", {})), entry.get("label")))
        rest = {k: v for k, v in doc.items() if k != "problems"}
        try:
            return cls(problems=probs, **rest)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)


@dataclass
class ResultRow:
    problem: str
    method: str
    eps: float
    seed: int
    outer_iters: Optional[int] = None
    hv_count: Optional[int] = None
    grad_count: Optional[int] = None
    final_f: Optional[float] = None
    final_grad_norm: Optional[float] = None
    final_lambda_min: Optional[float] = None
    wall_ms: Optional[float] = None
    status: str = ERROR

    def cells(self) -> List[str]:
        out = []
        for name in COLUMNS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_cells(cls, cells: List[str]) -> "ResultRow":
        vals = {}
        for name, raw in zip(COLUMNS, cells):
            if raw == "":
                vals[name] = None
            elif name in ("problem", "method", "status"):
                vals[name] = raw
            elif name in ("seed", "outer_iters", "hv_count", "grad_count"):
                vals[name] = int(raw)
            else:
                vals[name] = float(raw)
        return cls(**vals)


def rows_to_csv(rows: List[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def rows_from_csv(text: str) -> List[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != COLUMNS:
        raise ValueError(f"unexpected header {header}")
    return [ResultRow.from_cells(r) for r in reader]


def cell_id(problem: str, method: str, eps: float, seed: int) -> str:
    return f"{problem}-{method}-{eps!r}-{seed}"


def run_cell(cfg: ExperimentConfig, entry: ProblemEntry, method: str, eps: float, seed: int):
    """One matrix cell; never raises, errors become ``status=Error`` rows."""
    row = ResultRow(entry.key, method, float(eps), int(seed))
    report = None
    try:
        spec = build_problem(entry.name, entry.params, seed)
        x0 = spec.initial_point()
        if method == "fastcubic":
            fc = FastCubicConfig(eps, c_const=cfg.c_const, max_outer=cfg.max_outer,
                                 strategy=cfg.solver, seed=seed, practical=cfg.practical)
            x, report = fast_cubic(spec.oracle, x0, fc, spec.domain_radius)
        elif method == "gd":
            x, report = gradient_descent(spec.oracle, x0, eps, cfg.gd_max_iter, spec.domain_radius)
        else:
            x, report = exact_np_cubic(spec.oracle, x0, eps, cfg.max_outer, cfg.c_const,
                                       cfg.practical, spec.domain_radius)
        row.outer_iters = report.outer_iters
        row.hv_count = report.hv_calls
        row.grad_count = report.grad_calls
        row.final_f = float(report.f_final)
        row.final_grad_norm = float(report.grad_norm_final)
        if report.certificate is not None and spec.dim <= DENSE_LIMIT:
            row.final_lambda_min = float(report.certificate.lambda_min_hessian)
        row.wall_ms = float(round(report.wall_ms, 3)) if cfg.timing else None
        row.status = report.status
        doc = report.to_dict()
    except (FastCubicError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("cell %s failed: %s", cell_id(entry.key, method, eps, seed), exc)
        row.status = ERROR
        doc = {"method": method, "eps": eps, "status": ERROR,
               "message": f"{type(exc).__name__}: {exc}"}
    if not cfg.timing:
        doc["wall_ms"] = None
    doc.update({"problem": entry.key, "problem_name": entry.name, "params": entry.params,
                "seed": seed})
    return row, doc


def _workers() -> int:
    raw = os.environ.get("FASTCUBIC_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"FASTCUBIC_THREADS must be an integer, got {raw!r}") from exc
    return max(n, 0)


def run_matrix(cfg: ExperimentConfig, write: bool = True) -> List[ResultRow]:
    """Execute every (problem, method, eps, seed) cell and persist the outputs.

    Cells may run concurrently (``FASTCUBIC_THREADS``); files are written once,
    in sorted cell order, after all cells finish.
    """
    cells = [(p, m, float(e), int(s)) for p in cfg.problems for m in cfg.methods
             for e in cfg.eps_grid for s in cfg.seeds]
    cells.sort(key=lambda c: (c[0].key, c[1], c[2], c[3]))
    n = _workers()
    if n <= 1:
        results = [run_cell(cfg, *c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(lambda c: run_cell(cfg, *c), cells))
    rows = [r for r, _ in results]
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "results.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(rows_to_csv(rows))
        for row, doc in results:
            name = cell_id(row.problem, row.method, row.eps, row.seed)
            (out / f"report-{name}.json").write_text(
                json.dumps(doc, sort_keys=True, indent=1, default=_json_default) + "\n")
        (out / "summary.txt").write_text(summary_text(rows))
    return rows


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def summary_text(rows: List[ResultRow]) -> str:
    groups: Dict[Tuple[str, str, float], List[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.problem, r.method, r.eps), []).append(r)
    lines = [f"{'problem':<20} {'method':<10} {'eps':>10} {'seeds':>5} {'ok':>3} "
             f"{'med_outer':>10} {'med_hv':>14}"]
    for (prob, meth, eps), rs in sorted(groups.items()):
        ok = [r for r in rs if r.status != ERROR]
        mo = median(r.outer_iters for r in ok) if ok else float("nan")
        mh = median(r.hv_count for r in ok) if ok else float("nan")
        lines.append(f"{prob:<20} {meth:<10} {eps:>10.3g} {len(rs):>5} {len(ok):>3} "
                     f"{mo:>10g} {mh:>14g}")
    return "\n".join(lines) + "\n"


# (method, count column) pairs the scaling report fits
SCALING_TARGETS = (("fastcubic", "outer_iters"), ("fastcubic", "hv_count"),
                   ("gd", "grad_count"), ("exact_np", "outer_iters"))
EXPECTED = {("fastcubic", "outer_iters"): "~1.5", ("fastcubic", "hv_count"): "<=1.75",
            ("gd", "grad_count"): "~2.0", ("exact_np", "outer_iters"): "~1.5"}


class ScalingError(ValueError):
    pass


def fit_slopes(rows: List[ResultRow], converged_only: bool = True) -> Dict[Tuple[str, str, str], float]:
    """Least-squares slope of ``log(median count)`` against ``log(1/eps)``.

    Keys are ``(problem, method, column)``. Groups with fewer than three eps
    values raise :class:`ScalingError`.
    """
    by: Dict[Tuple[str, str], Dict[float, List[ResultRow]]] = {}
    for r in rows:
        by.setdefault((r.problem, r.method), {}).setdefault(r.eps, []).append(r)
    out = {}
    for (prob, meth), grid in sorted(by.items()):
        if len(grid) < 3:
            raise ScalingError(f"{prob}/{meth}: need >= 3 eps values, got {len(grid)}")
        for m, col in SCALING_TARGETS:
            if m != meth:
                continue
            xs, ys = [], []
            for eps, rs in sorted(grid.items()):
                vals = [getattr(r, col) for r in rs
                        if getattr(r, col) and (r.status == "Converged" or not converged_only)]
                if vals:
                    xs.append(math.log(1.0 / eps))
                    ys.append(math.log(median(vals)))
            out[(prob, meth, col)] = float(np.polyfit(xs, ys, 1)[0]) if len(xs) >= 2 else float("nan")
    return out


def scaling_report(rows: List[ResultRow]) -> str:
    slopes = fit_slopes(rows)
    lines = [f"{'problem':<20} {'method':<10} {'count':<12} {'slope':>8}  expected"]
    for (prob, meth, col), s in sorted(slopes.items()):
        lines.append(f"{prob:<20} {meth:<10} {col:<12} {s:>8.3f}  {EXPECTED[(meth, col)]}")
    return "\n".join(lines) + "\n"
