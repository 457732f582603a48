"""Command-line driver: ``python -m maurey <command> [options]``.

Options may also come from a JSON config file (``--config``); flags given
on the command line win over the file.  Reports go to ``--out``, else to
``$MAUREY_OUTPUT_DIR``, else to ``./maurey-out``.

Exit codes: 0 success, 2 a checked assertion failed, 1 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import integrator as itg
from .matnorm import CpConfig, MatrixTuple, cp_norm, lp_l2_norm, oh_norm
from .measures import OH_TO_LP, SCENARIO_KINDS, build_scenario, derive_regions
from .oracle import LogBox, auto_box, mc_estimate, quad_box
from .orlicz import PiecewiseConvexFunction, convexify, lp_inclusion_ratio, sandwich
from .suites import SUITES, Context, Runner, Settings, run_suites, substream
from .sumsolve import SolverConfig, discretize, region_assignment_value, solve_decomposition

OUTPUT_ENV = "MAUREY_OUTPUT_DIR"
COMMANDS = ("integrate", "regions", "solve", "orlicz", "matnorm", "fit", "verify")

REGION_COLUMNS = ["scenario", "theta", "n", "region_id", "integral", "sqrt_integral", "target", "ratio"]
FIT_COLUMNS = ["scenario", "theta_or_n", "exponent", "stderr", "points"]
SOLVER_COLUMNS = ["scenario", "theta", "n", "objective", "lower_bound", "upper_bound", "iterations", "converged"]


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    scenario: str = OH_TO_LP
    theta: list[float] = field(default_factory=lambda: [0.5])
    n: list[int] = field(default_factory=lambda: [16])
    resolution: int = 8
    half_width: float | None = None
    max_iter: int = 5000
    tolerance: float = 1e-7
    oracle_tol: float = 1e-6
    method: str = "exact"
    samples: int = 10_000
    endpoint: float | None = None
    suite: list[str] = field(default_factory=lambda: ["all"])
    norm: str = "oh"
    p: float = 1.5
    input: str | None = None
    table: str | None = None
    seed: int | None = None
    out: str | None = None
    workers: int = 1
    format: str = "both"
    explicit: frozenset = frozenset()

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.scenario not in SCENARIO_KINDS:
            raise UsageError(f"unknown scenario {self.scenario!r}")
        if not self.n:
            raise UsageError("empty n list")
        if not self.theta:
            raise UsageError("empty theta list")
        if any(n < 1 for n in self.n):
            raise UsageError("n must be >= 1")
        if self.resolution < 2 or self.workers < 1 or self.samples < 2 or self.max_iter < 1:
            raise UsageError("resolution >= 2, workers >= 1, samples >= 2 and max-iter >= 1 are required")
        if self.format not in ("csv", "json", "both"):
            raise UsageError("format must be csv, json or both")
        if self.method not in ("exact", "oracle", "mc"):
            raise UsageError("method must be exact, oracle or mc")
        if self.method == "mc" and self.command == "integrate" and self.seed is None:
            raise UsageError("Monte Carlo integration needs --seed")
        if self.command == "verify" and self.seed is None:
            raise UsageError("verify needs --seed")

    @property
    def out_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUTPUT_ENV) or "maurey-out")

    def solver(self) -> SolverConfig:
        return SolverConfig(max_iter=self.max_iter, tolerance=self.tolerance)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _int_token(tok: str) -> int:
    tok = tok.strip()
    m = re.fullmatch(r"(\d+)\^(\d+)", tok)
    if m:
        return int(m.group(1)) ** int(m.group(2))
    return int(tok)


def parse_n_list(text: str) -> list[int]:
    """``16,64,256`` or ``16..4096`` (doubling) or ``2^20..2^60:32`` (factor)."""
    out: list[int] = []
    for part in filter(None, (s.strip() for s in str(text).split(","))):
        if ".." in part:
            rng, _, step = part.partition(":")
            a, b = (_int_token(t) for t in rng.split(".."))
            f = _int_token(step) if step else 2
            if a < 1 or b < a or f < 2:
                raise UsageError(f"bad range {part!r}")
            while a <= b:
                out.append(a)
                a *= f
        else:
            out.append(_int_token(part))
    return out


def parse_float_list(text: str) -> list[float]:
    return [float(s) for s in str(text).split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="maurey", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON file with option values")
    ap.add_argument("--scenario", help=f"one of {', '.join(SCENARIO_KINDS)}")
    ap.add_argument("--theta", help="comma list")
    ap.add_argument("--n", help="comma list or range a..b[:factor]")
    ap.add_argument("--resolution", type=int)
    ap.add_argument("--half-width", type=float, dest="half_width")
    ap.add_argument("--max-iter", type=int, dest="max_iter")
    ap.add_argument("--tolerance", type=float)
    ap.add_argument("--oracle-tol", type=float, dest="oracle_tol")
    ap.add_argument("--method", help="integrate: exact, oracle or mc")
    ap.add_argument("--samples", type=int, help="Monte Carlo sample count")
    ap.add_argument("--endpoint", type=float, help="fit: 0, 0.5 or 1 for a theta blow-up fit")
    ap.add_argument("--suite", help="verify: comma list of suites or 'all'")
    ap.add_argument("--norm", help="matnorm: oh, cp or lp")
    ap.add_argument("--p", type=float)
    ap.add_argument("--input", help="matnorm: JSON with 'real' (and optional 'imag') arrays")
    ap.add_argument("--table", help="orlicz: reuse a saved (x, value) table")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV})")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--format", help="csv, json or both")
    return ap


def make_config(argv: Sequence[str]) -> RunConfig:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        raise UsageError("could not parse arguments") from exc
    values: dict = {}
    if ns.config:
        try:
            values.update(json.loads(Path(ns.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from exc
    values.update({k: v for k, v in vars(ns).items() if v is not None and k != "config"})
    known = {f.name for f in fields(RunConfig)} - {"explicit"}
    extra = set(values) - known
    if extra:
        raise UsageError(f"unknown config keys: {', '.join(sorted(extra))}")
    try:
        if "n" in values:
            v = values["n"]
            values["n"] = [int(x) for x in v] if isinstance(v, list) else parse_n_list(v)
        if "theta" in values:
            v = values["theta"]
            values["theta"] = [float(x) for x in v] if isinstance(v, list) else parse_float_list(v)
        if "suite" in values and isinstance(values["suite"], str):
            values["suite"] = [s.strip() for s in values["suite"].split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    cfg = RunConfig(**values, explicit=frozenset(values) - {"command"})
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, int) and abs(v) > 2**63:
        return str(v)
    return v


def emit_report(records: Sequence[dict], path_stem: Path, fmt: str = "both", columns: Sequence[str] | None = None
                ) -> list[Path]:
    """Write ``records`` as ``<stem>.csv`` and/or ``<stem>.json``; returns the files written."""
    records = [_jsonable(r) for r in records]
    if columns is None:
        columns = list(records[0]) if records else []
    for r in records:
        if list(r) != list(columns):
            raise ValueError("records are not homogeneous")
    written = []
    path_stem.parent.mkdir(parents=True, exist_ok=True)
    if fmt in ("csv", "both"):
        p = path_stem.with_suffix(".csv")
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in records:
                w.writerow([_cell(r[c]) for c in columns])
        written.append(p)
    if fmt in ("json", "both"):
        p = path_stem.with_suffix(".json")
        p.write_text(json.dumps(records, indent=1) + "\n")
        written.append(p)
    return written


def read_json_report(path: Path) -> list[dict]:
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _grid_points(cfg: RunConfig):
    return [(th, n) for th in cfg.theta for n in cfg.n]


def cmd_integrate(cfg: RunConfig) -> int:
    recs = []
    for th, n in _grid_points(cfg):
        spec = build_scenario(cfg.scenario, th, n)
        rec = {"scenario": cfg.scenario, "theta": th, "n": n, "method": cfg.method}
        if cfg.method == "exact":
            lv = itg.log_integrate_min(spec)
            rec.update(value=math.exp(lv) if lv < 700 else math.inf, log_value=lv, error=0.0)
        elif cfg.method == "oracle":
            box = LogBox.symmetric(spec.dim, cfg.half_width) if cfg.half_width else auto_box(spec)
            est = quad_box(spec, box, cfg.oracle_tol)
            rec.update(value=est.value, log_value=math.log(est.value),
                       error=est.quadrature_error + est.tail_bound)
        else:
            rng = substream(cfg.seed, f"integrate/{cfg.scenario}/{th}/{n}")
            est = mc_estimate(spec, rng, cfg.samples)
            rec.update(value=est.value, log_value=math.log(est.value), error=est.quadrature_error)
        recs.append(rec)
    emit_report(recs, cfg.out_dir / "integrate", cfg.format)
    return 0


def cmd_regions(cfg: RunConfig) -> int:
    recs = []
    for th, n in _grid_points(cfg):
        spec = build_scenario(cfg.scenario, th, n)
        for r in derive_regions(spec):
            val = itg.integrate_region(spec, r)
            target = itg.table2_target(r.id, th, n) if cfg.scenario == OH_TO_LP and r.id in itg.TABLE2_TARGETS else None
            root = math.sqrt(val)
            recs.append({"scenario": cfg.scenario, "theta": th, "n": n, "region_id": r.name, "integral": val,
                         "sqrt_integral": root, "target": target, "ratio": root / target if target else None})
    emit_report(recs, cfg.out_dir / "regions", cfg.format, REGION_COLUMNS)
    return 0


def cmd_solve(cfg: RunConfig) -> int:
    recs = []
    hw = cfg.half_width or 4.0
    for th, n in _grid_points(cfg):
        spec = build_scenario(cfg.scenario, th, n)
        grid = discretize(spec, LogBox.symmetric(spec.dim, hw), cfg.resolution)
        res = solve_decomposition(spec, grid, config=cfg.solver())
        recs.append(res.record(spec))
        if not res.lower_bound <= res.objective <= region_assignment_value(spec, None, grid):
            emit_report(recs, cfg.out_dir / "solve", cfg.format, SOLVER_COLUMNS)
            return 2
    emit_report(recs, cfg.out_dir / "solve", cfg.format, SOLVER_COLUMNS)
    return 0


def cmd_orlicz(cfg: RunConfig) -> int:
    status = 0
    summary = []
    with Runner(cfg.workers) as runner:
        ctx = Context(runner, Settings(seed=cfg.seed or 0, resolution=cfg.resolution,
                                       psi_half_width=cfg.half_width or 6.0, solver=cfg.solver()))
        if cfg.table:
            tables = {cfg.theta[0]: PiecewiseConvexFunction.from_table(cfg.table)}
            samples = {cfg.theta[0]: (tables[cfg.theta[0]].x, tables[cfg.theta[0]].y)}
        else:
            samples = ctx.psi_samples(cfg.theta)
        for th in cfg.theta:
            x, y = samples[th]
            F = convexify(x, y)
            cfg.out_dir.mkdir(parents=True, exist_ok=True)
            F.to_table(cfg.out_dir / f"psi_theta{th}.csv")
            ok = sandwich(x, y, F)
            fit = lp_inclusion_ratio(th, cfg.n if len(cfg.n) >= 4 else [2**k for k in range(6, 13)], F)
            summary.append({"theta": th, "sandwich_all": bool(ok.all()), "inclusion_slope": fit.exponent,
                            "sup_ratio": fit.meta["sup_ratio"], "ladder_min": float(x[1]), "ladder_max": float(x[-1])})
            status = status or (0 if ok.all() else 2)
    emit_report(summary, cfg.out_dir / "orlicz", cfg.format)
    return status


def _load_matrices(path: str) -> np.ndarray:
    try:
        d = json.loads(Path(path).read_text())
        a = np.asarray(d["real"], dtype=float)
        if "imag" in d:
            a = a + 1j * np.asarray(d["imag"], dtype=float)
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read matrices from {path}: {exc}") from exc
    return a


def cmd_matnorm(cfg: RunConfig) -> int:
    if not cfg.input:
        raise UsageError("matnorm needs --input")
    a = _load_matrices(cfg.input)
    if cfg.norm == "oh":
        val = oh_norm(MatrixTuple(a))
    elif cfg.norm == "cp":
        val = cp_norm(MatrixTuple(a), cfg.p, CpConfig(seed=cfg.seed or 0))
    elif cfg.norm == "lp":
        val = lp_l2_norm(np.atleast_2d(a), cfg.p)
    else:
        raise UsageError("norm must be oh, cp or lp")
    emit_report([{"norm": cfg.norm, "p": cfg.p, "value": val}], cfg.out_dir / "matnorm", cfg.format)
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    recs = []
    if len(cfg.theta) > 1 and len(cfg.n) == 1:
        fit = itg.fit_theta_blowup(cfg.scenario, cfg.n[0], cfg.theta, endpoint=cfg.endpoint)
        recs.append(fit.record())
    else:
        if len(cfg.n) < 4:
            raise UsageError("an n fit needs at least 4 values of n")
        for th in cfg.theta:
            recs.append(itg.fit_n_exponent(cfg.scenario, th, cfg.n).record())
    emit_report(recs, cfg.out_dir / "fit", cfg.format, FIT_COLUMNS)
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    names = list(SUITES) if cfg.suite == ["all"] else cfg.suite
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s): {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    settings = Settings(seed=cfg.seed, resolution=cfg.resolution, solver=cfg.solver(), oracle_tol=cfg.oracle_tol)
    if cfg.half_width:
        settings.solver_half_width = cfg.half_width
    if cfg.explicit & {"theta", "n"}:
        settings.table2_grid = (tuple(cfg.theta), tuple(cfg.n))
    results = run_suites(names, settings, cfg.workers)
    summary = []
    for res in results:
        emit_report(res.records, cfg.out_dir / f"verify_{res.name}", cfg.format)
        summary.append(res.summary())
        print(f"{res.name}: {'PASS' if res.passed else 'FAIL'}")
    (cfg.out_dir / "verify_summary.json").write_text(json.dumps(_jsonable(summary), indent=1) + "\n")
    return 0 if all(r.passed for r in results) else 2


HANDLERS = {
    "integrate": cmd_integrate,
    "regions": cmd_regions,
    "solve": cmd_solve,
    "orlicz": cmd_orlicz,
    "matnorm": cmd_matnorm,
    "fit": cmd_fit,
    "verify": cmd_verify,
}


def run(cfg: RunConfig) -> int:
    return HANDLERS[cfg.command](cfg)


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = make_config(argv)
        return run(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


__all__ = ["RunConfig", "UsageError", "emit_report", "main", "make_config", "parse_n_list", "run"]
