"""Named verification suites.

Every suite splits its work into pure jobs, runs them through a
:class:`Runner` and merges the results in job order, so reports do not
depend on the worker count.  Randomness comes from named substreams of one
root seed.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import integrator as itg
from .matnorm import CpConfig, MatrixTuple, cp_norm, maurey_ratio, oh_norm
from .measures import OH_TO_CP, OH_TO_LP, build_scenario, derive_regions
from .oracle import LogBox, quad_box
from .orlicz import (
    PiecewiseConvexFunction,
    convexify,
    default_ladder,
    lp_exponent,
    lp_inclusion_ratio,
    psi_eval,
    psi_grid,
    sandwich,
)
from .sumsolve import (
    SolverConfig,
    box_min_integral,
    discretize,
    region_assignment_value,
    relaxed_lower_bound,
    solve_decomposition,
)


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


class Runner:
    """Maps a pure function over jobs, in a process pool when ``workers > 1``."""

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))
        self._pool: ProcessPoolExecutor | None = None

    def map(self, fn: Callable, jobs: Sequence) -> list:
        jobs = list(jobs)
        if self.workers == 1 or len(jobs) < 2:
            return [fn(j) for j in jobs]
        if self._pool is None:
            self._pool = ProcessPoolExecutor(max_workers=self.workers)
        return list(self._pool.map(fn, jobs))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class Settings:
    seed: int = 0
    resolution: int = 8
    solver_half_width: float = 4.0
    psi_half_width: float = 6.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    oracle_tol: float = 1e-6
    table2_grid: tuple[tuple[float, ...], tuple[int, ...]] | None = None


@dataclass
class SuiteResult:
    name: str
    passed: bool
    records: list[dict]
    checks: dict

    def summary(self) -> dict:
        return {"suite": self.name, "passed": self.passed, **self.checks}


class Context:
    def __init__(self, runner: Runner, settings: Settings):
        self.runner = runner
        self.settings = settings
        self._psi: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def psi_samples(self, thetas: Sequence[float]) -> dict[float, tuple[np.ndarray, np.ndarray]]:
        """Ladder samples for each ``theta``, all ladder points in one parallel batch."""
        todo = [t for t in thetas if t not in self._psi]
        xs = default_ladder()
        s = self.settings
        jobs = [(t, float(x), s.psi_half_width, s.resolution, s.solver) for t in todo for x in xs]
        vals = self.runner.map(_psi_job, jobs)
        for i, t in enumerate(todo):
            ys = vals[i * len(xs):(i + 1) * len(xs)]
            self._psi[t] = (np.concatenate([[0.0], xs]), np.concatenate([[0.0], ys]))
        return {t: self._psi[t] for t in thetas}

    def psi_function(self, theta: float) -> PiecewiseConvexFunction:
        x, y = self.psi_samples([theta])[theta]
        return convexify(x, y)


def _psi_job(job):
    theta, x, hw, res, cfg = job
    return psi_eval(theta, x, psi_grid(theta, hw, res), cfg)


# ---------------------------------------------------------------------------
# 1. closed form of A_{1,1}
# ---------------------------------------------------------------------------

def _closed_form_job(job):
    n, theta, tol = job
    spec = build_scenario(OH_TO_LP, theta, n)
    region = next(r for r in derive_regions(spec) if r.id == (1, 1))
    closed = itg.a11_closed_form(theta, n)
    exact = itg.integrate_region(spec, region)
    est = quad_box(spec, LogBox.symmetric(spec.dim, 60.0), tol, region=region, with_tail=False)
    return {
        "n": n,
        "theta": theta,
        "closed_form": closed,
        "integrate_region": exact,
        "oracle": est.value,
        "rel_err_exact": abs(exact / closed - 1),
        "rel_err_oracle": abs(est.value / closed - 1),
    }


def suite_closed_form(ctx: Context) -> SuiteResult:
    jobs = [(n, th, 1e-9) for n in (16, 256) for th in (0.3, 0.5, 0.7)]
    recs = ctx.runner.map(_closed_form_job, jobs)
    worst_exact = max(r["rel_err_exact"] for r in recs)
    worst_oracle = max(r["rel_err_oracle"] for r in recs)
    ok = worst_exact <= 1e-10 and worst_oracle <= 1e-6
    return SuiteResult("closed_form", ok, recs, {"max_rel_err_exact": worst_exact, "max_rel_err_oracle": worst_oracle})


# ---------------------------------------------------------------------------
# 2. Region ratio stability
# ---------------------------------------------------------------------------

def _table2_job(job):
    theta, n = job
    return [r.record() for r in itg.table2_report(theta, n)]


def suite_table2(ctx: Context) -> SuiteResult:
    thetas, ns = ctx.settings.table2_grid or ((0.2, 0.5, 0.8), (2**4, 2**6, 2**8, 2**10))
    jobs = [(th, n) for th in thetas for n in ns]
    recs = [r for chunk in ctx.runner.map(_table2_job, jobs) for r in chunk]
    spread: dict[str, float] = {}
    for rid in sorted({r["region_id"] for r in recs}):
        vals = [r["ratio"] for r in recs if r["region_id"] == rid]
        spread[rid] = max(vals) / min(vals)
    worst = max(spread.values())
    return SuiteResult("table2", worst <= 4.0 and len(spread) == 12, recs, {"max_spread": worst, "spread": spread})


# ---------------------------------------------------------------------------
# 3-5. Scaling fits
# ---------------------------------------------------------------------------

LARGE_N = [2**k for k in range(20, 61, 5)]
THETA_LOW = [0.02, 0.04, 0.06, 0.08, 0.1]
THETA_HIGH = [0.9, 0.92, 0.94, 0.96, 0.98]
THETA_HALF = [0.51, 0.52, 0.53, 0.54, 0.55]


def _fit_job(job) -> dict:
    tag, kind, arg, xs, endpoint = job
    if tag == "n":
        fit = itg.fit_n_exponent(kind, arg, xs)
    else:
        fit = itg.fit_theta_blowup(kind, arg, xs, endpoint=endpoint)
    rec = fit.record()
    if tag != "n":
        rec["theta_or_n"] = f"2^{int(round(math.log2(arg)))}"
    return rec


def suite_scaling(ctx: Context) -> SuiteResult:
    jobs = [("n", OH_TO_LP, th, LARGE_N, None) for th in (0.3, 0.5, 0.7)]
    jobs += [("theta", OH_TO_LP, 2**1000, THETA_LOW, 0.0), ("theta", OH_TO_LP, 2**4000, THETA_HIGH, 1.0)]
    recs = ctx.runner.map(_fit_job, jobs)
    dev_n = max(abs(r["exponent"] - (1 - r["theta_or_n"] / 2)) for r in recs[:3])
    low, high = recs[3]["exponent"], recs[4]["exponent"]
    ok = dev_n <= 0.02 and abs(low + 1) <= 0.1 and abs(high + 1.5) <= 0.1
    return SuiteResult("scaling", ok, recs, {"max_n_exponent_dev": dev_n, "theta_to_0": low, "theta_to_1": high})


def suite_log_factor(ctx: Context) -> SuiteResult:
    fit = itg.log_factor_check([2**k for k in range(6, 17)], theta=1.0)
    rec = fit.record()
    rec["theta_or_n"] = fit.meta["theta_used"]
    ok = fit.exponent > 0 and fit.r_squared >= 0.99
    return SuiteResult("log_factor", ok, [rec], {"slope": fit.exponent, "r_squared": fit.r_squared,
                                                 "theta_used": fit.meta["theta_used"]})


def suite_cp(ctx: Context) -> SuiteResult:
    jobs = [("n", OH_TO_CP, 0.7, LARGE_N, None), ("theta", OH_TO_CP, 2**1000, THETA_HALF, 0.5)]
    recs = ctx.runner.map(_fit_job, jobs)
    p = 1 / 0.7
    target = (p + 2) / (4 * p)
    ok = abs(recs[0]["exponent"] - target) <= 0.02 and abs(recs[1]["exponent"] + 0.5) <= 0.1
    return SuiteResult("cp", ok, recs, {"n_exponent": recs[0]["exponent"], "n_target": target,
                                        "half_blowup": recs[1]["exponent"]})


# ---------------------------------------------------------------------------
# 6. solver sandwich
# ---------------------------------------------------------------------------

def _solver_job(job) -> dict:
    theta, n, hw, res, cfg, tol = job
    spec = build_scenario(OH_TO_LP, theta, n)
    box = LogBox.symmetric(spec.dim, hw)
    grid = discretize(spec, box, res)
    M = box_min_integral(spec, box, tol)
    result = solve_decomposition(spec, grid, config=cfg, box_integral=M)
    rec = result.record(spec)
    rec["box_min_integral"] = M
    rec["relaxed_lower_bound"] = relaxed_lower_bound(spec, grid, M)
    rec["region_assignment_value"] = region_assignment_value(spec, None, grid)
    rec["objective_over_sqrt_integral"] = result.objective / math.sqrt(M)
    return rec


SOLVER_RATIO_BAND = (1 / 8, math.sqrt(8) * 1.5)


def suite_solver(ctx: Context) -> SuiteResult:
    s = ctx.settings
    jobs = [(th, n, s.solver_half_width, s.resolution, s.solver, s.oracle_tol)
            for th in (0.2, 0.5, 0.8) for n in (2**4, 2**6, 2**8, 2**10)]
    recs = ctx.runner.map(_solver_job, jobs)
    lo, hi = SOLVER_RATIO_BAND
    ok = all(
        r["relaxed_lower_bound"] <= r["objective"] <= r["region_assignment_value"]
        and lo <= r["objective_over_sqrt_integral"] <= hi
        for r in recs
    )
    ratios = [r["objective_over_sqrt_integral"] for r in recs]
    return SuiteResult("solver", ok, recs, {"min_ratio": min(ratios), "max_ratio": max(ratios)})


# ---------------------------------------------------------------------------
# 7. Orlicz suite
# ---------------------------------------------------------------------------

ORLICZ_N = [2**k for k in range(6, 13)]


def suite_orlicz(ctx: Context, theta: float = 0.5) -> SuiteResult:
    x, y = ctx.psi_samples([theta])[theta]
    F = convexify(x, y)
    ok_points = sandwich(x, y, F)
    fit = lp_inclusion_ratio(theta, ORLICZ_N, F)
    recs = [
        {"x": float(a), "psi": float(b), "envelope": float(e), "sandwich": bool(s)}
        for a, b, e, s in zip(x[1:], y[1:], F.y[1:], ok_points)
    ]
    ok = bool(ok_points.all()) and abs(fit.exponent) <= 0.03
    return SuiteResult("orlicz", ok, recs, {"theta": theta, "sandwich_all": bool(ok_points.all()),
                                            "inclusion_slope": fit.exponent, "sup_ratio": fit.meta["sup_ratio"]})


# ---------------------------------------------------------------------------
# 8. matrix norms
# ---------------------------------------------------------------------------

def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _single_matrix_job(job) -> dict:
    seed, p, idx = job
    rng = substream(seed, f"matnorm/single/{p}/{idx}")
    x = _cplx(rng, 6, 6)
    op = float(np.linalg.norm(x, 2))
    val = cp_norm(MatrixTuple(x), p, CpConfig(seed=int(rng.integers(2**31))))
    return {"check": "single", "p": p, "instance": idx, "value": val, "reference": op, "ok": abs(val / op - 1) <= 1e-6}


def _axioms_job(job) -> dict:
    seed, idx = job
    rng = substream(seed, f"matnorm/axioms/{idx}")
    K, m = 3, 4
    x, y = MatrixTuple(_cplx(rng, K, m, m)), MatrixTuple(_cplx(rng, K, m, m))
    lam = complex(*rng.standard_normal(2))
    cfg = CpConfig(seed=int(rng.integers(2**31)))
    norms = {"oh": oh_norm, "cp": lambda z: cp_norm(z, 1.5, cfg)}
    ok = True
    for f in norms.values():
        fx, fy, fxy, flx = f(x), f(y), f(x + y), f(x.scaled(lam))
        ok &= fx > 0 and fxy <= (fx + fy) * (1 + 1e-9) and abs(flx - abs(lam) * fx) <= 1e-9 * abs(lam) * fx
        ok &= f(MatrixTuple(np.zeros((K, m, m)))) == 0.0
    c = norms["cp"](x)
    ops = max(np.linalg.norm(z, 2) for z in x.mats)
    hs = math.sqrt(sum(np.linalg.norm(z) ** 2 for z in x.mats))
    ok &= ops * (1 - 1e-9) <= c <= hs * (1 + 1e-9)
    return {"check": "axioms", "p": 1.5, "instance": idx, "value": c, "reference": hs, "ok": bool(ok)}


def suite_matnorm(ctx: Context) -> SuiteResult:
    seed = ctx.settings.seed
    jobs = [(seed, p, i) for p in (1.25, 1.5, 1.75) for i in range(50)]
    recs = ctx.runner.map(_single_matrix_job, jobs)
    m = 6
    units = oh_norm(MatrixTuple(np.stack([np.diag(np.eye(m)[k]) for k in range(m)])))
    recs.append({"check": "diagonal_units", "p": "", "instance": 0, "value": units, "reference": 1.0,
                 "ok": units == 1.0})
    recs += ctx.runner.map(_axioms_job, [(seed, i) for i in range(200)])
    worst = max(abs(r["value"] / r["reference"] - 1) for r in recs if r["check"] == "single")
    ok = all(r["ok"] for r in recs)
    return SuiteResult("matnorm", ok, recs, {"single_max_rel_err": worst, "diagonal_units": units,
                                             "axiom_failures": sum(not r["ok"] for r in recs if r["check"] == "axioms")})


# ---------------------------------------------------------------------------
# 9. Maurey ratio
# ---------------------------------------------------------------------------

MAUREY_THETAS = (0.3, 0.5, 0.7)
MAUREY_N = [2**k for k in range(1, 9)]


def random_diagonal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Gaussian rows with log-uniform row scales over four decades."""
    return rng.standard_normal((n, n)) * 10.0 ** rng.uniform(-2, 2, size=(n, 1))


def suite_maurey(ctx: Context) -> SuiteResult:
    samples = ctx.psi_samples(MAUREY_THETAS)
    recs: list[dict] = []
    checks: dict = {}
    ok = True
    for th in MAUREY_THETAS:
        F = convexify(*samples[th])
        rng = substream(ctx.settings.seed, f"maurey/{th}")
        rand = [maurey_ratio(th, random_diagonal(rng, 8), F) for _ in range(100)]
        ident = [maurey_ratio(th, np.eye(n), F) for n in MAUREY_N]
        recs += [{"theta": th, "kind": "random", "n": 8, "index": i, "ratio": r} for i, r in enumerate(rand)]
        recs += [{"theta": th, "kind": "identity", "n": n, "index": 0, "ratio": r} for n, r in zip(MAUREY_N, ident)]
        band = max(rand + ident) / min(rand + ident)
        slope = itg.loglog_fit(MAUREY_N, np.log(ident)).exponent
        checks[f"theta={th}"] = {"band": band, "identity_slope": slope, "p": lp_exponent(th)}
        ok &= band <= 50 and abs(slope) <= 0.05
    return SuiteResult("maurey", bool(ok), recs, checks)


SUITES: dict[str, Callable[[Context], SuiteResult]] = {
    "closed_form": suite_closed_form,
    "table2": suite_table2,
    "scaling": suite_scaling,
    "log_factor": suite_log_factor,
    "cp": suite_cp,
    "solver": suite_solver,
    "orlicz": suite_orlicz,
    "matnorm": suite_matnorm,
    "maurey": suite_maurey,
}

# acceptance criterion number -> suite
CRITERIA = {1: "closed_form", 2: "table2", 3: "scaling", 4: "log_factor", 5: "cp", 6: "solver", 7: "orlicz",
            8: "matnorm", 9: "maurey"}


def run_suites(names: Sequence[str], settings: Settings, workers: int = 1) -> list[SuiteResult]:
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    with Runner(workers) as runner:
        ctx = Context(runner, settings)
        if "maurey" in names or "orlicz" in names:
            ctx.psi_samples(MAUREY_THETAS if "maurey" in names else (0.5,))
        return [SUITES[n](ctx) for n in names]
