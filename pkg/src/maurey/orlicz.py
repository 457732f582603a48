"""The Orlicz function built from the eight-term decomposition problem.

``Psi(x)`` is the decomposition value with squared L2 terms scaled by
``x**2`` and projective terms scaled by ``x``, on the ``n = 1`` weights.
It is sampled on a geometric ladder, convexified by the lower convex
envelope of the samples, and used as an Orlicz function.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .integrator import ScalingFit, loglog_fit
from .measures import OH_TO_LP, ParameterError, build_scenario
from .oracle import LogBox
from .sumsolve import Grid, SolverConfig, discretize, solve_decomposition


class DataError(ValueError):
    """Samples cannot be turned into an Orlicz function."""


class LadderError(ValueError):
    """An Orlicz norm probed the function beyond its sampled range."""


def default_ladder(lo: int = -12, hi: int = 12) -> np.ndarray:
    return 2.0 ** np.arange(lo, hi + 1)


def psi_grid(theta: float, half_width: float = 6.0, resolution: int = 8) -> Grid:
    """Grid for the ``n = 1`` weights on which ``Psi`` is evaluated."""
    spec = build_scenario(OH_TO_LP, theta, 1)
    return discretize(spec, LogBox.symmetric(spec.dim, half_width), resolution)


_CACHE: dict[tuple, float] = {}


def _grid_key(grid: Grid) -> tuple:
    return (grid.spec.kind, grid.spec.theta, grid.spec.n, grid.box.lo, grid.box.hi, grid.shape)


def psi_eval(theta: float, x: float, grid: Grid, config: SolverConfig | None = None) -> float:
    """``Psi(x)`` on ``grid``; results are cached per ``(theta, x, grid, config)``."""
    if x < 0:
        raise ParameterError("Psi is defined for x >= 0")
    spec = grid.spec
    if spec.kind != OH_TO_LP or spec.n != 1 or abs(spec.theta - theta) > 1e-15:
        raise ParameterError("grid must be built from the n = 1 scenario at the same theta")
    if x == 0:
        return 0.0
    cfg = config or SolverConfig()
    key = (theta, float(x), _grid_key(grid), cfg)
    if key not in _CACHE:
        powers = [2 if t.kind == "L2" else 1 for t in spec.terms]
        scales = [x * x if q == 2 else x for q in powers]
        res = solve_decomposition(spec, grid, config=cfg, scales=scales, powers=powers, lower_bound=0.0)
        _CACHE[key] = res.objective
    return _CACHE[key]


def _psi_job(args):
    theta, x, half_width, resolution, cfg = args
    return psi_eval(theta, x, psi_grid(theta, half_width, resolution), cfg)


def psi_samples(
    theta: float,
    xs: Sequence[float] | None = None,
    *,
    half_width: float = 6.0,
    resolution: int = 8,
    config: SolverConfig | None = None,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """``(x, Psi(x))`` on the ladder with 0 prepended."""
    xs = default_ladder() if xs is None else np.asarray(xs, dtype=float)
    cfg = config or SolverConfig()
    jobs = [(theta, float(x), half_width, resolution, cfg) for x in xs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(_psi_job, jobs))
    else:
        grid = psi_grid(theta, half_width, resolution)
        vals = [psi_eval(theta, x, grid, cfg) for x in xs]
    return np.concatenate([[0.0], xs]), np.concatenate([[0.0], vals])


@dataclass(frozen=True)
class PiecewiseConvexFunction:
    """Linear interpolation through convex data, last chord beyond the end."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or len(x) < 2:
            raise DataError("need matching 1-d abscissae and values, at least two")
        if x[0] != 0 or y[0] != 0:
            raise DataError("an Orlicz function starts at (0, 0)")
        if np.any(np.diff(x) <= 0):
            raise DataError("abscissae must increase")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.y) / np.diff(self.x)

    def is_convex(self, rtol: float = 1e-12) -> bool:
        s = self.slopes
        return bool(np.all(np.diff(s) >= -rtol * np.maximum(1.0, np.abs(s[1:]))))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.x, self.y)
        over = t > self.x[-1]
        if np.any(over):
            out = np.where(over, self.y[-1] + self.slopes[-1] * (t - self.x[-1]), out)
        return out if out.ndim else float(out)

    def inverse(self, v: float) -> float:
        """Smallest ``t`` with ``F(t) = v`` (``v > 0``)."""
        if v <= 0:
            return 0.0
        if v > self.y[-1]:
            return float(self.x[-1] + (v - self.y[-1]) / self.slopes[-1])
        k = int(np.searchsorted(self.y, v))
        x0, x1, y0, y1 = self.x[k - 1], self.x[k], self.y[k - 1], self.y[k]
        return float(x0 + (v - y0) * (x1 - x0) / (y1 - y0))

    def to_table(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for a, b in zip(self.x, self.y):
                w.writerow([repr(float(a)), repr(float(b))])

    @classmethod
    def from_table(cls, path) -> "PiecewiseConvexFunction":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([float(r["x"]) for r in rows]), np.array([float(r["value"]) for r in rows]))


def convexify(x: Sequence[float], y: Sequence[float]) -> PiecewiseConvexFunction:
    """Lower convex envelope of the sampled graph, on the same abscissae.

    Values at abscissae that are not hull vertices are read off the hull.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 8:
        raise DataError("need at least 8 samples including 0")
    if x[0] != 0 or y[0] != 0:
        raise DataError("samples must start at (0, 0)")
    if np.any(np.diff(y) < 0):
        raise DataError("samples are not nondecreasing")
    hull: list[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b when it lies on or above the chord a -> i
            if (y[b] - y[a]) * (x[i] - x[a]) >= (y[i] - y[a]) * (x[b] - x[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    env = np.interp(x, x[hull], y[hull])
    env[hull] = y[hull]
    return PiecewiseConvexFunction(x, env)


def sandwich(psi_x, psi_y, F: PiecewiseConvexFunction, rtol: float = 1e-9) -> np.ndarray:
    """``Psi(x/2) <= F(x) <= Psi(x)`` at every sample whose half is also a sample.

    Returns one boolean per positive sample; samples without a sampled half
    only check the upper inequality.
    """
    xs = np.asarray(psi_x, dtype=float)
    ys = np.asarray(psi_y, dtype=float)
    lookup = {float(a): float(b) for a, b in zip(xs, ys)}
    ok = []
    for a, b in zip(xs[1:], ys[1:]):
        f = F(a)
        upper = f <= b * (1 + rtol) + 1e-300
        half = lookup.get(float(a) / 2)
        lower = True if half is None else half <= f * (1 + rtol) + 1e-300
        ok.append(bool(upper and lower))
    return np.array(ok)


def orlicz_norm(F: PiecewiseConvexFunction, a, rtol: float = 1e-10, check_ladder: bool = True) -> float:
    """``inf{rho : sum F(|a_i| / rho) <= 1}`` by bisection."""
    a = np.abs(np.asarray(a, dtype=complex if np.iscomplexobj(a) else float)).ravel()
    a = a[a > 0]
    if a.size == 0:
        return 0.0
    top = float(a.max())
    lo = top / F.inverse(1.0)  # the largest entry alone already gives sum >= 1
    hi = top / F.inverse(1.0 / a.size)  # every entry at most the largest
    f = lambda rho: float(np.sum(F(a / rho)))  # noqa: E731
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    if check_ladder and top / hi > F.x[-1]:
        raise LadderError(f"probed x = {top / hi:.3g} beyond the sampled range {F.x[-1]:.3g}")
    return hi


def identity_orlicz_norm(
    theta: float, n: int, grid: Grid | None = None, config: SolverConfig | None = None, *, half_width: float = 6.0,
    resolution: int = 8,
) -> float:
    """Decomposition value of the constant 1 with ``n^{1/2}`` on L2 and ``n`` on projective terms.

    The weights of the ``n``-scenario already carry those factors, so this
    is the plain solver value there.
    """
    if grid is None:
        spec = build_scenario(OH_TO_LP, theta, n)
        grid = discretize(spec, LogBox.symmetric(spec.dim, half_width), resolution)
    return solve_decomposition(grid.spec, grid, config=config or SolverConfig(), lower_bound=0.0).objective


def lp_exponent(theta: float) -> float:
    """``p`` with ``1/p = 1 - theta/2``."""
    return 2.0 / (2.0 - theta)


def lp_inclusion_ratio(theta: float, n_list: Sequence[int], F: PiecewiseConvexFunction) -> ScalingFit:
    """Fit of ``||sum_{i<=n} e_i||_F / n^{1/p}`` against ``n``; the sup is in ``meta``."""
    p = lp_exponent(theta)
    ratios = [orlicz_norm(F, np.ones(int(n))) / n ** (1 / p) for n in n_list]
    fit = loglog_fit(n_list, np.log(ratios), label="lp inclusion", scenario=OH_TO_LP, fixed=theta)
    fit.meta["sup_ratio"] = max(ratios)
    fit.meta["ratios"] = ratios
    return fit


__all__ = [
    "DataError",
    "LadderError",
    "PiecewiseConvexFunction",
    "convexify",
    "default_ladder",
    "identity_orlicz_norm",
    "lp_exponent",
    "lp_inclusion_ratio",
    "orlicz_norm",
    "psi_eval",
    "psi_grid",
    "psi_samples",
    "sandwich",
]
