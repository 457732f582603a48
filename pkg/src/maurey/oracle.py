"""Independent quadrature and Monte Carlo estimates of min-integrals.

Everything runs in log coordinates, where each weight is ``exp(c + g.X)``.
The innermost variable is integrated exactly: for fixed outer coordinates
the minimum is the lower envelope of a few lines, whose kinks are the
pairwise crossings.  Outer variables use tanh-sinh rules mapped onto the
(possibly coordinate-dependent) limits, which copes with the sharp
boundary layers an exponential produces on a long interval.  For the two
built-in scenarios the box is split along the region partition, so the outer
integrands are smooth; the integrand is still the minimum over all terms,
which keeps the partition itself under test.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .measures import OH_TO_CP, OH_TO_LP, LogAffine, ParameterError, Region, ScenarioSpec, derive_regions


# relative allowance for floating-point rounding in the summed panels
ROUNDING_FLOOR = 1e-12


class UnboundedTailError(ArithmeticError):
    """Some outward direction has no decaying bound; the box must grow."""


@dataclass(frozen=True)
class LogBox:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ParameterError("lo and hi have different lengths")
        if any(not a < b for a, b in zip(self.lo, self.hi)):
            raise ParameterError("box needs lo < hi in every coordinate")
        object.__setattr__(self, "lo", tuple(float(a) for a in self.lo))
        object.__setattr__(self, "hi", tuple(float(b) for b in self.hi))

    @classmethod
    def symmetric(cls, dim: int, half_width: float, center: Sequence[float] | None = None) -> "LogBox":
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls(tuple(c - half_width), tuple(c + half_width))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains_origin(self) -> bool:
        return all(a <= 0 <= b for a, b in zip(self.lo, self.hi))

    def scaled(self, factor: float) -> "LogBox":
        return LogBox(tuple(factor * a for a in self.lo), tuple(factor * b for b in self.hi))

    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    quadrature_error: float
    tail_bound: float
    evaluations: int
    flagged: bool = False
    method: str = "quad"

    @property
    def interval(self) -> tuple[float, float]:
        """Range certain to hold the full-domain integral (quadrature case)
        or the 95% interval (Monte Carlo case)."""
        if self.method == "mc":
            return self.value - self.quadrature_error, self.value + self.quadrature_error
        return self.value - self.quadrature_error, self.value + self.quadrature_error + self.tail_bound

    def covers(self, x: float) -> bool:
        lo, hi = self.interval
        return lo <= x <= hi


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _tanh_sinh(level: int, t_max: float = 3.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes on [0, 1] as ``(s, 1 - s, w)`` with step ``2**-level``.

    ``s`` and ``1 - s`` are both computed directly so that nodes crowding an
    endpoint keep full relative precision.
    """
    h = 2.0**-level
    k = np.arange(-int(t_max / h), int(t_max / h) + 1)
    t = k * h
    u = 0.5 * math.pi * np.sinh(t)
    s = 1.0 / (1.0 + np.exp(-2.0 * u))
    sc = 1.0 / (1.0 + np.exp(2.0 * u))
    w = h * 0.5 * math.pi * np.cosh(t) / (2.0 * np.cosh(u) ** 2)
    keep = w > 0
    return s[keep], sc[keep], w[keep]


def _exp_segment(c, g, y0, y1):
    """``int_{y0}^{y1} exp(c + g y) dy`` elementwise, with y1 >= y0."""
    d = y1 - y0
    base = np.exp(c + g * y0)
    gd = g * d
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.where(np.abs(gd) > 1e-12, np.expm1(gd) / np.where(g == 0, 1.0, g), d * (1 + 0.5 * gd))
    return np.where(d > 0, base * ratio, 0.0)


def envelope_integral(c: np.ndarray, g: np.ndarray, a: np.ndarray, b: np.ndarray, chunk: int = 20000) -> np.ndarray:
    """Exact ``int_a^b exp(min_l (c_l + g_l y)) dy`` for each row of ``c``.

    ``c`` has shape ``(M, L)``, ``g`` shape ``(L,)``; ``a, b`` shape ``(M,)``.
    Rows with ``b <= a`` give 0.
    """
    c = np.atleast_2d(np.asarray(c, dtype=float))
    g = np.asarray(g, dtype=float)
    a = np.broadcast_to(np.asarray(a, dtype=float), c.shape[:1])
    b = np.broadcast_to(np.asarray(b, dtype=float), c.shape[:1])
    out = np.empty(c.shape[0])
    pairs = [(i, j) for i, j in itertools.combinations(range(len(g)), 2) if g[i] != g[j]]
    pi = np.array([p[0] for p in pairs], dtype=int)
    pj = np.array([p[1] for p in pairs], dtype=int)
    for start in range(0, c.shape[0], chunk):
        sl = slice(start, start + chunk)
        cc, aa = c[sl], a[sl]
        bb = np.maximum(b[sl], aa)
        if len(pairs):
            cross = (cc[:, pj] - cc[:, pi]) / (g[pi] - g[pj])
            cross = np.clip(cross, aa[:, None], bb[:, None])
            pts = np.concatenate([aa[:, None], cross, bb[:, None]], axis=1)
            pts.sort(axis=1)
        else:
            pts = np.stack([aa, bb], axis=1)
        y0, y1 = pts[:, :-1], pts[:, 1:]
        mid = 0.5 * (y0 + y1)
        vals = cc[:, None, :] + mid[:, :, None] * g[None, None, :]
        k = np.argmin(vals, axis=2)
        ck = np.take_along_axis(cc, k.reshape(len(cc), -1), axis=1).reshape(k.shape)
        out[sl] = _exp_segment(ck, g[k], y0, y1).sum(axis=1)
    return out


# A level of a nested integral: variable index and affine limits over
# (log n, X_1..X_d); None stands for the box face.
_Level = tuple[int, LogAffine | None, LogAffine | None]


def _nested(G, c, levels: Sequence[_Level], box: LogBox, logn: float, level: int) -> tuple[float, int]:
    """Nested rule: tanh-sinh on all levels but the last, exact envelope on the last."""
    d = G.shape[1]
    s, sc, w = _tanh_sinh(level)
    X = np.zeros((1, d))
    W = np.ones(1)
    for var, lo_f, hi_f in levels[:-1]:
        lo, hi = _limits(var, lo_f, hi_f, box, logn, X)
        length = np.maximum(hi - lo, 0.0)
        live = length > 0
        X, W, lo, hi, length = X[live], W[live], lo[live], hi[live], length[live]
        # left half measured from lo, right half from hi, for precision
        node = np.where(s[None, :] <= 0.5, lo[:, None] + length[:, None] * s[None, :], hi[:, None] - length[:, None] * sc[None, :])
        X = np.repeat(X, len(s), axis=0)
        X[:, var] = node.ravel()
        W = (W[:, None] * length[:, None] * w[None, :]).ravel()
        keep = W > 0
        X, W = X[keep], W[keep]
    var, lo_f, hi_f = levels[-1]
    lo, hi = _limits(var, lo_f, hi_f, box, logn, X)
    others = [k for k in range(d) if k != var]
    ceff = c[None, :] + X[:, others] @ G[:, others].T
    inner = envelope_integral(ceff, G[:, var], lo, hi)
    return float(np.sum(W * inner)), len(W)


def _limits(var, lo_f, hi_f, box, logn, X):
    lo = np.full(len(X), box.lo[var])
    hi = np.full(len(X), box.hi[var])
    if lo_f is not None:
        lo = np.maximum(lo, lo_f.evaluate(logn, X))
    if hi_f is not None:
        hi = np.minimum(hi, hi_f.evaluate(logn, X))
    return lo, hi


def _adaptive(G, c, levels, box, logn, tol, min_level=1, max_level=5):
    """Halve the tanh-sinh step until the error estimate meets ``tol``.

    With three successive results the estimate is the usual quadratic
    extrapolation ``d_m**2 / d_{m-1}`` (the rule roughly doubles its
    correct digits per halving), capped by the plain difference ``d_m``.
    """
    results = []
    evals = 0
    err = math.inf
    flagged = True
    for lev in range(min_level, max_level + 1):
        cur, n_ev = _nested(G, c, levels, box, logn, lev)
        evals += n_ev
        results.append(cur)
        if len(levels) == 1:
            return cur, 0.0, evals, False
        if len(results) >= 2:
            d1 = abs(results[-1] - results[-2])
            err = d1
            if len(results) >= 3:
                d0 = abs(results[-2] - results[-3])
                if d0 > 0:
                    err = min(d1, d1 * d1 / d0)
            if err <= tol * abs(cur) or cur == 0.0:
                flagged = False
                break
    return results[-1], err, evals, flagged


def _const(dim: int, value: float) -> LogAffine:
    return LogAffine((0,) * (dim + 1), float(value))


def _kinks_2d(G, c, box: LogBox, rtol: float = 1e-9) -> list[float]:
    """First coordinates at which the envelope changes combinatorial type.

    These are the vertices of the lower envelope inside the box: triple
    crossings of three lines and pairwise crossings on a face of the second
    coordinate.
    """
    L = len(G)
    pts = []
    for i, j in itertools.combinations(range(L), 2):
        da = G[i, 0] - G[j, 0]
        if da == 0:
            continue
        for Y in (box.lo[1], box.hi[1]):
            x = -((c[i] - c[j]) + (G[i, 1] - G[j, 1]) * Y) / da
            pts.append(((x, Y), (i, j)))
    for i, j, k in itertools.combinations(range(L), 3):
        A = np.array([G[i] - G[j], G[i] - G[k]])
        if abs(np.linalg.det(A)) < 1e-14:
            continue
        xy = np.linalg.solve(A, [c[j] - c[i], c[k] - c[i]])
        pts.append(((xy[0], xy[1]), (i, j, k)))
    out = set()
    for (x, y), involved in pts:
        if not (box.lo[0] < x < box.hi[0] and box.lo[1] <= y <= box.hi[1]):
            continue
        vals = c + G @ np.array([x, y])
        if max(vals[list(involved)]) <= vals.min() + rtol * (1 + abs(vals.min())):
            out.add(float(x))
    return sorted(out)


def _box_levels(dim: int) -> list[_Level]:
    return [(k, None, None) for k in range(dim)]


def _region_levels(spec: ScenarioSpec, region: Region) -> list[_Level]:
    return [(spec.variables.index(b.var), b.lower, b.upper) for b in region.bounds]


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def quad_box(
    spec: ScenarioSpec,
    box: LogBox,
    tol: float = 1e-6,
    *,
    region: Region | None = None,
    partition: bool | None = None,
    max_level: int = 5,
    with_tail: bool = True,
) -> OracleEstimate:
    """Quadrature of ``min_l w_l`` over ``box`` (Haar measure, log coordinates).

    ``region`` restricts the domain to one piece of the partition.  With
    ``partition`` (default for the built-in scenarios) the box is split along
    the derived regions and the pieces are summed.
    """
    if tol <= 0:
        raise ParameterError("tol must be > 0")
    if box.dim != spec.dim:
        raise ParameterError("box dimension does not match the scenario")
    G, c = spec.log_weight_matrix()
    logn = math.log(spec.n)
    if partition is None:
        partition = region is None and spec.kind in (OH_TO_LP, OH_TO_CP) and spec.dim > 1
    if region is not None:
        pieces = [_region_levels(spec, region)]
    elif partition:
        pieces = [_region_levels(spec, r) for r in derive_regions(spec)]
    elif spec.dim == 2:
        cuts = [box.lo[0], *_kinks_2d(G, c, box), box.hi[0]]
        pieces = [
            [(0, _const(2, a), _const(2, b)), (1, None, None)] for a, b in zip(cuts[:-1], cuts[1:]) if b > a
        ]
    else:
        pieces = [_box_levels(spec.dim)]
    total = err = 0.0
    evals = 0
    flagged = False
    for levels in pieces:
        v, e, n_ev, fl = _adaptive(G, c, levels, box, logn, tol, max_level=max_level)
        total += v
        err += e
        evals += n_ev
        flagged |= fl
    tail = tail_bound(spec, box) if with_tail else 0.0
    err += ROUNDING_FLOOR * abs(total)
    return OracleEstimate(total, err, tail, evals, flagged)


def _decay_candidates(G, c, pattern) -> tuple[np.ndarray, np.ndarray]:
    """Single terms and two-term weighted geometric means decaying along ``pattern``.

    ``min(e^a, e^b) <= e^{lam a + (1 - lam) b}`` makes every convex
    combination of two log-weights a valid majorant of the minimum.
    """
    out = [m for m in range(len(pattern)) if pattern[m] != 0]
    sig = np.array([pattern[m] for m in out], dtype=float)
    gs, cs = [], []
    for l in range(len(G)):
        if np.all(sig * G[l, out] < 0):
            gs.append(G[l])
            cs.append(c[l])
    for i, j in itertools.combinations(range(len(G)), 2):
        lo, hi = 0.0, 1.0
        ok = True
        for m, sg in zip(out, sig):
            # need sg * (G[j,m] + lam (G[i,m] - G[j,m])) < 0
            a0, a1 = sg * G[j, m], sg * (G[i, m] - G[j, m])
            if a1 == 0:
                ok = a0 < 0
            elif a1 > 0:
                hi = min(hi, -a0 / a1)
            else:
                lo = max(lo, -a0 / a1)
            if not ok or lo >= hi:
                ok = False
                break
        if ok and lo < hi:
            for lam in lo + (hi - lo) * np.array([0.25, 0.5, 0.75]):
                gs.append(lam * G[i] + (1 - lam) * G[j])
                cs.append(lam * c[i] + (1 - lam) * c[j])
    return np.array(gs).reshape(-1, G.shape[1]), np.array(cs)


def tail_bound(spec: ScenarioSpec, box: LogBox, cell_width: float = 1.0) -> float:
    """Upper bound on the mass of ``min_l w_l`` outside ``box``.

    The complement splits into slabs labelled by which coordinates lie
    below, inside or above the box.  On a slab the minimum is bounded by any
    majorant that decays in every outward coordinate; those coordinates are
    integrated out exactly.  Across the box face the face is cut into cells
    and each cell contributes the smallest exact integral among the
    majorants, so no quadrature error enters.
    """
    G, c = spec.log_weight_matrix()
    return _tail_bound(G, c, box, cell_width)


def _log_cell_integrals(g: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """``log int exp(g x)`` over consecutive cells, shape ``(len(g), cells)``."""
    x0, x1 = edges[:-1][None, :], edges[1:][None, :]
    d = x1 - x0
    g = g[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = g * x1 + np.log(-np.expm1(-g * d)) - np.log(np.abs(g))
        neg = g * x0 + np.log(-np.expm1(g * d)) - np.log(np.abs(g))
    return np.where(g > 0, pos, np.where(g < 0, neg, np.log(d)))


def _cell_bound(gs, ceff, lo, hi, width) -> float:
    m = gs.shape[1]
    logI = []
    for k in range(m):
        cells = max(1, int(math.ceil((hi[k] - lo[k]) / width)))
        logI.append(_log_cell_integrals(gs[:, k], np.linspace(lo[k], hi[k], cells + 1)))
    # accumulate over the first axis in slices to bound memory
    total = 0.0
    rest = np.zeros((len(ceff),) + (1,) * (m - 1))
    for k in range(1, m):
        shape = [len(ceff)] + [1] * (m - 1)
        shape[k] = logI[k].shape[1]
        rest = rest + logI[k].reshape(shape)
    for j in range(logI[0].shape[1]):
        block = ceff.reshape((-1,) + (1,) * (m - 1)) + logI[0][:, j].reshape((-1,) + (1,) * (m - 1)) + rest
        total += float(np.exp(block.min(axis=0)).sum())
    return total


def _tail_bound(G, c, box: LogBox, width: float) -> float:
    d = G.shape[1]
    total = 0.0
    for pattern in itertools.product((-1, 0, 1), repeat=d):
        if not any(pattern):
            continue
        gs, cs = _decay_candidates(G, c, pattern)
        if len(gs) == 0:
            raise UnboundedTailError(f"no decaying majorant outside the box along {pattern}")
        ceff = cs.copy()
        for m, sg in enumerate(pattern):
            if sg:
                edge = box.hi[m] if sg > 0 else box.lo[m]
                ceff = ceff + gs[:, m] * edge - np.log(np.abs(gs[:, m]))
        inside = [m for m in range(d) if pattern[m] == 0]
        if not inside:
            total += float(np.exp(ceff.min()))
            continue
        lo = [box.lo[m] for m in inside]
        hi = [box.hi[m] for m in inside]
        total += _cell_bound(gs[:, inside], ceff, lo, hi, width)
    return total


def auto_box(spec: ScenarioSpec, rel: float = 1e-8, start: float = 20.0, max_half_width: float = 640.0) -> LogBox:
    """Smallest symmetric box (doubling from ``start``) whose tail is below ``rel`` of the estimate."""
    hw = start
    while hw <= max_half_width:
        box = LogBox.symmetric(spec.dim, hw)
        try:
            tail = tail_bound(spec, box)
        except UnboundedTailError:
            raise
        est = quad_box(spec, box, tol=1e-4, with_tail=False).value
        if tail <= rel * est:
            return box
        hw *= 2
    raise UnboundedTailError(f"tail still above {rel} of the estimate at half-width {max_half_width}")


def envelope_peak(G: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, float]:
    """Maximiser of ``min_l (c_l + G_l . X)``, by linear programming."""
    L, d = G.shape
    # variables (X, tau); maximise tau s.t. tau - G_l X <= c_l
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    A = np.hstack([-G, np.ones((L, 1))])
    res = linprog(cost, A_ub=A, b_ub=c, bounds=[(None, None)] * (d + 1), method="highs")
    if res.status != 0:
        raise UnboundedTailError("the minimum of the log-weights is unbounded above")
    return res.x[:d], float(res.x[-1])


def _orthant_decay(G: np.ndarray, up: np.ndarray, dn: np.ndarray) -> float:
    """Smallest decay of ``min_l G_l . d`` per unit of ``sum rate_m |d_m|``.

    Solved as one small linear program per orthant of ``d``.
    """
    L, d = G.shape
    best = math.inf
    for signs in itertools.product((-1.0, 1.0), repeat=d):
        sg = np.array(signs)
        rates = np.where(sg > 0, up, dn)
        # variables (y >= 0, tau) with d = sg * y; minimise tau
        # s.t. -G_l . (sg y) <= tau, sum rates y = 1
        cost = np.zeros(d + 1)
        cost[-1] = 1.0
        A = np.hstack([-(G * sg), -np.ones((L, 1))])
        res = linprog(
            cost,
            A_ub=A,
            b_ub=np.zeros(L),
            A_eq=np.append(rates, 0.0)[None, :],
            b_eq=[1.0],
            bounds=[(0, None)] * d + [(None, None)],
            method="highs",
        )
        if res.status != 0:
            raise UnboundedTailError("decay program failed")
        best = min(best, float(res.x[-1]))
    if best <= 0:
        raise UnboundedTailError("the integrand does not decay in every direction")
    return best


def mc_estimate(spec: ScenarioSpec, seed: int | np.random.Generator, N: int = 10_000) -> OracleEstimate:
    """Importance-sampling estimate of the full-domain min-integral.

    The proposal is an equal mixture with one component per term, each a
    product of asymmetric Laplace laws centred at the peak of the
    log-envelope.  A component takes its term's own decay rates where the
    term decays and the envelope's coordinate rates elsewhere, scaled down
    until the integrand decays at least as fast as the component in every
    direction; the squared ratio is then integrable.  The half-width of the
    returned interval is 1.96 standard errors.
    """
    if N < 1000:
        raise ParameterError("mc_estimate needs N >= 1000")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    G, c = spec.log_weight_matrix()
    L, d = G.shape
    x0, _ = envelope_peak(G, c)
    env_up = -G.min(axis=0)
    env_dn = G.max(axis=0)
    if np.any(env_up <= 0) or np.any(env_dn <= 0):
        raise UnboundedTailError("some coordinate direction does not decay")
    up = np.where(G < 0, -G, env_up[None, :])
    dn = np.where(G > 0, G, env_dn[None, :])
    for l in range(L):
        kappa = min(1.0, _orthant_decay(G, up[l], dn[l]))
        up[l] *= kappa
        dn[l] *= kappa
    comp = rng.integers(0, L, size=N)
    ru, rd = up[comp], dn[comp]
    side = rng.random((N, d)) < rd / (ru + rd)
    e = rng.exponential(1.0, size=(N, d))
    Y = np.where(side, e / ru, -e / rd)
    X = x0 + Y
    logq_comp = np.empty((N, L))
    for l in range(L):
        a, b = up[l], dn[l]
        logq_comp[:, l] = np.sum(np.log(a * b / (a + b)) - np.where(Y > 0, a * Y, -b * Y), axis=1)
    m = logq_comp.max(axis=1)
    logq = m + np.log(np.mean(np.exp(logq_comp - m[:, None]), axis=1))
    logf = np.min(X @ G.T + c, axis=1)
    r = np.exp(logf - logq)
    mean = float(r.mean())
    se = float(r.std(ddof=1) / math.sqrt(N))
    return OracleEstimate(mean, 1.96 * se, 0.0, N, method="mc")


__all__ = [
    "LogBox",
    "OracleEstimate",
    "UnboundedTailError",
    "auto_box",
    "envelope_integral",
    "envelope_peak",
    "mc_estimate",
    "quad_box",
    "tail_bound",
]
