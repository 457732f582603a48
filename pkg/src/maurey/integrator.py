"""Closed-form min-integrals over iterated monomial regions.

In log coordinates a region integral is an iterated integral of
``exp(affine)`` with affine limits.  The antiderivative of
``X^k exp(bX)`` is again of that form, so each integration step maps an
exponential polynomial to an exponential polynomial in the remaining
variables.  Exponents are kept as exact rationals; polynomial coefficients
are floats.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial
from typing import Sequence

import numpy as np

from .measures import (
    OH_TO_CP,
    OH_TO_LP,
    OH_TO_LP_RELAXED,
    LogAffine,
    ParameterError,
    Region,
    ScenarioSpec,
    build_scenario,
    derive_regions,
)

POLE_TOL = 1e-9


class DivergenceError(ArithmeticError):
    """An inner integral diverges at an infinite limit."""


class PoleError(ArithmeticError):
    """An exponent is numerically indistinguishable from a pole."""


class FitError(ValueError):
    pass


Key = tuple[tuple[int, ...], tuple[Fraction, ...]]


class ExpPoly:
    """``sum coef * prod X_k^{p_k} * exp(b . X)`` over variables ``X_0..X_d``.

    ``X_0`` is ``log n`` and is never integrated.
    """

    def __init__(self, dim: int, terms: dict[Key, float] | None = None):
        self.dim = dim
        self.terms: dict[Key, float] = dict(terms or {})

    @classmethod
    def exp_affine(cls, f: LogAffine) -> "ExpPoly":
        dim = len(f.coeffs) - 1
        return cls(dim, {((0,) * (dim + 1), f.coeffs): math.exp(f.const)})

    def integrate(self, var: int, lower: LogAffine | None, upper: LogAffine | None, name: str = "") -> "ExpPoly":
        """Integrate over ``X_var`` from ``lower`` to ``upper`` (None = -inf / +inf)."""
        out: dict[Key, float] = defaultdict(float)
        label = name or f"X{var}"
        for (powers, exps), coef in self.terms.items():
            k, b = powers[var], exps[var]
            if b != 0 and abs(b) < POLE_TOL:
                raise PoleError(f"exponent {float(b):.3g} in {label} is within {POLE_TOL} of a pole")
            anti = _antiderivative(k, b)
            for limit, sign in ((upper, 1.0), (lower, -1.0)):
                if limit is None:
                    at_plus = sign > 0
                    if b == 0 or (b > 0) == at_plus:
                        raise DivergenceError(
                            f"integral over {label} diverges at {'+' if at_plus else '-'}infinity (exponent {b})"
                        )
                    continue
                for j, c in anti:
                    _substitute(out, powers, exps, var, j, b, limit, sign * coef * c)
        return ExpPoly(self.dim, {k: v for k, v in out.items() if v != 0.0})

    def log_abs_terms(self, logn: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-term ``log|value|`` and sign at ``X_0 = logn`` (other variables absent)."""
        logs, signs = [], []
        for (powers, exps), coef in self.terms.items():
            if any(powers[1:]) or any(exps[1:]):
                raise ValueError("expression still depends on integration variables")
            val = coef * (logn ** powers[0] if powers[0] else 1.0)
            if val == 0:
                continue
            logs.append(math.log(abs(val)) + float(exps[0]) * logn)
            signs.append(math.copysign(1.0, val))
        return np.array(logs), np.array(signs)

    def log_value(self, logn: float) -> float:
        logs, signs = self.log_abs_terms(logn)
        if logs.size == 0:
            return -math.inf
        m = logs.max()
        parts = np.exp(logs - m)
        total = float(np.sum(signs * parts))
        if total <= 1e-12 * float(np.sum(parts)):
            # empty region (e.g. a band between n^{-1/2} and 1 at n = 1): pure cancellation
            if total >= -1e-12 * float(np.sum(parts)):
                return -math.inf
            raise ArithmeticError("closed form evaluated to a negative value")
        return m + math.log(total)

    def value(self, logn: float) -> float:
        logs, signs = self.log_abs_terms(logn)
        if logs.size == 0:
            return 0.0
        m = logs.max()
        return float(math.exp(m) * np.sum(signs * np.exp(logs - m)))


def _antiderivative(k: int, b: Fraction) -> list[tuple[int, float]]:
    """Coefficients ``(j, c)`` with ``int X^k e^{bX} = e^{bX} sum c X^j``."""
    if b == 0:
        return [(k + 1, 1.0 / (k + 1))]
    bf = float(b)
    return [(k - j, (-1) ** j * factorial(k) / factorial(k - j) / bf ** (j + 1)) for j in range(k + 1)]


def _substitute(out, powers, exps, var, j, b, limit: LogAffine, coef):
    """Add ``coef * (others) * X^j e^{bX}`` with ``X := limit`` into ``out``."""
    lim = limit.coeffs
    base_exps = tuple(e + b * lim[m] if m != var else Fraction(0) for m, e in enumerate(exps))
    coef = coef * math.exp(float(b) * limit.const) if b != 0 else coef
    base_powers = list(powers)
    base_powers[var] = 0
    # expand (const + sum_m lim[m] X_m)^j
    parts = [(m, float(lim[m])) for m in range(len(lim)) if m != var and lim[m] != 0]
    if limit.const != 0:
        parts.append((-1, limit.const))
    for combo, mult in _multinomial(parts, j):
        p = list(base_powers)
        c = coef * mult
        for m, e in combo:
            if m >= 0:
                p[m] += e
        out[(tuple(p), base_exps)] += c


def _multinomial(parts: list[tuple[int, float]], j: int):
    """Expand ``(sum a_m X_m)^j`` into ``([(m, e_m)], coefficient)`` pieces."""
    if j == 0:
        yield [], 1.0
        return
    if not parts:
        return
    (m, a), rest = parts[0], parts[1:]
    for e in range(j, -1, -1):
        if not rest and e != j:
            continue
        head = comb(j, e) * a**e
        if head == 0:
            continue
        for combo, mult in _multinomial(rest, j - e):
            yield ([(m, e)] if e else []) + combo, head * mult


# ---------------------------------------------------------------------------
# Region and scenario integrals
# ---------------------------------------------------------------------------

def region_expression(spec: ScenarioSpec, region: Region) -> ExpPoly:
    """Closed form of the region integral as a function of ``log n``."""
    f = spec.log_affines()[region.active_term]
    expr = ExpPoly.exp_affine(f)
    for b in reversed(region.bounds):
        k = spec.variables.index(b.var) + 1
        expr = expr.integrate(k, b.lower, b.upper, name=b.var)
    return expr


def integrate_region(spec: ScenarioSpec, region: Region) -> float:
    """Exact integral of the active relaxed weight over ``region`` (Haar measure)."""
    return region_expression(spec, region).value(math.log(spec.n))


def log_integrate_region(spec: ScenarioSpec, region: Region) -> float:
    return region_expression(spec, region).log_value(math.log(spec.n))


def integrate_min(spec: ScenarioSpec, regions: Sequence[Region] | None = None) -> float:
    """``int min_l w_l`` over the whole domain, summed region by region."""
    return math.exp(log_integrate_min(spec, regions))


def log_integrate_min(spec: ScenarioSpec, regions: Sequence[Region] | None = None) -> float:
    """Logarithm of :func:`integrate_min`; usable where the value overflows."""
    regions = derive_regions(spec) if regions is None else regions
    logs = np.array([log_integrate_region(spec, r) for r in regions])
    m = logs.max()
    return float(m + math.log(np.sum(np.exp(logs - m))))


# ---------------------------------------------------------------------------
# Tabulated region targets
# ---------------------------------------------------------------------------

# sqrt(integral) targets: (n exponent in units of theta, theta power, (1-theta) power)
TABLE2_TARGETS: dict[tuple[int, int], tuple[str, float, float]] = {
    (1, 1): ("(3-theta)/4", -1.0, -0.5),
    (1, 2): ("(3-theta)/4", -0.5, -1.0),
    (1, 3): ("(3-theta)/4", -0.5, -1.0),
    (2, 1): ("1-theta/2", -1.0, -1.0),
    (2, 2): ("1-theta/2", -0.5, -1.0),
    (2, 3): ("1-theta/2", -0.5, -1.5),
    (3, 1): ("(3-theta)/4", -1.0, -0.5),
    (3, 2): ("(3-theta)/4", -0.5, -1.0),
    (3, 3): ("(3-theta)/4", -0.5, -1.0),
    (4, 1): ("1-theta/2", -1.0, -1.0),
    (4, 2): ("1-theta/2", -0.5, -1.5),
    (4, 3): ("1-theta/2", -0.5, -1.5),
}


def table2_target(region_id: tuple[int, int], theta: float, n: float) -> float:
    law, a, b = TABLE2_TARGETS[region_id]
    e = (3 - theta) / 4 if law.startswith("(3") else 1 - theta / 2
    return n**e * theta**a * (1 - theta) ** b


def a11_closed_form(theta: float, n: float) -> float:
    """Exact A_{1,1} integral ``n^{(3-theta)/2} / (4 theta^2 (1-theta))``."""
    return n ** ((3 - theta) / 2) / (4 * theta**2 * (1 - theta))


@dataclass(frozen=True)
class RegionIntegral:
    region_id: tuple[int, int]
    value: float
    sqrt_value: float
    target: float | None
    ratio: float | None
    scenario: str = OH_TO_LP
    theta: float = float("nan")
    n: int = 0

    def record(self) -> dict:
        return {
            "scenario": self.scenario,
            "theta": self.theta,
            "n": self.n,
            "region_id": f"A{self.region_id[0]},{self.region_id[1]}",
            "integral": self.value,
            "sqrt_integral": self.sqrt_value,
            "target": self.target,
            "ratio": self.ratio,
        }


def table2_report(theta: float, n: int) -> list[RegionIntegral]:
    if not 0 < theta < 1:
        raise ParameterError(f"theta={theta} outside (0, 1)")
    spec = build_scenario(OH_TO_LP, theta, n)
    regions = {r.id: r for r in derive_regions(spec)}
    out = []
    for rid in TABLE2_TARGETS:
        val = integrate_region(spec, regions[rid])
        root = math.sqrt(val)
        target = table2_target(rid, theta, n)
        out.append(RegionIntegral(rid, val, root, target, root / target, OH_TO_LP, theta, n))
    return out


# ---------------------------------------------------------------------------
# Scaling fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    stderr: float
    points: tuple[tuple[float, float], ...]
    intercept: float = 0.0
    r_squared: float = 1.0
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def record(self) -> dict:
        return {
            "scenario": self.meta.get("scenario", ""),
            "theta_or_n": self.meta.get("fixed", ""),
            "exponent": self.exponent,
            "stderr": self.stderr,
            "points": [list(p) for p in self.points],
        }


def loglog_fit(xs, log_ys, *, min_points: int = 4, label: str = "", log_x: bool = True, **meta) -> ScalingFit:
    """Unweighted least-squares slope of ``log_ys`` against ``log(xs)``.

    ``log_ys`` are already logarithms so that values beyond float range can
    be fitted.  With ``log_x=False`` the abscissae are used as given.
    """
    xs = np.asarray(xs, dtype=float)
    ly = np.asarray(log_ys, dtype=float)
    ok = np.isfinite(ly) & np.isfinite(xs) & ((xs > 0) if log_x else True)
    if ok.sum() < min_points:
        raise FitError(f"need at least {min_points} valid points, got {int(ok.sum())}")
    lx = np.log(xs[ok]) if log_x else xs[ok]
    ly = ly[ok]
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = len(lx) - 2
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    stderr = math.sqrt(sigma2 / sxx) if sxx > 0 else math.inf
    sst = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    pts = tuple((float(a), float(b)) for a, b in zip(xs[ok], np.asarray(log_ys, dtype=float)[ok]))
    return ScalingFit(float(coef[0]), stderr, pts, float(coef[1]), r2, label, meta)


def half_log_min(kind: str, theta: float, n: int) -> float:
    """``log sqrt(integrate_min)`` for the named scenario."""
    return 0.5 * log_integrate_min(build_scenario(kind, theta, n))


def fit_n_exponent(kind: str, theta: float, n_list: Sequence[int]) -> ScalingFit:
    """Slope of ``log sqrt(integrate_min)`` against ``log n``."""
    if len(n_list) < 4:
        raise FitError("fit_n_exponent needs at least 4 values of n")
    ly = [half_log_min(kind, theta, n) for n in n_list]
    return loglog_fit(n_list, ly, label="n", scenario=kind, fixed=theta)


def fit_theta_blowup(kind: str, n: int, theta_list: Sequence[float], endpoint: float | None = None) -> ScalingFit:
    """Exponent of the endpoint distance for the normalised min-integral.

    The normaliser is the leading n-power: ``n^{1-theta/2}`` for the l_p
    scenario and ``n^{(p+2)/(4p)}`` (``p = 1/theta``) for C_p.  The distance
    is ``theta`` (endpoint 0), ``1 - theta`` (endpoint 1) or ``2 theta - 1``
    (endpoint 1/2).
    """
    thetas = np.asarray(theta_list, dtype=float)
    if endpoint is None:
        endpoint = 0.5 if kind == OH_TO_CP and thetas.mean() < 0.75 else (0.0 if thetas.mean() < 0.5 else 1.0)
    if endpoint == 0.0:
        dist = thetas
    elif endpoint == 1.0:
        dist = 1.0 - thetas
    elif endpoint == 0.5:
        dist = 2 * thetas - 1
    else:
        raise ParameterError("endpoint must be 0, 1/2 or 1")
    logn = math.log(n)
    ly = []
    for th in thetas:
        lead = (1 + 2 * th) / 4 if kind == OH_TO_CP else 1 - th / 2
        ly.append(half_log_min(kind, float(th), n) - lead * logn)
    return loglog_fit(dist, ly, label=f"endpoint {endpoint}", scenario=kind, fixed=n)


def a2_block_integral(theta: float, n: int) -> float:
    """Integral over the three sub-regions of A2 (``n^{-1/2} <= v < 1``, ``u < 1``)."""
    spec = build_scenario(OH_TO_LP, theta, n)
    return sum(integrate_region(spec, r) for r in derive_regions(spec) if r.id[0] == 2)


def log_factor_check(n_list: Sequence[int], theta: float = 1.0, fallback_eps: float = 1e-6) -> ScalingFit:
    """Affine fit of the normalised A2-block integral against ``log n``.

    The statistic is the A2 integral (the squared root-integral) divided by
    its leading power ``n^{2-theta}``, which is ``n`` at ``theta = 1``.  A
    positive slope with good linearity in ``log n`` is the
    ``sqrt(1 + log n)`` law; at interior ``theta`` the statistic levels off.
    When ``theta`` hits a pole of the closed form the check is rerun at
    ``theta - fallback_eps`` and that choice is recorded in ``meta``.
    """
    used = theta
    try:
        vals = [a2_block_integral(theta, n) / float(n) ** (2 - theta) for n in n_list]
    except (DivergenceError, PoleError):
        used = theta - fallback_eps
        vals = [a2_block_integral(used, n) / float(n) ** (2 - used) for n in n_list]
    logs = np.log(np.asarray(n_list, dtype=float))
    fit = loglog_fit(logs, vals, log_x=False, label="log-factor", scenario=OH_TO_LP, fixed=used)
    return ScalingFit(fit.exponent, fit.stderr, fit.points, fit.intercept, fit.r_squared, fit.label,
                      {**fit.meta, "theta_used": used, "requested_theta": theta})


__all__ = [
    "DivergenceError",
    "PoleError",
    "FitError",
    "ExpPoly",
    "RegionIntegral",
    "ScalingFit",
    "integrate_region",
    "integrate_min",
    "log_integrate_min",
    "table2_report",
    "fit_n_exponent",
    "fit_theta_blowup",
    "log_factor_check",
    "loglog_fit",
    "half_log_min",
    "a2_block_integral",
    "a11_closed_form",
    "table2_target",
    "TABLE2_TARGETS",
    "region_expression",
    "log_integrate_region",
    "OH_TO_LP_RELAXED",
]
