"""Monomial weights, sum-space scenarios and their region partitions.

Everything is expressed against the Haar measure ``prod(dx_i / x_i)`` on a
product of half-lines.  In logarithmic coordinates ``X_i = log x_i`` a
monomial density becomes ``exp(affine(X))`` and the scale parameter ``n``
enters through the extra coordinate ``log n``.  Exponents are stored as
exact rationals so that the closed-form integrator can tell a genuine pole
from a small exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

OH_TO_LP = "oh_to_lp"
OH_TO_LP_RELAXED = "oh_to_lp_relaxed"
OH_TO_CP = "oh_to_cp"
SCENARIO_KINDS = (OH_TO_LP, OH_TO_LP_RELAXED, OH_TO_CP)

L2 = "L2"
PROJ = "PROJ"


class ParameterError(ValueError):
    """A scenario or operator parameter lies outside its valid range."""


class DomainError(ValueError):
    """A point is outside the open positive orthant."""


def as_fraction(value) -> Fraction:
    """Exact rational for ``value``; decimal inputs such as 0.3 map to 3/10."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(value).limit_denominator(10**12)


def _fmt_exp(e: Fraction) -> str:
    if e.denominator == 1:
        return str(e.numerator)
    return f"{e.numerator}/{e.denominator}"


@dataclass(frozen=True)
class MonomialWeight:
    """Positive density ``c * n**n_power * prod(x_v ** e_v)``."""

    coefficient: float
    n_power: Fraction
    exponents: Mapping[str, Fraction]
    variables: tuple[str, ...]

    def __post_init__(self):
        if not self.coefficient > 0 or not math.isfinite(self.coefficient):
            raise ParameterError("monomial coefficient must be finite and > 0")
        object.__setattr__(self, "n_power", as_fraction(self.n_power))
        exps = {v: as_fraction(self.exponents.get(v, 0)) for v in self.variables}
        extra = set(self.exponents) - set(self.variables)
        if extra:
            raise ParameterError(f"exponents for unknown variables {sorted(extra)}")
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "variables", tuple(self.variables))

    @classmethod
    def make(cls, variables: Sequence[str], n_power=0, coefficient: float = 1.0, **exps):
        return cls(coefficient, as_fraction(n_power), exps, tuple(variables))

    def exponent(self, var: str) -> Fraction:
        return self.exponents.get(var, Fraction(0))

    def log_eval(self, point, n: float = 1.0) -> np.ndarray:
        """Log of the density at ``point`` (array ``(..., len(variables))``)."""
        x = np.asarray(point, dtype=float)
        if np.any(x <= 0):
            raise DomainError("all coordinates must be > 0")
        e = np.array([float(self.exponent(v)) for v in self.variables])
        return math.log(self.coefficient) + float(self.n_power) * math.log(n) + np.log(x) @ e

    def __call__(self, point, n: float = 1.0):
        return np.exp(self.log_eval(point, n))

    def __mul__(self, other: "MonomialWeight") -> "MonomialWeight":
        variables = tuple(dict.fromkeys(self.variables + other.variables))
        exps = {v: self.exponent(v) + other.exponent(v) for v in variables}
        return MonomialWeight(
            self.coefficient * other.coefficient, self.n_power + other.n_power, exps, variables
        )

    def __truediv__(self, other: "MonomialWeight") -> "MonomialWeight":
        variables = tuple(dict.fromkeys(self.variables + other.variables))
        exps = {v: self.exponent(v) - other.exponent(v) for v in variables}
        return MonomialWeight(
            self.coefficient / other.coefficient, self.n_power - other.n_power, exps, variables
        )

    def on(self, variables: Sequence[str]) -> "MonomialWeight":
        """Same density re-indexed over a (super)set of variables."""
        return MonomialWeight(self.coefficient, self.n_power, dict(self.exponents), tuple(variables))

    def log_affine(self, variables: Sequence[str]) -> "LogAffine":
        """The log-density as an affine form over ``('n',) + variables``."""
        coeffs = (self.n_power,) + tuple(self.exponent(v) for v in variables)
        return LogAffine(coeffs, math.log(self.coefficient))

    def __str__(self):
        parts = []
        if self.coefficient != 1.0:
            parts.append(f"{self.coefficient:g}")
        if self.n_power:
            parts.append(f"n^{_fmt_exp(self.n_power)}")
        for v in self.variables:
            e = self.exponent(v)
            if e:
                parts.append(v if e == 1 else f"{v}^{_fmt_exp(e)}")
        return "*".join(parts) or "1"


@dataclass(frozen=True)
class LogAffine:
    """``const + sum(coeffs[k] * X_k)`` with ``X_0 = log n``.

    Used both for log-densities and for region bounds, where it stands for
    the monomial ``exp(const) * n**coeffs[0] * prod(x_k ** coeffs[k])``.
    """

    coeffs: tuple[Fraction, ...]
    const: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(as_fraction(c) for c in self.coeffs))

    @classmethod
    def zero(cls, dim: int) -> "LogAffine":
        return cls((Fraction(0),) * (dim + 1))

    def __add__(self, other: "LogAffine") -> "LogAffine":
        return LogAffine(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)), self.const + other.const)

    def __sub__(self, other: "LogAffine") -> "LogAffine":
        return LogAffine(tuple(a - b for a, b in zip(self.coeffs, other.coeffs)), self.const - other.const)

    def scale(self, k) -> "LogAffine":
        k = as_fraction(k)
        return LogAffine(tuple(k * a for a in self.coeffs), float(k) * self.const)

    def evaluate(self, logn: float, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        c = np.array([float(a) for a in self.coeffs[1:]])
        return self.const + float(self.coeffs[0]) * logn + X @ c

    def render(self, variables: Sequence[str]) -> str:
        parts = []
        if self.const:
            parts.append(f"{math.exp(self.const):g}")
        names = ("n",) + tuple(variables)
        for name, a in zip(names, self.coeffs):
            if a:
                parts.append(name if a == 1 else f"{name}^{_fmt_exp(a)}")
        return "*".join(parts) or "1"


@dataclass(frozen=True)
class Term:
    """One summand of a sum space.

    ``L2`` terms carry one weight over all variables.  ``PROJ`` terms are the
    projective tensor product of two L2 spaces over a disjoint split of the
    variables; ``weights`` then holds the two factor densities and ``groups``
    the split.
    """

    kind: str
    weights: tuple[MonomialWeight, ...]
    groups: tuple[tuple[str, ...], ...] = ()
    label: str = ""

    def product_weight(self, variables: Sequence[str]) -> MonomialWeight:
        w = self.weights[0].on(variables)
        for extra in self.weights[1:]:
            w = w * extra.on(variables)
        return w.on(variables)


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    theta: float
    n: int
    variables: tuple[str, ...]
    terms: tuple[Term, ...]
    common_factor: MonomialWeight

    @property
    def dim(self) -> int:
        return len(self.variables)

    def product_weights(self) -> list[MonomialWeight]:
        """Densities of the relaxed all-L2 space, one per term."""
        return [t.product_weight(self.variables) for t in self.terms]

    def reduced_weights(self) -> list[MonomialWeight]:
        """Product weights with the common factor divided out (theta-free)."""
        return [(w / self.common_factor).on(self.variables) for w in self.product_weights()]

    def log_affines(self) -> list[LogAffine]:
        return [w.log_affine(self.variables) for w in self.product_weights()]

    def log_weight_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """``(G, c)`` with log-weight_l(X) = c[l] + G[l] @ X at the bound ``n``."""
        affs = self.log_affines()
        logn = math.log(self.n)
        G = np.array([[float(a) for a in f.coeffs[1:]] for f in affs])
        c = np.array([f.const + float(f.coeffs[0]) * logn for f in affs])
        return G, c

    def with_n(self, n: int) -> "ScenarioSpec":
        return build_scenario(self.kind, self.theta, n)


def custom_scenario(variables: Sequence[str], weights: Iterable[MonomialWeight], n: int = 1) -> ScenarioSpec:
    """All-L2 scenario from explicit weights (test fixtures, toy problems)."""
    variables = tuple(variables)
    terms = tuple(Term(L2, (w.on(variables),), label=f"w{i + 1}") for i, w in enumerate(weights))
    one = MonomialWeight.make(variables)
    return ScenarioSpec("custom", float("nan"), n, variables, terms, one)


def _check_theta(kind: str, theta: float):
    if kind == OH_TO_CP:
        if not 0.5 < theta < 1:
            raise ParameterError(f"theta={theta} outside (1/2, 1) required for {kind}")
    elif not 0 < theta < 1:
        raise ParameterError(f"theta={theta} outside (0, 1) required for {kind}")


def build_scenario(kind: str, theta: float, n: int) -> ScenarioSpec:
    """Term list of the named sum space at ``(theta, n)``.

    ``theta`` up to 1 inclusive is accepted for the l_p scenarios so that the
    logarithmic endpoint can be probed; the densities are well defined there
    even though some integrals diverge.
    """
    kind = kind.lower()
    if kind not in SCENARIO_KINDS:
        raise ParameterError(f"unknown scenario kind {kind!r}; expected one of {SCENARIO_KINDS}")
    if int(n) != n or n < 1:
        raise ParameterError(f"n must be a positive integer, got {n}")
    n = int(n)
    if not (kind != OH_TO_CP and theta == 1):
        _check_theta(kind, theta)
    th = as_fraction(theta)
    if kind == OH_TO_CP:
        return _build_cp(th, theta, n)
    return _build_lp(kind, th, theta, n)


def _build_lp(kind, th, theta, n) -> ScenarioSpec:
    V = ("s", "t", "u", "v")
    M = MonomialWeight.make
    two = 2 * th
    mu1 = M(V, 1, s=4 - two, t=-two, u=-1, v=-1)
    mu2 = M(V, 1, s=-two, t=4 - two, u=1, v=1)
    # (group1 density, group2 density, group1 vars, group2 vars) for F3..F8
    proj = [
        (M(("s", "t", "u"), 1, s=4 - two, t=-two, u=-1), M(("v",), 1, v=1), ("s", "t", "u"), ("v",)),
        (M(("s", "t", "u"), 1, s=-two, t=4 - two, u=1), M(("v",), 1, v=-1), ("s", "t", "u"), ("v",)),
        (M(("s",), 1, s=-two), M(("t", "u", "v"), 1, t=-two, u=-1, v=-1), ("s",), ("t", "u", "v")),
        (M(("s", "v"), 1, s=-two, v=1), M(("t", "u"), 1, t=-two, u=-1), ("s", "v"), ("t", "u")),
        (M(("s", "u", "v"), 1, s=-two, u=1, v=1), M(("t",), 1, t=-two), ("s", "u", "v"), ("t",)),
        (M(("s", "u"), 1, s=-two, u=1), M(("t", "v"), 1, t=-two, v=-1), ("s", "u"), ("t", "v")),
    ]
    terms = [Term(L2, (mu1,), label="F1"), Term(L2, (mu2,), label="F2")]
    for i, (w1, w2, g1, g2) in enumerate(proj, start=3):
        if kind == OH_TO_LP:
            terms.append(Term(PROJ, (w1, w2), (g1, g2), label=f"F{i}"))
        else:
            terms.append(Term(L2, ((w1.on(V) * w2.on(V)).on(V),), label=f"F{i}"))
    common = M(V, 2, s=-two, t=-two, u=1, v=1)
    return ScenarioSpec(kind, float(theta), n, V, tuple(terms), common)


def _build_cp(th, theta, n) -> ScenarioSpec:
    V = ("t", "s")
    M = MonomialWeight.make
    two = 2 * th
    terms = (
        Term(L2, (M(V, 1, t=-1, s=-two),), label="F1"),
        Term(L2, (M(V, 1, t=1, s=2 - two),), label="F2"),
        Term(PROJ, (M(("t",), 1, t=-1), M(("s",), 1, s=2 - two)), (("t",), ("s",)), label="F3"),
        Term(PROJ, (M(("t",), 1, t=1), M(("s",), 1, s=-two)), (("t",), ("s",)), label="F4"),
    )
    common = M(V, 1, s=-two)
    return ScenarioSpec(OH_TO_CP, float(theta), n, V, terms, common)


def active_term(spec: ScenarioSpec, point) -> int | np.ndarray:
    """0-based index of the smallest reduced weight; ties go to the lowest index.

    Accepts a single point or an array of points ``(..., dim)``.
    """
    x = np.asarray(point, dtype=float)
    if np.any(x <= 0):
        raise DomainError("active_term needs all coordinates > 0")
    G, c = spec.log_weight_matrix()
    vals = np.log(x) @ G.T + c
    idx = np.argmin(vals, axis=-1)
    return int(idx) if idx.ndim == 0 else idx


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bound:
    var: str
    lower: LogAffine | None  # None means 0 (log: -inf)
    upper: LogAffine | None  # None means +inf


@dataclass(frozen=True)
class Region:
    """Iterated monomial bounds, outermost variable first."""

    id: tuple[int, int]
    active_term: int
    bounds: tuple[Bound, ...]
    variables: tuple[str, ...] = field(default=(), compare=False)

    @property
    def name(self) -> str:
        return f"A{self.id[0]},{self.id[1]}"

    def contains(self, point, n: float) -> np.ndarray:
        """Membership of points ``(..., dim)`` (half-open: lower inclusive)."""
        X = np.log(np.asarray(point, dtype=float))
        return self.contains_log(X, math.log(n))

    def contains_log(self, X, logn: float) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        ok = np.ones(X.shape[:-1], dtype=bool)
        for b in self.bounds:
            k = self.variables.index(b.var)
            xk = X[..., k]
            if b.lower is not None:
                ok &= xk >= b.lower.evaluate(logn, X)
            if b.upper is not None:
                ok &= xk < b.upper.evaluate(logn, X)
        return ok

    def describe(self) -> str:
        out = []
        for b in self.bounds:
            lo = "0" if b.lower is None else b.lower.render(self.variables)
            hi = "inf" if b.upper is None else b.upper.render(self.variables)
            out.append(f"{lo} <= {b.var} < {hi}")
        return f"{self.name} [term {self.active_term + 1}]: " + ", ".join(out)


def _aff(dim, const=0.0, **coeffs) -> LogAffine:
    """Affine bound over (n, *vars); keyword ``n`` and ``x1..`` by position."""
    vec = [Fraction(0)] * (dim + 1)
    for key, val in coeffs.items():
        vec[int(key[1:])] = as_fraction(val)
    return LogAffine(tuple(vec), const)


def derive_regions(spec: ScenarioSpec) -> list[Region]:
    """Partition of the domain into pieces on which a single term is minimal.

    For the l_p scenario the minimum factors as ``min(s^4 * a, t^4 * b, c)``
    with ``a, b, c`` depending on ``(u, v)`` only; the breakpoints in ``v``
    are ``n^{-1/2}, 1, n^{1/2}`` and in ``u`` the point 1, giving the blocks
    A1..A8.  Inside each block the three sub-regions are where the constant
    part, the ``s``-part or the ``t``-part is active.  A5..A8 are the images
    of A1..A4 under ``(s, t, u, v) -> (t, s, 1/u, 1/v)``.
    """
    if spec.kind in (OH_TO_LP, OH_TO_LP_RELAXED):
        return _lp_regions(spec)
    if spec.kind == OH_TO_CP:
        return _cp_regions(spec)
    raise ParameterError(f"no region decomposition for scenario {spec.kind!r}")


# log-coordinate indices for the l_p scenario: 0 = log n, 1..4 = s, t, u, v
_N, _S, _T, _U, _V = range(5)


def _lp_block(i: int):
    """(u-bounds, v-bounds, a, b, c, s-term, t-term, const-term) for A1..A4.

    ``a, b, c`` are affine in (log n, z, w) such that the reduced minimum is
    ``min(4x + a, 4y + b, c)`` (x, y, z, w = log s, log t, log u, log v).
    """
    F = Fraction
    z_bounds = (None, _aff(4))  # 0 < u < 1
    if i == 1:  # v < n^{-1/2}
        w_bounds = (None, _aff(4, x0=F(-1, 2)))
        a, b, c = _aff(4, x3=-2), _aff(4, x0=-1), _aff(4)
        s_term, t_term, c_term = 2, 1, 6
    elif i == 2:  # n^{-1/2} <= v < 1
        w_bounds = (_aff(4, x0=F(-1, 2)), _aff(4))
        a, b, c = _aff(4, x0=-1, x3=-2, x4=-2), _aff(4, x0=-1), _aff(4)
        s_term, t_term, c_term = 0, 1, 6
    elif i == 3:  # v >= n^{1/2}
        w_bounds = (_aff(4, x0=F(1, 2)), None)
        a, b, c = _aff(4, x0=-1, x3=-2, x4=-2), _aff(4, x4=-2), _aff(4, x4=-2)
        s_term, t_term, c_term = 0, 3, 7
    else:  # 1 <= v < n^{1/2}
        w_bounds = (_aff(4), _aff(4, x0=F(1, 2)))
        a, b, c = _aff(4, x0=-1, x3=-2, x4=-2), _aff(4, x0=-1), _aff(4, x4=-2)
        s_term, t_term, c_term = 0, 1, 7
    return z_bounds, w_bounds, a, b, c, s_term, t_term, c_term


def _lp_regions(spec: ScenarioSpec) -> list[Region]:
    V = spec.variables
    q = Fraction(1, 4)
    x_unit = _aff(4, x1=1)
    y_unit = _aff(4, x2=1)
    base: list[Region] = []
    for i in range(1, 5):
        (zlo, zhi), (wlo, whi), a, b, c, s_term, t_term, c_term = _lp_block(i)
        outer = (Bound("u", zlo, zhi), Bound("v", wlo, whi))
        x_c = (c - a).scale(q)  # s-part beats constant below this
        y_c = (c - b).scale(q)
        base.append(Region((i, 1), c_term, outer + (Bound("s", x_c, None), Bound("t", y_c, None)), V))
        base.append(
            Region((i, 2), s_term, outer + (Bound("s", None, x_c), Bound("t", x_unit + (a - b).scale(q), None)), V)
        )
        base.append(
            Region((i, 3), t_term, outer + (Bound("t", None, y_c), Bound("s", y_unit + (b - a).scale(q), None)), V)
        )
    mirrored = [_mirror_region(r) for r in base]
    return base + mirrored


_TERM_MIRROR = {0: 1, 1: 0, 2: 3, 3: 2, 4: 6, 6: 4, 5: 7, 7: 5}


def _mirror_affine(f: LogAffine) -> LogAffine:
    """Substitute (x, y, z, w) -> (y, x, -z, -w) into an affine form."""
    c = f.coeffs
    return LogAffine((c[_N], c[_T], c[_S], -c[_U], -c[_V]), f.const)


def _mirror_region(r: Region) -> Region:
    rename = {"s": "t", "t": "s", "u": "u", "v": "v"}
    bounds = []
    for b in r.bounds:
        lo = None if b.lower is None else _mirror_affine(b.lower)
        hi = None if b.upper is None else _mirror_affine(b.upper)
        if b.var in ("u", "v"):
            # log u -> -log u flips the interval; bounds here are constants in n
            lo, hi = (None if hi is None else hi.scale(-1)), (None if lo is None else lo.scale(-1))
        bounds.append(Bound(rename[b.var], lo, hi))
    return Region((r.id[0] + 4, r.id[1]), _TERM_MIRROR[r.active_term], tuple(bounds), r.variables)


def _cp_regions(spec: ScenarioSpec) -> list[Region]:
    """Pieces of the plane (a, b) = (log t, log s) where each C_p term is minimal.

    Reduced log-weights: -a, a + 2b, L - a + 2b, L + a with L = log n.
    """
    V = spec.variables
    h = Fraction(1, 2)
    A = lambda const=0, **kw: _aff(2, **kw)  # noqa: E731
    return [
        # term 1: b > -L/2, a > max(-L/2, -b)
        Region((1, 1), 0, (Bound("s", A(x0=-h), A(x0=h)), Bound("t", A(x2=-1), None)), V),
        Region((1, 2), 0, (Bound("s", A(x0=h), None), Bound("t", A(x0=-h), None)), V),
        # term 2: b < L/2, a < min(L/2, -b)
        Region((2, 1), 1, (Bound("s", None, A(x0=-h)), Bound("t", None, A(x0=h))), V),
        Region((2, 2), 1, (Bound("s", A(x0=-h), A(x0=h)), Bound("t", None, A(x2=-1))), V),
        # term 3: b < -L/2, a > L/2
        Region((3, 1), 2, (Bound("s", None, A(x0=-h)), Bound("t", A(x0=h), None)), V),
        # term 4: b > L/2, a < -L/2
        Region((4, 1), 3, (Bound("s", A(x0=h), None), Bound("t", None, A(x0=-h))), V),
    ]


def region_centroid_log(region: Region, logn: float, spread: float = 1.0) -> np.ndarray:
    """An interior point of the region in log coordinates.

    Each variable is placed ``spread`` inside its interval, or at the
    midpoint when the interval is shorter than ``2 * spread``.
    """
    V = region.variables
    X = np.zeros(len(V))
    for b in region.bounds:
        k = V.index(b.var)
        lo = None if b.lower is None else float(b.lower.evaluate(logn, X))
        hi = None if b.upper is None else float(b.upper.evaluate(logn, X))
        if lo is None and hi is None:
            X[k] = 0.0
        elif lo is None:
            X[k] = hi - spread
        elif hi is None:
            X[k] = lo + spread
        else:
            X[k] = 0.5 * (lo + hi) if hi - lo < 2 * spread else lo + spread
    return X


# ---------------------------------------------------------------------------
# Two-weight K-functional and step discretisation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoWeightInterpolation:
    w0: np.ndarray
    w1: np.ndarray
    theta: float

    def __post_init__(self):
        w0 = np.asarray(self.w0, dtype=float)
        w1 = np.asarray(self.w1, dtype=float)
        if w0.shape != w1.shape:
            raise ParameterError("w0 and w1 must have equal length")
        if np.any(w0 <= 0) or np.any(w1 <= 0) or not (np.all(np.isfinite(w0)) and np.all(np.isfinite(w1))):
            raise ParameterError("weights must be finite and > 0")
        if not 0 < self.theta < 1:
            raise ParameterError(f"theta={self.theta} outside (0, 1)")
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "w1", w1)


def kfunc_constant(theta: float, kernel: str = "parallel") -> float:
    """``int_0^inf t^{-2 theta} k(t)^2 dt/t`` for the unit couple.

    ``parallel``: k(t)^2 = t^2 / (1 + t^2), a Beta integral equal to
    ``pi / (2 sin(pi theta))``.  ``min``: k(t) = min(1, t), giving
    ``1 / (2 theta (1 - theta))``.
    """
    if kernel == "parallel":
        return math.pi / (2.0 * math.sin(math.pi * theta))
    if kernel == "min":
        return 1.0 / (2.0 * theta * (1.0 - theta))
    raise ParameterError(f"unknown kernel {kernel!r}")


def kfunc_norm(ti: TwoWeightInterpolation, x, kernel: str = "parallel") -> float:
    """Norm of ``x`` in the real interpolation space ``(H0, H1)_{theta,2;K}``.

    Each coordinate contributes ``|x_i|^2 w0_i^{2(1-theta)} w1_i^{2 theta}``
    times the index-free constant from :func:`kfunc_constant`, obtained by
    the substitution ``t = (w0_i / w1_i) tau``.
    """
    x = np.asarray(x)
    if x.size == 0:
        return 0.0
    if x.shape != ti.w0.shape:
        raise ParameterError("length of x does not match the weights")
    th = ti.theta
    geo = ti.w0 ** (1 - th) * ti.w1**th
    return float(math.sqrt(kfunc_constant(th, kernel)) * np.linalg.norm(np.abs(x) * geo))


@dataclass(frozen=True)
class StepDiscretization:
    delta: float
    alpha: float
    K: int

    def __post_init__(self):
        if not self.delta > 1:
            raise ParameterError(f"delta must be > 1, got {self.delta}")
        if not -1 < self.alpha < 2:
            raise ParameterError(f"alpha={self.alpha} outside (-1, 2)")
        if self.K < 0:
            raise ParameterError("K must be >= 0")

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)


@dataclass(frozen=True)
class StepFunction:
    """Values on the cells ``[delta^k, delta^{k+1})`` for ``k = k0, k0+1, ...``."""

    delta: float
    k0: int
    values: np.ndarray

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.floor(np.log(t) / math.log(self.delta)).astype(int) - self.k0
        out = np.zeros(t.shape, dtype=np.result_type(self.values, float))
        inside = (k >= 0) & (k < len(self.values))
        out[inside] = self.values[k[inside]]
        return out

    def l2_norm(self, alpha: float) -> float:
        """Norm in ``L2(t^{2 alpha} dt/t)`` from exact cell masses."""
        return math.sqrt(float(np.sum(np.abs(self.values) ** 2 * cell_masses(self.delta, alpha, self.k0, len(self.values)))))


def cell_masses(delta: float, alpha: float, k0: int, count: int) -> np.ndarray:
    """``int_{delta^k}^{delta^{k+1}} t^{2 alpha} dt/t`` for consecutive ``k``."""
    k = np.arange(k0, k0 + count)
    ld = math.log(delta)
    if alpha == 0:
        return np.full(count, ld)
    return delta ** (2 * alpha * k) * math.expm1(2 * alpha * ld) / (2 * alpha)


def step_embed(sd: StepDiscretization, x) -> StepFunction:
    x = np.asarray(x)
    if x.shape != (2 * sd.K + 1,):
        raise ParameterError(f"expected {2 * sd.K + 1} coefficients")
    return StepFunction(sd.delta, -sd.K, x / math.sqrt(math.log(sd.delta)))


def step_project(sd: StepDiscretization, f: StepFunction) -> np.ndarray:
    if f.delta != sd.delta:
        raise ParameterError("step function lives on a different lattice")
    ld = math.log(sd.delta)
    out = np.zeros(2 * sd.K + 1, dtype=np.result_type(f.values, float))
    for j, k in enumerate(sd.indices):
        pos = k - f.k0
        if 0 <= pos < len(f.values):
            out[j] = f.values[pos] * ld / math.sqrt(ld)
    return out


def sequence_norm(sd: StepDiscretization, x) -> float:
    """Norm of ``x`` in ``l2(delta^{alpha k})`` (weights ``delta^{2 alpha k}``)."""
    w = sd.delta ** (2 * sd.alpha * sd.indices)
    return math.sqrt(float(np.sum(np.abs(np.asarray(x)) ** 2 * w)))


def embed_norm(sd: StepDiscretization) -> float:
    """Operator norm of the step embedding; it is diagonal, so one cell suffices."""
    a, ld = sd.alpha, math.log(sd.delta)
    if a == 0:
        return 1.0
    return math.sqrt(math.expm1(2 * a * ld) / (2 * a * ld))


def project_norm(sd: StepDiscretization) -> float:
    """Operator norm of the cell-averaging map (Cauchy-Schwarz on each cell)."""
    a, ld = sd.alpha, math.log(sd.delta)
    if a == 0:
        return 1.0
    return math.sqrt(-math.expm1(-2 * a * ld) / (2 * a * ld))
