"""Finite-dimensional operator-space norms and the Maurey ratio check."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .measures import ParameterError
from .orlicz import PiecewiseConvexFunction, lp_exponent, orlicz_norm


@dataclass(frozen=True)
class MatrixTuple:
    """``K`` complex ``m x m`` matrices stacked as a ``(K, m, m)`` array."""

    mats: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.mats, dtype=complex)
        if a.ndim == 2:
            a = a[None]
        if a.ndim != 3 or a.shape[1] != a.shape[2] or a.shape[0] < 1:
            raise ParameterError(f"expected K square matrices of equal size, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "mats", a)

    @classmethod
    def of(cls, mats: Sequence) -> "MatrixTuple":
        return cls(np.stack([np.asarray(m, dtype=complex) for m in mats]))

    @property
    def m(self) -> int:
        return self.mats.shape[1]

    @property
    def K(self) -> int:
        return self.mats.shape[0]

    def __add__(self, other: "MatrixTuple") -> "MatrixTuple":
        return MatrixTuple(self.mats + other.mats)

    def scaled(self, c: complex) -> "MatrixTuple":
        return MatrixTuple(c * self.mats)

    def rotated(self, U: np.ndarray, V: np.ndarray) -> "MatrixTuple":
        return MatrixTuple(U @ self.mats @ V)


@dataclass(frozen=True)
class DiagonalCoefficients:
    """Coefficients ``a_ij`` of a diagonal operator; row ``i`` lives in ``l_2^n``."""

    a: np.ndarray
    p: float = 1.5

    def __post_init__(self):
        a = np.asarray(self.a)
        if a.ndim != 2 or not np.all(np.isfinite(a)):
            raise ParameterError("coefficients must be a finite 2-d array")
        if not 1 < self.p < 2:
            raise ParameterError(f"p={self.p} outside (1, 2)")
        object.__setattr__(self, "a", a)

    @property
    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.a, axis=1)


def oh_norm(xs: MatrixTuple) -> float:
    """``||sum_k x_k (x) conj(x_k)||^{1/2}`` in operator norm."""
    S = sum(np.kron(x, x.conj()) for x in xs.mats)
    return float(np.sqrt(np.linalg.norm(S, 2)))


@dataclass(frozen=True)
class CpConfig:
    restarts: int = 16
    max_alternations: int = 5000
    tolerance: float = 1e-14
    seed: int = 0


@dataclass
class CpResult:
    value: float
    converged: bool
    alternations: int
    history: list[float] = field(default_factory=list, repr=False)


def _psd_power(M: np.ndarray, q: float) -> tuple[np.ndarray, np.ndarray]:
    """``M^q`` and the eigenvalues of ``M`` (negatives clipped)."""
    w, U = np.linalg.eigh(M)
    w = np.clip(w, 0.0, None)
    wq = np.where(w > 0, w, 0.0) ** q
    return (U * wq) @ U.conj().T, w


def _dual_step(M: np.ndarray, q: float) -> tuple[np.ndarray, float]:
    """Maximise ``tr(A M)`` over ``A >= 0`` with ``||A||_q <= 1``.

    The maximum is the dual Schatten norm ``||M||_{q'}``, attained at
    ``M^{q'-1}`` normalised.
    """
    qd = q / (q - 1)
    P, w = _psd_power(M, qd - 1)
    val = float(np.sum(w**qd) ** (1 / qd))
    if val == 0:
        return np.zeros_like(M), 0.0
    return P / val ** (qd - 1), val


def _alternate(x: np.ndarray, p: float, B: np.ndarray, cfg: CpConfig) -> CpResult:
    xh = np.conj(np.transpose(x, (0, 2, 1)))
    hist: list[float] = []
    prev = -np.inf
    for it in range(1, cfg.max_alternations + 1):
        A, _ = _dual_step(np.einsum("kij,jl,klm->im", x, B, xh), p)
        B, val = _dual_step(np.einsum("kij,jl,klm->im", xh, A, x), p / (p - 1))
        hist.append(val)
        if val - prev <= cfg.tolerance * max(val, 1e-300):
            return CpResult(val, True, it, hist)
        prev = val
    return CpResult(prev, False, cfg.max_alternations, hist)


def cp_norm_detail(xs: MatrixTuple, p: float, config: CpConfig | None = None) -> CpResult:
    """Alternating maximisation over positive ``a`` and ``b``, best of seeded restarts.

    ``value`` is the squared-free norm, i.e. ``sqrt`` of the best
    ``sum_k ||a x_k b||_2^2``; every half step is an exact partial maximum,
    so each run's history is nondecreasing.
    """
    if not 1 < p < 2:
        raise ParameterError(f"p={p} outside (1, 2)")
    cfg = config or CpConfig()
    m = xs.m
    pd = p / (p - 1)
    best: CpResult | None = None
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.restarts):
        rng = np.random.default_rng(child)
        G = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        B = G @ G.conj().T + 1e-3 * np.eye(m)
        B /= np.sum(np.linalg.eigvalsh(B) ** pd) ** (1 / pd)
        res = _alternate(xs.mats, p, B, cfg)
        if best is None or res.value > best.value:
            best = res
    assert best is not None
    return CpResult(float(np.sqrt(best.value)), best.converged, best.alternations, best.history)


def cp_norm(xs: MatrixTuple, p: float, config: CpConfig | None = None) -> float:
    return cp_norm_detail(xs, p, config).value


def lp_l2_norm(a, p: float | None = None) -> float:
    """``l_p`` norm of the row ``l_2`` norms."""
    if isinstance(a, DiagonalCoefficients):
        p = a.p if p is None else p
        rows = a.row_norms
    else:
        rows = np.linalg.norm(np.asarray(a), axis=1)
    if p is None:
        raise ParameterError("p is required")
    return float(np.sum(rows**p) ** (1 / p))


def maurey_ratio(theta: float, a, F: PiecewiseConvexFunction) -> float:
    """``theta (1-theta) ||row norms||_F / ((1-theta)^{-1/2} ||a||_{l_p(l_2)})``."""
    p = lp_exponent(theta)
    rows = a.row_norms if isinstance(a, DiagonalCoefficients) else np.linalg.norm(np.asarray(a), axis=1)
    denom = (1 - theta) ** -0.5 * float(np.sum(rows**p) ** (1 / p))
    if denom == 0:
        return 0.0
    return theta * (1 - theta) * orlicz_norm(F, rows) / denom


__all__ = [
    "CpConfig",
    "CpResult",
    "DiagonalCoefficients",
    "MatrixTuple",
    "cp_norm",
    "cp_norm_detail",
    "lp_l2_norm",
    "maurey_ratio",
    "oh_norm",
]
