"""Photoabsorption cross sections composed from the core and long-range S-matrices.

With ``M(w) = S_core S_LR(w + i Gamma/2)`` and the row vector ``d``:

* exact:      sigma = c Re d [1 - M]^-1 [1 + M] d^+
* order n:    sigma_n = c Re 2 d M^n d^+
* order sum:  c Re d [1 + 2 sum_{n=1}^N M^n] d^+  (the exact result as N -> inf)
* scl series: c Re d [1 + 2 S_core S_LR sum_{n=0}^N (T S_LR)^n] d^+,  T = 1 - S_core
* resummed:   c Re d (1 + 2 S_core S_LR [1 - T S_LR]^-1) d^+

``c`` is a single positive prefactor standing in for 4 pi^2 alpha omega_0.
Evaluating S_LR at complex ``w`` yields the cross section preconvolved with a
Lorentzian of width Gamma.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .scattering_core import CoreSMatrix, DipoleVector, build_t_matrix, spectral_norms
from .semiclassical_slr import LongRangeSMatrix

log = logging.getLogger(__name__)

SINGULAR_CONDITION = 1e12


@dataclass(frozen=True)
class CrossSectionConfig:
    w_grid: np.ndarray
    gamma: float = 0.0
    prefactor: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.w_grid, dtype=float)
        if w.ndim != 1 or len(w) < 2 or np.any(np.diff(w) <= 0):
            raise ValueError("w_grid must be a strictly increasing 1-d array")
        if not self.prefactor > 0:
            raise ValueError("prefactor must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        object.__setattr__(self, "w_grid", w)

    @classmethod
    def uniform(cls, w_min: float, w_max: float, n_w: int, gamma: float = 0.0,
                prefactor: float = 1.0) -> "CrossSectionConfig":
        return cls(np.linspace(w_min, w_max, n_w), gamma, prefactor)


@dataclass
class SpectrumSamples:
    w: np.ndarray
    sigma: np.ndarray
    order_tag: str
    failed: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.w) != len(self.sigma):
            raise ValueError("w and sigma must have the same length")

    @property
    def ok(self) -> np.ndarray:
        mask = np.ones(len(self.w), dtype=bool)
        mask[list(self.failed)] = False
        return mask


def _m_stack(core: CoreSMatrix, slr: LongRangeSMatrix, cfg: CrossSectionConfig) -> np.ndarray:
    return core.entries @ slr.evaluate(cfg.w_grid, cfg.gamma)


def _project(d: DipoleVector, X: np.ndarray) -> np.ndarray:
    """``d X d^+`` for a stack of matrices."""
    return np.einsum("i,wij,j->w", d.d, X, d.d.conj())


def _samples(cfg, values, tag, failed=(), d=None, **meta) -> SpectrumSamples:
    meta.setdefault("gamma", cfg.gamma)
    if d is not None:
        # natural magnitude of sigma; lets downstream code tell signal from roundoff
        meta.setdefault("scale", cfg.prefactor * d.norm2)
    meta.setdefault("prefactor", cfg.prefactor)
    return SpectrumSamples(cfg.w_grid.copy(), cfg.prefactor * np.real(values), tag,
                           tuple(int(i) for i in failed), meta)


def _solve_stack(A: np.ndarray, B: np.ndarray):
    """Solve ``A x = b`` per point, flagging near-singular points.

    ``A`` is ``1 - X`` here, so the identity sets the scale: a point is
    singular when the smallest singular value drops below 1/SINGULAR_CONDITION.
    """
    smin = np.linalg.svd(A, compute_uv=False)[..., -1]
    bad = ~np.isfinite(smin) | (smin < 1.0 / SINGULAR_CONDITION)
    x = np.full(B.shape, np.nan, dtype=complex)
    good = ~bad
    if np.any(good):
        x[good] = np.linalg.solve(A[good], B[good][..., None])[..., 0]
    return x, np.flatnonzero(bad)


def sigma_exact(d: DipoleVector, core: CoreSMatrix, slr: LongRangeSMatrix,
                cfg: CrossSectionConfig) -> SpectrumSamples:
    """Resolvent cross section; near-singular points come back NaN and listed in ``failed``."""
    M = _m_stack(core, slr, cfg)
    eye = np.eye(M.shape[-1])
    rhs = (eye + M) @ d.d.conj()
    x, failed = _solve_stack(eye - M, rhs)
    if len(failed):
        log.warning("resolvent singular at %d of %d points", len(failed), len(cfg.w_grid))
    return _samples(cfg, x @ d.d, "total", failed, d)


def sigma_order_term(n: int, d: DipoleVector, core: CoreSMatrix, slr: LongRangeSMatrix,
                     cfg: CrossSectionConfig) -> SpectrumSamples:
    if n < 1:
        raise ValueError("order must be at least 1")
    M = _m_stack(core, slr, cfg)
    return _samples(cfg, 2.0 * _project(d, np.linalg.matrix_power(M, n)), f"order-{n}", d=d)


def sigma_order_sum(N: int, d: DipoleVector, core: CoreSMatrix, slr: LongRangeSMatrix,
                    cfg: CrossSectionConfig) -> SpectrumSamples:
    """Constant term plus orders 1..N of the geometric expansion."""
    M = _m_stack(core, slr, cfg)
    power = np.broadcast_to(np.eye(M.shape[-1], dtype=complex), M.shape).copy()
    acc = power.copy()
    for _ in range(N):
        power = power @ M
        acc += 2.0 * power
    return _samples(cfg, _project(d, acc), f"order-sum-{N}", d=d)


def _require_terms(slr: LongRangeSMatrix):
    if not slr.term_resolved:
        raise ValueError("the semiclassical series needs a term-resolved S_LR")


def sigma_scl_series(N: int, d: DipoleVector, core: CoreSMatrix, slr_scl: LongRangeSMatrix,
                     cfg: CrossSectionConfig) -> SpectrumSamples:
    """Power series in ``T S_LR`` truncated after ``(T S_LR)^N``."""
    if N < 0:
        raise ValueError("N must be non-negative")
    _require_terms(slr_scl)
    S = slr_scl.evaluate(cfg.w_grid, cfg.gamma)
    TS = build_t_matrix(core).entries @ S
    n = S.shape[-1]
    power = np.broadcast_to(np.eye(n, dtype=complex), S.shape).copy()
    acc = power.copy()
    for _ in range(N):
        power = power @ TS
        acc += power
    X = np.eye(n) + 2.0 * core.entries @ S @ acc
    return _samples(cfg, _project(d, X), f"scl-series-{N}", d=d)


def sigma_scl_resummed(d: DipoleVector, core: CoreSMatrix, slr_scl: LongRangeSMatrix,
                       cfg: CrossSectionConfig) -> SpectrumSamples:
    _require_terms(slr_scl)
    S = slr_scl.evaluate(cfg.w_grid, cfg.gamma)
    TS = build_t_matrix(core).entries @ S
    n = S.shape[-1]
    # d (1 + 2 Sc S [1 - TS]^-1) d^+ = |d|^2 + 2 d Sc S x,  [1 - TS] x = d^+
    x, failed = _solve_stack(np.eye(n) - TS, np.broadcast_to(d.d.conj(), S.shape[:-1]))
    y = np.einsum("i,wij,wj->w", d.d, core.entries @ S, x)
    return _samples(cfg, d.norm2 + 2.0 * y, "scl-resummed", failed, d)


@dataclass
class ConvergenceReport:
    w: np.ndarray
    margin: np.ndarray

    @property
    def converged(self) -> np.ndarray:
        return self.margin < 1.0

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    @property
    def worst_index(self) -> int:
        return int(np.argmax(self.margin))

    @property
    def worst_w(self) -> float:
        return float(self.w[self.worst_index])

    @property
    def worst_margin(self) -> float:
        return float(self.margin[self.worst_index])


def check_convergence(core: CoreSMatrix, slr_scl: LongRangeSMatrix,
                      cfg: CrossSectionConfig) -> ConvergenceReport:
    """Spectral norm of ``(S_core - 1) S_LR`` at each grid point; below 1 the series converges."""
    S = slr_scl.evaluate(cfg.w_grid, cfg.gamma)
    A = (core.entries - np.eye(S.shape[-1])) @ S
    return ConvergenceReport(cfg.w_grid.copy(), spectral_norms(A))
