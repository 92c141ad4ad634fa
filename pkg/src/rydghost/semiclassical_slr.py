"""Long-range S-matrices: closed-orbit sums, ghost terms and sampled (file) matrices.

A term-resolved long-range S-matrix is a sum of orbit terms

    S_LR(w) = sum_j A_j exp(i S_j (w + i Gamma/2))

with ``S_j`` the scaled action in units of 2*pi.  Sampled matrices (from an
external quantum calculation) are interpolated per entry.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import eval_legendre

from .classical.catalog import OrbitCatalog
from .classical.search import ClosedOrbit
from .scattering_core import AngularBasis, ConfigurationError, matrix_norm

log = logging.getLogger(__name__)

DEFAULT_C0 = 1.0
DEFAULT_PHI0 = 0.75 * np.pi
# file grids must resolve the fastest phase exp(i S_max w) with this many points per period
SAMPLES_PER_PERIOD = 6


class DegenerateOrbitError(ValueError):
    """The semiclassical amplitude diverges (focal return or on-axis orbit)."""


@dataclass(frozen=True)
class ScaledField:
    w: float
    gamma: float = 0.0

    @property
    def complex_w(self) -> complex:
        return complex(self.w, 0.5 * self.gamma)


@dataclass(frozen=True)
class OrbitTerm:
    orbit_id: str
    amplitude: np.ndarray
    s_tilde: float

    def __post_init__(self):
        amp = np.atleast_2d(np.asarray(self.amplitude, dtype=complex))
        if not np.all(np.isfinite(amp)):
            raise ValueError(f"term {self.orbit_id!r} has a non-finite amplitude")
        object.__setattr__(self, "amplitude", amp)

    def contribution(self, w, gamma: float = 0.0) -> np.ndarray:
        """``A exp(i S (w + i gamma/2))``; vectorized over ``w``."""
        phase = np.exp(1j * self.s_tilde * (np.asarray(w, dtype=float) + 0.5j * gamma))
        return phase[..., None, None] * self.amplitude


@dataclass
class LongRangeSMatrix:
    """Term-resolved (``semiclassical``/``synthetic``) or sampled (``file``) S_LR."""

    source: str
    basis: AngularBasis
    terms: list[OrbitTerm] | None = None
    w_grid: np.ndarray | None = None
    samples: np.ndarray | None = None
    gamma: float = 0.0
    epsilon: float = float("nan")
    skipped: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.source not in ("semiclassical", "synthetic", "file"):
            raise ValueError(f"unknown S_LR source {self.source!r}")
        n = self.basis.size
        if self.term_resolved:
            for t in self.terms:
                if t.amplitude.shape != (n, n):
                    raise ConfigurationError(
                        f"term {t.orbit_id!r} is {t.amplitude.shape}, basis needs {(n, n)}")
        else:
            w = np.asarray(self.w_grid, dtype=float)
            samples = np.asarray(self.samples, dtype=complex)
            if w.ndim != 1 or len(w) < 4:
                raise ValueError("sampled S_LR needs at least four grid points")
            if np.any(np.diff(w) <= 0):
                raise ValueError("sampled S_LR grid must be strictly increasing in w")
            if samples.shape != (len(w), n, n):
                raise ValueError(f"samples have shape {samples.shape}, expected {(len(w), n, n)}")
            self.w_grid, self.samples = w, samples
            self._spline = CubicSpline(w, samples, axis=0)

    @property
    def term_resolved(self) -> bool:
        return self.terms is not None

    @property
    def max_action(self) -> float:
        if not self.terms:
            return 0.0
        return max(t.s_tilde for t in self.terms)

    def evaluate(self, w, gamma: float = 0.0) -> np.ndarray:
        """S_LR at ``w + i gamma/2``; shape ``(..., N, N)`` following ``w``."""
        w = np.asarray(w, dtype=float)
        n = self.basis.size
        if self.term_resolved:
            out = np.zeros(w.shape + (n, n), dtype=complex)
            for t in self.terms:
                out += t.contribution(w, gamma)
            return out
        if abs(gamma - self.gamma) > 1e-12:
            raise ValueError(f"sampled S_LR was computed at gamma={self.gamma}, asked for {gamma}")
        lo, hi = self.w_grid[0], self.w_grid[-1]
        if np.any(w < lo) or np.any(w > hi):
            raise ValueError(f"w outside the sampled range [{lo}, {hi}]; no extrapolation")
        return self._spline(w)

    def __add__(self, other: "LongRangeSMatrix") -> "LongRangeSMatrix":
        if not (self.term_resolved and other.term_resolved):
            raise TypeError("only term-resolved S_LR can be concatenated")
        source = self.source if self.source == other.source else "synthetic"
        return LongRangeSMatrix(source, self.basis, list(self.terms) + list(other.terms),
                                epsilon=self.epsilon)


def evaluate_slr(S: LongRangeSMatrix, point: ScaledField) -> np.ndarray:
    return S.evaluate(point.w, point.gamma)


def real_harmonic(l: int, theta) -> np.ndarray:
    """``Y_l0(theta)``."""
    return np.sqrt((2 * l + 1) / (4.0 * np.pi)) * eval_legendre(l, np.cos(theta))


def build_orbit_term(orbit: ClosedOrbit, basis: AngularBasis, c0: float = DEFAULT_C0,
                     phi0: float = DEFAULT_PHI0, orbit_id: str | None = None,
                     axis_theta: float | None = None) -> OrbitTerm:
    """Closed-orbit amplitude in product form.

    ``A_ll' = c0 sqrt(sin th_i sin th_f / |m12|) Y_l0(th_f) Y_l'0(th_i)
    exp(-i pi/2 maslov - i phi0)``.  On-axis orbits make the sine factor
    vanish; they are refused unless ``axis_theta`` supplies a finite
    stand-in angle.
    """
    if orbit.flagged:
        raise DegenerateOrbitError(f"orbit {orbit.label!r} did not close; refusing amplitude")
    if orbit.degenerate:
        raise DegenerateOrbitError(
            f"orbit {orbit.label!r} has |m12| = {abs(orbit.m12):.3e}: focal return, "
            "too close to a bifurcation for the semiclassical amplitude")
    th_i, th_f = orbit.theta_i, orbit.theta_f
    if orbit.on_axis:
        if axis_theta is None:
            raise DegenerateOrbitError(
                f"orbit {orbit.label!r} lies on the field axis; its amplitude vanishes in "
                "product form (pass axis_theta to include it)")
        th_i = axis_theta if th_i < 0.5 * np.pi else np.pi - axis_theta
        th_f = axis_theta if th_f < 0.5 * np.pi else np.pi - axis_theta
    ls = np.array(basis.l_values)
    y_f = real_harmonic(ls, th_f)
    y_i = real_harmonic(ls, th_i)
    mag = c0 * np.sqrt(np.sin(th_i) * np.sin(th_f) / abs(orbit.m12))
    phase = np.exp(-0.5j * np.pi * orbit.maslov - 1j * phi0)
    amp = mag * phase * np.outer(y_f, y_i)
    return OrbitTerm(orbit_id or orbit.label, amp, orbit.s_tilde)


def assemble_slr(orbits, basis: AngularBasis, c0: float = DEFAULT_C0, phi0: float = DEFAULT_PHI0,
                 include_axis: bool = False, axis_theta: float = 0.05,
                 epsilon: float = float("nan")) -> LongRangeSMatrix:
    """Semiclassical S_LR from the primitive orbits of a catalog (or a list).

    Axis orbits are skipped unless ``include_axis``; degenerate or flagged
    orbits are always skipped.  Skipped labels are kept in ``skipped``.
    """
    if isinstance(orbits, OrbitCatalog):
        epsilon = orbits.epsilon
        orbits = orbits.primitives
    terms, skipped = [], []
    for k, o in enumerate(orbits):
        if o.on_axis and not include_axis:
            skipped.append(o.label)
            continue
        try:
            terms.append(build_orbit_term(o, basis, c0, phi0, orbit_id=f"{o.label}#{k}",
                                          axis_theta=axis_theta if include_axis else None))
        except DegenerateOrbitError as err:
            log.warning("skipping orbit: %s", err)
            skipped.append(o.label)
    return LongRangeSMatrix("semiclassical", basis, terms, epsilon=epsilon, skipped=skipped)


@dataclass(frozen=True)
class GhostTerm:
    constituents: tuple[str, ...]
    epsilon_b: float
    epsilon: float
    term: OrbitTerm
    permutation_sum: np.ndarray

    @property
    def residual_ratio(self) -> float:
        """``||S_p + P|| / ||P||``."""
        return matrix_norm(self.term.amplitude + self.permutation_sum) / matrix_norm(
            self.permutation_sum)


def permutation_sum(primitives: list[OrbitTerm]) -> np.ndarray:
    """Sum of the products of the amplitudes over all distinct orderings."""
    ids = [p.orbit_id for p in primitives]
    by_id = {p.orbit_id: p.amplitude for p in primitives}
    n = primitives[0].amplitude.shape[0]
    total = np.zeros((n, n), dtype=complex)
    for order in sorted(set(itertools.permutations(ids))):
        prod = np.eye(n, dtype=complex)
        for i in order:
            prod = prod @ by_id[i]
        total += prod
    return total


def make_ghost_term(primitives: list[OrbitTerm], epsilon: float, epsilon_b: float,
                    residual_seed: int = 0) -> GhostTerm:
    """Ghost term that cancels the combination paths up to ``exp(-(eps_b - eps))``.

    ``S_p = -P(S_i S_j ...) + R`` where ``P`` sums the distinct orderings of
    the constituent amplitude products and ``R`` is a seeded random matrix
    with ``||R|| = exp(-(eps_b - eps)) ||P||``.  The ghost carries the summed
    action of its constituents.
    """
    if len(primitives) < 2:
        raise ValueError("a ghost needs at least two constituent primitives")
    if not epsilon < epsilon_b:
        raise ValueError(f"eps = {epsilon} is not below eps_b = {epsilon_b}: the orbit is real")
    P = permutation_sum(primitives)
    n = P.shape[0]
    rng = np.random.default_rng(residual_seed)
    R = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    p_norm = matrix_norm(P)
    if p_norm > 0:
        R *= np.exp(-(epsilon_b - epsilon)) * p_norm / matrix_norm(R)
    else:
        R[:] = 0.0
    action = sum(p.s_tilde for p in primitives)
    ids = tuple(p.orbit_id for p in primitives)
    term = OrbitTerm("ghost(" + "+".join(ids) + ")", -P + R, action)
    return GhostTerm(ids, epsilon_b, epsilon, term, P)


def decompose_slr(S: LongRangeSMatrix, catalog: OrbitCatalog, tol: float = 1e-6):
    """Split the terms into those at a real primitive/repetition action and ghosts."""
    if not S.term_resolved:
        raise ValueError("decomposition needs a term-resolved S_LR")
    real = [e.action for e in catalog.entries(("primitive", "repetition"))]
    classical, ghosts = [], []
    for t in S.terms:
        if any(abs(t.s_tilde - a) <= tol for a in real):
            classical.append(t)
        else:
            ghosts.append(t)
    return classical, ghosts


def check_grid_density(w_grid, s_max: float) -> None:
    """Raise unless the grid has SAMPLES_PER_PERIOD points per period of exp(i s_max w)."""
    if s_max <= 0:
        return
    dw = float(np.max(np.diff(w_grid)))
    need = 2.0 * np.pi / (SAMPLES_PER_PERIOD * s_max)
    if dw > need * (1 + 1e-12):
        span = float(w_grid[-1] - w_grid[0])
        raise ValueError(
            f"grid spacing {dw:.4g} too coarse for action {s_max}: need spacing <= {need:.4g} "
            f"(at least {int(np.ceil(span / need)) + 1} points over the range)")
