"""Planted-term harness: synthetic primitives plus a ghost that cancels their combination."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical.catalog import OrbitCatalog, build_catalog
from .classical.search import ClosedOrbit
from .cross_section import CrossSectionConfig, SpectrumSamples, sigma_exact, sigma_order_term
from .recurrence import (CancellationReport, MatchReport, RecurrenceSpectrum, default_match_tol,
                         detect_cancellation, find_peaks, match_peaks, recurrence_transform)
from .scattering_core import (AngularBasis, DipoleVector, QuantumDefects, build_core_smatrix,
                              default_dipole)
from .semiclassical_slr import GhostTerm, LongRangeSMatrix, OrbitTerm, make_ghost_term


def synthetic_orbit(action: float, label: str) -> ClosedOrbit:
    """Catalog stand-in for a planted term; only the action is meaningful."""
    return ClosedOrbit(theta_i=0.5 * np.pi, theta_f=0.5 * np.pi, s_tilde=float(action),
                       period_tau=float("nan"), m12=1.0, maslov=0, label=label)


def synthetic_terms(basis: AngularBasis, actions, magnitude: float = 0.3,
                    seed: int = 0) -> list[OrbitTerm]:
    """Rank-one terms of spectral norm ``magnitude`` along the uniform direction, seeded phases."""
    rng = np.random.default_rng(seed)
    u = np.ones(basis.size) / np.sqrt(basis.size)
    out = []
    for k, s in enumerate(actions):
        phase = np.exp(2j * np.pi * rng.random())
        out.append(OrbitTerm(f"P{k + 1}", magnitude * phase * np.outer(u, u), float(s)))
    return out


@dataclass
class GhostHarness:
    slr: LongRangeSMatrix
    ghost: GhostTerm
    catalog: OrbitCatalog


def ghost_harness(actions=(1.0, 1.37), gap: float = 5.0, basis: AngularBasis | None = None,
                  epsilon: float = -0.5, magnitude: float = 0.3, seed: int = 0) -> GhostHarness:
    """Two planted primitives and a ghost at their summed action, ``gap = eps_b - eps``.

    The default magnitude keeps the summed term norm (2m + 2m^2 plus the
    residual) below 1, so the order expansion converges at every ``w`` and
    the total spectrum is the sum of the order-resolved ones.
    """
    if len(actions) != 2:
        raise ValueError("the harness plants exactly two primitives")
    basis = basis or AngularBasis((0,))
    prims = synthetic_terms(basis, actions, magnitude, seed)
    ghost = make_ghost_term(prims, epsilon, epsilon + gap, residual_seed=seed)
    slr = LongRangeSMatrix("synthetic", basis, prims + [ghost.term], epsilon=epsilon)
    orbits = [synthetic_orbit(t.s_tilde, t.orbit_id) for t in prims]
    return GhostHarness(slr, ghost, build_catalog(orbits, 2.0 * max(actions) + 1e-9, 2, epsilon))


@dataclass
class HarnessRun:
    harness: GhostHarness
    samples: dict[str, SpectrumSamples]
    spectra: dict[str, RecurrenceSpectrum]
    report: MatchReport
    cancellation: CancellationReport


def run_ghost_harness(harness: GhostHarness, w_grid, gamma: float = 0.0, mu: float = 0.0,
                      dipole: DipoleVector | None = None, window: str = "hann",
                      pad_factor: int = 8, threshold: float = 0.05,
                      suppression_db: float = 20.0) -> HarnessRun:
    """Order-1, order-2 and total spectra of the harness with defect ``mu`` in every channel."""
    basis = harness.slr.basis
    core = build_core_smatrix(basis, QuantumDefects({l: mu for l in basis.l_values}))
    d = dipole
    if d is None:
        d = default_dipole(basis) if basis.size > 1 else DipoleVector(basis, np.ones(1))
    cfg = CrossSectionConfig(np.asarray(w_grid, dtype=float), gamma)
    samples = {"order-1": sigma_order_term(1, d, core, harness.slr, cfg),
               "order-2": sigma_order_term(2, d, core, harness.slr, cfg),
               "total": sigma_exact(d, core, harness.slr, cfg)}
    spectra = {k: recurrence_transform(s, window, pad_factor) for k, s in samples.items()}
    first = spectra["order-1"]
    report = match_peaks(find_peaks(first, threshold), harness.catalog, default_match_tol(first),
                         source_order=1)
    cancel = detect_cancellation(first, spectra["order-2"], spectra["total"], report,
                                 suppression_db)
    return HarnessRun(harness, samples, spectra, report, cancel)
