"""Order-resolved sweeps: orbits -> S_LR -> sigma terms -> recurrence spectra -> matches."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .classical.catalog import OrbitCatalog, build_catalog
from .classical.search import find_closed_orbits
from .config import RunConfig
from .cross_section import (CrossSectionConfig, SpectrumSamples, sigma_exact,
                            sigma_order_term)
from .recurrence import (MatchReport, Peak, RecurrenceSpectrum, default_match_tol, find_peaks,
                         match_peaks, recurrence_transform)
from .scattering_core import CoreSMatrix, build_core_smatrix
from .semiclassical_slr import LongRangeSMatrix, assemble_slr

log = logging.getLogger(__name__)


class SweepError(RuntimeError):
    pass


def core_matrix(cfg: RunConfig) -> CoreSMatrix:
    return build_core_smatrix(cfg.basis, cfg.defects, strict=False)


def sigma_config(cfg: RunConfig) -> CrossSectionConfig:
    return CrossSectionConfig(cfg.w_grid(), cfg.gamma, cfg.prefactor)


def catalog_at(eps: float, cfg: RunConfig, max_order: int = 2) -> OrbitCatalog:
    prims = find_closed_orbits(eps, n_angles=cfg.n_angles, s_max=cfg.s_max, ode_tol=cfg.ode_tol,
                               closure_tol=cfg.closure_tol, workers=cfg.workers)
    members = max(cfg.max_members, max_order, 2)
    return build_catalog(prims, cfg.s_max * members, members, epsilon=eps)


def slr_at(catalog: OrbitCatalog, cfg: RunConfig) -> LongRangeSMatrix:
    return assemble_slr(catalog, cfg.basis, cfg.c0, cfg.phi0, include_axis=cfg.include_axis)


@dataclass
class SweepRow:
    epsilon: float
    catalog: OrbitCatalog
    slr: LongRangeSMatrix
    samples: dict[str, SpectrumSamples] = field(default_factory=dict)
    spectra: dict[str, RecurrenceSpectrum] = field(default_factory=dict)
    peaks: dict[str, list[Peak]] = field(default_factory=dict)
    reports: dict[str, MatchReport] = field(default_factory=dict)


@dataclass
class SweepResult:
    config_hash: str
    orders: tuple[int, ...]
    rows: list[SweepRow]

    @property
    def tags(self) -> list[str]:
        return [f"order-{n}" for n in self.orders] + ["total"]

    def stacked(self, tag: str) -> list[tuple[float, RecurrenceSpectrum]]:
        return [(r.epsilon, r.spectra[tag]) for r in self.rows]

    def unidentified(self, tags=None) -> list[tuple[float, str, float]]:
        """``(epsilon, tag, action)`` of every unidentified peak."""
        tags = tags or [f"order-{n}" for n in self.orders]
        return [(r.epsilon, t, m.peak.action) for r in self.rows for t in tags
                for m in r.reports[t].unidentified]


def _stage(eps, name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except Exception as err:
        raise SweepError(f"epsilon = {eps}: {name} failed: {err}") from err


def order_resolved_sweep(epsilons, cfg: RunConfig, orders=(1, 2),
                         with_total: bool = True) -> SweepResult:
    """Stacked order-resolved recurrence spectra over a list of scaled energies.

    Each energy is processed independently; rows come back in input order.
    Order-n peaks are matched with ``source_order=n`` so that an unexplained
    first-order peak is reported as a ghost candidate.
    """
    orders = tuple(sorted(set(int(n) for n in orders)))
    if not orders or orders[0] < 1:
        raise ValueError("orders must be positive integers")
    core = core_matrix(cfg)
    d = cfg.dipole_vector()
    xcfg = sigma_config(cfg)
    rows = []
    for eps in epsilons:
        eps = float(eps)
        cat = _stage(eps, "closed-orbit search", catalog_at, eps, cfg, max(orders))
        slr = _stage(eps, "S_LR assembly", slr_at, cat, cfg)
        row = SweepRow(eps, cat, slr)
        jobs = [(f"order-{n}", n) for n in orders] + ([("total", None)] if with_total else [])
        for tag, n in jobs:
            if n is None:
                s = _stage(eps, "sigma total", sigma_exact, d, core, slr, xcfg)
            else:
                s = _stage(eps, f"sigma {tag}", sigma_order_term, n, d, core, slr, xcfg)
            s.meta["epsilon"] = eps
            spec = _stage(eps, f"transform {tag}", recurrence_transform, s, cfg.window,
                          cfg.pad_factor)
            peaks = find_peaks(spec, cfg.threshold)
            tol = cfg.match_tol or default_match_tol(spec)
            row.samples[tag], row.spectra[tag], row.peaks[tag] = s, spec, peaks
            row.reports[tag] = match_peaks(peaks, cat, tol, source_order=n,
                                           resolution=spec.resolution)
        log.info("eps=%.4g: %d primitives, %d terms", eps, len(cat.primitives), len(slr.terms))
        rows.append(row)
    return SweepResult(cfg.hash(), orders, rows)
