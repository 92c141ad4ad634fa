"""Recurrence spectra: Fourier transforms of sigma(w) against scaled action.

Orbit terms carry phases ``exp(+i S w)``, so the transform kernel is
``exp(-i S w)`` and a term ``c exp(i S w)`` in sigma shows up as a peak of
complex height ``c`` at action ``S``: strengths are normalized by the
coherent gain of the window.  The natural action resolution of a window of
length ``W = w_max - w_min`` is ``2 pi / W``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal.windows import get_window

from .classical.catalog import CatalogEntry, OrbitCatalog
from .cross_section import SpectrumSamples

WINDOWS = {"hann": "hann", "hamming": "hamming", "rect": "boxcar"}

CLASS_NAMES = {"primitive": "classical orbit", "repetition": "repetition",
               "combination": "combination"}


@dataclass
class RecurrenceSpectrum:
    actions: np.ndarray
    strength: np.ndarray
    window: str
    pad_factor: int
    source_tag: str
    w_min: float
    w_max: float
    n_samples: int
    coherent_gain: float
    sample_scale: float

    @property
    def resolution(self) -> float:
        """Action resolution ``2 pi / (w_max - w_min)``."""
        return 2.0 * np.pi / (self.w_max - self.w_min)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.strength)

    @property
    def dw(self) -> float:
        return (self.w_max - self.w_min) / (self.n_samples - 1)

    @property
    def n_fft(self) -> int:
        return self.n_samples * self.pad_factor

    def index_of(self, action: float) -> int:
        return int(np.argmin(np.abs(self.actions - action)))

    def at(self, action: float) -> complex:
        """Complex strength at the grid point nearest ``action``."""
        return complex(self.strength[self.index_of(action)])

    def same_grid(self, other: "RecurrenceSpectrum") -> bool:
        return (self.window == other.window and len(self.actions) == len(other.actions)
                and np.allclose(self.actions, other.actions, rtol=0, atol=1e-12)
                and self.w_min == other.w_min and self.w_max == other.w_max)


def _window(name: str, n: int) -> np.ndarray:
    try:
        return get_window(WINDOWS[name], n, fftbins=False)
    except KeyError:
        raise ValueError(f"unknown window {name!r}; choose from {sorted(WINDOWS)}") from None


def _uniform_step(w: np.ndarray) -> float:
    steps = np.diff(w)
    dw = (w[-1] - w[0]) / (len(w) - 1)
    if np.max(np.abs(steps - dw)) > 1e-9 * max(dw, abs(w[-1])):
        raise ValueError("recurrence transform needs a uniform w grid; resample first "
                         "(e.g. np.interp onto np.linspace(w[0], w[-1], len(w)))")
    return dw


def recurrence_transform(samples: SpectrumSamples, window: str = "hann",
                         pad_factor: int = 8) -> RecurrenceSpectrum:
    """Windowed, zero-padded transform of ``sigma(w)`` over positive actions."""
    if pad_factor < 1:
        raise ValueError("pad_factor must be at least 1")
    w = np.asarray(samples.w, dtype=float)
    sigma = np.asarray(samples.sigma, dtype=float)
    if not np.all(np.isfinite(sigma)):
        raise ValueError("sigma has non-finite samples (failed points); repair before transforming")
    dw = _uniform_step(w)
    n = len(w)
    win = _window(window, n)
    x = (sigma - sigma.mean()) * win
    n_fft = n * pad_factor
    spec = np.fft.rfft(x, n=n_fft)
    actions = 2.0 * np.pi * np.arange(len(spec)) / (n_fft * dw)
    gain = float(win.sum())
    strength = spec * np.exp(-1j * actions * w[0]) / gain
    scale = float(samples.meta.get("scale", np.max(np.abs(sigma))))
    return RecurrenceSpectrum(actions, strength, window, pad_factor, samples.order_tag,
                              float(w[0]), float(w[-1]), n, gain, scale)


def windowed_energy(samples: SpectrumSamples, window: str = "hann") -> float:
    """``sum |(sigma - mean) * window|^2 dw``."""
    w = np.asarray(samples.w, dtype=float)
    dw = _uniform_step(w)
    x = (samples.sigma - np.mean(samples.sigma)) * _window(window, len(w))
    return float(np.sum(x * x) * dw)


def spectrum_energy(spec: RecurrenceSpectrum) -> float:
    """Energy of the full (two-sided) transform, matching :func:`windowed_energy`."""
    p = np.abs(spec.strength) ** 2
    if spec.n_fft % 2 == 0:
        total = p[0] + p[-1] + 2.0 * p[1:-1].sum()
    else:
        total = p[0] + 2.0 * p[1:].sum()
    return float(total * spec.coherent_gain ** 2 * spec.dw / spec.n_fft)


@dataclass(frozen=True)
class Peak:
    action: float
    magnitude: float
    phase: float
    width: float
    index: int


def find_peaks(spec: RecurrenceSpectrum, threshold_rel: float = 0.05,
               min_action: float | None = None) -> list[Peak]:
    """Local maxima above ``threshold_rel`` times the largest magnitude.

    Positions and heights are refined by a parabola through the log
    magnitudes of the three bins around each maximum; the width is the full
    width at half maximum.  Actions below ``min_action`` (default two
    resolution cells, the leakage zone of the removed mean) are ignored.
    """
    if not 0 < threshold_rel < 1:
        raise ValueError("threshold_rel must lie in (0, 1)")
    if min_action is None:
        min_action = 2.0 * spec.resolution
    mag = spec.magnitude
    valid = np.flatnonzero(spec.actions >= min_action)
    if len(valid) < 3:
        return []
    top = float(mag[valid].max())
    if top <= 1e-10 * max(spec.sample_scale, np.finfo(float).tiny):
        return []
    thr = threshold_rel * top
    dS = spec.actions[1] - spec.actions[0]
    peaks = []
    for i in valid:
        if i == 0 or i + 1 >= len(mag):
            continue
        if not (mag[i] >= thr and mag[i] > mag[i - 1] and mag[i] >= mag[i + 1]):
            continue
        a, b, c = np.log(mag[i - 1:i + 2])
        denom = a - 2.0 * b + c
        p = 0.5 * (a - c) / denom if denom < 0 else 0.0
        height = float(np.exp(b - 0.25 * (a - c) * p))
        j = i + 1 if p >= 0 else i - 1
        z = spec.strength[i] + abs(p) * (spec.strength[j] - spec.strength[i])
        peaks.append(Peak(float(spec.actions[i] + p * dS), height, float(np.angle(z)),
                          _fwhm(spec.actions, mag, i, 0.5 * height), int(i)))
    return peaks


def _fwhm(x, y, i, half):
    lo = i
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = i
    while hi < len(y) - 1 and y[hi] > half:
        hi += 1

    def cross(k0, k1):
        if y[k0] == y[k1]:
            return x[k0]
        return x[k0] + (half - y[k0]) * (x[k1] - x[k0]) / (y[k1] - y[k0])

    return float(cross(hi - 1, hi) - cross(lo, lo + 1))


@dataclass
class PeakMatch:
    peak: Peak
    classification: str
    entries: list[CatalogEntry]
    mismatch: float
    ambiguous: bool = False


@dataclass
class MatchReport:
    matches: list[PeakMatch]
    tol_action: float
    source_order: int | None = None

    def of_class(self, name: str) -> list[PeakMatch]:
        return [m for m in self.matches if m.classification == name]

    @property
    def unidentified(self) -> list[PeakMatch]:
        return self.of_class("unidentified")

    @property
    def ghost_candidates(self) -> list[PeakMatch]:
        return self.of_class("ghost-candidate")


def default_match_tol(spec: RecurrenceSpectrum) -> float:
    return max(0.5 * spec.resolution, 1e-3)


def match_peaks(peaks: list[Peak], catalog: OrbitCatalog, tol_action: float,
                source_order: int | None = None, resolution: float | None = None) -> MatchReport:
    """Classify each peak by the nearest catalog action within ``tol_action``.

    For first-order spectra only primitive orbits and repetitions count as
    explanations; an unexplained first-order peak is a ghost candidate (any
    combinations within tolerance are attached as its partners).  With an
    empty catalog nothing can be identified.
    """
    if resolution is not None and tol_action < 0.5 * resolution:
        raise ValueError(f"tol_action {tol_action} is below half the resolution {resolution}")
    if source_order == 1:
        pool = catalog.entries(("primitive", "repetition"))
    else:
        pool = catalog.entries()
    combos = catalog.entries(("combination",))
    out = []
    for pk in peaks:
        near = sorted((e for e in pool if abs(e.action - pk.action) <= tol_action),
                      key=lambda e: abs(e.action - pk.action))
        if near:
            spread = max(e.action for e in near) - min(e.action for e in near)
            out.append(PeakMatch(pk, CLASS_NAMES[near[0].kind], near,
                                 abs(near[0].action - pk.action), spread > 1e-9))
        elif source_order == 1 and catalog.primitives:
            partners = sorted((e for e in combos if abs(e.action - pk.action) <= tol_action),
                              key=lambda e: abs(e.action - pk.action))
            mis = abs(partners[0].action - pk.action) if partners else float("nan")
            out.append(PeakMatch(pk, "ghost-candidate", partners, mis))
        else:
            out.append(PeakMatch(pk, "unidentified", [], float("nan")))
    return MatchReport(out, tol_action, source_order)


@dataclass
class CancellationItem:
    action: float
    label: str
    first: complex
    second: complex
    total: complex
    partner_action: float | None
    suppression_first_db: float
    suppression_second_db: float
    cancelled: bool
    consistency: float


@dataclass
class CancellationReport:
    suppression_db: float
    items: list[CancellationItem] = field(default_factory=list)

    @property
    def cancelled(self) -> list[CancellationItem]:
        return [it for it in self.items if it.cancelled]


def _db(a: float, b: float) -> float:
    if b == 0:
        return float("inf")
    if a == 0:
        return float("-inf")
    return 20.0 * np.log10(a / b)


def detect_cancellation(first_order: RecurrenceSpectrum, second_order: RecurrenceSpectrum,
                        total: RecurrenceSpectrum, report: MatchReport,
                        suppression_db: float = 20.0, tol_action: float | None = None,
                        rest: list[RecurrenceSpectrum] = (),
                        threshold_rel: float = 0.01) -> CancellationReport:
    """Check whether ghost candidates cancel against second-order combination peaks.

    For each ghost candidate with a second-order peak at a matching action,
    the complex strengths of the three spectra are compared at the ghost's
    bin.  It counts as cancelled when the total is at least
    ``suppression_db`` below both the first- and second-order magnitudes.
    ``consistency`` is ``|F1 + F2 + sum(rest) - F_total|`` relative to the
    larger order-resolved magnitude.
    """
    for other in (second_order, total, *rest):
        if not first_order.same_grid(other):
            raise ValueError("spectra must share the action grid and window")
    tol = tol_action if tol_action is not None else report.tol_action
    second_peaks = find_peaks(second_order, threshold_rel)
    out = CancellationReport(suppression_db)
    for m in report.ghost_candidates:
        s = m.peak.action
        partner = min((p for p in second_peaks if abs(p.action - s) <= tol),
                      key=lambda p: abs(p.action - s), default=None)
        i = first_order.index_of(s)
        f1, f2, ft = (complex(x.strength[i]) for x in (first_order, second_order, total))
        extra = sum(complex(r.strength[i]) for r in rest)
        big = max(abs(f1), abs(f2))
        sup1, sup2 = _db(abs(f1), abs(ft)), _db(abs(f2), abs(ft))
        cancelled = bool(partner is not None and sup1 >= suppression_db and sup2 >= suppression_db)
        label = m.entries[0].label if m.entries else f"ghost@{s:.4f}"
        consistency = abs(f1 + f2 + extra - ft) / big if big > 0 else 0.0
        out.items.append(CancellationItem(s, label, f1, f2, ft,
                                          None if partner is None else partner.action,
                                          sup1, sup2, cancelled, consistency))
    return out
