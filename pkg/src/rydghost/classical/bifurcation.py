"""Saddle-node bifurcation scans by continuation of return-deviation roots."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .dynamics import nearest_approach

log = logging.getLogger(__name__)


class DeviationFamily:
    """Roots in ``theta`` of a deviation function ``f(theta, eps)`` on a window.

    ``action(theta, eps)``, when given, is used to report how far apart the
    two coalescing orbits are.
    """

    def __init__(self, func: Callable[[float, float], float], theta_window: tuple[float, float],
                 label: str = "family", action: Callable[[float, float], float] | None = None,
                 n_grid: int = 64):
        self.func = func
        self.theta_window = (float(theta_window[0]), float(theta_window[1]))
        self.label = label
        self._action = action
        self.n_grid = n_grid

    def deviation(self, theta: float, eps: float) -> float:
        return self.func(theta, eps)

    def action(self, theta: float, eps: float) -> float | None:
        return None if self._action is None else self._action(theta, eps)

    def update(self, roots: list[float], eps: float) -> None:
        """Hook called with the roots found at each continuation step."""


class ClosedOrbitFamily(DeviationFamily):
    """Closed orbits whose return action stays near a reference value.

    The deviation is the miss distance of the pass closest in action to
    ``s_ref``; passes further than ``action_band`` away give NaN.  The angle
    window must be narrow enough that the tracked pass exists throughout.
    """

    def __init__(self, s_ref: float, theta_window: tuple[float, float], label: str = "orbits",
                 tol: float = 1e-10, n_grid: int = 48, action_band: float = 0.3):
        self.s_ref = float(s_ref)
        self.tol = tol
        self.action_band = action_band
        super().__init__(self._miss, theta_window, label, self._act, n_grid)

    def _event(self, theta, eps):
        ev = nearest_approach(theta, eps, self.s_ref, self.tol, s_pad=self.action_band)
        if ev is None or abs(ev.s_tilde - self.s_ref) > self.action_band:
            return None
        return ev

    def _miss(self, theta, eps):
        ev = self._event(theta, eps)
        return np.nan if ev is None else ev.miss

    def _act(self, theta, eps):
        ev = self._event(theta, eps)
        return np.nan if ev is None else ev.s_tilde



@dataclass
class BifurcationRecord:
    epsilon_b: float
    family: str
    orbit_pair: tuple[float, float]
    interval: tuple[float, float]
    complete: bool = True
    # (eps, theta_a, theta_b, action gap) on the side where the pair exists
    history: list[tuple[float, float, float, float]] = field(default_factory=list)
    actions: tuple[float, float] | None = None


def find_roots(family: DeviationFamily, eps: float, hints: list[float] = ()) -> list[float]:
    """Roots of the family's deviation at ``eps``.

    A uniform grid brackets well-separated roots; each neighbouring pair of
    ``hints`` (roots from the previous continuation step) is also checked
    for a close pair the grid could miss.
    """
    a, b = family.theta_window
    grid = np.linspace(a, b, family.n_grid)
    vals = np.array([family.deviation(t, eps) for t in grid])
    roots = []
    for k in range(len(grid) - 1):
        if vals[k] == 0.0:
            roots.append(float(grid[k]))
        elif vals[k] * vals[k + 1] < 0:
            roots.append(brentq(family.deviation, grid[k], grid[k + 1], args=(eps,), xtol=1e-13))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    hints = sorted(hints)
    for h1, h2 in zip(hints, hints[1:]):
        lo, hi = _pair_window(h1, h2, family)
        if any(lo <= r <= hi for r in roots):
            continue
        pair = _pair_roots(family, eps, lo, hi)
        if pair is not None:
            roots.extend(pair)
    return sorted(roots)


def _pair_window(h1, h2, family):
    a, b = family.theta_window
    pad = 0.25 * (h2 - h1) + 1e-9
    return max(a, h1 - pad), min(b, h2 + pad)


def _pair_extremum(family, eps, lo, hi):
    """``(s, theta*, s*f(theta*))`` with ``theta*`` minimizing ``s*f`` on the window."""
    fl, fh = family.deviation(lo, eps), family.deviation(hi, eps)
    if fl * fh < 0:
        return None  # an odd number of roots: not a pair window
    s = 1.0 if fl + fh > 0 else -1.0
    res = minimize_scalar(lambda t: s * family.deviation(t, eps), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    return s, float(res.x), float(res.fun)


def _pair_roots(family, eps, lo, hi):
    ext = _pair_extremum(family, eps, lo, hi)
    if ext is None or ext[2] >= 0:
        return None
    _, t_star, _ = ext
    r1 = brentq(family.deviation, lo, t_star, args=(eps,), xtol=1e-13)
    r2 = brentq(family.deviation, t_star, hi, args=(eps,), xtol=1e-13)
    return [r1, r2]


def _gap(family, eps, pair):
    sa, sb = family.action(pair[0], eps), family.action(pair[1], eps)
    if sa is None or sb is None:
        return float("nan"), None
    return abs(sa - sb), (sa, sb)


def _locate(family, pair, window, eps_exist, eps_gone, d_epsilon):
    """Bisect on pair existence between an epsilon with and one without the pair."""
    lo, hi = window
    gap, acts = _gap(family, eps_exist, pair)
    history = [(eps_exist, pair[0], pair[1], gap)]
    while abs(eps_exist - eps_gone) > d_epsilon:
        mid = 0.5 * (eps_exist + eps_gone)
        found = _pair_roots(family, mid, lo, hi)
        if found is None:
            eps_gone = mid
        else:
            eps_exist, pair = mid, tuple(found)
            gap, acts = _gap(family, mid, pair)
            history.append((mid, pair[0], pair[1], gap))
    return eps_exist, eps_gone, tuple(pair), history, acts


def scan_bifurcations(family: DeviationFamily, epsilon_range: tuple[float, float],
                      d_epsilon: float, n_steps: int = 8) -> list[BifurcationRecord]:
    """Saddle-node points of ``family`` inside ``epsilon_range``.

    Roots are continued over ``n_steps`` equal steps.  Where a neighbouring
    root pair exists at one step and not at the next, the coalescence point
    is bisected on pair existence until the bracket is at most ``d_epsilon``
    wide; ``epsilon_b`` is the bracket midpoint.  A root lost singly (it left
    the angle window) gives a record with ``complete=False``.
    """
    lo, hi = epsilon_range
    if not lo < hi:
        raise ValueError("epsilon_range must be increasing")
    if d_epsilon <= 0:
        raise ValueError("d_epsilon must be positive")
    grid = np.linspace(lo, hi, n_steps + 1)
    roots: list[list[float]] = []
    hints: list[float] = []
    for eps in grid:
        r = find_roots(family, eps, hints)
        family.update(r, eps)
        roots.append(r)
        hints = r

    records: list[BifurcationRecord] = []
    for k in range(n_steps):
        e0, e1 = grid[k], grid[k + 1]
        n0, n1 = len(roots[k]), len(roots[k + 1])
        if (n1 - n0) % 2:
            log.warning("odd root-count change between eps=%.6g and %.6g", e0, e1)
            records.append(BifurcationRecord(0.5 * (e0 + e1), family.label,
                                             (float("nan"), float("nan")), (e0, e1), False))
            continue
        if n1 == n0:
            continue
        e_have, e_not, have, other = (e1, e0, roots[k + 1], roots[k]) if n1 > n0 else \
            (e0, e1, roots[k], roots[k + 1])
        for j in range(len(have) - 1):
            window = _wide_window(family, have, j)
            if any(window[0] < r < window[1] for r in other):
                continue
            if _pair_roots(family, e_not, *window) is not None:
                continue
            e_in, e_out, final, history, acts = _locate(family, (have[j], have[j + 1]), window,
                                                        e_have, e_not, d_epsilon)
            records.append(BifurcationRecord(0.5 * (e_in + e_out), family.label, final,
                                             (min(e_in, e_out), max(e_in, e_out)), True,
                                             history, acts))
    return records


def _wide_window(family, roots, j):
    """Window around roots j, j+1 reaching halfway to their outer neighbours."""
    a, b = family.theta_window
    lo = 0.5 * (roots[j - 1] + roots[j]) if j > 0 else a
    hi = 0.5 * (roots[j + 1] + roots[j + 2]) if j + 2 < len(roots) else b
    return lo, hi
