"""Closed-orbit search, stability and Maslov indices."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np
from scipy.optimize import brentq

from .dynamics import (ApproachEvent, approach_events, integrate_trajectory, nearest_approach,
                       variational_flow)

log = logging.getLogger(__name__)

HALF_PI = 0.5 * np.pi
DEGENERATE_M12 = 1e-12
CLOSURE_TOL = 1e-9
# an earlier pass this close to the nucleus marks a root as a repetition
_REPEAT_RADIUS = 1e-6
# roots whose residual stays below this after polishing are kept but flagged
_FLAG_RADIUS = 1e-4


@dataclass(frozen=True)
class ClosedOrbit:
    theta_i: float
    theta_f: float
    s_tilde: float
    period_tau: float
    m12: float
    maslov: int
    label: str = ""
    repetition: int = 1
    residual: float = 0.0
    flagged: bool = False

    @property
    def degenerate(self) -> bool:
        return abs(self.m12) < DEGENERATE_M12

    @property
    def on_axis(self) -> bool:
        return min(np.sin(self.theta_i), np.sin(self.theta_f)) < 1e-12

    def mirrored(self) -> "ClosedOrbit":
        """Reflection through the z = 0 plane."""
        label = self.label[:-1] if self.label.endswith("'") else self.label + "'"
        return replace(self, theta_i=np.pi - self.theta_i, theta_f=np.pi - self.theta_f,
                       label=label)


def compute_monodromy(orbit: ClosedOrbit, epsilon: float, tol: float = 1e-11):
    """``(m12, maslov)`` from the tangent map along the orbit.

    ``m12`` is the transverse position response at the return to a
    transverse kick of the launch momentum; the Maslov index counts its
    zeros strictly inside the orbit.
    """
    if orbit.residual > CLOSURE_TOL:
        log.warning("monodromy of an orbit with closure residual %.2e", orbit.residual)
    res = variational_flow(orbit.theta_i, epsilon, orbit.period_tau, tol)
    return res.m12, res.maslov


def transverse_monodromy(orbit: ClosedOrbit, epsilon: float, tol: float = 1e-11) -> np.ndarray:
    return variational_flow(orbit.theta_i, epsilon, orbit.period_tau, tol).transverse


def return_deviation(theta: float, epsilon: float, s_ref: float, tol: float = 1e-12) -> float:
    """Signed miss distance of the pass with action closest to ``s_ref``."""
    ev = nearest_approach(theta, epsilon, s_ref, tol)
    if ev is None:
        raise ValueError(f"no approach near action {s_ref} at theta={theta}")
    return ev.miss


def m12_finite_difference(orbit: ClosedOrbit, epsilon: float, h: float = 1e-6,
                          tol: float = 1e-12) -> float:
    """Central difference of the miss distance over the launch angle."""
    plus = return_deviation(orbit.theta_i + h, epsilon, orbit.s_tilde, tol)
    minus = return_deviation(orbit.theta_i - h, epsilon, orbit.s_tilde, tol)
    return (plus - minus) / (2.0 * h)


def _make_orbit(theta: float, event: ApproachEvent, epsilon: float, tol: float,
                flagged: bool = False) -> ClosedOrbit:
    res = variational_flow(theta, epsilon, event.tau, tol)
    return ClosedOrbit(theta_i=float(theta), theta_f=event.theta_f, s_tilde=event.s_tilde,
                       period_tau=event.tau, m12=res.m12, maslov=res.maslov,
                       residual=float(np.sqrt(event.r2)), flagged=flagged)


def axis_orbit(epsilon: float, tol: float = 1e-12) -> ClosedOrbit:
    """The up-field vibrator orbit (launched along +z)."""
    events = approach_events(0.0, epsilon, 1.0 / np.sqrt(-2.0 * epsilon) + 0.5, tol)
    first = next(e for e in events if e.r2 < _REPEAT_RADIUS ** 2)
    return replace(_make_orbit(0.0, first, epsilon, tol), label="V1")


def planar_orbit(epsilon: float, tol: float = 1e-12) -> ClosedOrbit:
    events = approach_events(HALF_PI, epsilon, 5.0, tol)
    first = next(e for e in events if e.r2 < _REPEAT_RADIUS ** 2)
    return replace(_make_orbit(HALF_PI, first, epsilon, tol), label="R1")


def repeat_orbit(orbit: ClosedOrbit, epsilon: float, k: int, tol: float = 1e-12) -> ClosedOrbit:
    """The k-th return of a primitive orbit, integrated (not extrapolated)."""
    if k < 1:
        raise ValueError("repetition must be positive")
    s_need = k * orbit.s_tilde + 0.5
    theta = orbit.theta_i
    mirrored = theta > HALF_PI
    if mirrored:
        theta = np.pi - theta
    events = [e for e in approach_events(theta, epsilon, s_need, tol)
              if e.r2 < _REPEAT_RADIUS ** 2]
    if len(events) < k:
        raise ValueError(f"orbit {orbit.label!r} returned only {len(events)} times")
    rep = _make_orbit(theta, events[k - 1], epsilon, tol)
    prefix = f"{k}" if k > 1 else ""
    rep = replace(rep, label=prefix + orbit.label.rstrip("'"), repetition=k)
    return rep.mirrored() if mirrored else rep


def _scan_angle(theta, epsilon, s_max, tol):
    return [(e.s_tilde, e.miss, e.r2) for e in approach_events(theta, epsilon, s_max, tol)]


def _polish(a, b, s_ref, epsilon, tol, ode_tol):
    def f(theta):
        ev = nearest_approach(theta, epsilon, s_ref, ode_tol)
        return ev.miss if ev is not None else np.nan

    fa, fb = f(a), f(b)
    if not (np.isfinite(fa) and np.isfinite(fb)) or fa * fb > 0:
        return None
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    return brentq(f, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)


def find_closed_orbits(epsilon: float, n_angles: int = 256, s_max: float = 2.5,
                       tol: float = 1e-12, ode_tol: float = 1e-12,
                       closure_tol: float = CLOSURE_TOL, include_axis: bool = True,
                       mirrors: bool = True, workers: int = 1) -> list[ClosedOrbit]:
    """Closed orbits at scaled energy ``epsilon`` with action up to ``s_max``.

    Launch angles on ``(0, pi/2]`` are scanned; sign changes of the miss
    distance between neighbouring angles (matched by action) bracket roots,
    which are polished with Brent's method to ``tol``.  Reflection through
    the z = 0 plane supplies orbits launched into ``(pi/2, pi)``.  Only the
    first near-nucleus pass of each launch angle counts as a primitive;
    repetitions are built by :func:`build_catalog`.

    Roots whose residual does not reach ``closure_tol`` are returned with
    ``flagged=True``.
    """
    if n_angles < 64:
        raise ValueError("n_angles must be at least 64")
    if s_max <= 0:
        raise ValueError("s_max must be positive")
    if not epsilon < 0:
        raise ValueError("closed-orbit search needs a negative scaled energy")
    thetas = HALF_PI * np.arange(1, n_angles + 1) / n_angles
    scan_tol = max(ode_tol, 1e-9)
    s_scan = s_max + 0.1
    job = partial(_scan_angle, epsilon=epsilon, s_max=s_scan, tol=scan_tol)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            table = list(pool.map(job, thetas, chunksize=8))
    else:
        table = [job(t) for t in thetas]

    candidates: list[tuple[float, float, float]] = []  # (lo, hi, s_ref)
    for k, rows in enumerate(table):
        for s, miss, r2 in rows:
            if abs(miss) < closure_tol:
                candidates.append((thetas[k], thetas[k], s))
        if k + 1 == len(table):
            break
        nxt = table[k + 1]
        if not nxt:
            continue
        actions = np.array([r[0] for r in nxt])
        for s, miss, r2 in rows:
            j = int(np.argmin(np.abs(actions - s)))
            s2, miss2, _ = nxt[j]
            if abs(s2 - s) > 0.05:
                continue
            if abs(miss) < closure_tol or abs(miss2) < closure_tol:
                continue
            if np.sign(miss) != np.sign(miss2):
                candidates.append((thetas[k], thetas[k + 1], 0.5 * (s + s2)))

    found: list[ClosedOrbit] = []
    for lo, hi, s_ref in candidates:
        if s_ref > s_max + 0.05:
            continue
        root = lo if lo == hi else _polish(lo, hi, s_ref, epsilon, tol, ode_tol)
        if root is None:
            continue
        events = approach_events(root, epsilon, s_ref + 0.25, ode_tol)
        ev = min(events, key=lambda e: abs(e.s_tilde - s_ref))
        resid = np.sqrt(ev.r2)
        if resid > _FLAG_RADIUS:
            log.debug("discarding spurious bracket near theta=%.6f (residual %.2e)", root, resid)
            continue
        if any(e.tau < ev.tau and e.r2 < _REPEAT_RADIUS ** 2 for e in events):
            continue  # a repetition of an orbit with a shorter first return
        if ev.s_tilde > s_max:
            continue
        flagged = resid > closure_tol
        if flagged:
            log.warning("root near theta=%.8f did not close (residual %.2e)", root, resid)
        found.append(_make_orbit(root, ev, epsilon, ode_tol, flagged))

    if include_axis:
        v1 = axis_orbit(epsilon, ode_tol)
        if v1.s_tilde <= s_max:
            found.append(v1)
    found = _dedupe([o for o in found if o.theta_i > 1e-6 or o.theta_i == 0.0])
    found = _assign_labels(found)
    if mirrors:
        extra = [o.mirrored() for o in found if abs(o.theta_i - HALF_PI) > 1e-12]
        found = found + extra
    return sorted(found, key=lambda o: (round(o.s_tilde, 10), o.theta_i))


def _dedupe(orbits: list[ClosedOrbit], d_action: float = 1e-8,
            d_angle: float = 1e-6) -> list[ClosedOrbit]:
    out: list[ClosedOrbit] = []
    for o in sorted(orbits, key=lambda o: (o.flagged, o.residual)):
        if any(abs(o.s_tilde - p.s_tilde) < d_action and abs(o.theta_i - p.theta_i) < d_angle
               for p in out):
            continue
        out.append(o)
    return out


def _assign_labels(orbits: list[ClosedOrbit]) -> list[ClosedOrbit]:
    """Cosmetic labels: R1/V1 for the planar/axis orbits, otherwise by family."""
    counters = {"R": 0, "V": 0}
    out = []
    for o in sorted(orbits, key=lambda o: o.s_tilde):
        if o.theta_i == 0.0:
            label = "V1"
        elif abs(o.theta_i - HALF_PI) < 1e-12:
            label = "R1"
        else:
            letter = "R" if abs(o.theta_i - HALF_PI) < np.pi / 4 else "V"
            partner = next((p for p in out if abs(p.s_tilde - o.s_tilde) < 1e-8
                            and abs(p.theta_f - o.theta_i) < 1e-6), None)
            if partner is not None:
                label = partner.label + "~"
            else:
                counters[letter] += 1
                label = f"{letter}1^{counters[letter]}"
        out.append(replace(o, label=label))
    return out


def export_trajectory(orbit: ClosedOrbit, epsilon: float, n_points: int = 401,
                      tol: float = 1e-12) -> np.ndarray:
    """``(rho, z)`` samples at uniform regularized time along the orbit."""
    theta = orbit.theta_i
    taus = np.linspace(0.0, orbit.period_tau, n_points)
    traj = integrate_trajectory(theta, epsilon, tau_max=orbit.period_tau, tol=tol, t_eval=taus)
    u, v = traj.y[:, 0], traj.y[:, 1]
    return np.column_stack([np.abs(u * v), 0.5 * (u * u - v * v)])

