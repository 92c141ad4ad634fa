"""Scaled diamagnetic Kepler dynamics in semiparabolic coordinates.

With ``u**2 = r + z`` and ``v**2 = r - z`` the Coulomb singularity is removed
and the scaled Hamiltonian ``p**2/2 - 1/r + rho**2/8 = eps`` becomes the
pseudo-energy

    h = (p_u**2 + p_v**2)/2 - eps*(u**2 + v**2) + u**2 v**2 (u**2 + v**2)/8 = 2

in the regularized time ``tau`` (``dt = (u**2 + v**2) dtau``).  Orbits start
at the nucleus with ``p_u = 2 cos(theta/2)``, ``p_v = 2 sin(theta/2)``.

The state vector is ``[u, v, p_u, p_v, s]`` where ``s`` accumulates the scaled
action in units of 2*pi, i.e. ``s = (1/2pi) * int (p_u du + p_v dv)``.
Variational runs append the 4x4 tangent map, row-major.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

TWO_PI = 2.0 * np.pi
PSEUDO_ENERGY = 2.0
# minima of u**2 + v**2 closer than this (in tau) to the launch are the launch itself
_LAUNCH_GUARD = 1e-9


class IntegrationError(RuntimeError):
    """The adaptive integrator gave up (step-size underflow or similar)."""


def launch_state(theta: float) -> np.ndarray:
    return np.array([0.0, 0.0, 2.0 * np.cos(0.5 * theta), 2.0 * np.sin(0.5 * theta), 0.0])


def pseudo_energy(y, epsilon: float):
    y = np.asarray(y)
    u, v, pu, pv = y[..., 0], y[..., 1], y[..., 2], y[..., 3]
    r2 = u * u + v * v
    return 0.5 * (pu * pu + pv * pv) - epsilon * r2 + 0.125 * u * u * v * v * r2


def _forces(u, v, eps):
    fu = 2.0 * eps * u - 0.5 * u ** 3 * v * v - 0.25 * u * v ** 4
    fv = 2.0 * eps * v - 0.5 * u * u * v ** 3 - 0.25 * u ** 4 * v
    return fu, fv


def _rhs(tau, y, eps):
    u, v, pu, pv = y[0], y[1], y[2], y[3]
    fu, fv = _forces(u, v, eps)
    return np.array([pu, pv, fu, fv, (pu * pu + pv * pv) / TWO_PI])


def _rhs_variational(tau, y, eps):
    u, v, pu, pv = y[0], y[1], y[2], y[3]
    fu, fv = _forces(u, v, eps)
    out = np.empty(21)
    out[:5] = pu, pv, fu, fv, (pu * pu + pv * pv) / TWO_PI
    u2, v2 = u * u, v * v
    huu = 2.0 * eps - 1.5 * u2 * v2 - 0.25 * v2 * v2
    hvv = 2.0 * eps - 1.5 * u2 * v2 - 0.25 * u2 * u2
    huv = -u * v * (u2 + v2)
    jac = np.array([[0.0, 0.0, 1.0, 0.0],
                    [0.0, 0.0, 0.0, 1.0],
                    [huu, huv, 0.0, 0.0],
                    [huv, hvv, 0.0, 0.0]])
    out[5:] = (jac @ y[5:].reshape(4, 4)).ravel()
    return out


def _miss(state) -> float:
    """Signed transverse offset of the origin from the path, ``q . rot90(p_hat)``."""
    u, v, pu, pv = state[0], state[1], state[2], state[3]
    return float((v * pu - u * pv) / np.hypot(pu, pv))


@dataclass(frozen=True)
class ApproachEvent:
    """A local minimum of ``u**2 + v**2`` along a trajectory."""

    tau: float
    state: np.ndarray

    @property
    def s_tilde(self) -> float:
        return float(self.state[4])

    @property
    def r2(self) -> float:
        return float(self.state[0] ** 2 + self.state[1] ** 2)

    @property
    def miss(self) -> float:
        return _miss(self.state)

    @property
    def theta_f(self) -> float:
        # the path arrives along the direction -p, which maps to the physical
        # polar angle 2*atan2(|p_v|, |p_u|)
        return float(2.0 * np.arctan2(abs(self.state[3]), abs(self.state[2])))


@dataclass
class Trajectory:
    theta_i: float
    epsilon: float
    tau: np.ndarray
    y: np.ndarray
    approaches: list[ApproachEvent]
    sol: object = field(default=None, repr=False)

    def returns(self, r_detect: float = 1e-4) -> list[ApproachEvent]:
        """Near-origin passes, ``u**2 + v**2 < r_detect``."""
        return [a for a in self.approaches if a.r2 < r_detect]

    def pseudo_energy_drift(self) -> float:
        return float(np.max(np.abs(pseudo_energy(self.y, self.epsilon) - PSEUDO_ENERGY)))


def _approach_event(tau, y, eps):
    return y[0] * y[2] + y[1] * y[3]


_approach_event.direction = 1.0


def _solve(theta, epsilon, tau_max, tol, s_max=None, dense=False, t_eval=None):
    events = [_approach_event]
    if s_max is not None:
        def stop(tau, y, eps):
            return y[4] - s_max
        stop.terminal = True
        events.append(stop)
    sol = solve_ivp(_rhs, (0.0, tau_max), launch_state(theta), method="DOP853",
                    rtol=tol, atol=tol * 1e-2, events=events, args=(epsilon,),
                    dense_output=dense, t_eval=t_eval)
    if sol.status < 0:
        raise IntegrationError(
            f"integration failed at theta_i={theta!r}, eps={epsilon!r}: {sol.message}")
    approaches = [ApproachEvent(float(t), yy.copy())
                  for t, yy in zip(sol.t_events[0], sol.y_events[0]) if t > _LAUNCH_GUARD]
    return sol, approaches


def default_tau_max(epsilon: float, s_max: float) -> float:
    # |p|^2 >= 4 - 2|eps| r^2 bounds ds/dtau from below only loosely; a
    # generous multiple of the axis period covers any orbit with action <= s_max
    omega = np.sqrt(max(-2.0 * epsilon, 0.05))
    return 4.0 * np.pi / omega * (s_max + 1.0) * 2.0


def integrate_trajectory(theta_i: float, epsilon: float, tau_max: float | None = None,
                         tol: float = 1e-10, s_max: float | None = None,
                         dense: bool = False, t_eval=None) -> Trajectory:
    """Integrate one trajectory launched from the nucleus at polar angle ``theta_i``.

    Integration stops at ``tau_max`` or, if given, once the accumulated scaled
    action reaches ``s_max``.  Every minimum of ``u**2 + v**2`` is recorded as
    an :class:`ApproachEvent`; :meth:`Trajectory.returns` filters the
    near-origin passes.
    """
    if not 0.0 <= theta_i <= np.pi:
        raise ValueError(f"theta_i must lie in [0, pi], got {theta_i!r}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if tau_max is None:
        if s_max is None:
            raise ValueError("give tau_max or s_max")
        tau_max = default_tau_max(epsilon, s_max)
    sol, approaches = _solve(theta_i, epsilon, tau_max, tol, s_max, dense, t_eval)
    return Trajectory(theta_i, epsilon, sol.t, sol.y.T.copy(), approaches,
                      sol.sol if dense else None)


def approach_events(theta: float, epsilon: float, s_max: float,
                    tol: float = 1e-10) -> list[ApproachEvent]:
    """All minima of ``u**2 + v**2`` up to action ``s_max``.

    Unlike :func:`integrate_trajectory` negative launch angles are allowed;
    they are the mirror images of positive ones in the ``v`` direction.
    """
    _, approaches = _solve(theta, epsilon, default_tau_max(epsilon, s_max), tol, s_max)
    return approaches


def nearest_approach(theta: float, epsilon: float, s_ref: float,
                     tol: float = 1e-10, s_pad: float = 0.25) -> ApproachEvent | None:
    """The approach whose action is closest to ``s_ref``."""
    events = approach_events(theta, epsilon, s_ref + s_pad, tol)
    if not events:
        return None
    return min(events, key=lambda a: abs(a.s_tilde - s_ref))


@dataclass(frozen=True)
class VariationalResult:
    """Linearized flow along a launch-to-``tau_end`` arc."""

    theta_i: float
    tau_end: float
    state: np.ndarray
    phi: np.ndarray
    focal_taus: tuple[float, ...]

    @property
    def n_in(self) -> np.ndarray:
        return np.array([-np.sin(0.5 * self.theta_i), np.cos(0.5 * self.theta_i)])

    @property
    def n_out(self) -> np.ndarray:
        pu, pv = self.state[2], self.state[3]
        return np.array([-pv, pu]) / np.hypot(pu, pv)

    @property
    def transverse(self) -> np.ndarray:
        """2x2 map of (transverse position, transverse momentum)."""
        a, b = self.n_out, self.n_in
        phi = self.phi
        return np.array([[a @ phi[:2, :2] @ b, a @ phi[:2, 2:] @ b],
                         [a @ phi[2:, :2] @ b, a @ phi[2:, 2:] @ b]])

    @property
    def m12(self) -> float:
        return float(self.transverse[0, 1])

    @property
    def maslov(self) -> int:
        return len(self.focal_taus)


def variational_flow(theta_i: float, epsilon: float, tau_end: float,
                     tol: float = 1e-11) -> VariationalResult:
    """Integrate the tangent map from the launch up to ``tau_end``.

    Focal points are the zeros of ``m12(tau)``, the transverse position
    response to a transverse kick of the launch momentum.  The transverse
    direction is taken as ``rot90(p)``, which reverses where the orbit comes
    to rest (``|p| = 0`` at the outer turning point of the axis and planar
    orbits); those sign flips are not focal points and are skipped.
    """
    n0 = np.array([-np.sin(0.5 * theta_i), np.cos(0.5 * theta_i)])

    def focal(y):
        dq = np.tensordot(y[5:].reshape((4, 4) + y.shape[1:])[:2, 2:], n0, axes=([1], [0]))
        return -y[3] * dq[0] + y[2] * dq[1]

    y0 = np.concatenate([launch_state(theta_i), np.eye(4).ravel()])
    sol = solve_ivp(_rhs_variational, (0.0, tau_end), y0, method="DOP853",
                    rtol=tol, atol=tol * 1e-2, args=(epsilon,), dense_output=True)
    if sol.status < 0:
        raise IntegrationError(f"variational integration failed: {sol.message}")
    yf = sol.y[:, -1]
    return VariationalResult(theta_i, tau_end, yf[:5].copy(), yf[5:].reshape(4, 4).copy(),
                             _focal_zeros(sol, focal, tau_end))


def _focal_zeros(sol, focal, tau_end, sub=8):
    # sample inside every step so that close pairs of zeros are not missed
    edges = sol.t
    ts = np.unique(np.concatenate(
        [np.linspace(a, b, sub + 1) for a, b in zip(edges[:-1], edges[1:])]))
    guard = 1e-8 * max(tau_end, 1.0)
    ts = ts[(ts > guard) & (ts < tau_end - guard)]
    if len(ts) < 2:
        return ()
    vals = focal(sol.sol(ts))
    out = []
    for k in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        t = brentq(lambda x: focal(sol.sol(x)[:, None])[0], ts[k], ts[k + 1], xtol=1e-14)
        y = sol.sol(t)
        if np.hypot(y[2], y[3]) < 1e-6:
            continue  # momentum reversal at a turning point, not a focal point
        out.append(float(t))
    return tuple(out)
