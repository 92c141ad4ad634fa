"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line with its runtime."""
import time

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import unitary_group

from conftest import ACCEPTANCE
from rydghost.classical import find_closed_orbits, m12_finite_difference, planar_orbit
from rydghost.config import RunConfig
from rydghost.cross_section import (CrossSectionConfig, check_convergence, sigma_exact,
                                    sigma_order_sum, sigma_order_term, sigma_scl_resummed,
                                    sigma_scl_series)
from rydghost.pipeline import order_resolved_sweep
from rydghost.recurrence import find_peaks, recurrence_transform
from rydghost.scattering_core import (AngularBasis, DipoleVector, QuantumDefects,
                                      build_core_smatrix, spectral_radius)
from rydghost.semiclassical_slr import LongRangeSMatrix, OrbitTerm, assemble_slr
from rydghost.synthetic import ghost_harness, run_ghost_harness

W_GRID = np.linspace(100.0, 500.0, 4096)


class Criterion:
    """Times a criterion and records its verdict line."""

    def __init__(self, k, title, limit, variant=""):
        self.k, self.title, self.limit, self.variant = k, title, limit, variant
        self.checks: list[tuple[bool, str]] = []

    def check(self, ok, detail):
        self.checks.append((bool(ok), detail))

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        self.check(dt < self.limit, f"runtime {dt:.1f}s < {self.limit:g}s")
        ok = exc_type is None and all(c for c, _ in self.checks)
        failed = [d for c, d in self.checks if not c]
        if exc_type is not None:
            failed.append(f"{exc_type.__name__}: {exc}")
        detail = "; ".join(failed) if failed else "; ".join(d for _, d in self.checks)
        name = f"{self.k}{self.variant}"
        line = f"{'PASS' if ok else 'FAIL'} criterion {name:>3s} ({self.title}): {detail}"
        ACCEPTANCE[f"{self.k:02d}{self.variant}"] = line
        print(line)
        if exc_type is None:
            assert ok, line
        return False


def kepler_axis_action(eps):
    return 1.0 / np.sqrt(-2.0 * eps)


def planar_action_quadrature(eps):
    """(1/pi) * integral of the radial momentum in the z = 0 plane, r from 0 to the turning point."""
    rmax = np.roots([-1.0 / 8.0, 0.0, eps, 1.0])
    rmax = min(r.real for r in rmax if abs(r.imag) < 1e-12 and r.real > 0)
    val, _ = quad(lambda r: np.sqrt(max(2.0 * (eps + 1.0 / r - r * r / 8.0), 0.0)), 0.0, rmax,
                  epsabs=1e-14, epsrel=1e-13, limit=200)
    return val / np.pi


def test_criterion_01_axis_anchor():
    with Criterion(1, "axis orbit vs Kepler action", 10.0) as c:
        worst = 0.0
        for eps in np.round(np.arange(-0.9, -0.25, 0.1), 10):
            ref = kepler_axis_action(eps)
            orbits = find_closed_orbits(eps, n_angles=64, s_max=ref + 0.05)
            axis = [o for o in orbits if o.on_axis and o.theta_i < 1.0]
            c.check(len(axis) == 1, f"eps={eps}: one axis orbit")
            if axis:
                worst = max(worst, abs(axis[0].s_tilde - ref))
        c.check(worst < 1e-8, f"max |S - 1/sqrt(-2 eps)| = {worst:.2e} < 1e-8")


def test_criterion_02_planar_anchor():
    with Criterion(2, "planar orbit vs quadrature", 10.0) as c:
        for eps in (-0.9, -0.5):
            o = planar_orbit(eps)
            err = abs(o.s_tilde - planar_action_quadrature(eps))
            c.check(o.theta_i == pytest.approx(np.pi / 2) and err < 1e-6,
                    f"eps={eps}: |dS| = {err:.2e} < 1e-6")


def random_channel_case(rng):
    """Random basis (N_l in 2..6), random defects, one S_LR term with ||S_core S_LR|| = rho <= 0.9."""
    n = int(rng.integers(2, 7))
    basis = AngularBasis(tuple(range(0, 2 * n, 2)))
    core = build_core_smatrix(basis, QuantumDefects(dict(zip(basis.l_values, rng.random(n)))))
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    rho = 0.9 * rng.random()
    A = rho * G / np.linalg.norm(G, 2)  # sub-unitary: spectral norm rho, so spectral radius <= rho
    slr = LongRangeSMatrix("synthetic", basis, [OrbitTerm("a", A, 0.8)])
    d = DipoleVector(basis, rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return core, slr, d


def test_criterion_03_order_series_identity():
    rng = np.random.default_rng(2024)
    cfg = CrossSectionConfig(np.linspace(100.0, 101.0, 9), prefactor=1.0)
    with Criterion(3, "exact vs order-series partial sums", 30.0) as c:
        bound_viol = agree_viol = 0
        worst_ratio = worst_60 = 0.0
        for _ in range(200):
            core, slr, d = random_channel_case(rng)
            rho = max(spectral_radius(core.entries @ slr.evaluate(w)) for w in cfg.w_grid)
            exact = sigma_exact(d, core, slr, cfg).sigma
            bad = False
            for N in range(61):
                r = np.max(np.abs(exact - sigma_order_sum(N, d, core, slr, cfg).sigma))
                bound = 2 * rho ** (N + 1) * d.norm2 * cfg.prefactor
                roundoff = 1e-13 * d.norm2 * cfg.prefactor
                if bound > roundoff:
                    worst_ratio = max(worst_ratio, r / bound)
                bad |= r > bound + roundoff
            bound_viol += bad
            worst_60 = max(worst_60, r)
            agree_viol += r > 1e-10
        c.check(bound_viol == 0, f"remainder bound violated in {bound_viol}/200 cases "
                                 f"(worst remainder/bound {worst_ratio:.2f})")
        c.check(agree_viol == 0, f"N=60 agreement > 1e-10 in {agree_viol}/200 cases "
                                 f"(worst {worst_60:.1e})")


def scl_case(rng, target):
    """Random non-hydrogenic core and S_LR scaled so that the worst margin equals ``target``."""
    n = int(rng.integers(2, 5))
    basis = AngularBasis(tuple(range(0, 2 * n, 2)))
    core = build_core_smatrix(basis, QuantumDefects(dict(zip(basis.l_values, 0.5 * rng.random(n)))))
    terms = [OrbitTerm(f"t{k}", rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)),
                       0.5 + 0.7 * k) for k in range(2)]
    slr = LongRangeSMatrix("synthetic", basis, terms)
    cfg = CrossSectionConfig(np.linspace(100.0, 110.0, 201), gamma=0.5)
    m = check_convergence(core, slr, cfg).worst_margin
    slr = LongRangeSMatrix("synthetic", basis,
                           [OrbitTerm(t.orbit_id, t.amplitude * target / m, t.s_tilde) for t in terms])
    d = DipoleVector(basis, rng.standard_normal(n) + 0j)
    return core, slr, d, cfg


def test_criterion_04_resummation():
    rng = np.random.default_rng(7)
    with Criterion(4, "scl-series(40) vs scl-resummed", 30.0) as c:
        worst = {}
        for target in np.linspace(0.05, 0.89, 43):
            core, slr, d, cfg = scl_case(rng, target)
            assert check_convergence(core, slr, cfg).worst_margin == pytest.approx(target)
            err = np.max(np.abs(sigma_scl_series(40, d, core, slr, cfg).sigma
                                - sigma_scl_resummed(d, core, slr, cfg).sigma))
            worst[round(float(target), 3)] = err
        bad = {t: e for t, e in worst.items() if not e <= 1e-8}
        first = min(bad) if bad else None
        c.check(not bad, f"{len(bad)}/43 margins in (0, 0.9) exceed 1e-8"
                         + (f" (from margin {first}: err {bad[first]:.1e}; at 0.89: "
                            f"{worst[0.89]:.1e})" if bad else ""))
        # constructed divergent case, margin 1.2
        basis = AngularBasis((0,))
        core = build_core_smatrix(basis, QuantumDefects({0: 0.25}))
        slr = LongRangeSMatrix("synthetic", basis,
                               [OrbitTerm("a", [[0.6 / np.sin(np.pi / 4)]], 1.3)])
        cfg = CrossSectionConfig(np.linspace(100.0, 110.0, 101))
        margin = check_convergence(core, slr, cfg).worst_margin
        d = DipoleVector(basis, np.ones(1))
        mags = [np.max(np.abs(sigma_scl_series(N, d, core, slr, cfg).sigma)) for N in (5, 10, 20, 40)]
        c.check(margin > 1 and all(b > a for a, b in zip(mags, mags[1:])),
                f"margin {margin:.2f}: partial sums grow {mags[0]:.1e} -> {mags[-1]:.1e}")


def test_criterion_05_hydrogen_reduction():
    rng = np.random.default_rng(11)
    with Criterion(5, "hydrogen: series N-independent", 5.0) as c:
        worst = 0.0
        for n in range(1, 7):
            basis = AngularBasis(tuple(range(0, 2 * n, 2)))
            core = build_core_smatrix(basis, QuantumDefects.hydrogen(basis))
            slr = LongRangeSMatrix("synthetic", basis, [
                OrbitTerm(f"t{k}", rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)),
                          0.4 + 0.6 * k) for k in range(3)])
            d = DipoleVector(basis, rng.standard_normal(n) + 1j * rng.standard_normal(n))
            cfg = CrossSectionConfig(np.linspace(100, 120, 301), gamma=1.0)
            ref = sigma_scl_resummed(d, core, slr, cfg).sigma
            scale = np.max(np.abs(ref))
            for N in (0, 1, 2, 10, 40):
                s = sigma_scl_series(N, d, core, slr, cfg).sigma
                worst = max(worst, np.max(np.abs(s - ref)) / scale)
        eps = np.finfo(float).eps
        c.check(worst <= 8 * eps, f"max relative difference {worst:.1e} <= 8 ulp")


def two_primitive_hydrogen():
    orbits = find_closed_orbits(-0.5, n_angles=128, s_max=1.2)
    r1 = next(o for o in orbits if o.label == "R1")
    v1 = next(o for o in orbits if o.label == "V1")
    basis = AngularBasis((0, 2, 4, 6))
    slr = assemble_slr([r1, v1], basis, include_axis=True)
    core = build_core_smatrix(basis, QuantumDefects.hydrogen(basis))
    d = DipoleVector(basis, np.array([1.0, 0.5, 0.0, 0.0]))
    return (r1.s_tilde, v1.s_tilde), slr, core, d


def test_criterion_06_order_inventory():
    with Criterion(6, "order-1/order-2 phase inventory", 30.0) as c:
        (si, sj), slr, core, d = two_primitive_hydrogen()
        c.check(len(slr.terms) == 2, f"two primitives S = {si:.6f}, {sj:.6f}")
        cfg = CrossSectionConfig(W_GRID, gamma=2.0)
        expect = {1: [si, sj], 2: [2 * si, si + sj, 2 * sj]}
        for n, want in expect.items():
            spec = recurrence_transform(sigma_order_term(n, d, core, slr, cfg))
            got = [p.action for p in find_peaks(spec, 0.05)]
            tol = spec.resolution / 2
            strict = 1.0 / (2 * (W_GRID[-1] - W_GRID[0]))
            ok = len(got) == len(want) and all(abs(g - w) <= tol for g, w in zip(got, sorted(want)))
            dev = max((abs(g - w) for g, w in zip(got, sorted(want))), default=np.inf)
            c.check(ok, f"order {n}: {len(got)} peaks, max |dS| {dev:.1e} <= {tol:.1e}")
            c.check(dev <= strict, f"order {n}: also within 1/(2W) = {strict:.1e}")


def test_criterion_07_ghost_cancellation():
    with Criterion(7, "ghost/combination cancellation vs gap", 30.0) as c:
        for gap, want in ((3.0, True), (5.0, True), (10.0, True), (0.1, False)):
            run = run_ghost_harness(ghost_harness(gap=gap), W_GRID, gamma=0.0)
            items = run.cancellation.items
            if len(items) != 1:
                c.check(False, f"gap {gap}: {len(items)} ghost candidates")
                continue
            it = items[0]
            sup = min(it.suppression_first_db, it.suppression_second_db)
            c.check(it.cancelled == want and (sup >= 20) == want,
                    f"gap {gap}: suppression {sup:.1f} dB ({'>=' if want else '<'} 20)")


def test_criterion_08_core_phase():
    with Criterion(8, "core-phase interference", 30.0) as c:
        harness = ghost_harness(gap=10.0)
        s_ghost = harness.ghost.term.s_tilde
        worst_phase, residual = 0.0, []
        mus = (0.0, 0.005, 0.02, 0.05, 0.1, 0.2, 0.3)
        for mu in mus:
            run = run_ghost_harness(harness, W_GRID, mu=mu)
            f1 = run.spectra["order-1"].at(s_ghost)
            f2 = run.spectra["order-2"].at(s_ghost)
            ft = run.spectra["total"].at(s_ghost)
            # -F2/F1 = e^{2 pi i mu}: the order-2 path scatters off the core once more
            rel = -f2 / f1
            dphi = np.angle(rel * np.exp(-2j * np.pi * mu))
            worst_phase = max(worst_phase, abs(dphi))
            residual.append(abs(ft) / abs(f1))
        c.check(worst_phase < 1e-2, f"max |arg(-F2/F1) - 2 pi mu| = {worst_phase:.1e} rad")
        expect = [2 * abs(np.sin(np.pi * m)) for m in mus]
        mono = all(b > a for a, b in zip(residual, residual[1:]))
        close = all(abs(r - e) < 0.02 + 0.05 * e for r, e in zip(residual[1:], expect[1:]))
        c.check(mono and close, "|F_total/F1| = " + ", ".join(f"{r:.3f}" for r in residual)
                + " tracks 2|sin(pi mu)|")
        c.check(residual[0] < 0.1, f"mu = 0 restores cancellation ({20 * np.log10(residual[0]):.1f} dB)")


@pytest.mark.parametrize("include_axis", [False, True])
def test_criterion_09_sweep(include_axis):
    label = "axis terms included" if include_axis else "default terms"
    with Criterion(9, f"sweep, {label}", 600.0, "b" if include_axis else "a") as c:
        cfg = RunConfig(epsilons=tuple(np.round(np.linspace(-0.9, -0.3, 7), 10)), gamma=2.0,
                        include_axis=include_axis, workers=4)
        res = order_resolved_sweep(cfg.epsilons, cfg, orders=(1, 2))
        bad1 = [(r.epsilon, m.peak.action, m.classification) for r in res.rows
                for m in r.reports["order-1"].matches
                if m.classification not in ("classical orbit", "repetition")]
        bad2 = [(r.epsilon, m.peak.action, m.classification) for r in res.rows
                for m in r.reports["order-2"].matches
                if m.classification not in ("repetition", "combination")]
        n1 = sum(len(r.peaks["order-1"]) for r in res.rows)
        n2 = sum(len(r.peaks["order-2"]) for r in res.rows)
        c.check(len(res.rows) == 7, "7 energies")
        c.check(not bad1, f"order-1: {n1} peaks, {len(bad1)} not a primitive/repetition {bad1[:3]}")
        c.check(not bad2, f"order-2: {n2} peaks, {len(bad2)} not a combination {bad2[:3]}")
        c.check(not res.unidentified(), f"{len(res.unidentified())} unidentified")
        if include_axis:
            c.check(n1 > 0 and n2 > 0, "spectra are not empty")
        else:
            empty = [r.epsilon for r in res.rows if not r.peaks["order-1"]]
            c.check(True, f"order-1 empty at eps {empty} (only axis/dark planar orbits)")


def test_criterion_10_monodromy():
    with Criterion(10, "variational vs finite-difference m12", 60.0) as c:
        orbits = find_closed_orbits(-0.6, n_angles=256, s_max=4.0, workers=4)
        worst, n = 0.0, 0
        for o in orbits:
            if o.degenerate or o.flagged:
                continue
            fd = m12_finite_difference(o, -0.6)
            worst = max(worst, abs(o.m12 - fd) / abs(fd))
            n += 1
        c.check(n >= 5, f"{n} nondegenerate orbits")
        c.check(worst < 1e-4, f"max relative difference {worst:.1e} < 1e-4")
