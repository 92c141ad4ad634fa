import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import sph_harm_y

from rydghost.classical import ClosedOrbit, axis_orbit, build_catalog, find_closed_orbits
from rydghost.scattering_core import AngularBasis, ConfigurationError, matrix_norm
from rydghost.semiclassical_slr import (DegenerateOrbitError, LongRangeSMatrix, OrbitTerm,
                                        ScaledField, assemble_slr, build_orbit_term,
                                        check_grid_density, decompose_slr, evaluate_slr,
                                        make_ghost_term, permutation_sum)

BASIS = AngularBasis((0, 2, 4, 6))


def orbit(theta_i=0.9, theta_f=1.3, s=1.2, m12=0.7, maslov=3, **kw):
    return ClosedOrbit(theta_i, theta_f, s, 10.0, m12, maslov, label="X", **kw)


def amplitude_oracle(o, ls, c0, phi0):
    """Entry-by-entry product form with harmonics from scipy's Y_l^m."""
    A = np.zeros((len(ls), len(ls)), dtype=complex)
    for a, la in enumerate(ls):
        for b, lb in enumerate(ls):
            yf = np.real(sph_harm_y(la, 0, o.theta_f, 0.0))
            yi = np.real(sph_harm_y(lb, 0, o.theta_i, 0.0))
            A[a, b] = (c0 * np.sqrt(np.sin(o.theta_i) * np.sin(o.theta_f) / abs(o.m12)) * yf * yi
                       * np.exp(-0.5j * np.pi * o.maslov - 1j * phi0))
    return A


@pytest.mark.parametrize("c0,phi0", [(1.0, 0.75 * np.pi), (2.5, 0.1)])
def test_orbit_term_matches_oracle(c0, phi0):
    o = orbit(m12=-0.4)
    t = build_orbit_term(o, BASIS, c0, phi0)
    np.testing.assert_allclose(t.amplitude, amplitude_oracle(o, BASIS.l_values, c0, phi0),
                               rtol=1e-13, atol=1e-15)
    assert t.s_tilde == o.s_tilde
    assert np.linalg.matrix_rank(t.amplitude) == 1


def test_term_phase_and_damping():
    t = OrbitTerm("a", np.array([[0.3 - 0.1j]]), 1.7)
    w = np.array([100.0, 123.4])
    got = t.contribution(w, gamma=2.0)[:, 0, 0]
    want = (0.3 - 0.1j) * np.exp(1j * 1.7 * w) * np.exp(-1.7)
    np.testing.assert_allclose(got, want, rtol=1e-12)
    S = LongRangeSMatrix("synthetic", AngularBasis((0,)), [t])
    assert evaluate_slr(S, ScaledField(123.4, 2.0))[0, 0] == pytest.approx(want[1], rel=1e-12)


def test_degenerate_and_axis_refused():
    with pytest.raises(DegenerateOrbitError, match="m12"):
        build_orbit_term(orbit(m12=1e-14), BASIS)
    with pytest.raises(DegenerateOrbitError, match="close"):
        build_orbit_term(orbit(flagged=True), BASIS)
    ax = axis_orbit(-0.5)
    with pytest.raises(DegenerateOrbitError, match="axis"):
        build_orbit_term(ax, BASIS)
    t = build_orbit_term(ax, BASIS, axis_theta=0.05)
    assert np.all(np.isfinite(t.amplitude)) and matrix_norm(t.amplitude) > 0


def test_assemble_skips_axis_by_default():
    cat = build_catalog(find_closed_orbits(-0.5, n_angles=128, s_max=1.5), 3.0, 2, -0.5)
    S = assemble_slr(cat, BASIS)
    assert S.source == "semiclassical" and S.epsilon == -0.5
    axis_labels = [o.label for o in cat.primitives if o.on_axis]
    assert axis_labels and set(axis_labels) <= set(S.skipped)
    assert len(S.terms) == len(cat.primitives) - len(S.skipped)
    S_ax = assemble_slr(cat, BASIS, include_axis=True)
    assert len(S_ax.terms) == len(S.terms) + len(axis_labels)
    assert sorted(t.s_tilde for t in S.terms) == sorted(
        o.s_tilde for o in cat.primitives if not o.on_axis)


def test_mirror_pair_terms_related_by_parity():
    # even-l harmonics are symmetric under theta -> pi - theta
    o = orbit()
    a = build_orbit_term(o, BASIS).amplitude
    b = build_orbit_term(o.mirrored(), BASIS).amplitude
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_shape_validation():
    with pytest.raises(ConfigurationError):
        LongRangeSMatrix("synthetic", BASIS, [OrbitTerm("a", np.eye(2), 1.0)])
    with pytest.raises(ValueError):
        LongRangeSMatrix("quantum", BASIS, [])
    with pytest.raises(ValueError):
        OrbitTerm("a", np.array([[np.nan]]), 1.0)


def sampled(fn, w, basis=AngularBasis((0,)), gamma=0.0):
    samples = fn(w)[:, None, None] * np.ones((1, basis.size, basis.size))
    return LongRangeSMatrix("file", basis, w_grid=w, samples=samples, gamma=gamma)


def test_file_spline_accuracy():
    f = lambda w: 0.4 * np.exp(1j * 1.3 * w) + 0.2j * np.exp(1j * 0.6 * w)
    w = np.linspace(100, 200, 2001)  # 48 points per period of the fastest phase
    S = sampled(f, w)
    wq = np.linspace(100.01, 199.99, 777)
    np.testing.assert_allclose(S.evaluate(wq)[:, 0, 0], f(wq), atol=1e-5)
    with pytest.raises(ValueError, match="extrapolation"):
        S.evaluate([99.0])
    with pytest.raises(ValueError, match="gamma"):
        S.evaluate([150.0], gamma=1.0)
    with pytest.raises(ValueError, match="increasing"):
        sampled(f, w[::-1])


def test_grid_density_rule():
    check_grid_density(np.linspace(0, 100, 1001), 2 * np.pi / (6 * 0.1))
    with pytest.raises(ValueError, match="at least"):
        check_grid_density(np.linspace(0, 100, 1001), 2 * np.pi / (6 * 0.1) * 1.01)


def test_permutation_sum_oracle(rng):
    mats = [rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)) for _ in range(3)]
    terms = [OrbitTerm(n, m, 1.0) for n, m in zip("abc", mats)]
    want = sum(np.linalg.multi_dot(p) for p in itertools.permutations(mats))
    np.testing.assert_allclose(permutation_sum(terms), want, rtol=1e-12)
    # repeated constituents count distinct orderings only
    rep = [terms[0], terms[0], terms[1]]
    A, B = mats[0], mats[1]
    np.testing.assert_allclose(permutation_sum(rep), A @ A @ B + A @ B @ A + B @ A @ A,
                               rtol=1e-12)


@given(st.floats(1e-3, 12.0), st.integers(0, 1000))
def test_ghost_residual_ratio(gap, seed):
    rng = np.random.default_rng(seed)
    b = AngularBasis((0, 2))
    prims = [OrbitTerm(f"p{k}", rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)),
                       1.0 + k * 0.37) for k in range(2)]
    g = make_ghost_term(prims, -0.5, -0.5 + gap, residual_seed=seed)
    assert g.residual_ratio == pytest.approx(np.exp(-gap), rel=1e-9)
    assert g.term.s_tilde == pytest.approx(2.37)
    assert g.constituents == ("p0", "p1")
    assert LongRangeSMatrix("synthetic", b, prims + [g.term]).max_action == pytest.approx(2.37)


def test_ghost_argument_checks():
    p = [OrbitTerm("a", np.eye(1), 1.0), OrbitTerm("b", np.eye(1), 2.0)]
    with pytest.raises(ValueError, match="real"):
        make_ghost_term(p, -0.1, -0.2)
    with pytest.raises(ValueError):
        make_ghost_term(p[:1], -0.5, 0.0)


def test_ghost_is_reproducible():
    p = [OrbitTerm("a", np.eye(2) * 0.3, 1.0), OrbitTerm("b", np.ones((2, 2)) * 0.2j, 1.4)]
    a = make_ghost_term(p, -0.5, 0.5, residual_seed=7).term.amplitude
    b = make_ghost_term(p, -0.5, 0.5, residual_seed=7).term.amplitude
    c = make_ghost_term(p, -0.5, 0.5, residual_seed=8).term.amplitude
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_decompose_separates_ghosts():
    orbits = [orbit(s=1.0), orbit(s=1.37)]
    cat = build_catalog(orbits, 3.0, 2, -0.5)
    b = AngularBasis((0,))
    prims = [OrbitTerm("a", [[0.5]], 1.0), OrbitTerm("b", [[0.5j]], 1.37)]
    g = make_ghost_term(prims, -0.5, 4.5)
    S = LongRangeSMatrix("synthetic", b, prims + [g.term, OrbitTerm("r", [[0.1]], 2.0)])
    classical, ghosts = decompose_slr(S, cat)
    assert [t.orbit_id for t in classical] == ["a", "b", "r"]  # 2.0 is the repetition of 1.0
    assert [t.s_tilde for t in ghosts] == [pytest.approx(2.37)]
