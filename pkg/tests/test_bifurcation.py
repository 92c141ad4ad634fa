import numpy as np
import pytest
from hypothesis import given, strategies as st

from rydghost.classical import ClosedOrbitFamily, DeviationFamily, scan_bifurcations
from rydghost.classical.bifurcation import find_roots


def planted(eps_b, center=0.5, curvature=1.0):
    """Two roots center +- sqrt((eps_b - eps)/curvature) for eps < eps_b, none above."""
    return DeviationFamily(lambda t, e: curvature * (t - center) ** 2 + (e - eps_b),
                           (0.0, 1.0), "planted",
                           action=lambda t, e: 1.0 + (t - center))


def test_planted_saddle_node_located():
    recs = scan_bifurcations(planted(-0.37), (-0.5, -0.2), 1e-7, n_steps=6)
    assert len(recs) == 1
    r = recs[0]
    assert r.complete
    assert r.epsilon_b == pytest.approx(-0.37, abs=1e-7)
    assert r.interval[1] - r.interval[0] <= 1e-7
    # the pair coalesces at the planted centre
    assert np.mean(r.orbit_pair) == pytest.approx(0.5, abs=1e-6)
    gaps = [h[3] for h in r.history]
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))


@given(st.floats(-0.45, -0.25), st.floats(0.4, 0.6), st.floats(2.0, 4.0))
def test_planted_saddle_node_property(eps_b, center, curvature):
    recs = scan_bifurcations(planted(eps_b, center, curvature), (-0.5, -0.2), 1e-6, n_steps=5)
    assert len(recs) == 1
    assert recs[0].epsilon_b == pytest.approx(eps_b, abs=1e-6)


def test_no_bifurcation_no_record():
    fam = DeviationFamily(lambda t, e: t - 0.5 - 0.1 * e, (0.0, 1.0))
    assert scan_bifurcations(fam, (-0.5, -0.2), 1e-6) == []


def test_root_leaving_window_is_incomplete():
    fam = DeviationFamily(lambda t, e: t - (0.5 + 2 * (e + 0.4)), (0.0, 1.0))
    recs = scan_bifurcations(fam, (-0.5, -0.1), 1e-6, n_steps=4)
    assert len(recs) == 1 and not recs[0].complete


def test_close_pair_found_from_hints():
    # at eps=-0.3701 the pair is 0.02 apart, closer than the 64-point grid resolves
    fam = planted(-0.37)
    hints = find_roots(fam, -0.40)
    assert len(hints) == 2
    assert len(find_roots(fam, -0.3701, hints)) == 2


def test_scan_argument_checks():
    with pytest.raises(ValueError):
        scan_bifurcations(planted(-0.3), (-0.2, -0.5), 1e-6)
    with pytest.raises(ValueError):
        scan_bifurcations(planted(-0.3), (-0.5, -0.2), 0.0)


def test_physical_saddle_node():
    # a pair of closed orbits near S = 2.5755 is born as eps rises through -0.1154
    fam = ClosedOrbitFamily(2.615, (0.67, 0.79))
    recs = scan_bifurcations(fam, (-0.13, -0.09), 1e-5, n_steps=4)
    assert len(recs) == 1 and recs[0].complete
    r = recs[0]
    assert r.epsilon_b == pytest.approx(-0.115444, abs=2e-5)
    assert len(find_roots(fam, r.interval[1] + 2e-3)) - len(find_roots(fam, r.interval[0] - 2e-3)) == 2
    gaps = [h[3] for h in r.history]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-6
    assert r.actions[0] == pytest.approx(2.5755, abs=1e-3)
