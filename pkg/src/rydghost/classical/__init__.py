"""Classical closed orbits of the diamagnetic Kepler problem."""

from .bifurcation import BifurcationRecord, ClosedOrbitFamily, DeviationFamily, scan_bifurcations
from .catalog import CatalogEntry, OrbitCatalog, build_catalog
from .dynamics import IntegrationError, integrate_trajectory, variational_flow
from .search import (ClosedOrbit, axis_orbit, compute_monodromy, find_closed_orbits,
                     m12_finite_difference, planar_orbit)
