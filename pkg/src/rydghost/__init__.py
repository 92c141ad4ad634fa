"""Closed-orbit recurrence spectra of Rydberg atoms in a magnetic field, resolved by core-scattering order."""

__version__ = "0.1.0"
