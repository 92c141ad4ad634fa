"""Channel space, core scattering matrix and the small dense matrix helpers.

The channel space is a single (m, parity) block of partial waves ``l``.  The
core S-matrix of a single-channel atom is diagonal with entries
``exp(2*pi*i*mu_l)`` built from the quantum defects ``mu_l``; hydrogen has
``mu_l = 0`` and therefore ``S_core = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Raised when inputs describing the channel space are inconsistent."""


@dataclass(frozen=True)
class AngularBasis:
    """Ordered partial waves of one (m, parity) block."""

    l_values: tuple[int, ...]
    m: int = 0
    parity: str = "even"

    def __post_init__(self):
        ls = tuple(int(l) for l in self.l_values)
        object.__setattr__(self, "l_values", ls)
        if len(ls) < 1:
            raise ConfigurationError("basis needs at least one partial wave")
        if self.parity not in ("even", "odd"):
            raise ConfigurationError(f"parity must be 'even' or 'odd', got {self.parity!r}")
        if any(b <= a for a, b in zip(ls, ls[1:])):
            raise ConfigurationError(f"l_values must be strictly increasing: {ls}")
        want = 0 if self.parity == "even" else 1
        for l in ls:
            if l < abs(self.m):
                raise ConfigurationError(f"l = {l} is below |m| = {abs(self.m)}")
            if l % 2 != want:
                raise ConfigurationError(f"l = {l} is inconsistent with {self.parity} parity")

    @property
    def size(self) -> int:
        return len(self.l_values)

    def index(self, l: int) -> int:
        return self.l_values.index(l)


@dataclass(frozen=True)
class QuantumDefects:
    """Quantum defects ``mu_l``; partial waves not listed default to 0."""

    mu: Mapping[int, float] = field(default_factory=dict)

    def for_basis(self, basis: AngularBasis, strict: bool = False) -> np.ndarray:
        if strict:
            missing = [l for l in basis.l_values if l not in self.mu]
            if missing:
                raise ConfigurationError(f"no quantum defect given for l = {missing}")
        return np.array([float(self.mu.get(l, 0.0)) for l in basis.l_values])

    @classmethod
    def hydrogen(cls, basis: AngularBasis) -> "QuantumDefects":
        return cls({l: 0.0 for l in basis.l_values})


@dataclass(frozen=True)
class CoreSMatrix:
    basis: AngularBasis
    entries: np.ndarray

    @property
    def is_hydrogenic(self) -> bool:
        return bool(np.all(self.entries == np.eye(self.basis.size)))


@dataclass(frozen=True)
class DipoleVector:
    """Row vector ``d`` of dipole amplitudes into each partial wave."""

    basis: AngularBasis
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=complex).reshape(-1)
        if d.shape != (self.basis.size,):
            raise ConfigurationError(
                f"dipole has {d.size} entries, basis has {self.basis.size}")
        if not np.all(np.isfinite(d)):
            raise ConfigurationError("dipole entries must be finite")
        object.__setattr__(self, "d", d)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.d, self.d).real)


@dataclass(frozen=True)
class TMatrix:
    basis: AngularBasis
    entries: np.ndarray


def build_core_smatrix(basis: AngularBasis, defects: QuantumDefects,
                       strict: bool = True) -> CoreSMatrix:
    """Diagonal core S-matrix ``exp(2*pi*i*mu_l)``.

    With ``strict`` every partial wave of the basis must carry a defect.
    """
    mu = defects.for_basis(basis, strict=strict)
    # reduce mod 1 first so mu and mu + 1 give bit-identical entries
    frac = mu - np.floor(mu)
    return CoreSMatrix(basis, np.diag(np.exp(2j * np.pi * frac)))


def build_t_matrix(core: CoreSMatrix) -> TMatrix:
    """``T = 1 - S_core``; vanishes identically for hydrogen."""
    return TMatrix(core.basis, np.eye(core.basis.size) - core.entries)


def matrix_norm(M) -> float:
    """Spectral norm (largest singular value) of a square matrix."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return float(np.linalg.norm(M, 2))


def spectral_norms(stack: np.ndarray) -> np.ndarray:
    """Spectral norms of a stack ``(..., N, N)`` of matrices."""
    return np.linalg.svd(stack, compute_uv=False)[..., 0]


def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(M)))))


def default_dipole(basis: AngularBasis) -> DipoleVector:
    """Angular part of the dipole from a p, m=0 state.

    Only ``l = 0`` and ``l = 2`` are reachable; the radial matrix elements
    are set to one.
    """
    d = np.zeros(basis.size, dtype=complex)
    coeffs = {0: 1.0 / np.sqrt(3.0), 2: 2.0 / np.sqrt(15.0)}
    for l, c in coeffs.items():
        if l in basis.l_values:
            d[basis.index(l)] = c
    if not np.any(d):
        d[0] = 1.0
    return DipoleVector(basis, d)


def as_basis(l_values: Sequence[int], m: int = 0, parity: str = "even") -> AngularBasis:
    return AngularBasis(tuple(l_values), m, parity)
