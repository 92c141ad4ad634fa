"""Flat ``key = value`` run configuration.

Every key must be known: a misspelled key is an error rather than a silently
ignored setting.  Per-channel values use ``mu_<l>`` (quantum defect) and
``d_<l>`` (dipole, ``re`` or ``re, im``).
"""
from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .scattering_core import AngularBasis, DipoleVector, QuantumDefects, default_dipole
from .semiclassical_slr import DEFAULT_C0, DEFAULT_PHI0, SAMPLES_PER_PERIOD


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in re.split(r"[,\s]+", text.strip()) if x)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in re.split(r"[,\s]+", text.strip()) if x)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _complex(text: str) -> complex:
    parts = _floats(text)
    if len(parts) == 1:
        return complex(parts[0])
    if len(parts) == 2:
        return complex(parts[0], parts[1])
    raise ValueError(f"expected 're' or 're, im', got {text!r}")


@dataclass
class RunConfig:
    epsilons: tuple[float, ...] = (-0.5,)
    w_min: float = 100.0
    w_max: float = 500.0
    n_w: int = 4096
    gamma: float = 2.0
    prefactor: float = 1.0
    l_values: tuple[int, ...] = (0, 2, 4, 6)
    m: int = 0
    parity: str = "even"
    mu: dict[int, float] = field(default_factory=dict)
    dipole: dict[int, complex] = field(default_factory=dict)
    n_angles: int = 256
    s_max: float = 2.5
    ode_tol: float = 1e-12
    closure_tol: float = 1e-9
    workers: int = 1
    max_members: int = 2
    include_axis: bool = False
    window: str = "hann"
    pad_factor: int = 8
    threshold: float = 0.05
    match_tol: float = 0.0  # 0 selects max(resolution/2, 1e-3)
    suppression_db: float = 20.0
    orders: tuple[int, ...] = (1, 2)
    n_series: int = 40
    c0: float = DEFAULT_C0
    phi0: float = DEFAULT_PHI0
    seed: int = 0
    # bifurcation scan
    scan_eps_min: float = -0.13
    scan_eps_max: float = -0.09
    scan_d_epsilon: float = 1e-5
    scan_steps: int = 4
    scan_s_ref: float = 2.615
    scan_theta_min: float = 0.67
    scan_theta_max: float = 0.79
    # synthetic ghost harness
    synth_actions: tuple[float, ...] = (1.0, 1.37)
    synth_gap: float = 5.0

    def __post_init__(self):
        if not self.epsilons:
            raise ConfigError("at least one epsilon is required")
        if any(e >= 0 for e in self.epsilons):
            raise ConfigError("scaled energies must be negative (bound regime)")
        if not self.w_min < self.w_max:
            raise ConfigError(f"w_min ({self.w_min}) must be below w_max ({self.w_max})")
        if self.n_w < 16:
            raise ConfigError("n_w must be at least 16")
        if self.gamma < 0 or self.prefactor <= 0:
            raise ConfigError("gamma must be >= 0 and prefactor > 0")
        if any(n < 1 for n in self.orders):
            raise ConfigError("orders must be positive integers")
        try:
            basis = self.basis
        except ValueError as err:
            raise ConfigError(str(err)) from None
        for name, table in (("mu", self.mu), ("d", self.dipole)):
            missing = sorted(set(table) - set(basis.l_values))
            if missing:
                raise ConfigError(f"{name}_{missing[0]} refers to l={missing[0]}, "
                                  f"not in l_values {list(basis.l_values)}")
        dw = (self.w_max - self.w_min) / (self.n_w - 1)
        top = self.s_max * max(self.orders)
        need = 2.0 * np.pi / (SAMPLES_PER_PERIOD * top)
        if dw > need:
            n_need = int(np.ceil((self.w_max - self.w_min) / need)) + 1
            raise ConfigError(f"n_w = {self.n_w} undersamples actions up to {top}: "
                              f"need n_w >= {n_need}")

    @property
    def basis(self) -> AngularBasis:
        return AngularBasis(tuple(self.l_values), self.m, self.parity)

    @property
    def defects(self) -> QuantumDefects:
        return QuantumDefects(dict(self.mu))

    def dipole_vector(self) -> DipoleVector:
        basis = self.basis
        if not self.dipole:
            return default_dipole(basis)
        return DipoleVector(basis, np.array([self.dipole.get(l, 0.0) for l in basis.l_values],
                                            dtype=complex))

    def w_grid(self) -> np.ndarray:
        return np.linspace(self.w_min, self.w_max, self.n_w)

    def canonical(self) -> list[tuple[str, str]]:
        """Resolved settings as sorted ``(key, value)`` text pairs."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "mu":
                out += [(f"mu_{l}", repr(float(x))) for l, x in sorted(v.items())]
            elif f.name == "dipole":
                out += [(f"d_{l}", f"{x.real!r}, {x.imag!r}") for l, x in sorted(v.items())]
            elif isinstance(v, tuple):
                out.append((f.name, ", ".join(repr(x) for x in v)))
            else:
                out.append((f.name, repr(v) if not isinstance(v, str) else v))
        return sorted(out)

    def hash(self) -> str:
        text = "\n".join(f"{k}={v}" for k, v in self.canonical())
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_updates(self, **kw) -> "RunConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(kw)
        return RunConfig(**data)


_SCALARS = {f.name: f for f in fields(RunConfig)}
_ALIASES = {"epsilon": "epsilons"}
_LIST_PARSERS = {"epsilons": _floats, "l_values": _ints, "orders": _ints, "synth_actions": _floats}


def _convert(key: str, text: str):
    if key in _LIST_PARSERS:
        return _LIST_PARSERS[key](text)
    default = getattr(RunConfig(), key)
    if isinstance(default, bool):
        return _bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text.strip()


def parse_config(text: str, source: str = "<config>", overrides=()) -> RunConfig:
    """Parse ``key = value`` text; ``overrides`` are extra ``key=value`` strings applied last."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from None
    for item in overrides:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key = _ALIASES.get(key.strip(), key.strip())
        for alias, target in _ALIASES.items():
            if target == key:
                parser.remove_option("run", alias)
        parser["run"][key] = val.strip()
    values: dict = {}
    mu: dict[int, float] = {}
    dip: dict[int, complex] = {}
    for raw_key, raw in parser["run"].items():
        key = _ALIASES.get(raw_key, raw_key)
        try:
            if m := re.fullmatch(r"mu_(\d+)", key):
                mu[int(m.group(1))] = float(raw)
            elif m := re.fullmatch(r"d_(\d+)", key):
                dip[int(m.group(1))] = _complex(raw)
            elif key in _SCALARS and key not in ("mu", "dipole"):
                values[key] = _convert(key, raw)
            else:
                raise ConfigError(f"{source}: unknown key {raw_key!r}")
        except ValueError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"{source}: bad value for {raw_key!r}: {err}") from None
    return RunConfig(mu=mu, dipole=dip, **values)


def load_config(path: str | Path | None, overrides=()) -> RunConfig:
    if path is None:
        return parse_config("", "<defaults>", overrides)
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path), overrides)


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.canonical())
