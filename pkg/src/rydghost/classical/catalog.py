"""Orbit catalogs: primitive closed orbits plus their repetitions and combinations."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .search import ClosedOrbit


@dataclass(frozen=True)
class Combination:
    members: tuple[int, ...]
    total_action: float
    kind: str  # "repetition" | "combination"

    def label(self, primitives: list[ClosedOrbit]) -> str:
        counts = Counter(self.members)
        parts = []
        for idx in sorted(counts):
            name = primitives[idx].label or f"#{idx}"
            parts.append(f"{counts[idx]}{name}" if counts[idx] > 1 else name)
        return "+".join(parts)


@dataclass(frozen=True)
class CatalogEntry:
    """Flat view of a catalog line used by peak matching."""

    kind: str  # "primitive" | "repetition" | "combination"
    action: float
    label: str
    members: tuple[int, ...]


@dataclass
class OrbitCatalog:
    epsilon: float
    primitives: list[ClosedOrbit]
    combinations: list[Combination] = field(default_factory=list)

    def entries(self, kinds=("primitive", "repetition", "combination")) -> list[CatalogEntry]:
        out = []
        if "primitive" in kinds:
            out += [CatalogEntry("primitive", o.s_tilde, o.label, (i,))
                    for i, o in enumerate(self.primitives)]
        out += [CatalogEntry(c.kind, c.total_action, c.label(self.primitives), c.members)
                for c in self.combinations if c.kind in kinds]
        return out

    @property
    def max_action(self) -> float:
        actions = [e.action for e in self.entries()]
        return max(actions) if actions else 0.0


def build_catalog(primitives: list[ClosedOrbit], max_total_action: float,
                  max_members: int = 2, epsilon: float = float("nan")) -> OrbitCatalog:
    """Enumerate multisets of 2..max_members primitives with total action under the cap."""
    if max_members < 2:
        raise ValueError("max_members must be at least 2")
    order = sorted(range(len(primitives)), key=lambda i: primitives[i].s_tilde)
    combos: list[Combination] = []

    def extend(start: int, members: list[int], total: float):
        if len(members) >= 2:
            kind = "repetition" if len(set(members)) == 1 else "combination"
            ids = tuple(sorted(members))
            combos.append(Combination(ids, sum(primitives[i].s_tilde for i in ids), kind))
        if len(members) == max_members:
            return
        for pos in range(start, len(order)):
            i = order[pos]
            s = total + primitives[i].s_tilde
            if s > max_total_action:
                break  # actions are sorted, later ones only grow
            extend(pos, members + [i], s)

    extend(0, [], 0.0)
    combos.sort(key=lambda c: (c.total_action, c.members))
    return OrbitCatalog(epsilon, list(primitives), combos)
