"""Plain-text artifact formats.

Every file starts with a ``#``-prefixed header of ``key: value`` lines that
records the artifact kind, the config hash and the conventions (actions in
units of 2 pi, transform kernel ``exp(-i S w)``, window).  Floats are written
with 17 significant digits so that they read back bit-identically.  Files are
written to a temporary sibling and renamed into place.
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .classical.catalog import Combination, OrbitCatalog
from .classical.search import ClosedOrbit
from .cross_section import ConvergenceReport, SpectrumSamples
from .recurrence import CancellationReport, MatchReport, RecurrenceSpectrum
from .scattering_core import AngularBasis
from .semiclassical_slr import LongRangeSMatrix, OrbitTerm, check_grid_density

CONVENTIONS = {
    "action_units": "2*pi (term phases exp(+i S w))",
    "ft_kernel": "exp(-i S w)",
}


class FormatError(ValueError):
    pass


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_atomic(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def header(kind: str, config_hash: str = "", **items) -> str:
    lines = [f"# kind: {kind}", f"# version: rydghost {__version__}"]
    if config_hash:
        lines.append(f"# config_hash: {config_hash}")
    for k, v in CONVENTIONS.items():
        lines.append(f"# {k}: {v}")
    for k, v in items.items():
        lines.append(f"# {k}: {v}")
    return "\n".join(lines) + "\n"


@dataclass
class TextTable:
    meta: dict[str, str]
    rows: list[tuple[int, list[str]]]  # (line number, tokens)


def read_table(path: str | Path, kind: str | None = None) -> TextTable:
    meta: dict[str, str] = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                key, sep, val = s[1:].partition(":")
                if sep:
                    meta.setdefault(key.strip(), val.strip())
                continue
            rows.append((n, s.split()))
    if kind is not None and meta.get("kind") != kind:
        raise FormatError(f"{path}: expected a {kind!r} file, found {meta.get('kind')!r}")
    return TextTable(meta, rows)


def _num(tok: str, path, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise FormatError(f"{path}:{line}: not a number: {tok!r}") from None


def _meta(table: TextTable, key: str, path):
    try:
        return table.meta[key]
    except KeyError:
        raise FormatError(f"{path}: header lacks {key!r}") from None


def _ls(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split())


# -- orbit catalogs ---------------------------------------------------------

def catalog_text(cat: OrbitCatalog, config_hash: str = "") -> str:
    out = [header("orbit-catalog", config_hash, epsilon=fmt(cat.epsilon),
                  primitives=len(cat.primitives), combinations=len(cat.combinations)),
           "# O label theta_i theta_f s_tilde period_tau m12 maslov repetition residual flagged\n"
           "# C kind total_action member_indices\n"]
    for o in cat.primitives:
        out.append(" ".join(["O", o.label or "-", fmt(o.theta_i), fmt(o.theta_f), fmt(o.s_tilde),
                             fmt(o.period_tau), fmt(o.m12), str(o.maslov), str(o.repetition),
                             fmt(o.residual), str(int(o.flagged))]) + "\n")
    for c in cat.combinations:
        out.append(" ".join(["C", c.kind, fmt(c.total_action),
                             ",".join(str(i) for i in c.members)]) + "\n")
    return "".join(out)


def load_catalog(path: str | Path) -> OrbitCatalog:
    table = read_table(path, "orbit-catalog")
    prims, combos = [], []
    for line, tok in table.rows:
        if tok[0] == "O" and len(tok) == 11:
            v = [_num(t, path, line) for t in tok[2:7]]
            prims.append(ClosedOrbit(theta_i=v[0], theta_f=v[1], s_tilde=v[2], period_tau=v[3],
                                     m12=v[4], maslov=int(tok[7]),
                                     label="" if tok[1] == "-" else tok[1],
                                     repetition=int(tok[8]), residual=_num(tok[9], path, line),
                                     flagged=bool(int(tok[10]))))
        elif tok[0] == "C" and len(tok) == 4:
            members = tuple(int(i) for i in tok[3].split(","))
            combos.append(Combination(members, _num(tok[2], path, line), tok[1]))
        else:
            raise FormatError(f"{path}:{line}: malformed catalog record")
    return OrbitCatalog(float(_meta(table, "epsilon", path)), prims, combos)


# -- term lists -------------------------------------------------------------

def _complex_tokens(a: np.ndarray) -> list[str]:
    flat = np.asarray(a, dtype=complex).ravel()
    out = []
    for z in flat:
        out += [fmt(z.real), fmt(z.imag)]
    return out


def terms_text(S: LongRangeSMatrix, config_hash: str = "") -> str:
    if not S.term_resolved:
        raise ValueError("term list needs a term-resolved S_LR")
    b = S.basis
    out = [header("slr-terms", config_hash, source=S.source, epsilon=fmt(S.epsilon),
                  l_values=" ".join(map(str, b.l_values)), m=b.m, parity=b.parity,
                  terms=len(S.terms), skipped=" ".join(S.skipped) or "-"),
           "# id s_tilde then N^2 amplitude entries (re im) row-major in (l, l')\n"]
    for t in S.terms:
        out.append(" ".join([t.orbit_id, fmt(t.s_tilde)] + _complex_tokens(t.amplitude)) + "\n")
    return "".join(out)


def _basis_from(table: TextTable, path) -> AngularBasis:
    return AngularBasis(_ls(_meta(table, "l_values", path)), int(table.meta.get("m", 0)),
                        table.meta.get("parity", "even"))


def _complex_row(tok, path, line, n2):
    if len(tok) != 2 * n2:
        raise FormatError(f"{path}:{line}: expected {2 * n2} numbers, found {len(tok)}")
    v = np.array([_num(t, path, line) for t in tok])
    return v[0::2] + 1j * v[1::2]


def load_terms(path: str | Path) -> LongRangeSMatrix:
    table = read_table(path, "slr-terms")
    basis = _basis_from(table, path)
    n = basis.size
    terms = []
    for line, tok in table.rows:
        amp = _complex_row(tok[2:], path, line, n * n).reshape(n, n)
        terms.append(OrbitTerm(tok[0], amp, _num(tok[1], path, line)))
    skipped = table.meta.get("skipped", "-")
    return LongRangeSMatrix(table.meta.get("source", "synthetic"), basis, terms,
                            epsilon=float(table.meta.get("epsilon", "nan")),
                            skipped=[] if skipped == "-" else skipped.split())


# -- sampled S_LR -----------------------------------------------------------

def sampled_slr_text(basis: AngularBasis, w: np.ndarray, samples: np.ndarray, epsilon: float,
                     gamma: float, config_hash: str = "") -> str:
    w = np.asarray(w, dtype=float)
    out = [header("quantum-slr", config_hash, n_l=basis.size,
                  l_values=" ".join(map(str, basis.l_values)), m=basis.m, parity=basis.parity,
                  epsilon=fmt(epsilon), gamma=fmt(gamma), n_w=len(w)),
           "# w then N^2 entries (re im) row-major in (l, l')\n"]
    for wk, Sk in zip(w, samples):
        out.append(" ".join([fmt(wk)] + _complex_tokens(Sk)) + "\n")
    return "".join(out)


def export_sampled(S: LongRangeSMatrix, w: np.ndarray, gamma: float = 0.0,
                   config_hash: str = "") -> str:
    return sampled_slr_text(S.basis, w, S.evaluate(w, gamma), S.epsilon, gamma, config_hash)


def load_quantum_slr(path: str | Path, basis: AngularBasis | None = None,
                     s_max: float | None = None) -> LongRangeSMatrix:
    """Read and validate a sampled S_LR file.

    ``basis`` (if given) must match the file's partial waves; ``s_max`` (if
    given) is the largest action the caller will resolve, and the grid must
    sample it densely enough.
    """
    table = read_table(path, "quantum-slr")
    file_basis = _basis_from(table, path)
    n = int(_meta(table, "n_l", path))
    if n != file_basis.size:
        raise FormatError(f"{path}: n_l = {n} but l_values lists {file_basis.size} waves")
    if basis is not None and tuple(basis.l_values) != tuple(file_basis.l_values):
        raise FormatError(f"{path}: file basis l = {list(file_basis.l_values)} does not match "
                          f"configured l = {list(basis.l_values)}")
    ws, rows = [], []
    for line, tok in table.rows:
        if len(tok) != 1 + 2 * n * n:
            raise FormatError(f"{path}:{line}: truncated record: expected {1 + 2 * n * n} "
                              f"numbers, found {len(tok)}")
        w = _num(tok[0], path, line)
        if ws and not w > ws[-1]:
            raise FormatError(f"{path}:{line}: w = {tok[0]} does not increase "
                              f"(previous {fmt(ws[-1])})")
        ws.append(w)
        rows.append(_complex_row(tok[1:], path, line, n * n).reshape(n, n))
    expect = table.meta.get("n_w")
    if expect is not None and int(expect) != len(ws):
        raise FormatError(f"{path}: header announces {expect} records, found {len(ws)}")
    w = np.array(ws)
    if s_max is not None:
        check_grid_density(w, s_max)
    return LongRangeSMatrix("file", file_basis, w_grid=w, samples=np.array(rows),
                            gamma=float(_meta(table, "gamma", path)),
                            epsilon=float(table.meta.get("epsilon", "nan")))


# -- spectra ----------------------------------------------------------------

def sigma_text(s: SpectrumSamples, config_hash: str = "", **items) -> str:
    out = [header("sigma", config_hash, order_tag=s.order_tag, n_w=len(s.w),
                  failed=" ".join(map(str, s.failed)) or "-",
                  **{k: v for k, v in s.meta.items()}, **items),
           "# w sigma\n"]
    out += [f"{fmt(a)} {fmt(b)}\n" for a, b in zip(s.w, s.sigma)]
    return "".join(out)


def load_sigma(path: str | Path) -> SpectrumSamples:
    table = read_table(path, "sigma")
    w = np.array([_num(t[0], path, n) for n, t in table.rows])
    sig = np.array([_num(t[1], path, n) for n, t in table.rows])
    failed = table.meta.get("failed", "-")
    meta = {}
    for k in ("gamma", "prefactor", "scale", "epsilon"):
        if k in table.meta:
            meta[k] = float(table.meta[k])
    return SpectrumSamples(w, sig, table.meta.get("order_tag", "?"),
                           () if failed == "-" else _ls(failed), meta)


def recurrence_text(spec: RecurrenceSpectrum, config_hash: str = "",
                    max_action: float | None = None, **items) -> str:
    keep = slice(None) if max_action is None else spec.actions <= max_action
    out = [header("recurrence-spectrum", config_hash, source=spec.source_tag, window=spec.window,
                  pad_factor=spec.pad_factor, w_min=fmt(spec.w_min), w_max=fmt(spec.w_max),
                  n_samples=spec.n_samples, coherent_gain=fmt(spec.coherent_gain),
                  sample_scale=fmt(spec.sample_scale), resolution=fmt(spec.resolution), **items),
           "# action magnitude phase re im\n"]
    for a, z in zip(spec.actions[keep], spec.strength[keep]):
        out.append(f"{fmt(a)} {fmt(abs(z))} {fmt(np.angle(z))} {fmt(z.real)} {fmt(z.imag)}\n")
    return "".join(out)


def load_recurrence(path: str | Path) -> RecurrenceSpectrum:
    table = read_table(path, "recurrence-spectrum")
    data = np.array([[_num(t, path, n) for t in tok] for n, tok in table.rows])
    m = table.meta
    return RecurrenceSpectrum(data[:, 0], data[:, 3] + 1j * data[:, 4], m["window"],
                              int(m["pad_factor"]), m.get("source", "?"), float(m["w_min"]),
                              float(m["w_max"]), int(m["n_samples"]), float(m["coherent_gain"]),
                              float(m["sample_scale"]))


def stacked_text(rows: list[tuple[float, RecurrenceSpectrum]], order_tag: str,
                 max_action: float, config_hash: str = "") -> str:
    """Recurrence spectra at several scaled energies, one block per energy."""
    window = rows[0][1].window if rows else "-"
    out = [header("stacked-recurrence", config_hash, order_tag=order_tag, window=window,
                  rows=len(rows), epsilons=" ".join(fmt(e) for e, _ in rows)),
           "# epsilon action magnitude phase\n"]
    for eps, spec in rows:
        keep = spec.actions <= max_action
        for a, z in zip(spec.actions[keep], spec.strength[keep]):
            out.append(f"{fmt(eps)} {fmt(a)} {fmt(abs(z))} {fmt(np.angle(z))}\n")
        out.append("\n")
    return "".join(out)


# -- reports ----------------------------------------------------------------

def match_report_text(report: MatchReport, config_hash: str = "", **items) -> str:
    out = [header("match-report", config_hash, tol_action=fmt(report.tol_action),
                  source_order=report.source_order, peaks=len(report.matches),
                  unidentified=len(report.unidentified),
                  ghost_candidates=len(report.ghost_candidates), **items)]
    for k, m in enumerate(report.matches):
        out.append(f"\n[peak {k}]\n")
        out.append(f"action = {fmt(m.peak.action)}\nmagnitude = {fmt(m.peak.magnitude)}\n"
                   f"phase = {fmt(m.peak.phase)}\nwidth = {fmt(m.peak.width)}\n"
                   f"class = {m.classification}\nmismatch = {fmt(m.mismatch)}\n"
                   f"ambiguous = {str(m.ambiguous).lower()}\n")
        out.append("entries = " + ("; ".join(f"{e.kind}:{e.label}@{fmt(e.action)}"
                                             for e in m.entries) or "-") + "\n")
    return "".join(out)


def cancellation_text(rep: CancellationReport, config_hash: str = "", **items) -> str:
    out = [header("cancellation-report", config_hash, suppression_db=fmt(rep.suppression_db),
                  items=len(rep.items), cancelled=len(rep.cancelled), **items)]
    for k, it in enumerate(rep.items):
        out.append(f"\n[ghost {k}]\n")
        out.append(
            f"action = {fmt(it.action)}\nlabel = {it.label}\n"
            f"partner_action = {'-' if it.partner_action is None else fmt(it.partner_action)}\n"
            f"first = {fmt(it.first.real)} {fmt(it.first.imag)}\n"
            f"second = {fmt(it.second.real)} {fmt(it.second.imag)}\n"
            f"total = {fmt(it.total.real)} {fmt(it.total.imag)}\n"
            f"suppression_first_db = {fmt(it.suppression_first_db)}\n"
            f"suppression_second_db = {fmt(it.suppression_second_db)}\n"
            f"consistency = {fmt(it.consistency)}\n"
            f"cancelled = {str(it.cancelled).lower()}\n")
    return "".join(out)


def convergence_text(rep: ConvergenceReport, config_hash: str = "", **items) -> str:
    out = [header("convergence-margins", config_hash, all_converged=str(rep.all_converged).lower(),
                  worst_w=fmt(rep.worst_w), worst_margin=fmt(rep.worst_margin), **items),
           "# w margin\n"]
    out += [f"{fmt(a)} {fmt(b)}\n" for a, b in zip(rep.w, rep.margin)]
    return "".join(out)


def read_records(path: str | Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Parse a ``[section]`` / ``key = value`` report into header and records."""
    meta, records = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                key, sep, val = s[1:].partition(":")
                if sep:
                    meta[key.strip()] = val.strip()
            elif s.startswith("["):
                records.append({"section": s.strip("[]")})
            else:
                key, _, val = s.partition("=")
                records[-1][key.strip()] = val.strip()
    return meta, records
