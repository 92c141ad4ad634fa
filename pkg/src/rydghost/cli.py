"""Command-line entry point: ``rydghost <subcommand> [--config FILE] [--set key=value ...]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .classical.bifurcation import ClosedOrbitFamily, scan_bifurcations
from .classical.dynamics import IntegrationError
from .config import ConfigError, RunConfig, load_config
from .cross_section import (check_convergence, sigma_exact, sigma_order_sum, sigma_order_term,
                            sigma_scl_resummed, sigma_scl_series)
from .pipeline import SweepError, catalog_at, core_matrix, order_resolved_sweep, sigma_config, slr_at
from .recurrence import (default_match_tol, detect_cancellation, find_peaks, match_peaks,
                         recurrence_transform)
from .scattering_core import AngularBasis
from .synthetic import ghost_harness, run_ghost_harness

log = logging.getLogger("rydghost")

SIGMA_KINDS = ("exact", "order", "order-sum", "scl-series", "scl-resummed")


def _eps(args, cfg: RunConfig) -> float:
    return cfg.epsilons[0] if args.epsilon is None else args.epsilon


def _eps_tag(eps: float) -> str:
    return f"{eps:+.4f}".replace("+", "p").replace("-", "m")


def _catalog(args, cfg, eps):
    if getattr(args, "catalog", None):
        return io.load_catalog(args.catalog)
    return catalog_at(eps, cfg, max(cfg.orders))


def _slr(args, cfg, eps):
    if getattr(args, "slr", None):
        kind = io.read_table(args.slr).meta.get("kind")
        if kind == "quantum-slr":
            return io.load_quantum_slr(args.slr, cfg.basis, cfg.s_max)
        if kind == "slr-terms":
            S = io.load_terms(args.slr)
            if tuple(S.basis.l_values) != tuple(cfg.basis.l_values):
                raise io.FormatError(f"{args.slr}: term basis {list(S.basis.l_values)} does not "
                                     f"match configured l_values {list(cfg.basis.l_values)}")
            return S
        raise io.FormatError(f"{args.slr}: not an S_LR file (kind {kind!r})")
    return slr_at(_catalog(args, cfg, eps), cfg)


def _write(path, text):
    io.write_atomic(path, text)
    print(f"wrote {path}")


def cmd_orbits(args, cfg):
    eps = _eps(args, cfg)
    cat = catalog_at(eps, cfg, max(cfg.orders))
    for o in cat.primitives:
        print(f"{o.label:10s} theta_i={o.theta_i:.10f} S={o.s_tilde:.12f} "
              f"m12={o.m12:+.6e} maslov={o.maslov}{' FLAGGED' if o.flagged else ''}")
    _write(args.out, io.catalog_text(cat, cfg.hash()))
    return 0


def cmd_scan(args, cfg):
    family = ClosedOrbitFamily(cfg.scan_s_ref, (cfg.scan_theta_min, cfg.scan_theta_max),
                               label=f"S~{cfg.scan_s_ref:g}")
    recs = scan_bifurcations(family, (cfg.scan_eps_min, cfg.scan_eps_max), cfg.scan_d_epsilon,
                             cfg.scan_steps)
    out = [io.header("bifurcation-scan", cfg.hash(), family=family.label, records=len(recs),
                     d_epsilon=io.fmt(cfg.scan_d_epsilon))]
    for k, r in enumerate(recs):
        print(f"epsilon_b = {r.epsilon_b:.8f}  interval = [{r.interval[0]:.8f}, "
              f"{r.interval[1]:.8f}]  complete = {r.complete}")
        out.append(f"\n[bifurcation {k}]\nepsilon_b = {io.fmt(r.epsilon_b)}\n"
                   f"interval = {io.fmt(r.interval[0])} {io.fmt(r.interval[1])}\n"
                   f"orbit_pair = {io.fmt(r.orbit_pair[0])} {io.fmt(r.orbit_pair[1])}\n"
                   f"complete = {str(r.complete).lower()}\n")
        if r.actions:
            out.append(f"actions = {io.fmt(r.actions[0])} {io.fmt(r.actions[1])}\n")
        for h in r.history:
            out.append("history = " + " ".join(io.fmt(x) for x in h) + "\n")
    if not recs:
        print("no bifurcations in range")
    _write(args.out, "".join(out))
    return 0


def cmd_slr(args, cfg):
    eps = _eps(args, cfg)
    S = _slr(args, cfg, eps)
    if S.term_resolved:
        print(f"{len(S.terms)} terms, skipped: {', '.join(S.skipped) or 'none'}")
        _write(args.out, io.terms_text(S, cfg.hash()))
    if args.export_sampled:
        w = cfg.w_grid()
        _write(args.export_sampled, io.export_sampled(S, w, cfg.gamma, cfg.hash()))
    return 0


def cmd_sigma(args, cfg):
    eps = _eps(args, cfg)
    kind = args.kind or ("order" if args.order is not None else "exact")
    n = 1 if args.order is None else args.order
    S = _slr(args, cfg, eps)
    core, d, xcfg = core_matrix(cfg), cfg.dipole_vector(), sigma_config(cfg)
    if kind == "exact":
        s = sigma_exact(d, core, S, xcfg)
    elif kind == "order":
        s = sigma_order_term(n, d, core, S, xcfg)
    elif kind == "order-sum":
        s = sigma_order_sum(n, d, core, S, xcfg)
    elif kind == "scl-series":
        s = sigma_scl_series(args.order if args.order is not None else cfg.n_series, d, core, S,
                             xcfg)
    else:
        s = sigma_scl_resummed(d, core, S, xcfg)
    s.meta["epsilon"] = eps
    if s.failed:
        print(f"warning: {len(s.failed)} near-singular points set to NaN", file=sys.stderr)
    _write(args.out, io.sigma_text(s, cfg.hash()))
    return 0


def _print_peaks(peaks):
    for p in peaks:
        print(f"peak S={p.action:.6f} |F|={p.magnitude:.6e} phase={p.phase:+.4f} "
              f"fwhm={p.width:.5f}")


def cmd_ft(args, cfg):
    s = io.load_sigma(args.input)
    spec = recurrence_transform(s, cfg.window, cfg.pad_factor)
    _print_peaks(find_peaks(spec, cfg.threshold))
    _write(args.out, io.recurrence_text(spec, cfg.hash(), max_action=args.max_action))
    return 0


def _source_order(spec, given):
    if given is not None:
        return given
    tag = spec.source_tag
    if tag.startswith("order-") and tag[6:].isdigit():
        return int(tag[6:])
    return None


def cmd_match(args, cfg):
    spec = io.load_recurrence(args.input)
    cat = _catalog(args, cfg, _eps(args, cfg))
    tol = cfg.match_tol or default_match_tol(spec)
    rep = match_peaks(find_peaks(spec, cfg.threshold), cat, tol, _source_order(spec, args.order),
                      spec.resolution)
    for m in rep.matches:
        names = ", ".join(e.label for e in m.entries) or "-"
        print(f"S={m.peak.action:.6f} {m.classification:16s} {names}"
              f"{' (ambiguous)' if m.ambiguous else ''}")
    _write(args.out, io.match_report_text(rep, cfg.hash(), source=spec.source_tag))
    return 0


def cmd_cancel(args, cfg):
    first, second, total = (io.load_recurrence(p) for p in (args.first, args.second, args.total))
    cat = _catalog(args, cfg, _eps(args, cfg))
    tol = cfg.match_tol or default_match_tol(first)
    rep = match_peaks(find_peaks(first, cfg.threshold), cat, tol, 1, first.resolution)
    cr = detect_cancellation(first, second, total, rep, cfg.suppression_db)
    for it in cr.items:
        print(f"ghost S={it.action:.6f} {it.label}: {it.suppression_first_db:.1f} dB / "
              f"{it.suppression_second_db:.1f} dB cancelled={it.cancelled}")
    _write(args.out, io.cancellation_text(cr, cfg.hash()))
    return 0


def cmd_sweep(args, cfg):
    out = Path(args.outdir)
    res = order_resolved_sweep(cfg.epsilons, cfg, cfg.orders)
    h = res.config_hash
    cap = cfg.s_max * (max(cfg.orders) + 1)
    for row in res.rows:
        tag_e = _eps_tag(row.epsilon)
        _write(out / f"catalog_{tag_e}.txt", io.catalog_text(row.catalog, h))
        for tag in res.tags:
            _write(out / f"match_{tag}_{tag_e}.txt",
                   io.match_report_text(row.reports[tag], h, epsilon=io.fmt(row.epsilon)))
    for tag in res.tags:
        _write(out / f"stacked_{tag}.txt", io.stacked_text(res.stacked(tag), tag, cap, h))
    lines = [io.header("sweep-summary", h, epsilons=" ".join(io.fmt(e) for e in cfg.epsilons),
                       orders=" ".join(map(str, res.orders)))]
    for row in res.rows:
        for tag in res.tags:
            rep = row.reports[tag]
            lines.append(f"{io.fmt(row.epsilon)} {tag} peaks={len(rep.matches)} "
                         f"unidentified={len(rep.unidentified)} "
                         f"ghost_candidates={len(rep.ghost_candidates)}\n")
    _write(out / "summary.txt", "".join(lines))
    bad = res.unidentified()
    print(f"{len(res.rows)} energies, {len(bad)} unidentified order-resolved peaks")
    return 0


def cmd_synth(args, cfg):
    out = Path(args.outdir)
    basis = AngularBasis((0,))
    harness = ghost_harness(cfg.synth_actions, cfg.synth_gap, basis, cfg.epsilons[0],
                            seed=cfg.seed)
    run = run_ghost_harness(harness, cfg.w_grid(), cfg.gamma, cfg.mu.get(0, 0.0),
                            window=cfg.window, pad_factor=cfg.pad_factor,
                            threshold=cfg.threshold, suppression_db=cfg.suppression_db)
    h = cfg.hash()
    cap = 2.0 * sum(cfg.synth_actions) + 1.0
    _write(out / "synth_terms.txt", io.terms_text(harness.slr, h))
    for tag, spec in run.spectra.items():
        _write(out / f"synth_{tag}.txt", io.recurrence_text(spec, h, max_action=cap))
    _write(out / "synth_match.txt", io.match_report_text(run.report, h))
    _write(out / "synth_cancel.txt", io.cancellation_text(run.cancellation, h,
                                                          gap=io.fmt(cfg.synth_gap)))
    for it in run.cancellation.items:
        print(f"ghost S={it.action:.6f}: {it.suppression_first_db:.1f} dB / "
              f"{it.suppression_second_db:.1f} dB cancelled={it.cancelled}")
    return 0


def cmd_check(args, cfg):
    eps = _eps(args, cfg)
    S = _slr(args, cfg, eps)
    rep = check_convergence(core_matrix(cfg), S, sigma_config(cfg))
    verdict = ("series converges everywhere" if rep.all_converged else
               f"series diverges at {int(np.sum(~rep.converged))} points")
    print(f"worst margin {rep.worst_margin:.6g} at w = {rep.worst_w:.6g}; {verdict}")
    _write(args.out, io.convergence_text(rep, cfg.hash()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rydghost", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, out=None):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (repeatable)")
        p.add_argument("--epsilon", type=float, help="scaled energy (default: first configured)")
        if out:
            p.add_argument("--out", default=out)
        p.set_defaults(func=func)
        return p

    add("orbits", cmd_orbits, "closed-orbit catalog at one scaled energy", "catalog.txt")
    add("scan", cmd_scan, "saddle-node bifurcations over an energy range", "bifurcations.txt")
    p = add("slr", cmd_slr, "build and export the long-range S-matrix", "slr_terms.txt")
    p.add_argument("--catalog")
    p.add_argument("--slr", help="existing S_LR file (terms or sampled)")
    p.add_argument("--export-sampled", metavar="PATH", help="also write S_LR sampled on the w grid")
    p = add("sigma", cmd_sigma, "photoabsorption cross section", "sigma.txt")
    p.add_argument("--kind", choices=SIGMA_KINDS)
    p.add_argument("--order", type=int, help="order n (order, order-sum) or N (scl-series)")
    p.add_argument("--catalog")
    p.add_argument("--slr")
    p = add("ft", cmd_ft, "recurrence spectrum of a sigma file", "recurrence.txt")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--max-action", type=float, default=None)
    p = add("match", cmd_match, "classify recurrence peaks against a catalog", "match.txt")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--catalog")
    p.add_argument("--order", type=int, help="expansion order of the source spectrum")
    p = add("cancel", cmd_cancel, "ghost/combination cancellation report", "cancel.txt")
    p.add_argument("--first", required=True)
    p.add_argument("--second", required=True)
    p.add_argument("--total", required=True)
    p.add_argument("--catalog")
    p = add("sweep", cmd_sweep, "order-resolved spectra over the configured energies")
    p.add_argument("--outdir", default="sweep_out")
    p = add("synth", cmd_synth, "planted ghost/combination cancellation harness")
    p.add_argument("--outdir", default="synth_out")
    p = add("check", cmd_check, "convergence margins of the semiclassical series", "margins.txt")
    p.add_argument("--catalog")
    p.add_argument("--slr")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        return args.func(args, cfg)
    except (ConfigError, io.FormatError, SweepError, IntegrationError, ValueError,
            OSError) as err:
        print(f"error ({args.command}): {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
