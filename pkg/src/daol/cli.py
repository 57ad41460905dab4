"""Command-line entry point: ``daol {simulate,privacy,attack,selftest}``.

Every command reads an optional ``key=value`` config file, applies
``key=value`` overrides from the command line, writes its outputs plus a
``manifest.cfg`` into ``--out`` and exits 0 only if all its checks passed.
Failed checks are reported as ``FAIL <check> <detail>`` lines on stdout.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import CRITERIA, run_all
from .attack import (
    ReconstructionRefused,
    ball_projection_collision,
    construct_ambiguous_inputs,
    graph_from_weights,
    observe,
    reconstruct_subgradients,
    simulate_outputs,
)
from .config import (
    ConfigError,
    build_data,
    build_domain,
    build_graph,
    build_mixing,
    get_bool,
    get_float,
    get_int,
    load_config,
    parse_nodes,
    write_manifest,
)
from .graph import mixing_constants, random_generic_weights
from .losses import LossSpec
from .privacy import SystemSpec, finite_horizon_invertibility, is_privacy_preserving
from .simulator import (
    SimConfig,
    disagreement_check,
    hindsight_optimum,
    regret,
    regret_bound_rhs,
    run_distributed,
    run_sequential,
    test_error_curve,
)

SIMULATE_HELP = """\
keys: topology (ring:16, grid:3x3, hypercube:4, clique:3, star:5, fig2a, fig2b,
  file:<edge list>; or a bare kind plus m=<nodes>), scheme (uniform_maxdeg,
  metropolis, random, file), lambda, T, seed, domain (all_space, ball:<r>,
  box:<lo>:<hi>), eta (auto or sqrt for 1/(2 sqrt t)), reference_node, dim,
  flip_rate, n_test, dataset / test_dataset (sparse label idx:val files),
  normalize, sequential (0/1), F (diameter override), dump_trace (0/1).

outputs:
  regret.csv     t,instantaneous,cumulative,bound_rhs   (node reference_node)
  testerror.csv  learner,examples_seen,rounds,error_rate (learner is
                 distributed or sequential)
  trace.csv      t,node,coord,eta,w,g,r_next   (only with dump_trace=1)
  summary.txt    final regret, bound, invariant ratios, optimum certificate
  manifest.cfg   resolved configuration; pass it back to rerun
"""

PRIVACY_HELP = """\
keys: topology, seed, numerical (auto, 0 or 1; auto runs the rank oracle when m <= 16).

outputs:
  privacy_report.csv  M,N_set,cond_i,cond_ii,structural,numerical,kappa,verdict
  summary.txt         verdict, connectivity, sufficient-condition flag, per-query table
  manifest.cfg
"""

ATTACK_HELP = """\
keys: topology, scheme, observer, targets (comma list or all), withhold_initial,
  plus the simulation keys of 'simulate'.

outputs on success:
  attack_report.csv  t,node,coord,true_g,reconstructed_g,abs_error
outputs on refusal:
  witness.csv        round,node,input,value_a,value_b
                     (input is g for scaled subgradients, r for projection residuals)
  observations.csv   round,node,observed_a,observed_b
always:
  summary.txt, manifest.cfg
"""


class Checks:
    """Collects named pass/fail results and prints machine-parsable failures."""

    def __init__(self):
        self.failed = []

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        if not ok:
            self.failed.append(name)
            print(f"FAIL {name} {detail}".rstrip())
        return ok

    @property
    def status(self) -> int:
        return 1 if self.failed else 0


def _fmt(x) -> str:
    return repr(float(x))


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _loss_and_eta(cfg, domain):
    lam = get_float(cfg, "lambda")
    loss = LossSpec.for_domain(lam, domain)
    rule = cfg.get("eta", "auto")
    if rule == "sqrt":
        eta = lambda t: 1.0 / (2.0 * math.sqrt(t))
    elif rule == "auto":
        eta = None
        if lam == 0:
            eta = lambda t: 1.0 / (2.0 * math.sqrt(t))
    else:
        raise ConfigError(f"eta={rule!r}; use auto or sqrt")
    return loss, eta


def _simulation(cfg):
    g = build_graph(cfg)
    mixing = build_mixing(cfg, g)
    T = get_int(cfg, "T")
    train, test = build_data(cfg, T * g.m)
    domain = build_domain(cfg, train.dim)
    loss, eta = _loss_and_eta(cfg, domain)
    sim = SimConfig(mixing, loss, domain, T, train, seed=get_int(cfg, "seed"),
                    reference_node=get_int(cfg, "reference_node") if "reference_node" in cfg else 0, eta=eta)
    return g, sim, test


def cmd_simulate(cfg, out: Path) -> int:
    checks = Checks()
    g, sim, test = _simulation(cfg)
    trace = run_distributed(sim)
    j = sim.reference_node
    used = trace.assignment.ravel()
    opt = hindsight_optimum(sim.loss, sim.domain, sim.data, indices=used)
    F = get_float(cfg, "F") if "F" in cfg else sim.domain.diameter
    lines = [f"nodes: {g.m}", f"rounds: {trace.T}", f"domain: {sim.domain}", f"lambda: {sim.loss.lam}",
             f"gradient bound L: {sim.loss.grad_bound}"]
    bound = None
    rows_bound = [""] * trace.T
    mc = mixing_constants(sim.mixing)
    lines.append(f"mixing rate beta: {mc.beta!r}")
    if sim.loss.lam > 0 or math.isfinite(F):
        bound = regret_bound_rhs(sim.loss.lam, sim.loss.grad_bound, g.m, F, mc.beta, np.arange(1, trace.T + 1))
        rows_bound = [_fmt(b) for b in bound]
    report = disagreement_check(trace, sim.loss.grad_bound, mc.beta)
    lines.append(f"invariant ratios: residual {report.residual_ratio:.6g} difference1 "
                 f"{report.disagreement_ratio:.6g} difference2 {report.disagreement_hat_ratio:.6g}")
    checks.check("invariants", report.passed, str(report.violations[:1]))
    series = regret(trace, opt.w, j, optimum_value=opt.lower_bound)
    rows = [(t + 1, _fmt(series.instantaneous[t]), _fmt(series.cumulative[t]), rows_bound[t]) for t in range(trace.T)]
    _write(out / "regret.csv", _csv(["t", "instantaneous", "cumulative", "bound_rhs"], rows))
    lines += [f"hindsight optimum: value {opt.value!r} certified lower bound {opt.lower_bound!r}",
              f"regret at node {j} (against the lower bound): {series.final!r}"]
    if bound is not None:
        lines.append(f"regret bound: {float(bound[-1])!r}")
        checks.check("regret_bound", series.final <= bound[-1], f"{series.final!r} > {float(bound[-1])!r}")
    else:
        lines.append("regret bound: not available (needs lambda > 0 or a bounded domain)")

    curve_rows = []
    if test is not None:
        curves = {"distributed": test_error_curve(trace, test, node=j)}
        if get_bool(cfg, "sequential"):
            seq = run_sequential(sim.loss, sim.domain, sim.data, T=trace.T * g.m, eta=sim.eta)
            curves["sequential"] = test_error_curve(seq, test)
        for name, curve in curves.items():
            curve_rows += [(name, e, r, _fmt(err)) for e, r, err in curve]
            lines.append(f"final test error ({name}): {curve[-1][2]:.4f}")
    _write(out / "testerror.csv", _csv(["learner", "examples_seen", "rounds", "error_rate"], curve_rows))
    if get_bool(cfg, "dump_trace"):
        _write(out / "trace.csv", _trace_csv(trace))
    _write(out / "summary.txt", "\n".join(lines) + "\n")
    return checks.status


def _trace_csv(trace) -> str:
    """Round t rows hold w_t, the subgradient g_t and the residual r_{t+1}."""
    rows = []
    for t in range(trace.T):
        for i in range(trace.m):
            for c in range(trace.W.shape[2]):
                rows.append((t + 1, i, c, _fmt(trace.eta[t]), _fmt(trace.W[t, i, c]), _fmt(trace.G[t, i, c]),
                             _fmt(trace.R[t + 1, i, c])))
    return _csv(["t", "node", "coord", "eta", "w", "g", "r_next"], rows)


def cmd_privacy(cfg, out: Path) -> int:
    checks = Checks()
    g = build_graph(cfg)
    if not g.is_strongly_connected():
        raise ConfigError("the communication graph is not connected")
    numerical = cfg.get("numerical", "auto")
    numerical = g.m <= 16 if numerical == "auto" else get_bool(cfg, "numerical")
    report = is_privacy_preserving(g, numerical=numerical, rng=get_int(cfg, "seed"))
    _write(out / "privacy_report.csv", report.to_csv())
    _write(out / "summary.txt", report.to_text())
    checks.check("sufficient_condition", not report.sufficient_condition_contradicted,
                 f"kappa={report.kappa} max_in_degree={report.max_in_degree} exposed={report.exposed_observers}")
    for q in report.queries:
        if q.agrees is False:
            checks.check("oracle_agreement", False, f"M={q.M} N={list(q.targets)} numerical={q.numerical}")
    return checks.status


def _witness_files(out: Path, spec: SystemSpec, seed: int) -> tuple[str, bool]:
    verdict = finite_horizon_invertibility(spec)
    if verdict.verdict == "indeterminate":
        spec = SystemSpec(random_generic_weights(graph_from_weights(spec.mixing.A), seed), spec.M,
                          spec.targets, spec.projection_inputs)
        verdict = finite_horizon_invertibility(spec)
    if verdict.verdict != "ambiguous":
        return f"rank oracle verdict: {verdict.verdict}; no witness pair", False
    pair = construct_ambiguous_inputs(spec, rng=seed, verdict=verdict)
    rows = []
    for k in range(verdict.horizon):
        for node in range(spec.m):
            rows.append((k + 1, node, "g", _fmt(pair.inputs_a[k, node]), _fmt(pair.inputs_b[k, node])))
            if pair.residuals_a is not None:
                rows.append((k + 1, node, "r", _fmt(pair.residuals_a[k, node]), _fmt(pair.residuals_b[k, node])))
    _write(out / "witness.csv", _csv(["round", "node", "input", "value_a", "value_b"], rows))
    ya = simulate_outputs(spec, pair.inputs_a, pair.residuals_a)
    yb = simulate_outputs(spec, pair.inputs_b, pair.residuals_b)
    rows = [(k + 2, node, _fmt(ya[k, a]), _fmt(yb[k, a]))
            for k in range(verdict.horizon) for a, node in enumerate(spec.observed)]
    _write(out / "observations.csv", _csv(["round", "node", "observed_a", "observed_b"], rows))
    ok = pair.observation_gap <= 1e-10 and pair.target_gap >= 0.1
    return (f"witness pair over {verdict.horizon} rounds: observation gap {pair.observation_gap:.3g}, "
            f"target input gap {pair.target_gap:.3g}"), ok


def cmd_attack(cfg, out: Path) -> int:
    checks = Checks()
    g, sim, _ = _simulation(cfg)
    M = get_int(cfg, "observer")
    if not 0 <= M < g.m:
        raise ConfigError(f"observer {M} outside 0..{g.m - 1}")
    if cfg.get("targets", "all").strip() != "all" and M in parse_nodes(cfg["targets"], g.m):
        raise ConfigError(f"observer {M} cannot be one of its own targets")
    targets = parse_nodes(cfg.get("targets", "all"), g.m, exclude=M)
    trace = run_distributed(sim)
    log = observe(trace, M, withhold_initial=get_bool(cfg, "withhold_initial"))
    lines = [f"observer: {M}", f"targets: {targets}", f"observed nodes: {list(log.observed)}",
             f"domain: {sim.domain}", f"rounds: {trace.T}"]
    seed = get_int(cfg, "seed")
    try:
        result = reconstruct_subgradients(log, targets)
    except ReconstructionRefused as exc:
        lines.append(f"outcome: refused: {exc}")
        if exc.condition == "projection":
            lines.append("governing result: projection makes the subgradient inputs unidentifiable")
            spec = SystemSpec(sim.mixing, M, frozenset(targets), projection_inputs=True)
            if sim.domain.kind == "l2_ball":
                try:
                    demo = ball_projection_collision(sim)
                    lines.append(f"collision: round {demo.round} node {demo.node}: two different subgradients "
                                 f"give parameters differing by at most {demo.max_param_gap:.3g}")
                except RuntimeError as err:
                    lines.append(f"collision: {err}")
        else:
            lines.append(f"governing result: partial-reconstruction condition {exc.condition} failed "
                         f"at nodes {list(exc.nodes)}")
            spec = SystemSpec(sim.mixing, M, frozenset(targets))
        text, ok = _witness_files(out, spec, seed)
        lines.append(text)
        checks.check("witness", ok, text)
    else:
        full = set(targets) == set(range(g.m)) - {M}
        lines.append("outcome: reconstructed")
        lines.append("governing result: " + ("full-reconstruction condition holds" if full
                                             else "partial-reconstruction conditions i and ii hold"))
        for t, msg in sorted(result.status.items()):
            lines.append(f"round {t}: {msg}")
        err = result.max_error(trace, relative=True)
        lines.append(f"max reconstruction error (relative to max(1, |g|)): {err:.3g}")
        _write(out / "attack_report.csv", result.to_csv(trace))
        checks.check("reconstruction_error", err <= 1e-9, f"{err:.3g} > 1e-9")
    _write(out / "summary.txt", "\n".join(lines) + "\n")
    return checks.status


def cmd_selftest(args) -> int:
    only = None
    if args.only:
        only = {int(tok) for tok in args.only.split(",")}
    results = run_all(only)
    for r in results:
        print(r.line(), flush=True)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return 0 if passed == len(results) else 1


COMMANDS = {"simulate": (cmd_simulate, SIMULATE_HELP), "privacy": (cmd_privacy, PRIVACY_HELP),
            "attack": (cmd_attack, ATTACK_HELP)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="daol", description="Distributed online learning: regret simulation, privacy analysis, reconstruction attack.")
    parser.add_argument("--version", action="version", version=f"daol {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {name} command", epilog=help_text,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("config", nargs="?", help="key=value config file")
        p.add_argument("overrides", nargs="*", metavar="key=value", help="overrides applied after the file")
        p.add_argument("--out", default=f"out_{name}", help="output directory (default: %(default)s)")
    p = sub.add_parser("selftest", help="run the acceptance criteria")
    p.add_argument("--only", help="comma list of criterion numbers (1-%d)" % len(CRITERIA))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "selftest":
        return cmd_selftest(args)
    config, overrides = args.config, list(args.overrides)
    if config is not None and "=" in config:
        config, overrides = None, [config, *overrides]
    fn, _ = COMMANDS[args.command]
    try:
        cfg = load_config(config, overrides, args.command)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        status = fn(cfg, out)
        write_manifest(out / "manifest.cfg", cfg, args.command)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"daol {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return status


if __name__ == "__main__":
    sys.exit(main())
