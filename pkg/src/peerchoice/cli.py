"""Command-line entry point: ``peerchoice <command> [options]``.

Commands
--------
equilibrium   generator summary, invariant distribution, assumption report
simulate      event log (dataset 1) and/or snapshots every delta (dataset 2)
identify      recover network, selection kernel and rules from a data file
roundtrip     simulate, identify and compare with the scenario's ground truth
example2      two-agent coordination probabilities under three attention regimes
validate      schema and assumption checks for a scenario

Output files go to ``--out`` (default ``$PEERCHOICE_OUT`` or ``./peerchoice_out``).
Every file starts with provenance lines naming the tool version, scenario
hash and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend_name
from .equilibrium import (
    build_rate_matrix,
    coordination_analysis,
    invariant_distribution,
    transition_kernel,
    two_agent_closed_form,
    write_distribution_csv,
    write_matrix_csv,
)
from .errors import ExitCode, PeerChoiceError, RatesRequiredError, ValidationError
from .identification import (
    IdentificationOptions,
    bootstrap_derived_se,
    ThresholdPolicy,
    compare_to_truth,
    identify_from_ccps,
    rates_and_ccps_from_generator,
    recover_generator,
)
from .model import LogitRule, ccp_table, validate_assumptions
from .scenarios import Scenario, load_scenario
from .simulator import (
    emit_dataset1,
    emit_dataset2,
    estimate_ccp_dataset1,
    estimate_transition_matrix,
    occupation_frequencies,
    read_events_csv,
    read_snapshots_csv,
    simulate,
    write_events_csv,
    write_snapshots_csv,
)

OUT_ENV = "PEERCHOICE_OUT"
DEFAULT_SCENARIO = "eight_agent"
DEFAULT_EVENTS = 1_000_000
DEFAULT_TOLERANCES = {
    "selection_max_abs": 0.02,
    "rule_empty_max_abs": 0.05,
    "rule_single_max_abs": 0.05,
    "logit_alpha_max_abs": 0.05,
    "logit_beta_max_abs": 0.05,
    "rule_grid_max_abs": 0.05,
    "rates_max_rel": 0.01,
}


class ToleranceFailure(PeerChoiceError):
    exit_code = ExitCode.TOLERANCE


# ---------------------------------------------------------------------------
# helpers

def provenance_lines(scn: Scenario | None, seed, command: str) -> list[str]:
    lines = [f"peerchoice {__version__} command={command}"]
    if scn is not None:
        lines.append(f"scenario={scn.name} scenario_hash={scn.hash}")
    lines.append(f"seed={'' if seed is None else seed}")
    return lines


def provenance_dict(scn: Scenario | None, seed, command: str) -> dict:
    return {"tool": "peerchoice", "version": __version__, "command": command,
            "scenario": None if scn is None else scn.name,
            "scenario_hash": None if scn is None else scn.hash, "seed": seed,
            "backend": backend_name()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: Path, payload: dict, scn, seed, command) -> None:
    data = {"provenance": provenance_dict(scn, seed, command)}
    data.update(payload)
    path.write_text(json.dumps(_jsonable(data), indent=2) + "\n")


def out_dir(args) -> Path:
    root = Path(args.out or os.environ.get(OUT_ENV) or "peerchoice_out")
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {root}: {exc.strerror}") from exc
    if not os.access(root, os.W_OK):
        raise OSError(f"output directory {root} is not writable")
    return root


def resolve_horizon(args, scn: Scenario) -> float:
    """``--horizon`` wins; else the scenario's horizon; else its event budget / sum(rates)."""
    if args.horizon is not None:
        if not args.horizon > 0:
            raise ValidationError("--horizon must be positive")
        return float(args.horizon)
    sim = scn.simulation
    if "horizon" in sim:
        return float(sim["horizon"])
    events = sim.get("events", DEFAULT_EVENTS)
    return float(events / scn.model.rates.sum())


def resolve_delta(args, scn: Scenario, required: bool) -> float | None:
    delta = args.delta if args.delta is not None else scn.simulation.get("delta")
    if delta is None:
        if required:
            raise ValidationError("dataset 2 needs --delta (or simulation.delta in the scenario)")
        return None
    if not delta > 0:
        raise ValidationError("--delta must be positive")
    return float(delta)


def resolve_burn_in(args, scn: Scenario) -> float:
    b = args.burn_in if args.burn_in is not None else scn.simulation.get("burn_in", 0.1)
    if not 0.0 <= b < 1.0:
        raise ValidationError("--burn-in must lie in [0, 1)")
    return float(b)


def parse_rates(text: str | None, scn: Scenario) -> np.ndarray | None:
    if text is None:
        return None
    if text == "scenario":
        return scn.model.rates.copy()
    p = Path(text)
    if p.exists():
        vals = json.loads(p.read_text())
        vals = vals.get("rates", vals) if isinstance(vals, dict) else vals
    else:
        vals = [float(x) for x in text.split(",") if x.strip()]
    rates = np.asarray(vals, dtype=float)
    if rates.shape != (scn.model.num_agents,) or np.any(rates <= 0):
        raise ValidationError(f"--rates needs {scn.model.num_agents} positive values")
    return rates


def parse_tolerances(items) -> dict:
    tol = dict(DEFAULT_TOLERANCES)
    for item in items or []:
        if "=" in item:
            k, v = item.split("=", 1)
            if k not in tol:
                raise ValidationError(f"unknown tolerance {k!r}; choose from {sorted(tol)}")
            tol[k] = float(v)
        else:
            x = float(item)
            tol = {k: x for k in tol}
    return tol


def identification_options(args) -> IdentificationOptions:
    policy = ThresholdPolicy(multiplier=args.threshold_multiplier, floor=args.threshold_floor)
    return IdentificationOptions(policy=policy, project=args.project_feasible,
                                 pool_alternatives=args.pool_alternatives, rule=args.rule)


def _rule_kind(args, scn):
    if args.rule != "auto":
        return args.rule
    return "logit" if isinstance(scn.model.rule, LogitRule) else "recursive"


def _say(args, msg):
    if not args.quiet:
        print(msg)


# ---------------------------------------------------------------------------
# commands

def cmd_equilibrium(args) -> int:
    scn = load_scenario(args.scenario)
    m = scn.model
    out = out_dir(args)
    prov = provenance_lines(scn, args.seed, "equilibrium")
    W = build_rate_matrix(m)
    report = validate_assumptions(m)
    warnings = []
    if not report.passed("A1_interior_selection"):
        warnings.append("selection probabilities on the boundary: uniqueness of the invariant "
                        "distribution relies on the choice rule alone")
    inv = invariant_distribution(W)
    write_distribution_csv(out / "mu.csv", inv.mu, m.num_agents, m.num_alternatives, prov)
    summary = {
        "num_states": W.num_states,
        "nonzero_rates": int(W.matrix.nnz - W.num_states),
        "max_exit_rate": float(-W.matrix.diagonal().min()),
        "residual_inf": inv.residual,
        "rank_gap": inv.rank_gap,
        "min_mu": inv.min_mass,
        "full_support": bool(inv.min_mass > 0),
        "assumptions": report.to_dict(),
        "warnings": warnings,
    }
    if args.write_generator:
        write_matrix_csv(out / "generator.csv", W.matrix, m.num_agents, m.num_alternatives, prov)
    delta = args.delta
    if delta is not None:
        P = transition_kernel(W, delta)
        write_matrix_csv(out / "transition.csv", P, m.num_agents, m.num_alternatives, prov)
        summary["delta"] = delta
    two = _two_agent_summary(m, inv.mu)
    if two:
        summary.update(two)
    write_json(out / "equilibrium.json", summary, scn, args.seed, "equilibrium")
    _say(args, f"{scn.name}: {W.num_states} configurations, min mu {inv.min_mass:.6g}, "
               f"residual {inv.residual:.3g}")
    for w in warnings:
        _say(args, f"warning: {w}")
    return ExitCode.OK


def _two_agent_summary(m, mu) -> dict | None:
    """Closed form and coordination check for symmetric binary two-agent models."""
    if m.num_agents != 2 or m.num_alternatives != 2 or m.num_types != 1:
        return None
    if not np.allclose(m.rates, m.rates[0]):
        return None
    tab = ccp_table(m)
    # agent 0: configurations 00, 01, 10, 11 = indices 0..3
    p100, p101 = tab.probs[0, 0, 1], tab.probs[0, 1, 1]
    p010, p011 = tab.probs[0, 2, 0], tab.probs[0, 3, 0]
    closed = two_agent_closed_form(p100, p101, p010, p011)
    out = {"closed_form_mu": closed.tolist(),
           "closed_form_max_abs_diff": float(np.abs(closed - mu).max()),
           "coordination_probability": float(mu[0] + mu[3])}
    try:
        r = m.rule
        a, b, c = r.probs(0, 0, (0, 1))[1], r.probs(0, 0, (0, 0))[1], r.probs(0, 0, (1, 0))[1]
        if all(np.allclose(r.probs(0, 1, k), r.probs(0, 0, k)) for k in [(0, 1), (0, 0), (1, 0)]):
            co = coordination_analysis(a, b, c)
            out["coordination_analysis"] = {"same": co.same, "diff": co.diff, "std": co.std,
                                            "ordering": co.ordering()}
    except PeerChoiceError:
        pass
    return out


def _simulate_scenario(scn, args, seed):
    horizon = resolve_horizon(args, scn)
    t0 = time.perf_counter()
    events = simulate(scn.model, horizon, seed=seed, record_active=args.debug_active_sets)
    elapsed = time.perf_counter() - t0
    return events.discard_burn_in(resolve_burn_in(args, scn)), elapsed


def cmd_simulate(args) -> int:
    scn = load_scenario(args.scenario)
    m = scn.model
    out = out_dir(args)
    prov = provenance_lines(scn, args.seed, "simulate")
    want = {1, 2} if args.dataset is None else {args.dataset}
    delta = resolve_delta(args, scn, required=args.dataset == 2)
    if delta is None:
        want.discard(2)
    events, elapsed = _simulate_scenario(scn, args, args.seed)
    lam_hat = np.bincount(events.agents, minlength=m.num_agents) / events.duration
    summary = {"events": len(events), "horizon": events.horizon, "start": events.start,
               "expected_events": float(m.rates.sum() * events.duration),
               "rates_hat": lam_hat, "rates": m.rates, "seconds": elapsed}
    if 1 in want:
        log = events if args.debug_active_sets else emit_dataset1(events)
        write_events_csv(out / "events.csv", log, prov, delta)
        summary["events_file"] = "events.csv"
    if 2 in want:
        series = emit_dataset2(events, delta)
        write_snapshots_csv(out / "snapshots.csv", series, events.horizon, args.seed, prov)
        summary["snapshots"] = len(series)
        summary["snapshots_file"] = "snapshots.csv"
    if m.num_states <= 65_536:
        mu = invariant_distribution(build_rate_matrix(m)).mu
        summary["tv_to_mu"] = float(0.5 * np.abs(occupation_frequencies(events) - mu).sum())
    write_json(out / "simulate.json", summary, scn, args.seed, "simulate")
    _say(args, f"{len(events)} events on [{events.start:.6g}, {events.horizon:.6g}] "
               f"(expected {summary['expected_events']:.0f})")
    _say(args, "lambda_hat " + " ".join(f"{x:.4f}" for x in lam_hat))
    if "tv_to_mu" in summary:
        _say(args, f"total variation to mu {summary['tv_to_mu']:.4g}")
    return ExitCode.OK


def _identify_dataset1(events, scn, args):
    table, lam_hat = estimate_ccp_dataset1(events)
    opts = identification_options(args)
    opts.rule = _rule_kind(args, scn)
    rep = identify_from_ccps(table, scn.model.types, scn.model.num_types, opts, rates=lam_hat, truth=scn.model)
    rep.notes["events"] = len(events)
    return rep


def _identify_dataset2(series, scn, args):
    rates = parse_rates(args.rates, scn)
    if rates is None:
        raise RatesRequiredError("clock rates (lambda) required on the dataset 2 path: pass --rates "
                                 "a1,a2,... or a JSON file, or --rates scenario")
    est = estimate_transition_matrix(series)
    m = scn.model
    gen = recover_generator(est.matrix, series.delta, m.num_agents, m.num_alternatives)
    table = rates_and_ccps_from_generator(gen.generator, rates, m.num_agents, m.num_alternatives)
    if args.bootstrap > 0:
        table.se = bootstrap_derived_se(est.matrix, est.row_counts, series.delta, rates, m.num_agents,
                                        m.num_alternatives, args.bootstrap, args.seed)
    opts = identification_options(args)
    opts.rule = _rule_kind(args, scn)
    rep = identify_from_ccps(table, m.types, m.num_types, opts, rates=rates, truth=m)
    rep.generator = gen
    rep.notes["snapshots"] = len(series)
    rep.notes["out_of_range_cells"] = len(table.notes.get("out_of_range", []))
    rep.errors = compare_to_truth(rep, m)  # again, now with the generator attached
    return rep


def cmd_identify(args) -> int:
    scn = load_scenario(args.scenario)
    out = out_dir(args)
    m = scn.model
    if args.exact:
        opts = identification_options(args)
        opts.rule = _rule_kind(args, scn)
        rep = identify_from_ccps(ccp_table(m), m.types, m.num_types, opts, rates=m.rates, truth=m)
        source = "exact"
    elif (args.dataset or 1) == 1:
        path = Path(args.events or out / "events.csv")
        rep = _identify_dataset1(read_events_csv(path), scn, args)
        source = str(path)
    else:
        path = Path(args.snapshots or out / "snapshots.csv")
        series = read_snapshots_csv(path)
        if args.delta is not None and not np.isclose(args.delta, series.delta):
            raise ValidationError(f"--delta {args.delta} disagrees with the file's delta {series.delta}")
        rep = _identify_dataset2(series, scn, args)
        source = str(path)
    payload = rep.to_dict()
    payload["source"] = source
    write_json(out / "identify.json", payload, scn, args.seed, "identify")
    _say(args, f"network recovered: {payload['errors'].get('network_exact')}")
    for k, v in rep.errors.items():
        if k.endswith(("_abs", "_rel")):
            _say(args, f"  {k}: {v:.3g}")
    return ExitCode.OK


def _roundtrip_once(scenario_ref, args, seed, rep_dir):
    scn = load_scenario(scenario_ref)
    events, elapsed = _simulate_scenario(scn, args, seed)
    if (args.dataset or 1) == 1:
        rep = _identify_dataset1(events, scn, args)
    else:
        delta = resolve_delta(args, scn, required=True)
        rep = _identify_dataset2(emit_dataset2(events, delta), scn, args)
    errors = rep.errors
    if rep.rates is not None and "rates_max_rel" not in errors:
        errors["rates_max_rel"] = float(np.abs(rep.rates / scn.model.rates - 1).max())
    if rep_dir is not None:
        rep_dir.mkdir(parents=True, exist_ok=True)
        write_json(rep_dir / "identify.json", rep.to_dict(), scn, seed, "roundtrip")
    return {"seed": seed, "events": len(events), "simulate_seconds": elapsed, "errors": errors}


def _check(errors: dict, tol: dict) -> dict:
    failed = {}
    if not errors.get("network_exact", False):
        failed["network_exact"] = False
    for k, limit in tol.items():
        if k in errors and not errors[k] <= limit:
            failed[k] = errors[k]
    return failed


def cmd_roundtrip(args) -> int:
    scn = load_scenario(args.scenario)
    out = out_dir(args)
    tol = parse_tolerances(args.tolerance)
    n = args.replications
    seeds = [args.seed + i for i in range(n)]
    dirs = [out / f"rep_{i:03d}" for i in range(n)] if n > 1 else [out]
    if args.workers > 1 and n > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            runs = list(pool.map(_roundtrip_once, [args.scenario] * n, [args] * n, seeds, dirs))
    else:
        runs = [_roundtrip_once(args.scenario, args, s, d) for s, d in zip(seeds, dirs)]
    for r in runs:
        r["failed"] = _check(r["errors"], tol)
        r["passed"] = not r["failed"]
    metrics = sorted({k for r in runs for k, v in r["errors"].items() if isinstance(v, float)})
    agg = {k: {"mean": float(np.mean([r["errors"][k] for r in runs if k in r["errors"]])),
               "max": float(np.max([r["errors"][k] for r in runs if k in r["errors"]]))} for k in metrics}
    agg["network_exact_fraction"] = float(np.mean([r["errors"].get("network_exact", False) for r in runs]))
    passed = all(r["passed"] for r in runs)
    write_json(out / "roundtrip.json", {"tolerances": tol, "replications": runs, "aggregate": agg,
                                        "passed": passed}, scn, args.seed, "roundtrip")
    for r in runs:
        status = "PASS" if r["passed"] else "FAIL " + ", ".join(sorted(r["failed"]))
        _say(args, f"seed {r['seed']}: {r['events']} events, {status}")
    for k, v in agg.items():
        if isinstance(v, dict):
            _say(args, f"  {k}: mean {v['mean']:.4g} max {v['max']:.4g} (tol {tol.get(k, float('nan')):g})")
    if not passed:
        raise ToleranceFailure("round trip exceeded tolerances")
    return ExitCode.OK


def cmd_example2(args) -> int:
    a, b, c = args.r_peer1, args.r_empty, args.r_peer0
    for x in (a, b, c):
        if not 0.0 < x < 1.0:
            raise ValidationError("rule values must lie strictly between 0 and 1")
    co = coordination_analysis(a, b, c)
    checks = {}
    if a > b > c:
        checks["positive_effect_std_gt_same_gt_diff"] = bool(co.std > co.same > co.diff)
    if a < b < c:
        checks["negative_effect_same_gt_diff_gt_std"] = bool(co.same > co.diff > co.std)
    if b == 0.5 and a != c:
        checks["half_empty_same_gt_diff"] = bool(co.same > co.diff)
    payload = {"r_peer1": a, "r_empty": b, "r_peer0": c,
               "same": co.same, "diff": co.diff, "std": co.std, "ordering": co.ordering(), "checks": checks}
    if args.out or os.environ.get(OUT_ENV):
        write_json(out_dir(args) / "example2.json", payload, None, None, "example2")
    _say(args, f"Pr_same={co.same:.6f} Pr_diff={co.diff:.6f} Pr_std={co.std:.6f}  ({co.ordering()})")
    for k, ok in checks.items():
        _say(args, f"  {k}: {'confirmed' if ok else 'VIOLATED'}")
    return ExitCode.OK if all(checks.values()) else ExitCode.TOLERANCE


def cmd_validate(args) -> int:
    scn = load_scenario(args.scenario)
    rep = validate_assumptions(scn.model)
    payload = {"schema": "ok", "assumptions": rep.to_dict(), "all_passed": rep.all_passed}
    if args.out or os.environ.get(OUT_ENV):
        write_json(out_dir(args) / "validate.json", payload, scn, args.seed, "validate")
    _say(args, f"{scn.name} (hash {scn.hash}): schema ok")
    for name, res in rep.checks.items():
        _say(args, f"  {name}: {'ok' if res['passed'] else 'FAILS'}")
    if args.strict and not rep.all_passed:
        return ExitCode.VALIDATION
    return ExitCode.OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default=DEFAULT_SCENARIO,
                        help="scenario JSON path or builtin name (default: %(default)s)")
    common.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./peerchoice_out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--quiet", action="store_true")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--horizon", type=float, default=None, help="time horizon T")
    sim.add_argument("--delta", type=float, default=None, help="snapshot spacing")
    sim.add_argument("--burn-in", type=float, default=None, help="fraction of [0, T] discarded")
    sim.add_argument("--dataset", type=int, choices=(1, 2), default=None)
    sim.add_argument("--debug-active-sets", action="store_true", help="record drawn active sets")

    ident = argparse.ArgumentParser(add_help=False)
    ident.add_argument("--project-feasible", action="store_true",
                       help="clip infeasible contrast ratios into the admissible interval")
    ident.add_argument("--pool-alternatives", action="store_true")
    ident.add_argument("--rule", choices=("auto", "logit", "recursive", "both"), default="auto")
    ident.add_argument("--rates", default=None,
                       help="clock rates for dataset 2: comma list, JSON file, or 'scenario'")
    ident.add_argument("--bootstrap", type=int, default=40,
                       help="bootstrap replications for dataset-2 standard errors (0: fixed threshold)")
    ident.add_argument("--threshold-multiplier", type=float, default=3.0)
    ident.add_argument("--threshold-floor", type=float, default=1e-3)

    p = argparse.ArgumentParser(prog="peerchoice", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"peerchoice {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("equilibrium", parents=[common], help="invariant distribution and generator")
    e.add_argument("--delta", type=float, default=None, help="also write P(delta)")
    e.add_argument("--write-generator", action="store_true")
    e.set_defaults(func=cmd_equilibrium)

    s = sub.add_parser("simulate", parents=[common, sim], help="simulate and write data files")
    s.set_defaults(func=cmd_simulate)

    i = sub.add_parser("identify", parents=[common, sim, ident], help="identify from a data file")
    i.add_argument("--events", default=None, help="events CSV (default: OUT/events.csv)")
    i.add_argument("--snapshots", default=None, help="snapshots CSV (default: OUT/snapshots.csv)")
    i.add_argument("--exact", action="store_true", help="use exact CCPs of the scenario")
    i.set_defaults(func=cmd_identify)

    r = sub.add_parser("roundtrip", parents=[common, sim, ident], help="simulate, identify, compare")
    r.add_argument("--tolerance", action="append", default=None, metavar="[NAME=]X",
                   help="one value for every metric, or NAME=X for one metric; repeatable")
    r.add_argument("--replications", type=int, default=1)
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_roundtrip)

    x = sub.add_parser("example2", parents=[common], help="two-agent coordination analysis")
    x.add_argument("--r-peer1", type=float, default=0.8, help="R(1 | attended peer chose 1)")
    x.add_argument("--r-empty", type=float, default=0.5, help="R(1 | nobody attended)")
    x.add_argument("--r-peer0", type=float, default=0.2, help="R(1 | attended peer chose 0)")
    x.set_defaults(func=cmd_example2)

    v = sub.add_parser("validate", parents=[common], help="schema and assumption checks")
    v.add_argument("--strict", action="store_true", help="nonzero exit when an assumption fails")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except PeerChoiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(exc.exit_code)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(ExitCode.IO)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return int(ExitCode.NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
