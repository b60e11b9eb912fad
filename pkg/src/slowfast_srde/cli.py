"""Command line entry point: ``slowfast <verb> CONFIG [flags]``.

Exit status is 0 when every check of the verb passes, 2 when a check fails
or a NaN reaches the output, and 1 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .io import dumps, read_table, write_container, write_table
from .model import ConfigError
from .rate import MODES, PathSpec
from .simulator import SimParams
from .studies import (_SECTION, ExperimentPlan, ResultTable, _initial, run_averaging_study,
                      run_cost_study, run_hypcheck, run_laplace_study, run_measure_study,
                      run_mixing_study, run_rate_eval, run_viable_pair_study, simulate_ensemble)

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

VERBS = {
    "hypcheck": ("hypcheck", "check the standing hypotheses and the regime schedule"),
    "simulate": (None, "simulate an ensemble and write a binary container"),
    "measure": ("measure", "sample the frozen-slow invariant measure"),
    "average": ("averaging", "averaging convergence along the schedule"),
    "occupation": ("viable_pair", "occupation-measure marginals along the schedule"),
    "rate": ("rate_eval", "evaluate the action functional on a path"),
    "laplace": ("laplace", "Laplace-principle Monte Carlo against inf(S + h)"),
    "mixing": ("mixing", "decay of time-average errors"),
    "cost": ("cost", "piecewise-frozen control cost against its averaged limit"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="slowfast", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    sub.required = True
    for verb, (_, help_) in VERBS.items():
        s = sub.add_parser(verb, help=help_, description=help_)
        s.add_argument("config", help="TOML file or preset:<name>")
        s.add_argument("--seed", type=int, help="master seed (default: [rng] seed)")
        s.add_argument("--out", type=Path, help="output file (CSV, JSON or container)")
        s.add_argument("--replicas", type=int, help="replica count (default: the study section)")
        s.add_argument("--entry", type=int, action="append",
                       help="schedule entry index; repeat to select several")
        s.add_argument("--gnuplot-stub", type=Path, help="write a gnuplot script for the table")
        if verb == "rate":
            s.add_argument("--path", type=Path, help="CSV with columns t, psi0, psi1, ...")
            s.add_argument("--mode", choices=MODES, default="sigma1_Y_independent")
            s.add_argument("--feedback", type=Path, help="write the feedback control table")
        if verb == "measure":
            s.add_argument("--samples", type=Path, help="write the samples as a container")
    return p


def _plan(kind: str, args, cfg, default_replicas: int = 1) -> ExperimentPlan:
    sec = cfg.section(_SECTION.get(kind, kind))
    reps = args.replicas if args.replicas is not None else int(sec.get("replicas", default_replicas))
    return ExperimentPlan(kind, cfg, replicas=reps, seed=args.seed, out=args.out,
                          entries=args.entry)


def _emit_table(table: ResultTable, args) -> int:
    if args.out:
        table.write(args.out)
        print(dumps({"kind": table.kind, "out": str(args.out), "checks": table.checks,
                     "passed": table.passed}))
    else:
        sys.stdout.write(table.body())
    if args.gnuplot_stub:
        args.gnuplot_stub.write_text(table.gnuplot_stub(args.out or "table.csv"))
    if not table.finite:
        print("slowfast: NaN in the result table", file=sys.stderr)
        return EXIT_FAIL
    for name, ok in table.checks.items():
        if not ok:
            print(f"slowfast: check failed: {name}", file=sys.stderr)
    return EXIT_OK if table.passed else EXIT_FAIL


def _read_path(path: Path) -> PathSpec:
    try:
        _, cols, rows = read_table(path)
    except ValueError:
        lines = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
        cols = lines[0].split(",")
        rows = [l.split(",") for l in lines[1:]]
    if not cols or cols[0] != "t":
        raise ConfigError(f"{path}: first column must be t")
    a = np.array(rows, dtype=float)
    return PathSpec(a[:, 0], a[:, 1:], a[0, 1:])


def _rate(args, cfg) -> int:
    plan = _plan("rate_eval", args, cfg)
    if args.path is None:
        raise ConfigError("rate needs --path")
    path = _read_path(args.path)
    M1 = cfg.model.sys1.mode_count
    if path.fields.shape[1] != M1:
        raise ConfigError(f"path has {path.fields.shape[1]} modes, the model has {M1}")
    res = run_rate_eval(plan, path, args.mode)
    text = dumps(res.to_dict())
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)
    if args.feedback and res.feedback is not None:
        t, v = res.feedback.table()
        write_table(args.feedback, "feedback", ["t"] + [f"v{j}" for j in range(v.shape[1])],
                    ([t[i]] + list(v[i]) for i in range(t.size)),
                    {"grid": cfg.model.x, "scale": res.feedback.scale})
    return EXIT_FAIL if math.isnan(res.value) else EXIT_OK


def _simulate(args, cfg) -> int:
    sec = cfg.section("simulate")
    k = (args.entry or [int(sec.get("entry", 0))])[0]
    if cfg.schedule is not None and k < len(cfg.schedule):
        e = cfg.schedule[k]
        eps, delta, dt = e.epsilon, e.delta, e.dt
    else:
        eps = delta = dt = None
    eps = float(sec.get("epsilon", eps if eps is not None else math.nan))
    delta = float(sec.get("delta", delta if delta is not None else math.nan))
    dt = float(sec.get("dt", dt if dt is not None else math.nan))
    if any(math.isnan(v) for v in (eps, delta, dt)):
        raise ConfigError("simulate needs a [regime] entry or [simulate] epsilon, delta and dt")
    T = float(sec.get("T", 1.0))
    reps = args.replicas if args.replicas is not None else int(sec.get("replicas", 1))
    seed = cfg.seed if args.seed is None else args.seed
    plan = ExperimentPlan("hypcheck", cfg, replicas=reps, seed=seed)
    X0, Y0 = _initial(plan)
    rec = simulate_ensemble(cfg.model, SimParams(eps, delta, dt), X0, Y0, T, seed=seed, entry=k,
                            replicas=reps, record_every=int(sec.get("record_every", 1)))
    out = args.out or Path("trajectory.sfc")
    write_container(out, {"times": rec.times, "X": rec.X, "Y": rec.Y,
                          "blowup_times": rec.blowup_times},
                    {"epsilon": eps, "delta": delta, "dt": dt, "T": T, "seed": seed, "entry": k,
                     "replicas": list(rec.replicas), "config": cfg.source})
    blown = int(np.sum(np.isfinite(rec.blowup_times)))
    print(dumps({"out": str(out), "replicas": reps, "blowups": blown}))
    return EXIT_FAIL if blown else EXIT_OK


def _measure(args, cfg) -> int:
    table, meas = run_measure_study(_plan("measure", args, cfg))
    if args.samples:
        write_container(args.samples, {"samples": meas.samples, "weights": meas.weights},
                        {"config": cfg.source, "kind": "invariant_measure"})
    return _emit_table(table, args)


def _hypcheck(args, cfg) -> int:
    table = run_hypcheck(_plan("hypcheck", args, cfg))
    report = table.meta["report"]
    text = dumps(report)
    if args.out:
        args.out.write_text(text + "\n")
    print(text)
    return EXIT_OK if table.passed else EXIT_FAIL


_STUDY = {"average": run_averaging_study, "occupation": run_viable_pair_study,
          "laplace": run_laplace_study, "mixing": run_mixing_study, "cost": run_cost_study}


def run(args) -> int:
    cfg = load_config(args.config)
    if args.verb == "hypcheck":
        return _hypcheck(args, cfg)
    if args.verb == "simulate":
        return _simulate(args, cfg)
    if args.verb == "measure":
        return _measure(args, cfg)
    if args.verb == "rate":
        return _rate(args, cfg)
    kind = VERBS[args.verb][0]
    default = 2 if kind == "viable_pair" else 1
    return _emit_table(_STUDY[args.verb](_plan(kind, args, cfg, default)), args)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return run(args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"slowfast: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
