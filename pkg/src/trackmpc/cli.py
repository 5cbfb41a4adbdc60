"""Command-line entry point.

Exit codes: 0 success, 1 domain failure (failed assumptions, infeasible
run, MOAS cap without a fixed point), 2 input error (unreadable or malformed
files, mismatched design/config pair).
"""

import argparse
import csv
import math
import sys
from pathlib import Path

from . import artifact, properties, sim, svg, synthesis
from .config import load_config
from .errors import (ConfigError, NoFallback, NotFinitelyDetermined, TheoremViolation,
                     TrackMPCError, ValidationFailed)
from .model import validate

EXIT_OK, EXIT_DOMAIN, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _out(msg=""):
    print(msg, flush=True)


def _err(msg):
    print(msg, file=sys.stderr, flush=True)


def _progress(every=10):
    def report(t, rows, new):
        if t % every == 0:
            _err(f"  moas iteration {t}: {rows} rows (+{new})")
    return report


def csv_header(n, m, q):
    return (["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
            + [f"r{i}" for i in range(q)] + [f"rbar{i}" for i in range(q)]
            + ["e_norm", "cost", "feasible", "margin"])


def write_log_csv(path, log, n, m, q):
    """Write the run log; floats use the shortest round-trip representation."""
    en = log.e_norm()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(n, m, q))
        for k in range(len(log)):
            w.writerow([log.t[k]] + [repr(float(v)) for v in log.x[k]]
                       + [repr(float(v)) for v in log.u[k]] + [repr(float(v)) for v in log.r[k]]
                       + [repr(float(v)) for v in log.rbar[k]]
                       + [repr(float(en[k])), repr(float(log.cost[k])), int(log.feasible[k]),
                          repr(float(log.margin[k]))])


def write_plots(out_dir, log, plant, exo, title):
    t = list(log.t)
    ys = [plant.C @ x for x in log.x]
    yr = [exo.Qe @ r for r in log.r]
    panels = []
    for i in range(plant.p):
        panels.append({"title": f"output {i}", "x": t,
                       "series": [("y", [y[i] for y in ys]), ("y_r", [y[i] for y in yr])]})
    (out_dir / "outputs.svg").write_text(svg.line_chart(panels, title=f"{title}: y and y_r"))
    diag = [
        {"title": "tracking error |e|", "x": t, "series": [("|e|", list(log.e_norm()))], "log": True},
        {"title": "input u", "x": t,
         "series": [(f"u{i}", [u[i] for u in log.u]) for i in range(plant.m)]},
        {"title": "optimal cost J", "x": t, "series": [("J", list(log.cost))], "log": True},
    ]
    (out_dir / "diagnostics.svg").write_text(svg.line_chart(diag, title=f"{title}: |e|, u, J"))


def cmd_validate(args):
    cfg = load_config(args.config)
    report = validate(cfg.plant, cfg.exo)
    _out(f"config {cfg.name} (n={cfg.plant.n}, m={cfg.plant.m}, q={cfg.exo.q}, k0={cfg.exo.k0})")
    _out(report.format())
    return EXIT_OK if report.passed else EXIT_DOMAIN


def _design_summary(design):
    meta = design.meta
    free, pinned, extra = design.decision_counts
    Nm = design.horizon * design.plant.m
    ups = meta["upsilon"]
    lines = [
        f"terminal set        {design.terminal.variant}, {meta['terminal_rows']} rows",
        f"regulator residual  {meta['regulator_residual']:.3e} (output {meta['output_residual']:.3e})",
        f"Lyapunov residual   {meta['lyapunov_residual']:.3e}",
        f"T invariance        {meta['T_invariance_residual']:.3e}",
        f"MOAS t0             {meta['moas_iterations']}",
        f"Upsilon             {'unbounded' if math.isinf(ups) else f'{ups:.10g}'}",
        f"decision variables  {free} free + {pinned} pinned = {Nm} input moves + "
        f"{extra} additional decision variables",
    ]
    return "\n".join(lines)


def cmd_synthesize(args):
    cfg = load_config(args.config)
    report = validate(cfg.plant, cfg.exo)
    if not report.passed:
        _out(report.format())
        raise ValidationFailed(report)
    cap = args.cap if args.cap is not None else cfg.moas_cap
    _err(f"synthesizing {cfg.name} ...")
    design = synthesis.synthesize(cfg.plant, cfg.exo, cfg.Q, cfg.T0, cfg.Lambda, cfg.horizon,
                                  cap=cap, progress=_progress(), check=False)
    artifact.save(args.output, design, cfg.design_hash)
    _out(_design_summary(design))
    _out(f"wrote {args.output}")
    return EXIT_OK


def _load_pair(design_path, config_path):
    cfg = load_config(config_path)
    design, stored = artifact.load(design_path)
    if stored != cfg.design_hash:
        raise InputError(f"design {design_path} was synthesized from a different configuration "
                         f"(hash {stored[:12] or '<none>'} vs {cfg.design_hash[:12]})")
    return cfg, design


def cmd_simulate(args):
    cfg, design = _load_pair(args.design, args.config)
    steps = cfg.steps if args.steps is None else args.steps
    if steps < 0:
        raise InputError("--steps must be nonnegative")
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    plant, exo = design.plant, design.exo
    failure = None
    try:
        log = sim.run_closed_loop(plant, design, cfg.program, cfg.x0, steps,
                                  pin_reference=args.pin_reference, strict=args.strict)
    except NoFallback as exc:
        failure = exc
        log = exc.log
    write_log_csv(out_dir / "log.csv", log, plant.n, plant.m, exo.q)
    write_plots(out_dir, log, plant, exo, cfg.name)
    met = sim.metrics(log, cfg.program.switch_steps, design.weights.Q)
    summary = met.format()
    if failure is not None:
        value = "n/a" if failure.infeasibility is None else f"{failure.infeasibility:.3e}"
        summary += f"\nQP infeasible at t = {failure.step} (phase-1 value {value}); run aborted"
    (out_dir / "summary.txt").write_text(summary + "\n")
    _out(summary)
    _out(f"wrote {out_dir / 'log.csv'}, {out_dir / 'outputs.svg'}, {out_dir / 'diagnostics.svg'}")
    return EXIT_DOMAIN if failure is not None else EXIT_OK


def cmd_moas(args):
    cfg = load_config(args.config)
    report = validate(cfg.plant, cfg.exo)
    if not report.passed:
        _out(report.format())
        raise ValidationFailed(report)
    plant, exo = cfg.plant, cfg.exo
    reg = synthesis.solve_regulator(plant, exo)
    cap = args.cap if args.cap is not None else (cfg.moas_cap or synthesis.default_cap(exo.k0))
    if args.include_nonperiodic:
        M = synthesis.block_diag(plant.Acl, exo.S)
        constraint = plant.Z.map(synthesis.output_map(plant, reg.Pi, reg.Gamma))
        try:
            O, it, growth = synthesis.moas(M, constraint, cap, prune_every=exo.k0,
                                           progress=_progress())
        except NotFinitelyDetermined as exc:
            _out(f"full augmented system (dimension {M.shape[0]}), cap {cap}")
            _out(f"no fixed point after {exc.iterations} iterations: {exc.rows} rows")
            _out(f"growth per iteration (last 10): {list(exc.growth)[-10:]}")
            _out("diagnosis: not finitely determined, as expected when non-periodic modes "
                 "are included")
            return EXIT_OK
        _out(f"full augmented system (dimension {M.shape[0]}) closed at t0 = {it}, "
             f"{O.n_rows} rows")
        return EXIT_OK
    weights = synthesis.cost_weights(plant, exo, cfg.Q, cfg.T0, cfg.Lambda)
    ts = synthesis.build_terminal_set(plant, exo, reg, weights, cap=cap, progress=_progress())
    _out(f"{ts.variant} terminal set in dimension {ts.polytope.dim}")
    _out(f"t0 = {ts.iterations}")
    _out(f"rows = {ts.polytope.n_rows}")
    _out(f"growth per iteration: {list(ts.growth)}")
    return EXIT_OK


def cmd_verify(args):
    cfg, design = _load_pair(args.design, args.config)
    seed = properties.seed_from_env(args.seed)
    _out(f"seed {seed}")
    reports = (properties.check_invariance(design, args.samples, seed)
               + properties.check_reference_set(design, max(args.samples // 5, 1), seed))
    for r in reports:
        _out(r.format())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_DOMAIN


def build_parser():
    p = argparse.ArgumentParser(prog="trackmpc",
                                description="Offset-free MPC tracking of exosystem references.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check plant/exosystem assumptions")
    s.add_argument("config")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("synthesize", help="offline design, written as a JSON artifact")
    s.add_argument("config")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--cap", type=int, default=None, help="MOAS iteration cap")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("simulate", help="closed-loop run writing CSV, SVG and a summary")
    s.add_argument("design")
    s.add_argument("config")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.add_argument("--pin-reference", action="store_true",
                   help="fix the artificial reference to the true one (diagnostic)")
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--strict", action="store_true",
                   help="abort instead of applying the shifted fallback plan")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("moas", help="maximal output admissible set statistics")
    s.add_argument("config")
    s.add_argument("--include-nonperiodic", action="store_true",
                   help="use the whole augmented system, non-periodic modes included")
    s.add_argument("--cap", type=int, default=None)
    s.set_defaults(func=cmd_moas)

    s = sub.add_parser("verify", help="sampled terminal-set property checks")
    s.add_argument("design")
    s.add_argument("config")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0, help="overridden by TRACKMPC_SEED")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(f"input error: {exc}")
        return EXIT_INPUT
    except InputError as exc:
        _err(f"input error: {exc}")
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        _err(f"input error: {exc}")
        return EXIT_INPUT
    except ValidationFailed as exc:
        _err(f"assumptions failed: {', '.join(exc.report.failed_names())}")
        return EXIT_DOMAIN
    except NotFinitelyDetermined as exc:
        _err(f"MOAS not finitely determined: {exc} (rows {exc.rows}, "
             f"last growth {list(exc.growth)[-5:]})")
        return EXIT_DOMAIN
    except TheoremViolation as exc:
        _err(f"run aborted: {exc}")
        return EXIT_DOMAIN
    except TrackMPCError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
