"""Command-line entry point: train, eval, compare, selftest, trace, maps.

Exit codes: 0 success, 1 usage error, 2 data error (bad config, map, checkpoint
or trace file), 3 verification failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .agents import ScriptedPolicy, load_agent
from .config import RunConfig
from .envsim.maps import BUILTIN_MAPS, builtin_map
from .errors import CheckpointError, ConfigError, TrainingError
from .evalkit import AggregateReport, compare_csv, compare_text, run_eval
from .morl import Action, SelectionTrace

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path, overrides=()):
    cfg = RunConfig.load(path) if path else RunConfig()
    return cfg.with_overrides(overrides) if overrides else cfg


def cmd_train(args) -> int:
    cfg = _load_config(args.config, args.set)
    extra = []
    if args.seed is not None:
        extra.append(f"training.seed={args.seed}")
    if args.steps is not None:
        extra.append(f"training.total_steps={args.steps}")
    if extra:
        cfg = cfg.with_overrides(extra)

    def progress(run, rec):
        if not args.quiet:
            print(f"step {run.steps:>7d}  episode {rec['episode']:>4d}  {rec['reason']:<9s} "
                  f"steps {rec['steps']:>4d}  return {rec['return'][0]:+.2f}/{rec['return'][1]:+.2f}", flush=True)

    from .train import train
    try:
        run = train(args.mode, cfg, args.out, progress)
    except TrainingError as exc:
        print(f"training diverged: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_VERIFY
    print(f"{run.kind} run {run.status}: {run.steps} steps, {len(run.episodes)} episodes -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    if args.policy:
        policy, label = ScriptedPolicy(args.policy, args.seed), args.policy
    else:
        policy, label = load_agent(args.checkpoint), Path(args.checkpoint).stem
        label = getattr(policy, "kind", label)
    reports = {}
    for name in args.maps:
        trace_dir = None if args.trace_dir is None else Path(args.trace_dir)
        rep = run_eval(policy, cfg.environment, name, args.episodes, args.seed, cfg.reward,
                       trace_dir=trace_dir, label=f"{label}@{name}")
        reports[name] = rep
        print(f"== {rep.label}: {rep.n} episodes")
        for key, lab, unit, v, h in rep.rows():
            print(f"  {lab:<30s} {'n/a' if v is None else f'{v:.3f} ± {h:.3f}'} {unit}")
        if args.report:
            path = Path(args.report)
            if len(args.maps) > 1:
                path = path.with_name(f"{path.stem}_{name}{path.suffix}")
            rep.save(path)
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = (AggregateReport.from_dict(json.loads(Path(p).read_text())) for p in args.reports)
    if args.label_a:
        a.label = args.label_a
    if args.label_b:
        b.label = args.label_b
    sys.stdout.write(compare_csv(a, b) if args.csv else compare_text(a, b))
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .verify import run_selftest
    results = run_selftest(fast=args.fast, fault=args.inject_fault)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def _fmt_set(s):
    return "{" + ",".join(Action(a).name.lower() for a in s) + "}"


def cmd_trace(args) -> int:
    path = Path(args.episode)
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_DATA
    if not lines:
        print(f"{path}: empty trace (0 steps)")
        return EXIT_OK
    corrupt = []
    for n, line in enumerate(lines):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            print(f"{path}:{n + 1}: invalid JSON ({exc})", file=sys.stderr)
            return EXIT_DATA
        step = rec.get("step", n)
        head = f"step {step:>5}  {Action(rec['action']).name.lower():<10s} v={rec.get('speed_after', 0):5.2f}"
        if rec.get("reward") is not None:
            head += f"  r=[{rec['reward'][0]:+.3f}, {rec['reward'][1]:+.3f}]"
        sel = rec.get("selection")
        if sel and "sets" in sel:
            tr = SelectionTrace.from_dict(sel)
            sets = "  ".join(f"A{i}={_fmt_set(s)}" for i, s in enumerate(tr.sets))
            explored = "" if tr.explored is None else f"  explored objective {tr.explored}"
            qs = "  ".join("Q" + str(i + 1) + "=[" + ", ".join(f"{v:.3f}" for v in row) + "]"
                           for i, row in enumerate(tr.q))
            flag = ""
            if not tr.is_nested() or (tr.explored is None and tr.action not in tr.sets[-1]):
                corrupt.append(step)
                flag = "  !! acceptable sets not nested"
            print(f"{head}  {sets}{explored}  {qs}{flag}")
        elif sel and "q" in sel:
            print(f"{head}  Q=[" + ", ".join(f"{v:.3f}" for v in sel["q"][0]) + "]")
        else:
            print(head)
        if rec.get("done"):
            print(f"episode ended: {rec.get('reason')}")
    if corrupt:
        print(f"corrupt trace: {len(corrupt)} step(s) with non-nested acceptable sets: {corrupt[:10]}",
              file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_maps(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.names or sorted(BUILTIN_MAPS):
        spec = builtin_map(name)
        spec.save(out / f"{name}.json")
        print(f"{name}: route {spec.path.length:.1f} m, {len(spec.intersections)} junctions -> {out / (name + '.json')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lexi-morl", description="Thresholded lexicographic DQN toolkit for pedestrian-aware driving.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a MORL or SORL agent")
    t.add_argument("--mode", choices=("morl", "sorl"), required=True)
    t.add_argument("--config", required=True, help="JSON run config")
    t.add_argument("--seed", type=int, help="overrides training.seed")
    t.add_argument("--steps", type=int, help="overrides training.total_steps")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--set", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                   help="override any config field (repeatable)")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint or scripted policy")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", help="training checkpoint (.ckpt)")
    src.add_argument("--policy", choices=ScriptedPolicy.NAMES, help="scripted policy instead of a checkpoint")
    e.add_argument("--maps", nargs="+", default=["train"], metavar="MAP",
                   help="builtin map names (train, heldout1, heldout2) or JSON map files")
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--config", help="JSON run config for environment and reward settings")
    e.add_argument("--report", help="write the report here (.json or .csv)")
    e.add_argument("--trace-dir", help="write one JSON-lines trace per episode into this directory")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="side-by-side comparison of two JSON reports")
    c.add_argument("reports", nargs=2, metavar="REPORT")
    c.add_argument("--label-a")
    c.add_argument("--label-b")
    c.add_argument("--csv", action="store_true")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("selftest", help="run the built-in verification suites")
    s.add_argument("--fast", action="store_true", help="skip the DDQN convergence suite")
    s.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_selftest)

    tr = sub.add_parser("trace", help="pretty-print an episode trace")
    tr.add_argument("--episode", required=True, help="JSON-lines trace written by eval --trace-dir")
    tr.set_defaults(func=cmd_trace)

    m = sub.add_parser("maps", help="write the builtin maps as JSON")
    m.add_argument("--out", default="maps")
    m.add_argument("names", nargs="*", help=f"subset of {', '.join(sorted(BUILTIN_MAPS))} (default: all)")
    m.set_defaults(func=cmd_maps)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BrokenPipeError:
        # reader went away (e.g. `| head`); silence the flush at interpreter exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
