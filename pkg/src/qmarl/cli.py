"""Command-line front end: ``qmarl run | sweep | report | paramcount``.

Exit codes: 0 success, 1 a seed diverged or golden counts mismatched,
2 invalid configuration or usage.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from . import config as qconfig
from .errors import ConfigError
from .paramcount import compare, count_for_config, format_counts
from .report import build_report, format_table
from .training.experiment import experiment_dir, run_experiment

log = logging.getLogger("qmarl")


def _override(cfg, seeds=None, out=None):
    data = qconfig.to_dict(cfg)
    if seeds is not None:
        data["seeds"] = list(seeds)
    if out is not None:
        data["out_dir"] = str(out)
    return qconfig.validate(data)


def _describe_result(result):
    s = result.summary
    if s["env"] == "chsh" and "final_win_rate" in s:
        stat = s["final_win_rate"]
        return f"mean final win rate {stat['mean']:.4f} (std {stat['std']:.4f}, {stat['n']} seeds)"
    if s["env"] == "coopnav" and "mean_success_rate" in s:
        stat = s["mean_success_rate"]
        return f"mean success rate {stat['mean']:.4f} (std {stat['std']:.4f}, {stat['n']} seeds)"
    if "mean_reward" in s:
        stat = s["mean_reward"]
        return f"mean episode reward {stat['mean']:.4f} (std {stat['std']:.4f}, {stat['n']} seeds)"
    return "no seed finished"


def cmd_run(args):
    cfg = _override(qconfig.load_config(args.config), args.seeds, args.out)
    result = run_experiment(cfg, jobs=args.jobs)
    print(f"{result.out_dir}: {_describe_result(result)}")
    if result.diverged:
        print(f"diverged seeds: {result.diverged}", file=sys.stderr)
        return 1
    return 0


def _sweep_entry(data):
    cfg = qconfig.validate(data)
    result = run_experiment(cfg)
    return str(result.out_dir), _describe_result(result), result.diverged


def cmd_sweep(args):
    spec = qconfig.SweepSpec.load(args.config)
    configs = [_override(c, args.seeds, args.out) for c in spec.expand()]
    dirs = [experiment_dir(c) for c in configs]
    if len(set(dirs)) != len(dirs):
        raise ConfigError("axes", "two sweep entries expand to the same configuration")
    payload = [qconfig.to_dict(c) for c in configs]
    if args.jobs > 1 and len(payload) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_entry, payload))
    else:
        results = [_sweep_entry(d) for d in payload]
    failed = False
    for out, text, diverged in results:
        print(f"{out}: {text}")
        if diverged:
            print(f"{out}: diverged seeds {diverged}", file=sys.stderr)
            failed = True
    return 1 if failed else 0


def cmd_report(args):
    out = Path(args.out) if args.out else Path("report")
    reports = build_report(args.dirs, out, args.window)
    print(format_table(reports))
    for rep in reports:
        if rep.missing:
            print(f"warning: {rep.label} is missing seeds {rep.missing}", file=sys.stderr)
    print(f"wrote {out / 'summary.csv'}")
    return 0


def cmd_paramcount(args):
    cfg = qconfig.load_config(args.config)
    counts = count_for_config(cfg)
    print(f"{cfg.label}")
    print(format_counts(counts))
    if not args.expect:
        return 0
    try:
        expectation = yaml.safe_load(Path(args.expect).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError("--expect", f"cannot read golden counts: {exc}") from None
    mismatches, flagged = compare(counts, expectation)
    for line in flagged:
        print(f"FLAGGED  {line}")
    for line in mismatches:
        print(f"MISMATCH {line}")
    if mismatches:
        return 1
    print("golden counts match")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="qmarl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=True):
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--seeds", type=int, nargs="+", help="override the config's seed list")
        p.add_argument("--out", help="root directory for results")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="worker processes")

    common(sub.add_parser("run", help="train every seed of one configuration"))
    common(sub.add_parser("sweep", help="run the cartesian expansion of a sweep file"))

    rep = sub.add_parser("report", help="aggregate result directories")
    rep.add_argument("dirs", nargs="+", help="experiment directories")
    rep.add_argument("--out", help="where summary.csv and series files go (default ./report)")
    rep.add_argument("--window", type=int, default=100, help="rolling-mean window")

    pc = sub.add_parser("paramcount", help="trainable parameter breakdown")
    pc.add_argument("--config", required=True, help="YAML config file")
    pc.add_argument("--expect", help="golden counts file (expect / ranges / flagged)")
    return parser


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "report": cmd_report, "paramcount": cmd_paramcount}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
