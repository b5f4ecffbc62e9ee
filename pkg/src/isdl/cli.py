"""Command-line entry point.

Exit codes: 0 on success, 1 on an invalid config, 2 when any run failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dedup, experiment
from .errors import ConfigError
from .metrics import round_floats

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2


def _cmd_run(args) -> int:
    cfg = experiment.load_config(args.config)
    out = Path(args.out) if args.out else cfg.output_dir
    if out is None:
        raise ConfigError("output_dir", "no output directory given (use --out)")
    report = experiment.run(cfg, out)
    failed = experiment.n_failed(report)
    for agg in report["aggregate"]:
        f1 = agg["metrics"].get("macro_f1")
        arm = agg["variant"] if agg["alpha"] is None else f"{agg['variant']}@{agg['alpha']:g}"
        # report median macro-F1 per arm as a quick summary
        print(f"{arm:<16} ok={agg['n_ok']} failed={agg['n_failed']} "
              f"macro_f1_median={'%.4f' % f1['median'] if f1 else 'n/a'}")
    print(f"wrote {out / experiment.REPORT_NAME}")
    return EXIT_RUN if failed else EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = experiment.load_config(args.config)
    rows = experiment.sweep_alpha(cfg)
    names = experiment.prepare_data(cfg, cfg.seeds[0]).class_names
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            experiment.write_sweep_csv(rows, names, fh)
    else:
        experiment.write_sweep_csv(rows, names, sys.stdout)
    return EXIT_OK


def _cmd_compare(args) -> int:
    a, b = experiment.load_report(args.report_a), experiment.load_report(args.report_b)
    arm_a = experiment.parse_arm(args.arm_a) if args.arm_a else None
    arm_b = experiment.parse_arm(args.arm_b) if args.arm_b else None
    table = experiment.compare(a, b, arm_a, arm_b)
    if args.json:
        print(json.dumps(round_floats(table), indent=2, sort_keys=True))
        return EXIT_OK
    print(f"{'metric':<22}{'median_a':>10}{'median_b':>10}{'delta':>10}  wins a/b/ties")
    for k, row in table.items():
        print(f"{k:<22}{row['median_a']:>10.4f}{row['median_b']:>10.4f}{row['delta_median']:>+10.4f}  "
              f"{row['wins_a']}/{row['wins_b']}/{row['ties']}")
    return EXIT_OK


def _cmd_explain(args) -> int:
    cfg = experiment.load_config(args.config)
    arm = experiment.parse_arm(args.arm) if args.arm else (None, None)
    records = experiment.explain_instance(cfg, args.instance, out_dir=args.out, variant=arm[0], alpha=arm[1],
                                          seed=args.seed, top_n=args.top_n)
    print(json.dumps(round_floats(records), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_dedup(args) -> int:
    corpus = dedup.read_manifest(args.manifest)
    _, report = dedup.apply_removal_policy(corpus)
    if args.removed:
        dedup.write_removed_csv(report, args.removed)
    sys.stdout.write(dedup.format_summary(dedup.summarize(report)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isdl", description="Class-rebalancing self-training experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every arm and seed of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides output_dir in the config)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="generation-1 selected counts per alpha")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="write the table to this CSV instead of stdout")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("compare", help="per-metric deltas between two reports (b - a)")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--arm-a", help="arm of report a, e.g. naive or ISDL@3")
    p.add_argument("--arm-b", help="arm of report b")
    p.add_argument("--json", action="store_true", help="print the full table as JSON")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("explain", help="kernel SHAP attributions for one sample")
    p.add_argument("--config", required=True)
    p.add_argument("--instance", required=True, type=int, help="sample id")
    p.add_argument("--arm", help="arm to train, e.g. ISDLplus@3 (default: first self-training arm)")
    p.add_argument("--seed", type=int)
    p.add_argument("--top-n", type=int)
    p.add_argument("--out", help="directory for heatmap files")
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("dedup", help="byte-identical duplicate removal over a corpus manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--removed", help="write the removed-file list to this CSV")
    p.set_defaults(func=_cmd_dedup)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
