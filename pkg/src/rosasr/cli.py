"""Command-line entry point: ``rosasr <subcommand> --config FILE [--set section.key=value ...]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import load_config
from .decode import format_table, read_hypotheses, score_manifest, write_hypotheses, write_score_csv
from .errors import ConfigError, DataError, InvalidAlpha, NumericalError, RosAsrError
from .experiment import VARIANTS, Pipeline, SystemSpec, SYSTEM_KINDS, generate_corpus_from_config
from .manifest import Manifest

logger = logging.getLogger("rosasr")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


def _print_status(status: dict, out):
    for name, state in status.items():
        print(f"{name}: {state}", file=out)


def _seeds(args, cfg):
    return [args.seed] if args.seed is not None else list(cfg["experiment.seeds"])


def _parse_alpha(text: str):
    if text in ("none", "map"):
        return text
    try:
        a = float(text)
    except ValueError:
        raise ConfigError(f"--alpha: expected 'none', 'map' or a positive number, got {text!r}") from None
    if not a > 0:
        raise ConfigError(f"--alpha: must be positive, got {text!r}")
    return a


def cmd_gen_corpus(args, cfg, out):
    splits = generate_corpus_from_config(cfg)
    print(f"wrote {len(splits.train)} train, {len(splits.cv)} cv, {len(splits.test)} test utterances "
          f"to {cfg['paths.corpus']}", file=out)


def cmd_prepare(args, cfg, out):
    p = Pipeline(cfg, args.jobs)
    _print_status(p.prepare(), out)


def cmd_train_gmm(args, cfg, out):
    p = Pipeline(cfg, args.jobs)
    p.train_gmm()
    _print_status(p.status, out)


def cmd_align(args, cfg, out):
    p = Pipeline(cfg, args.jobs)
    p.align()
    _print_status(p.status, out)


def cmd_train_dnn(args, cfg, out):
    p = Pipeline(cfg, args.jobs)
    for seed in _seeds(args, cfg):
        p.train_system(SystemSpec(args.kind, seed))
    _print_status(p.status, out)


def cmd_decode(args, cfg, out):
    p = Pipeline(cfg, args.jobs)
    alpha = _parse_alpha(args.alpha)
    for seed in _seeds(args, cfg):
        spec = SystemSpec(args.kind, seed)
        hyps = p.decode(spec, alpha)
        tag = alpha if isinstance(alpha, str) else f"{alpha:g}"
        path = p.path("decode", "manual", f"{spec.name}.alpha-{tag}.hyp")
        write_hypotheses(path, hyps)
        print(f"wrote {path}", file=out)


def cmd_score(args, cfg, out):
    p = Pipeline(cfg, args.jobs)
    manifest = Manifest.read(args.manifest) if args.manifest else p.manifest("test")
    tables = []
    for path in args.hyp:
        name = os.path.splitext(os.path.basename(path))[0]
        tables.append((name, score_manifest(manifest, read_hypotheses(path), p.bins)))
    if args.csv:
        write_score_csv(args.csv, tables, {"config_digest": cfg.digest()})
    print(format_table(tables), end="", file=out)


def cmd_experiment(args, cfg, out):
    p = Pipeline(cfg, args.jobs)
    for variant in args.variant:
        res = p.experiment(variant)
        with open(p.path("results", f"{variant}.txt"), encoding="utf-8") as fh:
            print(fh.read(), end="", file=out)
        print(f"wrote {res.csv_path}", file=out)


def cmd_sweep_alpha(args, cfg, out):
    p = Pipeline(cfg, args.jobs)
    grid = None
    if args.grid:
        try:
            grid = [float(x) for x in args.grid.replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"--grid: expected numbers, got {args.grid!r}") from None
    rows = p.sweep_alpha(grid)
    for kind, a, tset, _, wer, _, _ in rows:
        print(f"{kind:<5} alpha={a:<8g} {tset:<7} {'absent' if wer is None else f'{wer:.2f}'}", file=out)


def cmd_ros_stats(args, cfg, out):
    p = Pipeline(cfg, args.jobs)
    stats = p.ros_stats(args.bin_width)
    for split, (_, counts) in stats.items():
        print(f"{split}: " + " ".join(f"{k}={v}" for k, v in counts.items()), file=out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="INI configuration file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--jobs", "-j", type=int, default=1, help="worker cap (stages currently run sequentially)")
    common.add_argument("--verbose", "-v", action="count", default=0)

    parser = argparse.ArgumentParser(prog="rosasr", description="Rate-of-speech aware hybrid recognizer")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        sp.set_defaults(func=func)
        return sp

    add("gen-corpus", cmd_gen_corpus, "write the synthetic corpus to paths.corpus")
    add("prepare", cmd_prepare, "features, GMM-HMM training, alignment and ROS")
    add("train-gmm", cmd_train_gmm, "features and GMM-HMM training")
    add("align", cmd_align, "forced alignment, ROS and rate bins")
    for name, func, text in (("train-dnn", cmd_train_dnn, "train hybrid network(s)"),
                             ("decode", cmd_decode, "decode the test set")):
        sp = add(name, func, text)
        sp.add_argument("--kind", choices=sorted(SYSTEM_KINDS), default="base")
        sp.add_argument("--seed", type=int, help="network seed (default: every experiment seed)")
        if name == "decode":
            sp.add_argument("--alpha", default="none", help="'none', 'map' (per rate bin) or a number")
    sp = add("score", cmd_score, "score hypothesis files per rate bin")
    sp.add_argument("hyp", nargs="+", help="hypothesis files (utt<TAB>words)")
    sp.add_argument("--manifest", help="reference manifest (default: prepared test manifest)")
    sp.add_argument("--csv", help="also write the score table as CSV")
    sp = add("experiment", cmd_experiment, "run experiment variant(s)")
    sp.add_argument("--variant", action="append", choices=VARIANTS, required=True)
    sp = add("sweep-alpha", cmd_sweep_alpha, "WER per rate bin over a grid of alpha values")
    sp.add_argument("--grid", help="alpha values (default: experiment.sweep_grid)")
    sp = add("ros-stats", cmd_ros_stats, "ROS histograms and rate-bin counts")
    sp.add_argument("--bin-width", type=float, default=1.0)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        args.func(args, cfg, out)
    except (ConfigError, InvalidAlpha) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error{_stage(exc)}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, RosAsrError, OSError) as exc:
        print(f"data error{_stage(exc)}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _stage(exc) -> str:
    stage = getattr(exc, "stage", None)
    return f" in stage {stage}" if stage else ""


if __name__ == "__main__":
    sys.exit(main())
