"""Command-line entry point: ``isacsim {run,sweep,trace-debug,convert,fixture}``.

The worker count for seed/frame parallelism is read from ``ISACSIM_WORKERS``
(default 1). Outputs never depend on it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .dataset import metrics_to_csv, read_record
from .errors import IsacError
from .fixtures import empty_scene, factory_scene
from .pipeline import RunConfig, metric_sweep, run
from .raytracer import trace_paths, write_path_dump
from .scene import parse_scene
from .sensing import image_to_csv, image_to_pgm

log = logging.getLogger("isacsim")

FIXTURES = {"factory": factory_scene, "los": empty_scene}


def _cmd_run(args):
    config = RunConfig.load(args.config)
    record = run(config, args.output)
    out = args.output or config.output_dir
    print(f"wrote {out}: {len(record.frames)} frame(s), {len(record.images)} image(s), "
          f"{len(record.metrics)} metric row(s)")
    return 0


def _cmd_sweep(args):
    config = RunConfig.load(args.config)
    summary = metric_sweep(config, args.output)
    metrics_to_csv(summary, sys.stdout)
    return 0


def _cmd_trace_debug(args):
    config = RunConfig.load(args.config)
    if config.scene_path is None:
        raise IsacError("trace-debug needs a config with scene_path")
    scene = parse_scene(config.scene_path)
    paths = trace_paths(scene, config.tracer, args.frame)
    if args.output:
        with open(args.output, "w") as fp:
            write_path_dump(paths, fp)
    else:
        write_path_dump(paths, sys.stdout)
    return 0


def _cmd_convert(args):
    record = read_record(args.record)
    out = Path(args.output or Path(args.record).with_suffix(""))
    out.mkdir(parents=True, exist_ok=True)
    for blob in record.images:
        if args.csv:
            with open(out / f"{blob.name}.csv", "w") as fp:
                image_to_csv(blob.image, fp)
        if args.pgm:
            with open(out / f"{blob.name}.pgm", "w") as fp:
                image_to_pgm(blob.image, fp)
    if args.csv:
        with open(out / "metrics.csv", "w") as fp:
            metrics_to_csv(record.metrics, fp)
    print(f"converted {len(record.images)} image(s) into {out}")
    return 0


def _cmd_fixture(args):
    doc = FIXTURES[args.name]()
    Path(args.path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="isacsim",
        description="Ray-traced ISAC channel simulator with radar sensing and metrics.",
        epilog="Set ISACSIM_WORKERS to run seeds/frames in parallel (default 1).")
    p.add_argument("--version", action="version", version=f"isacsim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-stage timings")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("run", help="run the full pipeline for a config")
    q.add_argument("config")
    q.add_argument("-o", "--output", help="output directory (overrides the config)")
    q.set_defaults(func=_cmd_run)

    q = sub.add_parser("sweep", help="SNR x clutter-method metric sweep; prints the CSV")
    q.add_argument("config")
    q.add_argument("-o", "--output", help="output directory (overrides the config)")
    q.set_defaults(func=_cmd_sweep)

    q = sub.add_parser("trace-debug", help="write the traced path dump of one frame")
    q.add_argument("config")
    q.add_argument("--frame", type=int, default=0)
    q.add_argument("-o", "--output", help="file (default stdout)")
    q.set_defaults(func=_cmd_trace_debug)

    q = sub.add_parser("convert", help="export images/metrics of a record")
    q.add_argument("record")
    q.add_argument("--csv", action="store_true", help="long-format CSV per image + metrics")
    q.add_argument("--pgm", action="store_true", help="PGM heatmap per image")
    q.add_argument("-o", "--output", help="directory (default: record path without suffix)")
    q.set_defaults(func=_cmd_convert)

    q = sub.add_parser("fixture", help="write a built-in scene document")
    q.add_argument("name", choices=sorted(FIXTURES))
    q.add_argument("path")
    q.set_defaults(func=_cmd_fixture)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "convert" and not (args.csv or args.pgm):
        parser.error("convert needs --csv and/or --pgm")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except IsacError as exc:
        print(f"isacsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
