"""Command-line interface: analyze, preview, batch and serve.

Exit codes: 0 success, 1 usage error, 2 unreadable or ill-formed input,
3 runtime failure. Every error path prints one `error: ...` line to stderr.
The SYNAPCOUNT_LOG environment variable (error|warn|info|debug) controls
logging verbosity.
"""

import argparse
import datetime
import errno
import logging
import os
import sys
from pathlib import Path

from .errors import InputError
from .detect import AnalysisConfig, run_analysis
from .images import load_tiff, save_png
from .report import (
    global_csv_row,
    render_candidates_overlay,
    render_marked_synapses,
    render_region_overlay,
    to_csv,
    to_json,
)
from .batch import batch_csv, load_config, run_batch
from .traces import load_traces_file

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_RUNTIME = 3

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

logger = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to 1."""

    def error(self, message):
        raise _UsageError(message)


def _configure_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("SYNAPCOUNT_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)  # effective even if logging was already set up


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="synapcount", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_analysis_flags(p, with_outputs: bool):
        p.add_argument("--red", required=True, help="red-marker TIFF")
        p.add_argument("--green", required=True, help="green-marker TIFF")
        p.add_argument("--traces", required=True, help="dendrite traces (NDF or JSON)")
        p.add_argument("--scale", required=True, type=float, help="um per pixel")
        p.add_argument("--thickness", required=True, type=float, help="dendrite thickness, um")
        p.add_argument("--tr", required=True, type=int, help="red threshold 0-255")
        p.add_argument("--tg", required=True, type=int, help="green threshold 0-255")
        p.add_argument("--mode", choices=["global", "per-dendrite"], default="global")
        p.add_argument("--min-area", type=int, default=1, help="smallest counted component, px")
        p.add_argument("--connectivity", type=int, choices=[4, 8], default=8)
        if with_outputs:
            p.add_argument("--out", help="write the results table as CSV")
            p.add_argument("--json", help="write the full report as JSON")
            p.add_argument("--overlay", help="write the analyzed-region image as PNG")
            p.add_argument("--marks", help="write the marked-synapses image as PNG")

    p_analyze = sub.add_parser("analyze", help="count synapses on one neuron")
    add_analysis_flags(p_analyze, with_outputs=True)

    p_preview = sub.add_parser(
        "preview", help="render the candidate pixels for given thresholds"
    )
    add_analysis_flags(p_preview, with_outputs=False)
    p_preview.add_argument("--out", required=True, help="preview PNG path")

    p_batch = sub.add_parser("batch", help="process a folder of neuron groups")
    p_batch.add_argument("--dir", required=True, help="folder with grouped files")
    p_batch.add_argument("--config", required=True, help="configuration JSON")
    p_batch.add_argument("--out", required=True, help="batch CSV path")

    p_serve = sub.add_parser("serve", help="run the local threshold-tuning API")
    p_serve.add_argument("--port", type=int, default=8711)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--static", help="directory with browser console assets")
    return parser


def _load_analysis_inputs(args):
    red = load_tiff(args.red, channel="red")
    green = load_tiff(args.green, channel="green")
    traces = load_traces_file(args.traces)
    config = AnalysisConfig(
        scale=args.scale,
        thickness=args.thickness,
        threshold_red=args.tr,
        threshold_green=args.tg,
        min_area=args.min_area,
        connectivity=args.connectivity,
        mode=args.mode,
    )
    inputs = {"red": args.red, "green": args.green, "traces": args.traces}
    return red, green, traces, config, inputs


def cmd_analyze(args) -> int:
    red, green, traces, config, inputs = _load_analysis_inputs(args)
    detail = run_analysis(red, green, traces, config, inputs=inputs)
    report = detail.report
    if args.out:
        Path(args.out).write_text(to_csv(report), encoding="utf-8")
    if args.json:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        Path(args.json).write_text(to_json(report, created_at=stamp), encoding="utf-8")
    if args.overlay or args.marks:
        overlay = render_region_overlay(red, green, detail.region)
        if args.overlay:
            save_png(overlay, args.overlay)
        if args.marks:
            centroids = [c.centroid for c in detail.components.components]
            save_png(render_marked_synapses(overlay, centroids), args.marks)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(global_csv_row(report))
    return EXIT_OK


def cmd_preview(args) -> int:
    red, green, traces, config, _ = _load_analysis_inputs(args)
    detail = run_analysis(red, green, traces, config)
    preview = render_candidates_overlay(red, green, detail.region, detail.candidates)
    save_png(preview, args.out)
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = load_config(args.config)
    report = run_batch(args.dir, cfg)
    Path(args.out).write_text(batch_csv(report), encoding="utf-8")
    for stem, message in report.failures.items():
        print(f"error: group '{stem}' failed: {message}", file=sys.stderr)
    mean = report.mean_synapse_count
    mean_text = "NA" if mean is None else f"{mean:.2f}"
    print(f"{len(report.neurons)} neurons, mean count {mean_text}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .server import create_server  # deferred: keeps non-serve commands light

    try:
        httpd = create_server(host=args.host, port=args.port, static_dir=args.static)
    except OSError as exc:
        if exc.errno in (errno.EADDRINUSE, errno.EACCES):
            print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        raise
    host, port = httpd.server_address[:2]
    print(f"listening on http://{host}:{port}/ (Ctrl-C to stop)", flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return EXIT_OK


_COMMANDS = {
    "analyze": cmd_analyze,
    "preview": cmd_preview,
    "batch": cmd_batch,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # keep the contractually promised error line
        logger.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
