"""Command-line entry point: ``qikt <subcommand> --config FILE --out DIR``.

Exit codes: 0 every mandatory check passed, 1 a check failed, 2 the
configuration is invalid, 3 a runtime error stopped the run.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from ..errors import ConfigError, MissingArtifact, QiktError
from .config import load_config
from .pipeline import Pipeline
from .plots import emit_plots

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("qikt")

SUBCOMMANDS = {
    "bench": ("closed-form benchmark fields, residuals and temperatures", ("fields", "temperatures")),
    "solve": ("split-step Schrodinger solve with Madelung decomposition", ("fields", "temperatures")),
    "ikt-run": ("kinetic closure, PEM test and particle correspondence", ("kinetic", "pem", "particles")),
    "h-theorem": ("T0 equation and constant-H checks", ("h_theorem",)),
    "verify": ("full verification pipeline", ("fields", "temperatures", "kinetic", "pem", "particles",
                                              "h_theorem")),
    "plots": ("emit plotting scripts for an existing run directory", ()),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="scenario file")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="artifact directory")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override particles.seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    parser = _Parser(prog="qikt", description="Inverse kinetic theory verification harness.",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (help_text, _) in SUBCOMMANDS.items():
        sub.add_parser(name, help=help_text, parents=[common])
    return parser


def _print_report(report) -> None:
    for c in report.checks:
        status = "PASS" if c.passed else ("XFAIL" if not c.mandatory else "FAIL")
        value = "n/a" if c.value is None else f"{c.value:.6g}"
        op = "<" if c.bound == "upper" else ">="
        print(f"{status:5s} {c.name}: {value} ({op} {c.tolerance:.10g}){'  ' + c.note if c.note else ''}")
    print("overall:", "PASS" if report.passed else "FAIL")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    opts = vars(args)
    logging.basicConfig(level=logging.INFO if opts.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(message)s")
    threads = opts.get("threads", 1)
    if threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "plots":
        out = opts.get("out")
        if out is None:
            try:
                out = load_config(opts["config"]).output_dir if "config" in opts else "out"
            except (OSError, ConfigError) as exc:
                print(f"config error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
        try:
            for p in emit_plots(out):
                print(p)
        except MissingArtifact as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_PASS

    if "config" not in opts:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(opts["config"])
        if "seed" in opts:
            if opts["seed"] < 0:
                raise ConfigError("--seed must be >= 0")
            cfg = cfg.with_seed(opts["seed"])
        if "out" in opts:
            cfg = cfg.with_output(opts["out"])
        if args.command == "solve":
            if cfg.grid_dim != 1:
                raise ConfigError("solve runs the 1-D grid solver; set grid.dim = 1")
            cfg = replace(cfg, field_source="solver")
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        key = getattr(exc, "key", None)
        print(f"config error: {exc}" + (f" [{key}]" if key else ""), file=sys.stderr)
        return EXIT_CONFIG

    log.info("scenario %s, config %s, seed %d", cfg.scenario, cfg.config_hash, cfg.seed)
    pipe = Pipeline(cfg, cfg.output_dir, threads)
    try:
        report = pipe.run(SUBCOMMANDS[args.command][1])
    except (QiktError, ValueError, ArithmeticError, OSError) as exc:
        print(f"runtime error in stage {pipe.report.failed_at}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _print_report(report)
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
