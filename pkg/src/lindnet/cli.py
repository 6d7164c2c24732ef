"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 invalid configuration,
3 steady-state run that did not converge (or aborted).
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .experiment import (EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, OutputExistsError, output_root,
                         prepare_directory, run_directory, run_oracle, run_single, run_sweep, with_mode)
from .sr_solver import Backend, Mode

log = logging.getLogger("lindnet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="TOML experiment configuration")
    common.add_argument("--seed", type=int, help="override solver.seed")
    common.add_argument("--backend", choices=[b.value for b in Backend], help="override solver.backend")
    common.add_argument("--out", metavar="DIR", help="output root (default: $LINDNET_OUT or ./runs)")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    common.add_argument("--force", action="store_true", help="overwrite an existing run directory")

    parser = _Parser(prog="lindnet", description="Variational steady states and dynamics of Lindblad models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("steady", "train towards the steady state"),
                       ("dynamics", "track the real-time evolution"),
                       ("oracle", "exact reference values only"),
                       ("sweep", "run every value of the [sweep] section"),
                       ("validate", "check a configuration and exit")):
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")

    try:
        cfg = load_config(args.config)
        cfg = cfg.with_overrides(seed=args.seed, backend=Backend(args.backend) if args.backend else None)
    except OSError as exc:
        print(f"lindnet: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"lindnet: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"lindnet: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.command == "validate":
        print(f"ok: {cfg.model['kind']} model, network {cfg.network['layer_sizes']}, "
              f"{cfg.solver.mode.value} mode, {cfg.solver.backend.value} backend")
        return EXIT_OK
    if args.command == "steady":
        cfg = with_mode(cfg, Mode.STEADY)
    elif args.command == "dynamics":
        cfg = with_mode(cfg, Mode.DYNAMICS)
    if args.command == "sweep" and cfg.sweep is None:
        print("lindnet: sweep needs a [sweep] section", file=sys.stderr)
        return EXIT_VALIDATION
    if args.command in ("steady", "dynamics") and cfg.sweep is not None:
        log.warning("ignoring the [sweep] section; use the sweep command to run it")
        cfg = cfg.__class__(model=cfg.model, network=cfg.network, solver=cfg.solver, output=cfg.output)

    try:
        directory = prepare_directory(run_directory(output_root(args.out, cfg), cfg), args.force)
    except OutputExistsError as exc:
        print(f"lindnet: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "oracle":
            print(run_oracle(cfg, directory))
            return EXIT_OK
        outcome = run_sweep(cfg, directory, args.quiet) if args.command == "sweep" else \
            run_single(cfg, directory, args.quiet)
    except ValueError as exc:
        print(f"lindnet: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(outcome.directory)
    if outcome.exit_code == EXIT_NOT_CONVERGED:
        log.warning("run did not converge; see %s", outcome.directory / "summary.json")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
