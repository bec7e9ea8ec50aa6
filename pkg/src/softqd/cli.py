from __future__ import annotations

import argparse
import logging
import sys
from typing import NoReturn, Sequence

from softqd.config.loader import apply_cli_overrides, load_config
from softqd.config.models import RunConfig
from softqd.core.errors import ConfigError, DomainError, SoftQDError
from softqd.engine.orchestrator import SWEEP_PARAMETERS, ExperimentRunner
from softqd.engine.reporting import format_checks_table
from softqd.logging.setup import configure_logging
from softqd.plugins.registry import build_problem

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_PROPERTY_FAILURE = 3


class _UsageParser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _UsageParser(
        prog="softqd", description="Soft QD experiments, sweeps and property checks"
    )
    parser.add_argument("--config", required=True, help="Path to config YAML file")
    parser.add_argument(
        "--seed-override", type=int, default=None, help="Run this single seed instead"
    )
    parser.add_argument("--out", default=None, help="Output directory (overrides runtime.out_dir)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_UsageParser)
    sub.add_parser("run", help="Run the configured algorithm for every seed")
    sweep_p = sub.add_parser("sweep", help="Repeat the run over values of one SQUAD parameter")
    sweep_p.add_argument("--parameter", required=True, choices=sorted(SWEEP_PARAMETERS))
    sweep_p.add_argument("--values", nargs="*", default=[], help="Values to sweep over")
    sub.add_parser("check", help="Run the Soft QD property checks")
    return parser


def build_runner(args: argparse.Namespace) -> ExperimentRunner:
    config: RunConfig = load_config(args.config)
    config = apply_cli_overrides(config, args.seed_override, args.out)
    configure_logging(config.runtime.log_level)
    if args.command != "check":
        try:
            build_problem(config.experiment.domain, **config.domain_options)
        except DomainError as exc:
            raise ConfigError(f"Invalid experiment.domain: {exc}") from exc
    logging.getLogger("CLI").info(
        "Loaded configuration",
        extra={
            "command": args.command,
            "domain": config.experiment.domain,
            "algorithm": config.experiment.algorithm.value,
        },
    )
    return ExperimentRunner(config)


def main(argv: Sequence[str] | None = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    logger = logging.getLogger("CLI")
    code = EXIT_OK
    try:
        runner = build_runner(args)
        if args.command == "run":
            summary = runner.run()
            logger.info("Run finished", extra={"seeds": summary["seeds"]})
        elif args.command == "sweep":
            if not args.values:
                parser.error("sweep needs at least one value in --values")
            path = runner.sweep(args.parameter, args.values)
            logger.info("Sweep finished", extra={"path": str(path)})
        elif args.command == "check":
            reports = runner.check()
            print(format_checks_table(reports))
            failed = [report.name for report in reports if not report.passed]
            if failed:
                logger.error("Property checks failed", extra={"checks": failed})
                code = EXIT_PROPERTY_FAILURE
    except ConfigError as exc:
        logger.error("Fatal error: %s", exc)
        raise SystemExit(EXIT_USAGE) from exc
    except SoftQDError as exc:
        logger.error("Run failed: %s", exc)
        raise SystemExit(EXIT_RUNTIME) from exc
    except Exception as exc:  # noqa: BLE001
        logger.exception("Unhandled error")
        raise SystemExit(EXIT_RUNTIME) from exc
    if code != EXIT_OK:
        raise SystemExit(code)


if __name__ == "__main__":
    main()
