#!/usr/bin/env python3
"""
Entropy Estimation Tool - Main Application

Command-line driver for reproducible entropy experiments: run a registered
scenario, sweep one parameter, run the oracle self test, or validate a
distance matrix CSV.

Usage:
    python main.py list-scenarios
    python main.py run --scenario map_doubling [--seed N] [--config run.cfg]
    python main.py sweep --scenario dist_full_rank --parameter n_curves --values 8,16,32
    python main.py selftest [--seed N] [--fixture matrix.csv]
    python main.py validate matrix.csv
"""

import argparse
import dataclasses
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import config
import metric_core
from data_models import DistanceFamily, EntropyReport, RunConfig, ScenarioBuild
from estimator import COUNT_KINDS, entropy_estimate, evaluate_claim
from exceptions import (
    ConfigurationError, EntropyToolError, UnknownParameterError, UnknownScenarioError, UsageError,
    create_user_friendly_message, exit_code_for
)
from json_report_generator import JSONReportGenerator
from logger import PerformanceTimer, configure_cli_logging, get_logger, log_exception, log_run_summary, log_user_action
from scenarios import REGISTRY, build_scenario, list_scenarios
from selftest import run_selftest
from utils import coerce_scalar, load_metric_csv, parse_float_list, read_run_config_file

INT_FIELDS = ('seed', 'grid_size', 'n_max', 'n_curves', 'n_segments', 'n_jobs')
FLOAT_FIELDS = ('r_max', 'dt', 'fit_window_fraction')
STRING_FIELDS = ('scenario', 'count_kind', 'output_dir')
COMMANDS = ('list-scenarios', 'run', 'sweep', 'selftest', 'validate')


# =============================================================================
# Run configuration
# =============================================================================

def _typed(key: str, value: Any) -> Any:
    try:
        if key in INT_FIELDS:
            number = float(value)
            if number != int(number):
                raise ValueError(f"expected an integer, got {value!r}")
            return int(number)
        if key in FLOAT_FIELDS:
            return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(key, str(e))
    if key == 'eps_grid':
        return parse_float_list(value, key)
    return str(value)


def run_config_from_mapping(values: Dict[str, Any], base: Optional[RunConfig] = None) -> RunConfig:
    """Apply flat key/value settings (config file or flags) onto a RunConfig."""
    run_config = dataclasses.replace(base) if base else RunConfig()
    run_config.overrides = dict(run_config.overrides)
    for key, value in values.items():
        if value is None:
            continue
        if key.startswith('scenario.'):
            parameter = key.split('.', 1)[1]
            run_config.overrides[parameter] = coerce_scalar(value) if isinstance(value, str) else value
        elif key in INT_FIELDS or key in FLOAT_FIELDS or key in STRING_FIELDS or key == 'eps_grid':
            setattr(run_config, key, _typed(key, value))
        else:
            raise ConfigurationError(key, "unknown configuration key")
    return run_config


def validate_run_config(run_config: RunConfig) -> RunConfig:
    """Field checks; the seed defaults to the scenario's registered seed, never the clock."""
    if not run_config.scenario:
        raise ConfigurationError('scenario', "a scenario name is required")
    if run_config.scenario not in REGISTRY:
        raise UnknownScenarioError(run_config.scenario, sorted(REGISTRY))
    if run_config.seed is None:
        run_config.seed = REGISTRY[run_config.scenario][2]
    if run_config.seed < 0:
        raise ConfigurationError('seed', f"must be a non-negative integer, got {run_config.seed}")
    for name in ('grid_size', 'n_max', 'n_curves', 'n_segments'):
        value = getattr(run_config, name)
        if value is not None and value < 1:
            raise ConfigurationError(name, f"must be positive, got {value}")
    if run_config.r_max is not None and run_config.r_max < 0:
        raise ConfigurationError('r_max', f"must be non-negative, got {run_config.r_max}")
    if run_config.dt is not None and run_config.dt <= 0:
        raise ConfigurationError('dt', f"must be positive, got {run_config.dt}")
    if run_config.eps_grid is not None:
        if not run_config.eps_grid or any(e <= 0 for e in run_config.eps_grid):
            raise ConfigurationError('eps_grid', "must be a non-empty list of positive numbers")
    if not 0.0 < run_config.fit_window_fraction <= 1.0:
        raise ConfigurationError('fit_window_fraction', f"must lie in (0, 1], got {run_config.fit_window_fraction}")
    if run_config.count_kind not in COUNT_KINDS:
        raise ConfigurationError('count_kind', f"expected one of {', '.join(COUNT_KINDS)}")
    if run_config.n_jobs == 0:
        raise ConfigurationError('n_jobs', "must be positive or negative (all cores)")
    return run_config


def command_from_argv(argv: List[str]) -> Tuple[Optional[str], Optional[str]]:
    """Subcommand and --output-dir of an argument list that failed to parse."""
    command = next((token for token in argv if token in COMMANDS), None)
    output_dir = None
    for index, token in enumerate(argv):
        if token == '--output-dir' and index + 1 < len(argv):
            output_dir = argv[index + 1]
        elif token.startswith('--output-dir='):
            output_dir = token.split('=', 1)[1]
    return command, output_dir


def default_output_dir(run_config: RunConfig) -> str:
    return str(Path(config.REPORTS_BASE_DIR) / config.RUNS_DIR / f"{run_config.scenario}_seed{run_config.seed}")


def execute_run(run_config: RunConfig) -> Tuple[ScenarioBuild, Dict[str, DistanceFamily],
                                                Dict[str, EntropyReport], Dict[str, Any]]:
    """Scenario -> families -> EntropyReports -> claim check."""
    logger = get_logger(__name__)
    build = build_scenario(run_config.scenario, run_config.scenario_overrides(), run_config.seed)
    eps_grid = run_config.eps_grid or build.eps_grid
    with PerformanceTimer(logger, "family construction", run_config.scenario):
        families = build.build_families(run_config.n_jobs)
    reports: Dict[str, EntropyReport] = {}
    for name, family in families.items():
        half_builder = build.half_builders.get(name)
        half = half_builder(families, run_config.n_jobs) if half_builder else None
        reports[name] = entropy_estimate(family, eps_grid, run_config.fit_window_fraction,
                                         run_config.count_kind, run_config.n_jobs, half_family=half)
    claim = evaluate_claim(build, families, reports)
    reports[build.primary].claim_check = claim
    return build, families, reports, claim


# =============================================================================
# Application
# =============================================================================

class EntropyArgumentParser(argparse.ArgumentParser):
    """Usage errors become UsageError (exit 3) instead of SystemExit(2)."""

    def error(self, message: str):
        raise UsageError(self.prog, message)


class EntropyApp:
    """Main application class for the entropy estimation tool."""

    def __init__(self):
        self.logger = None
        self.start_time = None
        self.args = None
        self.argv: List[str] = []
        self.output_dir = None

    def setup_logging(self, args):
        """Initialize logging based on user preferences."""
        configure_cli_logging(args.log_level, quiet=args.quiet, debug=args.debug)
        self.logger = get_logger("main")
        log_user_action(self.logger, "Application started", f"command: {args.command}")

    def create_argument_parser(self) -> argparse.ArgumentParser:
        """Create and configure command-line argument parser."""
        parser = EntropyArgumentParser(
            description=config.TOOL_NAME,
            epilog="""
Examples:
  python main.py list-scenarios
  python main.py run --scenario map_doubling
  python main.py run --config experiments/heisenberg.cfg --n-jobs 4
  python main.py sweep --scenario map_doubling --parameter epsilon --values 0.1,0.05,0.02
  python main.py selftest --fixture corrupted.csv
            """,
            formatter_class=argparse.RawDescriptionHelpFormatter
        )
        parser.add_argument('--version', action='version', version=f"{config.TOOL_NAME} v{config.CODE_VERSION}")

        logging_group = parser.add_argument_group('Logging Options')
        logging_group.add_argument('--debug', action='store_true', help='Enable debug logging')
        logging_group.add_argument('--quiet', action='store_true', help='Suppress console output (errors only)')
        logging_group.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                                   default=config.LOG_LEVEL, help='Set logging level')

        commands = parser.add_subparsers(dest='command', metavar='COMMAND')
        commands.required = True

        commands.add_parser('list-scenarios', help='List registered scenarios and their defaults')

        run_parser = commands.add_parser('run', help='Run one scenario and write its reports')
        self._add_run_options(run_parser)

        sweep_parser = commands.add_parser('sweep', help='Run a scenario once per parameter value')
        self._add_run_options(sweep_parser)
        sweep_parser.add_argument('--parameter', required=True,
                                  help=f"One of: {', '.join(config.SWEEPABLE_PARAMETERS)}")
        sweep_parser.add_argument('--values', required=True, help='Comma-separated values')

        selftest_parser = commands.add_parser('selftest', help='Run the brute-force oracle suites')
        selftest_parser.add_argument('--seed', type=int, default=0, help='Seed of the random suites')
        selftest_parser.add_argument('--fixture', metavar='CSV', help='Also validate this distance matrix')

        validate_parser = commands.add_parser('validate', help='Validate a distance matrix CSV')
        validate_parser.add_argument('matrix', help='CSV written by save_metric_csv')
        validate_parser.add_argument('--tol', type=float, default=config.TOL_METRIC, help='Metric tolerance')
        return parser

    def _add_run_options(self, parser: argparse.ArgumentParser):
        parser.add_argument('--config', metavar='FILE', help='Flat key = value run configuration')
        parser.add_argument('--scenario', help='Registered scenario name')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--eps-grid', help='Comma-separated epsilon values')
        parser.add_argument('--grid-size', type=int)
        parser.add_argument('--n-max', type=int)
        parser.add_argument('--r-max', type=float)
        parser.add_argument('--n-curves', type=int)
        parser.add_argument('--n-segments', type=int)
        parser.add_argument('--dt', type=float)
        parser.add_argument('--fit-window-fraction', type=float)
        parser.add_argument('--count-kind', choices=COUNT_KINDS)
        parser.add_argument('--output-dir')
        parser.add_argument('--n-jobs', type=int)
        parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                            help='Scenario parameter override (repeatable)')

    def build_run_config(self, args) -> RunConfig:
        """Config file first, then command-line flags."""
        run_config = RunConfig()
        if args.config:
            run_config = run_config_from_mapping(read_run_config_file(args.config), run_config)
        flags = {
            'scenario': args.scenario, 'seed': args.seed, 'eps_grid': args.eps_grid,
            'grid_size': args.grid_size, 'n_max': args.n_max, 'r_max': args.r_max,
            'n_curves': args.n_curves, 'n_segments': args.n_segments, 'dt': args.dt,
            'fit_window_fraction': args.fit_window_fraction, 'count_kind': args.count_kind,
            'output_dir': args.output_dir, 'n_jobs': args.n_jobs,
        }
        for item in args.set:
            if '=' not in item:
                raise ConfigurationError(item, "expected KEY=VALUE")
            key, value = item.split('=', 1)
            flags[f"scenario.{key.strip()}"] = value.strip()
        return validate_run_config(run_config_from_mapping(flags, run_config))

    # -- output helpers ------------------------------------------------------

    def print_error(self, message: str):
        """Print error message to stderr."""
        print(f"ERROR: {message}", file=sys.stderr)

    def print_success(self, message: str):
        if not self.args.quiet:
            print(f"[OK] {message}")

    def print_line(self, message: str = ""):
        if not self.args.quiet:
            print(message)

    def report_failure(self, error: Exception):
        """errors.json for failed run and sweep commands."""
        if self.args is not None:
            command, requested_dir = self.args.command, getattr(self.args, 'output_dir', None)
        else:
            command, requested_dir = command_from_argv(self.argv)
        if command not in ('run', 'sweep'):
            return
        output_dir = self.output_dir or requested_dir or config.REPORTS_BASE_DIR
        try:
            JSONReportGenerator(output_dir).generate_error_report(error, command)
        except OSError as e:
            if self.logger:
                self.logger.warning(f"Could not write error report: {e}")

    # -- commands --------------------------------------------------------------

    def cmd_list_scenarios(self) -> int:
        for entry in list_scenarios():
            params = ", ".join(f"{k}={v}" for k, v in sorted(entry['parameters'].items()))
            print(f"{entry['name']:<22} seed={entry['seed']:<4} {params}")
        return config.EXIT_OK

    def cmd_run(self) -> int:
        run_config = self.build_run_config(self.args)
        output_dir = run_config.output_dir or default_output_dir(run_config)
        self.output_dir = output_dir
        with PerformanceTimer(self.logger, "scenario run", run_config.scenario):
            build, families, reports, claim = execute_run(run_config)

        extra = {}
        if build.scenario.name == 'submersion_lift':
            extra['count_monotonicity'] = claim['checks'].get('count_monotonicity')
        JSONReportGenerator(output_dir).generate_run_report(build, run_config, reports, claim, extra)

        log_run_summary(self.logger, run_config.scenario,
                        {'estimates': {name: r.h_estimate for name, r in reports.items()}, 'claim': claim})
        for name, report in reports.items():
            self.print_line(f"{name:<24} h_estimate = {report.h_estimate:.4f}")
        if claim['passed'] is None:
            self.print_line("claim check: none (diagnostic scenario)")
        else:
            self.print_line(f"claim check ({claim['kind']}): {'PASS' if claim['passed'] else 'FAIL'}")
        self.print_success(f"Reports written to {output_dir}")
        return config.EXIT_CLAIM_FAILED if claim['passed'] is False else config.EXIT_OK

    def cmd_sweep(self) -> int:
        parameter = self.args.parameter
        if parameter not in config.SWEEPABLE_PARAMETERS:
            raise UnknownParameterError(parameter, config.SWEEPABLE_PARAMETERS)
        values = parse_float_list(self.args.values, 'values')
        if not values:
            raise ConfigurationError('values', "a sweep needs at least one value")
        base = self.build_run_config(self.args)
        output_dir = base.output_dir or str(Path(config.REPORTS_BASE_DIR) / config.SWEEPS_DIR)
        self.output_dir = output_dir

        rows: List[Dict[str, Any]] = []
        for value in values:
            run_config = dataclasses.replace(base, overrides=dict(base.overrides))
            if parameter == 'epsilon':
                run_config.eps_grid = [value]
            else:
                setattr(run_config, parameter, _typed(parameter, value))
            validate_run_config(run_config)
            build, _, reports, claim = execute_run(run_config)
            row = {parameter: value, 'h_estimate': reports[build.primary].h_estimate,
                   'claim_passed': claim['passed']}
            row.update({f"h_{name}": report.h_estimate for name, report in reports.items()})
            rows.append(row)
            self.print_line(f"{parameter}={value:g}: h_estimate = {row['h_estimate']:.4f}")

        path = JSONReportGenerator(output_dir).generate_sweep_csv(base.scenario, parameter, rows)
        self.print_success(f"Sweep table written to {path}")
        return config.EXIT_OK

    def cmd_selftest(self) -> int:
        result = run_selftest(self.args.seed, self.args.fixture)
        for line in result.lines():
            print(line)
        return config.EXIT_OK if result.passed else config.EXIT_CLAIM_FAILED

    def cmd_validate(self) -> int:
        space = load_metric_csv(self.args.matrix, tol=self.args.tol)
        report = metric_core.validate_metric(space, self.args.tol)
        print(f"{self.args.matrix}: n={report.size} mode={report.mode} violations={report.violation_count}")
        for violation in report.violations:
            print(f"  {violation}")
        return config.EXIT_OK if report.ok else config.EXIT_NUMERIC_ERROR

    def run(self, args=None) -> int:
        """Main application execution."""
        try:
            self.argv = list(sys.argv[1:] if args is None else args)
            parser = self.create_argument_parser()
            self.args = parser.parse_args(self.argv)
            self.setup_logging(self.args)
            self.start_time = time.time()

            handlers = {
                'list-scenarios': self.cmd_list_scenarios,
                'run': self.cmd_run,
                'sweep': self.cmd_sweep,
                'selftest': self.cmd_selftest,
                'validate': self.cmd_validate,
            }
            exit_code = handlers[self.args.command]()
            elapsed_time = time.time() - self.start_time
            self.logger.info(f"Command '{self.args.command}' finished with exit code {exit_code} "
                             f"in {elapsed_time:.2f}s")
            return exit_code

        except KeyboardInterrupt:
            self.print_error("Operation cancelled by user")
            if self.logger:
                log_user_action(self.logger, "Operation cancelled", "KeyboardInterrupt")
            return 130  # Standard exit code for Ctrl+C

        except EntropyToolError as e:
            self.print_error(create_user_friendly_message(e))
            if self.logger:
                log_exception(self.logger, "application execution", e)
            self.report_failure(e)
            return exit_code_for(e)

        except Exception as e:
            self.print_error(f"Unexpected error: {e}")
            if self.logger:
                log_exception(self.logger, "application execution", e)
            self.report_failure(e)
            return exit_code_for(e)


def main():
    """Entry point for the application."""
    app = EntropyApp()
    exit_code = app.run()
    sys.exit(exit_code)


if __name__ == "__main__":
    main()
