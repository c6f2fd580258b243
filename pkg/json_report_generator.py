"""
JSON Report Generator Module

Writes the artifacts of a scenario run: ``manifest.json`` (scenario, seed,
effective parameters), ``report.json`` (one EntropyReport per family plus the
claim check) and one CSV table per family and epsilon. Sweeps get a single
consolidated CSV, failures an ``errors.json``.

Nothing time-dependent is written, so identical runs produce identical files.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

import config
from data_models import EntropyReport, EpsilonSlope, RunConfig, ScenarioBuild
from exceptions import error_payload
from logger import get_logger
from utils import sanitize_filename, to_jsonable, write_json

logger = get_logger(__name__)

CSV_FLOAT_FORMAT = '%.12g'


class JSONReportGenerator:
    """
    Generates the JSON and CSV artifacts of scenario runs.
    """

    def __init__(self, output_dir: str):
        self.output_dir = Path(output_dir)

    def generate_run_report(self, build: ScenarioBuild, run_config: RunConfig,
                            reports: Dict[str, EntropyReport], claim: Optional[Dict[str, Any]],
                            extra: Optional[Dict[str, Any]] = None) -> List[Path]:
        """
        Write manifest, report and per-epsilon tables.

        Args:
            build: The scenario that was run
            run_config: Effective configuration
            reports: EntropyReport per family, keyed by family name
            claim: Result of evaluate_claim
            extra: Further sections for report.json (bracket tables, ...)

        Returns:
            Paths of every file written
        """
        logger.info(f"Writing run report to {self.output_dir}")
        written = [
            write_json(self._build_manifest(build, run_config), self.output_dir / config.MANIFEST_FILENAME),
            write_json(self._build_report(build, run_config, reports, claim, extra),
                       self.output_dir / config.REPORT_FILENAME),
        ]
        for family_name, report in reports.items():
            for index, row in enumerate(report.per_eps):
                written.append(self._write_eps_table(family_name, index, row))
        logger.info(f"Run report complete: {len(written)} file(s)")
        return written

    def _build_manifest(self, build: ScenarioBuild, run_config: RunConfig) -> Dict[str, Any]:
        return {
            'tool': config.TOOL_NAME,
            'code_version': config.CODE_VERSION,
            'scenario': build.scenario.manifest(),
            'config': run_config.to_dict(),
        }

    def _build_report(self, build: ScenarioBuild, run_config: RunConfig, reports: Dict[str, EntropyReport],
                      claim: Optional[Dict[str, Any]], extra: Optional[Dict[str, Any]]) -> Dict[str, Any]:
        data = {
            'code_version': config.CODE_VERSION,
            'config': run_config.to_dict(),
            'scenario': build.scenario.manifest(),
            'primary_family': build.primary,
            'families': {name: report_to_dict(report) for name, report in reports.items()},
            'claim_check': claim,
            'notes': dict(build.notes),
        }
        if extra:
            data.update(extra)
        return data

    def _write_eps_table(self, family_name: str, index: int, row: EpsilonSlope) -> Path:
        filename = config.EPS_TABLE_FILENAME_TEMPLATE.format(family=sanitize_filename(family_name), index=index)
        path = self.output_dir / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        eps_table(row).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        return path

    def generate_sweep_csv(self, scenario: str, parameter: str, rows: List[Dict[str, Any]]) -> Path:
        """Consolidated h_estimate-vs-value table of a sweep."""
        filename = config.SWEEP_FILENAME_TEMPLATE.format(scenario=sanitize_filename(scenario),
                                                         parameter=sanitize_filename(parameter))
        path = self.output_dir / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(rows)
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        logger.info(f"Sweep table written: {path} ({len(frame)} row(s))")
        return path

    def generate_error_report(self, error: Exception, operation: str) -> Path:
        """Machine-readable errors.json for a failed invocation."""
        path = write_json(error_payload(error, operation), self.output_dir / config.ERRORS_FILENAME)
        logger.info(f"Error report written: {path}")
        return path


def eps_table(row: EpsilonSlope) -> pd.DataFrame:
    """Per-epsilon count table: lambda, epsilon, count, ln_count, in_window."""
    return pd.DataFrame({
        'lambda': row.lambdas,
        'epsilon': [row.epsilon] * len(row.lambdas),
        'count': [int(c) for c in row.counts],
        'ln_count': row.ln_counts,
        'in_window': [bool(w) for w in row.in_window],
    })


def report_to_dict(report: EntropyReport) -> Dict[str, Any]:
    return to_jsonable({
        'family': report.family_name,
        'base_kind': report.base_kind,
        'count_kind': report.count_kind,
        'fit_window_fraction': report.fit_window_fraction,
        'eps_grid': report.eps_grid,
        'h_estimate': report.h_estimate,
        'per_eps': [{
            'epsilon': row.epsilon,
            'lambdas': row.lambdas,
            'counts': [int(c) for c in row.counts],
            'ln_counts': row.ln_counts,
            'slope': row.slope,
            'intercept': row.intercept,
            'residual': row.residual,
            'window': list(row.window),
            'saturated': row.saturated,
            'truncated': row.truncated,
        } for row in report.per_eps],
        'diagnostics': report.diagnostics,
    })
