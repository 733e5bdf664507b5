"""End-to-end pipeline: parse -> clean -> construct -> encode -> impute.

Each stage writes its dataset version (v1.csv ... v5.csv plus schema
sidecars) into the output directory together with its report, so any stage
can later be re-run from the persisted snapshot of its predecessor.  A
consolidated run report records per-version shape and missing-cell stats,
wall times and the effective configuration.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import cleaning, construction, encoding, imputation, parsing
from .table import Table, read_snapshot, write_snapshot

logger = logging.getLogger(__name__)

STAGES = ("parse", "clean", "construct", "encode", "impute")
_STAGE_INPUT = {"parse": None, "clean": "v1", "construct": "v2", "encode": "v3", "impute": "v4"}
_STAGE_OUTPUT = {"parse": "v1", "clean": "v2", "construct": "v3", "encode": "v4", "impute": "v5"}


class ConfigInvalidError(ValueError):
    pass


class StageFailureError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    """Run configuration; the defaults are the reference settings."""

    input_dir: str = ""
    output_dir: str = ""
    droplist_path: str | None = None
    mnar_manifest_path: str | None = None
    transform_rules_path: str | None = None
    sparse_threshold: float = 0.95
    ridge_threshold: float = 0.4
    correlation_method: str = "pearson"
    runs_per_column: int = 10
    cv_folds: int = 5
    acceptance_mape: float = 0.15
    min_rows: int = 10
    seed: int = 0
    stages: tuple[str, ...] = STAGES

    @classmethod
    def from_file(cls, path: Path | str) -> "PipelineConfig":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigInvalidError(f"cannot read config {path}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigInvalidError(f"unknown config keys: {sorted(unknown)}")
        if "stages" in payload:
            payload["stages"] = tuple(payload["stages"])
        return cls(**payload)

    def merged(self, **overrides) -> "PipelineConfig":
        params = {f.name: getattr(self, f.name) for f in fields(self)}
        params.update({k: v for k, v in overrides.items() if v is not None})
        return PipelineConfig(**params)

    def validate(self) -> None:
        if not self.output_dir:
            raise ConfigInvalidError("output_dir is required")
        if "parse" in self.stages and not self.input_dir:
            raise ConfigInvalidError("input_dir is required to parse")
        if not 0 < self.sparse_threshold <= 1:
            raise ConfigInvalidError("sparse_threshold must be in (0, 1]")
        if not 0 < self.acceptance_mape:
            raise ConfigInvalidError("acceptance_mape must be positive")
        if self.correlation_method not in ("pearson", "spearman"):
            raise ConfigInvalidError(
                f"unknown correlation method {self.correlation_method!r}"
            )
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigInvalidError(f"unknown stages: {bad}")

    def as_dict(self) -> dict:
        payload = {f.name: getattr(self, f.name) for f in fields(self)}
        payload["stages"] = list(self.stages)
        return payload

    def imputer_config(self) -> imputation.ImputerConfig:
        return imputation.ImputerConfig(
            mape_threshold=self.acceptance_mape,
            runs=self.runs_per_column,
            cv_folds=self.cv_folds,
            ridge_threshold=self.ridge_threshold,
            correlation=self.correlation_method,
            min_rows=self.min_rows,
            seed=self.seed,
        )


@dataclass
class RunReport:
    config: dict
    stages_run: list[str] = field(default_factory=list)
    versions: dict = field(default_factory=dict)
    timings_s: dict = field(default_factory=dict)
    cleaning: dict | None = None
    imputation: dict | None = None
    artifacts: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "stages_run": self.stages_run,
            "versions": self.versions,
            "timings_s": self.timings_s,
            "cleaning": self.cleaning,
            "imputation": self.imputation,
            "artifacts": self.artifacts,
        }

    def write(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.as_dict(), handle, indent=2, ensure_ascii=False)
            handle.write("\n")


def _version_stats(table: Table) -> dict:
    stats = table.missing_stats()
    return {
        "rows": table.n_rows,
        "columns": table.n_cols,
        "total_cells": stats.total_cells,
        "empty_cells": stats.empty_cells,
        "filled_cells": stats.filled_cells,
    }


def _persist(table: Table, out_dir: Path, version: str, report: RunReport) -> None:
    write_snapshot(table, out_dir / f"{version}.csv")
    report.versions[version] = _version_stats(table)


def _load_input(version: str, out_dir: Path, current: Table | None) -> Table:
    if current is not None and current.version == version:
        return current
    path = out_dir / f"{version}.csv"
    if not path.exists():
        raise StageFailureError(
            f"stage input {version} not in memory and {path} does not exist"
        )
    return read_snapshot(path)


def run(config: PipelineConfig) -> RunReport:
    """Execute the configured stages in order, persisting every version."""
    config.validate()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(config=config.as_dict())
    table: Table | None = None

    requested = [s for s in STAGES if s in config.stages]
    for stage in requested:
        start = time.perf_counter()
        try:
            if stage == "parse":
                audit = parsing.ParseAudit()
                documents = parsing.ingest_directory(config.input_dir, audit)
                table = parsing.build_table_v1(documents, audit)
                audit.write_degraded(out_dir / "parse_audit.jsonl")
                report.artifacts["parse_audit"] = "parse_audit.jsonl"
            elif stage == "clean":
                table = _load_input("v1", out_dir, table)
                droplist = cleaning.load_droplist(config.droplist_path)
                manifest = cleaning.MnarManifest.load(config.mnar_manifest_path)
                table, cleaning_report = cleaning.clean(
                    table,
                    droplist=droplist,
                    manifest=manifest,
                    sparse_threshold=config.sparse_threshold,
                )
                report.cleaning = cleaning_report.as_dict()
                with open(out_dir / "cleaning_report.json", "w", encoding="utf-8") as f:
                    json.dump(report.cleaning, f, indent=2, ensure_ascii=False)
                report.artifacts["cleaning_report"] = "cleaning_report.json"
            elif stage == "construct":
                table = _load_input("v2", out_dir, table)
                rules = construction.load_transform_rules(config.transform_rules_path)
                manifest = cleaning.MnarManifest.load(config.mnar_manifest_path)
                table, audit_entries = construction.construct(
                    table, rules=rules, manifest=manifest
                )
                with open(out_dir / "construct_audit.jsonl", "w", encoding="utf-8") as f:
                    for entry in audit_entries:
                        f.write(json.dumps(entry, ensure_ascii=False) + "\n")
                report.artifacts["construct_audit"] = "construct_audit.jsonl"
            elif stage == "encode":
                table = _load_input("v3", out_dir, table)
                table, plan = encoding.one_hot(table)
                plan.write(out_dir / "encoding_plan.json")
                report.artifacts["encoding_plan"] = "encoding_plan.json"
            else:  # impute
                table = _load_input("v4", out_dir, table)
                table, imputation_report = imputation.run_cascade(
                    table, config.imputer_config()
                )
                report.imputation = imputation_report.as_dict()
                imputation_report.write(out_dir / "imputation_report.json")
                report.artifacts["imputation_report"] = "imputation_report.json"
            _persist(table, out_dir, _STAGE_OUTPUT[stage], report)
        except (ConfigInvalidError, StageFailureError):
            raise
        except Exception as exc:
            raise StageFailureError(f"stage {stage!r} failed: {exc}") from exc
        report.timings_s[stage] = round(time.perf_counter() - start, 3)
        report.stages_run.append(stage)
        logger.info("stage %s done in %.2fs", stage, report.timings_s[stage])

    report.write(out_dir / "run_report.json")
    return report


def report_render(report: RunReport | dict) -> str:
    """Human-readable version table plus imputation totals."""
    payload = report.as_dict() if isinstance(report, RunReport) else report
    lines = []
    lines.append(f"{'version':<8} {'rows':>6} {'columns':>8} {'empty':>10} {'filled':>10}")
    for version in ("v1", "v2", "v3", "v4", "v5"):
        stats = payload.get("versions", {}).get(version)
        if not stats:
            continue
        lines.append(
            f"{version:<8} {stats['rows']:>6} {stats['columns']:>8} "
            f"{stats['empty_cells']:>10} {stats['filled_cells']:>10}"
        )
    imputation_payload = payload.get("imputation")
    if imputation_payload:
        lines.append("")
        lines.append("imputation stages:")
        for stage in imputation_payload.get("stages", []):
            lines.append(
                f"  {stage['stage']:<14} columns filled: "
                f"{len(stage['successful_columns']):>4}   cells filled: "
                f"{stage['cells_filled']:>6}   missing-value reduction: "
                f"{stage['reduction_vs_initial'] * 100:.1f}%"
            )
        total = sum(
            s["cells_filled"] for s in imputation_payload.get("stages", [])
        )
        lines.append(f"  {'total':<14} cells filled: {total}")
    timings = payload.get("timings_s")
    if timings:
        lines.append("")
        lines.append(
            "timings: " + ", ".join(f"{k} {v:.2f}s" for k, v in timings.items())
        )
    return "\n".join(lines)
