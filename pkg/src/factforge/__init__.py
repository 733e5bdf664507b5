"""factforge: a World Factbook download -> typed, cleaned, imputed dataset."""

from .cleaning import CleaningReport, MnarManifest, TableCleaner, clean
from .construction import FeatureConstructor, TransformRules, construct
from .encoding import EncodingPlan, LabelOneHotEncoder, one_hot
from .imputation import (
    BenchmarkGrid,
    CascadeImputer,
    ImputationReport,
    ImputerConfig,
    benchmark_thresholds,
    run_cascade,
)
from .naming import ColumnName, format_column_name, parse_column_name
from .parsing import ParseAudit, RawEntityDocument, build_table_v1, ingest_directory
from .pipeline import PipelineConfig, RunReport, report_render, run
from .table import (
    MISSING,
    Cell,
    MissingStats,
    Table,
    binary,
    label,
    number,
    read_snapshot,
    text,
    write_snapshot,
)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkGrid",
    "CascadeImputer",
    "Cell",
    "CleaningReport",
    "ColumnName",
    "EncodingPlan",
    "FeatureConstructor",
    "ImputationReport",
    "ImputerConfig",
    "LabelOneHotEncoder",
    "MISSING",
    "MissingStats",
    "MnarManifest",
    "ParseAudit",
    "PipelineConfig",
    "RawEntityDocument",
    "RunReport",
    "Table",
    "TableCleaner",
    "TransformRules",
    "benchmark_thresholds",
    "binary",
    "build_table_v1",
    "clean",
    "construct",
    "format_column_name",
    "ingest_directory",
    "label",
    "number",
    "one_hot",
    "parse_column_name",
    "read_snapshot",
    "report_render",
    "run",
    "run_cascade",
    "text",
    "write_snapshot",
]
