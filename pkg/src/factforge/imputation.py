"""Missing-value imputation cascade: v4 -> v5.

Three stages run in cost order — single-feature least squares, ridge on a
correlation-thresholded feature set, then random forest on
importance-selected features.  Every stage processes each still-missing
numeric column with 10 independent runs (fresh 80/20 splits, 5-fold
grid-search CV on the training side) and keeps the best run by held-out
zero-excluded MAPE.  Only columns whose best run beats the 15% gate are
filled, from the winning model; after a pass over all columns the newly
completed ones join the candidate feature pool and the stage repeats until
a pass fills nothing.

Filled columns are finally renamed with their achieved MAPE percentage.
All randomness comes from one master seed fanned out per stage, column and
run, so identical inputs give identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .regression import (
    CORRELATIONS,
    AllActualsZeroError,
    AllFoldsUnassessableError,
    ModelFit,
    SingularSystemError,
    ZeroVarianceError,
    fit_ols,
    fit_random_forest,
    fit_ridge,
    grid_search_cv,
    zero_excluded_mape,
)
from .table import Table, number
from .validation import check_table

logger = logging.getLogger(__name__)

STAGE_SINGLE = "single_linear"
STAGE_RIDGE = "ridge"
STAGE_FOREST = "forest"
ALL_STAGES = (STAGE_SINGLE, STAGE_RIDGE, STAGE_FOREST)

FEATURE_DTYPES = frozenset({"num", "sum", "amount", "enc"})
TARGET_DTYPES = frozenset({"num", "sum", "amount"})


class NoCompleteColumnsError(ValueError):
    pass


class EmptySelectionError(ValueError):
    pass


def derived_seed(master: int, *parts: str) -> int:
    """Stable per-(stage, column, run) seed fan-out from the master seed."""
    key = "|".join([str(master), *parts]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "big")


@dataclass(frozen=True)
class ImputerConfig:
    mape_threshold: float = 0.15
    runs: int = 10
    cv_folds: int = 5
    ridge_threshold: float = 0.4
    correlation: str = "pearson"
    ridge_alphas: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    forest_params: dict | None = None
    min_rows: int = 10  # must cover 5 folds with at least 2 rows each
    seed: int = 0


def complete_feature_names(table: Table, exclude: tuple[str, ...] = ()) -> list[str]:
    """Numeric-like columns with zero Missing cells, in table order."""
    names = []
    for name, cells in table.iter_columns():
        if name.reserved or name.dtype not in FEATURE_DTYPES:
            continue
        formatted = name.formatted()
        if formatted in exclude:
            continue
        if any(cell.is_missing for cell in cells):
            continue
        names.append(formatted)
    return names


def imputable_targets(table: Table, min_rows: int) -> list[str]:
    targets = []
    for name, cells in table.iter_columns():
        if name.reserved or name.dtype not in TARGET_DTYPES:
            continue
        missing = sum(1 for cell in cells if cell.is_missing)
        observed = len(cells) - missing
        if missing > 0 and observed >= min_rows:
            targets.append(name.formatted())
    return targets


def _resolve_method(method):
    if callable(method):
        return method
    try:
        return CORRELATIONS[method]
    except KeyError:
        raise ValueError(f"unknown correlation method {method!r}") from None


def _abs_correlation(x: np.ndarray, y: np.ndarray, method) -> float:
    """Strength of association; undefined coefficients count as 0."""
    try:
        return abs(method(x, y))
    except ZeroVarianceError:
        return 0.0


def select_feature_single(table: Table, target: str, method="pearson") -> str:
    """The complete column most correlated with the target (ties keep
    table order)."""
    method = _resolve_method(method)
    candidates = complete_feature_names(table, exclude=(target,))
    if not candidates:
        raise NoCompleteColumnsError(f"no complete feature columns for {target!r}")
    y = table.numeric_values(target)
    mask = ~np.isnan(y)
    best_name: str | None = None
    best_strength = -1.0
    for candidate in candidates:
        x = table.numeric_values(candidate)[mask]
        strength = _abs_correlation(x, y[mask], method)
        if strength > best_strength:
            best_name, best_strength = candidate, strength
    return best_name


def select_features_threshold(
    table: Table, target: str, threshold: float, method="pearson"
) -> list[str]:
    """All complete columns with |coefficient| >= threshold (inclusive)."""
    method = _resolve_method(method)
    candidates = complete_feature_names(table, exclude=(target,))
    if not candidates:
        raise NoCompleteColumnsError(f"no complete feature columns for {target!r}")
    y = table.numeric_values(target)
    mask = ~np.isnan(y)
    selected = [
        candidate
        for candidate in candidates
        if _abs_correlation(table.numeric_values(candidate)[mask], y[mask], method)
        >= threshold
    ]
    if not selected:
        raise EmptySelectionError(f"no feature clears threshold {threshold}")
    return selected


def _matrix(table: Table, names: list[str]) -> np.ndarray:
    return np.column_stack([table.numeric_values(name) for name in names])


@dataclass
class ColumnImputation:
    column: str
    stage: str
    pass_number: int
    runs: list[dict] = field(default_factory=list)
    best: dict | None = None
    accepted: bool = False
    cells_filled: int = 0
    reason: str | None = None

    def as_dict(self) -> dict:
        return {
            "column": self.column,
            "stage": self.stage,
            "pass": self.pass_number,
            "runs": self.runs,
            "best": self.best,
            "accepted": self.accepted,
            "cells_filled": self.cells_filled,
            "reason": self.reason,
        }


@dataclass
class StageReport:
    stage: str
    attempts: list[ColumnImputation] = field(default_factory=list)
    successful_columns: list[str] = field(default_factory=list)
    cells_filled: int = 0
    missing_before: int = 0
    missing_after: int = 0
    initial_missing: int = 0

    @property
    def reduction_vs_stage_entry(self) -> float:
        if self.missing_before == 0:
            return 0.0
        return (self.missing_before - self.missing_after) / self.missing_before

    @property
    def reduction_vs_initial(self) -> float:
        if self.initial_missing == 0:
            return 0.0
        return (self.missing_before - self.missing_after) / self.initial_missing

    def as_dict(self) -> dict:
        return {
            "stage": self.stage,
            "successful_columns": self.successful_columns,
            "cells_filled": self.cells_filled,
            "missing_before": self.missing_before,
            "missing_after": self.missing_after,
            "reduction_vs_stage_entry": self.reduction_vs_stage_entry,
            "reduction_vs_initial": self.reduction_vs_initial,
            "attempts": [attempt.as_dict() for attempt in self.attempts],
        }


@dataclass
class ImputationReport:
    stages: list[StageReport] = field(default_factory=list)
    # accepted column -> (stage, held-out MAPE fraction, cells filled)
    accepted: dict[str, tuple[str, float, int]] = field(default_factory=dict)
    model_fits: list[ModelFit] = field(default_factory=list)  # audit only

    def as_dict(self) -> dict:
        return {
            "stages": [stage.as_dict() for stage in self.stages],
            "accepted": {
                column: {"stage": stage, "mape": mape, "cells_filled": cells}
                for column, (stage, mape, cells) in self.accepted.items()
            },
        }

    def write(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.as_dict(), handle, indent=2, ensure_ascii=False)
            handle.write("\n")


def _split_rows(
    observed_idx: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    permutation = rng.permutation(len(observed_idx))
    n_test = max(1, round(0.2 * len(observed_idx)))
    test = observed_idx[permutation[:n_test]]
    train = observed_idx[permutation[n_test:]]
    return train, test


def _select_by_importance(importances: np.ndarray, names: list[str]) -> list[str]:
    """Keep features whose importance reaches the mean importance."""
    cutoff = importances.mean()
    selected = [name for name, imp in zip(names, importances) if imp >= cutoff]
    return selected or [names[int(np.argmax(importances))]]


def _run_once(
    table: Table,
    target: str,
    stage: str,
    cfg: ImputerConfig,
    run: int,
    report: ImputationReport,
) -> tuple[ModelFit | None, dict]:
    """One independent run: select features, split 80/20, tune on the
    training side, evaluate on the held-out side."""
    seed = derived_seed(cfg.seed, stage, target, f"run{run}")
    rng = np.random.default_rng(seed)
    entry: dict = {"run": run, "seed": seed}

    try:
        if stage == STAGE_SINGLE:
            features = [select_feature_single(table, target, cfg.correlation)]
        elif stage == STAGE_RIDGE:
            features = select_features_threshold(
                table, target, cfg.ridge_threshold, cfg.correlation
            )
        else:
            features = complete_feature_names(table, exclude=(target,))
            if not features:
                raise NoCompleteColumnsError(target)
    except (NoCompleteColumnsError, EmptySelectionError) as exc:
        entry["error"] = f"{type(exc).__name__}"
        return None, entry

    y = table.numeric_values(target)
    observed_idx = np.flatnonzero(~np.isnan(y))
    train_idx, test_idx = _split_rows(observed_idx, rng)
    X = _matrix(table, features)

    try:
        if stage == STAGE_SINGLE:
            grid = [{"fit_intercept": True}, {"fit_intercept": False}]
            best_params, cv_results = grid_search_cv(
                "ols_single", grid, X[train_idx], y[train_idx],
                folds=cfg.cv_folds, seed=seed, feature_names=features,
            )
            fit = fit_ols(
                X[train_idx], y[train_idx], feature_names=features, **best_params
            )
        elif stage == STAGE_RIDGE:
            grid = [{"alpha": alpha} for alpha in cfg.ridge_alphas]
            best_params, cv_results = grid_search_cv(
                "ridge_multi", grid, X[train_idx], y[train_idx],
                folds=cfg.cv_folds, seed=seed, feature_names=features,
            )
            fit = fit_ridge(
                X[train_idx], y[train_idx], feature_names=features, **best_params
            )
        else:
            preliminary = fit_random_forest(
                X[train_idx], y[train_idx],
                params=cfg.forest_params, random_state=seed, feature_names=features,
            )
            preliminary.train_rows = [table.row_index[i] for i in train_idx]
            report.model_fits.append(preliminary)
            features = _select_by_importance(preliminary.importances, features)
            X = _matrix(table, features)
            cv_results = []
            fit = fit_random_forest(
                X[train_idx], y[train_idx],
                params=cfg.forest_params, random_state=seed, feature_names=features,
            )
        predictions = fit.predict(X[test_idx])
        if not np.all(np.isfinite(predictions)):
            raise ValueError("non-finite predictions")
        mape = zero_excluded_mape(y[test_idx], predictions)
    except (
        SingularSystemError,
        AllActualsZeroError,
        AllFoldsUnassessableError,
        ValueError,
    ) as exc:
        entry["error"] = f"{type(exc).__name__}: {exc}"
        return None, entry

    fit.train_rows = [table.row_index[i] for i in train_idx]
    fit.test_rows = [table.row_index[i] for i in test_idx]
    fit.mape = mape
    fit.cv_results = cv_results
    report.model_fits.append(fit)
    entry.update(
        {
            "features": features,
            "params": fit.params,
            "mape": mape.value,
            "n_train": len(train_idx),
            "n_test": len(test_idx),
        }
    )
    return fit, entry


def run_stage(
    table: Table, stage: str, cfg: ImputerConfig, report: ImputationReport
) -> tuple[Table, StageReport]:
    """Run one cascade stage to fixpoint (passes stop when nothing fills)."""
    stage_report = StageReport(
        stage=stage,
        missing_before=table.missing_stats().empty_cells,
        initial_missing=report.stages[0].missing_before
        if report.stages
        else table.missing_stats().empty_cells,
    )
    pass_number = 0
    while True:
        pass_number += 1
        fills: dict[str, dict] = {}
        for target in imputable_targets(table, cfg.min_rows):
            if target in report.accepted:
                continue
            attempt = ColumnImputation(
                column=target, stage=stage, pass_number=pass_number
            )
            best_fit: ModelFit | None = None
            for run in range(cfg.runs):
                fit, entry = _run_once(table, target, stage, cfg, run, report)
                attempt.runs.append(entry)
                if fit is not None and (
                    best_fit is None or fit.mape.value < best_fit.mape.value
                ):
                    best_fit = fit
            if best_fit is None:
                attempt.reason = "no assessable run"
            else:
                attempt.best = best_fit.summary()
                if best_fit.mape.value < cfg.mape_threshold:
                    attempt.accepted = True
                    y = table.numeric_values(target)
                    missing_idx = np.flatnonzero(np.isnan(y))
                    X = _matrix(table, best_fit.feature_names)
                    predicted = best_fit.predict(X[missing_idx])
                    if np.all(np.isfinite(predicted)):
                        attempt.cells_filled = len(missing_idx)
                        fills[target] = {
                            "cells": {
                                table.row_index[i]: number(value)
                                for i, value in zip(missing_idx, predicted)
                            },
                            "mape": best_fit.mape.value,
                        }
                    else:
                        attempt.accepted = False
                        attempt.reason = "non-finite fill predictions"
                else:
                    attempt.reason = (
                        f"best MAPE {best_fit.mape.value:.4f} over the "
                        f"{cfg.mape_threshold:.2f} gate"
                    )
            stage_report.attempts.append(attempt)
        if not fills:
            break
        # fills land at pass end so intra-pass results are order-independent
        for target, fill in fills.items():
            table = table.with_cells(target, fill["cells"])
            report.accepted[target] = (stage, fill["mape"], len(fill["cells"]))
            stage_report.successful_columns.append(target)
            stage_report.cells_filled += len(fill["cells"])
    stage_report.missing_after = table.missing_stats().empty_cells
    return table, stage_report


def impute_stage_single_linear(
    table: Table, cfg: ImputerConfig | None = None
) -> tuple[Table, StageReport]:
    cfg = cfg or ImputerConfig()
    report = ImputationReport()
    out, stage_report = run_stage(table, STAGE_SINGLE, cfg, report)
    report.stages.append(stage_report)
    return out, stage_report


def impute_stage_ridge(
    table: Table,
    threshold: float = 0.4,
    method: str = "pearson",
    cfg: ImputerConfig | None = None,
) -> tuple[Table, StageReport]:
    cfg = replace(cfg or ImputerConfig(), ridge_threshold=threshold, correlation=method)
    report = ImputationReport()
    out, stage_report = run_stage(table, STAGE_RIDGE, cfg, report)
    report.stages.append(stage_report)
    return out, stage_report


def impute_stage_forest(
    table: Table, cfg: ImputerConfig | None = None
) -> tuple[Table, StageReport]:
    cfg = cfg or ImputerConfig()
    report = ImputationReport()
    out, stage_report = run_stage(table, STAGE_FOREST, cfg, report)
    report.stages.append(stage_report)
    return out, stage_report


def rename_filled(table: Table, report: ImputationReport) -> Table:
    """Tag every filled column with its model's MAPE percentage; v5."""
    out = table
    for column, (_, mape_fraction, _) in report.accepted.items():
        name = out.name_of(column)
        out = out.rename_column(column, name.with_mape(mape_fraction * 100))
    return out.with_version("v5")


def run_cascade(
    table: Table, cfg: ImputerConfig, stages: tuple[str, ...] = ALL_STAGES
) -> tuple[Table, ImputationReport]:
    check_table(table)
    report = ImputationReport()
    out = table
    for stage in stages:
        if stage not in ALL_STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        out, stage_report = run_stage(out, stage, cfg, report)
        report.stages.append(stage_report)
        logger.info(
            "%s: %d columns filled (%d cells)",
            stage,
            len(stage_report.successful_columns),
            stage_report.cells_filled,
        )
    return rename_filled(out, report), report


class CascadeImputer(BaseEstimator, TransformerMixin):
    """Estimator facade over the cascade.

    ``fit`` runs the whole cascade on the given table; ``transform``
    returns the imputed v5 for that same table.  The models are bound to
    the table they were fitted on and are not applicable to new rows.
    """

    def __init__(
        self,
        mape_threshold: float = 0.15,
        runs: int = 10,
        cv_folds: int = 5,
        ridge_threshold: float = 0.4,
        correlation: str = "pearson",
        ridge_alphas: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0),
        forest_params: dict | None = None,
        min_rows: int = 10,
        seed: int = 0,
        stages: tuple[str, ...] = ALL_STAGES,
    ):
        self.mape_threshold = mape_threshold
        self.runs = runs
        self.cv_folds = cv_folds
        self.ridge_threshold = ridge_threshold
        self.correlation = correlation
        self.ridge_alphas = ridge_alphas
        self.forest_params = forest_params
        self.min_rows = min_rows
        self.seed = seed
        self.stages = stages

    def _config(self) -> ImputerConfig:
        return ImputerConfig(
            mape_threshold=self.mape_threshold,
            runs=self.runs,
            cv_folds=self.cv_folds,
            ridge_threshold=self.ridge_threshold,
            correlation=self.correlation,
            ridge_alphas=tuple(self.ridge_alphas),
            forest_params=self.forest_params,
            min_rows=self.min_rows,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        check_table(X)
        self._fitted_input = X
        self.result_, self.report_ = run_cascade(
            X, self._config(), tuple(self.stages)
        )
        return self

    def transform(self, X):
        check_table(X)
        if not hasattr(self, "result_"):
            raise ValueError("CascadeImputer is not fitted")
        if X is not self._fitted_input and X != self._fitted_input:
            raise ValueError("imputer is bound to the table it was fitted on")
        return self.result_


@dataclass
class BenchmarkGrid:
    """Cumulative successful-model counts per (method, threshold)."""

    entries: list[dict] = field(default_factory=list)
    baseline_successes: int = 0
    runs: int = 0

    def successes(self, method: str, threshold: float) -> int:
        for entry in self.entries:
            if entry["method"] == method and entry["threshold"] == threshold:
                return entry["successes"]
        raise KeyError((method, threshold))

    def best_threshold(self, method: str) -> tuple[float, int]:
        rows = [e for e in self.entries if e["method"] == method]
        best = max(rows, key=lambda e: (e["successes"], -e["threshold"]))
        return best["threshold"], best["successes"]

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["method", "threshold", "successes"])
            for entry in self.entries:
                writer.writerow(
                    [entry["method"], entry["threshold"], entry["successes"]]
                )
            writer.writerow(["all_complete", "", self.baseline_successes])


def benchmark_thresholds(
    table: Table,
    methods: tuple[str, ...] = ("pearson", "spearman"),
    thresholds: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
    runs: int = 10,
    cfg: ImputerConfig | None = None,
) -> BenchmarkGrid:
    """Ridge success counts per correlation method and threshold.

    Each eligible column is attempted ``runs`` times per grid point; every
    run whose held-out MAPE beats the gate counts one success.  An
    all-complete-columns feature baseline is reported alongside.  No cells
    are modified.
    """
    check_table(table)
    cfg = cfg or ImputerConfig()
    grid = BenchmarkGrid(runs=runs)
    targets = imputable_targets(table, cfg.min_rows)

    def ridge_successes(select, tag: str) -> int:
        successes = 0
        for target in targets:
            y = table.numeric_values(target)
            observed_idx = np.flatnonzero(~np.isnan(y))
            for run in range(runs):
                seed = derived_seed(cfg.seed, "benchmark", tag, target, f"run{run}")
                rng = np.random.default_rng(seed)
                try:
                    features = select(target)
                except (NoCompleteColumnsError, EmptySelectionError):
                    continue
                train_idx, test_idx = _split_rows(observed_idx, rng)
                X = _matrix(table, features)
                try:
                    best_params, _ = grid_search_cv(
                        "ridge_multi",
                        [{"alpha": alpha} for alpha in cfg.ridge_alphas],
                        X[train_idx], y[train_idx],
                        folds=cfg.cv_folds, seed=seed, feature_names=features,
                    )
                    fit = fit_ridge(
                        X[train_idx], y[train_idx],
                        feature_names=features, **best_params,
                    )
                    mape = zero_excluded_mape(y[test_idx], fit.predict(X[test_idx]))
                except (AllFoldsUnassessableError, AllActualsZeroError, ValueError):
                    continue
                if mape.value < cfg.mape_threshold:
                    successes += 1
        return successes

    for method in methods:
        for threshold in thresholds:
            count = ridge_successes(
                lambda target: select_features_threshold(
                    table, target, threshold, method
                ),
                f"{method}@{threshold}",
            )
            grid.entries.append(
                {"method": method, "threshold": threshold, "successes": count}
            )
    grid.baseline_successes = ridge_successes(
        lambda target: complete_feature_names(table, exclude=(target,)),
        "all_complete",
    )
    return grid
