"""Regression machinery behind the imputation cascade.

Models are deliberately small and explicit: ordinary least squares solved
by QR with a hard rank check, ridge in closed form with an unpenalized
intercept, and bagged regression trees via scikit-learn.  All of them
standardize features on training statistics only and remember their
train/test row split, so leakage is checkable after the fact.

Model quality is scored by zero-excluded MAPE: pairs whose actual value is
0 are dropped before averaging, which keeps the metric finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.ensemble import RandomForestRegressor


class AllActualsZeroError(ValueError):
    """Every evaluation pair had actual 0; the model cannot be assessed."""


class ZeroVarianceError(ValueError):
    """Correlation is undefined for a constant vector."""


class SingularSystemError(ValueError):
    """The least-squares system is rank deficient."""


class AllFoldsUnassessableError(ValueError):
    """No grid point could be scored on any fold."""


@dataclass(frozen=True, slots=True)
class ZeroExcludedMape:
    """Mean of |actual - predicted| / |actual| over pairs with actual != 0."""

    value: float
    pairs_used: int
    pairs_dropped_zero: int


def zero_excluded_mape(
    actuals: Sequence[float], predictions: Sequence[float]
) -> ZeroExcludedMape:
    if len(actuals) != len(predictions) or len(actuals) == 0:
        raise ValueError("need equal-length, non-empty vectors")
    total = 0.0
    used = 0
    dropped = 0
    for actual, predicted in zip(actuals, predictions):
        if actual == 0:
            dropped += 1
            continue
        total += abs(actual - predicted) / abs(actual)
        used += 1
    if used == 0:
        raise AllActualsZeroError("all actual values are zero")
    return ZeroExcludedMape(
        value=float(total / used), pairs_used=used, pairs_dropped_zero=dropped
    )


def fractional_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties given the average of their positions."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation; raises ZeroVarianceError when undefined."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise ValueError("need at least 3 paired observations")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0:
        raise ZeroVarianceError("constant vector")
    return float((dx * dy).sum() / denom)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of fractional ranks (ties averaged)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise ValueError("need at least 3 paired observations")
    return pearson(fractional_ranks(x), fractional_ranks(y))


CORRELATIONS = {"pearson": pearson, "spearman": spearman}


@dataclass(frozen=True, slots=True)
class Standardizer:
    """Per-feature (x - mean) / std, with std 0 mapped to scale 1."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale == 0, 1.0, scale)
        return cls(mean=mean, scale=scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


@dataclass
class ModelFit:
    """A fitted model plus everything needed to audit it.

    Coefficients are stored in standardized space; ``raw_coef`` /
    ``raw_intercept`` express the same linear model on unstandardized
    features (None for forests).  ``train_rows`` / ``test_rows`` hold the
    row keys of the 80/20 split the fit was evaluated on.
    """

    family: str
    params: dict
    feature_names: list[str]
    scaler: Standardizer
    coef: np.ndarray | None = None
    intercept: float | None = None
    model: object | None = None  # forest estimator
    importances: np.ndarray | None = None
    train_rows: list[str] = field(default_factory=list)
    test_rows: list[str] = field(default_factory=list)
    mape: ZeroExcludedMape | None = None
    cv_results: list[dict] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        Z = self.scaler.transform(np.asarray(X, dtype=float))
        if self.model is not None:
            return np.asarray(self.model.predict(Z), dtype=float)
        return Z @ self.coef + self.intercept

    @property
    def raw_coef(self) -> np.ndarray | None:
        if self.coef is None:
            return None
        return self.coef / self.scaler.scale

    @property
    def raw_intercept(self) -> float | None:
        if self.coef is None:
            return None
        return float(self.intercept - (self.coef * self.scaler.mean / self.scaler.scale).sum())

    def summary(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "features": self.feature_names,
            "mape": self.mape.value if self.mape else None,
            "pairs_used": self.mape.pairs_used if self.mape else None,
            "n_train": len(self.train_rows),
            "n_test": len(self.test_rows),
        }


def fit_ols(
    X: np.ndarray,
    y: np.ndarray,
    fit_intercept: bool = True,
    feature_names: list[str] | None = None,
) -> ModelFit:
    """Least squares via QR on standardized features.

    Raises SingularSystemError when the design matrix is rank deficient
    (constant or duplicated features, or too few rows).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    design = np.column_stack([np.ones(len(Z)), Z]) if fit_intercept else Z
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise SingularSystemError(
            f"rank-deficient design ({design.shape[0]}x{design.shape[1]})"
        )
    q, r = np.linalg.qr(design)
    beta = np.linalg.solve(r, q.T @ y)
    if fit_intercept:
        intercept, coef = float(beta[0]), beta[1:]
    else:
        intercept, coef = 0.0, beta
    return ModelFit(
        family="ols_single",
        params={"fit_intercept": fit_intercept},
        feature_names=feature_names or [],
        scaler=scaler,
        coef=coef,
        intercept=intercept,
    )


def fit_ridge(
    X: np.ndarray,
    y: np.ndarray,
    alpha: float,
    feature_names: list[str] | None = None,
) -> ModelFit:
    """Closed-form ridge on standardized, centered data.

    Minimizes ||y - Xb||^2 + alpha * ||b||^2 with the intercept left
    unpenalized; always solvable for alpha > 0.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    y_mean = float(y.mean())
    gram = Z.T @ Z + alpha * np.eye(Z.shape[1])
    coef = np.linalg.solve(gram, Z.T @ (y - y_mean))
    return ModelFit(
        family="ridge_multi",
        params={"alpha": alpha},
        feature_names=feature_names or [],
        scaler=scaler,
        coef=coef,
        intercept=y_mean,
    )


DEFAULT_FOREST_PARAMS = {
    "n_estimators": 100,
    "max_depth": None,
    "min_samples_leaf": 1,
    "min_samples_split": 2,
    "max_features": 1.0,
}


def fit_random_forest(
    X: np.ndarray,
    y: np.ndarray,
    params: dict | None = None,
    random_state: int = 0,
    feature_names: list[str] | None = None,
) -> ModelFit:
    """Bagged variance-reduction trees with mean aggregation.

    Per-feature importances are the forest's normalized total impurity
    decrease.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    merged = dict(DEFAULT_FOREST_PARAMS)
    if params:
        merged.update(params)
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    forest = RandomForestRegressor(random_state=random_state, **merged)
    forest.fit(Z, y)
    return ModelFit(
        family="random_forest",
        params={**merged, "random_state": random_state},
        feature_names=feature_names or [],
        scaler=scaler,
        model=forest,
        importances=np.asarray(forest.feature_importances_, dtype=float),
    )


def _kfold_indices(
    n: int, folds: int, rng: np.random.Generator
) -> list[tuple[np.ndarray, np.ndarray]]:
    if folds > n:
        raise ValueError(f"fold count {folds} exceeds usable rows {n}")
    permutation = rng.permutation(n)
    chunks = np.array_split(permutation, folds)
    splits = []
    for i in range(folds):
        validation = chunks[i]
        training = np.concatenate([chunks[j] for j in range(folds) if j != i])
        splits.append((training, validation))
    return splits


def _fit_for(family: str, X, y, params: dict, random_state: int, names) -> ModelFit:
    if family == "ols_single":
        return fit_ols(X, y, feature_names=names, **params)
    if family == "ridge_multi":
        return fit_ridge(X, y, feature_names=names, **params)
    if family == "random_forest":
        return fit_random_forest(
            X, y, params=params, random_state=random_state, feature_names=names
        )
    raise ValueError(f"unknown model family {family!r}")


def grid_search_cv(
    family: str,
    param_grid: list[dict],
    X: np.ndarray,
    y: np.ndarray,
    folds: int = 5,
    seed: int = 0,
    feature_names: list[str] | None = None,
) -> tuple[dict, list[dict]]:
    """Exhaustive grid scored by mean zero-excluded MAPE over K folds.

    Folds a grid point cannot be assessed on (singular fit, all-zero
    actuals) are skipped; a grid point with no assessable folds is skipped
    entirely.  Ties keep the earliest grid point.
    """
    if not param_grid:
        raise ValueError("empty parameter grid")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    splits = _kfold_indices(len(y), folds, rng)
    results = []
    best_params: dict | None = None
    best_score = np.inf
    for params in param_grid:
        scores = []
        for train_idx, val_idx in splits:
            try:
                fit = _fit_for(
                    family, X[train_idx], y[train_idx], params,
                    random_state=seed, names=feature_names,
                )
                fold_mape = zero_excluded_mape(
                    y[val_idx], fit.predict(X[val_idx])
                )
            except (SingularSystemError, AllActualsZeroError):
                continue
            scores.append(fold_mape.value)
        mean_score = float(np.mean(scores)) if scores else None
        results.append(
            {"params": params, "mean_mape": mean_score, "folds_used": len(scores)}
        )
        if mean_score is not None and mean_score < best_score:
            best_score = mean_score
            best_params = params
    if best_params is None:
        raise AllFoldsUnassessableError("no grid point could be scored")
    return best_params, results
