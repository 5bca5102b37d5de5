#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Evaluation Metrics for SNI Impute
Held-out imputation quality by variable type and rank aggregation across
benchmark settings.
"""

import logging
from typing import Any, Dict, Mapping, Optional

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.metrics import confusion_matrix, f1_score

from .error_handler import DataError, ShapeError
from .tabular_core import MixedTable

logger = logging.getLogger('metrics')

R2_SENTINEL = -1e12

CONTINUOUS_METRICS = ("nrmse", "mae", "mb", "r2", "spearman")
CATEGORICAL_METRICS = ("accuracy", "macro_f1", "kappa")

# True when a larger value is better; mb ranks by absolute bias
METRIC_DIRECTIONS = {
    "nrmse": False,
    "mae": False,
    "mb": False,
    "r2": True,
    "spearman": True,
    "accuracy": True,
    "macro_f1": True,
    "kappa": True,
}


def _paired(truth, pred, dtype) -> tuple:
    truth = np.asarray(truth, dtype=dtype).ravel()
    pred = np.asarray(pred, dtype=dtype).ravel()
    if truth.size == 0:
        raise DataError("Metrics need at least one held-out cell")
    if truth.shape != pred.shape:
        raise ShapeError(f"truth has {truth.size} cells, pred has {pred.size}")
    return truth, pred


def spearman(truth: np.ndarray, pred: np.ndarray) -> float:
    """Rank correlation with average-rank ties; 0 for a constant vector."""
    if truth.size < 2 or np.ptp(truth) == 0 or np.ptp(pred) == 0:
        return 0.0
    return float(stats.spearmanr(truth, pred)[0])


def continuous_metrics(truth, pred, feature_range: float) -> Dict[str, float]:
    """
    Continuous error metrics for one feature.

    Args:
        truth: Held-out true values
        pred: Imputed values for the same cells
        feature_range: Empirical range of the complete truth column

    Returns:
        Dict with nrmse, mae, mb (pred - truth), r2 and spearman
    """
    truth, pred = _paired(truth, pred, np.float64)
    if not feature_range > 0:
        raise DataError(f"Feature range must be positive, got {feature_range}")
    error = pred - truth
    ss_res = float((error ** 2).sum())
    ss_tot = float(((truth - truth.mean()) ** 2).sum())
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 0.0 if ss_res == 0 else R2_SENTINEL
    return {
        "nrmse": float(np.sqrt((error ** 2).mean()) / feature_range),
        "mae": float(np.abs(error).mean()),
        "mb": float(error.mean()),
        "r2": float(r2),
        "spearman": spearman(truth, pred),
    }


def categorical_metrics(truth, pred, n_classes: int) -> Dict[str, float]:
    """Accuracy, macro F1 over the classes present in truth or pred, and Cohen's kappa."""
    truth, pred = _paired(truth, pred, np.int64)
    if truth.min() < 0 or pred.min() < 0 or truth.max() >= n_classes or pred.max() >= n_classes:
        raise DataError(f"Labels must lie in [0, {n_classes})")

    present = np.union1d(truth, pred)
    macro_f1 = f1_score(truth, pred, labels=present, average="macro", zero_division=0)

    confusion = confusion_matrix(truth, pred, labels=np.arange(n_classes)).astype(np.float64)
    total = confusion.sum()
    p_o = np.trace(confusion) / total
    p_e = float((confusion.sum(axis=1) * confusion.sum(axis=0)).sum() / total ** 2)
    kappa = 0.0 if np.isclose(p_e, 1.0, rtol=0, atol=1e-15) else (p_o - p_e) / (1.0 - p_e)

    return {
        "accuracy": float(p_o),
        "macro_f1": float(macro_f1),
        "kappa": float(kappa),
    }


def average_rank(results: pd.DataFrame, higher_is_better: bool) -> pd.Series:
    """
    Mean rank per method across settings (1 = best, ties share the average rank).

    Args:
        results: method x setting table of one metric
        higher_is_better: Direction of the metric
    """
    if results.isna().any().any():
        missing = results.isna().stack()
        raise DataError(f"Rank table has missing cells: {list(missing[missing].index)}")
    ranks = results.rank(axis=0, method="average", ascending=not higher_is_better)
    return ranks.mean(axis=1)


def evaluate_imputation(truth: MixedTable, imputed: MixedTable, held_out: np.ndarray) -> Dict[str, Any]:
    """
    Per-feature metrics over held-out cells plus macro averages by type.

    Args:
        truth: Complete ground-truth table
        imputed: Completed table produced by an imputer
        held_out: n x d boolean array, True where the cell was hidden

    Returns:
        {"features": {name: metrics}, "continuous": macro, "categorical": macro}
    """
    held_out = np.asarray(held_out, dtype=bool)
    if not truth.is_complete or not imputed.is_complete:
        raise DataError("Evaluation needs complete truth and imputed tables")
    if truth.cells.shape != imputed.cells.shape or held_out.shape != truth.cells.shape:
        raise ShapeError("Truth, imputed and held-out shapes differ")

    per_feature: Dict[str, Dict[str, float]] = {}
    by_kind: Dict[str, list] = {"continuous": [], "categorical": []}
    for j, f in enumerate(truth.schema.features):
        rows = held_out[:, j]
        if not rows.any():
            continue
        if f.is_categorical:
            scores = categorical_metrics(truth.cells[rows, j], imputed.cells[rows, j], f.n_categories)
            by_kind["categorical"].append(scores)
        else:
            column = truth.cells[:, j]
            spread = float(column.max() - column.min()) or 1.0
            scores = continuous_metrics(truth.cells[rows, j], imputed.cells[rows, j], spread)
            by_kind["continuous"].append(scores)
        per_feature[f.name] = scores

    return {
        "features": per_feature,
        "continuous": _macro(by_kind["continuous"], CONTINUOUS_METRICS),
        "categorical": _macro(by_kind["categorical"], CATEGORICAL_METRICS),
    }


def _macro(rows, keys) -> Optional[Dict[str, float]]:
    if not rows:
        return None
    return {key: float(np.mean([r[key] for r in rows])) for key in keys}


def flatten_evaluation(evaluation: Mapping[str, Any]) -> Dict[str, float]:
    """Macro averages as flat columns; NaN for a variable type that was not scored."""
    flat = {}
    for key in CONTINUOUS_METRICS:
        block = evaluation.get("continuous")
        flat[key] = block[key] if block else float("nan")
    for key in CATEGORICAL_METRICS:
        block = evaluation.get("categorical")
        flat[key] = block[key] if block else float("nan")
    return flat
