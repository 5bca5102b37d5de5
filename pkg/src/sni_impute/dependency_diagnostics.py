#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Dependency Diagnostics for SNI Impute
Assemble the target x source reliance matrix D from head-mean attention,
compute hubness, and score edge recovery against a known graph.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.metrics import average_precision_score, roc_auc_score

from .error_handler import DataError, ShapeError
from .tabular_core import FeatureSchema

logger = logging.getLogger('dependency_diagnostics')


@dataclass(frozen=True, eq=False)
class DependencyMatrix:
    """d x d reliance, row = target, column = source, zero diagonal."""

    matrix: np.ndarray
    features: Tuple[str, ...] = ()

    def to_frame(self):
        names = list(self.features) or [str(j) for j in range(self.matrix.shape[0])]
        return pd.DataFrame(self.matrix, index=names, columns=names)


@dataclass(frozen=True, eq=False)
class GroundTruthGraph:
    """
    Boolean parent structure with the same orientation as D; optional edge
    weights, per-feature mechanism labels and the exogenous roots.
    """

    adjacency: np.ndarray
    weights: Optional[np.ndarray] = None
    mechanisms: Dict[str, str] = field(default_factory=dict)
    roots: Tuple[int, ...] = ()

    @property
    def out_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=0)

    def parents(self, target: int) -> List[int]:
        return np.flatnonzero(self.adjacency[target]).tolist()


@dataclass(frozen=True)
class RecoveryScores:
    auroc: float
    auprc: float
    precision_at_k: float
    recall_at_k: float
    hub_rho: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "auroc": self.auroc,
            "auprc": self.auprc,
            "precision_at_k": self.precision_at_k,
            "recall_at_k": self.recall_at_k,
            "hub_rho": self.hub_rho,
        }


def build_dependency(attention: Mapping[int, np.ndarray], schema: FeatureSchema) -> DependencyMatrix:
    """
    Row i is the head average of target i's mean attention over its d-1
    sources, spread into a length-d row with D_ii = 0. Targets without a
    model keep an all-zero row.

    Args:
        attention: target index -> H x (d-1) head-mean attention (or objects
            exposing ``attention_means``)
        schema: Feature schema of the table
    """
    d = schema.d
    matrix = np.zeros((d, d))
    for target, means in attention.items():
        means = np.asarray(getattr(means, "attention_means", means), dtype=np.float64)
        if means.ndim == 1:
            means = means[None, :]
        if means.shape[-1] != d - 1:
            raise ShapeError(f"Target {target}: expected {d - 1} source weights, got {means.shape[-1]}")
        sources = [j for j in range(d) if j != target]
        matrix[target, sources] = means.mean(axis=0)
    return DependencyMatrix(matrix, tuple(schema.names))


def hubness(D) -> np.ndarray:
    """Incoming reliance mass per source: column sums of D."""
    matrix = D.matrix if isinstance(D, DependencyMatrix) else np.asarray(D, dtype=np.float64)
    return matrix.sum(axis=0)


def hubness_map(D: DependencyMatrix) -> Dict[str, float]:
    return {name: float(v) for name, v in zip(D.features, hubness(D))}


def edge_list(D: DependencyMatrix, min_weight: float = 0.0) -> List[Dict]:
    """Directed edges source -> target sorted by weight, then target, then source."""
    names = list(D.features) or [str(j) for j in range(D.matrix.shape[0])]
    edges = []
    for i, j in zip(*np.nonzero(D.matrix > min_weight)):
        if i != j:
            edges.append((-float(D.matrix[i, j]), int(i), int(j)))
    edges.sort()
    return [{"target": names[i], "source": names[j], "weight": -w} for w, i, j in edges]


def _top_k_hits(scores: np.ndarray, labels: np.ndarray, k: int) -> int:
    # stable on ties: lower source index first
    order = np.lexsort((np.arange(scores.size), -scores))
    return int(labels[order[:k]].sum())


def score_recovery(D, G: GroundTruthGraph, targets: Optional[Iterable[int]] = None) -> RecoveryScores:
    """
    Macro-averaged ranking scores of D against G plus the hubness rank correlation.

    Args:
        D: DependencyMatrix or d x d array
        G: Ground-truth graph
        targets: Rows to score; defaults to every target. Targets without a
            true parent are always skipped.

    Returns:
        RecoveryScores
    """
    matrix = D.matrix if isinstance(D, DependencyMatrix) else np.asarray(D, dtype=np.float64)
    truth = np.asarray(G.adjacency, dtype=bool)
    if matrix.shape != truth.shape or matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"D shape {matrix.shape} does not match graph shape {truth.shape}")
    d = matrix.shape[0]
    off_diagonal = ~np.eye(d, dtype=bool)
    if not (truth & off_diagonal).any():
        raise DataError("Ground-truth graph has no edges")

    rows = range(d) if targets is None else sorted(set(int(t) for t in targets))
    aurocs, auprcs, precisions, recalls = [], [], [], []
    for i in rows:
        sources = np.flatnonzero(off_diagonal[i])
        labels = truth[i, sources].astype(int)
        scores = matrix[i, sources]
        k = int(labels.sum())
        if k == 0:
            continue
        if k < labels.size:
            aurocs.append(roc_auc_score(labels, scores))
        auprcs.append(average_precision_score(labels, scores))
        hits = _top_k_hits(scores, labels, k)
        precisions.append(hits / k)
        recalls.append(hits / k)

    if not auprcs:
        raise DataError("No scored target has a true parent")

    hub = hubness(matrix)
    degree = truth.sum(axis=0).astype(float)
    if np.ptp(hub) == 0 or np.ptp(degree) == 0:
        hub_rho = 0.0
    else:
        hub_rho = float(stats.spearmanr(hub, degree)[0])

    return RecoveryScores(
        auroc=float(np.mean(aurocs)) if aurocs else float("nan"),
        auprc=float(np.mean(auprcs)),
        precision_at_k=float(np.mean(precisions)),
        recall_at_k=float(np.mean(recalls)),
        hub_rho=hub_rho,
    )
