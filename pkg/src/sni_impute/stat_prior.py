#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Statistical Prior for SNI Impute
Pearson association on the correlation design and its collapse into one
simplex-normalized prior vector per target feature.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .error_handler import DataError
from .tabular_core import CorrelationDesign

logger = logging.getLogger('stat_prior')

FISHER_CLAMP = 1.0 - 1e-7
DEGENERATE_STD = 1e-12


@dataclass(frozen=True, eq=False)
class AssociationMatrix:
    sigma: np.ndarray
    fisher_applied: bool = False


@dataclass(frozen=True, eq=False)
class PriorVector:
    """
    Prior over the d-1 source features of ``target``.

    ``sources`` lists the source feature indices in ascending order, aligned
    with ``weights``.
    """

    target: int
    weights: np.ndarray
    sources: tuple

    def full(self, d: int) -> np.ndarray:
        """Length-d row with a zero at the target position."""
        row = np.zeros(d)
        row[list(self.sources)] = self.weights
        return row


def pearson_corr(design: CorrelationDesign, rows: np.ndarray) -> AssociationMatrix:
    """
    Pearson correlation between all design columns over ``rows``.

    Columns with zero variance over the rows correlate 0 with everything
    and 1 with themselves.
    """
    rows = np.asarray(rows, dtype=int)
    if rows.size < 2:
        raise DataError(f"Correlation needs at least 2 rows, got {rows.size}")

    x = design.matrix[rows]
    centered = x - x.mean(axis=0)
    ss = np.einsum('ij,ij->j', centered, centered)
    scale = np.sqrt(ss)
    degenerate = scale / np.sqrt(rows.size) < DEGENERATE_STD

    safe = np.where(degenerate, 1.0, scale)
    sigma = (centered.T @ centered) / np.outer(safe, safe)
    sigma[degenerate, :] = 0.0
    sigma[:, degenerate] = 0.0
    sigma = np.clip(sigma, -1.0, 1.0)
    np.fill_diagonal(sigma, 1.0)
    return AssociationMatrix(sigma, fisher_applied=False)


def fisher_z(sigma: AssociationMatrix) -> AssociationMatrix:
    """Variance-stabilizing atanh of the off-diagonal entries."""
    if sigma.fisher_applied:
        raise DataError("Fisher z-transform already applied")
    z = np.arctanh(np.clip(sigma.sigma, -FISHER_CLAMP, FISHER_CLAMP))
    np.fill_diagonal(z, np.diag(sigma.sigma))
    return AssociationMatrix(z, fisher_applied=True)


def aggregate_prior(sigma: AssociationMatrix, design: CorrelationDesign, target: int) -> PriorVector:
    """
    Mean absolute association between the target's columns and each source's
    columns, normalized onto the simplex (uniform when every score is zero).
    """
    d = len(design.column_groups)
    if d < 2:
        raise DataError("A prior needs at least 2 features")
    if not 0 <= target < d:
        raise DataError(f"Target index {target} out of range for {d} features")

    target_cols = design.column_groups[target]
    abs_sigma = np.abs(sigma.sigma)
    sources = tuple(j for j in range(d) if j != target)
    scores = np.array([abs_sigma[np.ix_(design.column_groups[j], target_cols)].mean() for j in sources])

    total = scores.sum()
    if total > 0:
        weights = scores / total
    else:
        weights = np.full(d - 1, 1.0 / (d - 1))
    return PriorVector(target, weights, sources)


def compute_priors(design: CorrelationDesign, rows: np.ndarray,
                   fisher: bool = False) -> Tuple[AssociationMatrix, Dict[int, PriorVector]]:
    """Association on ``rows`` and the prior vector of every feature."""
    sigma = pearson_corr(design, rows)
    if fisher:
        sigma = fisher_z(sigma)
    priors = {f: aggregate_prior(sigma, design, f) for f in range(len(design.column_groups))}
    return sigma, priors


def prior_matrix(priors: Dict[int, PriorVector], d: int,
                 targets: Optional[List[int]] = None) -> np.ndarray:
    """
    Stack prior vectors into a d x d matrix (row = target, zero diagonal).
    Rows outside ``targets`` stay zero when ``targets`` is given.
    """
    out = np.zeros((d, d))
    for f, prior in priors.items():
        if targets is None or f in targets:
            out[f] = prior.full(d)
    return out
