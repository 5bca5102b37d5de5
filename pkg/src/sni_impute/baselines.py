#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Baseline Imputers for SNI Impute
Mean/Mode substitution and k-nearest-neighbour imputation under Gower distance.
"""

import logging

import numpy as np

from .error_handler import ConfigError
from .sni_engine import initialize
from .tabular_core import MixedTable

logger = logging.getLogger('baselines')


def mean_mode_impute(t: MixedTable) -> MixedTable:
    """Observed mean for continuous gaps, lowest-index mode for categorical gaps."""
    return initialize(t)


def gower_distances(t: MixedTable) -> np.ndarray:
    """
    n x n Gower distances averaged over co-observed features.

    Continuous differences are scaled by the observed range (range 0 counts
    as no difference). Pairs sharing no observed feature sit at distance 1.
    """
    n, d = t.cells.shape
    total = np.zeros((n, n))
    shared = np.zeros((n, n))
    for j, f in enumerate(t.schema.features):
        obs = t.mask[:, j]
        both = np.outer(obs, obs)
        col = np.where(obs, t.cells[:, j], 0.0)
        if f.is_categorical:
            diff = (col[:, None] != col[None, :]).astype(np.float64)
        else:
            observed = t.observed(j)
            spread = float(observed.max() - observed.min()) if observed.size else 0.0
            if spread > 0:
                diff = np.abs(col[:, None] - col[None, :]) / spread
            else:
                diff = np.zeros((n, n))
        total += np.where(both, diff, 0.0)
        shared += both

    with np.errstate(invalid="ignore", divide="ignore"):
        distances = np.where(shared > 0, total / np.maximum(shared, 1), 1.0)
    return distances


def knn_gower_impute(t: MixedTable, k: int = 5) -> MixedTable:
    """
    Fill every missing cell from its k nearest donors with that feature observed.

    Args:
        t: Table with missing cells
        k: Neighbour count; fewer donors means all of them are used

    Returns:
        Completed table with observed cells unchanged
    """
    if k < 1:
        raise ConfigError(f"k must be at least 1, got {k}")
    if t.is_complete:
        return t.with_cells(t.cells)

    fallback = initialize(t).cells
    distances = gower_distances(t)
    filled = np.array(t.cells, copy=True)
    index = np.arange(t.n)
    fallbacks = 0

    for i, j in zip(*np.nonzero(~t.mask)):
        donors = np.flatnonzero(t.mask[:, j] & (index != i))
        if donors.size == 0:
            filled[i, j] = fallback[i, j]
            fallbacks += 1
            continue
        # nearest first, lower row index on ties
        order = np.lexsort((donors, distances[i, donors]))
        values = t.cells[donors[order[:k]], j]
        feature = t.schema.features[j]
        if feature.is_categorical:
            filled[i, j] = float(np.argmax(np.bincount(values.astype(int), minlength=feature.n_categories)))
        else:
            filled[i, j] = values.mean()

    if fallbacks:
        logger.warning(f"kNN-Gower fell back to mean/mode for {fallbacks} cells without donors")
    return t.with_cells(filled)
