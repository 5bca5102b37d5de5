#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Missingness Injection for SNI Impute
Seeded MCAR, strict-MAR and self-masking MNAR injectors over complete tables.
MAR and MNAR masking probabilities are logistic in a standardized driver with
the intercept solved by bisection so the expected missing rate matches the
request.
"""

import json
import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import bisect
from scipy.special import expit

from .error_handler import ConfigError, DataError
from .tabular_core import MixedTable

logger = logging.getLogger('missingness')

MECHANISMS = ("mcar", "mar", "mnar")
INTERCEPT_BRACKET = (-60.0, 60.0)


@dataclass(frozen=True)
class InjectionSpec:
    mechanism: str
    rate: float
    seed: int = 0
    anchor_features: Tuple[Union[int, str], ...] = ()
    slope: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mechanism", self.mechanism.lower())
        object.__setattr__(self, "anchor_features", tuple(self.anchor_features))
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"Unknown missingness mechanism {self.mechanism!r}; expected one of {MECHANISMS}")
        if not 0 < self.rate < 1:
            raise ConfigError(f"Missing rate must lie in (0, 1), got {self.rate}")
        if self.mechanism == "mar" and not self.anchor_features:
            raise ConfigError("MAR injection needs at least one anchor feature")


class HeldOutCell(NamedTuple):
    row: int
    feature: str
    value: Union[float, str]


def _standardized(values: np.ndarray) -> np.ndarray:
    std = values.std()
    if std < 1e-12:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def driver_scores(t: MixedTable, j: int) -> np.ndarray:
    """
    Standardized driver of feature j: the z-scored value for continuous
    features, the standardized non-modal indicator for categorical ones.
    """
    col = t.cells[:, j]
    if t.schema.features[j].is_categorical:
        counts = np.bincount(col.astype(int), minlength=t.schema.features[j].n_categories)
        return _standardized((col != np.argmax(counts)).astype(np.float64))
    return _standardized(col)


def calibrate_intercept(scores: np.ndarray, rate: float, slope: float = 1.0) -> float:
    """Intercept b with mean(expit(b + slope * scores)) == rate."""
    def gap(b):
        return float(expit(b + slope * scores).mean()) - rate
    return bisect(gap, *INTERCEPT_BRACKET, xtol=1e-12, maxiter=500)


def logistic_probabilities(scores: np.ndarray, rate: float, slope: float = 1.0) -> np.ndarray:
    return expit(calibrate_intercept(scores, rate, slope) + slope * scores)


def inject(t: MixedTable, spec: InjectionSpec) -> Tuple[MixedTable, List[HeldOutCell]]:
    """
    Hide cells of a complete table.

    Args:
        t: Complete table
        spec: Mechanism, rate, seed and anchors (never masked)

    Returns:
        (masked table, held-out truth cells in row-major order)
    """
    if not t.is_complete:
        raise DataError("Missingness is injected into complete tables only")
    anchors = t.schema.resolve(spec.anchor_features)
    rng = np.random.default_rng(spec.seed)
    n, d = t.cells.shape
    hidden = np.zeros((n, d), dtype=bool)

    free = [j for j in range(d) if j not in anchors]
    if spec.mechanism == "mcar":
        draws = rng.random((n, d))
        hidden[:, free] = draws[:, free] < spec.rate
    else:
        for k, j in enumerate(free):
            if spec.mechanism == "mar":
                anchor = anchors[k % len(anchors)]
                scores = driver_scores(t, anchor)
            else:
                scores = driver_scores(t, j)
            probs = logistic_probabilities(scores, spec.rate, spec.slope)
            hidden[:, j] = rng.random(n) < probs

    # keep every column partly observed
    for j in free:
        if n > 0 and hidden[:, j].all():
            hidden[0, j] = False

    masked = t.with_mask(~hidden)
    truth = []
    for i, j in zip(*np.nonzero(hidden)):
        feature = t.schema.features[j]
        value = t.cells[i, j]
        truth.append(HeldOutCell(int(i), feature.name,
                                 feature.categories[int(value)] if feature.is_categorical else float(value)))

    logger.info(f"Injected {spec.mechanism.upper()} at rate {spec.rate}: {int(hidden.sum())} cells hidden "
                f"({hidden[:, free].mean() if free and n else 0.0:.4f} of non-anchor cells)")
    return masked, truth


def truth_to_json(truth: Sequence[HeldOutCell], path: str):
    with open(path, 'w') as f:
        json.dump([cell._asdict() for cell in truth], f, indent=2)
