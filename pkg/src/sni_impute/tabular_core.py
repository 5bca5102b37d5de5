#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Tabular Core for SNI Impute
Data model for incomplete mixed-type tables: feature schema, the masked table,
observed-cell standardization statistics, the one-hot/z-score correlation
design, row partitioning and CSV/JSON input and output.
"""

import os
import json
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np
import pandas as pd

from .error_handler import ConfigError, DataError, SchemaError

logger = logging.getLogger('tabular_core')

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
FEATURE_KINDS = (CONTINUOUS, CATEGORICAL)

STD_FLOOR = 1e-8
DEFAULT_MISSING_TOKENS = ("", "NA")
DEFAULT_SPLIT = (0.70, 0.15, 0.15)

_SCHEMA_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "schemas",
                            "table_schema.schema.json")


@dataclass(frozen=True)
class FeatureSpec:
    """One column of a mixed table."""

    name: str
    kind: str
    categories: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise SchemaError(f"Feature {self.name!r} has unknown kind {self.kind!r}")
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if len(set(self.categories)) != len(self.categories):
            raise SchemaError(f"Feature {self.name!r} declares duplicate categories")
        if self.kind == CONTINUOUS and self.categories:
            raise SchemaError(f"Continuous feature {self.name!r} cannot declare categories")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def n_categories(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature list of a table."""

    features: Tuple[FeatureSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("Feature names must be unique")

    @property
    def d(self) -> int:
        return len(self.features)

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.features]

    @property
    def continuous_indices(self) -> List[int]:
        return [j for j, f in enumerate(self.features) if not f.is_categorical]

    @property
    def categorical_indices(self) -> List[int]:
        return [j for j, f in enumerate(self.features) if f.is_categorical]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"Unknown feature {name!r}")

    def resolve(self, features: Iterable) -> List[int]:
        """Map feature names or indices to sorted unique indices."""
        out = set()
        for item in features:
            if isinstance(item, (int, np.integer)):
                if not 0 <= int(item) < self.d:
                    raise SchemaError(f"Feature index {item} out of range")
                out.add(int(item))
            else:
                out.add(self.index(str(item)))
        return sorted(out)

    def with_categories(self, j: int, categories: Sequence[str]) -> "FeatureSchema":
        features = list(self.features)
        features[j] = FeatureSpec(features[j].name, CATEGORICAL, tuple(categories))
        return FeatureSchema(tuple(features))

    def to_dict(self) -> Dict:
        out = []
        for f in self.features:
            entry = {"name": f.name, "kind": f.kind}
            if f.is_categorical:
                entry["categories"] = list(f.categories)
            out.append(entry)
        return {"features": out}

    @classmethod
    def from_dict(cls, doc: Dict) -> "FeatureSchema":
        with open(_SCHEMA_PATH, 'r') as f:
            meta = json.load(f)
        try:
            jsonschema.validate(instance=doc, schema=meta)
        except jsonschema.exceptions.ValidationError as e:
            raise SchemaError(f"Invalid table schema: {e.message}")
        return cls(tuple(FeatureSpec(item["name"], item["kind"], tuple(item.get("categories", ())))
                         for item in doc["features"]))


def load_schema(path: str) -> FeatureSchema:
    if not os.path.exists(path):
        raise SchemaError(f"Schema file not found: {path}", context={"path": path})
    try:
        with open(path, 'r') as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(f"Schema file {path} is not valid JSON: {e}", context={"path": path})
    return FeatureSchema.from_dict(doc)


def save_schema(schema: FeatureSchema, path: str):
    with open(path, 'w') as f:
        json.dump(schema.to_dict(), f, indent=2)


@dataclass(frozen=True, eq=False)
class MixedTable:
    """
    n x d table of continuous values and category indices.

    Cells where ``mask`` is False hold NaN and must not be read. Arrays are
    stored read-only.
    """

    schema: FeatureSchema
    cells: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.float64, copy=True)
        mask = np.array(self.mask, dtype=bool, copy=True)
        if cells.ndim != 2 or cells.shape[1] != self.schema.d:
            raise SchemaError(f"Cells shape {cells.shape} does not match {self.schema.d} features")
        if mask.shape != cells.shape:
            raise SchemaError(f"Mask shape {mask.shape} does not match cells shape {cells.shape}")
        cells[~mask] = np.nan

        for j in self.schema.categorical_indices:
            col = cells[mask[:, j], j]
            k = self.schema.features[j].n_categories
            if col.size and (np.any(col < 0) or np.any(col >= k) or np.any(col != np.round(col))):
                raise DataError(f"Feature {self.schema.features[j].name!r} holds invalid category indices")
        if np.any(~np.isfinite(cells[mask])):
            raise DataError("Observed cells must be finite")

        cells.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "mask", mask)

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    @property
    def d(self) -> int:
        return self.cells.shape[1]

    @property
    def is_complete(self) -> bool:
        return bool(self.mask.all())

    def observed(self, j: int) -> np.ndarray:
        return self.cells[self.mask[:, j], j]

    def with_mask(self, mask: np.ndarray) -> "MixedTable":
        """Same values, hiding every cell where ``mask`` is False."""
        mask = np.asarray(mask, dtype=bool)
        if np.any(mask & ~self.mask):
            raise DataError("Cannot reveal cells that are missing in the source table")
        return MixedTable(self.schema, self.cells, mask)

    def with_cells(self, filled: np.ndarray) -> "MixedTable":
        """Complete table from a filled n x d array."""
        return MixedTable(self.schema, filled, np.ones_like(self.mask))

    def to_frame(self, missing_token: Optional[str] = None) -> pd.DataFrame:
        """Label-decoded DataFrame; missing cells become ``missing_token`` or None."""
        columns = {}
        for j, f in enumerate(self.schema.features):
            col = self.cells[:, j]
            obs = self.mask[:, j]
            if f.is_categorical:
                values = [f.categories[int(v)] if o else missing_token for v, o in zip(col, obs)]
            else:
                values = [repr(float(v)) if o else missing_token for v, o in zip(col, obs)]
            columns[f.name] = values
        return pd.DataFrame(columns, columns=self.schema.names)


@dataclass(frozen=True)
class StandardizerStats:
    """
    Per-feature statistics from observed cells. Entries for categorical
    features are NaN.
    """

    mean: np.ndarray
    std: np.ndarray
    observed_min: np.ndarray
    observed_max: np.ndarray
    degenerate: np.ndarray

    def standardize(self, values: np.ndarray, j: int) -> np.ndarray:
        if self.degenerate[j]:
            return np.zeros_like(np.asarray(values, dtype=np.float64))
        return (np.asarray(values, dtype=np.float64) - self.mean[j]) / self.std[j]

    def destandardize(self, values: np.ndarray, j: int) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std[j] + self.mean[j]


def compute_stats(t: MixedTable) -> StandardizerStats:
    d = t.d
    mean = np.full(d, np.nan)
    std = np.full(d, np.nan)
    lo = np.full(d, np.nan)
    hi = np.full(d, np.nan)
    degenerate = np.zeros(d, dtype=bool)
    for j in t.schema.continuous_indices:
        col = t.observed(j)
        if col.size == 0:
            continue
        mean[j] = col.mean()
        raw_std = col.std(ddof=1) if col.size > 1 else 0.0
        degenerate[j] = raw_std < STD_FLOOR
        std[j] = max(raw_std, STD_FLOOR)
        lo[j] = col.min()
        hi[j] = col.max()
    return StandardizerStats(mean, std, lo, hi, degenerate)


@dataclass(frozen=True, eq=False)
class CorrelationDesign:
    """Expanded n x d~ numeric design with the column group of every feature."""

    matrix: np.ndarray
    column_groups: Tuple[np.ndarray, ...]

    @property
    def width(self) -> int:
        return self.matrix.shape[1]

    def columns_excluding(self, f: int) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        Design columns of every feature except ``f``.

        Returns:
            Column indices into ``matrix`` and, per remaining feature in order,
            the positions of its columns within that selection
        """
        cols = []
        groups = []
        offset = 0
        for j, group in enumerate(self.column_groups):
            if j == f:
                continue
            cols.append(group)
            groups.append(np.arange(offset, offset + len(group)))
            offset += len(group)
        return np.concatenate(cols) if cols else np.zeros(0, dtype=int), groups


def build_correlation_design(t: MixedTable, filled: np.ndarray,
                             stats: Optional[StandardizerStats] = None) -> CorrelationDesign:
    """
    Standardize continuous columns and one-hot encode categorical ones.

    Args:
        t: Incomplete table providing the schema and observed-cell statistics
        filled: Completed n x d values (no NaN)
        stats: Precomputed statistics of ``t``

    Returns:
        CorrelationDesign
    """
    filled = np.asarray(filled, dtype=np.float64)
    if filled.shape != t.cells.shape:
        raise DataError(f"Filled values shape {filled.shape} does not match table {t.cells.shape}")
    if np.isnan(filled).any():
        raise DataError("Correlation design needs a completed table")
    stats = stats or compute_stats(t)

    blocks = []
    groups = []
    offset = 0
    for j, f in enumerate(t.schema.features):
        if f.is_categorical:
            k = f.n_categories
            block = np.zeros((t.n, k))
            block[np.arange(t.n), filled[:, j].astype(int)] = 1.0
        else:
            block = stats.standardize(filled[:, j], j)[:, None]
        blocks.append(block)
        groups.append(np.arange(offset, offset + block.shape[1]))
        offset += block.shape[1]

    matrix = np.hstack(blocks) if blocks else np.zeros((t.n, 0))
    return CorrelationDesign(matrix, tuple(groups))


@dataclass(frozen=True, eq=False)
class Partition:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def partition_rows(n: int, fractions: Sequence[float] = DEFAULT_SPLIT, seed: int = 0) -> Partition:
    """
    Shuffle rows under ``seed`` and cut them into train/validation/test.

    Args:
        n: Row count (at least 3)
        fractions: Positive fractions summing to 1
        seed: Shuffle seed

    Returns:
        Partition with sorted, disjoint index arrays covering all rows
    """
    fractions = tuple(float(x) for x in fractions)
    if len(fractions) != 3 or any(x <= 0 for x in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"Partition fractions must be three positive values summing to 1, got {fractions}")
    if n < 3:
        raise DataError(f"Cannot partition {n} rows into train/validation/test")

    sizes = [_round_half_up(n * fractions[0]), _round_half_up(n * fractions[1])]
    sizes.append(n - sum(sizes))
    # every set keeps at least one row
    while min(sizes) < 1:
        low = int(np.argmin(sizes))
        high = int(np.argmax(sizes))
        sizes[low] += 1
        sizes[high] -= 1

    perm = np.random.default_rng(seed).permutation(n)
    a, b = sizes[0], sizes[0] + sizes[1]
    return Partition(np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:]))


def clip_to_observed_range(values: np.ndarray, stats: StandardizerStats,
                           feature: Optional[int] = None) -> np.ndarray:
    """
    Clamp values to the observed range.

    Args:
        values: Values of one feature, or a full n x d array when ``feature`` is None
        stats: Observed-cell statistics
        feature: Feature index of ``values``

    Returns:
        Clipped copy; categorical columns of a full array are left as is
    """
    values = np.array(values, dtype=np.float64, copy=True)
    if feature is not None:
        return np.clip(values, stats.observed_min[feature], stats.observed_max[feature])
    for j in range(values.shape[1]):
        if not np.isnan(stats.observed_min[j]):
            values[:, j] = np.clip(values[:, j], stats.observed_min[j], stats.observed_max[j])
    return values


def load_csv(path: str, schema: FeatureSchema,
             missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS) -> MixedTable:
    """
    Parse a CSV file with a header row into a MixedTable.

    Args:
        path: CSV file
        schema: Feature schema; categorical features without declared
            categories intern labels in first-seen order
        missing_tokens: Cell texts treated as missing

    Returns:
        MixedTable whose schema carries the final category lists
    """
    if isinstance(missing_tokens, str):
        missing_tokens = (missing_tokens,)
    missing_tokens = set(missing_tokens)
    if not os.path.exists(path):
        raise DataError(f"Data file not found: {path}", context={"path": path})

    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False,
                         skipinitialspace=False)
    except pd.errors.EmptyDataError:
        raise DataError(f"Data file {path} has no header row", context={"path": path})
    except pd.errors.ParserError as e:
        raise DataError(f"Malformed row in {path}: {e}", context={"path": path})

    header = [str(c) for c in df.columns]
    if sorted(header) != sorted(schema.names) or len(header) != schema.d:
        raise SchemaError(f"Header {header} does not match schema features {schema.names}",
                          context={"path": path})
    df = df[schema.names]

    # na_filter is off, so NaN only appears where a row was short
    short = df.isna().any(axis=1).to_numpy()
    if short.any():
        line = int(np.flatnonzero(short)[0]) + 2
        raise DataError(f"Malformed row length at line {line} of {path}",
                        context={"path": path, "line": line})

    n = len(df)
    cells = np.full((n, schema.d), np.nan)
    mask = np.ones((n, schema.d), dtype=bool)
    for j, f in enumerate(schema.features):
        raw = df[f.name].to_numpy(dtype=object)
        missing = np.array([v in missing_tokens for v in raw], dtype=bool)
        mask[:, j] = ~missing

        if not f.is_categorical:
            parsed = pd.to_numeric(pd.Series(raw[~missing]), errors="coerce").to_numpy(dtype=np.float64)
            bad = ~np.isfinite(parsed)
            if bad.any():
                row = int(np.flatnonzero(~missing)[np.flatnonzero(bad)[0]])
                raise DataError(f"Unparseable numeric value {raw[row]!r} at row {row + 1}, column {f.name!r}",
                                context={"row": row + 1, "column": f.name})
            cells[~missing, j] = parsed
            continue

        labels = [str(v) for v in raw[~missing]]
        if f.categories:
            lookup = {c: k for k, c in enumerate(f.categories)}
            for pos, label in enumerate(labels):
                if label not in lookup:
                    row = int(np.flatnonzero(~missing)[pos])
                    raise DataError(f"Unknown category {label!r} at row {row + 1}, column {f.name!r}",
                                    context={"row": row + 1, "column": f.name})
        else:
            interned = list(pd.unique(pd.Series(labels, dtype=object)))
            schema = schema.with_categories(j, interned)
            lookup = {c: k for k, c in enumerate(interned)}
        cells[~missing, j] = [lookup[label] for label in labels]

    if n > 0:
        for j in schema.categorical_indices:
            if schema.features[j].n_categories < 2:
                raise SchemaError(f"Categorical feature {schema.features[j].name!r} needs at least 2 categories")

    logger.info(f"Loaded {n} rows x {schema.d} features from {path} "
                f"({int((~mask).sum())} missing cells)")
    return MixedTable(schema, cells, mask)


def write_csv(t: MixedTable, path: str, missing_token: str = "NA"):
    """Write a table; floats use the shortest round-trip representation."""
    t.to_frame(missing_token=missing_token).to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {t.n} rows to {path}")
