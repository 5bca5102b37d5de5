#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Unit tests for the baseline imputers
"""

import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))
from sni_impute.baselines import gower_distances, knn_gower_impute, mean_mode_impute
from sni_impute.error_handler import ConfigError
from sni_impute.tabular_core import CATEGORICAL, CONTINUOUS, FeatureSchema, FeatureSpec, MixedTable


def random_table(rng, n=8):
    schema = FeatureSchema((
        FeatureSpec("x", CONTINUOUS),
        FeatureSpec("c", CATEGORICAL, ("a", "b", "c")),
        FeatureSpec("y", CONTINUOUS),
        FeatureSpec("k", CATEGORICAL, ("u", "v")),
    ))
    cells = np.column_stack([rng.normal(size=n), rng.integers(0, 3, size=n),
                             np.round(rng.normal(size=n), 1), rng.integers(0, 2, size=n)]).astype(float)
    return schema, cells


def brute_gower(t, i, j):
    total, count = 0.0, 0
    for f, spec in enumerate(t.schema.features):
        if not (t.mask[i, f] and t.mask[j, f]):
            continue
        if spec.is_categorical:
            total += 0.0 if t.cells[i, f] == t.cells[j, f] else 1.0
        else:
            observed = t.observed(f)
            spread = observed.max() - observed.min()
            total += abs(t.cells[i, f] - t.cells[j, f]) / spread if spread > 0 else 0.0
        count += 1
    return total / count if count else 1.0


class TestMeanMode(unittest.TestCase):
    """Test cases for mean_mode_impute"""

    def test_mean_fill(self):
        schema = FeatureSchema((FeatureSpec("x", CONTINUOUS),))
        t = MixedTable(schema, np.array([[1.0], [0.0], [3.0]]), np.array([[True], [False], [True]]))
        np.testing.assert_array_equal(mean_mode_impute(t).cells[:, 0], [1.0, 2.0, 3.0])

    def test_complete_table_identity(self):
        schema, cells = random_table(np.random.default_rng(0))
        t = MixedTable(schema, cells, np.ones(cells.shape, dtype=bool))
        np.testing.assert_array_equal(mean_mode_impute(t).cells, cells)


class TestGower(unittest.TestCase):
    """Test cases for gower_distances"""

    def test_hand_example(self):
        schema = FeatureSchema((FeatureSpec("x", CONTINUOUS), FeatureSpec("c", CATEGORICAL, ("a", "b"))))
        t = MixedTable(schema, np.array([[0.0, 0.0], [1.0, 1.0]]), np.ones((2, 2), dtype=bool))
        self.assertEqual(gower_distances(t)[0, 1], 1.0)

    def test_no_shared_features(self):
        schema = FeatureSchema((FeatureSpec("x", CONTINUOUS), FeatureSpec("y", CONTINUOUS)))
        mask = np.array([[True, False], [False, True], [True, True]])
        t = MixedTable(schema, np.array([[0.0, 0.0], [0.0, 1.0], [2.0, 3.0]]), mask)
        self.assertEqual(gower_distances(t)[0, 1], 1.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            schema, cells = random_table(rng)
            mask = rng.random(cells.shape) > 0.25
            mask[0] = True
            mask[1] = True
            t = MixedTable(schema, cells, mask)
            distances = gower_distances(t)
            for i in range(t.n):
                for j in range(t.n):
                    self.assertAlmostEqual(distances[i, j], brute_gower(t, i, j), delta=1e-12)

    def test_properties(self):
        rng = np.random.default_rng(2)
        schema, cells = random_table(rng, n=12)
        t = MixedTable(schema, cells, rng.random(cells.shape) > 0.2)
        distances = gower_distances(t)
        np.testing.assert_array_equal(distances, distances.T)
        self.assertTrue(np.all((distances >= 0) & (distances <= 1)))


class TestKnnGower(unittest.TestCase):
    """Test cases for knn_gower_impute"""

    def test_identical_donor_is_copied(self):
        schema = FeatureSchema((FeatureSpec("x", CONTINUOUS), FeatureSpec("y", CONTINUOUS)))
        cells = np.array([[1.0, 5.0], [1.0, 0.0], [9.0, 2.0]])
        mask = np.array([[True, True], [True, False], [True, True]])
        out = knn_gower_impute(MixedTable(schema, cells, mask), k=1)
        self.assertEqual(out.cells[1, 1], 5.0)

    def test_k_larger_than_donors(self):
        schema = FeatureSchema((FeatureSpec("x", CONTINUOUS), FeatureSpec("y", CONTINUOUS)))
        cells = np.array([[1.0, 4.0], [2.0, 0.0], [3.0, 8.0]])
        mask = np.array([[True, True], [True, False], [True, True]])
        out = knn_gower_impute(MixedTable(schema, cells, mask), k=10)
        self.assertEqual(out.cells[1, 1], 6.0)

    def test_all_donors_give_column_statistic(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            schema, cells = random_table(rng)
            mask = np.ones(cells.shape, dtype=bool)
            row, col = int(rng.integers(8)), int(rng.integers(4))
            mask[row, col] = False
            t = MixedTable(schema, cells, mask)
            out = knn_gower_impute(t, k=t.n - 1)
            donors = np.delete(cells[:, col], row)
            if schema.features[col].is_categorical:
                counts = np.bincount(donors.astype(int), minlength=schema.features[col].n_categories)
                self.assertEqual(out.cells[row, col], float(np.argmax(counts)))
            else:
                self.assertAlmostEqual(out.cells[row, col], donors.mean(), delta=1e-12)

    def test_tie_prefers_lower_row(self):
        schema = FeatureSchema((FeatureSpec("x", CONTINUOUS), FeatureSpec("y", CONTINUOUS)))
        cells = np.array([[0.0, 0.0], [1.0, 10.0], [1.0, 20.0], [2.0, 30.0]])
        mask = np.array([[True, False], [True, True], [True, True], [True, True]])
        # rows 1 and 2 are equally far from row 0
        out = knn_gower_impute(MixedTable(schema, cells, mask), k=1)
        self.assertEqual(out.cells[0, 1], 10.0)

    def test_observed_cells_unchanged(self):
        rng = np.random.default_rng(4)
        schema, cells = random_table(rng, n=15)
        mask = rng.random(cells.shape) > 0.3
        mask[0] = True
        t = MixedTable(schema, cells, mask)
        out = knn_gower_impute(t)
        np.testing.assert_array_equal(out.cells[mask], cells[mask])
        self.assertFalse(np.isnan(out.cells).any())

    def test_invalid_k(self):
        schema, cells = random_table(np.random.default_rng(0))
        with self.assertRaises(ConfigError):
            knn_gower_impute(MixedTable(schema, cells, np.ones(cells.shape, dtype=bool)), k=0)


if __name__ == '__main__':
    unittest.main()
