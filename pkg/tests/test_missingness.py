#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Unit tests for the missingness injection module
"""

import os
import sys
import json
import shutil
import tempfile
import unittest

import numpy as np
from scipy import stats

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))
from sni_impute.error_handler import ConfigError, DataError
from sni_impute.missingness import (InjectionSpec, calibrate_intercept, inject, logistic_probabilities,
                                    truth_to_json)
from sni_impute.tabular_core import CATEGORICAL, CONTINUOUS, FeatureSchema, FeatureSpec, MixedTable


def complete_table(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    anchor = rng.normal(size=n)
    x = 0.5 * anchor + rng.normal(size=n)
    c = rng.integers(0, 3, size=n).astype(float)
    schema = FeatureSchema((
        FeatureSpec("anchor", CONTINUOUS),
        FeatureSpec("x", CONTINUOUS),
        FeatureSpec("c", CATEGORICAL, ("a", "b", "c")),
    ))
    return MixedTable(schema, np.column_stack([anchor, x, c]), np.ones((n, 3), dtype=bool))


class TestInjectionSpec(unittest.TestCase):
    """Test cases for InjectionSpec validation"""

    def test_rate_bounds(self):
        with self.assertRaises(ConfigError):
            InjectionSpec("mcar", 0.0)
        with self.assertRaises(ConfigError):
            InjectionSpec("mcar", 1.0)

    def test_unknown_mechanism(self):
        with self.assertRaises(ConfigError):
            InjectionSpec("random", 0.3)

    def test_mar_needs_anchor(self):
        with self.assertRaises(ConfigError):
            InjectionSpec("mar", 0.3)

    def test_mechanism_case_insensitive(self):
        self.assertEqual(InjectionSpec("MNAR", 0.3).mechanism, "mnar")


class TestCalibration(unittest.TestCase):
    """Test cases for the intercept bisection"""

    def test_expected_rate_matches(self):
        scores = np.random.default_rng(2).normal(size=500)
        for rate in (0.1, 0.3, 0.5):
            self.assertAlmostEqual(float(logistic_probabilities(scores, rate).mean()), rate, places=9)

    def test_zero_scores_give_logit(self):
        b = calibrate_intercept(np.zeros(10), 0.3)
        self.assertAlmostEqual(b, np.log(0.3 / 0.7), places=9)


class TestInject(unittest.TestCase):
    """Test cases for inject"""

    def test_incomplete_input_rejected(self):
        t = complete_table(n=10)
        mask = np.ones((10, 3), dtype=bool)
        mask[0, 1] = False
        with self.assertRaises(DataError):
            inject(t.with_mask(mask), InjectionSpec("mcar", 0.3))

    def test_mcar_rate(self):
        schema = FeatureSchema((FeatureSpec("x", CONTINUOUS),))
        t = MixedTable(schema, np.random.default_rng(0).normal(size=(10000, 1)), np.ones((10000, 1), dtype=bool))
        masked, truth = inject(t, InjectionSpec("mcar", 0.3, seed=1))
        rate = 1.0 - masked.mask.mean()
        self.assertTrue(0.28 <= rate <= 0.32)
        self.assertEqual(len(truth), int((~masked.mask).sum()))

    def test_mcar_independent_of_values(self):
        t = complete_table(n=2000)
        bound = 3.0 / np.sqrt(t.n)
        for seed in range(20):
            masked, _ = inject(t, InjectionSpec("mcar", 0.3, seed=seed))
            hidden = (~masked.mask[:, 1]).astype(float)
            for j in (0, 1, 2):
                rho = np.corrcoef(hidden, t.cells[:, j])[0, 1]
                self.assertLess(abs(rho), bound + 0.02)

    def test_realized_rates(self):
        t = complete_table(n=5000)
        for mechanism, anchors in (("mcar", ()), ("mar", ("anchor",)), ("mnar", ())):
            masked, _ = inject(t, InjectionSpec(mechanism, 0.3, seed=4, anchor_features=anchors))
            for j in (1, 2):
                self.assertAlmostEqual(1.0 - masked.mask[:, j].mean(), 0.3, delta=0.02)

    def test_mar_depends_on_anchor(self):
        t = complete_table(n=2000)
        masked, _ = inject(t, InjectionSpec("mar", 0.3, seed=3, anchor_features=("anchor",)))
        self.assertTrue(masked.mask[:, 0].all())
        hidden = ~masked.mask[:, 1]
        anchor = t.cells[:, 0]
        self.assertGreater(anchor[hidden].mean(), anchor[~hidden].mean())
        t_stat, _ = stats.ttest_ind(anchor[hidden], anchor[~hidden], equal_var=False)
        self.assertGreater(t_stat, 2.0)

    def test_mnar_self_selection(self):
        t = complete_table(n=2000)
        masked, _ = inject(t, InjectionSpec("mnar", 0.3, seed=5))
        hidden = ~masked.mask[:, 1]
        self.assertGreater(t.cells[hidden, 1].mean(), t.cells[:, 1].mean())

    def test_deterministic(self):
        t = complete_table(n=300)
        a, _ = inject(t, InjectionSpec("mnar", 0.3, seed=9))
        b, _ = inject(t, InjectionSpec("mnar", 0.3, seed=9))
        np.testing.assert_array_equal(a.mask, b.mask)

    def test_column_never_fully_masked(self):
        schema = FeatureSchema((FeatureSpec("x", CONTINUOUS), FeatureSpec("y", CONTINUOUS)))
        t = MixedTable(schema, np.ones((2, 2)), np.ones((2, 2), dtype=bool))
        for seed in range(30):
            masked, _ = inject(t, InjectionSpec("mcar", 0.99, seed=seed))
            self.assertTrue(masked.mask.any(axis=0).all())

    def test_truth_records_labels(self):
        t = complete_table(n=200)
        masked, truth = inject(t, InjectionSpec("mcar", 0.2, seed=1))
        for cell in truth:
            j = t.schema.index(cell.feature)
            self.assertFalse(masked.mask[cell.row, j])
            if j == 2:
                self.assertIn(cell.value, ("a", "b", "c"))
            else:
                self.assertEqual(cell.value, t.cells[cell.row, j])

    def test_truth_json(self):
        t = complete_table(n=50)
        _, truth = inject(t, InjectionSpec("mcar", 0.2, seed=1))
        tmp = tempfile.mkdtemp()
        try:
            path = os.path.join(tmp, "truth.json")
            truth_to_json(truth, path)
            with open(path) as f:
                doc = json.load(f)
            self.assertEqual(len(doc), len(truth))
            self.assertEqual(set(doc[0]), {"row", "feature", "value"})
        finally:
            shutil.rmtree(tmp)


if __name__ == '__main__':
    unittest.main()
