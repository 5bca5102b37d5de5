#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Unit tests for the evaluation metrics module
"""

import os
import sys
import math
import unittest

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))
from sni_impute.error_handler import DataError
from sni_impute.metrics import (R2_SENTINEL, average_rank, categorical_metrics, continuous_metrics,
                                evaluate_imputation, flatten_evaluation)
from sni_impute.tabular_core import CATEGORICAL, CONTINUOUS, FeatureSchema, FeatureSpec, MixedTable


def average_ranks(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def brute_continuous(truth, pred, spread):
    n = len(truth)
    errors = [p - t for t, p in zip(truth, pred)]
    mean_t = sum(truth) / n
    ss_res = sum(e * e for e in errors)
    ss_tot = sum((t - mean_t) ** 2 for t in truth)
    rt, rp = average_ranks(truth), average_ranks(pred)
    mrt, mrp = sum(rt) / n, sum(rp) / n
    cov = sum((a - mrt) * (b - mrp) for a, b in zip(rt, rp))
    den = math.sqrt(sum((a - mrt) ** 2 for a in rt) * sum((b - mrp) ** 2 for b in rp))
    return {
        "nrmse": math.sqrt(ss_res / n) / spread,
        "mae": sum(abs(e) for e in errors) / n,
        "mb": sum(errors) / n,
        "r2": 1.0 - ss_res / ss_tot,
        "spearman": cov / den if den else 0.0,
    }


def brute_categorical(truth, pred, k):
    n = len(truth)
    accuracy = sum(t == p for t, p in zip(truth, pred)) / n
    f1s = []
    for c in range(k):
        tp = sum(t == c and p == c for t, p in zip(truth, pred))
        fp = sum(t != c and p == c for t, p in zip(truth, pred))
        fn = sum(t == c and p != c for t, p in zip(truth, pred))
        if tp + fp + fn == 0:
            continue
        f1s.append(2 * tp / (2 * tp + fp + fn))
    p_e = sum(sum(t == c for t in truth) * sum(p == c for p in pred) for c in range(k)) / n ** 2
    kappa = 0.0 if p_e == 1 else (accuracy - p_e) / (1 - p_e)
    return {"accuracy": accuracy, "macro_f1": sum(f1s) / len(f1s), "kappa": kappa}


class TestContinuousMetrics(unittest.TestCase):
    """Test cases for continuous_metrics"""

    def test_perfect(self):
        m = continuous_metrics([1.0, 2.0, 4.0], [1.0, 2.0, 4.0], 3.0)
        self.assertEqual((m["nrmse"], m["mae"], m["mb"], m["r2"]), (0.0, 0.0, 0.0, 1.0))
        self.assertAlmostEqual(m["spearman"], 1.0, places=12)

    def test_reversed(self):
        m = continuous_metrics([0.0, 10.0], [10.0, 0.0], 10.0)
        self.assertAlmostEqual(m["nrmse"], 1.0)
        self.assertEqual(m["mb"], 0.0)
        self.assertAlmostEqual(m["spearman"], -1.0)

    def test_mean_prediction(self):
        m = continuous_metrics([1.0, 2.0, 3.0], [2.0, 2.0, 2.0], 2.0)
        self.assertEqual(m["r2"], 0.0)
        self.assertEqual(m["spearman"], 0.0)

    def test_constant_truth(self):
        self.assertEqual(continuous_metrics([1.0, 1.0], [1.0, 1.0], 1.0)["r2"], 0.0)
        self.assertEqual(continuous_metrics([1.0, 1.0], [1.0, 2.0], 1.0)["r2"], R2_SENTINEL)

    def test_bias_sign(self):
        self.assertGreater(continuous_metrics([1.0, 2.0], [2.0, 3.0], 1.0)["mb"], 0.0)

    def test_empty(self):
        with self.assertRaises(DataError):
            continuous_metrics([], [], 1.0)

    def test_spearman_monotone_invariance(self):
        rng = np.random.default_rng(0)
        truth, pred = rng.normal(size=20), rng.normal(size=20)
        a = continuous_metrics(truth, pred, 1.0)["spearman"]
        b = continuous_metrics(truth, np.exp(pred), 1.0)["spearman"]
        self.assertAlmostEqual(a, b, places=12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(3, 10))
            truth = list(np.round(rng.normal(size=n), 1))
            pred = list(np.round(rng.normal(size=n), 1))
            if len(set(truth)) < 2 or len(set(pred)) < 2:
                continue
            spread = max(truth) - min(truth)
            m = continuous_metrics(truth, pred, spread)
            expected = brute_continuous(truth, pred, spread)
            for key, value in expected.items():
                self.assertAlmostEqual(m[key], value, delta=1e-12, msg=key)


class TestCategoricalMetrics(unittest.TestCase):
    """Test cases for categorical_metrics"""

    def test_perfect(self):
        m = categorical_metrics([0, 1, 2], [0, 1, 2], 3)
        self.assertEqual(m, {"accuracy": 1.0, "macro_f1": 1.0, "kappa": 1.0})

    def test_hand_example(self):
        m = categorical_metrics([1, 0, 1, 0], [1, 1, 0, 0], 2)
        self.assertEqual(m["accuracy"], 0.5)
        self.assertAlmostEqual(m["kappa"], 0.0, places=12)
        self.assertAlmostEqual(m["macro_f1"], 0.5, places=12)

    def test_constant_prediction(self):
        self.assertAlmostEqual(categorical_metrics([0, 1, 0, 1], [0, 0, 0, 0], 2)["kappa"], 0.0, places=12)

    def test_single_class_everywhere(self):
        self.assertEqual(categorical_metrics([1, 1], [1, 1], 3)["kappa"], 0.0)

    def test_label_out_of_range(self):
        with self.assertRaises(DataError):
            categorical_metrics([0, 3], [0, 1], 3)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n, k = int(rng.integers(2, 12)), int(rng.integers(2, 5))
            truth = rng.integers(0, k, size=n).tolist()
            pred = rng.integers(0, k, size=n).tolist()
            m = categorical_metrics(truth, pred, k)
            expected = brute_categorical(truth, pred, k)
            for key, value in expected.items():
                self.assertAlmostEqual(m[key], value, delta=1e-12, msg=key)


class TestAverageRank(unittest.TestCase):
    """Test cases for average_rank"""

    def test_hand_example(self):
        table = pd.DataFrame({"s1": [0.1, 0.2, 0.3], "s2": [0.2, 0.1, 0.3]}, index=["a", "b", "c"])
        ranks = average_rank(table, higher_is_better=False)
        self.assertEqual(ranks.to_dict(), {"a": 1.5, "b": 1.5, "c": 3.0})

    def test_ties_share_rank(self):
        table = pd.DataFrame({"s1": [0.9, 0.9]}, index=["a", "b"])
        self.assertEqual(average_rank(table, higher_is_better=True).to_dict(), {"a": 1.5, "b": 1.5})

    def test_higher_is_better(self):
        table = pd.DataFrame({"s1": [0.9, 0.1], "s2": [0.8, 0.2]}, index=["a", "b"])
        self.assertEqual(average_rank(table, higher_is_better=True)["a"], 1.0)

    def test_missing_cell(self):
        table = pd.DataFrame({"s1": [0.9, np.nan]}, index=["a", "b"])
        with self.assertRaises(DataError):
            average_rank(table, higher_is_better=True)


class TestEvaluateImputation(unittest.TestCase):
    """Test cases for evaluate_imputation"""

    def test_per_feature_and_macro(self):
        schema = FeatureSchema((FeatureSpec("x", CONTINUOUS), FeatureSpec("c", CATEGORICAL, ("a", "b"))))
        truth = MixedTable(schema, np.array([[0.0, 0.0], [5.0, 1.0], [10.0, 1.0]]), np.ones((3, 2), dtype=bool))
        imputed = truth.with_cells(np.array([[0.0, 0.0], [7.0, 0.0], [10.0, 1.0]]))
        held_out = np.array([[False, False], [True, True], [True, False]])
        report = evaluate_imputation(truth, imputed, held_out)
        self.assertEqual(set(report["features"]), {"x", "c"})
        self.assertAlmostEqual(report["continuous"]["mae"], 1.0)
        self.assertAlmostEqual(report["continuous"]["nrmse"], math.sqrt(2.0) / 10.0)
        self.assertEqual(report["categorical"]["accuracy"], 0.0)
        flat = flatten_evaluation(report)
        self.assertEqual(flat["accuracy"], 0.0)

    def test_missing_type_is_nan(self):
        schema = FeatureSchema((FeatureSpec("x", CONTINUOUS),))
        truth = MixedTable(schema, np.array([[0.0], [1.0]]), np.ones((2, 1), dtype=bool))
        report = evaluate_imputation(truth, truth, np.array([[True], [False]]))
        self.assertIsNone(report["categorical"])
        self.assertTrue(np.isnan(flatten_evaluation(report)["kappa"]))


if __name__ == '__main__':
    unittest.main()
