#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
SNI Impute
Statistical-neural interaction imputation for mixed-type tables, with
controllable-prior feature attention, missingness injectors, baselines,
evaluation metrics and a synthetic dependency-recovery harness.
"""

__version__ = "1.0.0"
