#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
SNI Engine for SNI Impute
The outer EM-style loop: mean/mode initialization, per-iteration prior
refresh on training rows, pseudo-masking, per-feature attention training
and imputation, range clipping and the relative-change stopping rule.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .cpfa import CpfaConfig, CpfaModel, attention_means, predict, train_feature
from .dependency_diagnostics import DependencyMatrix, build_dependency
from .error_handler import ConfigError, DataError, EstimationError
from .stat_prior import AssociationMatrix, PriorVector, compute_priors, prior_matrix
from .tabular_core import (DEFAULT_SPLIT, CorrelationDesign, MixedTable, Partition, StandardizerStats,
                           build_correlation_design, clip_to_observed_range, compute_stats,
                           partition_rows)

MAX_EM_ITERS = 200
MAX_MASK_DRAWS = 1000

StatRefine = Callable[[MixedTable, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SniConfig:
    rho: float = 0.15
    alpha0: float = 1.0
    gamma_decay: float = 0.9
    em_iters: int = 2
    tol: float = 1e-4
    mask_aware: bool = False
    fisher_z: bool = False
    split: Tuple[float, float, float] = DEFAULT_SPLIT
    seed: int = 1
    workers: int = 1
    cpfa: CpfaConfig = field(default_factory=CpfaConfig)

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ConfigError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0 < self.gamma_decay <= 1:
            raise ConfigError(f"gamma_decay must lie in (0, 1], got {self.gamma_decay}")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if not 1 <= self.em_iters <= MAX_EM_ITERS:
            raise ConfigError(f"em_iters must lie in [1, {MAX_EM_ITERS}]")
        if self.alpha0 < 0:
            raise ConfigError("alpha0 must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def alpha(self, iteration: int) -> float:
        """Prior strength alpha0 * gamma^(g-1) of outer iteration g (1-based)."""
        return self.alpha0 * self.gamma_decay ** (iteration - 1)


@dataclass(eq=False)
class EmState:
    iteration: int
    completed: np.ndarray
    sigma: Optional[AssociationMatrix]
    alpha: float
    delta: float


@dataclass(eq=False)
class FeatureSummary:
    """What one target's model learned in the last outer iteration."""

    feature: int
    name: str
    sources: Tuple[int, ...]
    lambdas: List[float]
    attention_means: np.ndarray
    prior: np.ndarray
    history: List[Dict]
    lambda_trajectory: List[List[float]]
    best_epoch: int

    def to_dict(self, names: List[str]) -> Dict[str, Any]:
        return {
            "sources": [names[j] for j in self.sources],
            "lambdas": self.lambdas,
            "attention_means": self.attention_means.tolist(),
            "prior": self.prior.tolist(),
            "best_epoch": self.best_epoch,
            "history": self.history,
            "lambda_trajectory": self.lambda_trajectory,
        }


@dataclass(eq=False)
class ImputationResult:
    imputed: MixedTable
    dependency: DependencyMatrix
    lambdas: Dict[str, List[float]]
    delta_log: List[float]
    loss_histories: Dict[str, List[Dict]]
    iterations: int
    alpha_log: List[float] = field(default_factory=list)
    summaries: Dict[int, FeatureSummary] = field(default_factory=dict)
    priors: Optional[np.ndarray] = None

    def to_report(self, config: Optional[Dict[str, Any]] = None, seed: Optional[int] = None) -> Dict[str, Any]:
        names = self.imputed.schema.names
        return {
            "features": names,
            "iterations": self.iterations,
            "delta_log": self.delta_log,
            "final_delta": self.delta_log[-1] if self.delta_log else 0.0,
            "alpha_log": self.alpha_log,
            "lambdas": self.lambdas,
            "loss_histories": self.loss_histories,
            "models": {names[f]: s.to_dict(names) for f, s in sorted(self.summaries.items())},
            "dependency": self.dependency.matrix.tolist(),
            "priors": (self.priors if self.priors is not None else np.zeros((len(names), len(names)))).tolist(),
            "config": config or {},
            "seed": seed,
        }


def initialize(t: MixedTable) -> MixedTable:
    """Fill continuous gaps with the observed mean and categorical gaps with the mode."""
    filled = np.array(t.cells, copy=True)
    for j, f in enumerate(t.schema.features):
        observed = t.observed(j)
        if observed.size == 0:
            if t.n == 0:
                continue
            raise DataError(f"Feature {f.name!r} has no observed cells", context={"feature": f.name})
        missing = ~t.mask[:, j]
        if not missing.any():
            continue
        if f.is_categorical:
            counts = np.bincount(observed.astype(int), minlength=f.n_categories)
            filled[missing, j] = float(np.argmax(counts))
        else:
            filled[missing, j] = observed.mean()
    return t.with_cells(filled)


def pseudo_mask(rows: np.ndarray, rho: float, rng: np.random.Generator) -> np.ndarray:
    """
    Bernoulli(rho) mask over ``rows``, redrawn until at least one row is
    masked and one is kept.
    """
    rows = np.asarray(rows)
    if not 0 < rho < 1:
        raise ConfigError(f"rho must lie in (0, 1), got {rho}")
    if rows.size < 2:
        raise DataError(f"Pseudo-masking needs at least 2 rows, got {rows.size}")
    for _ in range(MAX_MASK_DRAWS):
        mask = rng.random(rows.size) < rho
        if 0 < mask.sum() < rows.size:
            return mask
    raise EstimationError(f"No usable pseudo-mask after {MAX_MASK_DRAWS} draws")


def _numeric_view(t: MixedTable, stats: StandardizerStats) -> np.ndarray:
    out = np.zeros(t.cells.shape)
    for j in t.schema.continuous_indices:
        out[:, j] = stats.standardize(t.cells[:, j], j)
    return out


def convergence_delta(prev: MixedTable, updated: MixedTable,
                      stats: Optional[StandardizerStats] = None) -> float:
    """
    Relative Frobenius change between two completed tables.

    Continuous cells enter standardized; a categorical cell contributes 1 to
    the numerator when it changed and 1 to the denominator always.
    """
    if prev.cells.shape != updated.cells.shape:
        raise DataError(f"Shape mismatch: {prev.cells.shape} vs {updated.cells.shape}")
    stats = stats or compute_stats(prev)
    a = _numeric_view(prev, stats)
    b = _numeric_view(updated, stats)
    cont = prev.schema.continuous_indices
    cat = prev.schema.categorical_indices

    numerator = float(((b[:, cont] - a[:, cont]) ** 2).sum())
    denominator = float((a[:, cont] ** 2).sum())
    if cat:
        numerator += float((prev.cells[:, cat] != updated.cells[:, cat]).sum())
        denominator += float(prev.n * len(cat))

    if denominator == 0:
        return 0.0 if numerator == 0 else float("inf")
    return float(np.sqrt(numerator) / np.sqrt(denominator))


def mask_aware_inputs(Z: np.ndarray, original_mask: np.ndarray) -> np.ndarray:
    """Append one observed(1)/missing(0) indicator column per source feature."""
    return np.hstack([np.asarray(Z, dtype=np.float64), np.asarray(original_mask, dtype=np.float64)])


class SniImputer:
    """
    Statistical-neural interaction imputer.
    """

    def __init__(self, config: Optional[SniConfig] = None,
                 stat_refine: Optional[StatRefine] = None,
                 error_handler=None):
        """
        Initialize the imputer.

        Args:
            config: Outer-loop and model configuration
            stat_refine: Post-processing hook applied after clipping; receives
                the incomplete table and the completed values and returns new
                completed values. No-op when None.
            error_handler: ErrorHandler instance for reporting failures
        """
        self.config = config or SniConfig()
        self.stat_refine = stat_refine
        self.error_handler = error_handler
        self.logger = logging.getLogger('sni_engine')

    def run(self, t: MixedTable) -> ImputationResult:
        cfg = self.config
        d = t.d
        names = t.schema.names
        stats = compute_stats(t)
        current = initialize(t)

        if t.is_complete:
            self.logger.info("Table has no missing cells; returning it unchanged")
            return ImputationResult(
                imputed=current,
                dependency=DependencyMatrix(np.zeros((d, d)), tuple(names)),
                lambdas={}, delta_log=[0.0], loss_histories={}, iterations=1,
                alpha_log=[cfg.alpha(1)], priors=np.zeros((d, d)))

        partition = partition_rows(t.n, cfg.split, cfg.seed)
        targets = [f for f in range(d) if not t.mask[:, f].all()]
        self.logger.info(f"Imputing {len(targets)} of {d} features over {t.n} rows "
                         f"(G={cfg.em_iters}, alpha0={cfg.alpha0}, rho={cfg.rho})")

        delta_log, alpha_log = [], []
        summaries: Dict[int, FeatureSummary] = {}
        priors_out = np.zeros((d, d))
        below_tol = 0
        state = None
        for g in range(1, cfg.em_iters + 1):
            alpha = cfg.alpha(g)
            design = build_correlation_design(t, current.cells, stats)
            sigma, priors = compute_priors(design, partition.train, fisher=cfg.fisher_z)
            priors_out = prior_matrix(priors, d)

            def fit(f):
                return self._fit_target(t, stats, design, partition, priors[f], f, g, alpha,
                                        current.cells[:, f])

            if cfg.workers > 1 and len(targets) > 1:
                with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                    fitted = list(pool.map(fit, targets))
            else:
                fitted = [fit(f) for f in targets]

            filled = np.array(current.cells, copy=True)
            for f, (values, summary) in zip(targets, fitted):
                filled[~t.mask[:, f], f] = values
                if summary is not None:
                    summaries[f] = summary

            filled = clip_to_observed_range(filled, stats)
            if self.stat_refine is not None:
                filled = np.asarray(self.stat_refine(t, filled), dtype=np.float64)
            filled[t.mask] = t.cells[t.mask]
            updated = t.with_cells(filled)

            delta = convergence_delta(current, updated, stats)
            delta_log.append(delta)
            alpha_log.append(alpha)
            state = EmState(g, updated.cells, sigma, alpha, delta)
            self.logger.info(f"Iteration {g}: alpha={alpha:.6g} delta={delta:.6g}",
                             extra={"type": "em_iteration", "iteration": g})
            current = updated

            below_tol = below_tol + 1 if delta < cfg.tol else 0
            if below_tol >= 2:
                self.logger.info(f"Converged after {g} iterations")
                break

        dependency = build_dependency({f: s.attention_means for f, s in summaries.items()}, t.schema)
        return ImputationResult(
            imputed=current,
            dependency=dependency,
            lambdas={names[f]: s.lambdas for f, s in sorted(summaries.items())},
            delta_log=delta_log,
            loss_histories={names[f]: s.history for f, s in sorted(summaries.items())},
            iterations=state.iteration,
            alpha_log=alpha_log,
            summaries=summaries,
            priors=priors_out,
        )

    def _fit_target(self, t: MixedTable, stats: StandardizerStats, design: CorrelationDesign,
                    partition: Partition, prior: PriorVector, f: int, g: int,
                    alpha: float, fill: np.ndarray) -> Tuple[np.ndarray, Optional[FeatureSummary]]:
        cfg = self.config
        spec = t.schema.features[f]
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, g, f]))

        columns, token_columns = design.columns_excluding(f)
        inputs = design.matrix[:, columns]
        if cfg.mask_aware:
            sources = [j for j in range(t.d) if j != f]
            offset = inputs.shape[1]
            inputs = mask_aware_inputs(inputs, t.mask[:, sources])
            token_columns = token_columns + [np.array([offset + k]) for k in range(len(sources))]

        observed = t.mask[:, f]
        train_rows = partition.train[observed[partition.train]]
        val_rows = partition.validation[observed[partition.validation]]
        if train_rows.size < 2:
            # keep the previous fill; the feature's dependency row stays zero
            error = EstimationError(f"Feature {spec.name!r} has fewer than 2 observed training rows; "
                                    f"keeping its current fill", context={"feature": spec.name, "iteration": g})
            if self.error_handler is not None:
                self.error_handler.handle_error("insufficient_training_rows", error.message, exception=error,
                                                severity="low")
            else:
                self.logger.warning(error.message, extra={"type": "fallback", "feature": spec.name,
                                                          "iteration": g})
            return np.asarray(fill, dtype=np.float64)[~observed], None
        held = pseudo_mask(train_rows, cfg.rho, rng)
        fit_rows = train_rows[~held]
        val_rows = np.concatenate([train_rows[held], val_rows])

        if spec.is_categorical:
            targets = np.nan_to_num(t.cells[:, f]).astype(int)
            n_outputs = spec.n_categories
        else:
            targets = np.nan_to_num(stats.standardize(t.cells[:, f], f))
            n_outputs = 1

        model_cfg = replace(cfg.cpfa, prior_weight=alpha)
        model = CpfaModel(token_columns, n_outputs, model_cfg, rng, n_prior_tokens=t.d - 1)
        outcome = train_feature(model, inputs[fit_rows], targets[fit_rows], prior, model_cfg,
                                seed=int(rng.integers(2 ** 63 - 1)),
                                val_inputs=inputs[val_rows], val_targets=targets[val_rows],
                                alpha=alpha)

        missing_rows = np.flatnonzero(~observed)
        predictions = predict(model, inputs[missing_rows])
        if spec.is_categorical:
            values = predictions.astype(np.float64)
        else:
            values = stats.destandardize(predictions, f)

        seen_rows = np.concatenate([fit_rows, val_rows])
        means = attention_means(model, inputs[seen_rows])[:, :t.d - 1]
        lambdas = model.lambdas().data.tolist()
        self.logger.debug(f"Feature {spec.name}: best epoch {outcome.best_epoch}/{outcome.epochs_run}, "
                          f"lambdas {np.round(lambdas, 4).tolist()}",
                          extra={"type": "training", "feature": spec.name, "iteration": g})

        summary = FeatureSummary(
            feature=f, name=spec.name, sources=prior.sources, lambdas=lambdas,
            attention_means=means, prior=np.asarray(prior.weights),
            history=outcome.history, lambda_trajectory=outcome.lambda_trajectory,
            best_epoch=outcome.best_epoch)
        return values, summary


def run(t: MixedTable, config: Optional[SniConfig] = None,
        stat_refine: Optional[StatRefine] = None) -> ImputationResult:
    """Impute ``t`` with the statistical-neural interaction loop."""
    return SniImputer(config, stat_refine=stat_refine).run(t)
