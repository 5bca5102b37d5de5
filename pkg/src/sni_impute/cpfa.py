#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Controllable-Prior Feature Attention for SNI Impute
Per-target attention model: one token per source feature (value projection
plus learned position embedding), H heads each with a learned query, an
Add&Norm + feed-forward trunk, a linear bypass from the raw inputs and a
regression or classification head. Head-mean attention is pulled toward the
statistical prior with a strength scaled by the learnable confidences
lambda_h = softplus(theta_h).
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .error_handler import ConfigError, DataError, EstimationError, ShapeError
from .neural_core import (Dense, LrSchedule, OptimizerState, Tensor, adamw_step, cosine_lr,
                          focal_loss, forward_backward, inverse_softplus, layer_norm, mse_loss,
                          no_grad, parameter, xavier_uniform)
from .stat_prior import PriorVector

logger = logging.getLogger('cpfa')

GAMMA_START = (0.5, 0.5)
GAMMA_END_SHAPE = 2.0


@dataclass(frozen=True)
class CpfaConfig:
    heads: int = 4
    hidden_dims: Tuple[int, ...] = (64, 32)
    embed_dim: int = 32
    lr: float = 1e-3
    min_lr: float = 1e-6
    weight_decay: float = 1e-4
    batch: int = 128
    epochs: int = 50
    patience: int = 10
    label_smoothing: float = 0.1
    focal_gamma: float = 2.0
    gamma_prior_enabled: bool = True
    freeze_lambda: bool = False
    lambda_init: float = 1.0
    prior_weight: float = 1.0
    gamma_anneal_epochs: int = 10
    layer_norm_eps: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.heads < 1:
            raise ConfigError("heads must be at least 1")
        if self.embed_dim < 1 or not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ConfigError("embed_dim and hidden_dims must be positive")
        if self.batch < 1 or self.epochs < 1 or self.patience < 1:
            raise ConfigError("batch, epochs and patience must be positive")
        if self.patience > self.epochs:
            raise ConfigError("patience must not exceed epochs")
        if not 0 <= self.label_smoothing < 1:
            raise ConfigError("label_smoothing must lie in [0, 1)")
        if self.focal_gamma < 0 or self.prior_weight < 0:
            raise ConfigError("focal_gamma and prior_weight must be non-negative")
        if self.lambda_init <= 0:
            raise ConfigError("lambda_init must be positive")
        if self.min_lr > self.lr:
            raise ConfigError("min_lr must not exceed lr")


@dataclass(frozen=True)
class LossBreakdown:
    recon: float
    prior: float
    gamma_reg: float
    total: float

    def to_dict(self) -> Dict[str, float]:
        return {"recon": self.recon, "prior": self.prior, "gamma_reg": self.gamma_reg, "total": self.total}

    def as_array(self) -> np.ndarray:
        return np.array([self.recon, self.prior, self.gamma_reg, self.total])

    @classmethod
    def from_array(cls, values: np.ndarray) -> "LossBreakdown":
        recon, prior, gamma_reg = (float(v) for v in values[:3])
        return cls(recon, prior, gamma_reg, recon + prior + gamma_reg)


class CpfaModel:
    """
    Attention imputer for one target feature.
    """

    def __init__(self, token_columns: Sequence[Sequence[int]], n_outputs: int,
                 config: CpfaConfig, rng: np.random.Generator,
                 n_prior_tokens: Optional[int] = None):
        """
        Initialize the model.

        Args:
            token_columns: For every token, the input columns it embeds (a
                one-hot group collapses into one token)
            n_outputs: 1 for regression, K logits for classification
            config: Model and training hyperparameters
            rng: Initialization stream
            n_prior_tokens: Leading tokens covered by the prior penalty
                (defaults to all tokens)
        """
        self.config = config
        self.token_columns = [np.asarray(cols, dtype=int) for cols in token_columns]
        self.n_tokens = len(self.token_columns)
        if self.n_tokens < 1:
            raise ShapeError("attention needs at least 2 features (one source token)")
        self.n_inputs = int(max(cols.max() for cols in self.token_columns)) + 1
        self.n_prior_tokens = self.n_tokens if n_prior_tokens is None else n_prior_tokens
        self.n_outputs = n_outputs
        self.is_classifier = n_outputs > 1

        self.assignment = np.zeros((self.n_tokens, self.n_inputs))
        for t, cols in enumerate(self.token_columns):
            self.assignment[t, cols] = 1.0

        embed, heads = config.embed_dim, config.heads
        self.head_dim = max(1, embed // heads)
        width = heads * self.head_dim

        self.token_weight = parameter(xavier_uniform(1, embed, rng, shape=(self.n_inputs, embed)),
                                      name="token.weight")
        self.position = parameter(rng.normal(0.0, 0.02, size=(self.n_tokens, embed)), name="token.position")
        self.key = Dense(embed, width, rng, name="key")
        self.value = Dense(embed, width, rng, name="value")
        self.query = parameter(xavier_uniform(self.head_dim, heads, rng, shape=(heads, self.head_dim)),
                               name="query")
        self.attn_out = Dense(width, embed, rng, name="attn_out")
        self.norm_gain = parameter(np.ones(embed), name="norm.gain")
        self.norm_bias = parameter(np.zeros(embed), name="norm.bias")

        self.feed_forward = []
        previous = embed
        for i, hidden in enumerate(config.hidden_dims):
            self.feed_forward.append(Dense(previous, hidden, rng, name=f"ff{i}"))
            previous = hidden
        self.bypass = Dense(self.n_inputs, previous, rng, name="bypass")
        self.predictor = Dense(previous, n_outputs, rng, name="predictor")
        self.theta = parameter(np.full(heads, inverse_softplus(config.lambda_init)), name="theta")

    def parameters(self) -> Dict[str, Tensor]:
        params = {
            self.token_weight.name: self.token_weight,
            self.position.name: self.position,
            self.query.name: self.query,
            self.norm_gain.name: self.norm_gain,
            self.norm_bias.name: self.norm_bias,
            self.theta.name: self.theta,
        }
        for layer in [self.key, self.value, self.attn_out, *self.feed_forward, self.bypass, self.predictor]:
            params.update(layer.parameters())
        return params

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def restore(self, snapshot: Dict[str, np.ndarray]):
        for name, p in self.parameters().items():
            p.data[...] = snapshot[name]

    def lambdas(self) -> Tensor:
        return self.theta.softplus()

    def anchor_to_prior(self, prior, inputs: Optional[np.ndarray] = None, floor: float = 1e-4):
        """
        Re-solve the prior tokens' position embeddings so each head's
        attention logits start at log(prior) for the mean input row.

        Args:
            prior: PriorVector or weights over the leading prior tokens
            inputs: Rows whose mean token embedding is offset (zero row when omitted)
            floor: Lower clip of the prior before the log
        """
        weights = _prior_weights(prior)
        n = weights.shape[-1]
        if weights.ndim != 1 or n != self.n_prior_tokens:
            raise ShapeError(f"prior over {weights.shape} tokens, model has {self.n_prior_tokens} prior tokens")
        heads, dk = self.config.heads, self.head_dim
        logits = np.log(np.maximum(weights, floor))
        logits -= logits.mean()
        # score_h(t) = query_h . key_h(embedding_t) / sqrt(dk), bias shared by all tokens
        key_weight = self.key.weight.data.reshape(heads, dk, -1)
        response = np.einsum("hd,hde->he", self.query.data, key_weight) / math.sqrt(dk)
        targets = np.tile(logits, (heads, 1))
        if inputs is not None and len(inputs) > 0:
            mean_row = np.asarray(inputs, dtype=np.float64).mean(axis=0)
            value_part = (mean_row[None, :] * self.assignment[:n]) @ self.token_weight.data
            targets = targets - response @ value_part.T
        solution, *_ = np.linalg.lstsq(response, targets, rcond=None)
        self.position.data[:n] = solution.T

    def attention_forward(self, batch: np.ndarray) -> Tuple[Tensor, Tensor, Tensor]:
        """
        Tokens -> heads -> trunk.

        Returns:
            (trunk output fed to the predictor, B x H x T attention weights,
            H x T batch-mean attention)
        """
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_inputs:
            raise ShapeError(f"expected inputs of shape (B, {self.n_inputs}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ShapeError("attention inputs must be finite")
        b, t = x.shape[0], self.n_tokens
        heads, dk = self.config.heads, self.head_dim

        tokens = Tensor(x[:, None, :] * self.assignment[None, :, :])
        emb = tokens @ self.token_weight + self.position

        keys = self.key(emb).reshape(b, t, heads, dk).transpose(0, 2, 1, 3)
        values = self.value(emb).reshape(b, t, heads, dk).transpose(0, 2, 1, 3)
        scores = (keys * self.query.reshape(1, heads, 1, dk)).sum(axis=-1) * (1.0 / math.sqrt(dk))
        attn = scores.softmax(axis=-1)

        mixed = (values * attn.reshape(b, heads, t, 1)).sum(axis=2)
        hidden = self.attn_out(mixed.reshape(b, heads * dk)) + emb.mean(axis=1)
        hidden = layer_norm(hidden, self.norm_gain, self.norm_bias, eps=self.config.layer_norm_eps)
        for layer in self.feed_forward:
            hidden = layer(hidden).relu()
        hidden = hidden + self.bypass(x)
        return hidden, attn, attn.mean(axis=0)

    def forward(self, batch: np.ndarray) -> Tuple[Tensor, Tensor, Tensor]:
        hidden, attn, attn_mean = self.attention_forward(batch)
        out = self.predictor(hidden)
        if not self.is_classifier:
            out = out.reshape(out.shape[0])
        return out, attn, attn_mean

    def recon_loss(self, output: Tensor, targets: np.ndarray) -> Tensor:
        if self.is_classifier:
            return recon_loss_classification(output, targets, gamma=self.config.focal_gamma,
                                             smoothing=self.config.label_smoothing)
        return recon_loss_regression(output, targets)


def attention_forward(model: CpfaModel, batch: np.ndarray) -> Tuple[Tensor, Tensor, Tensor]:
    return model.attention_forward(batch)


def _prior_weights(prior: Union[PriorVector, np.ndarray, Sequence[float]]) -> np.ndarray:
    if isinstance(prior, PriorVector):
        return np.asarray(prior.weights, dtype=np.float64)
    return np.asarray(prior, dtype=np.float64)


def prior_penalty(A_means, P, lambdas, alpha: float) -> Tensor:
    """
    alpha * sum_h lambda_h ||A_mean_h - P||^2 over the prior's tokens.

    Args:
        A_means: H x T head-mean attention (first len(P) tokens are penalized)
        P: Prior weights or PriorVector
        lambdas: H confidences
        alpha: Prior strength of the current outer iteration
    """
    A_means = Tensor.lift(A_means)
    lambdas = Tensor.lift(lambdas)
    weights = _prior_weights(P)
    n = weights.shape[-1]
    if A_means.ndim != 2 or A_means.shape[-1] < n or lambdas.shape != (A_means.shape[0],):
        raise ShapeError(f"prior penalty shape mismatch: A {A_means.shape}, P {weights.shape}, "
                         f"lambdas {lambdas.shape}")
    if alpha == 0:
        return Tensor(0.0)
    if A_means.shape[-1] != n:
        A_means = A_means[:, :n]
    diff = A_means - weights
    return (lambdas * (diff * diff).sum(axis=-1)).sum() * float(alpha)


def recon_loss_regression(pred: Tensor, target: np.ndarray) -> Tensor:
    return mse_loss(pred, target)


def recon_loss_classification(logits: Tensor, labels: np.ndarray, gamma: float = 2.0,
                              smoothing: float = 0.1) -> Tensor:
    return focal_loss(logits, labels, gamma=gamma, smoothing=smoothing)


def gamma_regularizer(lambdas, alpha_g: float, beta_g: float) -> Tensor:
    """sum_h -(alpha_g - 1) ln lambda_h + beta_g lambda_h."""
    lambdas = Tensor.lift(lambdas)
    if np.any(lambdas.data <= 0):
        raise DataError("Gamma regularizer needs positive confidences")
    return (lambdas.log() * -(alpha_g - 1.0) + lambdas * beta_g).sum()


def gamma_schedule(epoch: int, lambda0: float, anneal_epochs: int = 10) -> Tuple[float, float]:
    """Shape/rate moving linearly from (0.5, 0.5) to (2, 2/lambda0), then held."""
    progress = min(max(epoch, 0) / anneal_epochs, 1.0) if anneal_epochs > 0 else 1.0
    alpha_start, beta_start = GAMMA_START
    alpha_g = alpha_start + progress * (GAMMA_END_SHAPE - alpha_start)
    beta_g = beta_start + progress * (GAMMA_END_SHAPE / lambda0 - beta_start)
    return alpha_g, beta_g


def objective(model: CpfaModel, inputs: np.ndarray, targets: np.ndarray, prior,
              alpha: float, gamma_ab: Optional[Tuple[float, float]]) -> Tuple[Tensor, LossBreakdown]:
    """Total loss of one batch and its decomposition."""
    output, _, attn_mean = model.forward(inputs)
    recon = model.recon_loss(output, targets)
    lambdas = model.lambdas()
    prior_term = prior_penalty(attn_mean, prior, lambdas, alpha)

    config = model.config
    if gamma_ab is not None and config.gamma_prior_enabled and not config.freeze_lambda:
        reg = gamma_regularizer(lambdas, *gamma_ab)
    else:
        reg = Tensor(0.0)

    total = recon + prior_term + reg
    breakdown = LossBreakdown(recon.item(), prior_term.item(), reg.item(), total.item())
    return total, breakdown


@dataclass
class TrainingOutcome:
    model: CpfaModel
    history: List[Dict] = field(default_factory=list)
    lambda_trajectory: List[List[float]] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0


def train_feature(model: CpfaModel, inputs: np.ndarray, targets: np.ndarray, prior,
                  config: CpfaConfig, seed: int,
                  val_inputs: Optional[np.ndarray] = None,
                  val_targets: Optional[np.ndarray] = None,
                  alpha: Optional[float] = None) -> TrainingOutcome:
    """
    Mini-batch AdamW on the total loss with cosine decay, early stopping on
    the reconstruction loss of the pseudo-masked validation rows (training
    rows when there are none) and best-checkpoint restore. With a positive
    prior strength the heads start anchored at the prior.

    Args:
        model: Freshly initialized model (trained in place)
        inputs: Fit rows
        targets: Standardized values (regression) or label indices
        prior: PriorVector or weights over the prior tokens
        config: Training hyperparameters
        seed: Shuffle stream seed
        val_inputs: Held-out pseudo-masked rows
        val_targets: Their targets
        alpha: Prior strength; ``config.prior_weight`` when omitted

    Returns:
        TrainingOutcome with per-epoch LossBreakdown history and lambda trajectory
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets)
    if inputs.shape[0] == 0:
        raise EstimationError("Cannot train on an empty training set")
    if targets.shape[0] != inputs.shape[0]:
        raise ShapeError(f"{inputs.shape[0]} input rows but {targets.shape[0]} targets")
    alpha = config.prior_weight if alpha is None else alpha
    weights = _prior_weights(prior)
    has_val = val_inputs is not None and len(val_inputs) > 0
    if alpha > 0:
        model.anchor_to_prior(weights, inputs)

    rng = np.random.default_rng(seed)
    params = model.parameters()
    frozen = {model.theta.name} if config.freeze_lambda else set()
    n = inputs.shape[0]
    steps_per_epoch = int(math.ceil(n / config.batch))
    schedule = LrSchedule(config.lr, config.min_lr, config.epochs * steps_per_epoch)
    state = OptimizerState(lr=config.lr, weight_decay=config.weight_decay)
    lambda0 = float(model.lambdas().data.mean())

    outcome = TrainingOutcome(model)
    best_score = np.inf
    best = model.snapshot()
    wait = 0
    for epoch in range(config.epochs):
        gamma_ab = gamma_schedule(epoch, lambda0, config.gamma_anneal_epochs)
        order = rng.permutation(n)
        sums = np.zeros(4)
        for start in range(0, n, config.batch):
            idx = order[start:start + config.batch]
            state.lr = cosine_lr(schedule, state.step)
            outputs, grads = forward_backward(
                lambda p, i: objective(model, inputs[idx], targets[idx], weights, alpha, gamma_ab), params)
            adamw_step(state, params, grads, frozen=frozen)
            sums += len(idx) * outputs[1].as_array()
        train = LossBreakdown.from_array(sums / n)

        entry = {"epoch": epoch + 1, "train": train.to_dict(), "lr": state.lr}
        if has_val:
            with no_grad():
                _, val = objective(model, val_inputs, val_targets, weights, alpha, None)
            entry["val_recon"] = val.recon
            entry["val_prior"] = val.prior
            monitor = val.recon
        else:
            monitor = train.recon

        lambdas = model.lambdas().data.tolist()
        entry["lambdas"] = lambdas
        outcome.history.append(entry)
        outcome.lambda_trajectory.append(lambdas)
        outcome.epochs_run = epoch + 1

        if monitor < best_score:
            best_score = monitor
            best = model.snapshot()
            outcome.best_epoch = epoch + 1
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                logger.debug(f"Early stop after epoch {epoch + 1} (best epoch {outcome.best_epoch})")
                break

    model.restore(best)
    return outcome


def predict(model: CpfaModel, inputs: np.ndarray) -> np.ndarray:
    """Standardized predictions (regression) or argmax labels, lowest index on ties."""
    with no_grad():
        output, _, _ = model.forward(inputs)
    if model.is_classifier:
        return np.argmax(output.data, axis=1)
    return output.data.copy()


def predict_proba(model: CpfaModel, inputs: np.ndarray) -> np.ndarray:
    if not model.is_classifier:
        raise ShapeError("predict_proba needs a classification model")
    with no_grad():
        output, _, _ = model.forward(inputs)
    return output.softmax(axis=-1).data


def attention_means(model: CpfaModel, inputs: np.ndarray) -> np.ndarray:
    """H x T head-mean attention over ``inputs``."""
    with no_grad():
        _, _, attn_mean = model.attention_forward(inputs)
    return attn_mean.data.copy()
