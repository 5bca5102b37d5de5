#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Neural Core for SNI Impute
Reverse-mode automatic differentiation on numpy arrays plus the building
blocks the attention model is assembled from: dense layers, softmax,
layer normalization, softplus, regression and focal losses, AdamW and the
cosine learning-rate schedule.

Every Tensor remembers the op that produced it; ``backward`` walks the graph
in reverse topological order and accumulates gradients into ``grad`` of every
tensor with ``requires_grad``.
"""

import math
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .error_handler import ConfigError, ShapeError

logger = logging.getLogger('neural_core')

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Evaluate without recording the graph (per thread)."""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


ArrayLike = Union["Tensor", np.ndarray, float, int]


class Tensor:
    """An array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    # ndarray (op) Tensor defers to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False,
                 _parents: Tuple["Tensor", ...] = (),
                 _backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
                 name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, name={self.name})"

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    # ------------------------------------------------------------------ graph

    @staticmethod
    def lift(x: ArrayLike) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @staticmethod
    def _make(data: np.ndarray, parents: Tuple["Tensor", ...], backward) -> "Tensor":
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)
        return Tensor(data)

    def backward(self, grad: Optional[np.ndarray] = None):
        """Accumulate d(self)/d(leaf) into every reachable tensor's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs a scalar root, got shape {self.shape}")
            grad = np.ones_like(self.data)

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(np.asarray(pg, dtype=np.float64), parent.shape)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # --------------------------------------------------------------- arithmetic

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        return Tensor._make(self.data + other.data, (self, other), lambda g: (g, g))

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        return Tensor._make(self.data - other.data, (self, other), lambda g: (g, -g))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other) - self

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        a, b = self.data, other.data
        return Tensor._make(a * b, (self, other), lambda g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        a, b = self.data, other.data
        return Tensor._make(a / b, (self, other), lambda g: (g / b, -g * a / (b * b)))

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other) / self

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, exponent: float) -> "Tensor":
        a = self.data
        out = a ** exponent

        def backward(g):
            if exponent == 0:
                return (np.zeros_like(a),)
            return (g * exponent * a ** (exponent - 1),)

        return Tensor._make(out, (self,), backward)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        a, b = self.data, other.data
        if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
            raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

        def backward(g):
            if b.ndim == 2:
                ga = g @ b.T
                gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
                return ga, gb
            return g @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ g

        return Tensor._make(a @ b, (self, other), backward)

    # ---------------------------------------------------------------- reshaping

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def transpose(self, *axes) -> "Tensor":
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor._make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),))

    def reshape(self, *shape) -> "Tensor":
        original = self.shape
        return Tensor._make(self.data.reshape(*shape), (self,), lambda g: (g.reshape(original),))

    def __getitem__(self, index) -> "Tensor":
        original = self.shape

        def backward(g):
            full = np.zeros(original)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._make(self.data[index], (self,), backward)

    # --------------------------------------------------------------- reductions

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        original = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, original),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -------------------------------------------------------------- elementwise

    def relu(self) -> "Tensor":
        a = self.data
        return Tensor._make(np.maximum(a, 0.0), (self,), lambda g: (g * (a > 0),))

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out,))

    def log(self) -> "Tensor":
        a = self.data
        return Tensor._make(np.log(a), (self,), lambda g: (g / a,))

    def softplus(self) -> "Tensor":
        a = self.data
        return Tensor._make(np.logaddexp(0.0, a), (self,), lambda g: (g * expit(a),))

    def softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)

        def backward(g):
            return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

        return Tensor._make(out, (self,), backward)

    def log_softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        out = shifted - lse
        probs = np.exp(out)

        def backward(g):
            return (g - probs * g.sum(axis=axis, keepdims=True),)

        return Tensor._make(out, (self,), backward)


def tensor(data, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad, name=name)


def parameter(data, name: Optional[str] = None) -> Tensor:
    return tensor(data, requires_grad=True, name=name)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [Tensor.lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def softplus(x: ArrayLike):
    """ln(1 + e^x) without overflow; Tensor in, Tensor out."""
    if isinstance(x, Tensor):
        return x.softplus()
    out = np.logaddexp(0.0, np.asarray(x, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def inverse_softplus(y: float) -> float:
    """Raw value whose softplus is ``y`` (y > 0)."""
    return float(y + np.log(-np.expm1(-y)))


def softmax(x: ArrayLike, axis: int = -1):
    if isinstance(x, Tensor):
        return x.softmax(axis)
    return Tensor(x).softmax(axis).data


def layer_norm(x: Tensor, gain: Optional[Tensor] = None, bias: Optional[Tensor] = None,
               eps: float = 1e-9) -> Tensor:
    """Normalize the last axis to zero mean and unit (population) variance."""
    centered = x - x.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    out = centered * (var + eps) ** -0.5
    if gain is not None:
        out = out * gain
    if bias is not None:
        out = out + bias
    return out


def xavier_uniform(fan_in: int, fan_out: int, rng: np.random.Generator,
                   shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_out, fan_in))


class Dense:
    """Affine layer y = x W^T + b with W stored out x in."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 name: str = "dense", bias: bool = True):
        self.name = name
        self.weight = parameter(xavier_uniform(in_features, out_features, rng), name=f"{name}.weight")
        self.bias = parameter(np.zeros(out_features), name=f"{name}.bias") if bias else None

    def __call__(self, x: ArrayLike) -> Tensor:
        out = Tensor.lift(x) @ self.weight.T
        if self.bias is not None:
            out = out + self.bias
        return out

    def parameters(self) -> Dict[str, Tensor]:
        params = {self.weight.name: self.weight}
        if self.bias is not None:
            params[self.bias.name] = self.bias
        return params


# --------------------------------------------------------------------- losses

def mse_loss(pred: Tensor, target: ArrayLike) -> Tensor:
    pred = Tensor.lift(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    if target.size == 0:
        raise ShapeError("mse of an empty batch")
    diff = pred - target
    return (diff * diff).mean()


def smoothed_targets(labels: np.ndarray, n_classes: int, smoothing: float) -> np.ndarray:
    """One-hot labels smoothed to 1-eps+eps/K on the true class and eps/K elsewhere."""
    labels = np.asarray(labels, dtype=int)
    out = np.full((labels.size, n_classes), smoothing / n_classes)
    out[np.arange(labels.size), labels] += 1.0 - smoothing
    return out


def focal_loss(logits: Tensor, labels: np.ndarray, gamma: float = 2.0,
               smoothing: float = 0.0) -> Tensor:
    """
    Mean over the batch of sum_k y~_k (1 - p_k)^gamma (-log p_k).

    Args:
        logits: B x K scores
        labels: B category indices
        gamma: Focusing exponent (0 gives cross-entropy)
        smoothing: Label smoothing epsilon

    Returns:
        Scalar Tensor
    """
    logits = Tensor.lift(logits)
    labels = np.asarray(labels, dtype=int)
    if logits.ndim != 2 or logits.shape[0] != labels.size:
        raise ShapeError(f"focal loss shape mismatch: logits {logits.shape}, labels {labels.shape}")
    if labels.size == 0:
        raise ShapeError("focal loss of an empty batch")
    n_classes = logits.shape[1]
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ShapeError(f"labels must lie in [0, {n_classes})")

    log_p = logits.log_softmax(axis=-1)
    targets = smoothed_targets(labels, n_classes, smoothing)
    if gamma == 0:
        per_class = log_p * targets
    else:
        modulation = (1.0 - log_p.exp()) ** gamma
        per_class = modulation * log_p * targets
    return -per_class.sum(axis=-1).mean()


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    return focal_loss(logits, labels, gamma=0.0, smoothing=0.0)


# ----------------------------------------------------------- gradient contract

def forward_backward(fn: Callable[[Dict[str, Tensor], Dict[str, Tensor]], object],
                     params: Dict[str, Tensor],
                     inputs: Optional[Dict[str, Tensor]] = None):
    """
    Run ``fn(params, inputs)`` and back-propagate its scalar loss.

    ``fn`` returns either the loss Tensor or a tuple whose first item is the
    loss. Gradients are returned for every parameter and every input Tensor
    with ``requires_grad``.

    Returns:
        (outputs of fn, dict of gradients keyed like params/inputs)
    """
    inputs = inputs or {}
    leaves = dict(params)
    leaves.update({k: v for k, v in inputs.items() if isinstance(v, Tensor) and v.requires_grad})
    for leaf in leaves.values():
        leaf.zero_grad()

    outputs = fn(params, inputs)
    loss = outputs[0] if isinstance(outputs, tuple) else outputs
    if not isinstance(loss, Tensor):
        raise ShapeError("loss function must return a Tensor")
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")

    if loss.requires_grad:
        loss.backward()
    grads = {}
    for key, leaf in leaves.items():
        grads[key] = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
    return outputs, grads


def numerical_gradient(fn: Callable[[], float], array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of ``fn`` with respect to ``array`` (perturbed in place)."""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        original = array[idx]
        array[idx] = original + h
        plus = fn()
        array[idx] = original - h
        minus = fn()
        array[idx] = original
        grad[idx] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def gradient_check(fn: Callable[[Dict[str, Tensor], Dict[str, Tensor]], object],
                   params: Dict[str, Tensor],
                   inputs: Optional[Dict[str, Tensor]] = None,
                   h: float = 1e-5) -> Dict[str, float]:
    """
    Relative error between analytic and central-difference gradients, per leaf.
    """
    _, grads = forward_backward(fn, params, inputs)
    leaves = dict(params)
    leaves.update({k: v for k, v in (inputs or {}).items() if isinstance(v, Tensor) and v.requires_grad})

    def scalar():
        with no_grad():
            out = fn(params, inputs or {})
        loss = out[0] if isinstance(out, tuple) else out
        return float(loss.data)

    return {key: relative_error(grads[key], numerical_gradient(scalar, leaf.data, h))
            for key, leaf in leaves.items()}


# ------------------------------------------------------------------ optimizer

@dataclass
class OptimizerState:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(state: OptimizerState, params: Dict[str, Tensor], grads: Dict[str, np.ndarray],
               frozen: Iterable[str] = ()) -> OptimizerState:
    """
    One decoupled-weight-decay Adam update, in place.

    Args:
        state: Moments and hyperparameters; ``step`` is advanced
        params: Parameters to update
        grads: Gradients keyed like ``params``
        frozen: Parameter names left untouched

    Returns:
        The updated state
    """
    frozen = set(frozen)
    beta1, beta2 = state.betas
    state.step += 1
    t = state.step
    bias_correction1 = 1.0 - beta1 ** t
    bias_correction2 = 1.0 - beta2 ** t

    for name, p in params.items():
        if name in frozen:
            continue
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {name} {p.data.shape}")
        m = state.first_moment.setdefault(name, np.zeros_like(p.data))
        v = state.second_moment.setdefault(name, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g

        if state.weight_decay:
            p.data *= 1.0 - state.lr * state.weight_decay
        m_hat = m / bias_correction1
        v_hat = v / bias_correction2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    min_lr: float
    total_steps: int

    def __post_init__(self):
        if self.min_lr > self.base_lr:
            raise ConfigError("min_lr must not exceed base_lr")


def cosine_lr(schedule: LrSchedule, step: int) -> float:
    if step < 0 or step > schedule.total_steps:
        raise ConfigError(f"step {step} outside schedule of {schedule.total_steps} steps")
    if schedule.total_steps == 0:
        return schedule.base_lr
    return schedule.min_lr + 0.5 * (schedule.base_lr - schedule.min_lr) * (
        1.0 + math.cos(math.pi * step / schedule.total_steps))
