"""Loss functions and their gradients."""

from __future__ import annotations

import numpy as np

from ..errors import EmptySequence, IndexOutOfRange, ShapeMismatch

# Probabilities are floored here before the log so a confident wrong
# prediction yields a large finite loss instead of inf.
PROB_FLOOR = 1e-12


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over all elements."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse shapes differ: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise EmptySequence("mse over zero elements")
    d = pred - target
    return float(np.mean(d * d))


def mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d mse / d pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return 2.0 * (pred - target) / pred.size


def scce(probs: np.ndarray, target_index: int) -> float:
    """Sparse categorical cross-entropy: -ln(probs[target_index])."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ShapeMismatch("scce expects a 1-d probability vector")
    if not 0 <= target_index < probs.shape[0]:
        raise IndexOutOfRange(f"target {target_index} out of range for {probs.shape[0]} classes")
    return float(-np.log(max(float(probs[target_index]), PROB_FLOOR)))


def scce_batch(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Row-wise scce for probs (B, C) and integer targets (B,)."""
    p = probs[np.arange(probs.shape[0]), targets]
    return -np.log(np.maximum(p, PROB_FLOOR))


def softmax_scce_grad(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient of scce w.r.t. the softmax *pre-activations*.

    The classic (probs - onehot) form, except rows whose target probability
    sits at the floor have zero gradient because the floored loss is locally
    constant there.
    """
    B = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(B), targets] -= 1.0
    floored = probs[np.arange(B), targets] <= PROB_FLOOR
    if np.any(floored):
        grad[floored] = 0.0
    return grad
