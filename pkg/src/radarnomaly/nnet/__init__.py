"""Minimal neural network kernel: layers, losses, Adam, checks, persistence."""

from .gradcheck import FD_STEP, grad_check, relative_error
from .layers import (
    DenseLayer,
    EmbeddingLayer,
    LstmCell,
    dense_backward,
    dense_forward,
    glorot_uniform,
    sigmoid,
    softmax,
)
from .losses import PROB_FLOOR, mse, mse_grad, scce, scce_batch, softmax_scce_grad
from .modelfile import FORMAT_VERSION, dump_model, load_model
from .optim import AdamState, adam_step
from .scaling import MinMaxScaler

__all__ = [
    "AdamState",
    "DenseLayer",
    "EmbeddingLayer",
    "FD_STEP",
    "FORMAT_VERSION",
    "LstmCell",
    "MinMaxScaler",
    "PROB_FLOOR",
    "adam_step",
    "dense_backward",
    "dense_forward",
    "dump_model",
    "glorot_uniform",
    "grad_check",
    "load_model",
    "mse",
    "mse_grad",
    "relative_error",
    "scce",
    "scce_batch",
    "sigmoid",
    "softmax",
    "softmax_scce_grad",
]
