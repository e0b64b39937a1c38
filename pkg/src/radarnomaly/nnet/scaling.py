"""Min-max feature scaling fit on training data only.

Transform is (x - min) / (max - min) with no clipping: values outside the
fitted range extrapolate past [0, 1] on purpose, since out-of-range inputs
are exactly what the detectors need to see.
"""

from __future__ import annotations

import numpy as np

from ..errors import EmptySequence, ShapeMismatch, UntrainedModel


class MinMaxScaler:
    def __init__(self) -> None:
        self.mins: np.ndarray | None = None
        self.spans: np.ndarray | None = None

    def fit(self, X: np.ndarray) -> "MinMaxScaler":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] == 0:
            raise EmptySequence("cannot fit scaler on zero rows")
        self.mins = X.min(axis=0)
        spans = X.max(axis=0) - self.mins
        spans[spans == 0.0] = 1.0  # constant feature maps to 0
        self.spans = spans
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.mins is None or self.spans is None:
            raise UntrainedModel("scaler used before fit")
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mins.shape[0]:
            raise ShapeMismatch(f"scaler expects {self.mins.shape[0]} columns, got {X.shape[-1]}")
        return (X - self.mins) / self.spans

    def to_json(self) -> dict:
        if self.mins is None or self.spans is None:
            raise UntrainedModel("scaler used before fit")
        return {"mins": self.mins.tolist(), "spans": self.spans.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "MinMaxScaler":
        s = cls()
        s.mins = np.asarray(obj["mins"], dtype=np.float64)
        s.spans = np.asarray(obj["spans"], dtype=np.float64)
        return s
