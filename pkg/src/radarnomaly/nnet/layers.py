"""Dense, embedding and LSTM layers with hand-written reverse-mode gradients.

All math is float64 numpy.  Layers hold their parameters as plain arrays and
expose forward/backward pairs; the backward of each layer returns the
gradient with respect to its input plus gradients for every parameter, in
the same order as `params()`.
"""

from __future__ import annotations

import numpy as np

from ..errors import IndexOutOfRange, InvalidConfig, ShapeMismatch


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, max-subtracted for stability."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...], gain: float = 1.0) -> np.ndarray:
    """Seeded uniform init on +-gain * sqrt(6 / (fan_in + fan_out))."""
    limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float64)


# the logistic function has slope 1/4 at the origin, so a stack of sigmoid
# layers initialised at unit gain contracts distances roughly 4x per layer
# and deep autoencoders start inside an unrecoverable plateau; scaling the
# init restores unit signal propagation (Glorot & Bengio derive the limit
# for tanh, the logistic curve is tanh rescaled by 1/4)
SIGMOID_INIT_GAIN = 4.0


class DenseLayer:
    """Affine map y = act(x @ W.T + b) with activation in {sigmoid, linear}."""

    def __init__(self, n_in: int, n_out: int, activation: str,
                 rng: np.random.Generator) -> None:
        if activation not in ("sigmoid", "linear"):
            raise InvalidConfig(f"unsupported activation {activation!r}")
        self.n_in = n_in
        self.n_out = n_out
        self.activation = activation
        gain = SIGMOID_INIT_GAIN if activation == "sigmoid" else 1.0
        self.W = glorot_uniform(rng, n_in, n_out, (n_out, n_in), gain=gain)
        self.b = np.zeros(n_out, dtype=np.float64)

    def params(self) -> list[np.ndarray]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.n_in:
            raise ShapeMismatch(f"dense expects input dim {self.n_in}, got {x.shape[-1]}")
        z = x @ self.W.T + self.b
        if self.activation == "sigmoid":
            return sigmoid(z)
        return z

    def backward(self, x: np.ndarray, y: np.ndarray,
                 dy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Given cached input x and output y, return (dx, dW, db)."""
        if self.activation == "sigmoid":
            dz = dy * y * (1.0 - y)
        else:
            dz = dy
        dW = dz.T @ x if x.ndim == 2 else np.outer(dz, x)
        db = dz.sum(axis=0) if dz.ndim == 2 else dz
        dx = dz @ self.W
        return dx, dW, db


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    return layer.forward(x)


def dense_backward(layer: DenseLayer, x: np.ndarray,
                   dy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stateless variant: recomputes the forward pass internally."""
    y = layer.forward(x)
    return layer.backward(x, y, dy)


class EmbeddingLayer:
    """Per-categorical lookup tables mapping integer codes to real vectors."""

    def __init__(self, cardinalities: list[int], dim: int,
                 rng: np.random.Generator) -> None:
        if dim < 1:
            raise InvalidConfig("embedding dim must be >= 1")
        self.cardinalities = list(cardinalities)
        self.dim = dim
        # fan_in = cardinality matches the one-hot-times-matrix reading
        self.tables = [glorot_uniform(rng, card, dim, (card, dim)) for card in cardinalities]

    def params(self) -> list[np.ndarray]:
        return list(self.tables)

    def forward(self, codes: np.ndarray) -> np.ndarray:
        """codes (B, n_cat) int -> (B, n_cat * dim) float."""
        codes = np.atleast_2d(codes)
        if codes.shape[1] != len(self.tables):
            raise ShapeMismatch(
                f"expected {len(self.tables)} categorical codes, got {codes.shape[1]}"
            )
        cols = []
        for j, table in enumerate(self.tables):
            c = codes[:, j]
            if c.min() < 0 or c.max() >= table.shape[0]:
                raise IndexOutOfRange(f"categorical {j} code out of range")
            cols.append(table[c])
        return np.concatenate(cols, axis=1)

    def backward(self, codes: np.ndarray, dout: np.ndarray) -> list[np.ndarray]:
        """Gradient for each table; only looked-up rows receive mass."""
        codes = np.atleast_2d(codes)
        dout = np.atleast_2d(dout)
        grads = []
        for j, table in enumerate(self.tables):
            g = np.zeros_like(table)
            sl = dout[:, j * self.dim:(j + 1) * self.dim]
            np.add.at(g, codes[:, j], sl)
            grads.append(g)
        return grads


class LstmCell:
    """Single-layer LSTM with fused gate weights.

    Gate order along the first axis is [input, forget, cell, output].
    Standard formulation: sigmoid gates, tanh cell squashing.
    """

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator) -> None:
        self.n_in = n_in
        self.n_hidden = n_hidden
        h = n_hidden
        self.Wx = glorot_uniform(rng, n_in, h, (4 * h, n_in))
        self.Wh = glorot_uniform(rng, h, h, (4 * h, h))
        self.b = np.zeros(4 * h, dtype=np.float64)

    def params(self) -> list[np.ndarray]:
        return [self.Wx, self.Wh, self.b]

    def forward(self, xs: np.ndarray) -> tuple[np.ndarray, list]:
        """Run the cell over xs (B, K, n_in); returns (h_final, caches).

        caches holds per-step tensors needed by backward.
        """
        if xs.ndim != 3 or xs.shape[2] != self.n_in:
            raise ShapeMismatch(f"lstm expects (B, K, {self.n_in}), got {xs.shape}")
        B, K, _ = xs.shape
        H = self.n_hidden
        h = np.zeros((B, H), dtype=np.float64)
        c = np.zeros((B, H), dtype=np.float64)
        caches = []
        for t in range(K):
            x = xs[:, t, :]
            z = x @ self.Wx.T + h @ self.Wh.T + self.b
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = sigmoid(z[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            caches.append((x, h, c, i, f, g, o, tc))
            h, c = h_new, c_new
        return h, caches

    def backward(self, caches: list, dh_final: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Backprop through time from the final hidden state gradient."""
        H = self.n_hidden
        dWx = np.zeros_like(self.Wx)
        dWh = np.zeros_like(self.Wh)
        db = np.zeros_like(self.b)
        dh = dh_final
        dc = np.zeros_like(dh_final)
        for x, h_prev, c_prev, i, f, g, o, tc in reversed(caches):
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate(
                [di * i * (1.0 - i),
                 df * f * (1.0 - f),
                 dg * (1.0 - g * g),
                 do * o * (1.0 - o)],
                axis=1,
            )
            dWx += dz.T @ x
            dWh += dz.T @ h_prev
            db += dz.sum(axis=0)
            dh = dz @ self.Wh
            dc = dc * f
        return dWx, dWh, db
