"""Update-period timing detector.

For every plot past the first K of its track, an LSTM regresses the next
update period from a sliding window of K per-plot feature vectors:

    [scaled timing numerical | one-hot timing categoricals | scaled period]

The anomaly score of a plot is the squared error between the predicted and
observed scaled period, thresholded at

    thr = mean(val squared errors) + sample std(val squared errors)

Dropped plots stretch the observed period far past anything benign, so the
plot that follows a gap scores orders of magnitude above thr.  A track's
first K plots can never be scored: there is no full window before them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    EmptySequence,
    InsufficientData,
    NonFiniteLoss,
    ShapeMismatch,
    UntrainedModel,
)
from .field import TrainConfig, split_tracks
from .nnet import AdamState, DenseLayer, LstmCell, MinMaxScaler, adam_step
from .stream import FeatureSchema, PlotRecord, Track

DEFAULT_K = 5
LSTM_HIDDEN = 5


class TimingNet:
    """LSTM (5 hidden units) followed by one linear output neuron."""

    def __init__(self, n_in: int, rng: np.random.Generator,
                 n_hidden: int = LSTM_HIDDEN) -> None:
        self.n_in = n_in
        self.n_hidden = n_hidden
        self.lstm = LstmCell(n_in, n_hidden, rng)
        self.out = DenseLayer(n_hidden, 1, "linear", rng)

    def params(self) -> list[np.ndarray]:
        return self.lstm.params() + self.out.params()

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, tuple]:
        """X (B, K, n_in) -> predictions (B,) plus backward caches."""
        h, caches = self.lstm.forward(X)
        pred = self.out.forward(h)[:, 0]
        return pred, (h, caches)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[0]

    def backward(self, cache: tuple, pred: np.ndarray,
                 targets: np.ndarray) -> list[np.ndarray]:
        """Gradients of mean squared error, ordered like params()."""
        h, lstm_caches = cache
        B = pred.shape[0]
        dpred = (2.0 * (pred - targets) / B)[:, None]
        y_out = pred[:, None]
        dh, dWo, dbo = self.out.backward(h, y_out, dpred)
        dWx, dWh, db = self.lstm.backward(lstm_caches, dh)
        return [dWx, dWh, db, dWo, dbo]

    def to_json(self) -> dict:
        return {
            "n_in": self.n_in,
            "n_hidden": self.n_hidden,
            "Wx": self.lstm.Wx.tolist(),
            "Wh": self.lstm.Wh.tolist(),
            "b": self.lstm.b.tolist(),
            "Wo": self.out.W.tolist(),
            "bo": self.out.b.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TimingNet":
        net = cls(int(obj["n_in"]), np.random.default_rng(0), n_hidden=int(obj["n_hidden"]))
        net.lstm.Wx[...] = np.asarray(obj["Wx"], dtype=np.float64)
        net.lstm.Wh[...] = np.asarray(obj["Wh"], dtype=np.float64)
        net.lstm.b[...] = np.asarray(obj["b"], dtype=np.float64)
        net.out.W[...] = np.asarray(obj["Wo"], dtype=np.float64)
        net.out.b[...] = np.asarray(obj["bo"], dtype=np.float64)
        return net


def calibrate_thr(squared_errors: np.ndarray) -> float:
    """mean + sample standard deviation (n-1 denominator)."""
    squared_errors = np.asarray(squared_errors, dtype=np.float64)
    if squared_errors.size < 2:
        raise InsufficientData("need >= 2 validation errors to calibrate thr")
    return float(squared_errors.mean() + squared_errors.std(ddof=1))


@dataclass
class TimingVerdict:
    session_id: str
    track_id: int
    plot_index: int
    predicted: float
    actual: float
    squared_error: float
    alert: bool


@dataclass
class TimingModel:
    """Trained timing detector with its scalers and calibrated threshold."""

    schema: FeatureSchema
    net: TimingNet
    k: int
    num_scaler: MinMaxScaler
    period_scaler: MinMaxScaler
    thr: float | None = None
    val_mean: float | None = None
    val_std: float | None = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self) -> None:
        self._num_index = self.schema.num_index(self.schema.timing_numerical())
        cats = self.schema.timing_categoricals()
        self._cat_indices = [self.schema.cat_index(n) for n in cats]
        self._cat_cards = [self.schema.cardinality(n) for n in cats]
        offsets = [1]
        for c in self._cat_cards[:-1]:
            offsets.append(offsets[-1] + c)
        self._cat_offsets = offsets
        self.n_in = 1 + sum(self._cat_cards) + 1

    def plot_features(self, plot: PlotRecord) -> np.ndarray:
        """Everything except the period slot (filled by the caller)."""
        vec = np.zeros(self.n_in, dtype=np.float64)
        raw = np.asarray([[plot.num_values[self._num_index]]], dtype=np.float64)
        vec[0] = self.num_scaler.transform(raw)[0, 0]
        for off, ci in zip(self._cat_offsets, self._cat_indices):
            vec[off + plot.cat_values[ci]] = 1.0
        return vec

    def scale_period(self, period: float) -> float:
        raw = np.asarray([[period]], dtype=np.float64)
        return float(self.period_scaler.transform(raw)[0, 0])

    def preprocess_track(self, track: Track) -> tuple[np.ndarray, np.ndarray]:
        """Per-plot vectors (n, n_in) and scaled periods (n,) for a track."""
        periods = np.asarray(track.updating_periods(), dtype=np.float64)
        scaled = self.period_scaler.transform(periods[:, None])[:, 0]
        vecs = np.zeros((len(track), self.n_in), dtype=np.float64)
        for j, plot in enumerate(track.plots):
            vecs[j] = self.plot_features(plot)
            vecs[j, -1] = scaled[j]
        return vecs, scaled

    def windows_from_track(self, track: Track) -> tuple[np.ndarray, np.ndarray]:
        """Sliding windows (m, K, n_in) and next-period targets (m,).

        m = len(track) - K; tracks shorter than K+1 plots yield none.
        """
        n = len(track)
        if n < self.k + 1:
            return (np.zeros((0, self.k, self.n_in)), np.zeros(0))
        vecs, scaled = self.preprocess_track(track)
        m = n - self.k
        X = np.zeros((m, self.k, self.n_in), dtype=np.float64)
        for w in range(m):
            X[w] = vecs[w:w + self.k]
        return X, scaled[self.k:]

    def score_window(self, window: np.ndarray, actual_scaled: float) -> tuple[float, float, bool]:
        """(predicted, squared_error, alert) for one K-step window."""
        if self.thr is None:
            raise UntrainedModel("timing model has no calibrated threshold")
        if window.shape != (self.k, self.n_in):
            raise ShapeMismatch(f"expected window ({self.k}, {self.n_in}), got {window.shape}")
        pred = float(self.net.predict(window[None, :, :])[0])
        se = (pred - actual_scaled) ** 2
        return pred, se, se > self.thr

    def to_json(self) -> dict:
        if self.thr is None:
            raise UntrainedModel("refusing to persist an uncalibrated timing model")
        return {
            "net": self.net.to_json(),
            "k": self.k,
            "num_scaler": self.num_scaler.to_json(),
            "period_scaler": self.period_scaler.to_json(),
            "thr": self.thr,
            "val_mean": self.val_mean,
            "val_std": self.val_std,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: dict, schema: FeatureSchema) -> "TimingModel":
        return cls(
            schema=schema,
            net=TimingNet.from_json(obj["net"]),
            k=int(obj["k"]),
            num_scaler=MinMaxScaler.from_json(obj["num_scaler"]),
            period_scaler=MinMaxScaler.from_json(obj["period_scaler"]),
            thr=float(obj["thr"]),
            val_mean=obj.get("val_mean"),
            val_std=obj.get("val_std"),
            meta=dict(obj.get("meta", {})),
        )


class TimingStreamScorer:
    """Streams plots track by track and scores each one past the warmup.

    Keeps the last K preprocessed vectors per track.  A vector whose period
    raised an alert is withheld from the window (the rest of the history is
    kept), so an anomalous gap cannot contaminate later predictions while
    every subsequent plot still receives a verdict.
    """

    def __init__(self, model: TimingModel, skip_alert_vectors: bool = True) -> None:
        if model.thr is None:
            raise UntrainedModel("timing model has no calibrated threshold")
        self.model = model
        self.skip_alert_vectors = skip_alert_vectors
        self._state: dict[tuple[str, int], dict] = {}

    def on_plot(self, plot: PlotRecord) -> TimingVerdict | None:
        key = (plot.session_id, plot.track_id)
        st = self._state.get(key)
        if st is None:
            self._state[key] = {
                "buffer": deque(maxlen=self.model.k),
                "prev_time": plot.update_time,
                "first_features": self.model.plot_features(plot),
                "count": 1,
            }
            return None
        idx = st["count"]
        st["count"] = idx + 1
        period = float(plot.update_time - st["prev_time"])
        st["prev_time"] = plot.update_time
        scaled = self.model.scale_period(period)
        if st["first_features"] is not None:
            # first plot's period copies the second's, so its vector is only
            # complete now
            first = st["first_features"]
            first[-1] = scaled
            st["buffer"].append(first)
            st["first_features"] = None
        vec = self.model.plot_features(plot)
        vec[-1] = scaled
        verdict = None
        if len(st["buffer"]) >= self.model.k:
            window = np.asarray(st["buffer"], dtype=np.float64)
            pred, se, alert = self.model.score_window(window, scaled)
            verdict = TimingVerdict(
                session_id=plot.session_id,
                track_id=plot.track_id,
                plot_index=idx,
                predicted=pred,
                actual=scaled,
                squared_error=se,
                alert=alert,
            )
            if alert and self.skip_alert_vectors:
                return verdict
        st["buffer"].append(vec)
        return verdict

    def score_track(self, track: Track) -> list[TimingVerdict]:
        """Replay one track through a private buffer; returns its verdicts."""
        self._state.pop((track.session_id, track.track_id), None)
        out = []
        for plot in track.plots:
            v = self.on_plot(plot)
            if v is not None:
                out.append(v)
        self._state.pop((track.session_id, track.track_id), None)
        return out

    def evict(self, session_id: str, track_id: int) -> None:
        self._state.pop((session_id, track_id), None)

    def keys(self) -> list[tuple[str, int]]:
        return list(self._state.keys())


def train_timing_model(tracks: list[Track], schema: FeatureSchema,
                       config: TrainConfig | None = None, seed: int = 0,
                       k: int = DEFAULT_K) -> TimingModel:
    """Fit the LSTM regressor on 80% of tracks and calibrate thr on the rest."""
    config = config or TrainConfig()
    rng = np.random.default_rng(seed)
    usable = [t for t in tracks if len(t) >= k + 1]
    if len(usable) < 2:
        raise InsufficientData(f"need >= 2 tracks of length >= {k + 1}, got {len(usable)}")
    tr_tracks, val_tracks = split_tracks(usable, config.val_fraction, rng)

    # scalers fit on training tracks only (exactly the plots that form
    # training windows)
    num_index = schema.num_index(schema.timing_numerical())
    tr_num1 = np.asarray(
        [[p.num_values[num_index]] for t in tr_tracks for p in t.plots], dtype=np.float64
    )
    tr_periods = np.asarray(
        [[v] for t in tr_tracks for v in t.updating_periods()], dtype=np.float64
    )
    num_scaler = MinMaxScaler().fit(tr_num1)
    period_scaler = MinMaxScaler().fit(tr_periods)

    model = TimingModel(
        schema=schema,
        net=TimingNet(1 + sum(schema.cardinality(n) for n in schema.timing_categoricals()) + 1,
                      rng),
        k=k,
        num_scaler=num_scaler,
        period_scaler=period_scaler,
    )

    def _windows(ts: list[Track]) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = [], []
        for t in ts:
            X, y = model.windows_from_track(t)
            if X.shape[0]:
                xs.append(X)
                ys.append(y)
        if not xs:
            return np.zeros((0, k, model.n_in)), np.zeros(0)
        return np.concatenate(xs), np.concatenate(ys)

    X_tr, y_tr = _windows(tr_tracks)
    X_val, y_val = _windows(val_tracks)
    if X_tr.shape[0] < config.min_windows:
        raise InsufficientData(
            f"{X_tr.shape[0]} training windows < configured minimum {config.min_windows}"
        )
    if X_val.shape[0] < 2:
        raise InsufficientData("need >= 2 validation windows to calibrate thr")

    params = model.net.params()
    adam = AdamState(params, lr=config.lr, beta1=config.beta1,
                     beta2=config.beta2, eps=config.eps)

    def val_loss() -> float:
        losses = []
        for start in range(0, X_val.shape[0], 4096):
            sl = slice(start, start + 4096)
            pred = model.net.predict(X_val[sl])
            losses.append((pred - y_val[sl]) ** 2)
        return float(np.mean(np.concatenate(losses)))

    best_val = np.inf
    best_params: list[np.ndarray] | None = None
    best_epoch = 0
    patience_left = config.patience
    epochs_run = 0
    n = X_tr.shape[0]
    for epoch in range(1, config.max_epochs + 1):
        epochs_run = epoch
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            pred, cache = model.net.forward(X_tr[idx])
            loss = float(np.mean((pred - y_tr[idx]) ** 2))
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"train loss became {loss} at epoch {epoch}")
            grads = model.net.backward(cache, pred, y_tr[idx])
            adam_step(adam, params, grads)
        v = val_loss()
        if not np.isfinite(v):
            raise NonFiniteLoss(f"validation loss became {v} at epoch {epoch}")
        if v < best_val:
            best_val = v
            best_params = [p.copy() for p in params]
            best_epoch = epoch
            patience_left = config.patience
        else:
            patience_left -= 1
            if patience_left == 0:
                break
    assert best_params is not None
    for p, saved in zip(params, best_params):
        p[...] = saved

    val_pred = model.net.predict(X_val)
    val_se = (val_pred - y_val) ** 2
    model.thr = calibrate_thr(val_se)
    model.val_mean = float(val_se.mean())
    model.val_std = float(val_se.std(ddof=1))
    model.meta = {
        "epochs_run": epochs_run,
        "best_epoch": best_epoch,
        "best_val_loss": best_val,
        "n_train_windows": int(n),
        "n_val_windows": int(X_val.shape[0]),
        "val_target_variance": float(y_val.var()),
        "seed": seed,
    }
    return model
