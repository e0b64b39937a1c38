"""Field-consistency detector.

A stacked autoencoder reconstructs each plot from a compressed joint code:
categorical features enter through one learned embedding scalar each,
numerical features min-max scaled, and the output head reproduces both (17
linear neurons plus one softmax group per categorical).  The per-plot score
is the reconstruction loss

    score = MSE(numericals) + sum_over_categoricals SCCE(categorical)

so plots whose fields disagree with the joint structure score high.  The
plot threshold is the 99th percentile of validation scores; the track
threshold is the largest running-average score seen on validation tracks.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    EmptySequence,
    InsufficientData,
    InvalidConfig,
    NonFiniteLoss,
    ShapeMismatch,
    UntrainedModel,
)
from .nnet import (
    AdamState,
    DenseLayer,
    EmbeddingLayer,
    MinMaxScaler,
    PROB_FLOOR,
    adam_step,
)
from .stream import FeatureSchema, PlotRecord, Track

EMBEDDING_DIM = 1
CANONICAL_WIDTHS = (27, 20, 15, 10, 15, 20, 27)
PLOT_PERCENTILE = 99.0
# Running track averages are compared to the threshold only once this many
# plots have arrived; earlier prefixes are too noisy to act on.
TRACK_WARMUP = 10


@dataclass
class TrainConfig:
    """Shared knobs for both detector training loops."""

    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 60
    # note for corpus sizing: the track threshold is the max statistic over
    # validation tracks, so the false alert rate on fresh benign tracks
    # scales like 1 / (n_val_tracks + 1)
    val_fraction: float = 0.2
    min_plots: int = 500
    min_windows: int = 200

    def __post_init__(self) -> None:
        if not 0.0 < self.val_fraction < 1.0:
            raise InvalidConfig("val_fraction must be in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise InvalidConfig("batch_size, max_epochs and patience must be positive")


def default_widths(input_dim: int) -> tuple[int, ...]:
    """Autoencoder layer widths; exactly the canonical stack at input 27."""
    if input_dim == 27:
        return CANONICAL_WIDTHS
    ratios = [w / 27.0 for w in CANONICAL_WIDTHS]
    return tuple(max(2, round(r * input_dim)) for r in ratios)


class FieldNet:
    """Embedding + sigmoid autoencoder stack + mixed reconstruction head."""

    def __init__(self, schema: FeatureSchema, rng: np.random.Generator,
                 widths: tuple[int, ...] | None = None) -> None:
        self.schema = schema
        cards = [c for _, c in schema.categorical]
        self.n_cat = len(cards)
        self.n_num = schema.n_numerical
        self.input_dim = self.n_cat * EMBEDDING_DIM + self.n_num
        self.widths = tuple(widths) if widths is not None else default_widths(self.input_dim)
        if self.widths[0] != self.input_dim or self.widths[-1] != self.input_dim:
            raise InvalidConfig("first and last autoencoder widths must equal the input dim")
        self.embedding = EmbeddingLayer(cards, EMBEDDING_DIM, rng)
        self.ae_layers: list[DenseLayer] = []
        prev = self.input_dim
        for w in self.widths:
            self.ae_layers.append(DenseLayer(prev, w, "sigmoid", rng))
            prev = w
        self.head = DenseLayer(prev, self.n_num + schema.sum_cardinalities, "linear", rng)
        # group layout inside the head tail (after the n_num linear outputs)
        self.cards = np.asarray(cards, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.cards)[:-1]]).astype(np.int64)

    def params(self) -> list[np.ndarray]:
        out = self.embedding.params()
        for layer in self.ae_layers:
            out.extend(layer.params())
        out.extend(self.head.params())
        return out

    # -- forward -------------------------------------------------------

    def forward(self, codes: np.ndarray, nums: np.ndarray) -> dict:
        """Batch forward pass; returns cached tensors plus per-plot losses."""
        codes = np.atleast_2d(np.asarray(codes, dtype=np.int64))
        nums = np.atleast_2d(np.asarray(nums, dtype=np.float64))
        if nums.shape[1] != self.n_num:
            raise ShapeMismatch(f"expected {self.n_num} numericals, got {nums.shape[1]}")
        B = codes.shape[0]
        emb = self.embedding.forward(codes)
        x0 = np.concatenate([emb, nums], axis=1)
        acts = [x0]
        h = x0
        for layer in self.ae_layers:
            h = layer.forward(h)
            acts.append(h)
        zh = self.head.forward(h)
        num_pred = zh[:, :self.n_num]
        tail = zh[:, self.n_num:]
        # per-group softmax over contiguous slices of the tail
        starts = self.offsets
        mx = np.maximum.reduceat(tail, starts, axis=1)
        e = np.exp(tail - np.repeat(mx, self.cards, axis=1))
        sums = np.add.reduceat(e, starts, axis=1)
        probs = e / np.repeat(sums, self.cards, axis=1)
        rows = np.arange(B)
        target_cols = self.offsets[None, :] + codes
        p_target = probs[rows[:, None], target_cols]
        mse_i = np.mean((num_pred - nums) ** 2, axis=1)
        scce_i = -np.log(np.maximum(p_target, PROB_FLOOR)).sum(axis=1)
        return {
            "codes": codes, "nums": nums, "acts": acts, "zh": zh,
            "num_pred": num_pred, "probs": probs, "p_target": p_target,
            "target_cols": target_cols, "loss_i": mse_i + scce_i,
            "mse_i": mse_i, "scce_i": scce_i,
        }

    def batch_loss(self, codes: np.ndarray, nums: np.ndarray) -> float:
        return float(np.mean(self.forward(codes, nums)["loss_i"]))

    # -- backward ------------------------------------------------------

    def backward(self, cache: dict) -> list[np.ndarray]:
        """Gradients of the batch-mean loss, ordered like params()."""
        codes = cache["codes"]
        nums = cache["nums"]
        B = codes.shape[0]
        rows = np.arange(B)
        dzh = np.empty_like(cache["zh"])
        dzh[:, :self.n_num] = (2.0 / self.n_num) * (cache["num_pred"] - nums) / B
        dtail = cache["probs"].copy()
        dtail[rows[:, None], cache["target_cols"]] -= 1.0
        floored = cache["p_target"] <= PROB_FLOOR
        if np.any(floored):
            # floored scce terms are locally constant: zero that group's slice
            for r, g in np.argwhere(floored):
                off = self.offsets[g]
                dtail[r, off:off + self.cards[g]] = 0.0
        dzh[:, self.n_num:] = dtail / B
        acts = cache["acts"]
        grads_rev: list[np.ndarray] = []
        dh, dW, db = self.head.backward(acts[-1], cache["zh"], dzh)
        grads_rev.extend([db, dW])
        for i in range(len(self.ae_layers) - 1, -1, -1):
            layer = self.ae_layers[i]
            dh, dW, db = layer.backward(acts[i], acts[i + 1], dh)
            grads_rev.extend([db, dW])
        demb = dh[:, :self.n_cat * EMBEDDING_DIM]
        emb_grads = self.embedding.backward(codes, demb)
        grads_rev.extend(reversed(emb_grads))
        return list(reversed(grads_rev))

    # -- persistence ---------------------------------------------------

    def to_json(self) -> dict:
        return {
            "widths": list(self.widths),
            "embedding": [t.tolist() for t in self.embedding.tables],
            "ae": [{"W": l.W.tolist(), "b": l.b.tolist()} for l in self.ae_layers],
            "head": {"W": self.head.W.tolist(), "b": self.head.b.tolist()},
        }

    @classmethod
    def from_json(cls, obj: dict, schema: FeatureSchema) -> "FieldNet":
        net = cls(schema, np.random.default_rng(0), widths=tuple(obj["widths"]))
        for t, saved in zip(net.embedding.tables, obj["embedding"]):
            t[...] = np.asarray(saved, dtype=np.float64)
        for layer, saved in zip(net.ae_layers, obj["ae"]):
            layer.W[...] = np.asarray(saved["W"], dtype=np.float64)
            layer.b[...] = np.asarray(saved["b"], dtype=np.float64)
        net.head.W[...] = np.asarray(obj["head"]["W"], dtype=np.float64)
        net.head.b[...] = np.asarray(obj["head"]["b"], dtype=np.float64)
        return net


# -- calibration helpers -------------------------------------------------


def calibrate_plot_threshold(scores: np.ndarray, percentile: float = PLOT_PERCENTILE) -> float:
    """Nearest-rank percentile: for 100 scores the 99th is the 99th smallest."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptySequence("cannot calibrate on zero scores")
    if not 0.0 < percentile <= 100.0:
        raise InvalidConfig("percentile must be in (0, 100]")
    ordered = np.sort(scores)
    rank = int(np.ceil(percentile / 100.0 * scores.size))
    return float(ordered[max(rank, 1) - 1])


def max_running_average(scores: np.ndarray, warmup: int = TRACK_WARMUP) -> float:
    """Largest prefix mean of a track's plot scores, ignoring prefixes
    shorter than `warmup` (short tracks contribute their final mean)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptySequence("track has no scores")
    prefix_means = np.cumsum(scores) / np.arange(1, scores.size + 1)
    start = min(warmup, scores.size) - 1
    return float(prefix_means[start:].max())


def calibrate_track_threshold(track_scores: list[np.ndarray],
                              warmup: int = TRACK_WARMUP) -> float:
    """Maximum over validation tracks of the warmed-up running average.

    For constant per-track scores this is exactly the max of track means.
    Calibrating on the same statistic the streaming detector monitors
    guarantees zero track alerts when the validation set is replayed.
    """
    if not track_scores:
        raise EmptySequence("no validation tracks to calibrate on")
    return max(max_running_average(s, warmup) for s in track_scores)


class TrackScoreCollector:
    """Running sum/count of plot scores per (session_id, track_id)."""

    def __init__(self) -> None:
        self._state: dict[tuple[str, int], list[float]] = {}

    def add(self, session_id: str, track_id: int, score: float) -> tuple[float, int]:
        """Record a score; returns (running mean, plots seen)."""
        st = self._state.setdefault((session_id, track_id), [0.0, 0])
        st[0] += score
        st[1] += 1
        return st[0] / st[1], int(st[1])

    def mean(self, session_id: str, track_id: int) -> float:
        st = self._state.get((session_id, track_id))
        if st is None or st[1] == 0:
            raise EmptySequence(f"no scores collected for ({session_id!r}, {track_id})")
        return st[0] / st[1]

    def evict(self, session_id: str, track_id: int) -> None:
        self._state.pop((session_id, track_id), None)

    def keys(self) -> list[tuple[str, int]]:
        return list(self._state.keys())


@dataclass
class FieldVerdict:
    plot_score: float
    plot_alert: bool
    track_mean: float
    track_alert: bool


@dataclass
class FieldModel:
    """Trained field detector: network, input scaler and both thresholds."""

    schema: FeatureSchema
    net: FieldNet
    scaler: MinMaxScaler
    plot_threshold: float | None = None
    track_threshold: float | None = None
    meta: dict = dc_field(default_factory=dict)

    def _arrays(self, plots: list[PlotRecord]) -> tuple[np.ndarray, np.ndarray]:
        codes = np.asarray([p.cat_values for p in plots], dtype=np.int64)
        nums = np.asarray([p.num_values for p in plots], dtype=np.float64)
        return codes, self.scaler.transform(nums)

    def score_plots(self, plots: list[PlotRecord]) -> np.ndarray:
        """Per-plot reconstruction scores."""
        if not plots:
            return np.zeros(0, dtype=np.float64)
        codes, nums = self._arrays(plots)
        out = np.empty(len(plots), dtype=np.float64)
        for start in range(0, len(plots), 4096):
            sl = slice(start, start + 4096)
            out[sl] = self.net.forward(codes[sl], nums[sl])["loss_i"]
        return out

    def score_plot(self, plot: PlotRecord) -> float:
        return float(self.score_plots([plot])[0])

    def score_track(self, track: Track) -> float:
        """Mean plot score over the whole track."""
        if not track.plots:
            raise EmptySequence("cannot score an empty track")
        return float(self.score_plots(track.plots).mean())

    def detect(self, plot: PlotRecord, collector: TrackScoreCollector) -> FieldVerdict:
        """Score one plot and update its track's running average.

        Alerts use strict inequality; the track alert additionally waits for
        TRACK_WARMUP plots of that track.
        """
        if self.plot_threshold is None or self.track_threshold is None:
            raise UntrainedModel("field model has no calibrated thresholds")
        score = self.score_plot(plot)
        mean, seen = collector.add(plot.session_id, plot.track_id, score)
        return FieldVerdict(
            plot_score=score,
            plot_alert=score > self.plot_threshold,
            track_mean=mean,
            track_alert=seen >= TRACK_WARMUP and mean > self.track_threshold,
        )

    def to_json(self) -> dict:
        if self.plot_threshold is None or self.track_threshold is None:
            raise UntrainedModel("refusing to persist an uncalibrated field model")
        return {
            "net": self.net.to_json(),
            "scaler": self.scaler.to_json(),
            "plot_threshold": self.plot_threshold,
            "track_threshold": self.track_threshold,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: dict, schema: FeatureSchema) -> "FieldModel":
        return cls(
            schema=schema,
            net=FieldNet.from_json(obj["net"], schema),
            scaler=MinMaxScaler.from_json(obj["scaler"]),
            plot_threshold=float(obj["plot_threshold"]),
            track_threshold=float(obj["track_threshold"]),
            meta=dict(obj.get("meta", {})),
        )


def split_tracks(tracks: list[Track], val_fraction: float,
                 rng: np.random.Generator) -> tuple[list[Track], list[Track]]:
    """Seeded track-level split; both sides are guaranteed non-empty."""
    if len(tracks) < 2:
        raise InsufficientData(f"need >= 2 tracks to split, got {len(tracks)}")
    perm = rng.permutation(len(tracks))
    n_tr = int(round((1.0 - val_fraction) * len(tracks)))
    n_tr = min(max(n_tr, 1), len(tracks) - 1)
    train = [tracks[i] for i in perm[:n_tr]]
    val = [tracks[i] for i in perm[n_tr:]]
    return train, val


def train_field_model(tracks: list[Track], schema: FeatureSchema,
                      config: TrainConfig | None = None, seed: int = 0,
                      widths: tuple[int, ...] | None = None) -> FieldModel:
    """Train on 80% of tracks, early-stop on the rest, then calibrate.

    Training minimizes the batch mean of the per-plot reconstruction loss
    with Adam; the returned model carries the weights from the epoch with
    the lowest validation loss.
    """
    config = config or TrainConfig()
    total_plots = sum(len(t) for t in tracks)
    if total_plots < config.min_plots:
        raise InsufficientData(
            f"{total_plots} plots < configured minimum {config.min_plots}"
        )
    rng = np.random.default_rng(seed)
    tr_tracks, val_tracks = split_tracks(tracks, config.val_fraction, rng)

    def _collect(ts: list[Track]) -> tuple[np.ndarray, np.ndarray]:
        plots = [p for t in ts for p in t.plots]
        codes = np.asarray([p.cat_values for p in plots], dtype=np.int64)
        nums = np.asarray([p.num_values for p in plots], dtype=np.float64)
        return codes, nums

    tr_codes, tr_nums_raw = _collect(tr_tracks)
    val_codes, val_nums_raw = _collect(val_tracks)
    scaler = MinMaxScaler().fit(tr_nums_raw)
    tr_nums = scaler.transform(tr_nums_raw)
    val_nums = scaler.transform(val_nums_raw)

    net = FieldNet(schema, rng, widths=widths)
    params = net.params()
    adam = AdamState(params, lr=config.lr, beta1=config.beta1,
                     beta2=config.beta2, eps=config.eps)

    def val_loss() -> float:
        losses = []
        for start in range(0, val_codes.shape[0], 4096):
            sl = slice(start, start + 4096)
            losses.append(net.forward(val_codes[sl], val_nums[sl])["loss_i"])
        return float(np.mean(np.concatenate(losses)))

    best_val = np.inf
    best_params: list[np.ndarray] | None = None
    best_epoch = 0
    patience_left = config.patience
    n_tr = tr_codes.shape[0]
    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        epochs_run = epoch
        order = rng.permutation(n_tr)
        for start in range(0, n_tr, config.batch_size):
            idx = order[start:start + config.batch_size]
            cache = net.forward(tr_codes[idx], tr_nums[idx])
            loss = float(np.mean(cache["loss_i"]))
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"train loss became {loss} at epoch {epoch}")
            grads = net.backward(cache)
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

    model = FieldModel(schema=schema, net=net, scaler=scaler)
    val_plot_scores = []
    per_track_scores = []
    for t in val_tracks:
        # Calibrate on single-plot forwards, the streaming detector's own
        # arithmetic path: batched forwards differ from it in the last ulp
        # (kernels change with batch shape), which would let a replayed
        # calibration track beat the track threshold by one ulp.
        s = np.asarray([model.score_plot(p) for p in t.plots])
        per_track_scores.append(s)
        val_plot_scores.append(s)
    all_val_scores = np.concatenate(val_plot_scores)
    model.plot_threshold = calibrate_plot_threshold(all_val_scores)
    model.track_threshold = calibrate_track_threshold(per_track_scores)
    model.meta = {
        "epochs_run": epochs_run,
        "best_epoch": best_epoch,
        "best_val_loss": best_val,
        "n_train_tracks": len(tr_tracks),
        "n_val_tracks": len(val_tracks),
        "n_train_plots": int(n_tr),
        "seed": seed,
    }
    return model
