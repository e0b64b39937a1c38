"""Evaluation protocols, ranking metrics and the reporting battery.

Three train/test splits (cross-session, chronological, transfer), exact
rank-based AUC and step-sum average precision, thresholded rate summaries,
and a battery runner that trains the detectors per split, forges attacks on
the test side, and writes deterministic report/curve/summary files.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .attacks import LabeledTestSet, drop_plots, manipulate_categorical
from .errors import (
    EmptySequence,
    InvalidConfig,
    NoPositives,
    OneClassOnly,
    SingleSession,
    UnknownSession,
)
from .field import FieldModel, TrainConfig, max_running_average, train_field_model
from .stream import FeatureSchema, PlotRecord, SessionStore, Track, assemble_tracks
from .timing import DEFAULT_K, TimingModel, TimingStreamScorer, train_timing_model

SETUP_KINDS = ("cross_session", "chronological", "transfer")
DESIGNATED_FEATURES = ("objectType", "alertRaised", "objectCategory")


@dataclass(frozen=True)
class EvalSetup:
    """One train/test protocol instance."""

    kind: str
    examined: str
    fraction: float = 0.9

    def __post_init__(self) -> None:
        if self.kind not in SETUP_KINDS:
            raise InvalidConfig(f"unknown setup kind {self.kind!r}")
        if not 0.0 < self.fraction < 1.0:
            raise InvalidConfig("split fraction must be in (0, 1)")


@dataclass(frozen=True)
class AttackSpec:
    """Which test-set forge to run and with what parameters."""

    kind: str
    feature: str | None = None
    c: int = 10
    k: int = DEFAULT_K

    def __post_init__(self) -> None:
        if self.kind not in ("manipulation", "drop"):
            raise InvalidConfig(f"unknown attack kind {self.kind!r}")
        if self.kind == "manipulation" and not self.feature:
            raise InvalidConfig("manipulation attack needs a feature name")

    def tag(self) -> str:
        return f"manipulation_{self.feature}" if self.kind == "manipulation" else "drop"


def _session_plots_in_time_order(store: SessionStore, session_id: str) -> list[PlotRecord]:
    """All plots of one session, globally ordered by time.

    Ties are broken by track id and position within the track so the order
    is reproducible regardless of how the store was built.
    """
    keyed = []
    for track in sorted(store.tracks(session_id), key=lambda t: t.track_id):
        for pos, plot in enumerate(track.plots):
            keyed.append(((plot.update_time, plot.track_id, pos), plot))
    keyed.sort(key=lambda kv: kv[0])
    return [plot for _, plot in keyed]


def make_split(store: SessionStore, setup: EvalSetup) -> tuple[list[PlotRecord], list[PlotRecord]]:
    """Train and test plot lists for one setup; a disjoint exact partition."""
    sids = sorted(store.session_ids())
    if setup.examined not in sids:
        raise UnknownSession(f"no session {setup.examined!r} in corpus")
    others = [s for s in sids if s != setup.examined]

    if setup.kind == "cross_session":
        if not others:
            raise SingleSession("cross_session needs at least two sessions")
        train = [p for s in others for p in store.plots(s)]
        return train, store.plots(setup.examined)

    ordered = _session_plots_in_time_order(store, setup.examined)
    if setup.kind == "chronological":
        cut = int(setup.fraction * len(ordered))
        return ordered[:cut], ordered[cut:]

    # transfer: everything foreign plus the head of the examined session
    if not others:
        raise SingleSession("transfer needs at least two sessions")
    head = int((1.0 - setup.fraction) * len(ordered))
    train = [p for s in others for p in store.plots(s)]
    return train + ordered[:head], ordered[head:]


@dataclass
class SplitData:
    """A split materialised for training and attack forging."""

    train_plots: list[PlotRecord]
    test_plots: list[PlotRecord]
    field_train_tracks: list[Track]
    timing_train_tracks: list[Track]
    test_store: SessionStore


def materialize_split(store: SessionStore, setup: EvalSetup) -> SplitData:
    """Build track-level training inputs and the test-side store.

    Track-granular training (the field detector) uses only tracks whose
    every plot landed in the train side; the timing detector also trains on
    the train-side prefixes of straddling tracks, since its windows are
    local runs of consecutive plots.
    """
    train_plots, test_plots = make_split(store, setup)
    train_store = assemble_tracks(train_plots)
    full_len = {(t.session_id, t.track_id): len(t) for t in store.tracks()}
    field_tracks = [
        t for t in train_store.tracks()
        if len(t) == full_len[(t.session_id, t.track_id)]
    ]
    return SplitData(
        train_plots=train_plots,
        test_plots=test_plots,
        field_train_tracks=field_tracks,
        timing_train_tracks=train_store.tracks(),
        test_store=assemble_tracks(test_plots),
    )


# -- metrics -------------------------------------------------------------


def _split_scores(scores) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray([float(x) for x, _ in scores], dtype=np.float64)
    y = np.asarray([int(l) for _, l in scores], dtype=np.int64)
    if s.size == 0:
        raise EmptySequence("no scores given")
    if np.any((y != 0) & (y != 1)):
        raise InvalidConfig("labels must be 0 or 1")
    return s, y


def roc_auc(scores) -> float:
    """Rank-based AUC (Mann-Whitney), ties counted as half."""
    s, y = _split_scores(scores)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("AUC needs both a positive and a negative example")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    boundaries = np.flatnonzero(sorted_s[1:] != sorted_s[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [s.size]))
    midranks = (starts + ends + 1) / 2.0
    ranks = np.empty(s.size, dtype=np.float64)
    ranks[order] = np.repeat(midranks, ends - starts)
    u = float(ranks[y == 1].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def average_precision(scores) -> float:
    """Step-sum AP over a descending sweep of the distinct score values."""
    s, y = _split_scores(scores)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("average precision needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s_desc = s[order]
    y_desc = y[order]
    ap = 0.0
    tp = 0
    fp = 0
    i = 0
    n = s.size
    while i < n:
        j = i
        block_tp = 0
        while j < n and s_desc[j] == s_desc[i]:
            block_tp += int(y_desc[j])
            j += 1
        tp += block_tp
        fp += (j - i) - block_tp
        if block_tp > 0:
            ap += (block_tp / n_pos) * (tp / (tp + fp))
        i = j
    return ap


@dataclass
class RateSummary:
    """Confusion counts and rates at one fixed threshold (strict >)."""

    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    tpr: float
    fpr: float
    precision: float
    flags: tuple[str, ...] = ()


def rate_at_threshold(scores, threshold: float) -> RateSummary:
    """Rates with score > threshold as the positive call.

    An empty class yields a 0.0 rate plus a flag rather than an error.
    """
    s, y = _split_scores(scores)
    pred = s > threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    flags = []
    if tp + fn == 0:
        flags.append("no_positives")
    if fp + tn == 0:
        flags.append("no_negatives")
    if tp + fp == 0:
        flags.append("no_predicted_positives")
    return RateSummary(
        threshold=float(threshold),
        tp=tp, fp=fp, tn=tn, fn=fn,
        tpr=tp / (tp + fn) if tp + fn else 0.0,
        fpr=fp / (fp + tn) if fp + tn else 0.0,
        precision=tp / (tp + fp) if tp + fp else 0.0,
        flags=tuple(flags),
    )


@dataclass
class CurvePoint:
    threshold: float | None
    tpr: float
    fpr: float
    precision: float
    recall: float


@dataclass
class CurveReport:
    """ROC/PRC points over the distinct finite scores, plus AUC and AP."""

    points: list[CurvePoint]
    auc: float
    ap: float
    n_pos: int
    n_neg: int


def curve_report(scores) -> CurveReport:
    s, y = _split_scores(scores)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    order = np.argsort(-s, kind="mergesort")
    s_desc = s[order]
    y_desc = y[order]
    points: list[CurvePoint] = []
    tp = 0
    fp = 0
    i = 0
    n = s.size
    while i < n:
        j = i
        while j < n and s_desc[j] == s_desc[i]:
            tp += int(y_desc[j])
            fp += 1 - int(y_desc[j])
            j += 1
        if math.isfinite(s_desc[i]):
            points.append(CurvePoint(
                threshold=float(s_desc[i]),
                tpr=tp / n_pos if n_pos else 0.0,
                fpr=fp / n_neg if n_neg else 0.0,
                precision=tp / (tp + fp),
                recall=tp / n_pos if n_pos else 0.0,
            ))
        i = j
    # terminal all-positive point so curves always end at (1, 1)
    points.append(CurvePoint(
        threshold=None,
        tpr=1.0 if n_pos else 0.0,
        fpr=1.0 if n_neg else 0.0,
        precision=n_pos / (n_pos + n_neg) if n_pos + n_neg else 0.0,
        recall=1.0 if n_pos else 0.0,
    ))
    return CurveReport(
        points=points,
        auc=roc_auc(scores),
        ap=average_precision(scores),
        n_pos=n_pos,
        n_neg=n_neg,
    )


# -- experiment runner ---------------------------------------------------

MISSED_SCORE = float("-inf")


def score_manipulation(model: FieldModel, test_set: LabeledTestSet) -> list[tuple[float, int]]:
    """Track-level scores: mean plot score per track, track label = any plot."""
    out = []
    for track, labels in test_set.labeled_tracks():
        out.append((model.score_track(track), max(labels)))
    return out


def score_drop(model: TimingModel, test_set: LabeledTestSet) -> tuple[list[tuple[float, int]], dict]:
    """Plot-level squared errors from a streaming replay of each track.

    Plots inside the warm-up window carry no verdict; a positive plot left
    unscored that way counts as a miss (sentinel score below every real
    one), while unscored benign plots simply stay out of the denominator.
    """
    scorer = TimingStreamScorer(model)
    out: list[tuple[float, int]] = []
    n_unscored_pos = 0
    n_unscored_neg = 0
    for track, labels in test_set.labeled_tracks():
        verdicts = {v.plot_index: v for v in scorer.score_track(track)}
        for idx, label in enumerate(labels):
            v = verdicts.get(idx)
            if v is not None:
                out.append((v.squared_error, label))
            elif label == 1:
                n_unscored_pos += 1
                out.append((MISSED_SCORE, 1))
            else:
                n_unscored_neg += 1
    return out, {"n_unscored_positives": n_unscored_pos,
                 "n_unscored_benign": n_unscored_neg}


def derived_seed(master: int, *tags: int) -> int:
    """Stable sub-seed for one experiment component."""
    return int(np.random.SeedSequence([master, *tags]).generate_state(1)[0])


@dataclass
class ExperimentResult:
    setup: EvalSetup
    attack: AttackSpec
    seed: int
    report: CurveReport
    rates: RateSummary
    counts: dict
    model_meta: dict
    scores: list[tuple[float, int]] = dc_field(default_factory=list, repr=False)

    def to_json_dict(self) -> dict:
        return {
            "setup": {"kind": self.setup.kind, "examined": self.setup.examined,
                      "fraction": self.setup.fraction},
            "attack": {"kind": self.attack.kind, "feature": self.attack.feature,
                       "c": self.attack.c, "k": self.attack.k},
            "seed": self.seed,
            "metrics": {
                "auc": self.report.auc,
                "ap": self.report.ap,
                "tpr": self.rates.tpr,
                "fpr": self.rates.fpr,
                "precision": self.rates.precision,
                "threshold": self.rates.threshold,
                "flags": list(self.rates.flags),
            },
            "counts": dict(self.counts),
            "model": dict(self.model_meta),
        }


def _forge(test_store: SessionStore, schema: FeatureSchema, attack: AttackSpec,
           seed: int) -> LabeledTestSet:
    if attack.kind == "manipulation":
        return manipulate_categorical(test_store, schema, attack.feature, seed=seed)
    return drop_plots(test_store, c=attack.c, k=attack.k, seed=seed)


def run_experiment(corpus: SessionStore, schema: FeatureSchema, setup: EvalSetup,
                   attack: AttackSpec, seed: int = 0,
                   config: TrainConfig | None = None) -> ExperimentResult:
    """Train the matching detector on the split, forge and score the attack.

    Manipulation is scored track-level by the field detector at its track
    threshold; dropping is scored plot-level by the timing detector at thr.
    """
    config = config or TrainConfig()
    split = materialize_split(corpus, setup)
    si = sorted(corpus.session_ids()).index(setup.examined)
    ki = SETUP_KINDS.index(setup.kind)
    forge_seed = derived_seed(seed, 1, ki, si)
    test_set = _forge(split.test_store, schema, attack, forge_seed)

    counts: dict = {
        "n_train_plots": len(split.train_plots),
        "n_test_plots": len(split.test_plots),
        "n_labeled_plots": len(test_set.plots),
    }
    if attack.kind == "manipulation":
        model = train_field_model(split.field_train_tracks, schema, config,
                                  seed=derived_seed(seed, 2, ki, si))
        scores = score_manipulation(model, test_set)
        threshold = model.track_threshold
        meta = dict(model.meta)
    else:
        model = train_timing_model(split.timing_train_tracks, schema, config,
                                   seed=derived_seed(seed, 3, ki, si),
                                   k=attack.k)
        scores, extra = score_drop(model, test_set)
        counts.update(extra)
        threshold = model.thr
        meta = dict(model.meta)

    counts["n_scored"] = len(scores)
    counts["n_pos"] = sum(l for _, l in scores)
    counts["n_neg"] = len(scores) - counts["n_pos"]
    return ExperimentResult(
        setup=setup,
        attack=attack,
        seed=seed,
        report=curve_report(scores),
        rates=rate_at_threshold(scores, threshold),
        counts=counts,
        model_meta=meta,
        scores=scores,
    )


# -- battery and reporting -----------------------------------------------


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_curves(out_dir: str, report: CurveReport) -> None:
    """roc.csv and prc.csv for one experiment."""
    with open(os.path.join(out_dir, "roc.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "tpr"])
        for p in report.points:
            w.writerow(["" if p.threshold is None else repr(p.threshold),
                        repr(p.fpr), repr(p.tpr)])
    with open(os.path.join(out_dir, "prc.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "recall", "precision"])
        for p in report.points:
            w.writerow(["" if p.threshold is None else repr(p.threshold),
                        repr(p.recall), repr(p.precision)])


DEFAULT_BATTERY = {
    "cross_session": tuple(
        [AttackSpec("manipulation", feature=f) for f in DESIGNATED_FEATURES]
        + [AttackSpec("drop")]
    ),
    "chronological": (AttackSpec("drop"),),
    "transfer": (AttackSpec("drop"),),
}


def run_battery(corpus: SessionStore, schema: FeatureSchema, out_dir: str,
                seed: int = 0, config: TrainConfig | None = None,
                battery: dict | None = None) -> list[dict]:
    """The per-session experiment battery with deterministic file output.

    For each setup and each examined session, the needed detectors are
    trained once and reused across that setup's attacks.  Writes per
    experiment report.json/roc.csv/prc.csv, per (setup, session) model
    files, and one summary.csv; reruns with equal seeds give equal bytes.
    """
    from .nnet.modelfile import dump_model

    config = config or TrainConfig()
    battery = battery if battery is not None else DEFAULT_BATTERY
    sids = sorted(corpus.session_ids())
    rows: list[dict] = []

    for kind, attacks in battery.items():
        ki = SETUP_KINDS.index(kind)
        per_attack: dict[str, list[ExperimentResult]] = {}
        for si, examined in enumerate(sids):
            setup = EvalSetup(kind=kind, examined=examined)
            split = materialize_split(corpus, setup)
            forge_seed = derived_seed(seed, 1, ki, si)

            need_field = any(a.kind == "manipulation" for a in attacks)
            need_timing = any(a.kind == "drop" for a in attacks)
            field_model = timing_model = None
            sections: dict = {}
            if need_field:
                field_model = train_field_model(split.field_train_tracks, schema,
                                                config, seed=derived_seed(seed, 2, ki, si))
                sections["field"] = field_model.to_json()
            if need_timing:
                k = next(a.k for a in attacks if a.kind == "drop")
                timing_model = train_timing_model(split.timing_train_tracks, schema,
                                                  config, seed=derived_seed(seed, 3, ki, si),
                                                  k=k)
                sections["timing"] = timing_model.to_json()

            sdir = os.path.join(out_dir, kind, examined)
            os.makedirs(sdir, exist_ok=True)
            dump_model(os.path.join(sdir, "model.json"), schema, sections)

            for attack in attacks:
                test_set = _forge(split.test_store, schema, attack, forge_seed)
                counts = {
                    "n_train_plots": len(split.train_plots),
                    "n_test_plots": len(split.test_plots),
                    "n_labeled_plots": len(test_set.plots),
                }
                if attack.kind == "manipulation":
                    scores = score_manipulation(field_model, test_set)
                    threshold = field_model.track_threshold
                    meta = dict(field_model.meta)
                else:
                    scores, extra = score_drop(timing_model, test_set)
                    counts.update(extra)
                    threshold = timing_model.thr
                    meta = dict(timing_model.meta)
                counts["n_scored"] = len(scores)
                counts["n_pos"] = sum(l for _, l in scores)
                counts["n_neg"] = len(scores) - counts["n_pos"]
                result = ExperimentResult(
                    setup=setup, attack=attack, seed=seed,
                    report=curve_report(scores),
                    rates=rate_at_threshold(scores, threshold),
                    counts=counts, model_meta=meta, scores=scores,
                )
                adir = os.path.join(sdir, attack.tag())
                os.makedirs(adir, exist_ok=True)
                _write_json(os.path.join(adir, "report.json"), result.to_json_dict())
                write_curves(adir, result.report)
                per_attack.setdefault(attack.tag(), []).append(result)

        for tag, results in per_attack.items():
            rows.append({
                "setup": kind,
                "attack": tag,
                "n_sessions": len(results),
                "avg_auc": sum(r.report.auc for r in results) / len(results),
                "avg_ap": sum(r.report.ap for r in results) / len(results),
                "avg_tpr": sum(r.rates.tpr for r in results) / len(results),
                "avg_fpr": sum(r.rates.fpr for r in results) / len(results),
            })

    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["setup", "attack", "n_sessions", "avg_auc", "avg_ap", "avg_tpr", "avg_fpr"])
        for row in rows:
            w.writerow([row["setup"], row["attack"], row["n_sessions"],
                        repr(row["avg_auc"]), repr(row["avg_ap"]),
                        repr(row["avg_tpr"]), repr(row["avg_fpr"])])
    return rows
