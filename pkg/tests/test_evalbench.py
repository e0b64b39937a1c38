"""Metric, split and battery tests with independent oracles."""

import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radarnomaly import (
    AttackSpec,
    EmptySequence,
    EvalSetup,
    InvalidConfig,
    NoPositives,
    OneClassOnly,
    SingleSession,
    UnknownSession,
    average_precision,
    curve_report,
    make_split,
    materialize_split,
    rate_at_threshold,
    roc_auc,
    run_battery,
    run_experiment,
    serialize_plot,
)
from radarnomaly.evalbench import MISSED_SCORE, derived_seed


def brute_auc(scores):
    """Pairwise Mann-Whitney probability, the textbook definition."""
    pos = [s for s, y in scores if y == 1]
    neg = [s for s, y in scores if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


def brute_ap(scores):
    """Exhaustive sweep over distinct scores, summing precision at each
    recall step (tied blocks enter at once)."""
    n_pos = sum(y for _, y in scores)
    s = np.array([x for x, _ in scores])
    y = np.array([l for _, l in scores])
    ap = 0.0
    prev_tp = 0
    for v in sorted(set(s.tolist()), reverse=True):
        pred = s >= v
        tp = int(np.sum(pred & (y == 1)))
        fp = int(np.sum(pred & (y == 0)))
        if tp > prev_tp:
            ap += ((tp - prev_tp) / n_pos) * (tp / (tp + fp))
        prev_tp = tp
    return ap


labeled_scores = st.lists(
    st.tuples(
        st.one_of(st.integers(0, 5).map(float),
                  st.floats(-10, 10, allow_nan=False)),
        st.integers(0, 1),
    ),
    min_size=2,
    max_size=60,
).filter(lambda xs: any(y == 1 for _, y in xs) and any(y == 0 for _, y in xs))


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([(0.1, 0), (0.2, 0), (0.8, 1), (0.9, 1)]) == 1.0

    def test_all_tied_is_chance(self):
        assert roc_auc([(1.0, 0), (1.0, 1), (1.0, 0), (1.0, 1)]) == 0.5

    def test_mixed_example(self):
        scores = [(0.1, 0), (0.4, 0), (0.3, 1), (0.5, 1)]
        assert roc_auc(scores) == pytest.approx(0.75)

    def test_inverted_scores_give_complement(self):
        scores = [(0.1, 1), (0.4, 1), (0.3, 0), (0.5, 0)]
        assert roc_auc(scores) == pytest.approx(0.25)

    def test_one_class_only(self):
        with pytest.raises(OneClassOnly):
            roc_auc([(0.5, 1), (0.6, 1)])

    def test_empty(self):
        with pytest.raises(EmptySequence):
            roc_auc([])

    def test_bad_labels(self):
        with pytest.raises(InvalidConfig):
            roc_auc([(0.5, 2), (0.6, 0)])

    @given(scores=labeled_scores)
    @settings(max_examples=150)
    def test_pairwise_oracle(self, scores):
        assert abs(roc_auc(scores) - brute_auc(scores)) <= 1e-12

    def test_handles_missed_score_sentinel(self):
        scores = [(MISSED_SCORE, 1), (1.0, 1), (0.5, 0)]
        # the missed positive loses every pairwise comparison
        assert roc_auc(scores) == pytest.approx(0.5)


class TestAveragePrecision:
    def test_all_positives_on_top(self):
        assert average_precision([(0.9, 1), (0.8, 1), (0.1, 0)]) == 1.0

    def test_interleaved_example(self):
        assert average_precision([(0.9, 1), (0.8, 0), (0.7, 1)]) == pytest.approx(5.0 / 6.0)

    def test_single_positive_ranked_last(self):
        assert average_precision([(0.9, 0), (0.8, 0), (0.7, 1)]) == pytest.approx(1.0 / 3.0)

    def test_all_tied_is_prevalence(self):
        scores = [(2.0, 1), (2.0, 0), (2.0, 0), (2.0, 1)]
        assert average_precision(scores) == pytest.approx(0.5)

    def test_no_positives(self):
        with pytest.raises(NoPositives):
            average_precision([(0.5, 0)])

    @given(scores=labeled_scores)
    @settings(max_examples=150)
    def test_sweep_oracle(self, scores):
        assert abs(average_precision(scores) - brute_ap(scores)) <= 1e-12


class TestRateAtThreshold:
    def test_counts_and_rates(self):
        scores = [(0.9, 1), (0.7, 1), (0.4, 0), (0.2, 0), (0.6, 0)]
        r = rate_at_threshold(scores, 0.5)
        assert (r.tp, r.fp, r.tn, r.fn) == (2, 1, 2, 0)
        assert r.tpr == 1.0
        assert r.fpr == pytest.approx(1.0 / 3.0)
        assert r.precision == pytest.approx(2.0 / 3.0)
        assert r.flags == ()

    def test_strict_inequality_at_the_threshold(self):
        r = rate_at_threshold([(0.5, 1), (0.5, 0)], 0.5)
        assert r.tp == 0 and r.fp == 0
        assert "no_predicted_positives" in r.flags

    def test_empty_class_flags(self):
        r = rate_at_threshold([(0.9, 1), (0.1, 1)], 0.5)
        assert r.fpr == 0.0
        assert "no_negatives" in r.flags
        r = rate_at_threshold([(0.9, 0)], 0.5)
        assert r.tpr == 0.0
        assert "no_positives" in r.flags


class TestCurveReport:
    def test_terminal_point(self):
        rep = curve_report([(0.9, 1), (0.1, 0)])
        last = rep.points[-1]
        assert last.threshold is None
        assert last.tpr == 1.0 and last.fpr == 1.0

    def test_monotone_rates(self):
        rng = np.random.default_rng(0)
        scores = [(float(rng.normal()), int(rng.integers(2))) for _ in range(50)]
        if not any(y for _, y in scores):
            scores[0] = (scores[0][0], 1)
        if all(y for _, y in scores):
            scores[0] = (scores[0][0], 0)
        rep = curve_report(scores)
        tprs = [p.tpr for p in rep.points]
        fprs = [p.fpr for p in rep.points]
        assert tprs == sorted(tprs)
        assert fprs == sorted(fprs)

    def test_matches_scalar_metrics(self):
        scores = [(0.9, 1), (0.8, 0), (0.7, 1), (0.1, 0)]
        rep = curve_report(scores)
        assert rep.auc == roc_auc(scores)
        assert rep.ap == average_precision(scores)
        assert rep.n_pos == 2 and rep.n_neg == 2

    def test_sentinel_scores_have_no_threshold_point(self):
        rep = curve_report([(MISSED_SCORE, 1), (0.9, 1), (0.1, 0)])
        finite = [p.threshold for p in rep.points if p.threshold is not None]
        assert all(np.isfinite(t) for t in finite)
        assert rep.points[-1].tpr == 1.0  # the miss still counts in the totals


class TestSetupValidation:
    def test_unknown_kind(self):
        with pytest.raises(InvalidConfig):
            EvalSetup(kind="bogus", examined="R1")

    def test_bad_fraction(self):
        with pytest.raises(InvalidConfig):
            EvalSetup(kind="chronological", examined="R1", fraction=1.0)

    def test_attack_spec(self):
        with pytest.raises(InvalidConfig):
            AttackSpec("bogus")
        with pytest.raises(InvalidConfig):
            AttackSpec("manipulation")
        assert AttackSpec("manipulation", feature="objectType").tag() == "manipulation_objectType"
        assert AttackSpec("drop").tag() == "drop"


def ordered_session_plots(store, sid):
    keyed = []
    for track in sorted(store.tracks(sid), key=lambda t: t.track_id):
        for pos, plot in enumerate(track.plots):
            keyed.append(((plot.update_time, plot.track_id, pos), plot))
    keyed.sort(key=lambda kv: kv[0])
    return [p for _, p in keyed]


class TestSplits:
    def test_cross_session_partition(self, small_corpus):
        setup = EvalSetup(kind="cross_session", examined="R1")
        train, test = make_split(small_corpus, setup)
        assert {p.session_id for p in train} == {"R2"}
        assert {p.session_id for p in test} == {"R1"}
        assert len(train) + len(test) == small_corpus.n_plots()

    def test_chronological_cut(self, small_corpus):
        setup = EvalSetup(kind="chronological", examined="R1")
        train, test = make_split(small_corpus, setup)
        ordered = ordered_session_plots(small_corpus, "R1")
        cut = int(0.9 * len(ordered))
        assert train == ordered[:cut]
        assert test == ordered[cut:]

    def test_transfer_head(self, small_corpus):
        setup = EvalSetup(kind="transfer", examined="R1")
        train, test = make_split(small_corpus, setup)
        ordered = ordered_session_plots(small_corpus, "R1")
        head = int(0.1 * len(ordered))
        foreign = [p for p in train if p.session_id == "R2"]
        examined_head = [p for p in train if p.session_id == "R1"]
        assert len(foreign) == len(small_corpus.plots("R2"))
        assert examined_head == ordered[:head]
        assert test == ordered[head:]

    def test_unknown_session(self, small_corpus):
        with pytest.raises(UnknownSession):
            make_split(small_corpus, EvalSetup(kind="cross_session", examined="R9"))

    def test_single_session_guard(self):
        from radarnomaly import SynthConfig, generate_corpus
        store = generate_corpus(SynthConfig(tracks_per_session=(6,), master_seed=1))
        with pytest.raises(SingleSession):
            make_split(store, EvalSetup(kind="cross_session", examined="R1"))
        with pytest.raises(SingleSession):
            make_split(store, EvalSetup(kind="transfer", examined="R1"))

    def test_materialize_track_policies(self, small_corpus):
        setup = EvalSetup(kind="chronological", examined="R1")
        split = materialize_split(small_corpus, setup)
        full_len = {(t.session_id, t.track_id): len(t) for t in small_corpus.tracks()}
        for t in split.field_train_tracks:
            assert len(t) == full_len[(t.session_id, t.track_id)]
        # the chronological cut strands at least one partial track, which the
        # timing side keeps while the field side drops
        partials = [t for t in split.timing_train_tracks
                    if len(t) < full_len[(t.session_id, t.track_id)]]
        assert partials
        field_keys = {(t.session_id, t.track_id) for t in split.field_train_tracks}
        assert all((t.session_id, t.track_id) not in field_keys for t in partials)
        assert split.test_store.n_plots() == len(split.test_plots)


class TestDerivedSeed:
    def test_stable(self):
        assert derived_seed(0, 2, 0, 0) == derived_seed(0, 2, 0, 0)

    def test_distinct_across_tags(self):
        seeds = {derived_seed(0, comp, ki, si)
                 for comp in (1, 2, 3) for ki in (0, 1, 2) for si in (0, 1, 2, 3)}
        assert len(seeds) == 36


def tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


class TestRunners:
    def test_run_experiment_drop(self, schema, small_corpus, quick_config):
        setup = EvalSetup(kind="cross_session", examined="R2")
        result = run_experiment(small_corpus, schema, setup, AttackSpec("drop"),
                                seed=0, config=quick_config)
        assert 0.0 <= result.report.auc <= 1.0
        assert result.counts["n_pos"] > 0
        assert result.counts["n_scored"] == result.counts["n_pos"] + result.counts["n_neg"]
        assert "n_unscored_positives" in result.counts
        assert result.rates.threshold == pytest.approx(result.to_json_dict()["metrics"]["threshold"])

    def test_battery_writes_deterministic_artifacts(self, schema, small_corpus,
                                                    quick_config, tmp_path):
        battery = {"cross_session": (AttackSpec("drop"),)}
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        rows_a = run_battery(small_corpus, schema, out_a, seed=0,
                             config=quick_config, battery=battery)
        rows_b = run_battery(small_corpus, schema, out_b, seed=0,
                             config=quick_config, battery=battery)

        assert [r["setup"] for r in rows_a] == ["cross_session"]
        assert rows_a[0]["attack"] == "drop"
        assert rows_a[0]["n_sessions"] == 2
        assert rows_a == rows_b

        for sid in ("R1", "R2"):
            base = os.path.join(out_a, "cross_session", sid)
            assert os.path.exists(os.path.join(base, "model.json"))
            for name in ("report.json", "roc.csv", "prc.csv"):
                assert os.path.exists(os.path.join(base, "drop", name))
        assert os.path.exists(os.path.join(out_a, "summary.csv"))

        a = tree_bytes(out_a)
        b = tree_bytes(out_b)
        assert a.keys() == b.keys()
        assert all(a[k] == b[k] for k in a)

        report = json.loads(open(os.path.join(
            out_a, "cross_session", "R1", "drop", "report.json")).read())
        assert set(report) == {"setup", "attack", "seed", "metrics", "counts", "model"}
        assert 0.0 <= report["metrics"]["auc"] <= 1.0
