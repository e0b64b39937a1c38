"""Benign stream generator tests: determinism, shape, timing regularity."""

import numpy as np
import pytest

from radarnomaly import InvalidConfig, SynthConfig, generate_corpus, generate_session, serialize_plot
from radarnomaly.synth import TrackType, default_track_types


def dump_session(tracks):
    return [serialize_plot(p) for t in tracks for p in t.plots]


class TestDeterminism:
    def test_same_seed_same_bytes(self):
        cfg = SynthConfig(tracks_per_session=(12,), master_seed=3)
        assert dump_session(generate_session(cfg, 0)) == dump_session(generate_session(cfg, 0))

    def test_different_seed_differs(self):
        a = SynthConfig(tracks_per_session=(12,), master_seed=3)
        b = SynthConfig(tracks_per_session=(12,), master_seed=4)
        assert dump_session(generate_session(a, 0)) != dump_session(generate_session(b, 0))

    def test_sessions_are_independent_streams(self):
        cfg = SynthConfig(tracks_per_session=(8, 8), master_seed=5)
        assert dump_session(generate_session(cfg, 0)) != dump_session(generate_session(cfg, 1))


class TestCorpusShape:
    def test_track_counts_and_ids(self, small_corpus):
        assert small_corpus.session_ids() == ["R1", "R2"]
        assert len(small_corpus.tracks("R1")) == 24
        assert len(small_corpus.tracks("R2")) == 12

    def test_every_plot_is_schema_valid(self, schema, small_corpus):
        for plot in small_corpus.plots():
            plot.validate(schema)

    def test_track_lengths_within_bounds(self, small_corpus):
        lengths = [len(t) for t in small_corpus.tracks()]
        assert min(lengths) >= 20
        assert max(lengths) <= 60

    def test_update_times_strictly_increase(self, small_corpus):
        for track in small_corpus.tracks():
            times = [p.update_time for p in track.plots]
            assert all(b > a for a, b in zip(times, times[1:]))

    def test_categoricals_mostly_stable_within_track(self, small_corpus):
        # per-plot flip probability is 1%, so a large majority of plots match
        # the track's modal vector
        total = 0
        stable = 0
        for track in small_corpus.tracks():
            first = track.plots[0].cat_values
            for p in track.plots:
                total += 1
                stable += p.cat_values == first
        assert stable / total > 0.85


class TestTiming:
    def test_periods_are_near_metronomic(self, small_corpus):
        for track in small_corpus.tracks():
            periods = np.diff([p.update_time for p in track.plots])
            cv = periods.std() / periods.mean()
            assert cv <= 0.05

    def test_zero_jitter_gives_exact_periods(self):
        cfg = SynthConfig(tracks_per_session=(10,), master_seed=6,
                          jitter_tiers=((0.0, 1.0),))
        for track in generate_session(cfg, 0):
            periods = set(np.diff([p.update_time for p in track.plots]).tolist())
            assert len(periods) == 1

    def test_corpus_mixes_base_periods(self, small_corpus):
        means = []
        for track in small_corpus.tracks():
            periods = np.diff([p.update_time for p in track.plots])
            means.append(float(periods.mean()))
        assert np.std(means) > 100.0  # several distinct update regimes


class TestValidation:
    def test_track_type_tables_must_cover_schema(self, schema):
        tt = default_track_types()[0]
        broken = TrackType(name="x", cat_probs={"trackType": (1.0, 0.0, 0.0, 0.0)},
                           base_period=1000, speed=1.0, power=1.0, turn_sd=0.0)
        with pytest.raises(InvalidConfig):
            broken.validate(schema)
        tt.validate(schema)  # the stock types are complete

    def test_config_rejects_bad_values(self):
        with pytest.raises(InvalidConfig):
            SynthConfig(tracks_per_session=())
        with pytest.raises(InvalidConfig):
            SynthConfig(tracks_per_session=(0,))
        with pytest.raises(InvalidConfig):
            SynthConfig(length_min=6)
        with pytest.raises(InvalidConfig):
            SynthConfig(length_min=30, length_max=20)
        with pytest.raises(InvalidConfig):
            SynthConfig(jitter_tiers=((0.6, 1.0),))
        with pytest.raises(InvalidConfig):
            SynthConfig(jitter_tiers=((0.01, 0.5), (0.02, 0.4)))

    def test_session_index_range(self):
        cfg = SynthConfig(tracks_per_session=(5,), master_seed=0)
        with pytest.raises(InvalidConfig):
            generate_session(cfg, 1)
        with pytest.raises(InvalidConfig):
            generate_session(cfg, -1)

    def test_generate_corpus_covers_all_sessions(self):
        cfg = SynthConfig(tracks_per_session=(3, 4, 5), master_seed=7)
        store = generate_corpus(cfg)
        assert store.session_ids() == ["R1", "R2", "R3"]
        assert [len(store.tracks(s)) for s in ("R1", "R2", "R3")] == [3, 4, 5]
