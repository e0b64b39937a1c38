"""Data model and wire format tests."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radarnomaly import (
    FeatureSchema,
    InvalidConfig,
    MalformedLine,
    PlotRecord,
    SchemaViolation,
    SessionStore,
    Track,
    TrackTooShort,
    UnknownSession,
    assemble_tracks,
    default_schema,
    parse_plot_line,
    read_ndjson,
    serialize_plot,
    write_ndjson,
)
from radarnomaly.errors import UnknownFeature

from conftest import make_plot

SCHEMA = default_schema()


def line_for(cat, num, session="R1", track_id=7, t=1000, **extra) -> str:
    obj = {"session": session, "track_id": track_id, "t": t,
           "cat": list(cat), "num": list(num)}
    obj.update(extra)
    return json.dumps(obj)


class TestFeatureSchema:
    def test_default_shape(self):
        assert SCHEMA.n_categorical == 10
        assert SCHEMA.n_numerical == 17
        assert SCHEMA.sum_cardinalities == 36
        assert len(SCHEMA.timing_feature_names) == 4

    def test_cardinality_below_two_rejected(self):
        with pytest.raises(InvalidConfig):
            FeatureSchema(categorical=(("a", 1), ("b", 2), ("c", 2), ("d", 2)),
                          numerical=("x",),
                          timing_feature_names=("x", "b", "c", "d"))

    def test_duplicate_names_rejected(self):
        with pytest.raises(InvalidConfig):
            FeatureSchema(categorical=(("a", 2), ("b", 2), ("c", 2)),
                          numerical=("a",),
                          timing_feature_names=("a", "a", "b", "c"))

    def test_timing_names_must_be_one_numerical_three_categorical(self):
        with pytest.raises(InvalidConfig):
            FeatureSchema(categorical=(("a", 2), ("b", 2), ("c", 2)),
                          numerical=("x", "y"),
                          timing_feature_names=("x", "y", "a", "b"))

    def test_lookups(self):
        assert SCHEMA.cat_index("objectType") == 2
        assert SCHEMA.num_index("num1") == 0
        assert SCHEMA.cardinality("sigProp3") == 6
        with pytest.raises(UnknownFeature):
            SCHEMA.cat_index("num1")
        with pytest.raises(UnknownFeature):
            SCHEMA.num_index("objectType")

    def test_timing_categoricals_in_schema_order(self):
        assert SCHEMA.timing_categoricals() == ("trackType", "signalQuality", "objectType")
        assert SCHEMA.timing_numerical() == "num1"

    def test_json_round_trip_and_fingerprint(self):
        again = FeatureSchema.from_json(SCHEMA.to_json())
        assert again == SCHEMA
        assert again.fingerprint() == SCHEMA.fingerprint()
        other = FeatureSchema(categorical=SCHEMA.categorical,
                              numerical=SCHEMA.numerical[:-1] + ("numX",),
                              timing_feature_names=SCHEMA.timing_feature_names)
        assert other.fingerprint() != SCHEMA.fingerprint()

    def test_from_json_bad_document(self):
        with pytest.raises(SchemaViolation):
            FeatureSchema.from_json({"categorical": [{"name": "a"}]})


class TestParsePlotLine:
    def test_field_mapping(self):
        line = line_for([0, 1, 0, 0, 0, 0, 0, 0, 0, 0], [0.5] * 17)
        p = parse_plot_line(line, SCHEMA)
        assert p.session_id == "R1"
        assert p.track_id == 7
        assert p.update_time == 1000
        assert p.cat_values[1] == 1
        assert p.num_values == (0.5,) * 17

    def test_extra_keys_ignored(self):
        line = line_for([0] * 10, [0.0] * 17, label=1, attack="drop")
        assert parse_plot_line(line, SCHEMA).track_id == 7

    def test_not_json_is_malformed(self):
        with pytest.raises(MalformedLine):
            parse_plot_line("{truncated", SCHEMA)

    def test_non_object_is_malformed(self):
        with pytest.raises(MalformedLine):
            parse_plot_line("[1,2,3]", SCHEMA)

    def test_categorical_value_out_of_range(self):
        cat = [0] * 10
        cat[3] = 5  # alertRaised has cardinality 2
        with pytest.raises(SchemaViolation):
            parse_plot_line(line_for(cat, [0.0] * 17), SCHEMA)

    def test_missing_num_field(self):
        obj = {"session": "R1", "track_id": 7, "t": 1000, "cat": [0] * 10}
        with pytest.raises(SchemaViolation):
            parse_plot_line(json.dumps(obj), SCHEMA)

    def test_wrong_arity(self):
        with pytest.raises(SchemaViolation):
            parse_plot_line(line_for([0] * 9, [0.0] * 17), SCHEMA)
        with pytest.raises(SchemaViolation):
            parse_plot_line(line_for([0] * 10, [0.0] * 16), SCHEMA)

    def test_negative_time_and_track_id(self):
        with pytest.raises(SchemaViolation):
            parse_plot_line(line_for([0] * 10, [0.0] * 17, t=-1), SCHEMA)
        with pytest.raises(SchemaViolation):
            parse_plot_line(line_for([0] * 10, [0.0] * 17, track_id=-2), SCHEMA)

    def test_ill_typed_field(self):
        with pytest.raises(SchemaViolation):
            parse_plot_line(line_for([0] * 10, ["zero"] + [0.0] * 16), SCHEMA)


small_schema = FeatureSchema(
    categorical=(("a", 3), ("b", 2), ("c", 4)),
    numerical=("x", "y"),
    timing_feature_names=("x", "a", "b", "c"),
)

plot_strategy = st.builds(
    PlotRecord,
    session_id=st.sampled_from(["R1", "R2", "east"]),
    track_id=st.integers(min_value=0, max_value=10_000),
    update_time=st.integers(min_value=0, max_value=10**9),
    cat_values=st.tuples(st.integers(0, 2), st.integers(0, 1), st.integers(0, 3)),
    num_values=st.tuples(
        st.floats(allow_nan=False, allow_infinity=False, width=32),
        st.floats(allow_nan=False, allow_infinity=False, width=32),
    ),
)


class TestSerialization:
    @given(plot=plot_strategy)
    @settings(max_examples=100)
    def test_round_trip(self, plot):
        assert parse_plot_line(serialize_plot(plot), small_schema) == plot

    def test_extra_fields_appended(self):
        plot = make_plot()
        obj = json.loads(serialize_plot(plot, extra={"label": 1}))
        assert obj["label"] == 1

    def test_file_round_trip(self, tmp_path):
        plots = [make_plot(track=i, t=100 * i, num=[float(i)] * 17) for i in range(5)]
        path = str(tmp_path / "plots.ndjson")
        write_ndjson(path, plots)
        assert read_ndjson(path, SCHEMA) == plots

    def test_read_names_offending_line(self, tmp_path):
        path = tmp_path / "bad.ndjson"
        path.write_text(serialize_plot(make_plot()) + "\n{nope\n")
        with pytest.raises(MalformedLine, match="bad.ndjson:2"):
            read_ndjson(str(path), SCHEMA)

    def test_read_names_schema_breach_line(self, tmp_path):
        path = tmp_path / "bad.ndjson"
        bad = json.dumps({"session": "R1", "track_id": 0, "t": 0,
                          "cat": [9] * 10, "num": [0.0] * 17})
        path.write_text(serialize_plot(make_plot()) + "\n" + bad + "\n")
        with pytest.raises(SchemaViolation, match="bad.ndjson:2"):
            read_ndjson(str(path), SCHEMA)


class TestAssembleTracks:
    def test_grouping(self):
        plots = [make_plot(track=3, t=0), make_plot(track=3, t=1), make_plot(track=9, t=0)]
        store = assemble_tracks(plots)
        lengths = sorted(len(t) for t in store.tracks())
        assert lengths == [1, 2]

    def test_sorts_by_time(self):
        plots = [make_plot(track=1, t=200), make_plot(track=1, t=100)]
        store = assemble_tracks(plots)
        times = [p.update_time for p in store.tracks()[0].plots]
        assert times == [100, 200]

    def test_stable_tie_break_on_arrival(self):
        first = make_plot(track=1, t=100, num=[1.0] * 17)
        second = make_plot(track=1, t=100, num=[2.0] * 17)
        store = assemble_tracks([first, second])
        assert store.tracks()[0].plots == [first, second]

    def test_empty_input(self):
        store = assemble_tracks([])
        assert store.session_ids() == []
        assert store.n_plots() == 0

    @given(data=st.lists(
        st.tuples(st.integers(0, 3), st.integers(0, 1000)), max_size=40))
    @settings(max_examples=50)
    def test_preserves_plot_multiset(self, data):
        plots = [make_plot(track=tid, t=t, num=[float(i)] * 17)
                 for i, (tid, t) in enumerate(data)]
        store = assemble_tracks(plots)
        out = sorted(serialize_plot(p) for p in store.plots())
        assert out == sorted(serialize_plot(p) for p in plots)


class TestSessionStore:
    def test_duplicate_track_rejected(self):
        store = SessionStore()
        store.add_track(Track("S", 1, [make_plot(track=1)]))
        with pytest.raises(InvalidConfig):
            store.add_track(Track("S", 1, [make_plot(track=1)]))

    def test_unknown_session(self):
        with pytest.raises(UnknownSession):
            SessionStore().tracks("nope")


class TestUpdatingPeriods:
    def test_first_element_copies_second(self):
        t = Track("S", 0, [make_plot(t=100), make_plot(t=250), make_plot(t=500)])
        assert t.updating_periods() == [150.0, 150.0, 250.0]

    def test_two_plots(self):
        t = Track("S", 0, [make_plot(t=0), make_plot(t=100)])
        assert t.updating_periods() == [100.0, 100.0]

    def test_single_plot_raises(self):
        with pytest.raises(TrackTooShort):
            Track("S", 0, [make_plot()]).updating_periods()

    @given(steps=st.lists(st.integers(1, 10_000), min_size=1, max_size=30))
    @settings(max_examples=50)
    def test_positive_and_length_preserving(self, steps):
        times = np.cumsum([0] + steps)
        t = Track("S", 0, [make_plot(t=int(x)) for x in times])
        periods = t.updating_periods()
        assert len(periods) == len(t)
        assert all(p > 0 for p in periods)
