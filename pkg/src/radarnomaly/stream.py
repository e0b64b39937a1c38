"""Data model for plot/track message streams.

A plot is one detection message; a track is the time-ordered sequence of
plots that share (session_id, track_id).  Everything downstream (training,
attacks, evaluation, the live monitor) consumes these types.

Wire format is NDJSON, one plot per line:

    {"session": "R1", "track_id": 7, "t": 1000, "cat": [...], "num": [...]}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import (
    InvalidConfig,
    MalformedLine,
    SchemaViolation,
    TrackTooShort,
    UnknownFeature,
)


@dataclass(frozen=True)
class FeatureSchema:
    """Declares the categorical and numerical features of a plot.

    categorical: ordered (name, cardinality) pairs; values are integer codes
    in [0, cardinality).  numerical: ordered names.  timing_feature_names:
    the four features consumed by the timing detector (exactly one numerical
    and three categoricals).
    """

    categorical: tuple[tuple[str, int], ...]
    numerical: tuple[str, ...]
    timing_feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        names = [n for n, _ in self.categorical] + list(self.numerical)
        if len(set(names)) != len(names):
            raise InvalidConfig("duplicate feature names in schema")
        for name, card in self.categorical:
            if card < 2:
                raise InvalidConfig(f"categorical {name!r} has cardinality {card}, need >= 2")
        if len(self.timing_feature_names) != 4:
            raise InvalidConfig("timing_feature_names must list exactly 4 features")
        cat_names = {n for n, _ in self.categorical}
        n_num = sum(1 for n in self.timing_feature_names if n in self.numerical)
        n_cat = sum(1 for n in self.timing_feature_names if n in cat_names)
        if n_num != 1 or n_cat != 3:
            raise InvalidConfig(
                "timing_feature_names must name one numerical and three categorical features"
            )

    # -- lookups -------------------------------------------------------

    def cat_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.categorical):
            if n == name:
                return i
        raise UnknownFeature(f"no categorical feature named {name!r}")

    def num_index(self, name: str) -> int:
        try:
            return self.numerical.index(name)
        except ValueError:
            raise UnknownFeature(f"no numerical feature named {name!r}") from None

    def cardinality(self, name: str) -> int:
        return self.categorical[self.cat_index(name)][1]

    @property
    def n_categorical(self) -> int:
        return len(self.categorical)

    @property
    def n_numerical(self) -> int:
        return len(self.numerical)

    @property
    def sum_cardinalities(self) -> int:
        return sum(c for _, c in self.categorical)

    def timing_numerical(self) -> str:
        for n in self.timing_feature_names:
            if n in self.numerical:
                return n
        raise InvalidConfig("schema has no timing numerical")  # unreachable after validation

    def timing_categoricals(self) -> tuple[str, ...]:
        """The three timing categoricals, in schema declaration order."""
        wanted = set(self.timing_feature_names)
        return tuple(n for n, _ in self.categorical if n in wanted)

    # -- serialization -------------------------------------------------

    def to_json(self) -> dict:
        return {
            "categorical": [{"name": n, "cardinality": c} for n, c in self.categorical],
            "numerical": list(self.numerical),
            "timing": list(self.timing_feature_names),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureSchema":
        try:
            cats = tuple((d["name"], int(d["cardinality"])) for d in obj["categorical"])
            nums = tuple(obj["numerical"])
            timing = tuple(obj["timing"])
        except (KeyError, TypeError) as exc:
            raise SchemaViolation(f"bad schema document: {exc}") from exc
        return cls(categorical=cats, numerical=nums, timing_feature_names=timing)

    def fingerprint(self) -> str:
        """Stable digest of the schema; embedded in model files."""
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def default_schema() -> FeatureSchema:
    """The stock 10-categorical / 17-numerical message layout."""
    return FeatureSchema(
        categorical=(
            ("trackType", 4),
            ("signalQuality", 4),
            ("objectType", 5),
            ("alertRaised", 2),
            ("objectCategory", 3),
            ("sigProp1", 3),
            ("sigProp2", 2),
            ("sigProp3", 6),
            ("sigProp4", 3),
            ("sigProp5", 4),
        ),
        numerical=tuple(f"num{i}" for i in range(1, 18)),
        timing_feature_names=("num1", "objectType", "signalQuality", "trackType"),
    )


@dataclass(frozen=True)
class PlotRecord:
    """One detection message."""

    session_id: str
    track_id: int
    update_time: int
    cat_values: tuple[int, ...]
    num_values: tuple[float, ...]

    def validate(self, schema: FeatureSchema) -> None:
        if len(self.cat_values) != schema.n_categorical:
            raise SchemaViolation(
                f"expected {schema.n_categorical} categorical values, got {len(self.cat_values)}"
            )
        if len(self.num_values) != schema.n_numerical:
            raise SchemaViolation(
                f"expected {schema.n_numerical} numerical values, got {len(self.num_values)}"
            )
        for (name, card), v in zip(schema.categorical, self.cat_values):
            if not 0 <= v < card:
                raise SchemaViolation(f"value {v} out of range for {name!r} (cardinality {card})")
        if self.update_time < 0:
            raise SchemaViolation("update_time must be non-negative")
        if self.track_id < 0:
            raise SchemaViolation("track_id must be non-negative")


@dataclass
class Track:
    """Time-ordered plots sharing (session_id, track_id)."""

    session_id: str
    track_id: int
    plots: list[PlotRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.plots)

    def updating_periods(self) -> list[float]:
        """Per-plot update period.

        Element j is update_time[j] - update_time[j-1]; the first element
        copies the second so the output has one entry per plot.
        """
        if len(self.plots) < 2:
            raise TrackTooShort(
                f"track ({self.session_id},{self.track_id}) has {len(self.plots)} plots, need >= 2"
            )
        times = [p.update_time for p in self.plots]
        diffs = [float(b - a) for a, b in zip(times, times[1:])]
        return [diffs[0]] + diffs


class SessionStore:
    """Corpus keyed by session id, each session holding its tracks."""

    def __init__(self) -> None:
        self._sessions: dict[str, dict[int, Track]] = {}

    def add_plot(self, plot: PlotRecord) -> None:
        session = self._sessions.setdefault(plot.session_id, {})
        track = session.get(plot.track_id)
        if track is None:
            track = Track(plot.session_id, plot.track_id)
            session[plot.track_id] = track
        track.plots.append(plot)

    def add_track(self, track: Track) -> None:
        session = self._sessions.setdefault(track.session_id, {})
        if track.track_id in session:
            raise InvalidConfig(
                f"track {track.track_id} already present in session {track.session_id!r}"
            )
        session[track.track_id] = track

    def session_ids(self) -> list[str]:
        return list(self._sessions.keys())

    def tracks(self, session_id: str | None = None) -> list[Track]:
        if session_id is not None:
            from .errors import UnknownSession

            if session_id not in self._sessions:
                raise UnknownSession(f"no session {session_id!r} in corpus")
            return list(self._sessions[session_id].values())
        out: list[Track] = []
        for session in self._sessions.values():
            out.extend(session.values())
        return out

    def plots(self, session_id: str | None = None) -> list[PlotRecord]:
        return [p for t in self.tracks(session_id) for p in t.plots]

    def n_plots(self) -> int:
        return sum(len(t) for t in self.tracks())

    def sort_tracks(self) -> None:
        """Stable-sort every track's plots by update_time."""
        for track in self.tracks():
            track.plots.sort(key=lambda p: p.update_time)


# -- wire format --------------------------------------------------------


def parse_plot_line(line: str, schema: FeatureSchema) -> PlotRecord:
    """Parse one NDJSON line into a validated PlotRecord.

    Transport-level garbage (not JSON, not an object) raises MalformedLine;
    a JSON object that does not fit the plot contract (missing or ill-typed
    field, wrong arity, out-of-range value) raises SchemaViolation.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedLine("plot line must be a JSON object")
    try:
        record = PlotRecord(
            session_id=str(obj["session"]),
            track_id=int(obj["track_id"]),
            update_time=int(obj["t"]),
            cat_values=tuple(int(v) for v in obj["cat"]),
            num_values=tuple(float(v) for v in obj["num"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"missing or ill-typed field: {exc}") from exc
    record.validate(schema)
    return record


def serialize_plot(plot: PlotRecord, extra: dict | None = None) -> str:
    """Render a plot as one NDJSON line; `extra` appends e.g. label fields."""
    obj: dict = {
        "session": plot.session_id,
        "track_id": plot.track_id,
        "t": plot.update_time,
        "cat": list(plot.cat_values),
        "num": list(plot.num_values),
    }
    if extra:
        obj.update(extra)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def assemble_tracks(plots: list[PlotRecord]) -> SessionStore:
    """Group plots into tracks, sorted by update_time within each track."""
    store = SessionStore()
    for p in plots:
        store.add_plot(p)
    store.sort_tracks()
    return store


def read_ndjson(path: str, schema: FeatureSchema) -> list[PlotRecord]:
    """Read a plot NDJSON file; fails on the first bad line, naming it."""
    plots = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                plots.append(parse_plot_line(line, schema))
            except MalformedLine as exc:
                raise MalformedLine(f"{path}:{lineno}: {exc}") from exc
            except SchemaViolation as exc:
                raise SchemaViolation(f"{path}:{lineno}: {exc}") from exc
    return plots


def write_ndjson(path: str, plots: list[PlotRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in plots:
            fh.write(serialize_plot(p) + "\n")
