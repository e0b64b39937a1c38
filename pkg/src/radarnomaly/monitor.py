"""Live stream monitor: both detectors over an NDJSON plot feed.

Each incoming plot is scored in arrival order: field consistency first
(plot score and running track average), then the timing predictor once the
track has K plots of history.  Every alert carries the exact score and
threshold pair that produced it.  Malformed lines are logged, counted and
skipped; a plot that contradicts the schema aborts the run.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .errors import MalformedLine
from .field import TRACK_WARMUP, FieldModel, TrackScoreCollector
from .stream import PlotRecord, parse_plot_line
from .timing import TimingModel, TimingStreamScorer

log = logging.getLogger("radarnomaly.monitor")

FIELD_PLOT = "FIELD_PLOT"
FIELD_TRACK = "FIELD_TRACK"
TIMING = "TIMING"

# a track idle this many time units (by its own session's clock) is dropped
DEFAULT_EVICT_HORIZON = 200_000
EVICT_EVERY = 1024


@dataclass(frozen=True)
class AlertRecord:
    """One emitted alert; kind names the detector that fired."""

    kind: str
    session_id: str
    track_id: int
    plot_index: int
    timestamp: int
    score: float
    threshold: float

    def to_json_line(self) -> str:
        return json.dumps({
            "kind": self.kind,
            "session": self.session_id,
            "track_id": self.track_id,
            "plot_index": self.plot_index,
            "t": self.timestamp,
            "score": self.score,
            "threshold": self.threshold,
        }, sort_keys=True, separators=(",", ":"))


class StreamMonitor:
    """Scores plots one by one and yields alerts immediately.

    Per-track state is bounded: a running score sum/count for the field
    aggregator and the last K preprocessed vectors for the timing window.
    Tracks idle beyond `evict_horizon` (measured against the most recent
    update_time seen in their session) are evicted.
    """

    def __init__(self, field_model: FieldModel, timing_model: TimingModel,
                 evict_horizon: int = DEFAULT_EVICT_HORIZON) -> None:
        self.field_model = field_model
        self.timing_model = timing_model
        self.evict_horizon = evict_horizon
        self.collector = TrackScoreCollector()
        self.timing_scorer = TimingStreamScorer(timing_model)
        self.n_plots = 0
        self.n_malformed = 0
        self.n_alerts = {FIELD_PLOT: 0, FIELD_TRACK: 0, TIMING: 0}
        self._last_seen: dict[tuple[str, int], int] = {}
        self._session_clock: dict[str, int] = {}
        self._plot_count: dict[tuple[str, int], int] = {}

    def on_plot(self, plot: PlotRecord) -> list[AlertRecord]:
        """Score one plot with both detectors; returns alerts in fire order."""
        self.n_plots += 1
        key = (plot.session_id, plot.track_id)
        index = self._plot_count.get(key, 0)
        self._plot_count[key] = index + 1
        self._last_seen[key] = plot.update_time
        clock = self._session_clock.get(plot.session_id, 0)
        self._session_clock[plot.session_id] = max(clock, plot.update_time)

        alerts: list[AlertRecord] = []
        fv = self.field_model.detect(plot, self.collector)
        if fv.plot_alert:
            alerts.append(AlertRecord(
                kind=FIELD_PLOT, session_id=plot.session_id, track_id=plot.track_id,
                plot_index=index, timestamp=plot.update_time,
                score=fv.plot_score, threshold=self.field_model.plot_threshold,
            ))
        if fv.track_alert:
            alerts.append(AlertRecord(
                kind=FIELD_TRACK, session_id=plot.session_id, track_id=plot.track_id,
                plot_index=index, timestamp=plot.update_time,
                score=fv.track_mean, threshold=self.field_model.track_threshold,
            ))
        tv = self.timing_scorer.on_plot(plot)
        if tv is not None and tv.alert:
            alerts.append(AlertRecord(
                kind=TIMING, session_id=plot.session_id, track_id=plot.track_id,
                plot_index=tv.plot_index, timestamp=plot.update_time,
                score=tv.squared_error, threshold=self.timing_model.thr,
            ))
        for alert in alerts:
            self.n_alerts[alert.kind] += 1
        if self.n_plots % EVICT_EVERY == 0:
            self._evict_idle()
        return alerts

    def on_line(self, line: str) -> list[AlertRecord]:
        """Parse one NDJSON line and score it; malformed input is skipped."""
        line = line.strip()
        if not line:
            return []
        try:
            plot = parse_plot_line(line, self.field_model.schema)
        except MalformedLine as exc:
            self.n_malformed += 1
            log.warning("skipping malformed line: %s", exc)
            return []
        return self.on_plot(plot)

    def _evict_idle(self) -> None:
        stale = [
            key for key, seen in self._last_seen.items()
            if self._session_clock[key[0]] - seen > self.evict_horizon
        ]
        for key in stale:
            self.collector.evict(*key)
            self.timing_scorer.evict(*key)
            del self._last_seen[key]
            del self._plot_count[key]
        if stale:
            log.debug("evicted %d idle tracks", len(stale))

    def run(self, lines, sink) -> dict:
        """Monitor a line iterable, writing alert NDJSON to `sink`.

        Returns the run counters.  Alerts for plot n are written before
        plot n+1 is read.
        """
        for line in lines:
            for alert in self.on_line(line):
                sink.write(alert.to_json_line() + "\n")
        return self.counters()

    def counters(self) -> dict:
        return {
            "n_plots": self.n_plots,
            "n_malformed": self.n_malformed,
            "n_field_plot_alerts": self.n_alerts[FIELD_PLOT],
            "n_field_track_alerts": self.n_alerts[FIELD_TRACK],
            "n_timing_alerts": self.n_alerts[TIMING],
            "n_tracked": len(self._plot_count),
        }


__all__ = [
    "AlertRecord",
    "StreamMonitor",
    "FIELD_PLOT",
    "FIELD_TRACK",
    "TIMING",
    "DEFAULT_EVICT_HORIZON",
    "TRACK_WARMUP",
]
