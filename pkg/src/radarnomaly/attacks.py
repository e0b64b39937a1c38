"""Labeled attack test sets forged from a benign corpus.

Two generators: whole-track categorical manipulation (balanced test set,
benign tracks plus tampered duplicates) and consecutive plot dropping
(imbalanced, one anomalous survivor plot per attacked track).  Both are
pure functions of (corpus, parameters, seed): sessions and tracks are
visited in sorted order so equal seeds give identical test sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import CardinalityOne, InvalidConfig, UnknownFeature
from .stream import FeatureSchema, PlotRecord, SessionStore, Track, serialize_plot
from .timing import DEFAULT_K

DEFAULT_DROP_BUDGET = 10


@dataclass
class LabeledTestSet:
    """Plots with 0/1 anomaly labels plus a record of how they were made."""

    plots: list[tuple[PlotRecord, int]]
    provenance: dict

    @property
    def n_positive(self) -> int:
        return sum(label for _, label in self.plots)

    @property
    def n_negative(self) -> int:
        return len(self.plots) - self.n_positive

    def labeled_tracks(self) -> list[tuple[Track, tuple[int, ...]]]:
        """Regroup the labeled plots into tracks, preserving plot order."""
        order: list[tuple[str, int]] = []
        tracks: dict[tuple[str, int], Track] = {}
        labels: dict[tuple[str, int], list[int]] = {}
        for plot, label in self.plots:
            key = (plot.session_id, plot.track_id)
            if key not in tracks:
                order.append(key)
                tracks[key] = Track(plot.session_id, plot.track_id)
                labels[key] = []
            tracks[key].plots.append(plot)
            labels[key].append(label)
        return [(tracks[k], tuple(labels[k])) for k in order]


def _sorted_tracks(store: SessionStore) -> list[Track]:
    """Corpus tracks in (session_id, track_id) order for stable rng use."""
    out: list[Track] = []
    for sid in sorted(store.session_ids()):
        out.extend(sorted(store.tracks(sid), key=lambda t: t.track_id))
    return out


def _modal_value(track: Track, cat_idx: int) -> int:
    """Most frequent value of one categorical along a track, ties low."""
    counts: dict[int, int] = {}
    for plot in track.plots:
        v = plot.cat_values[cat_idx]
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    return min(v for v, n in counts.items() if n == best)


def manipulate_categorical(benign: SessionStore, schema: FeatureSchema,
                           feature: str, seed: int = 0) -> LabeledTestSet:
    """Balanced test set: benign tracks plus whole-track tampered copies.

    Every track is duplicated; on the duplicate, `feature` is overwritten
    on every plot with one random value distinct from the track's original
    modal value.  Duplicates keep their session and get track_id shifted by
    (max id in session + 1) so originals and copies never merge.
    """
    if feature not in {name for name, _ in schema.categorical}:
        raise UnknownFeature(f"{feature!r} is not a schema categorical")
    cat_idx = schema.cat_index(feature)
    card = schema.cardinality(feature)
    if card < 2:
        raise CardinalityOne(f"{feature!r} has cardinality {card}, nothing to change")

    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    offsets = {
        sid: max(t.track_id for t in benign.tracks(sid)) + 1
        for sid in benign.session_ids()
    }

    plots: list[tuple[PlotRecord, int]] = []
    per_track: dict[str, dict] = {}
    n_original = 0
    for track in _sorted_tracks(benign):
        for plot in track.plots:
            plots.append((plot, 0))
        n_original += len(track.plots)

        modal = _modal_value(track, cat_idx)
        alternatives = [v for v in range(card) if v != modal]
        chosen = int(alternatives[int(rng.integers(len(alternatives)))])
        new_id = track.track_id + offsets[track.session_id]
        for plot in track.plots:
            cats = list(plot.cat_values)
            cats[cat_idx] = chosen
            plots.append((
                PlotRecord(plot.session_id, new_id, plot.update_time,
                           tuple(cats), plot.num_values),
                1,
            ))
        per_track[f"{track.session_id}:{track.track_id}"] = {
            "duplicate_track_id": new_id, "modal": modal, "value": chosen,
        }

    provenance = {
        "attack": "manipulation",
        "feature": feature,
        "seed": seed,
        "n_benign_plots": n_original,
        "n_malicious_plots": len(plots) - n_original,
        "per_track": per_track,
    }
    return LabeledTestSet(plots=plots, provenance=provenance)


def drop_plots(benign: SessionStore, c: int = DEFAULT_DROP_BUDGET,
               k: int = DEFAULT_K, seed: int = 0) -> LabeledTestSet:
    """Imbalanced test set: gaps cut from tracks, survivors labeled 1.

    For each track long enough (length >= k + c + 2) a start index i is
    drawn uniformly from [k, length-c-2] and a budget r from [c, length-1];
    d = min(length-i-1, r) consecutive plots from i on are removed, which
    always leaves a surviving plot right after the gap.  That survivor is
    the single positive of the track.  Short tracks pass through benign.
    """
    if c < 1:
        raise InvalidConfig("drop budget c must be >= 1")
    if k < 1:
        raise InvalidConfig("window length k must be >= 1")

    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    plots: list[tuple[PlotRecord, int]] = []
    per_track: dict[str, dict] = {}
    n_eligible = 0
    n_ineligible = 0
    for track in _sorted_tracks(benign):
        length = len(track)
        if length < k + c + 2:
            n_ineligible += 1
            for plot in track.plots:
                plots.append((plot, 0))
            continue
        n_eligible += 1
        i = int(rng.integers(k, length - c - 1))        # [k, length-c-2]
        r = int(rng.integers(c, length))                # [c, length-1]
        d = min(length - i - 1, r)
        kept = track.plots[:i] + track.plots[i + d:]
        for j, plot in enumerate(kept):
            plots.append((plot, 1 if j == i else 0))
        per_track[f"{track.session_id}:{track.track_id}"] = {
            "i": i, "r": r, "d": d, "survivor_index": i,
        }

    provenance = {
        "attack": "drop",
        "c": c,
        "k": k,
        "seed": seed,
        "n_eligible_tracks": n_eligible,
        "n_ineligible_tracks": n_ineligible,
        "per_track": per_track,
    }
    return LabeledTestSet(plots=plots, provenance=provenance)


def write_labeled_ndjson(path: str, test_set: LabeledTestSet) -> None:
    """One NDJSON line per plot with `label` and `attack` keys appended."""
    attack = test_set.provenance.get("attack", "unknown")
    with open(path, "w", encoding="utf-8") as fh:
        for plot, label in test_set.plots:
            fh.write(serialize_plot(plot, extra={"label": label, "attack": attack}) + "\n")


def write_provenance(path: str, test_set: LabeledTestSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(test_set.provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_labeled_ndjson(path: str, schema: FeatureSchema) -> LabeledTestSet:
    """Read back a labeled test set written by `write_labeled_ndjson`."""
    from .stream import parse_plot_line
    from .errors import MalformedLine

    plots: list[tuple[PlotRecord, int]] = []
    attack = "unknown"
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                label = int(obj.get("label", 0))
                attack = str(obj.get("attack", attack))
            except (json.JSONDecodeError, TypeError, ValueError) as exc:
                raise MalformedLine(f"{path}:{lineno}: {exc}") from exc
            if label not in (0, 1):
                raise MalformedLine(f"{path}:{lineno}: label must be 0 or 1")
            plots.append((parse_plot_line(line, schema), label))
    return LabeledTestSet(plots=plots, provenance={"attack": attack, "source": path})
