"""Deterministic benign stream generator.

Each track belongs to one of a few track types.  A type fixes the
conditional table for every categorical feature, the kinematic regime that
drives the numerical features, and the base update period.  Along a track,
categoricals stay at their drawn value except for rare per-plot flips, the
numericals follow a smooth latent position/velocity trajectory plus fixed
cross-feature combinations with 1% gaussian noise, and update times
accumulate base_period * (1 +- jitter).  Per-track jitter is drawn from a
few tiers (most tracks are near-metronomic, a small minority are wobbly),
which keeps the benign squared-error distribution heavy-tailed the way real
update periods are.

Generation is a pure function of (master seed, session index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import InvalidConfig
from .stream import FeatureSchema, PlotRecord, SessionStore, Track, default_schema

# all tracks fit inside this horizon so sessions interleave in time
TIME_HORIZON = 700_000.0


@dataclass(frozen=True)
class TrackType:
    """One behavioural class of tracks."""

    name: str
    cat_probs: dict[str, tuple[float, ...]]
    base_period: int
    speed: float
    power: float
    turn_sd: float

    def validate(self, schema: FeatureSchema) -> None:
        for fname, card in schema.categorical:
            probs = self.cat_probs.get(fname)
            if probs is None:
                raise InvalidConfig(f"type {self.name!r} missing table for {fname!r}")
            if len(probs) != card:
                raise InvalidConfig(
                    f"type {self.name!r} table for {fname!r} has {len(probs)} rows, "
                    f"cardinality is {card}"
                )
            if abs(sum(probs) - 1.0) > 1e-9:
                raise InvalidConfig(f"type {self.name!r} table for {fname!r} does not sum to 1")
        if self.base_period < 1:
            raise InvalidConfig("base_period must be >= 1")


@dataclass
class SynthConfig:
    schema: FeatureSchema = dc_field(default_factory=default_schema)
    track_types: tuple[TrackType, ...] = ()
    tracks_per_session: tuple[int, ...] = (228, 116, 60, 48)
    length_min: int = 20
    length_max: int = 60
    flip_prob: float = 0.01
    noise_frac: float = 0.01
    # (jitter fraction, probability) tiers drawn once per track
    jitter_tiers: tuple[tuple[float, float], ...] = ((0.002, 0.55), (0.01, 0.37), (0.04, 0.08))
    master_seed: int = 0

    def __post_init__(self) -> None:
        if not self.track_types:
            self.track_types = default_track_types()
        for tt in self.track_types:
            tt.validate(self.schema)
        if self.length_min < 7:
            raise InvalidConfig("length_min must be >= 7 so every track spans a timing window")
        if self.length_max < self.length_min:
            raise InvalidConfig("length_max < length_min")
        if not self.tracks_per_session or any(n < 1 for n in self.tracks_per_session):
            raise InvalidConfig("tracks_per_session must be positive counts")
        for j, p in self.jitter_tiers:
            if not 0.0 <= j < 0.5:
                raise InvalidConfig("jitter fraction must be in [0, 0.5)")
            if p < 0:
                raise InvalidConfig("jitter tier probability must be >= 0")
        if abs(sum(p for _, p in self.jitter_tiers) - 1.0) > 1e-9:
            raise InvalidConfig("jitter tier probabilities must sum to 1")

    @property
    def session_count(self) -> int:
        return len(self.tracks_per_session)


def _onehot(card: int, value: int) -> tuple[float, ...]:
    return tuple(1.0 if i == value else 0.0 for i in range(card))


def default_track_types() -> tuple[TrackType, ...]:
    """Three regimes: fast/quiet, medium, slow/loud."""
    schema = default_schema()
    cards = dict(schema.categorical)

    def table(values: dict[str, int]) -> dict[str, tuple[float, ...]]:
        return {name: _onehot(cards[name], v) for name, v in values.items()}

    return (
        TrackType(
            name="fast",
            cat_probs=table({
                "trackType": 0, "signalQuality": 1, "objectType": 0, "alertRaised": 0,
                "objectCategory": 0, "sigProp1": 0, "sigProp2": 0, "sigProp3": 1,
                "sigProp4": 0, "sigProp5": 1,
            }),
            base_period=1000, speed=300.0, power=1.0, turn_sd=0.02,
        ),
        # power values are spread geometrically so each type sits at a
        # scaled extreme of some stable feature, which the autoencoder
        # separates far more reliably than mid-range values

        TrackType(
            name="medium",
            cat_probs=table({
                "trackType": 1, "signalQuality": 2, "objectType": 2, "alertRaised": 0,
                "objectCategory": 1, "sigProp1": 1, "sigProp2": 1, "sigProp3": 3,
                "sigProp4": 1, "sigProp5": 0,
            }),
            base_period=3000, speed=30.0, power=100.0, turn_sd=0.05,
        ),
        TrackType(
            name="slow",
            cat_probs=table({
                "trackType": 3, "signalQuality": 0, "objectType": 4, "alertRaised": 1,
                "objectCategory": 2, "sigProp1": 2, "sigProp2": 0, "sigProp3": 5,
                "sigProp4": 2, "sigProp5": 3,
            }),
            base_period=9000, speed=3.0, power=10.0, turn_sd=0.1,
        ),
    )


def _numericals(x: float, y: float, vx: float, vy: float, power: float,
                noise_frac: float, rng: np.random.Generator) -> tuple[float, ...]:
    """17 derived features: coordinates plus fixed combinations, 1% noise."""
    r = math.hypot(x, y)
    s = math.hypot(vx, vy)
    vals = np.array([
        power,
        x,
        y,
        vx,
        vy,
        r,
        s,
        x + y,
        x - y,
        0.5 * x + 0.25 * y,
        vx + vy,
        x + 10.0 * vx,
        y + 10.0 * vy,
        (x * vy - y * vx) / 1000.0,
        r + 20.0 * s,
        1000.0 / (1.0 + s),
        power * s,
    ], dtype=np.float64)
    noise = rng.normal(size=vals.shape)
    vals = vals + noise_frac * np.maximum(1.0, np.abs(vals)) * noise
    return tuple(float(v) for v in vals)


def _gen_track(config: SynthConfig, session_id: str, track_id: int,
               rng: np.random.Generator) -> Track:
    schema = config.schema
    types = config.track_types
    tt = types[int(rng.integers(len(types)))]
    length = int(rng.integers(config.length_min, config.length_max + 1))
    tiers = config.jitter_tiers
    jitter = float(tiers[int(rng.choice(len(tiers), p=[p for _, p in tiers]))][0])

    base_values = []
    for name, card in schema.categorical:
        probs = np.asarray(tt.cat_probs[name], dtype=np.float64)
        base_values.append(int(rng.choice(card, p=probs)))

    speed = tt.speed * rng.uniform(0.8, 1.2)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    x = float(rng.uniform(-1000.0, 1000.0))
    y = float(rng.uniform(-1000.0, 1000.0))
    span = 1.1 * length * tt.base_period
    t = int(round(rng.uniform(0.0, max(1.0, TIME_HORIZON - span))))

    track = Track(session_id=session_id, track_id=track_id)
    cards = [c for _, c in schema.categorical]
    for j in range(length):
        if j > 0:
            period = tt.base_period * (1.0 + rng.uniform(-jitter, jitter))
            t += max(1, int(round(period)))
        vx = speed * math.cos(theta)
        vy = speed * math.sin(theta)
        cats = list(base_values)
        if rng.random() < config.flip_prob:
            f = int(rng.integers(len(cats)))
            alt = int(rng.integers(cards[f] - 1))
            cats[f] = alt if alt < cats[f] else alt + 1
        nums = _numericals(x, y, vx, vy, tt.power, config.noise_frac, rng)
        track.plots.append(PlotRecord(
            session_id=session_id,
            track_id=track_id,
            update_time=t,
            cat_values=tuple(cats),
            num_values=nums,
        ))
        theta += float(rng.normal(0.0, tt.turn_sd))
        dt = tt.base_period * 0.001
        x += vx * dt
        y += vy * dt
    return track


def generate_session(config: SynthConfig, session_index: int) -> list[Track]:
    """All tracks of one session; deterministic in (master_seed, index)."""
    if not 0 <= session_index < config.session_count:
        raise InvalidConfig(
            f"session_index {session_index} out of range for {config.session_count} sessions"
        )
    rng = np.random.default_rng(
        np.random.SeedSequence([config.master_seed, session_index])
    )
    session_id = f"R{session_index + 1}"
    n = config.tracks_per_session[session_index]
    return [_gen_track(config, session_id, tid, rng) for tid in range(n)]


def generate_corpus(config: SynthConfig) -> SessionStore:
    store = SessionStore()
    for i in range(config.session_count):
        for track in generate_session(config, i):
            store.add_track(track)
    return store


def default_corpus(seed: int = 42) -> SessionStore:
    """The stock four-session corpus used by the evaluation battery."""
    cfg = SynthConfig(master_seed=seed)
    return generate_corpus(cfg)
