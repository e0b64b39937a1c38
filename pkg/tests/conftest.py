"""Shared fixtures: schemas, a small corpus, and quick training knobs."""

import numpy as np
import pytest

from radarnomaly import (
    FeatureSchema,
    PlotRecord,
    SynthConfig,
    TrainConfig,
    default_schema,
    generate_corpus,
)


@pytest.fixture(scope="session")
def schema() -> FeatureSchema:
    return default_schema()


@pytest.fixture(scope="session")
def mini_schema() -> FeatureSchema:
    """Three categoricals of cardinality 3 plus four numericals."""
    return FeatureSchema(
        categorical=(("c0", 3), ("c1", 3), ("c2", 3)),
        numerical=("n0", "n1", "n2", "n3"),
        timing_feature_names=("n0", "c0", "c1", "c2"),
    )


@pytest.fixture(scope="session")
def small_corpus():
    """Two sessions, 36 tracks, ~1.4k plots; enough to train both detectors."""
    cfg = SynthConfig(tracks_per_session=(24, 12), master_seed=7)
    return generate_corpus(cfg)


@pytest.fixture(scope="session")
def quick_config() -> TrainConfig:
    """Training knobs for tests that need a fitted model, not a good one."""
    return TrainConfig(max_epochs=8, patience=3, min_plots=50, min_windows=20)


def make_plot(session="S", track=0, t=0, cat=None, num=None,
              schema=None) -> PlotRecord:
    """Hand-built schema-valid plot; zeros unless overridden."""
    schema = schema or default_schema()
    if cat is None:
        cat = (0,) * schema.n_categorical
    if num is None:
        num = (0.0,) * schema.n_numerical
    return PlotRecord(session_id=session, track_id=track, update_time=t,
                      cat_values=tuple(cat), num_values=tuple(float(v) for v in num))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
