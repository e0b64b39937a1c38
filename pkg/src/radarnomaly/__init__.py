"""Anomaly detection pipeline for radar-style plot streams.

Two complementary detectors over a stream of tracked-object messages
("plots"): an autoencoder that scores the internal consistency of each
plot's categorical and numerical fields, and an LSTM regressor that
predicts each track's next update period and flags timing gaps.  The
package also ships a deterministic benign-stream generator, attack forges,
an evaluation battery, a live stream monitor and a CLI.
"""

from .attacks import (
    LabeledTestSet,
    drop_plots,
    manipulate_categorical,
    read_labeled_ndjson,
    write_labeled_ndjson,
    write_provenance,
)
from .errors import (
    CardinalityOne,
    EmptySequence,
    IndexOutOfRange,
    InsufficientData,
    InvalidConfig,
    MalformedLine,
    NoPositives,
    NonFiniteLoss,
    OneClassOnly,
    RadarnomalyError,
    SchemaViolation,
    ShapeMismatch,
    SingleSession,
    TrackTooShort,
    UnknownFeature,
    UnknownSession,
    UntrainedModel,
)
from .evalbench import (
    AttackSpec,
    CurvePoint,
    CurveReport,
    EvalSetup,
    ExperimentResult,
    RateSummary,
    average_precision,
    curve_report,
    make_split,
    materialize_split,
    rate_at_threshold,
    roc_auc,
    run_battery,
    run_experiment,
)
from .field import (
    PLOT_PERCENTILE,
    TRACK_WARMUP,
    FieldModel,
    FieldVerdict,
    TrackScoreCollector,
    TrainConfig,
    calibrate_plot_threshold,
    calibrate_track_threshold,
    max_running_average,
    train_field_model,
)
from .monitor import AlertRecord, StreamMonitor
from .stream import (
    FeatureSchema,
    PlotRecord,
    SessionStore,
    Track,
    assemble_tracks,
    default_schema,
    parse_plot_line,
    read_ndjson,
    serialize_plot,
    write_ndjson,
)
from .synth import SynthConfig, TrackType, default_corpus, generate_corpus, generate_session
from .timing import (
    DEFAULT_K,
    TimingModel,
    TimingStreamScorer,
    TimingVerdict,
    calibrate_thr,
    train_timing_model,
)

__version__ = "0.1.0"

__all__ = [
    "AlertRecord",
    "AttackSpec",
    "CardinalityOne",
    "CurvePoint",
    "CurveReport",
    "DEFAULT_K",
    "EmptySequence",
    "EvalSetup",
    "ExperimentResult",
    "FeatureSchema",
    "FieldModel",
    "FieldVerdict",
    "IndexOutOfRange",
    "InsufficientData",
    "InvalidConfig",
    "LabeledTestSet",
    "MalformedLine",
    "NoPositives",
    "NonFiniteLoss",
    "OneClassOnly",
    "PLOT_PERCENTILE",
    "PlotRecord",
    "RadarnomalyError",
    "RateSummary",
    "SchemaViolation",
    "SessionStore",
    "ShapeMismatch",
    "SingleSession",
    "StreamMonitor",
    "SynthConfig",
    "TRACK_WARMUP",
    "TimingModel",
    "TimingStreamScorer",
    "TimingVerdict",
    "Track",
    "TrackScoreCollector",
    "TrackTooShort",
    "TrackType",
    "TrainConfig",
    "UnknownFeature",
    "UnknownSession",
    "UntrainedModel",
    "assemble_tracks",
    "average_precision",
    "calibrate_plot_threshold",
    "calibrate_thr",
    "calibrate_track_threshold",
    "curve_report",
    "default_corpus",
    "default_schema",
    "drop_plots",
    "generate_corpus",
    "generate_session",
    "make_split",
    "manipulate_categorical",
    "materialize_split",
    "max_running_average",
    "parse_plot_line",
    "rate_at_threshold",
    "read_labeled_ndjson",
    "read_ndjson",
    "roc_auc",
    "run_battery",
    "run_experiment",
    "serialize_plot",
    "train_field_model",
    "train_timing_model",
    "write_labeled_ndjson",
    "write_ndjson",
    "write_provenance",
]
