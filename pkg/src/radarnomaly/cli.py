"""Command-line surface: gen, train, attack, eval, monitor, bench.

Exit codes are a stable contract for scripting: 0 success, 2 schema or
configuration error, 3 insufficient data, 4 I/O failure.  The RADARNOMALY_LOG
environment variable sets the log level (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
import time

import numpy as np

from .attacks import (
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
    EvalSetup,
    curve_report,
    rate_at_threshold,
    run_battery,
    run_experiment,
    score_drop,
    score_manipulation,
    write_curves,
)
from .field import FieldModel, TrainConfig, train_field_model
from .monitor import StreamMonitor
from .nnet.modelfile import dump_model, load_model
from .stream import (
    FeatureSchema,
    assemble_tracks,
    default_schema,
    read_ndjson,
    write_ndjson,
)
from .synth import SynthConfig, generate_session
from .timing import DEFAULT_K, TimingModel, train_timing_model

log = logging.getLogger("radarnomaly.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4

_CONFIG_ERRORS = (InvalidConfig, SchemaViolation, UnknownFeature, UnknownSession,
                  CardinalityOne, SingleSession, ShapeMismatch, IndexOutOfRange)
_DATA_ERRORS = (InsufficientData, TrackTooShort, EmptySequence, OneClassOnly,
                NoPositives, UntrainedModel, NonFiniteLoss)

_SETUP_NAMES = {"cross": "cross_session", "chrono": "chronological",
                "transfer": "transfer"}


def _load_schema(path: str | None) -> FeatureSchema:
    if path is None:
        return default_schema()
    with open(path, "r", encoding="utf-8") as fh:
        return FeatureSchema.from_json(json.load(fh))


def _read_corpus(path: str, schema: FeatureSchema):
    """NDJSON file, or a directory of *.ndjson files, as a SessionStore."""
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, "*.ndjson")))
        if not files:
            raise InsufficientData(f"no *.ndjson files under {path!r}")
    else:
        files = [path]
    plots = []
    for f in files:
        plots.extend(read_ndjson(f, schema))
    if not plots:
        raise InsufficientData(f"corpus at {path!r} holds no plots")
    return assemble_tracks(plots)


def _parse_attack(kind: str, feature: str | None, c: int, k: int) -> AttackSpec:
    if kind.startswith("manipulate"):
        _, _, embedded = kind.partition(":")
        feature = embedded or feature
        if not feature:
            raise InvalidConfig(
                "manipulation needs a feature: --kind manipulate:<feature> or --feature"
            )
        return AttackSpec("manipulation", feature=feature, c=c, k=k)
    if kind == "drop":
        return AttackSpec("drop", c=c, k=k)
    raise InvalidConfig(f"unknown attack kind {kind!r} (use manipulate:<feature> or drop)")


def _load_models(path: str) -> tuple[FeatureSchema, FieldModel | None, TimingModel | None]:
    envelope = load_model(path)
    schema = FeatureSchema.from_json(envelope["schema"])
    field_model = None
    timing_model = None
    if "field" in envelope:
        field_model = FieldModel.from_json(envelope["field"], schema)
    if "timing" in envelope:
        timing_model = TimingModel.from_json(envelope["timing"], schema)
    return schema, field_model, timing_model


# -- verbs ---------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> int:
    schema = _load_schema(args.schema)
    config = SynthConfig(schema=schema, master_seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    for i in range(config.session_count):
        tracks = generate_session(config, i)
        session_id = tracks[0].session_id
        plots = [p for t in tracks for p in t.plots]
        path = os.path.join(args.out, f"{session_id}.ndjson")
        write_ndjson(path, plots)
        log.info("wrote %s (%d tracks, %d plots)", path, len(tracks), len(plots))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    schema = _load_schema(args.schema)
    corpus = _read_corpus(args.corpus, schema)
    config = TrainConfig()
    tracks = corpus.tracks()
    field_model = train_field_model(tracks, schema, config, seed=args.seed)
    timing_model = train_timing_model(tracks, schema, config, seed=args.seed, k=args.k)
    sections = {
        "field": field_model.to_json(),
        "timing": timing_model.to_json(),
        "thresholds": {
            "field_plot": field_model.plot_threshold,
            "field_track": field_model.track_threshold,
            "timing_error": timing_model.thr,
            "timing_min_history": timing_model.k,
        },
    }
    dump_model(args.out, schema, sections)
    log.info("wrote model %s", args.out)
    return EXIT_OK


def cmd_attack(args: argparse.Namespace) -> int:
    schema = _load_schema(args.schema)
    corpus = _read_corpus(args.corpus, schema)
    spec = _parse_attack(args.kind, args.feature, args.c, args.k)
    if spec.kind == "manipulation":
        test_set = manipulate_categorical(corpus, schema, spec.feature, seed=args.seed)
    else:
        test_set = drop_plots(corpus, c=spec.c, k=spec.k, seed=args.seed)
    write_labeled_ndjson(args.out, test_set)
    write_provenance(args.out + ".provenance.json", test_set)
    log.info("wrote %s (%d plots, %d positive)", args.out,
             len(test_set.plots), test_set.n_positive)
    return EXIT_OK


def _eval_testset(args: argparse.Namespace) -> int:
    schema, field_model, timing_model = _load_models(args.model)
    test_set = read_labeled_ndjson(args.testset, schema)
    attack = test_set.provenance.get("attack", "unknown")
    counts: dict = {"n_labeled_plots": len(test_set.plots)}
    if attack == "manipulation":
        if field_model is None:
            raise InvalidConfig("model file has no field section")
        scores = score_manipulation(field_model, test_set)
        threshold = field_model.track_threshold
    elif attack == "drop":
        if timing_model is None:
            raise InvalidConfig("model file has no timing section")
        scores, extra = score_drop(timing_model, test_set)
        counts.update(extra)
        threshold = timing_model.thr
    else:
        raise InvalidConfig(f"test set carries unknown attack tag {attack!r}")
    report = curve_report(scores)
    rates = rate_at_threshold(scores, threshold)
    os.makedirs(args.out, exist_ok=True)
    payload = {
        "attack": attack,
        "testset": os.path.basename(args.testset),
        "metrics": {
            "auc": report.auc, "ap": report.ap, "tpr": rates.tpr,
            "fpr": rates.fpr, "precision": rates.precision,
            "threshold": rates.threshold, "flags": list(rates.flags),
        },
        "counts": {**counts, "n_pos": report.n_pos, "n_neg": report.n_neg},
    }
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_curves(args.out, report)
    print(json.dumps(payload["metrics"], sort_keys=True))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    if args.testset:
        if not args.model:
            raise InvalidConfig("--testset needs --model")
        return _eval_testset(args)

    if not args.corpus:
        raise InvalidConfig("eval needs --corpus (or --model with --testset)")
    schema = _load_schema(args.schema)
    corpus = _read_corpus(args.corpus, schema)
    os.makedirs(args.out, exist_ok=True)
    if args.battery:
        rows = run_battery(corpus, schema, args.out, seed=args.seed)
        for row in rows:
            print(json.dumps(row, sort_keys=True))
        return EXIT_OK

    if not args.setup or not args.session or not args.attack:
        raise InvalidConfig("single-experiment eval needs --setup, --session and --attack")
    setup = EvalSetup(kind=_SETUP_NAMES[args.setup], examined=args.session)
    spec = _parse_attack(args.attack, args.feature, args.c, args.k)
    result = run_experiment(corpus, schema, setup, spec, seed=args.seed)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_curves(args.out, result.report)
    print(json.dumps(result.to_json_dict()["metrics"], sort_keys=True))
    return EXIT_OK


def cmd_monitor(args: argparse.Namespace) -> int:
    _, field_model, timing_model = _load_models(args.model)
    if field_model is None or timing_model is None:
        raise InvalidConfig("monitor needs a model file with field and timing sections")
    monitor = StreamMonitor(field_model, timing_model,
                            evict_horizon=args.evict_horizon)
    in_fh = sys.stdin if args.infile == "-" else open(args.infile, "r", encoding="utf-8")
    out_fh = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
    try:
        counters = monitor.run(in_fh, out_fh)
    finally:
        if in_fh is not sys.stdin:
            in_fh.close()
        if out_fh is not sys.stdout:
            out_fh.close()
    log.info("monitor done: %s", json.dumps(counters, sort_keys=True))
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    schema, field_model, timing_model = _load_models(args.model)
    if field_model is None or timing_model is None:
        raise InvalidConfig("bench needs a model file with field and timing sections")
    corpus = _read_corpus(args.corpus, schema)
    monitor = StreamMonitor(field_model, timing_model)
    plots = corpus.plots()
    if args.limit:
        plots = plots[:args.limit]
    latencies = np.empty(len(plots), dtype=np.float64)
    t_start = time.perf_counter()
    for i, plot in enumerate(plots):
        t0 = time.perf_counter_ns()
        monitor.on_plot(plot)
        latencies[i] = time.perf_counter_ns() - t0
    elapsed = time.perf_counter() - t_start
    payload = {
        "n_plots": len(plots),
        "mean_us": float(latencies.mean() / 1e3),
        "p99_us": float(np.percentile(latencies, 99.0) / 1e3),
        "plots_per_sec": len(plots) / elapsed,
        "alerts": monitor.counters(),
    }
    out = json.dumps(payload, indent=2, sort_keys=True)
    if args.out and args.out != "-":
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    print(out)
    return EXIT_OK


# -- wiring --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radarnomaly",
        description="Anomaly detection pipeline for radar-style plot streams.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", help="generate the deterministic benign corpus")
    p.add_argument("--out", required=True, help="output directory for session NDJSON files")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--schema", default=None, help="JSON schema file (default: built-in)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train both detectors and write a model file")
    p.add_argument("--corpus", required=True, help="NDJSON file or directory")
    p.add_argument("--out", required=True, help="model file path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schema", default=None)
    p.add_argument("--k", type=int, default=DEFAULT_K, help="timing window length")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="forge a labeled attack test set")
    p.add_argument("--corpus", required=True)
    p.add_argument("--kind", required=True, help="manipulate:<feature> or drop")
    p.add_argument("--feature", default=None)
    p.add_argument("--c", type=int, default=10, help="minimum plots dropped per track")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="labeled NDJSON output path")
    p.add_argument("--schema", default=None)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="run experiments or score a labeled test set")
    p.add_argument("--corpus", default=None)
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schema", default=None)
    p.add_argument("--battery", action="store_true",
                   help="full battery: all setups, sessions and default attacks")
    p.add_argument("--setup", choices=sorted(_SETUP_NAMES), default=None)
    p.add_argument("--session", default=None, help="examined session id")
    p.add_argument("--attack", default=None, help="manipulate:<feature> or drop")
    p.add_argument("--feature", default=None)
    p.add_argument("--c", type=int, default=10)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--model", default=None, help="model file (testset mode)")
    p.add_argument("--testset", default=None, help="labeled NDJSON to score")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("monitor", help="stream plots through both detectors")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", default="-", help="input NDJSON ('-' = stdin)")
    p.add_argument("--out", default="-", help="alert NDJSON output ('-' = stdout)")
    p.add_argument("--evict-horizon", type=int, default=200_000,
                   help="idle time units before per-track state is dropped")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("bench", help="measure single-threaded scoring throughput")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--limit", type=int, default=0, help="cap the number of plots")
    p.add_argument("--out", default=None, help="also write the report to a file")
    p.set_defaults(func=cmd_bench)

    return parser


def _log_level() -> int:
    name = os.environ.get("RADARNOMALY_LOG", "WARNING").upper()
    return getattr(logging, name, logging.WARNING)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=_log_level(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MalformedLine as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RadarnomalyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
