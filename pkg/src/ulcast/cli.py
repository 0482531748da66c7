"""Batch command-line entry point: synth, train, eval, predict, maxthpt, arfcn.

Built for scripts and CI, not interactive use. Results go to stdout or to
the requested output files; every run echoes its fully resolved
configuration to stderr for reproducibility. Exit codes: 0 success, 2 usage,
3 data/configuration error, 4 numeric failure.

The data directory for train/eval defaults to $ULCAST_DATA_DIR when --data
is omitted.
"""

import argparse
import json
import os
import sys
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path

from . import __version__
from .autodiff import GraphError, NumericError, ShapeError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .models import ModelKind, ModelSpec, build
from .nrphy import (Duplex, LinkConfigError, RasterRangeError, TDD_DL7_UL2,
                    UlLinkConfig, arfcn_to_mhz, max_ul_throughput, tdd_ul_fraction)
from .synth import PRESET_NAMES, preset, synth_trace
from .tracedata import (EmptyDatasetError, FeatureSet, Normalizer, SchemaError,
                        TraceDataError, make_windows, parse_trace_csv, write_trace_csv)
from .training import (MetricError, TrainConfig, TrainingError, evaluate,
                       predict_trace, train)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_DATA_ERRORS = (SchemaError, TraceDataError, EmptyDatasetError, LinkConfigError,
                RasterRangeError, CheckpointError, MetricError, FileNotFoundError,
                IsADirectoryError, ValueError)
_NUMERIC_ERRORS = (NumericError, TrainingError, GraphError, ShapeError,
                   ArithmeticError)

_SPEC_FLAGS = ("conv_channels", "conv_kernel", "fc_hidden", "lstm_hidden",
               "lstm_layers", "cnn_channels", "d_model", "ff_dim", "heads",
               "encoder_layers")


def _echo_config(command: str, payload: dict) -> None:
    doc = {"command": command, **payload}
    print(f"resolved-config: {json.dumps(doc, sort_keys=True, default=str)}", file=sys.stderr)


def _trace_paths(args) -> list[Path]:
    source = args.data if args.data else os.environ.get("ULCAST_DATA_DIR")
    if not source:
        raise SchemaError("no data given: pass --data or set ULCAST_DATA_DIR")
    paths: list[Path] = []
    for entry in source if isinstance(source, list) else [source]:
        p = Path(entry)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.csv")))
        elif p.exists():
            paths.append(p)
        else:
            raise FileNotFoundError(f"no such file or directory: {p}")
    if not paths:
        raise SchemaError(f"no trace CSV files under {source}")
    return paths


def _cmd_synth(args) -> int:
    scenario = preset(args.preset, seed=args.seed, duration_s=args.duration)
    _echo_config("synth", {"scenario": asdict(scenario), "out": args.out})
    trace = synth_trace(scenario)
    write_trace_csv(trace, args.out)
    print(f"wrote {len(trace)} samples to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    feature_set = FeatureSet(args.features)
    overrides = {name: getattr(args, name) for name in _SPEC_FLAGS
                 if getattr(args, name) is not None}
    spec = ModelSpec(kind=ModelKind(args.model), feature_set=feature_set,
                     seed=args.seed, **overrides)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                      lr=args.lr, shuffle_seed=args.shuffle_seed,
                      val_fraction=args.val_fraction)
    paths = _trace_paths(args)
    _echo_config("train", {"spec": spec.to_dict(),
                           "train_config": asdict(cfg),
                           "data": [str(p) for p in paths], "out": args.out})
    traces = [parse_trace_csv(p, schema=feature_set) for p in paths]
    normalizer = Normalizer.fit_traces(traces, feature_set)
    dataset = make_windows(traces, feature_set, window=spec.window,
                           normalizer=normalizer)
    trained = train(build(spec), dataset, cfg, normalizer)
    save_checkpoint(trained, args.out)
    print(f"trained {spec.kind.value} on {len(dataset)} windows "
          f"({trained.model.param_count()} params), final loss "
          f"{trained.history[-1]:.6f}, saved to {args.out}")
    return EXIT_OK


def _parse_groups(entries: list[str]) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for entry in entries or []:
        name, _, ids = entry.partition("=")
        if not ids:
            raise SchemaError(f"bad --group '{entry}', expected NAME=ID1,ID2")
        groups[name] = ids.split(",")
    return groups


def _cmd_eval(args) -> int:
    trained = load_checkpoint(args.model)
    paths = _trace_paths(args)
    groups = _parse_groups(args.group)
    config = {"model": str(args.model), "data": [str(p) for p in paths],
              "tag": args.tag, "groups": groups}
    _echo_config("eval", config)
    traces = [parse_trace_csv(p, schema=trained.spec.feature_set) for p in paths]
    report = evaluate(trained, traces, tag=args.tag, groups=groups, config=config)
    payload = report.to_json()
    if args.report:
        Path(args.report).write_text(payload + "\n", encoding="utf-8")
        print(f"wrote report to {args.report}")
    else:
        print(payload)
    return EXIT_OK


def _cmd_predict(args) -> int:
    trained = load_checkpoint(args.model)
    _echo_config("predict", {"model": str(args.model), "trace": str(args.trace)})
    trace = parse_trace_csv(args.trace, schema=trained.spec.feature_set)
    preds = predict_trace(trained, trace)
    target_ts = [trace.samples[seg_start + i + trained.spec.window].t
                 for seg_start, seg_stop in trace.segments()
                 for i in range(seg_stop - seg_start - trained.spec.window)]
    lines = ["t,predicted_mbps"]
    lines += [f"{t},{pred:.4f}" for t, pred in zip(target_ts, preds)]
    out = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(out, encoding="utf-8")
        print(f"wrote {len(preds)} predictions to {args.out}")
    else:
        sys.stdout.write(out)
    return EXIT_OK


_BAND_DEFAULTS = {
    # band -> (duplex, scs_khz)
    "n28": ("fdd", 15),
    "n3": ("fdd", 15),
    "n77": ("tdd", 30),
}


def _cmd_maxthpt(args) -> int:
    if args.band:
        duplex_default, scs_default = _BAND_DEFAULTS[args.band]
    else:
        duplex_default, scs_default = None, None
    duplex_name = args.duplex or duplex_default
    if duplex_name is None:
        raise LinkConfigError("pass --duplex (or --band to imply it)")
    duplex = Duplex(duplex_name)
    scs = args.scs or scs_default or (15 if duplex is Duplex.FDD else 30)
    ul_fraction = Fraction(1) if duplex is Duplex.FDD else tdd_ul_fraction(TDD_DL7_UL2)
    cfg = UlLinkConfig(duplex=duplex, bandwidth_mhz=args.bw, scs_khz=scs,
                       n_prb=args.nprb, layers=args.layers,
                       modulation_order=args.qm,
                       ul_symbol_fraction=ul_fraction)
    _echo_config("maxthpt", {"band": args.band, "duplex": duplex.value,
                             "bandwidth_mhz": args.bw, "scs_khz": scs,
                             "n_prb": cfg.n_prb, "layers": cfg.layers,
                             "qm": cfg.modulation_order,
                             "ul_symbol_fraction": str(cfg.ul_symbol_fraction)})
    print(f"{max_ul_throughput(cfg):.2f} Mbps")
    return EXIT_OK


def _cmd_arfcn(args) -> int:
    _echo_config("arfcn", {"n_ref": args.n_ref})
    mhz = arfcn_to_mhz(args.n_ref)
    text = f"{mhz:.6f}".rstrip("0").rstrip(".")
    print(f"{text} MHz")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ulcast",
        description="5G SA uplink throughput prediction toolkit")
    parser.add_argument("--version", action="version", version=f"ulcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic drive trace CSV")
    p.add_argument("--preset", choices=PRESET_NAMES, default="train",
                   help="scenario preset (default: train)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    p.add_argument("--duration", type=int, default=None,
                   help="trace length in seconds (default: preset value)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a predictor on trace CSVs")
    p.add_argument("--model", required=True,
                   choices=[k.value for k in ModelKind], help="architecture")
    p.add_argument("--features", default="android-api",
                   choices=[f.value for f in FeatureSet],
                   help="input feature set (default: android-api)")
    p.add_argument("--data", nargs="+", default=None,
                   help="trace CSV files or directories (default: $ULCAST_DATA_DIR)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=None,
                   help="override the per-architecture default epoch count")
    p.add_argument("--batch", type=int, default=32, help="batch size (default: 32)")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate (default: 1e-3)")
    p.add_argument("--seed", type=int, default=0, help="weight init seed (default: 0)")
    p.add_argument("--shuffle-seed", type=int, default=0, dest="shuffle_seed",
                   help="mini-batch shuffle seed (default: 0)")
    p.add_argument("--val-fraction", type=float, default=0.0, dest="val_fraction",
                   help="fraction of traces held out of training (default: 0)")
    for name in _SPEC_FLAGS:
        p.add_argument(f"--{name.replace('_', '-')}", type=int, default=None,
                       dest=name, help=f"override ModelSpec.{name}")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on trace CSVs")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", nargs="+", default=None,
                   help="trace CSV files or directories (default: $ULCAST_DATA_DIR)")
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.add_argument("--tag", default="", help="label echoed into the report (e.g. unseen)")
    p.add_argument("--group", action="append", default=[],
                   help="NAME=ID1,ID2 weighted grouping of similar traces; repeatable")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="stream per-second forecasts for one trace")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--trace", required=True, help="trace CSV path")
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("maxthpt", help="TS 38.306 maximum uplink throughput")
    p.add_argument("--band", choices=sorted(_BAND_DEFAULTS), default=None,
                   help="band name implying duplex and SCS defaults")
    p.add_argument("--bw", type=float, required=True, help="channel bandwidth in MHz")
    p.add_argument("--duplex", choices=["fdd", "tdd"], default=None)
    p.add_argument("--scs", type=int, choices=[15, 30], default=None,
                   help="subcarrier spacing in kHz (default: 15 FDD / 30 TDD)")
    p.add_argument("--nprb", type=int, default=None,
                   help="PRB count (default: from the 38.101-1 table)")
    p.add_argument("--layers", type=int, default=1, help="MIMO layers (default: 1)")
    p.add_argument("--qm", type=int, default=8, help="modulation order (default: 8)")
    p.set_defaults(func=_cmd_maxthpt)

    p = sub.add_parser("arfcn", help="NR-ARFCN to carrier frequency")
    p.add_argument("n_ref", type=int, help="NR-ARFCN channel number")
    p.set_defaults(func=_cmd_arfcn)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
