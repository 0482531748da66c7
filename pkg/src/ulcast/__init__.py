"""5G SA uplink throughput forecasting toolkit.

Feature extraction from 1 Hz radio telemetry, four neural predictor
architectures on a small reverse-mode autodiff engine, TS 38.306 link-budget
math, a calibrated synthetic drive-trace generator, and the matching
training/evaluation pipeline (instantaneous RMSE plus MAPE on total
transferred volume).
"""

__version__ = "0.1.0"

from .autodiff import AdamState, Graph, Tensor, adam_step, gradient_check
from .models import ModelKind, ModelSpec, TrainedModel, build
from .nrphy import (BandClass, Duplex, TddPattern, UlLinkConfig, arfcn_to_mhz,
                    classify_band, max_ul_throughput, tdd_ul_fraction)
from .checkpoint import load_checkpoint, save_checkpoint
from .synth import Scenario, preset, synth_trace
from .tracedata import (FeatureSet, Normalizer, TelemetrySample, Trace,
                        WindowedDataset, clamp_nonnegative, make_windows,
                        parse_trace_csv, project_features, write_trace_csv)
from .training import (EvalReport, TrainConfig, aggregate, cumulative_mape,
                       evaluate, persistence_baseline, predict_trace, rmse, train)

__all__ = [
    "AdamState", "Graph", "Tensor", "adam_step", "gradient_check",
    "ModelKind", "ModelSpec", "TrainedModel", "build",
    "BandClass", "Duplex", "TddPattern", "UlLinkConfig", "arfcn_to_mhz",
    "classify_band", "max_ul_throughput", "tdd_ul_fraction",
    "load_checkpoint", "save_checkpoint",
    "Scenario", "preset", "synth_trace",
    "FeatureSet", "Normalizer", "TelemetrySample", "Trace", "WindowedDataset",
    "clamp_nonnegative", "make_windows", "parse_trace_csv", "project_features",
    "write_trace_csv",
    "EvalReport", "TrainConfig", "aggregate", "cumulative_mape", "evaluate",
    "persistence_baseline", "predict_trace", "rmse", "train",
]
