"""Training loops and the evaluation methodology.

Training runs shuffled mini-batches of MSE-on-normalized-targets through
Adam; per-kind default epoch counts follow the tuned values for each
architecture (ConvLSTM 10, LSTM 125, CNN-LSTM 100, Transformer 150) with a
batch size of 32. Evaluation is teacher-forced: every one-step prediction
is computed from the ground-truth history window, clamped non-negative.

Two metrics: instantaneous RMSE in Mbps, and MAPE applied to the total data
volume transferred rather than to per-second rates, because throughput
legitimately hits zero during handover (failed RACH) and per-point
percentage errors blow up there. Reported accuracy is exactly
100 - cumulative MAPE. Aggregation across traces weights by point count.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import AdamState, Graph, Tensor, adam_step
from .models import Model, ModelKind, TrainedModel
from .tracedata import (FeatureSet, Normalizer, Trace, WindowedDataset,
                        clamp_nonnegative, project_features)

__all__ = [
    "TrainConfig",
    "TraceReport",
    "EvalReport",
    "MetricError",
    "TrainingError",
    "DEFAULT_EPOCHS",
    "train",
    "predict_trace",
    "aligned_targets",
    "persistence_baseline",
    "rmse",
    "cumulative_mape",
    "aggregate",
    "evaluate",
]

DEFAULT_EPOCHS = {
    ModelKind.CONV_LSTM: 10,
    ModelKind.LSTM: 125,
    ModelKind.CNN_LSTM: 100,
    ModelKind.TRANSFORMER: 150,
}
DEFAULT_BATCH_SIZE = 32


class MetricError(ValueError):
    """Metric undefined for these inputs (e.g. zero total volume)."""


class TrainingError(RuntimeError):
    """Training aborted (empty data, NaN loss, shape trouble)."""


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; epochs=None selects the per-kind default."""

    epochs: int | None = None
    batch_size: int = DEFAULT_BATCH_SIZE
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    shuffle_seed: int = 0
    val_fraction: float = 0.1  # held out by whole trace, floor semantics

    def __post_init__(self):
        if self.epochs is not None and self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val fraction must lie in [0, 1), got {self.val_fraction}")

    def resolved_epochs(self, kind: ModelKind) -> int:
        return self.epochs if self.epochs is not None else DEFAULT_EPOCHS[kind]


def _split_by_trace(dataset: WindowedDataset, val_fraction: float,
                    seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Window indices for (train, val); whole traces go to one side only."""
    order = list(dict.fromkeys(dataset.trace_ids))  # insertion order, unique
    n_val = int(val_fraction * len(order))
    if n_val == 0:
        return np.arange(len(dataset)), np.array([], dtype=np.int64)
    rng = np.random.default_rng(seed)
    shuffled = list(order)
    rng.shuffle(shuffled)
    val_ids = set(shuffled[:n_val])
    ids = np.array(dataset.trace_ids)
    val_mask = np.isin(ids, sorted(val_ids))
    return np.where(~val_mask)[0], np.where(val_mask)[0]


def train(model: Model, dataset: WindowedDataset, cfg: TrainConfig,
          normalizer: Normalizer) -> TrainedModel:
    """Train in place and return the frozen TrainedModel.

    Deterministic given (model seed, shuffle seed, dataset). History records
    the per-epoch mean training loss; a non-finite loss aborts with
    diagnostics rather than continuing.
    """
    if len(dataset) == 0:
        raise TrainingError("empty dataset")
    if dataset.feature_set is not model.spec.feature_set:
        raise TrainingError(
            f"dataset features '{dataset.feature_set.value}' do not match "
            f"model spec '{model.spec.feature_set.value}'")

    train_idx, _val_idx = _split_by_trace(dataset, cfg.val_fraction, cfg.shuffle_seed)
    if train_idx.size == 0:
        raise TrainingError("validation split left no training windows")
    X, y = dataset.X, dataset.y
    params = model.parameters()
    state = AdamState.for_params(params, lr=cfg.lr, beta1=cfg.beta1,
                                 beta2=cfg.beta2, epsilon=cfg.epsilon)
    epochs = cfg.resolved_epochs(model.spec.kind)
    rng = np.random.default_rng(cfg.shuffle_seed)

    history: list[float] = []
    for epoch in range(epochs):
        perm = train_idx[rng.permutation(train_idx.size)]
        total, seen = 0.0, 0
        for lo in range(0, perm.size, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            g = Graph()
            pred = model.forward(g, Tensor(X[idx]))
            loss = g.mse_loss(pred, Tensor(y[idx]))
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch + 1}, step {lo // cfg.batch_size + 1}")
            model.zero_grads()
            g.backward(loss)
            adam_step(params, state)
            total += value * idx.size
            seen += idx.size
        history.append(total / seen)

    trained = TrainedModel(model=model, normalizer=normalizer, history=history,
                           train_config={**asdict(cfg), "epochs": epochs})
    trained.freeze()
    return trained


# -- teacher-forced trace prediction ------------------------------------------


def _trace_windows(trained: TrainedModel, trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """Normalized history windows and raw Mbps targets for one trace."""
    w = trained.spec.window
    matrix = trained.normalizer.normalize(project_features(trace, trained.spec.feature_set))
    thpt = trace.thpt_array()
    xs, ts = [], []
    for seg_start, seg_stop in trace.segments():
        for i in range(seg_stop - seg_start - w):
            lo = seg_start + i
            xs.append(matrix[lo:lo + w])
            ts.append(thpt[lo + w])
    if not xs:
        raise TrainingError(f"trace '{trace.trace_id}' too short for window {w}")
    return np.stack(xs), np.array(ts, dtype=np.float64)


def predict_trace(trained: TrainedModel, trace: Trace) -> np.ndarray:
    """One-step predictions from ground-truth windows; length T - window
    for a gapless trace, clamped non-negative."""
    windows, _ = _trace_windows(trained, trace)
    return trained.predict_batch(windows)


def aligned_targets(trace: Trace, window: int = 5) -> np.ndarray:
    """Ground-truth Mbps values aligned with predict_trace output."""
    thpt = trace.thpt_array()
    out = []
    for seg_start, seg_stop in trace.segments():
        for i in range(seg_stop - seg_start - window):
            out.append(thpt[seg_start + i + window])
    if not out:
        raise TrainingError(f"trace '{trace.trace_id}' too short for window {window}")
    return np.array(out, dtype=np.float64)


def persistence_baseline(trace: Trace, window: int = 5) -> np.ndarray:
    """Repeat the last observed throughput; aligned with predict_trace."""
    thpt = trace.thpt_array()
    out = []
    for seg_start, seg_stop in trace.segments():
        for i in range(seg_stop - seg_start - window):
            out.append(thpt[seg_start + i + window - 1])
    if not out:
        raise TrainingError(f"trace '{trace.trace_id}' too short for window {window}")
    return np.array(out, dtype=np.float64)


# -- metrics ----------------------------------------------------------------------


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1 or pred.size == 0:
        raise MetricError(f"rmse needs equal non-empty vectors, got {pred.shape}, {truth.shape}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def cumulative_mape(pred, truth, interval_s: float = 1.0) -> float:
    """MAPE of total transferred volume, percent.

    Volumes are rate * interval summed over the trace; zero-throughput
    seconds simply contribute nothing. Undefined when the true total is 0.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1 or pred.size == 0:
        raise MetricError(f"mape needs equal non-empty vectors, got {pred.shape}, {truth.shape}")
    true_volume = float(truth.sum() * interval_s)
    if true_volume <= 0.0:
        raise MetricError("cumulative MAPE undefined: no data was transferred")
    pred_volume = float(pred.sum() * interval_s)
    return 100.0 * abs(pred_volume - true_volume) / true_volume


@dataclass(frozen=True)
class TraceReport:
    trace_id: str
    n_points: int
    rmse_mbps: float
    cum_mape_pct: float

    @property
    def accuracy_pct(self) -> float:
        return 100.0 - self.cum_mape_pct

    def to_dict(self) -> dict:
        return {"trace_id": self.trace_id, "n_points": self.n_points,
                "rmse_mbps": self.rmse_mbps, "cum_mape_pct": self.cum_mape_pct,
                "accuracy_pct": self.accuracy_pct}


def aggregate(reports: list[TraceReport], weights: list[float] | None = None,
              label: str = "overall") -> TraceReport:
    """Weighted-mean metrics across reports; default weights are n_points."""
    if not reports:
        raise MetricError("aggregate needs at least one report")
    if weights is None:
        weights = [float(r.n_points) for r in reports]
    if len(weights) != len(reports) or sum(weights) <= 0:
        raise MetricError("weights must match reports and sum to > 0")
    total = float(sum(weights))
    return TraceReport(
        trace_id=label,
        n_points=int(sum(r.n_points for r in reports)),
        rmse_mbps=sum(r.rmse_mbps * w for r, w in zip(reports, weights)) / total,
        cum_mape_pct=sum(r.cum_mape_pct * w for r, w in zip(reports, weights)) / total,
    )


@dataclass
class EvalReport:
    """Per-trace and aggregated results for one model on one trace set."""

    model_kind: str
    feature_set: str
    tag: str
    traces: list[TraceReport] = field(default_factory=list)
    groups: dict[str, TraceReport] = field(default_factory=dict)
    overall: TraceReport | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "feature_set": self.feature_set,
            "tag": self.tag,
            "config": self.config,
            "traces": [r.to_dict() for r in self.traces],
            "groups": {name: r.to_dict() for name, r in sorted(self.groups.items())},
            "overall": self.overall.to_dict() if self.overall else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def evaluate(trained: TrainedModel, traces: list[Trace], tag: str = "",
             groups: dict[str, list[str]] | None = None,
             config: dict | None = None) -> EvalReport:
    """Teacher-forced evaluation of every trace plus weighted aggregates.

    ``groups`` maps a label to trace ids whose metrics are combined into one
    weighted row (traces with similar characteristics).
    """
    report = EvalReport(model_kind=trained.spec.kind.value,
                        feature_set=trained.spec.feature_set.value,
                        tag=tag, config=config or {})
    by_id: dict[str, TraceReport] = {}
    for trace in traces:
        pred = predict_trace(trained, trace)
        truth = aligned_targets(trace, trained.spec.window)
        row = TraceReport(trace_id=trace.trace_id, n_points=int(truth.size),
                          rmse_mbps=rmse(pred, truth),
                          cum_mape_pct=cumulative_mape(pred, truth))
        report.traces.append(row)
        by_id[trace.trace_id] = row
    for name, ids in (groups or {}).items():
        members = [by_id[i] for i in ids if i in by_id]
        if members:
            report.groups[name] = aggregate(members, label=name)
    report.overall = aggregate(report.traces)
    return report
