"""Telemetry data model: 1 Hz drive-trace records, CSV I/O, features, windows.

Trace CSV schema (header mandatory, UTF-8, one row per second):

    t,rsrp_dbm,rsrq_db,sinr_db,ssb_arfcn,thpt_mbps
      [,rb_alloc,sched_count,pucch_tx_dbm,bw_mhz,lat,lon,speed_kmh]

A missing second must be marked explicitly with a gap row ``t,GAP``; windows
never span gaps. Zero-throughput seconds (handover dropouts) are real data,
not gaps. Timestamps must increase by exactly 1 across samples and gap rows.
"""

import csv
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .nrphy import arfcn_to_mhz

__all__ = [
    "TelemetrySample",
    "Trace",
    "FeatureSet",
    "Normalizer",
    "WindowedDataset",
    "SchemaError",
    "TraceDataError",
    "EmptyDatasetError",
    "parse_trace_csv",
    "write_trace_csv",
    "project_features",
    "make_windows",
    "clamp_nonnegative",
    "REQUIRED_COLUMNS",
    "OPTIONAL_COLUMNS",
]

RSRP_RANGE_DBM = (-156.0, -31.0)  # CSI-RSRP reporting range, TS 38.133

REQUIRED_COLUMNS = ("t", "rsrp_dbm", "rsrq_db", "sinr_db", "ssb_arfcn", "thpt_mbps")
OPTIONAL_COLUMNS = ("rb_alloc", "sched_count", "pucch_tx_dbm", "bw_mhz", "lat", "lon", "speed_kmh")
_INT_COLUMNS = {"t", "ssb_arfcn", "rb_alloc", "sched_count"}
GAP_MARKER = "GAP"


class SchemaError(ValueError):
    """A column or field required by the requested feature set is missing."""


class TraceDataError(ValueError):
    """A row violates trace invariants (timestamps, value ranges, types)."""


class EmptyDatasetError(ValueError):
    """No trace is long enough to yield a single training window."""


@dataclass(frozen=True)
class TelemetrySample:
    """One 1 Hz radio measurement record with achieved uplink throughput."""

    t: int
    rsrp_dbm: float
    rsrq_db: float
    sinr_db: float
    ssb_arfcn: int
    thpt_mbps: float
    rb_alloc: int | None = None
    sched_count: int | None = None
    pucch_tx_dbm: float | None = None
    bw_mhz: float | None = None
    lat: float | None = None
    lon: float | None = None
    speed_kmh: float | None = None

    def __post_init__(self):
        if self.thpt_mbps < 0:
            raise TraceDataError(f"t={self.t}: throughput must be >= 0, got {self.thpt_mbps}")
        lo, hi = RSRP_RANGE_DBM
        if not lo <= self.rsrp_dbm <= hi:
            raise TraceDataError(
                f"t={self.t}: RSRP {self.rsrp_dbm} dBm outside [{lo}, {hi}]")
        if self.rb_alloc is not None and self.rb_alloc < 0:
            raise TraceDataError(f"t={self.t}: rb_alloc must be >= 0")
        if self.sched_count is not None and self.sched_count < 0:
            raise TraceDataError(f"t={self.t}: sched_count must be >= 0")
        if self.bw_mhz is not None and self.bw_mhz <= 0:
            raise TraceDataError(f"t={self.t}: bw_mhz must be > 0")


@dataclass(frozen=True)
class Trace:
    """Ordered 1 Hz samples plus explicit gap timestamps and metadata."""

    trace_id: str
    samples: tuple[TelemetrySample, ...]
    gaps: frozenset[int] = frozenset()
    scenario: str = ""

    def __post_init__(self):
        ts = sorted([s.t for s in self.samples] + list(self.gaps))
        if len(set(ts)) != len(ts):
            raise TraceDataError(f"{self.trace_id}: duplicate timestamps")
        for a, b in zip(ts, ts[1:]):
            if b != a + 1:
                raise TraceDataError(
                    f"{self.trace_id}: timestamps must step by 1 "
                    f"(t={a} followed by t={b}); mark missing seconds as gaps")
        expected = ts
        got = [s.t for s in self.samples]
        if got != sorted(got):
            raise TraceDataError(f"{self.trace_id}: samples out of order")

    def __len__(self) -> int:
        return len(self.samples)

    def thpt_array(self) -> np.ndarray:
        return np.array([s.thpt_mbps for s in self.samples], dtype=np.float64)

    def segments(self) -> list[tuple[int, int]]:
        """Contiguous sample-index runs [start, stop) not interrupted by gaps."""
        if not self.samples:
            return []
        runs = []
        start = 0
        for i in range(1, len(self.samples)):
            if self.samples[i].t != self.samples[i - 1].t + 1:
                runs.append((start, i))
                start = i
        runs.append((start, len(self.samples)))
        return runs


class FeatureSet(Enum):
    """Named projections of sample fields into model input columns.

    ANDROID_API holds the five radio parameters exposed to apps; FULL adds
    the four modem-level counters; SURE is the reduced four-parameter set
    (RSRP, RB allocation, PUCCH power, past throughput). The ARFCN column is
    fed to models as MHz carrier frequency, not the raw channel number.
    """

    ANDROID_API = "android-api"
    FULL = "full"
    SURE = "sure"

    @property
    def columns(self) -> tuple[str, ...]:
        return _FEATURE_COLUMNS[self]

    @property
    def width(self) -> int:
        return len(_FEATURE_COLUMNS[self])

    @property
    def required_optional_fields(self) -> tuple[str, ...]:
        return tuple(c for c in _FEATURE_COLUMNS[self]
                     if c in OPTIONAL_COLUMNS)


_FEATURE_COLUMNS: dict[FeatureSet, tuple[str, ...]] = {
    FeatureSet.ANDROID_API: ("rsrp_dbm", "rsrq_db", "sinr_db", "freq_mhz", "thpt_mbps"),
    FeatureSet.FULL: ("rsrp_dbm", "rsrq_db", "sinr_db", "freq_mhz", "thpt_mbps",
                      "rb_alloc", "sched_count", "pucch_tx_dbm", "bw_mhz"),
    FeatureSet.SURE: ("rsrp_dbm", "rb_alloc", "pucch_tx_dbm", "thpt_mbps"),
}


def _sample_value(sample: TelemetrySample, column: str) -> float:
    if column == "freq_mhz":
        return arfcn_to_mhz(sample.ssb_arfcn)
    value = getattr(sample, column)
    if value is None:
        raise SchemaError(
            f"t={sample.t}: field '{column}' absent but required by the feature set")
    return float(value)


def project_features(trace: Trace, feature_set: FeatureSet) -> np.ndarray:
    """Project a trace onto the feature set's columns; shape [T, F]."""
    cols = feature_set.columns
    out = np.empty((len(trace.samples), len(cols)), dtype=np.float64)
    for i, sample in enumerate(trace.samples):
        for j, col in enumerate(cols):
            out[i, j] = _sample_value(sample, col)
    return out


def clamp_nonnegative(values) -> np.ndarray:
    """Zero out negative predictions; negative throughput is impossible."""
    return np.maximum(np.asarray(values, dtype=np.float64), 0.0)


# -- CSV I/O -------------------------------------------------------------------


def _parse_cell(column: str, cell: str, line_no: int):
    cell = cell.strip()
    if cell == "":
        if column in REQUIRED_COLUMNS:
            raise TraceDataError(f"line {line_no}: required column '{column}' is empty")
        return None
    try:
        return int(cell) if column in _INT_COLUMNS else float(cell)
    except ValueError:
        raise TraceDataError(
            f"line {line_no}: cannot parse {cell!r} as {column}") from None


def parse_trace_csv(path, schema: FeatureSet | None = None, trace_id: str | None = None) -> Trace:
    """Parse and validate one trace CSV.

    ``schema``, when given, makes the columns that feature set needs
    mandatory and raises SchemaError naming the first missing one. Row-level
    violations raise TraceDataError carrying the 1-based line number.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TraceDataError(f"{path}: empty file, header row required")

    header = [c.strip() for c in rows[0]]
    known = set(REQUIRED_COLUMNS) | set(OPTIONAL_COLUMNS)
    for col in header:
        if col not in known:
            raise SchemaError(f"{path}: unknown column '{col}'")
    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column in header")
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing required column '{missing[0]}'")
    if schema is not None:
        for col in schema.required_optional_fields:
            if col not in header:
                raise SchemaError(
                    f"{path}: feature set '{schema.value}' needs column '{col}'")

    samples: list[TelemetrySample] = []
    gaps: set[int] = set()
    prev_t: int | None = None
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        is_gap = len(row) >= 2 and row[1].strip() == GAP_MARKER
        t_cell = row[0].strip()
        try:
            t = int(t_cell)
        except ValueError:
            raise TraceDataError(f"line {line_no}: bad timestamp {t_cell!r}") from None
        if prev_t is not None:
            if t == prev_t:
                raise TraceDataError(f"line {line_no}: duplicate timestamp t={t}")
            if t != prev_t + 1:
                raise TraceDataError(
                    f"line {line_no}: timestamp t={t} after t={prev_t}; "
                    f"timestamps must step by 1 (mark missing seconds as gaps)")
        prev_t = t

        if is_gap:
            gaps.add(t)
            continue
        if len(row) != len(header):
            raise TraceDataError(
                f"line {line_no}: {len(row)} cells, header has {len(header)}")
        record = {col: _parse_cell(col, cell, line_no) for col, cell in zip(header, row)}
        if schema is not None:
            for col in schema.required_optional_fields:
                if record.get(col) is None:
                    raise TraceDataError(
                        f"line {line_no}: column '{col}' is empty but required "
                        f"by feature set '{schema.value}'")
        try:
            samples.append(TelemetrySample(**record))
        except TraceDataError as exc:
            raise TraceDataError(f"line {line_no}: {exc}") from None

    return Trace(trace_id=trace_id or path.stem, samples=tuple(samples),
                 gaps=frozenset(gaps))


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_trace_csv(trace: Trace, path) -> None:
    """Write a trace back to the CSV schema; round-trips field-identically."""
    present = [c for c in OPTIONAL_COLUMNS
               if any(getattr(s, c) is not None for s in trace.samples)]
    header = list(REQUIRED_COLUMNS) + present
    by_t: dict[int, TelemetrySample] = {s.t: s for s in trace.samples}
    all_t = sorted(list(by_t) + list(trace.gaps))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in all_t:
            if t in trace.gaps:
                writer.writerow([t, GAP_MARKER])
            else:
                s = by_t[t]
                writer.writerow([_format_cell(getattr(s, c)) if c != "t" else str(t)
                                 for c in header])


# -- normalization ---------------------------------------------------------------


@dataclass(frozen=True)
class Normalizer:
    """Per-feature z-score statistics plus target (throughput) statistics.

    Standard deviations are population (ddof=0) and must be positive;
    constant features are rejected at fit time. ``denormalize`` composed
    with ``normalize`` is the identity to within 1e-12.
    """

    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float
    target_std: float
    feature_names: tuple[str, ...] = ()

    @classmethod
    def fit(cls, matrices: Sequence[np.ndarray], targets: Sequence[np.ndarray] | np.ndarray,
            feature_names: tuple[str, ...] = ()) -> "Normalizer":
        stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in matrices], axis=0)
        if stacked.shape[0] < 2:
            raise ValueError("normalizer fit needs at least 2 rows")
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0)
        for j, s in enumerate(std):
            if s <= 0.0:
                name = feature_names[j] if j < len(feature_names) else f"column {j}"
                raise ValueError(f"constant feature '{name}' cannot be normalized")
        if isinstance(targets, np.ndarray):
            tvals = targets.astype(np.float64)
        else:
            tvals = np.concatenate([np.asarray(t, dtype=np.float64) for t in targets])
        tmean = float(tvals.mean())
        tstd = float(tvals.std())
        if tstd <= 0.0:
            raise ValueError("constant target cannot be normalized")
        return cls(feature_mean=mean, feature_std=std, target_mean=tmean,
                   target_std=tstd, feature_names=tuple(feature_names))

    @classmethod
    def fit_traces(cls, traces: Sequence[Trace], feature_set: FeatureSet) -> "Normalizer":
        mats = [project_features(tr, feature_set) for tr in traces]
        thpt = [tr.thpt_array() for tr in traces]
        return cls.fit(mats, thpt, feature_names=feature_set.columns)

    def normalize(self, matrix: np.ndarray) -> np.ndarray:
        return (np.asarray(matrix, dtype=np.float64) - self.feature_mean) / self.feature_std

    def denormalize(self, matrix: np.ndarray) -> np.ndarray:
        return np.asarray(matrix, dtype=np.float64) * self.feature_std + self.feature_mean

    def normalize_target(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.target_mean) / self.target_std

    def denormalize_target(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.target_std + self.target_mean


# -- windowing ---------------------------------------------------------------------


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding windows X [N, W, F] and next-second targets y [N].

    Windows never span a trace boundary or an explicit gap. ``trace_ids``
    and ``starts`` identify each window's origin (start timestamp of the
    window). X and y are normalized when a normalizer was supplied.
    """

    X: np.ndarray
    y: np.ndarray
    trace_ids: tuple[str, ...]
    starts: np.ndarray
    window: int
    horizon: int
    feature_set: FeatureSet
    normalized: bool

    def __len__(self) -> int:
        return self.X.shape[0]


def make_windows(traces: Iterable[Trace], feature_set: FeatureSet, window: int = 5,
                 horizon: int = 1, normalizer: Normalizer | None = None) -> WindowedDataset:
    """Build the sliding-window dataset over all traces.

    Window i covers samples [i, i+window) of a contiguous segment and its
    target is the throughput ``horizon`` seconds after the window ends.
    Raises EmptyDatasetError when no trace yields a window.
    """
    if window < 1 or horizon < 1:
        raise ValueError(f"window and horizon must be >= 1, got {window}, {horizon}")
    xs, ys, ids, starts = [], [], [], []
    for trace in traces:
        matrix = project_features(trace, feature_set)
        if normalizer is not None:
            matrix = normalizer.normalize(matrix)
        thpt = trace.thpt_array()
        if normalizer is not None:
            thpt = normalizer.normalize_target(thpt)
        for seg_start, seg_stop in trace.segments():
            seg_len = seg_stop - seg_start
            for i in range(seg_len - window - horizon + 1):
                lo = seg_start + i
                xs.append(matrix[lo:lo + window])
                ys.append(thpt[lo + window + horizon - 1])
                ids.append(trace.trace_id)
                starts.append(trace.samples[lo].t)
    if not xs:
        raise EmptyDatasetError(
            f"no trace long enough for window={window}, horizon={horizon}")
    return WindowedDataset(
        X=np.stack(xs), y=np.array(ys, dtype=np.float64), trace_ids=tuple(ids),
        starts=np.array(starts, dtype=np.int64), window=window, horizon=horizon,
        feature_set=feature_set, normalized=normalizer is not None)
