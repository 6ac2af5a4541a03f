"""Weather/power time series: CSV I/O, cleaning, lag features, scaling, splitting.

Frames are immutable in practice: every operation returns a new frame.
Timestamps are integer seconds since the Unix epoch (UTC).  Rows sit on a
fixed step grid but gaps (dropped rows) are allowed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import AlignmentError, OrderingError, SchemaError, SplitError

TIMESTAMP = "timestamp"
COLUMNS = ("irradiance", "temperature", "humidity", "wind_speed", "wind_direction", "pv_power")
LAG_COLUMN = "prev_pv_power"
DEFAULT_STEP = 300
YEAR_SECONDS = 365 * 86400
MAX_IRRADIANCE = 1600.0


def parse_timestamp(text: str) -> int:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(t: int) -> str:
    return datetime.fromtimestamp(int(t), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class TimeSeriesFrame:
    timestamps: np.ndarray
    columns: dict
    step: int = DEFAULT_STEP

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        object.__setattr__(self, "timestamps", ts)
        cols = {k: np.asarray(v, dtype=np.float64) for k, v in self.columns.items()}
        object.__setattr__(self, "columns", cols)
        for name, v in cols.items():
            if v.shape != ts.shape:
                raise SchemaError(f"column {name!r} has {v.size} rows, timestamps have {ts.size}")
        if ts.size > 1:
            bad = np.flatnonzero(np.diff(ts) <= 0)
            if bad.size:
                raise OrderingError(
                    f"timestamps not strictly increasing at row {bad[0] + 1}", int(bad[0] + 1)
                )
        if self.step <= 0:
            raise ValueError("step must be positive")

    def __len__(self):
        return int(self.timestamps.size)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def names(self) -> list:
        return list(self.columns)

    def take(self, idx) -> "TimeSeriesFrame":
        return TimeSeriesFrame(
            self.timestamps[idx], {k: v[idx] for k, v in self.columns.items()}, self.step
        )

    def with_column(self, name: str, values) -> "TimeSeriesFrame":
        cols = dict(self.columns)
        cols[name] = values
        return TimeSeriesFrame(self.timestamps, cols, self.step)

    def matrix(self, names) -> np.ndarray:
        return np.column_stack([self.columns[n] for n in names]) if len(names) else np.empty((len(self), 0))

    def equals(self, other: "TimeSeriesFrame") -> bool:
        return (
            self.step == other.step
            and list(self.columns) == list(other.columns)
            and np.array_equal(self.timestamps, other.timestamps)
            and all(np.array_equal(self[k], other[k], equal_nan=True) for k in self.columns)
        )


# ---------------------------------------------------------------------------
# CSV


@dataclass(frozen=True)
class Reject:
    line: int  # 1-based line number in the file, header is line 1
    field: str
    value: str
    reason: str


@dataclass(frozen=True)
class IngestResult:
    frame: TimeSeriesFrame
    rejects: tuple

    def rejects_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["line", "field", "value", "reason"])
        for r in self.rejects:
            w.writerow([r.line, r.field, r.value, r.reason])
        return buf.getvalue()


def _infer_step(ts: np.ndarray) -> int:
    if ts.size < 2:
        return DEFAULT_STEP
    return int(np.diff(ts).min())


def read_csv_text(
    text: str,
    schema: Mapping[str, str] | None = None,
    required: tuple = (TIMESTAMP,) + COLUMNS,
    step: int | None = None,
) -> IngestResult:
    """Parse CSV text into a frame.

    ``schema`` maps canonical names to the file's header names (identity by
    default).  Non-empty fields that do not parse as finite numbers send the
    row to the rejects list; empty fields are kept as NaN for :func:`clean`.
    """
    schema = dict(schema or {})
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("file is empty (no header row)") from None
    source = {name: schema.get(name, name) for name in required}
    extras = [h for h in header if h not in source.values() and h not in required]
    missing = [f"{canon} (as {src!r})" for canon, src in source.items() if src not in header]
    if missing:
        raise SchemaError("missing column(s): " + ", ".join(missing))
    pos = {canon: header.index(src) for canon, src in source.items()}
    for h in extras:
        if h and h != TIMESTAMP:
            pos[h] = header.index(h)
    value_names = [c for c in pos if c != TIMESTAMP]

    ts, values, rejects = [], {c: [] for c in value_names}, []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        parsed = {}
        problem = None
        raw_ts = row[pos[TIMESTAMP]] if pos[TIMESTAMP] < len(row) else ""
        try:
            t = parse_timestamp(raw_ts)
        except ValueError:
            problem = Reject(lineno, TIMESTAMP, raw_ts, "unparseable timestamp")
        if problem is None:
            for c in value_names:
                raw = row[pos[c]].strip() if pos[c] < len(row) else ""
                if raw == "":
                    parsed[c] = math.nan
                    continue
                try:
                    v = float(raw)
                except ValueError:
                    problem = Reject(lineno, c, raw, "not a number")
                    break
                if not math.isfinite(v):
                    problem = Reject(lineno, c, raw, "non-finite value")
                    break
                parsed[c] = v
        if problem is not None:
            rejects.append(problem)
            continue
        if ts and t <= ts[-1]:
            raise OrderingError(
                f"timestamp {raw_ts.strip()!r} at line {lineno} does not increase", lineno
            )
        ts.append(t)
        for c in value_names:
            values[c].append(parsed[c])
    arr = np.array(ts, dtype=np.int64)
    frame = TimeSeriesFrame(arr, {c: values[c] for c in value_names}, step or _infer_step(arr))
    return IngestResult(frame, tuple(rejects))


def ingest_csv(path, schema: Mapping[str, str] | None = None, **kw) -> IngestResult:
    text = Path(path).read_text(encoding="utf-8")
    return read_csv_text(text, schema, **kw)


def to_csv_text(frame: TimeSeriesFrame) -> str:
    buf = io.StringIO()
    names = frame.names
    buf.write(",".join([TIMESTAMP] + names) + "\n")
    cols = [frame[n] for n in names]
    for i, t in enumerate(frame.timestamps):
        fields = [format_timestamp(t)]
        for c in cols:
            v = c[i]
            fields.append("" if math.isnan(v) else repr(float(v)))
        buf.write(",".join(fields) + "\n")
    return buf.getvalue()


def write_csv(frame: TimeSeriesFrame, path) -> None:
    Path(path).write_text(to_csv_text(frame), encoding="utf-8")


# ---------------------------------------------------------------------------
# cleaning


@dataclass(frozen=True)
class CleaningLog:
    dropped: tuple = ()  # (timestamp, missing column names)
    clamped: tuple = ()  # (timestamp, original power)
    anomalies: tuple = ()  # (timestamp, reason)

    def __len__(self):
        return len(self.dropped) + len(self.clamped) + len(self.anomalies)

    def summary(self) -> str:
        return (
            f"dropped={len(self.dropped)} clamped={len(self.clamped)} "
            f"anomalous={len(self.anomalies)}"
        )


def clean(
    frame: TimeSeriesFrame,
    required: tuple = COLUMNS,
    plant_rating_kw: float | None = None,
) -> tuple[TimeSeriesFrame, CleaningLog]:
    """Drop rows missing a required field, clamp negative power, flag anomalies."""
    required = tuple(c for c in required if c in frame.columns)
    missing = np.zeros(len(frame), dtype=bool)
    for c in required:
        missing |= np.isnan(frame[c])
    dropped = tuple(
        (int(frame.timestamps[i]), tuple(c for c in required if np.isnan(frame[c][i])))
        for i in np.flatnonzero(missing)
    )
    kept = frame.take(np.flatnonzero(~missing))
    clamped = ()
    anomalies = []
    if "pv_power" in kept.columns:
        p = kept["pv_power"]
        neg = p < 0
        clamped = tuple((int(kept.timestamps[i]), float(p[i])) for i in np.flatnonzero(neg))
        if neg.any():
            kept = kept.with_column("pv_power", np.where(neg, 0.0, p))
        if plant_rating_kw is not None:
            for i in np.flatnonzero(kept["pv_power"] > plant_rating_kw):
                anomalies.append((int(kept.timestamps[i]), "power above plant rating"))
    if "irradiance" in kept.columns:
        for i in np.flatnonzero(kept["irradiance"] > MAX_IRRADIANCE):
            anomalies.append((int(kept.timestamps[i]), f"irradiance above {MAX_IRRADIANCE:g} W/m2"))
    anomalies.sort()
    return kept, CleaningLog(dropped, clamped, tuple(anomalies))


# ---------------------------------------------------------------------------
# lag feature


@dataclass(frozen=True)
class LagLog:
    leading: int  # rows inside the first lag window
    gaps: int  # later rows whose lagged timestamp is absent


def make_lag_feature(
    frame: TimeSeriesFrame, lag: int, source: str = "pv_power", name: str = LAG_COLUMN
) -> tuple[TimeSeriesFrame, LagLog]:
    """Append ``name[t] = source[t - lag]``, matching by timestamp (``lag`` in seconds).

    Rows without a match are dropped.
    """
    if lag <= 0 or lag % frame.step:
        raise AlignmentError(f"lag {lag}s is not a positive multiple of the {frame.step}s step")
    ts = frame.timestamps
    if len(frame) == 0 or ts[-1] - ts[0] < lag:
        raise AlignmentError(f"frame spans less than the {lag}s lag")
    want = ts - lag
    pos = np.searchsorted(ts, want)
    pos_c = np.minimum(pos, len(ts) - 1)
    hit = ts[pos_c] == want
    leading = int(np.count_nonzero(want < ts[0]))
    gaps = int(np.count_nonzero(~hit)) - leading
    idx = np.flatnonzero(hit)
    out = frame.take(idx).with_column(name, frame[source][pos_c[idx]])
    return out, LagLog(leading, gaps)


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class ScalingParams:
    mins: dict
    maxs: dict

    def _check(self, name):
        if name not in self.mins:
            raise SchemaError(f"no scaling parameters for column {name!r}")

    def scale(self, name: str, v) -> np.ndarray:
        self._check(name)
        lo, hi = self.mins[name], self.maxs[name]
        v = np.asarray(v, dtype=np.float64)
        if hi == lo:
            return np.zeros_like(v)
        return (v - lo) / (hi - lo)

    def unscale(self, name: str, v) -> np.ndarray:
        self._check(name)
        lo, hi = self.mins[name], self.maxs[name]
        v = np.asarray(v, dtype=np.float64)
        if hi == lo:
            return np.full_like(v, lo)
        return v * (hi - lo) + lo

    def to_csv(self) -> str:
        lines = ["column,min,max"]
        lines += [f"{k},{self.mins[k]!r},{self.maxs[k]!r}" for k in self.mins]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ScalingParams":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        return cls({r[0]: float(r[1]) for r in rows if r}, {r[0]: float(r[2]) for r in rows if r})


def fit_scale(frame: TimeSeriesFrame, names=None) -> ScalingParams:
    names = frame.names if names is None else list(names)
    return ScalingParams(
        {n: float(np.min(frame[n])) for n in names}, {n: float(np.max(frame[n])) for n in names}
    )


def apply_scale(frame: TimeSeriesFrame, params: ScalingParams) -> TimeSeriesFrame:
    cols = {
        n: (params.scale(n, v) if n in params.mins else v) for n, v in frame.columns.items()
    }
    return TimeSeriesFrame(frame.timestamps, cols, frame.step)


def inverse_scale(frame: TimeSeriesFrame, params: ScalingParams) -> TimeSeriesFrame:
    cols = {
        n: (params.unscale(n, v) if n in params.mins else v) for n, v in frame.columns.items()
    }
    return TimeSeriesFrame(frame.timestamps, cols, frame.step)


# ---------------------------------------------------------------------------
# splitting


def split_point(n: int, ratio: float) -> int:
    # round first so 0.7 * 10 counts as 7, not 7.000000000000001
    return math.ceil(round(ratio * n, 9))


def split_train_test(frame: TimeSeriesFrame, ratio: float = 0.8) -> tuple[TimeSeriesFrame, TimeSeriesFrame]:
    """Chronological split: the first ceil(ratio * n) rows train."""
    if not 0 < ratio < 1:
        raise SplitError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(frame)
    k = split_point(n, ratio)
    if k <= 0 or k >= n:
        raise SplitError(f"ratio {ratio} on {n} rows leaves an empty side ({k} train, {n - k} test)")
    return frame.take(slice(0, k)), frame.take(slice(k, n))


def select_range(frame: TimeSeriesFrame, start: str | None = None, end: str | None = None) -> TimeSeriesFrame:
    """Rows with ``start <= timestamp < end`` (ISO-8601 bounds, either optional)."""
    mask = np.ones(len(frame), dtype=bool)
    if start:
        mask &= frame.timestamps >= parse_timestamp(start)
    if end:
        mask &= frame.timestamps < parse_timestamp(end)
    return frame.take(np.flatnonzero(mask))
