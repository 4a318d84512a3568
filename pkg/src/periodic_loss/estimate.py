"""Trouble-ticket and KPI ingestion, parameter estimation and drift diagnostics.

File formats
------------
tickets.csv
    ``anomaly_id,cell_id,start_ts,end_ts`` with integer UTC seconds;
    ``end_ts`` is empty for unresolved tickets.
kpi.csv
    ``cell_id,timestamp,traffic_gb`` with hourly ISO-8601 UTC timestamps.
"""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from . import DataError
from .theory import delta as delta_of
from .utility import PeriodicProfile

log = logging.getLogger(__name__)

TICKET_HEADER = ["anomaly_id", "cell_id", "start_ts", "end_ts"]
KPI_HEADER = ["cell_id", "timestamp", "traffic_gb"]
MAX_BAD_FRACTION = 0.10
MIN_GAPS = 30
KS_COEFF_05 = 1.358
HOUR = 3600


@dataclass(frozen=True)
class TicketRecord:
    anomaly_id: str
    cell_id: str
    start: int
    end: Optional[int] = None

    def __post_init__(self):
        if self.end is not None and self.end < self.start:
            raise ValueError(f"ticket {self.anomaly_id}: end before start")

    @property
    def resolved(self) -> bool:
        return self.end is not None

    @property
    def duration_hours(self) -> Optional[float]:
        return None if self.end is None else (self.end - self.start) / HOUR


@dataclass(frozen=True)
class KpiRecord:
    cell_id: str
    timestamp: datetime
    traffic: float

    def __post_init__(self):
        if self.traffic < 0 or not math.isfinite(self.traffic):
            raise ValueError("traffic must be finite and >= 0")

    @property
    def hour(self) -> int:
        """Whole hours since the epoch."""
        return int(self.timestamp.timestamp()) // HOUR


@dataclass
class Ingest:
    """Parsed rows plus what was rejected or rewritten on the way in."""

    records: list
    rejected: list = field(default_factory=list)  # (line number, reason)
    n_rows: int = 0
    n_merged: int = 0
    gaps: dict = field(default_factory=dict)


def _check_bad(path, n_rows: int, rejected: list):
    for line, reason in rejected:
        log.warning("%s:%d: %s", path, line, reason)
    if n_rows and len(rejected) > MAX_BAD_FRACTION * n_rows:
        head = "; ".join(f"line {ln}: {why}" for ln, why in rejected[:5])
        raise DataError(f"{path}: {len(rejected)} of {n_rows} rows malformed ({head})")


def _read_rows(path, header: list[str]):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in first] != header:
            raise DataError(f"{path}: expected header {','.join(header)}")
        for row in reader:
            if not row:
                continue
            yield reader.line_num, row


def merge_overlapping(records: Iterable[TicketRecord]) -> tuple[list[TicketRecord], int]:
    """Collapse resolved tickets whose intervals overlap on the same cell."""
    by_cell = defaultdict(list)
    out = []
    for r in records:
        (by_cell[r.cell_id] if r.resolved else out).append(r)
    merged = 0
    for cell in sorted(by_cell):
        group = sorted(by_cell[cell], key=lambda r: (r.start, r.end))
        cur = group[0]
        for r in group[1:]:
            if r.start <= cur.end:
                cur = TicketRecord(f"{cur.anomaly_id}+{r.anomaly_id}", cell, cur.start, max(cur.end, r.end))
                merged += 1
            else:
                out.append(cur)
                cur = r
        out.append(cur)
    out.sort(key=lambda r: (r.start, r.cell_id, r.anomaly_id))
    return out, merged


def ingest_tickets(path, merge_overlaps: bool = True) -> Ingest:
    """Read tickets.csv; bad rows are logged with line numbers and skipped."""
    records, rejected, n = [], [], 0
    for line, row in _read_rows(path, TICKET_HEADER):
        n += 1
        if len(row) != 4:
            rejected.append((line, f"expected 4 fields, got {len(row)}"))
            continue
        aid, cell, start, end = (v.strip() for v in row)
        if not aid or not cell:
            rejected.append((line, "missing anomaly_id or cell_id"))
            continue
        try:
            start_ts = int(start)
            end_ts = int(end) if end else None
        except ValueError:
            rejected.append((line, "timestamps must be integer UTC seconds"))
            continue
        if end_ts is not None and end_ts < start_ts:
            rejected.append((line, "end_ts before start_ts"))
            continue
        records.append(TicketRecord(aid, cell, start_ts, end_ts))
    _check_bad(path, n, rejected)
    merged = 0
    if merge_overlaps:
        records, merged = merge_overlapping(records)
    return Ingest(records, rejected, n, merged)


def write_tickets(path, records: Iterable[TicketRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TICKET_HEADER)
        for r in records:
            w.writerow([r.anomaly_id, r.cell_id, r.start, "" if r.end is None else r.end])


def _parse_time(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    if ts.minute or ts.second or ts.microsecond:
        raise ValueError("timestamp not on the hour")
    return ts


def ingest_kpi(path) -> Ingest:
    """Read kpi.csv; per-cell missing hours are reported in ``gaps``."""
    records, rejected, n = [], [], 0
    for line, row in _read_rows(path, KPI_HEADER):
        n += 1
        if len(row) != 3:
            rejected.append((line, f"expected 3 fields, got {len(row)}"))
            continue
        try:
            ts = _parse_time(row[1])
            rec = KpiRecord(row[0].strip(), ts, float(row[2]))
        except ValueError as exc:
            rejected.append((line, str(exc)))
            continue
        records.append(rec)
    _check_bad(path, n, rejected)
    hours = defaultdict(set)
    for r in records:
        hours[r.cell_id].add(r.hour)
    gaps = {c: (max(h) - min(h) + 1) - len(h) for c, h in sorted(hours.items())}
    return Ingest(records, rejected, n, 0, gaps)


def write_kpi(path, records: Iterable[KpiRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(KPI_HEADER)
        for r in records:
            w.writerow([r.cell_id, r.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"), repr(r.traffic)])


# ---------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class FitReport:
    lambda_hat: float
    n_samples: int
    ks_statistic: float
    ks_threshold_05: float
    per_cell_lambda: float
    n_cells: int

    @property
    def ks_pass(self) -> bool:
        return self.ks_statistic < self.ks_threshold_05


def _ks(gaps: np.ndarray, lam: float) -> float:
    return float(stats.kstest(gaps, "expon", args=(0.0, 1.0 / lam)).statistic)


def fit_interarrival(records: Sequence[TicketRecord], n_cells: int) -> FitReport:
    """Exponential fit to network-wide inter-arrival gaps, split evenly over cells."""
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    starts = np.sort(np.array([r.start for r in records], dtype=np.int64))
    gaps = np.diff(starts) / HOUR
    if len(gaps) < MIN_GAPS:
        raise DataError(f"need at least {MIN_GAPS} inter-arrival gaps, got {len(gaps)}")
    mean = float(gaps.mean())
    if not mean > 0:
        raise DataError("all arrivals share one timestamp")
    lam = 1.0 / mean
    return FitReport(lam, len(gaps), _ks(gaps, lam), KS_COEFF_05 / math.sqrt(len(gaps)),
                     lam / n_cells, n_cells)


def fit_interarrival_per_cell(records: Sequence[TicketRecord]) -> dict[str, float]:
    """Per-cell rate from each cell's own arrival gaps (heterogeneity check)."""
    by_cell = defaultdict(list)
    for r in records:
        by_cell[r.cell_id].append(r.start)
    out = {}
    for cell, starts in sorted(by_cell.items()):
        if len(starts) > 1:
            span = (max(starts) - min(starts)) / HOUR
            if span > 0:
                out[cell] = (len(starts) - 1) / span
    return out


@dataclass(frozen=True)
class MaintenanceStats:
    mean_y: float
    e_y2: float
    n: int
    n_unresolved: int
    edges: np.ndarray
    counts: np.ndarray


def maintenance_stats(records: Sequence[TicketRecord], bin_width: float = 0.25,
                      max_hours: float = 24.0) -> MaintenanceStats:
    """Repair-time moments and histogram; the last bin also counts overflow."""
    dur = np.array([r.duration_hours for r in records if r.resolved], dtype=float)
    n_open = sum(1 for r in records if not r.resolved)
    if dur.size == 0:
        raise DataError("no resolved tickets")
    edges = np.arange(0.0, max_hours + bin_width / 2, bin_width)
    counts, _ = np.histogram(np.minimum(dur, edges[-1] - 1e-12), bins=edges)
    return MaintenanceStats(float(dur.mean()), float(np.mean(dur**2)), int(dur.size), n_open,
                            edges, counts)


@dataclass(frozen=True)
class ProfileFit:
    profile: PeriodicProfile
    u_bar: float
    imputed: tuple
    n_hours: int


def _slot(rec: KpiRecord, period: int) -> int:
    if period == 168:
        return rec.timestamp.weekday() * 24 + rec.timestamp.hour
    return rec.timestamp.hour


def weekly_profile(kpi: Sequence[KpiRecord], fold: str = "weekly",
                   cell_id: Optional[str] = None) -> ProfileFit:
    """Hour-of-week (or hour-of-day) mean traffic and its period average.

    Weekly slots start Monday 00:00 UTC. Slots with no data are filled by
    circular linear interpolation between observed neighbours and listed in
    ``imputed``.
    """
    period = {"weekly": 168, "daily": 24}.get(fold)
    if period is None:
        raise ValueError("fold must be 'weekly' or 'daily'")
    recs = [r for r in kpi if cell_id is None or r.cell_id == cell_id]
    if not recs:
        raise DataError("no KPI records")
    hours = defaultdict(set)
    for r in recs:
        hours[r.cell_id].add(r.hour)
    short = [c for c, h in hours.items() if len(h) < 2 * period]
    if short:
        raise DataError(f"{len(short)} cell(s) have fewer than two periods of data, e.g. {sorted(short)[0]}")
    total = np.zeros(period)
    count = np.zeros(period)
    for r in recs:
        s = _slot(r, period)
        total[s] += r.traffic
        count[s] += 1
    seen = count > 0
    means = np.divide(total, count, out=np.zeros(period), where=seen)
    imputed = tuple(int(i) for i in np.nonzero(~seen)[0])
    if imputed:
        idx = np.nonzero(seen)[0]
        xp = np.concatenate((idx - period, idx, idx + period))
        means[~seen] = np.interp(np.nonzero(~seen)[0], xp, np.tile(means[idx], 3))
    profile = PeriodicProfile.sampled(means, 1.0)
    return ProfileFit(profile, float(means.mean()), imputed, len(recs))


@dataclass(frozen=True)
class DeltaPoint:
    start: float  # hours since the first ticket
    end: float
    delta: Optional[float]
    n_cycles: int
    flag: str = ""


def cycles_from_tickets(records: Sequence[TicketRecord]):
    """(start_hours, up_time, down_time) per cycle, chained within each cell.

    A cycle needs the previous repair end on the same cell; the first ticket
    of a cell and tickets following an unresolved one are skipped.
    """
    by_cell = defaultdict(list)
    for r in records:
        by_cell[r.cell_id].append(r)
    starts, xs, ys = [], [], []
    for cell in sorted(by_cell):
        prev_end = None
        for r in sorted(by_cell[cell], key=lambda r: r.start):
            if prev_end is not None and r.resolved and r.start >= prev_end:
                starts.append(r.start)
                xs.append((r.start - prev_end) / HOUR)
                ys.append((r.end - r.start) / HOUR)
            prev_end = r.end
    order = np.argsort(starts, kind="stable")
    return (np.asarray(starts, dtype=float)[order] / HOUR,
            np.asarray(xs)[order], np.asarray(ys)[order])


def rolling_delta(records: Sequence[TicketRecord], window: float, step: float,
                  origin: Optional[float] = None, end: Optional[float] = None,
                  min_cycles: int = 30) -> list[DeltaPoint]:
    """Downtime fraction from per-window sample means of up and repair times.

    Times are hours since the epoch; cycles are binned by their ticket start.
    Windows without cycles get ``delta=None`` and flag ``"empty"``; windows
    with fewer than ``min_cycles`` are flagged ``"sparse"``.
    """
    if not window > 0 or not step > 0:
        raise ValueError("window and step must be > 0")
    t, x, y = cycles_from_tickets(records)
    if t.size == 0:
        raise DataError("no complete anomaly-repair cycles")
    t0 = float(t[0]) if origin is None else origin
    t1 = float(t[-1]) + 1.0 / HOUR if end is None else end
    out = []
    k = 0
    while t0 + k * step + window <= t1 + 1e-9 or k == 0:
        a = t0 + k * step
        b = a + window
        sel = (t >= a) & (t < b)
        n = int(sel.sum())
        if n == 0:
            out.append(DeltaPoint(a, b, None, 0, "empty"))
        else:
            d = delta_of(float(x[sel].mean()), float(y[sel].mean()))
            out.append(DeltaPoint(a, b, d, n, "sparse" if n < min_cycles else ""))
        k += 1
    return out


# ---------------------------------------------------------------------------
# synthetic fixtures


def synthesize_tickets(rate: float, maintenance_sampler, n_cells: int, n_tickets: int,
                       rng: np.random.Generator, t0: int = 1_700_000_000) -> list[TicketRecord]:
    """Pooled Poisson(``rate``/h) anomalies split uniformly over cells.

    ``maintenance_sampler(rng, size)`` returns repair hours. Times are
    rounded to whole seconds.
    """
    gaps = rng.exponential(1.0 / rate, n_tickets)
    starts = t0 + np.rint(np.cumsum(gaps) * HOUR).astype(np.int64)
    dur = np.rint(np.asarray(maintenance_sampler(rng, n_tickets)) * HOUR).astype(np.int64)
    cells = rng.integers(0, n_cells, n_tickets)
    return [TicketRecord(f"A{i:07d}", f"C{c:04d}", int(s), int(s + d))
            for i, (s, d, c) in enumerate(zip(starts, dur, cells))]


def tickets_from_traces(traces, t0: int = 1_700_000_000) -> list[TicketRecord]:
    """One ticket per completed repair of each simulated cell."""
    out = []
    for c, tr in enumerate(traces):
        for j in range(len(tr)):
            if tr.truncated and j == len(tr) - 1:
                continue
            s = t0 + int(round((tr.d[j] - tr.y[j]) * HOUR))
            e = t0 + int(round(tr.d[j] * HOUR))
            out.append(TicketRecord(f"A{c:04d}-{j:05d}", f"C{c:04d}", s, e))
    out.sort(key=lambda r: (r.start, r.cell_id))
    return out


def mixture_repair_sampler(mean: float = 2.0 + 8.0 / 60.0, quick_fraction: float = 0.3,
                           quick_max: float = 1.0 / 60.0, sigma: float = 1.0):
    """Sampler for a near-instant/lognormal repair mixture with a given mean."""
    slow_mean = (mean - quick_fraction * quick_max / 2) / (1 - quick_fraction)
    mu = math.log(slow_mean) - sigma**2 / 2

    def draw(rng: np.random.Generator, size):
        quick = rng.random(size) < quick_fraction
        return np.where(quick, rng.uniform(0.0, quick_max, size), rng.lognormal(mu, sigma, size))

    return draw


def synthesize_kpi(profile: PeriodicProfile, n_cells: int, hours: int, rng: np.random.Generator,
                   start: datetime = datetime(2024, 1, 1, tzinfo=timezone.utc),
                   noise_sd: float = 0.0, cell_scale_sd: float = 0.0) -> list[KpiRecord]:
    """Hourly traffic ``scale_i * U(t) + noise`` (clipped at 0) for each cell.

    ``t`` is measured from ``start``; with a Monday-midnight start a 168 h
    profile lines up with weekly slots.
    """
    t = np.arange(hours, dtype=float)
    base = profile(t)
    out = []
    t_epoch = int(start.timestamp())
    for c in range(n_cells):
        scale = 1.0 + cell_scale_sd * rng.standard_normal() if cell_scale_sd else 1.0
        vals = np.clip(scale * base + noise_sd * rng.standard_normal(hours), 0.0, None)
        cid = f"C{c:04d}"
        out.extend(KpiRecord(cid, datetime.fromtimestamp(t_epoch + HOUR * h, tz=timezone.utc), float(v))
                   for h, v in enumerate(vals))
    return out


def operator_week(u_bar: float = 1.55) -> PeriodicProfile:
    """A weekly traffic shape (busy evenings, quieter weekends) with mean ``u_bar``."""
    h = np.arange(168, dtype=float)
    hod = h % 24
    day = h // 24
    daily = 1.0 + 0.6 * np.sin(2 * np.pi * (hod - 9.0) / 24.0) + 0.15 * np.sin(4 * np.pi * (hod - 3.0) / 24.0)
    weekly = np.where(day >= 5, 0.85, 1.0)
    shape = daily * weekly
    return PeriodicProfile.sampled(shape * (u_bar / shape.mean()))
