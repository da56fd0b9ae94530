"""Time-tag ingestion, arrival-time histograms and windowed counts.

Each detection event carries the label of the experimental configuration it
was recorded in: ``sc`` (signal and control), ``s`` (signal only, control
blocked) or ``c`` (control only, signal blocked).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from ..errors import DomainError, ParseError

__all__ = [
    "CHANNELS",
    "TimeTagRecord",
    "Histogram",
    "CountSet",
    "ingest_timetags",
    "read_timetags",
    "write_timetags",
    "histogram",
    "integrate_windows",
]

CHANNELS = ("sc", "s", "c")
HEADER = ("trigger_id", "channel", "time_ps")
DEFAULT_BIN_PS = 81


class TimeTagRecord(NamedTuple):
    trigger_id: int
    channel: str
    time_ps: int


def _parse_int(text, what, line):
    text = text.strip()
    try:
        value = int(text)
    except ValueError:
        raise ParseError(f"{what} is not an integer: {text!r}", line) from None
    return value


def ingest_timetags(stream: Iterable[str]) -> list[TimeTagRecord]:
    """Parse a time-tag CSV (header ``trigger_id,channel,time_ps``).

    Blank lines are skipped. Any malformed line raises :class:`ParseError`
    naming the (1-based) line number.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input: missing header", 1) from None
    if tuple(h.strip() for h in header) != HEADER:
        raise ParseError(f"expected header {','.join(HEADER)}, got {','.join(header)}", 1)
    records = []
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line)
        trigger = _parse_int(row[0], "trigger_id", line)
        channel = row[1].strip()
        if channel not in CHANNELS:
            raise ParseError(f"unknown channel {channel!r}", line)
        time_ps = _parse_int(row[2], "time_ps", line)
        if time_ps < 0:
            raise ParseError(f"negative time {time_ps}", line)
        if trigger < 0:
            raise ParseError(f"negative trigger_id {trigger}", line)
        records.append(TimeTagRecord(trigger, channel, time_ps))
    return records


def read_timetags(path) -> list[TimeTagRecord]:
    with open(path, newline="") as fh:
        return ingest_timetags(fh)


def write_timetags(records, stream=None):
    own = stream is None
    stream = io.StringIO() if own else stream
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HEADER)
    for rec in records:
        writer.writerow((rec.trigger_id, rec.channel, rec.time_ps))
    return stream.getvalue() if own else None


@dataclass
class Histogram:
    bin_width_ps: int
    origin_ps: int
    counts: dict

    @property
    def n_bins(self):
        return len(next(iter(self.counts.values())))

    def edges(self):
        return self.origin_ps + self.bin_width_ps * np.arange(self.n_bins + 1)

    def totals(self):
        return {ch: int(c.sum()) for ch, c in self.counts.items()}


def histogram(records, bin_width_ps=DEFAULT_BIN_PS, origin_ps=0, n_bins=None) -> Histogram:
    """Bin arrival times per channel; bins are left-closed ``[edge, edge + width)``."""
    if bin_width_ps <= 0:
        raise DomainError("bin width must be positive")
    by_channel = {ch: [] for ch in CHANNELS}
    for rec in records:
        by_channel[rec.channel].append(rec.time_ps)
    idx = {}
    top = 0
    for ch, times in by_channel.items():
        t = np.asarray(times, dtype=np.int64)
        if t.size and t.min() < origin_ps:
            raise DomainError(f"record at {t.min()} ps precedes histogram origin {origin_ps} ps")
        i = (t - origin_ps) // bin_width_ps
        idx[ch] = i
        if i.size:
            top = max(top, int(i.max()) + 1)
    if n_bins is None:
        n_bins = max(top, 1)
    elif n_bins < top:
        raise DomainError(f"n_bins={n_bins} too small for latest record (needs {top})")
    counts = {ch: np.bincount(i, minlength=n_bins).astype(np.int64) for ch, i in idx.items()}
    return Histogram(int(bin_width_ps), int(origin_ps), counts)


@dataclass(frozen=True)
class CountSet:
    c_sc_in: float
    c_sc_out: float
    c_s_in: float
    c_s_out: float
    c_c_in: float
    c_c_out: float
    n_triggers: int = 1

    def __post_init__(self):
        values = self.as_array()
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("counts must be finite and non-negative")
        if self.n_triggers <= 0:
            raise DomainError("n_triggers must be positive")

    FIELDS = ("c_sc_in", "c_sc_out", "c_s_in", "c_s_out", "c_c_in", "c_c_out")

    def as_array(self):
        return np.array([getattr(self, f) for f in self.FIELDS], dtype=float)

    def scaled(self, k):
        return CountSet(*(k * self.as_array()), n_triggers=self.n_triggers)


def _window_slice(hist, window):
    lo, hi = window
    if hi < lo:
        raise DomainError(f"window {window} has negative width")
    # a bin belongs to the window when its left edge lies in [lo, hi)
    w, o = hist.bin_width_ps, hist.origin_ps
    start = max(0, -(-(lo - o) // w))
    stop = max(0, -(-(hi - o) // w))
    return slice(min(start, hist.n_bins), min(stop, hist.n_bins))


def integrate_windows(hist: Histogram, read_in_window, read_out_window, n_triggers=1) -> CountSet:
    """Sum each channel over the read-in and read-out windows (in ps)."""
    a, b = read_in_window, read_out_window
    if max(a[0], b[0]) < min(a[1], b[1]):
        raise DomainError(f"read-in window {a} overlaps read-out window {b}")
    s_in, s_out = _window_slice(hist, a), _window_slice(hist, b)
    c = hist.counts
    return CountSet(
        c_sc_in=int(c["sc"][s_in].sum()), c_sc_out=int(c["sc"][s_out].sum()),
        c_s_in=int(c["s"][s_in].sum()), c_s_out=int(c["s"][s_out].sum()),
        c_c_in=int(c["c"][s_in].sum()), c_c_out=int(c["c"][s_out].sum()),
        n_triggers=n_triggers,
    )
