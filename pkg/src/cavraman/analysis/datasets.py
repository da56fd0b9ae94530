"""CSV formats for the series consumed by the fits."""

import csv
import io

import numpy as np

from ..errors import ParseError
from .fitting import CoherentStateSeries, LifetimeSeries, NoiseScalingSeries
from .timetags import CountSet

__all__ = [
    "COHERENT_COLUMNS",
    "NOISE_COLUMNS",
    "LIFETIME_COLUMNS",
    "write_coherent_series",
    "read_coherent_series",
    "write_noise_series",
    "read_noise_series",
    "write_lifetime_series",
    "read_lifetime_series",
]

COHERENT_COLUMNS = ("mean_photons", *CountSet.FIELDS, "n_triggers")
NOISE_COLUMNS = ("energy_nj", "counts", "n_triggers", "detection_efficiency")
LIFETIME_COLUMNS = ("storage_time_ns", "counts")


def _fmt(v):
    return f"{v:.12g}" if isinstance(v, float) else str(v)


def _write(columns, rows, stream):
    own = stream is None
    stream = io.StringIO() if own else stream
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return stream.getvalue() if own else None


def _read(columns, stream):
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != columns:
        raise ParseError(f"expected header {','.join(columns)}", 1)
    rows = []
    for row in reader:
        if not row:
            continue
        if len(row) != len(columns):
            raise ParseError(f"expected {len(columns)} fields, got {len(row)}", reader.line_num)
        try:
            rows.append([float(v) for v in row])
        except ValueError as exc:
            raise ParseError(str(exc), reader.line_num) from None
    return np.array(rows, dtype=float).reshape(-1, len(columns))


def write_coherent_series(series: CoherentStateSeries, stream=None):
    rows = ([float(a), *(c.as_array().tolist()), c.n_triggers]
            for a, c in zip(series.mean_photons, series.counts))
    return _write(COHERENT_COLUMNS, rows, stream)


def read_coherent_series(stream) -> CoherentStateSeries:
    data = _read(COHERENT_COLUMNS, stream)
    sets = [CountSet(*row[1:7], n_triggers=int(row[7])) for row in data]
    return CoherentStateSeries(data[:, 0], sets)


def write_noise_series(series: NoiseScalingSeries, stream=None):
    rows = ([float(e), float(c), series.n_triggers, float(series.detection_efficiency)]
            for e, c in zip(series.energies, series.counts))
    return _write(NOISE_COLUMNS, rows, stream)


def read_noise_series(stream) -> NoiseScalingSeries:
    data = _read(NOISE_COLUMNS, stream)
    if len(data) and (np.ptp(data[:, 2]) or np.ptp(data[:, 3])):
        raise ParseError("n_triggers and detection_efficiency must be constant across rows")
    n = data[0, 2] if len(data) else 1.0
    eff = data[0, 3] if len(data) else 1.0
    return NoiseScalingSeries(data[:, 0], data[:, 1], n, eff)


def write_lifetime_series(series: LifetimeSeries, stream=None):
    rows = ([float(t), float(c)] for t, c in zip(series.times, series.counts))
    return _write(LIFETIME_COLUMNS, rows, stream)


def read_lifetime_series(stream) -> LifetimeSeries:
    data = _read(LIFETIME_COLUMNS, stream)
    return LifetimeSeries(data[:, 0], data[:, 1])
