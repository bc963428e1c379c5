"""
Measured grid-impedance sweeps: parsing, polar views and multi-snapshot statistics.

A sweep is stored the way it is measured, in Cartesian form ``R(f) + jX(f)``
on a strictly increasing frequency grid in hertz.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    DuplicateFrequency,
    EmptySweep,
    FrequencyOutOfRange,
    GridOutsideSweepRange,
    InsufficientSnapshots,
    MalformedRow,
    NonFiniteSample,
    NonMonotonicFrequency,
)

CSV_HEADER = ("freq_hz", "r_ohm", "x_ohm")
DEFAULT_SWEEP_RANGE = (0.0, 1000.0)
DEFAULT_OUTLIER_THRESHOLD = 0.5


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ImpedanceSweep:
    """One measured impedance snapshot.

    Parameters
    ----------
    snapshot_id : str
        Identifier of the snapshot.
    frequencies : array_like
        Strictly increasing frequencies in Hz, all >= 0.
    samples : array_like
        Complex impedance in ohm; real part is the resistance, imaginary
        part the reactance.
    metadata : dict
        Free-form key/value information (measurement time, bus name, ...).
    """

    snapshot_id: str
    frequencies: np.ndarray
    samples: np.ndarray
    metadata: dict = field(default_factory=dict)
    f_range: tuple = DEFAULT_SWEEP_RANGE
    allow_extended: bool = False

    def __post_init__(self):
        f = _frozen(self.frequencies, float)
        z = _frozen(self.samples, complex)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "samples", z)
        object.__setattr__(self, "metadata", dict(self.metadata))
        if f.ndim != 1 or z.ndim != 1 or len(f) != len(z):
            raise ValueError("frequencies and samples must be 1-D and of equal length")
        if len(f) < 2:
            raise EmptySweep(f"sweep {self.snapshot_id!r} needs at least 2 points, got {len(f)}")
        if not np.all(np.isfinite(f)):
            raise NonFiniteSample(f"sweep {self.snapshot_id!r} has non-finite frequencies")
        if not (np.all(np.isfinite(z.real)) and np.all(np.isfinite(z.imag))):
            raise NonFiniteSample(f"sweep {self.snapshot_id!r} has non-finite samples")
        df = np.diff(f)
        if np.any(df == 0):
            i = int(np.flatnonzero(df == 0)[0]) + 1
            raise DuplicateFrequency(f"duplicate frequency {f[i]!r} Hz at point {i}")
        if np.any(df < 0):
            i = int(np.flatnonzero(df < 0)[0]) + 1
            raise NonMonotonicFrequency(
                f"frequency {f[i]!r} Hz at point {i} is below previous {f[i - 1]!r} Hz"
            )
        if f[0] < 0:
            raise FrequencyOutOfRange(f"negative frequency {f[0]!r} Hz")
        lo, hi = self.f_range
        if not self.allow_extended and (f[0] < lo or f[-1] > hi):
            raise FrequencyOutOfRange(
                f"sweep {self.snapshot_id!r} spans {f[0]!r}..{f[-1]!r} Hz, outside "
                f"declared range {lo!r}..{hi!r} Hz (use allow_extended)"
            )

    def __len__(self):
        return len(self.frequencies)

    @property
    def resistance(self):
        return self.samples.real

    @property
    def reactance(self):
        return self.samples.imag

    @property
    def magnitude(self):
        return np.abs(self.samples)

    def interpolate(self, freqs):
        """Linear interpolation of R and X separately onto `freqs` (Hz)."""
        freqs = np.asarray(freqs, dtype=float)
        f = self.frequencies
        if np.any(freqs < f[0]) or np.any(freqs > f[-1]):
            raise GridOutsideSweepRange(
                f"requested frequencies outside sweep {self.snapshot_id!r} "
                f"range {f[0]!r}..{f[-1]!r} Hz"
            )
        r = np.interp(freqs, f, self.samples.real)
        x = np.interp(freqs, f, self.samples.imag)
        return r + 1j * x


def _parse_float(token, lineno, name):
    try:
        return float(token)
    except (TypeError, ValueError):
        raise MalformedRow(f"line {lineno}: {name} value {token!r} is not a number") from None


def parse_sweep(text, snapshot_id, *, metadata=None, f_range=DEFAULT_SWEEP_RANGE,
                allow_extended=False):
    """Parse a ``freq_hz,r_ohm,x_ohm`` CSV into an :class:`ImpedanceSweep`.

    `text` may be a string or a text stream. Rows are validated in file order
    and never re-sorted.
    """
    if not isinstance(text, str):
        text = text.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptySweep(f"sweep {snapshot_id!r}: no header")
    header = tuple(c.strip() for c in rows[0])
    if header != CSV_HEADER:
        raise MalformedRow(f"line 1: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
    body = rows[1:]
    if not body:
        raise EmptySweep(f"sweep {snapshot_id!r}: no data rows")

    freqs, samples = [], []
    for lineno, row in enumerate(body, start=2):
        if len(row) != 3:
            raise MalformedRow(f"line {lineno}: expected 3 fields, got {len(row)}")
        f, r, x = (_parse_float(tok.strip(), lineno, name) for tok, name in zip(row, CSV_HEADER))
        if not (math.isfinite(f) and math.isfinite(r) and math.isfinite(x)):
            raise NonFiniteSample(f"line {lineno}: non-finite value in {','.join(row)}")
        if freqs:
            if f == freqs[-1]:
                raise DuplicateFrequency(f"line {lineno}: duplicate frequency {f!r} Hz")
            if f < freqs[-1]:
                raise NonMonotonicFrequency(
                    f"line {lineno}: frequency {f!r} Hz follows {freqs[-1]!r} Hz"
                )
        if f == 0.0 and x != 0.0:
            warnings.warn(
                f"sweep {snapshot_id!r}: non-zero reactance {x!r} ohm at 0 Hz "
                "(measurement artifact?)",
                stacklevel=2,
            )
        freqs.append(f)
        samples.append(complex(r, x))
    if len(freqs) < 2:
        raise EmptySweep(f"sweep {snapshot_id!r}: needs at least 2 rows, got {len(freqs)}")
    return ImpedanceSweep(snapshot_id, freqs, samples, metadata or {},
                          f_range=f_range, allow_extended=allow_extended)


def serialize_sweep(sweep):
    """CSV text that :func:`parse_sweep` reads back bit-exactly."""
    lines = [",".join(CSV_HEADER)]
    for f, z in zip(sweep.frequencies, sweep.samples):
        lines.append(f"{float(f)!r},{float(z.real)!r},{float(z.imag)!r}")
    return "\n".join(lines) + "\n"


def read_sweep(path, snapshot_id=None, **kwargs):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_sweep(text, snapshot_id or path.stem, **kwargs)


def write_sweep(sweep, path):
    Path(path).write_text(serialize_sweep(sweep), encoding="utf-8", newline="\n")


def load_manifest(path, **kwargs):
    """Load every sweep listed in a JSON manifest.

    The manifest is an array of ``{"id": ..., "path": ..., "meta": {...}}``;
    relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    entries = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(entries, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    sweeps = []
    for i, entry in enumerate(entries):
        try:
            sid, rel = entry["id"], entry["path"]
        except (TypeError, KeyError):
            raise ValueError(f"{path}: entry {i} needs 'id' and 'path'") from None
        p = Path(rel)
        if not p.is_absolute():
            p = path.parent / p
        sweeps.append(read_sweep(p, sid, metadata=entry.get("meta") or {}, **kwargs))
    return sweeps


def write_manifest(entries, path):
    """Write manifest entries (list of dicts with id/path/meta)."""
    Path(path).write_text(json.dumps(list(entries), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


# --- polar view -------------------------------------------------------------

class PolarSample(NamedTuple):
    frequency: float
    magnitude: float
    angle: float


def polar_angle(z):
    """atan2(X, R) folded into (-pi, pi]; exact zero gets angle 0."""
    z = np.asarray(z, dtype=complex)
    ang = np.arctan2(z.imag, z.real)
    ang = np.where(ang == -np.pi, np.pi, ang)
    return np.where(z == 0, 0.0, ang)


def to_polar(sweep):
    mag = np.abs(sweep.samples)
    ang = polar_angle(sweep.samples)
    return [PolarSample(float(f), float(m), float(a))
            for f, m, a in zip(sweep.frequencies, mag, ang)]


def from_polar(polar):
    return np.array([p.magnitude * complex(math.cos(p.angle), math.sin(p.angle)) for p in polar])


# --- negative reactance -----------------------------------------------------

def _zero_crossing(f0, x0, f1, x1):
    if x0 == 0.0:
        return f0
    if x1 == 0.0:
        return f1
    return f0 + (0.0 - x0) * (f1 - f0) / (x1 - x0)


def negative_reactance_ranges(sweep):
    """Maximal frequency intervals over which the reactance is negative.

    Interval ends inside the sweep are placed at the linearly interpolated
    zero crossing between the two bracketing samples; runs touching the
    sweep ends are clipped to the first/last frequency.
    """
    f = sweep.frequencies
    x = sweep.samples.imag
    neg = x < 0
    out = []
    i, n = 0, len(f)
    while i < n:
        if not neg[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and neg[j + 1]:
            j += 1
        lo = f[0] if i == 0 else _zero_crossing(f[i - 1], x[i - 1], f[i], x[i])
        hi = f[-1] if j == n - 1 else _zero_crossing(f[j], x[j], f[j + 1], x[j + 1])
        out.append((float(lo), float(hi)))
        i = j + 1
    return out


# --- envelope ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnvelopeStats:
    frequencies: np.ndarray
    z_min: np.ndarray
    z_max: np.ndarray
    spread_ratio: np.ndarray
    worst_ratio: tuple

    def to_csv(self):
        lines = ["freq_hz,zmin_ohm,zmax_ohm,ratio"]
        for f, lo, hi, r in zip(self.frequencies, self.z_min, self.z_max, self.spread_ratio):
            lines.append(f"{float(f)!r},{float(lo)!r},{float(hi)!r},{float(r)!r}")
        return "\n".join(lines) + "\n"


def common_grid(lo, hi, step):
    """Grid lo, lo+step, ... up to hi (inclusive, with float slack)."""
    n = int(math.floor((hi - lo) / step + 1e-9))
    return np.minimum(lo + step * np.arange(n + 1), hi)


def envelope(sweeps, grid_step, f_start=None, f_stop=None):
    """Per-frequency min/max of |Z| across snapshots.

    Each sweep is interpolated (R and X separately) onto a common grid that
    starts at `f_start` (default: the highest first frequency) and steps by
    `grid_step` up to `f_stop` (default: the lowest last frequency).
    """
    sweeps = list(sweeps)
    if len(sweeps) < 2:
        raise InsufficientSnapshots(f"envelope needs >= 2 sweeps, got {len(sweeps)}")
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    lo_cover = max(s.frequencies[0] for s in sweeps)
    hi_cover = min(s.frequencies[-1] for s in sweeps)
    lo = lo_cover if f_start is None else float(f_start)
    hi = hi_cover if f_stop is None else float(f_stop)
    if lo < lo_cover or hi > hi_cover or lo > hi:
        raise GridOutsideSweepRange(
            f"grid {lo!r}..{hi!r} Hz not covered by all sweeps ({lo_cover!r}..{hi_cover!r} Hz)"
        )
    grid = common_grid(lo, hi, grid_step)
    mags = np.vstack([np.abs(s.interpolate(grid)) for s in sweeps])
    z_min = mags.min(axis=0)
    z_max = mags.max(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(z_min > 0, z_max / np.where(z_min > 0, z_min, 1.0), np.inf)
    finite = np.isfinite(ratio)
    if finite.any():
        k = int(np.argmax(np.where(finite, ratio, -np.inf)))
    else:
        k = 0
    for a in (grid, z_min, z_max, ratio):
        a.setflags(write=False)
    return EnvelopeStats(grid, z_min, z_max, ratio, (float(grid[k]), float(ratio[k])))


# --- outliers ---------------------------------------------------------------

class OutlierScore(NamedTuple):
    snapshot_id: str
    score: float
    flagged: bool


def _log_magnitudes(sweeps):
    same_grid = all(np.array_equal(s.frequencies, sweeps[0].frequencies) for s in sweeps)
    if same_grid:
        mags = np.vstack([np.abs(s.samples) for s in sweeps])
    else:
        lo = max(s.frequencies[0] for s in sweeps)
        hi = min(s.frequencies[-1] for s in sweeps)
        f0 = sweeps[0].frequencies
        grid = f0[(f0 >= lo) & (f0 <= hi)]
        if len(grid) == 0:
            raise GridOutsideSweepRange("sweeps share no common frequency range")
        mags = np.vstack([np.abs(s.interpolate(grid)) for s in sweeps])
    return np.log10(np.maximum(mags, np.finfo(float).tiny))


def flag_outliers(sweeps, threshold=DEFAULT_OUTLIER_THRESHOLD):
    """Score each snapshot by its median log10-magnitude deviation from the pack.

    Returns one :class:`OutlierScore` per sweep, in input order.
    """
    sweeps = list(sweeps)
    if len(sweeps) < 3:
        raise InsufficientSnapshots(f"outlier scoring needs >= 3 sweeps, got {len(sweeps)}")
    logs = _log_magnitudes(sweeps)
    center = np.median(logs, axis=0)
    scores = np.median(np.abs(logs - center), axis=1)
    return [OutlierScore(s.snapshot_id, float(sc), bool(sc > threshold))
            for s, sc in zip(sweeps, scores)]
