"""
Series/parallel resonance detection on driving-point impedances.

Scans |Z(f)| on a uniform grid, keeps local extrema whose prominence (a
ratio, computed on log|Z|) clears a threshold, refines each by golden-section
search inside its bracketing grid cells and estimates Q from the -3 dB
bandwidth on the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.signal import find_peaks

from .errors import GridResError, InvalidRange, NoResonanceFound
from .ingest import common_grid
from .network import (
    SHORT,
    HarmonicNetwork,
    Parallel,
    as_expr,
    branch_scaled,
    lcl_network,
    pcc_background_voltage,
    pcc_current_injection,
)

SERIES = "series"
PARALLEL = "parallel"
DEFAULT_PROMINENCE = 1.5
DEFAULT_RANGE = (1.0, 1000.0)
DEFAULT_STEP = 1.0
INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ResonancePoint:
    frequency: float
    kind: str
    magnitude: float
    prominence: float
    q_estimate: Optional[float] = None
    classification_conflict: bool = False


def _magnitudes(expr, f):
    z, is_open = expr.values(np.asarray(f, float))
    with np.errstate(invalid="ignore", over="ignore"):
        mag = np.abs(z)
    mag = np.where(is_open | ~np.isfinite(mag), np.inf, mag)
    return z, is_open, mag


def _golden_min(fn, a, b, tol):
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = fn(d)
    m = 0.5 * (a + b)
    cands = [(fn(m), m), (fc, c), (fd, d)]
    return min(cands)[1]


def _q_estimate(grid, mag, k, f_ref, m_ref, kind):
    if not (0 < m_ref < math.inf):
        return None
    if kind == PARALLEL:
        thr = m_ref / math.sqrt(2.0)
        crossed = lambda m: m <= thr
    else:
        thr = m_ref * math.sqrt(2.0)
        crossed = lambda m: m >= thr

    def edge(indices):
        fp, mp = f_ref, m_ref
        for i in indices:
            fi, mi = grid[i], mag[i]
            if (fi - f_ref) * (fp - f_ref) < 0:
                continue
            if crossed(mi):
                if not math.isfinite(mi) or mi == mp:
                    return fi
                return fp + (thr - mp) * (fi - fp) / (mi - mp)
            fp, mp = fi, mi
        return None

    left_idx = [i for i in range(k, -1, -1) if grid[i] < f_ref]
    right_idx = [i for i in range(k, len(grid)) if grid[i] > f_ref]
    lo, hi = edge(left_idx), edge(right_idx)
    if lo is None or hi is None or hi <= lo:
        return None
    return float(f_ref / (hi - lo))


def scan_resonances(z, f_min=DEFAULT_RANGE[0], f_max=DEFAULT_RANGE[1], step=DEFAULT_STEP,
                    prominence_min=DEFAULT_PROMINENCE):
    """Series (|Z| minimum) and parallel (|Z| maximum) resonances of `z`.

    Parameters
    ----------
    z : ImpedanceExpr, RationalModel, ImpedanceSweep or callable
        Anything evaluable at frequencies in Hz.
    f_min, f_max, step : float
        Scan range and grid spacing in Hz.
    prominence_min : float
        Minimum extremum-to-baseline ratio (>= 1).

    Returns
    -------
    list of ResonancePoint, sorted by frequency.
    """
    if not (0 <= f_min < f_max) or not step > 0 or not (prominence_min >= 1):
        raise InvalidRange(f"bad scan: {f_min!r}..{f_max!r} Hz step {step!r}, prominence {prominence_min!r}")
    expr = as_expr(z)
    grid = common_grid(float(f_min), float(f_max), float(step))
    if len(grid) < 3:
        return []
    zs, is_open, mag = _magnitudes(expr, grid)
    with np.errstate(divide="ignore"):
        logm = np.log10(mag)
    finite = np.isfinite(logm)
    if not finite.any():
        return []
    hi_sub = logm[finite].max() + 50.0
    lo_sub = logm[finite].min() - 50.0
    logm = np.where(np.isposinf(logm), hi_sub, np.where(np.isneginf(logm), lo_sub, logm))
    min_prom = math.log10(prominence_min)

    def scalar_mag(f):
        return float(_magnitudes(expr, [f])[2][0])

    found = []
    for kind, sign in ((PARALLEL, 1.0), (SERIES, -1.0)):
        idx, props = find_peaks(sign * logm, prominence=min_prom)
        for k, lb, rb in zip(idx, props["left_bases"], props["right_bases"]):
            m_grid = mag[k]
            if kind == PARALLEL and math.isinf(m_grid):
                found.append(ResonancePoint(float(grid[k]), kind, math.inf, math.inf, None,
                                            _conflict(zs, is_open, k, kind)))
                continue
            if kind == SERIES and m_grid == 0:
                found.append(ResonancePoint(float(grid[k]), kind, 0.0, math.inf, None,
                                            _conflict(zs, is_open, k, kind)))
                continue
            fn = (lambda f: -scalar_mag(f)) if kind == PARALLEL else scalar_mag
            f_ref = _golden_min(fn, grid[k - 1], grid[k + 1], step / 100.0)
            m_ref = scalar_mag(f_ref)
            if sign * m_ref < sign * m_grid:
                f_ref, m_ref = float(grid[k]), float(m_grid)
            if kind == PARALLEL:
                base = max(mag[lb], mag[rb])
                prom = m_ref / base if base > 0 else math.inf
            else:
                base = min(mag[lb], mag[rb])
                prom = base / m_ref if m_ref > 0 else math.inf
            q = _q_estimate(grid, mag, k, f_ref, m_ref, kind)
            found.append(ResonancePoint(float(f_ref), kind, float(m_ref), float(prom), q,
                                        _conflict(zs, is_open, k, kind)))
    found.sort(key=lambda p: p.frequency)
    return found


def _conflict(zs, is_open, k, kind):
    """True when the reactance does not cross zero the way `kind` implies."""
    if is_open[k - 1] or is_open[k + 1]:
        return False
    xl, xr = zs[k - 1].imag, zs[k + 1].imag
    if kind == SERIES:
        return not (xl < 0 <= xr or xl <= 0 < xr)
    return not (xl > 0 >= xr or xl >= 0 > xr)


def dominant_parallel(points):
    """Highest-prominence parallel resonance, ties to the lower frequency."""
    par = [p for p in points if p.kind == PARALLEL]
    if not par:
        return None
    return min(par, key=lambda p: (-p.prominence, p.frequency))


# --- drift across snapshots -------------------------------------------------

@dataclass(frozen=True)
class DriftResult:
    resonances: dict
    dominant: dict
    f_lowest: Optional[float]
    f_highest: Optional[float]

    @property
    def drift(self):
        if self.f_lowest is None:
            return None
        return self.f_highest - self.f_lowest


def _items(mapping_or_pairs):
    items = list(mapping_or_pairs.items()) if isinstance(mapping_or_pairs, dict) else list(mapping_or_pairs)
    return sorted(items, key=lambda kv: _sort_key(kv[0]))


def _sort_key(key):
    return (0, key, "") if isinstance(key, int) else (1, 0, str(key))


def resonance_drift(snapshots, lcl, inv_z=SHORT, f_min=DEFAULT_RANGE[0], f_max=DEFAULT_RANGE[1],
                    step=DEFAULT_STEP, prominence_min=DEFAULT_PROMINENCE):
    """Resonances of the PCC node impedance for each grid snapshot.

    `snapshots` maps snapshot id to a fitted grid model (or any evaluable
    impedance). Each is placed behind the LCL grid-side inductor.
    """
    items = _items(snapshots)
    if not items:
        raise ValueError("resonance_drift needs at least one snapshot")
    res, dom = {}, {}
    for sid, zg in items:
        net = lcl_network(lcl, zg, inv_z)
        pts = scan_resonances(net.node, f_min, f_max, step, prominence_min)
        res[sid] = pts
        dom[sid] = dominant_parallel(pts)
    freqs = [p.frequency for p in dom.values() if p is not None]
    return DriftResult(res, dom, min(freqs) if freqs else None, max(freqs) if freqs else None)


# --- branch count -----------------------------------------------------------

class BranchRow(NamedTuple):
    n: int
    frequency: Optional[float]
    point: Optional[ResonancePoint]
    status: str


def branch_count_sweep(base_branch, z_grid, n_values, f_min=DEFAULT_RANGE[0], f_max=DEFAULT_RANGE[1],
                       step=DEFAULT_STEP, prominence_min=DEFAULT_PROMINENCE):
    """Dominant parallel resonance of grid || (n parallel copies of a branch), per n."""
    n_values = list(n_values)
    if not n_values:
        raise ValueError("n_values must not be empty")
    rows = []
    for n in n_values:
        node = Parallel(as_expr(z_grid), branch_scaled(as_expr(base_branch), n))
        pt = dominant_parallel(scan_resonances(node, f_min, f_max, step, prominence_min))
        if pt is None:
            err = NoResonanceFound(f"no parallel resonance for n={n} in {f_min}..{f_max} Hz")
            rows.append(BranchRow(int(n), None, None, f"no_resonance: {err}"))
        else:
            rows.append(BranchRow(int(n), pt.frequency, pt, "ok"))
    return rows


# --- magnification ----------------------------------------------------------

INJECTION = "injection"
BACKGROUND = "background"


class MapCell(NamedTuple):
    row_key: object
    order: int
    gain: float
    status: str


@dataclass(frozen=True)
class MagnificationMap:
    source: str
    f1: float
    cells: tuple

    def gain(self, row_key, order):
        for c in self.cells:
            if c.row_key == row_key and c.order == order:
                return c.gain
        raise KeyError((row_key, order))

    def row(self, row_key):
        return {c.order: c.gain for c in self.cells if c.row_key == row_key}

    def to_csv(self):
        lines = ["row_key,order,gain,status"]
        for c in self.cells:
            lines.append(f"{c.row_key},{c.order},{float(c.gain)!r},{c.status}")
        return "\n".join(lines) + "\n"


def _injection_row(net, f1, orders):
    try:
        base = abs(pcc_current_injection(net, 1.0, f1).v_pcc)
    except GridResError as exc:
        return [(h, math.nan, f"failed: fundamental: {exc}") for h in orders]
    if base == 0:
        return [(h, math.nan, "failed: node impedance is zero at the fundamental") for h in orders]
    out = []
    for h in orders:
        if h == 1:
            out.append((h, 1.0, "ok"))
            continue
        try:
            v = pcc_current_injection(net, 1.0, h * f1).v_pcc
            out.append((h, abs(v) / base, "ok"))
        except GridResError as exc:
            out.append((h, math.nan, f"failed: {exc}"))
    return out


def _background_row(net, f1, orders):
    out = []
    for h in orders:
        try:
            v = pcc_background_voltage(net, 1.0, h * f1).v_pcc
            out.append((h, abs(v), "ok"))
        except GridResError as exc:
            out.append((h, math.nan, f"failed: {exc}"))
    return out


def magnification_map(networks, f1=50.0, orders=(1, 2, 3, 4, 5, 6, 7), source=INJECTION):
    """Harmonic gain per network and harmonic order.

    ``injection``: |Z_node(h*f1)| / |Z_node(f1)|, so order 1 is exactly 1.
    ``background``: |v_pcc / v_h| at h*f1.

    `networks` maps a row key (snapshot id or branch count) to a
    HarmonicNetwork. Failed cells carry NaN and a ``failed: ...`` status.
    """
    orders = sorted(set(int(h) for h in orders))
    if not orders or orders[0] < 1:
        raise ValueError("orders must be non-empty integers >= 1")
    if not f1 > 0:
        raise ValueError("f1 must be positive")
    if source not in (INJECTION, BACKGROUND):
        raise ValueError(f"unknown source {source!r}")
    cells = []
    for key, net in _items(networks):
        if not isinstance(net, HarmonicNetwork):
            raise TypeError(f"row {key!r}: expected HarmonicNetwork")
        row = _injection_row(net, f1, orders) if source == INJECTION else _background_row(net, f1, orders)
        cells.extend(MapCell(key, h, g, st) for h, g, st in row)
    return MagnificationMap(source, float(f1), tuple(cells))
