"""
Harmonic spectra, propagation to the PCC and limit compliance.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import NamedTuple, Optional

from .errors import (
    GridResError,
    MissingFundamental,
    SpectrumError,
    UnsupportedCombination,
    ZeroFundamental,
)
from .network import pcc_background_voltage, pcc_current_injection, swapped

CURRENT = "current"
VOLTAGE = "voltage"
GRID_SIDE = "grid_side"
INVERTER_SIDE = "inverter_side"


@dataclass(frozen=True)
class HarmonicSpectrum:
    """Complex amplitude per harmonic order.

    `failed` maps orders whose propagation degenerated to the reason; those
    orders are absent from `entries`.
    """

    entries: dict
    unit: str = CURRENT
    f1: float = 50.0
    failed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.unit not in (CURRENT, VOLTAGE):
            raise SpectrumError(f"unit must be 'current' or 'voltage', got {self.unit!r}")
        if not (self.f1 > 0 and math.isfinite(self.f1)):
            raise SpectrumError(f"fundamental frequency must be positive, got {self.f1!r}")
        clean = {}
        for h, a in self.entries.items():
            if int(h) != h or h < 1:
                raise SpectrumError(f"harmonic order must be an integer >= 1, got {h!r}")
            a = complex(a)
            if not (math.isfinite(a.real) and math.isfinite(a.imag)):
                raise SpectrumError(f"non-finite amplitude at order {h}")
            if int(h) in clean:
                raise SpectrumError(f"duplicate order {h}")
            clean[int(h)] = a
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(clean.items()))))
        object.__setattr__(self, "failed", MappingProxyType(dict(self.failed)))

    def scaled(self, k):
        return HarmonicSpectrum({h: a * k for h, a in self.entries.items()}, self.unit, self.f1)


def propagate(source, net, location=INVERTER_SIDE):
    """PCC voltage spectrum produced by `source` located at `location`.

    current source (inverter side)  -> injection into the PCC node
    voltage source on the grid side -> divider behind the grid branch
    voltage source on the inverter side -> same divider behind the inverter branch
    """
    if location not in (GRID_SIDE, INVERTER_SIDE):
        raise ValueError(f"unknown location {location!r}")
    if source.unit == CURRENT and location == GRID_SIDE:
        raise UnsupportedCombination(
            "grid-side sources are background voltages; a current source must be injected at the inverter side"
        )
    out, failed = {}, {}
    for h, a in source.entries.items():
        f = h * source.f1
        try:
            if source.unit == CURRENT:
                v = pcc_current_injection(net, a, f).v_pcc
            elif location == GRID_SIDE:
                v = pcc_background_voltage(net, a, f).v_pcc
            else:
                v = pcc_background_voltage(swapped(net), a, f).v_pcc
        except GridResError as exc:
            failed[h] = str(exc)
            continue
        out[h] = v
    return HarmonicSpectrum(out, VOLTAGE, source.f1, failed)


def _fundamental(spec):
    if 1 not in spec.entries:
        raise MissingFundamental("spectrum has no fundamental (order 1)")
    a1 = abs(spec.entries[1])
    if a1 == 0:
        raise ZeroFundamental("fundamental amplitude is zero")
    return a1


def percent_of_fundamental(spec):
    a1 = _fundamental(spec)
    return {h: 100.0 * abs(a) / a1 for h, a in spec.entries.items() if h >= 2}


def thd(spec, max_order=50):
    """Total harmonic distortion in percent over orders 2..max_order."""
    a1 = _fundamental(spec)
    ss = sum(abs(a) ** 2 for h, a in spec.entries.items() if 2 <= h <= max_order)
    return 100.0 * math.sqrt(ss) / a1


# --- limits -----------------------------------------------------------------

@dataclass(frozen=True)
class LimitTable:
    limits: dict
    source_label: str = ""

    def __post_init__(self):
        clean = {}
        for h, v in self.limits.items():
            h = int(h)
            v = float(v)
            if not v > 0:
                raise ValueError(f"limit for order {h} must be > 0, got {v!r}")
            clean[h] = v
        object.__setattr__(self, "limits", MappingProxyType(dict(sorted(clean.items()))))

    def get(self, order):
        return self.limits.get(order)


def default_limits():
    """Built-in table: only the third harmonic, limited to 3 % of fundamental."""
    return LimitTable({3: 3.0}, "built-in default: h3 <= 3 %")


def load_limits(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return LimitTable({int(k): v for k, v in data["limits"].items()}, data.get("source_label", ""))


PASS, FAIL, UNBOUNDED = "pass", "fail", "unbounded"


class ComplianceRow(NamedTuple):
    order: int
    percent: float
    limit: Optional[float]
    margin: Optional[float]
    verdict: str


@dataclass(frozen=True)
class ComplianceReport:
    rows: tuple
    verdict: str
    worst: Optional[ComplianceRow]
    source_label: str = ""

    @property
    def passed(self):
        return self.verdict == PASS

    def to_dict(self):
        return {
            "source_label": self.source_label,
            "verdict": self.verdict,
            "worst_violation": None if self.worst is None else {
                "order": self.worst.order, "percent": self.worst.percent,
                "limit": self.worst.limit, "excess": -self.worst.margin,
            },
            "rows": [r._asdict() for r in self.rows],
        }

    def to_text(self):
        lines = [f"limits: {self.source_label}",
                 f"{'order':>5} {'percent':>10} {'limit':>8} {'margin':>8}  verdict"]
        for r in self.rows:
            lim = "-" if r.limit is None else f"{r.limit:.3f}"
            mar = "-" if r.margin is None else f"{r.margin:+.3f}"
            verdict = "no limit" if r.verdict == UNBOUNDED else r.verdict
            lines.append(f"{r.order:>5} {r.percent:>10.4f} {lim:>8} {mar:>8}  {verdict}")
        lines.append(f"overall: {self.verdict.upper()}")
        if self.worst is not None:
            lines.append(f"worst violation: order {self.worst.order}, excess {-self.worst.margin:.4f} points")
        return "\n".join(lines) + "\n"


def check_compliance(percents, limits):
    """Compare per-order percentages with `limits`; equality passes."""
    rows = []
    for h in sorted(percents):
        pct = float(percents[h])
        lim = limits.get(h)
        if lim is None:
            rows.append(ComplianceRow(h, pct, None, None, UNBOUNDED))
        else:
            rows.append(ComplianceRow(h, pct, lim, lim - pct, FAIL if pct > lim else PASS))
    fails = [r for r in rows if r.verdict == FAIL]
    worst = min(fails, key=lambda r: (r.margin, r.order)) if fails else None
    return ComplianceReport(tuple(rows), FAIL if fails else PASS, worst, limits.source_label)


# --- files ------------------------------------------------------------------

def parse_spectrum(text, sidecar=None):
    """Spectrum from ``order,amp_real,amp_imag`` CSV plus optional sidecar dict."""
    sidecar = sidecar or {}
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows or tuple(c.strip() for c in rows[0]) != ("order", "amp_real", "amp_imag"):
        raise SpectrumError("expected header order,amp_real,amp_imag")
    entries = {}
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            h, re, im = int(row[0]), float(row[1]), float(row[2])
        except (ValueError, IndexError):
            raise SpectrumError(f"line {lineno}: malformed row {','.join(row)}") from None
        if h in entries:
            raise SpectrumError(f"line {lineno}: duplicate order {h}")
        entries[h] = complex(re, im)
    return HarmonicSpectrum(entries, sidecar.get("unit", CURRENT), float(sidecar.get("f1_hz", 50.0)))


def sidecar_path(csv_path):
    p = Path(csv_path)
    return p.with_suffix(".json")


def read_spectrum(path):
    """Read a spectrum CSV and its JSON sidecar (same stem, ``.json``) if present."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    side = sidecar_path(path)
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    return parse_spectrum(text, meta)


def write_spectrum(spec, path):
    path = Path(path)
    lines = ["order,amp_real,amp_imag"]
    for h, a in spec.entries.items():
        lines.append(f"{h},{a.real!r},{a.imag!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    sidecar_path(path).write_text(json.dumps({"f1_hz": spec.f1, "unit": spec.unit}, sort_keys=True) + "\n",
                                  encoding="utf-8")
