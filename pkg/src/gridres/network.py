"""
Impedance algebra and the single-node (PCC) harmonic network.

Impedance expressions are immutable trees. Open and short circuits are
structural markers rather than huge or tiny numbers, so near-resonance
arithmetic never overflows: internally every evaluation yields a complex
value together with an "is open" mask.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateLoop,
    DegenerateNode,
    InvalidCount,
    InvalidParams,
    OpenCircuitEvaluation,
)
from .fitting import RationalModel, evaluate as _eval_model, model_from_json

TWO_PI = 2.0 * math.pi


class ImpedanceExpr:
    """Base class of evaluable impedance terms."""

    def values(self, f):
        """Evaluate at frequencies `f` (Hz, array).

        Returns ``(z, is_open)``; `z` is meaningless where `is_open` is set.
        """
        raise NotImplementedError

    def __call__(self, frequency):
        return eval_expr(self, frequency)


@dataclass(frozen=True)
class Resistor(ImpedanceExpr):
    r: float

    def values(self, f):
        f = np.asarray(f, float)
        return np.full(f.shape, complex(self.r)), np.zeros(f.shape, bool)


@dataclass(frozen=True)
class Inductor(ImpedanceExpr):
    l: float

    def values(self, f):
        f = np.asarray(f, float)
        return 1j * TWO_PI * f * self.l, np.zeros(f.shape, bool)


@dataclass(frozen=True)
class Capacitor(ImpedanceExpr):
    """Ideal capacitor; open circuit at exactly 0 Hz."""

    c: float

    def values(self, f):
        f = np.asarray(f, float)
        is_open = f == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            z = 1.0 / (1j * TWO_PI * np.where(is_open, 1.0, f) * self.c)
        return z, is_open


@dataclass(frozen=True, eq=False)
class Model(ImpedanceExpr):
    """A fitted rational model used as a branch."""

    model: RationalModel
    source: str = ""

    def values(self, f):
        f = np.asarray(f, float)
        return np.asarray(_eval_model(self.model, f), complex), np.zeros(f.shape, bool)


@dataclass(frozen=True)
class _Open(ImpedanceExpr):
    def values(self, f):
        f = np.asarray(f, float)
        return np.zeros(f.shape, complex), np.ones(f.shape, bool)

    def __repr__(self):
        return "OPEN"


@dataclass(frozen=True)
class _Short(ImpedanceExpr):
    def values(self, f):
        f = np.asarray(f, float)
        return np.zeros(f.shape, complex), np.zeros(f.shape, bool)

    def __repr__(self):
        return "SHORT"


OPEN = _Open()
SHORT = _Short()


@dataclass(frozen=True)
class Series(ImpedanceExpr):
    terms: tuple

    def __init__(self, *terms):
        object.__setattr__(self, "terms", tuple(terms))

    def values(self, f):
        f = np.asarray(f, float)
        z = np.zeros(f.shape, complex)
        is_open = np.zeros(f.shape, bool)
        for t in self.terms:
            zt, ot = t.values(f)
            z = z + np.where(ot, 0, zt)
            is_open |= ot
        return z, is_open


@dataclass(frozen=True)
class Parallel(ImpedanceExpr):
    """Parallel combination; open terms are skipped, any exact zero shorts it."""

    terms: tuple

    def __init__(self, *terms):
        object.__setattr__(self, "terms", tuple(terms))

    def values(self, f):
        f = np.asarray(f, float)
        active = np.zeros(f.shape, int)
        shorted = np.zeros(f.shape, bool)
        y = np.zeros(f.shape, complex)
        single = np.zeros(f.shape, complex)
        for t in self.terms:
            zt, ot = t.values(f)
            on = ~ot
            active += on
            zero = on & (zt == 0)
            shorted |= zero
            ok = on & ~zero
            with np.errstate(divide="ignore", invalid="ignore"):
                y = y + np.where(ok, 1.0 / np.where(ok, zt, 1.0), 0)
            single = np.where(on, zt, single)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = 1.0 / np.where(y == 0, 1.0, y)
        # one active term passes through unchanged, so parallel(x, OPEN) == x exactly
        z = np.where(active == 1, single, z)
        z = np.where(shorted, 0, z)
        # no active term, or admittances cancelling exactly (undamped tank hit)
        is_open = (active == 0) | (~shorted & (active > 1) & (y == 0))
        return z, is_open


@dataclass(frozen=True)
class Scaled(ImpedanceExpr):
    term: ImpedanceExpr
    factor: float

    def __post_init__(self):
        if not (self.factor > 0 and math.isfinite(self.factor)):
            raise InvalidParams(f"scale factor must be positive and finite, got {self.factor!r}")

    def values(self, f):
        z, o = self.term.values(f)
        return z * self.factor, o


@dataclass(frozen=True, eq=False)
class Func(ImpedanceExpr):
    """Wrap any vectorized callable ``f_hz -> complex ohm``."""

    fn: object
    label: str = "func"

    def values(self, f):
        f = np.asarray(f, float)
        return np.asarray(self.fn(f), complex) + np.zeros(f.shape), np.zeros(f.shape, bool)


def as_expr(z):
    """Coerce a model, sweep or callable into an ImpedanceExpr."""
    if isinstance(z, ImpedanceExpr):
        return z
    if isinstance(z, RationalModel):
        return Model(z)
    if hasattr(z, "interpolate") and hasattr(z, "snapshot_id"):
        return Func(z.interpolate, label=z.snapshot_id)
    if callable(z):
        return Func(z)
    raise TypeError(f"cannot evaluate {type(z).__name__} as an impedance")


def eval_expr_open(expr, frequency):
    """Scalar evaluation returning ``(z, is_open)`` instead of raising."""
    z, o = as_expr(expr).values(np.array([float(frequency)]))
    return complex(z[0]), bool(o[0])


def eval_expr(expr, frequency):
    """Complex impedance (ohm) of `expr` at `frequency` (Hz, scalar or array)."""
    f = np.asarray(frequency, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequency must be >= 0")
    z, o = as_expr(expr).values(np.atleast_1d(f))
    if np.any(o):
        raise OpenCircuitEvaluation(f"expression is an open circuit at {np.atleast_1d(f)[o][0]!r} Hz")
    return complex(z[0]) if f.ndim == 0 else z


# --- LCL filter -------------------------------------------------------------

INVERTER_FACING = "inverter_facing"
GRID_FACING = "grid_facing"


@dataclass(frozen=True)
class LclParams:
    """LCL filter values.

    Parameters
    ----------
    l1 : float
        Inverter-side inductance (H).
    l2 : float
        Grid-side inductance (H).
    c : float
        Filter capacitance (F).
    rd : float
        Damping resistance (ohm).
    variant : {"plain", "c_type"}
    bypass_l : float
        C-type only: inductance in series with `c` forming the trap that
        bypasses `rd` at its resonance.
    """

    l1: float
    l2: float
    c: float
    rd: float = 0.0
    variant: str = "plain"
    bypass_l: float = 0.0

    def __post_init__(self):
        for name in ("l1", "l2", "c"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidParams(f"{name} must be positive, got {v!r}")
        if not (self.rd >= 0 and math.isfinite(self.rd)):
            raise InvalidParams(f"rd must be >= 0, got {self.rd!r}")
        if self.variant not in ("plain", "c_type"):
            raise InvalidParams(f"unknown LCL variant {self.variant!r}")
        if self.variant == "c_type" and not self.bypass_l > 0:
            raise InvalidParams("c_type filter needs bypass_l > 0")

    @property
    def bypass_frequency(self):
        if self.variant != "c_type":
            return None
        return 1.0 / (TWO_PI * math.sqrt(self.bypass_l * self.c))

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class LclFragments:
    z_inv: ImpedanceExpr
    z_shunt: ImpedanceExpr
    z_series: ImpedanceExpr


def shunt_branch(p):
    if p.variant == "c_type":
        trap = Series(Inductor(p.bypass_l), Capacitor(p.c))
        return Parallel(Resistor(p.rd), trap)
    if p.rd == 0:
        return Capacitor(p.c)
    return Series(Capacitor(p.c), Resistor(p.rd))


def lcl_expr(p, side=INVERTER_FACING):
    """Split an LCL filter into PCC-network fragments.

    ``inverter_facing``: the node is the capacitor node; `z_inv` is L1,
    `z_shunt` the capacitor branch and `z_series` is L2, which belongs in
    series with the caller's grid branch.

    ``grid_facing``: the whole filter seen from its grid terminal with the
    inverter terminal shorted, returned as `z_inv`; shunt is open and
    `z_series` short.
    """
    if not isinstance(p, LclParams):
        raise InvalidParams("expected LclParams")
    shunt = shunt_branch(p)
    if side == INVERTER_FACING:
        return LclFragments(Inductor(p.l1), shunt, Inductor(p.l2))
    if side == GRID_FACING:
        return LclFragments(Series(Inductor(p.l2), Parallel(Inductor(p.l1), shunt)), OPEN, SHORT)
    raise InvalidParams(f"unknown side {side!r}")


def lcl_resonance_freq(p, l_grid=0.0):
    """Undamped LCL resonance (Hz) with extra grid inductance `l_grid` (H)."""
    if not isinstance(p, LclParams):
        raise InvalidParams("expected LclParams")
    if not (l_grid >= 0 and math.isfinite(l_grid)):
        raise InvalidParams(f"l_grid must be >= 0, got {l_grid!r}")
    lg = p.l2 + l_grid
    return math.sqrt((p.l1 + lg) / (p.l1 * lg * p.c)) / TWO_PI


def branch_scaled(branch, n):
    """`n` identical branches in parallel, i.e. the branch impedance divided by n."""
    if int(n) != n or n < 1:
        raise InvalidCount(f"branch count must be an integer >= 1, got {n!r}")
    if n == 1:
        return branch
    return Scaled(branch, 1.0 / n)


# --- PCC network ------------------------------------------------------------

@dataclass(frozen=True)
class HarmonicNetwork:
    """Grid branch, inverter branch and shunt branch meeting at the PCC."""

    z_grid: ImpedanceExpr
    z_inv: ImpedanceExpr = OPEN
    z_shunt: ImpedanceExpr = OPEN

    def __post_init__(self):
        for name in ("z_grid", "z_inv", "z_shunt"):
            object.__setattr__(self, name, as_expr(getattr(self, name)))
        if all(isinstance(b, _Open) for b in self.branches):
            raise DegenerateNode("all three PCC branches are open")

    @property
    def branches(self):
        return (self.z_grid, self.z_inv, self.z_shunt)

    @property
    def node(self):
        return Parallel(*self.branches)

    @property
    def downstream(self):
        return Parallel(self.z_inv, self.z_shunt)


def lcl_network(p, z_grid, inv_z=SHORT):
    """PCC network at the LCL capacitor node.

    The grid branch is L2 in series with `z_grid`; the inverter branch is L1
    in series with the inverter output impedance `inv_z` (SHORT for an ideal
    voltage source, OPEN for an ideal current source).
    """
    frag = lcl_expr(p, INVERTER_FACING)
    return HarmonicNetwork(
        Series(frag.z_series, as_expr(z_grid)),
        Series(frag.z_inv, as_expr(inv_z)),
        frag.z_shunt,
    )


class InjectionResult(NamedTuple):
    v_pcc: complex
    i_grid: complex
    i_inv: complex
    i_shunt: complex


class BackgroundResult(NamedTuple):
    v_pcc: complex
    i_grid: complex


def pcc_current_injection(net, i_h, frequency):
    """Harmonic current `i_h` injected into the PCC node at `frequency` (Hz).

    Returns node voltage and the current taken by each branch. A shorted
    branch clamps the node to 0 V and takes all of the current (split evenly
    between several shorts).
    """
    vals = [eval_expr_open(b, frequency) for b in net.branches]
    active = [(z, o) for z, o in vals if not o]
    if not active:
        raise DegenerateNode(f"all branches open at {frequency!r} Hz")
    i_h = complex(i_h)
    shorted = [not o and z == 0 for z, o in vals]
    if any(shorted):
        k = sum(shorted)
        return InjectionResult(0j, *(i_h / k if s else 0j for s in shorted))
    y = sum(1.0 / z for z, o in active)
    if len(active) == 1:
        z_node = active[0][0]
    elif y == 0:
        raise DegenerateNode(f"undamped parallel resonance exactly at {frequency!r} Hz")
    else:
        z_node = 1.0 / y
    v = i_h * z_node
    cur = [0j if o else v / z for z, o in vals]
    return InjectionResult(v, *cur)


def pcc_background_voltage(net, v_h, frequency):
    """Grid background voltage `v_h` behind the grid branch at `frequency` (Hz).

    Voltage divider between the grid branch and the parallel inverter/shunt
    combination. Raises DegenerateLoop when the loop impedance is exactly 0.
    """
    zg, og = eval_expr_open(net.z_grid, frequency)
    if og:
        raise DegenerateLoop(frequency, f"grid branch is open at {frequency!r} Hz")
    zd, od = eval_expr_open(net.downstream, frequency)
    v_h = complex(v_h)
    if od:
        return BackgroundResult(v_h, 0j)
    total = zg + zd
    if total == 0:
        raise DegenerateLoop(frequency)
    i = v_h / total
    if zd == 0:
        return BackgroundResult(0j, i)
    return BackgroundResult(v_h * zd / total, i)


def swapped(net):
    """Same network with grid and inverter branches exchanged."""
    return HarmonicNetwork(net.z_inv, net.z_grid, net.z_shunt)


# --- JSON description -------------------------------------------------------

def expr_from_dict(data, base_dir=None):
    kind = data.get("kind")
    if kind == "R":
        return Resistor(float(data["value"]))
    if kind == "L":
        return Inductor(float(data["value"]))
    if kind == "C":
        return Capacitor(float(data["value"]))
    if kind == "open":
        return OPEN
    if kind == "short":
        return SHORT
    if kind == "series":
        return Series(*(expr_from_dict(t, base_dir) for t in data["terms"]))
    if kind == "parallel":
        return Parallel(*(expr_from_dict(t, base_dir) for t in data["terms"]))
    if kind == "scaled":
        return Scaled(expr_from_dict(data["term"], base_dir), float(data["factor"]))
    if kind == "model":
        path = Path(data["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        model, _ = model_from_json(path.read_text(encoding="utf-8"))
        return Model(model, str(data["path"]))
    raise ValueError(f"unknown expression kind {kind!r}")


def expr_to_dict(expr):
    if isinstance(expr, Resistor):
        return {"kind": "R", "value": expr.r}
    if isinstance(expr, Inductor):
        return {"kind": "L", "value": expr.l}
    if isinstance(expr, Capacitor):
        return {"kind": "C", "value": expr.c}
    if isinstance(expr, _Open):
        return {"kind": "open"}
    if isinstance(expr, _Short):
        return {"kind": "short"}
    if isinstance(expr, Series):
        return {"kind": "series", "terms": [expr_to_dict(t) for t in expr.terms]}
    if isinstance(expr, Parallel):
        return {"kind": "parallel", "terms": [expr_to_dict(t) for t in expr.terms]}
    if isinstance(expr, Scaled):
        return {"kind": "scaled", "term": expr_to_dict(expr.term), "factor": expr.factor}
    if isinstance(expr, Model) and expr.source:
        return {"kind": "model", "path": expr.source}
    raise ValueError(f"{type(expr).__name__} has no JSON form")


def load_network(path):
    """Read a network description ``{"z_grid": expr, "z_inv": expr, "z_shunt": expr}``."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    branches = {k: expr_from_dict(data[k], path.parent) if k in data else OPEN
                for k in ("z_grid", "z_inv", "z_shunt")}
    return HarmonicNetwork(**branches)


def network_to_dict(net):
    return {k: expr_to_dict(getattr(net, k)) for k in ("z_grid", "z_inv", "z_shunt")}
