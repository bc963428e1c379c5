import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TWO_PI
from gridres.errors import InvalidRange
from gridres.network import (
    OPEN,
    Capacitor,
    HarmonicNetwork,
    Inductor,
    LclParams,
    Parallel,
    Resistor,
    Scaled,
    Series,
    eval_expr,
    pcc_background_voltage,
)
from gridres.resonance import (
    PARALLEL,
    SERIES,
    MagnificationMap,
    branch_count_sweep,
    dominant_parallel,
    magnification_map,
    resonance_drift,
    scan_resonances,
)


def f0(l, c):
    return 1 / (TWO_PI * math.sqrt(l * c))


def series_rlc(r, l, c):
    return Series(Resistor(r), Inductor(l), Capacitor(c))


def parallel_rlc(r, l, c):
    return Parallel(Resistor(r), Inductor(l), Capacitor(c))


# --- scan examples ------------------------------------------------------------

def test_series_rlc():
    pts = scan_resonances(series_rlc(1, 1e-3, 10e-6), 100, 3000, 1)
    assert len(pts) == 1
    p = pts[0]
    assert p.kind == SERIES
    assert abs(p.frequency - 1591.55) <= 0.02
    assert p.magnitude == pytest.approx(1.0, rel=1e-6)
    assert not p.classification_conflict


def test_resistor_has_none():
    assert scan_resonances(Resistor(5), 1, 1000, 1) == []


def test_parallel_rlc():
    pts = scan_resonances(parallel_rlc(1000, 1e-3, 100e-6), 1, 1000, 1)
    assert [p.kind for p in pts] == [PARALLEL]
    assert abs(pts[0].frequency - 503.29) <= 0.02
    assert pts[0].magnitude == pytest.approx(1000, rel=1e-6)


def test_q_estimate_parallel_rlc():
    r, l, c = 50.0, 1e-3, 100e-6
    q = r * math.sqrt(c / l)
    p, = scan_resonances(parallel_rlc(r, l, c), 1, 1000, 1)
    assert p.q_estimate == pytest.approx(q, rel=0.05)


def test_q_absent_when_band_leaves_range():
    # Q ~ 6 puts the -3 dB edges ~40 Hz either side, outside the 50 Hz window
    p, = scan_resonances(parallel_rlc(20.0, 1e-3, 100e-6), 480, 530, 1, prominence_min=1.01)
    assert p.q_estimate is None


def test_bad_range():
    for args in [(10, 5, 1), (1, 10, 0), (1, 10, -1)]:
        with pytest.raises(InvalidRange):
            scan_resonances(Resistor(1), *args)
    with pytest.raises(InvalidRange):
        scan_resonances(Resistor(1), 1, 10, 1, prominence_min=0.5)


def test_exact_singularity_recorded_as_infinite_parallel():
    # admittances cancel exactly at 100 Hz only
    from gridres.network import Func
    node = Parallel(Resistor(1.0), Func(lambda f: np.where(f == 100.0, -1.0, 10.0)))
    p, = scan_resonances(node, 1, 200, 1)
    assert p.kind == PARALLEL and p.frequency == 100.0
    assert p.magnitude == math.inf and p.prominence == math.inf


@given(st.floats(-4, -1), st.floats(1.3, 2.95), st.sampled_from(["series", "parallel"]),
       st.sampled_from([0.5, 1.0, 2.0]))
@settings(max_examples=40, deadline=None)
def test_random_lc_matches_closed_form(log_l, log_f, kind, step):
    l = 10 ** log_l
    f_target = 10 ** log_f
    c = 1 / ((TWO_PI * f_target) ** 2 * l)
    z0 = math.sqrt(l / c)
    expr = series_rlc(0.01 * z0, l, c) if kind == "series" else parallel_rlc(100 * z0, l, c)
    pts = [p for p in scan_resonances(expr, 1, 1000, step) if p.kind == kind]
    assert len(pts) == 1
    assert abs(pts[0].frequency - f0(l, c)) <= max(0.02, step / 50)


@given(st.floats(-3, 3), st.sampled_from([0, 1, 2]))
@settings(max_examples=30, deadline=None)
def test_scale_invariance(log_k, which):
    k = 10 ** log_k
    exprs = [
        series_rlc(0.5, 2e-3, 50e-6),
        parallel_rlc(200, 1e-3, 100e-6),
        Parallel(Series(Inductor(1e-3), Resistor(0.1)), series_rlc(0.2, 2e-3, 400e-6)),
    ]
    base = scan_resonances(exprs[which], 1, 1000, 1)
    scaled = scan_resonances(Scaled(exprs[which], k), 1, 1000, 1)
    assert [p.kind for p in base] == [p.kind for p in scaled]
    for a, b in zip(base, scaled):
        assert abs(a.frequency - b.frequency) <= 0.01
        assert b.prominence == pytest.approx(a.prominence, rel=1e-6)
        assert b.magnitude == pytest.approx(k * a.magnitude, rel=1e-6)


NETS = [
    Parallel(Series(Inductor(1e-3), Resistor(0.1)), series_rlc(0.2, 2e-3, 400e-6)),
    Series(Resistor(0.5), parallel_rlc(40, 3e-3, 60e-6), parallel_rlc(80, 1e-3, 30e-6)),
    Parallel(Inductor(5e-3), series_rlc(1, 1e-3, 300e-6), series_rlc(1, 1e-3, 30e-6)),
]


@pytest.mark.parametrize("net", NETS)
@pytest.mark.parametrize("step", [1.0, 2.5])
def test_extrema_verified_and_local(net, step):
    pts = scan_resonances(net, 1, 1000, step)
    assert pts
    for p in pts:
        m = abs(eval_expr(net, p.frequency))
        left = abs(eval_expr(net, max(p.frequency - step, 0.0)))
        right = abs(eval_expr(net, p.frequency + step))
        if p.kind == SERIES:
            assert m <= left and m <= right
        else:
            assert m >= left and m >= right
        assert p.prominence >= 1.5
        # refinement stays inside the bracketing cells of a grid point
        k = round((p.frequency - 1) / step)
        assert abs(p.frequency - (1 + k * step)) <= step


def test_conflict_flag_on_resistive_background():
    # a negative-slope reactance crossing with a |Z| minimum can only come from
    # data, so fake it with a callable impedance
    def z(f):
        f = np.asarray(f, float)
        return 1 + (f - 300) ** 2 / 1e3 - 1j * (f - 300) / 100

    p, = scan_resonances(z, 1, 1000, 1)
    assert p.kind == SERIES and p.classification_conflict


def test_dominant_parallel_tie_breaks_low():
    from gridres.resonance import ResonancePoint
    a = ResonancePoint(300.0, PARALLEL, 1.0, 4.0)
    b = ResonancePoint(200.0, PARALLEL, 1.0, 4.0)
    c = ResonancePoint(100.0, SERIES, 1.0, 9.0)
    assert dominant_parallel([a, b, c]) is b
    assert dominant_parallel([c]) is None


# --- drift and branch count ------------------------------------------------------

def test_drift_two_to_one():
    c = 100e-6
    lcl = LclParams(1e-3, 1e-9, c)
    res = resonance_drift({"a": Inductor(1e-3), "b": Inductor(4e-3)}, lcl, inv_z=OPEN, f_min=1,
                          f_max=1000, step=1)
    fa, fb = res.dominant["a"].frequency, res.dominant["b"].frequency
    assert fa / fb == pytest.approx(2.0, rel=1e-4)
    assert fa == pytest.approx(f0(1e-3, c), abs=0.02)
    assert res.f_lowest == fb and res.f_highest == fa


def test_drift_single_and_identical():
    lcl = LclParams(1e-3, 0.5e-3, 100e-6, rd=0.5)
    one = resonance_drift({"x": Inductor(2e-3)}, lcl)
    assert one.f_lowest is not None
    assert one.f_lowest == one.f_highest and one.drift == 0
    same = resonance_drift([("p", Inductor(2e-3)), ("q", Inductor(2e-3))], lcl)
    assert same.drift == 0
    with pytest.raises(ValueError):
        resonance_drift({}, lcl)


def test_branch_sqrt_law():
    L, C = 10e-3, 20e-6
    rows = branch_count_sweep(Capacitor(C), Inductor(L), [1, 2, 4, 9])
    f = [r.frequency for r in rows]
    for r, n in zip(rows, [1, 2, 4, 9]):
        assert r.status == "ok"
        assert r.frequency == pytest.approx(f0(L, n * C), abs=0.02)
    assert f[2] == pytest.approx(f[0] / 2, abs=0.03)
    assert all(a > b for a, b in zip(f, f[1:]))


def test_branch_resistive_no_resonance():
    rows = branch_count_sweep(Resistor(10), Inductor(1e-3), [1, 3])
    assert [r.frequency for r in rows] == [None, None]
    assert all(r.status.startswith("no_resonance") for r in rows)


# --- magnification maps --------------------------------------------------------

def test_map_resistive_all_ones():
    net = HarmonicNetwork(Resistor(2), Resistor(3), Resistor(6))
    m = magnification_map({"r": net}, 50, range(1, 8))
    assert all(c.gain == pytest.approx(1.0, abs=1e-15) and c.status == "ok" for c in m.cells)


def test_map_tank_at_third():
    f1, q = 50.0, 50.0
    l = 1e-3
    c = 1 / ((TWO_PI * 3 * f1) ** 2 * l)
    r = q * math.sqrt(l / c)
    net = HarmonicNetwork(OPEN, OPEN, parallel_rlc(r, l, c))
    m = magnification_map({"s": net}, f1, range(1, 8))
    row = m.row("s")

    def brute(h):
        w = TWO_PI * h * f1
        return abs(1 / (1 / r + 1 / (1j * w * l) + 1j * w * c))

    for h in range(1, 8):
        assert row[h] == pytest.approx(brute(h) / brute(1), rel=1e-12)
    assert row[1] == 1.0
    assert row[3] >= 10 * row[2] and row[3] >= 10 * row[4]


def test_map_background_sink():
    f1 = 50.0
    l = 2e-3
    c = 1 / ((TWO_PI * 3 * f1) ** 2 * l)
    net = HarmonicNetwork(Series(Resistor(0.05), Inductor(1e-3)), OPEN,
                          series_rlc(0.02, l, c))
    m = magnification_map({"g": net}, f1, range(1, 8), source="background")
    row = m.row("g")
    for h in range(1, 8):
        assert row[h] == pytest.approx(abs(pcc_background_voltage(net, 1.0, h * f1).v_pcc), rel=1e-12)
    assert min(row, key=row.get) == 3


def test_map_ordering_and_failures():
    bad = HarmonicNetwork(Capacitor(1e-3), OPEN, OPEN)
    good = HarmonicNetwork(Resistor(1))
    m = magnification_map({10: good, 2: good, 1: bad}, 50, [3, 1])
    assert [(c.row_key, c.order) for c in m.cells] == [(1, 1), (1, 3), (2, 1), (2, 3), (10, 1), (10, 3)]
    m2 = magnification_map({"b": good, "a": good}, 50, [1])
    assert [c.row_key for c in m2.cells] == ["a", "b"]
    # a background map needs a non-open grid branch; the row fails but the map survives
    m3 = magnification_map({"x": HarmonicNetwork(OPEN, Resistor(1))}, 50, [1, 2], source="background")
    assert all(c.status.startswith("failed") and math.isnan(c.gain) for c in m3.cells)
    assert m3.to_csv().splitlines()[0] == "row_key,order,gain,status"
    assert isinstance(m3, MagnificationMap)


def test_map_rejects_bad_args():
    net = HarmonicNetwork(Resistor(1))
    with pytest.raises(ValueError):
        magnification_map({"a": net}, 50, [])
    with pytest.raises(ValueError):
        magnification_map({"a": net}, 0, [1])
    with pytest.raises(ValueError):
        magnification_map({"a": net}, 50, [1], source="sideways")


# --- transfer zeros ------------------------------------------------------------

def test_background_minima_match_shunt_series_resonances():
    shunt = Parallel(series_rlc(0.05, 2e-3, 400e-6), series_rlc(0.05, 1e-3, 60e-6))
    net = HarmonicNetwork(Resistor(1.0), OPEN, shunt)
    step = 1.0
    grid = np.arange(1.0, 1001.0, step)
    v = np.array([abs(pcc_background_voltage(net, 1.0, f).v_pcc) for f in grid])
    minima = [grid[i] for i in range(1, len(grid) - 1) if v[i] < v[i - 1] and v[i] < v[i + 1]]
    series = [p.frequency for p in scan_resonances(shunt, 1, 1000, step) if p.kind == SERIES]
    assert len(minima) == len(series) == 2
    for a, b in zip(minima, series):
        assert abs(a - b) <= step
