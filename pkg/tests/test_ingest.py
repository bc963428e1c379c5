import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridres.errors import (
    DuplicateFrequency,
    EmptySweep,
    FrequencyOutOfRange,
    GridOutsideSweepRange,
    InsufficientSnapshots,
    MalformedRow,
    NonFiniteSample,
    NonMonotonicFrequency,
)
from gridres.ingest import (
    ImpedanceSweep,
    envelope,
    flag_outliers,
    from_polar,
    load_manifest,
    negative_reactance_ranges,
    parse_sweep,
    serialize_sweep,
    to_polar,
    write_manifest,
    write_sweep,
)

HEADER = "freq_hz,r_ohm,x_ohm\n"


def sweep(x, f=None, r=None, sid="s"):
    x = np.asarray(x, float)
    f = np.arange(1, len(x) + 1) * 100.0 if f is None else np.asarray(f, float)
    r = np.ones_like(x) if r is None else np.asarray(r, float)
    return ImpedanceSweep(sid, f, r + 1j * x)


# --- parse ------------------------------------------------------------------

def test_parse_two_points():
    s = parse_sweep(HEADER + "50,1.0,3.0\n100,1.2,6.1", "a")
    assert len(s) == 2
    assert s.samples[0] == 1 + 3j
    assert s.frequencies.tolist() == [50.0, 100.0]
    assert s.snapshot_id == "a"


def test_parse_crlf_and_stream():
    import io
    s = parse_sweep(io.StringIO("freq_hz,r_ohm,x_ohm\r\n50,1,3\r\n100,1,6\r\n"), "a")
    assert s.samples[1] == 1 + 6j


def test_parse_nonmonotonic_cites_row():
    with pytest.raises(NonMonotonicFrequency, match="line 3"):
        parse_sweep(HEADER + "100,1,1\n50,1,1\n", "a")


@pytest.mark.parametrize("row", ["50,1.0,NaN", "50,inf,1", "50,1,-inf"])
def test_parse_nonfinite(row):
    with pytest.raises(NonFiniteSample):
        parse_sweep(HEADER + row + "\n100,1,1\n", "a")


@pytest.mark.parametrize("text,exc", [
    (HEADER + "50,1,1\n50,2,2\n", DuplicateFrequency),
    (HEADER, EmptySweep),
    ("", EmptySweep),
    (HEADER + "50,1,1\n", EmptySweep),
    (HEADER + "50,abc,1\n100,1,1\n", MalformedRow),
    (HEADER + "50,1\n100,1,1\n", MalformedRow),
    ("f,r,x\n50,1,1\n100,1,1\n", MalformedRow),
    (HEADER + "50,1,1\n1500,1,1\n", FrequencyOutOfRange),
])
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse_sweep(text, "a")


def test_parse_allow_extended():
    s = parse_sweep(HEADER + "50,1,1\n1500,1,1\n", "a", allow_extended=True)
    assert s.frequencies[-1] == 1500


def test_zero_frequency_reactance_warns():
    with pytest.warns(UserWarning, match="0 Hz"):
        s = parse_sweep(HEADER + "0,1,0.5\n50,1,1\n", "a")
    assert s.samples[0] == 1 + 0.5j


def test_sweep_is_immutable():
    s = sweep([1, 2])
    with pytest.raises(ValueError):
        s.samples[0] = 0


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def sweeps(draw, min_size=2, max_size=20):
    n = draw(st.integers(min_size, max_size))
    steps = draw(st.lists(st.floats(1e-3, 50.0), min_size=n, max_size=n))
    f = np.cumsum(steps)
    f = f[f <= 1000.0]
    if len(f) < 2:
        f = np.array([1.0, 2.0])
    n = len(f)
    r = draw(st.lists(finite, min_size=n, max_size=n))
    x = draw(st.lists(finite, min_size=n, max_size=n))
    return ImpedanceSweep("h", f, np.array(r) + 1j * np.array(x))


@given(sweeps())
def test_serialize_roundtrip_bit_exact(s):
    back = parse_sweep(serialize_sweep(s), "h")
    assert np.array_equal(back.frequencies, s.frequencies)
    assert np.array_equal(back.samples, s.samples)


def test_file_and_manifest_roundtrip(tmp_path):
    a, b = sweep([1, -1], sid="a"), sweep([2, 3], sid="b")
    (tmp_path / "d").mkdir()
    write_sweep(a, tmp_path / "d" / "a.csv")
    write_sweep(b, tmp_path / "b.csv")
    write_manifest([{"id": "a", "path": "d/a.csv", "meta": {"bus": "PCC"}},
                    {"id": "b", "path": str(tmp_path / "b.csv"), "meta": {}}], tmp_path / "m.json")
    got = load_manifest(tmp_path / "m.json")
    assert [s.snapshot_id for s in got] == ["a", "b"]
    assert got[0].metadata == {"bus": "PCC"}
    assert np.array_equal(got[1].samples, b.samples)


# --- polar ------------------------------------------------------------------

@pytest.mark.parametrize("z,mag,ang", [
    (3 + 4j, 5.0, math.atan2(4, 3)),
    (-1 + 0j, 1.0, math.pi),
    (complex(-1, -0.0), 1.0, math.pi),
    (0j, 0.0, 0.0),
    (complex(-0.0, 0.0), 0.0, 0.0),
])
def test_polar_cases(z, mag, ang):
    s = ImpedanceSweep("p", [1, 2], [z, 1])
    p = to_polar(s)[0]
    assert p.magnitude == pytest.approx(mag)
    assert p.angle == pytest.approx(ang)
    assert -math.pi < p.angle <= math.pi


def test_polar_order_preserved():
    s = sweep([4, -4, 0], r=[3, 3, 2])
    assert [p.frequency for p in to_polar(s)] == [100, 200, 300]


@given(sweeps())
def test_polar_roundtrip(s):
    back = from_polar(to_polar(s))
    scale = np.maximum(np.abs(s.samples), 1e-300)
    assert np.all(np.abs(back - s.samples) <= 1e-12 * scale + 1e-300)


# --- negative reactance -----------------------------------------------------

def test_negative_reactance_hand_interpolation():
    # crossings: 100 + 100*1/(1+1) = 150 ; 300 + 100*2/(2+1) = 366.666...
    out = negative_reactance_ranges(sweep([1, -1, -2, 1]))
    assert len(out) == 1
    lo, hi = out[0]
    assert lo == pytest.approx(150.0, rel=1e-12)
    assert hi == pytest.approx(300.0 + 200.0 / 3.0, rel=1e-12)


def test_negative_reactance_none_and_all():
    assert negative_reactance_ranges(sweep([1, 2, 3])) == []
    assert negative_reactance_ranges(sweep([-1, -2, -3])) == [(100.0, 300.0)]


def test_negative_reactance_zero_sample_is_boundary():
    assert negative_reactance_ranges(sweep([0, -1, 0, 1])) == [(100.0, 300.0)]


@given(sweeps())
def test_negative_reactance_invariants(s):
    ivs = negative_reactance_ranges(s)
    f, x = s.frequencies, s.samples.imag
    for (a, b), (c, _) in zip(ivs, ivs[1:]):
        # closed neighbours may only touch at a non-negative sample
        assert b < c or (b == c and np.all(x[f == b] >= 0) and np.any(f == b))
    for a, b in ivs:
        assert a <= b
    f, x = s.frequencies, s.samples.imag
    for fk, xk in zip(f, x):
        inside = any(a < fk < b for a, b in ivs)
        on_edge = any(fk in (a, b) for a, b in ivs)
        if inside:
            assert xk < 0
        elif not on_edge:
            assert xk >= 0
    # every negative sample is covered
    for fk, xk in zip(f, x):
        if xk < 0:
            assert any(a <= fk <= b for a, b in ivs)


# --- envelope ---------------------------------------------------------------

def flat(mag, sid, f=(0, 500, 1000)):
    return ImpedanceSweep(sid, list(f), [mag] * len(f))


def test_envelope_flat_ratio():
    env = envelope([flat(1.0, "a"), flat(20j, "b")], 10.0)
    assert np.allclose(env.spread_ratio, 20.0)
    assert env.frequencies[0] == 0 and env.frequencies[-1] == 1000
    assert len(env.frequencies) == 101


def test_envelope_identical():
    env = envelope([flat(3 + 4j, "a"), flat(3 + 4j, "b")], 25.0)
    assert np.all(env.spread_ratio == 1.0)


def test_envelope_zero_min_is_infinite():
    env = envelope([flat(0j, "a"), flat(2.0, "b")], 100.0)
    assert np.all(np.isinf(env.spread_ratio))


def test_envelope_errors():
    with pytest.raises(InsufficientSnapshots):
        envelope([flat(1.0, "a")], 1.0)
    with pytest.raises(GridOutsideSweepRange):
        envelope([flat(1.0, "a"), flat(1.0, "b")], 1.0, f_stop=2000.0)
    with pytest.raises(GridOutsideSweepRange):
        envelope([flat(1.0, "a"), flat(1.0, "b", f=(600, 700))], 1.0, f_start=0.0)


def tank_sweeps(k_values, f):
    """Parallel RLC tanks scaled in L and C, sampled on `f`."""
    out = []
    for i, k in enumerate(k_values):
        R, L, C = 50.0, 1e-3 * k, 100e-6 / k ** 0.5
        w = 2 * math.pi * f
        z = 1 / (1 / R + 1 / (1j * w * L) + 1j * w * C)
        out.append(ImpedanceSweep(f"t{i}", f, z))
    return out


def test_envelope_worst_matches_brute_force():
    f = np.arange(1.0, 1001.0, 1.0)
    sw = tank_sweeps([0.5, 1.0, 1.7, 3.0], f)
    mags = np.vstack([np.abs(s.samples) for s in sw])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = mags.max(0) / mags.min(0)
    ratios[~np.isfinite(ratios)] = -1
    k = int(np.argmax(ratios))
    for step in (1.0, 2.0, 5.0):
        env = envelope(sw, step)
        assert abs(env.worst_ratio[0] - f[k]) <= step
        assert env.worst_ratio[1] <= ratios[k] * (1 + 1e-12)


@given(st.lists(sweeps(), min_size=2, max_size=4))
@settings(max_examples=40, deadline=None)
def test_envelope_bounds(ss):
    lo = max(s.frequencies[0] for s in ss)
    hi = min(s.frequencies[-1] for s in ss)
    if hi <= lo:
        return
    env = envelope(ss, (hi - lo) / 17.0)
    for s in ss:
        m = np.abs(s.interpolate(env.frequencies))
        assert np.all(env.z_min <= m) and np.all(m <= env.z_max)
    good = env.z_min > 0
    assert np.all(env.spread_ratio[good] >= 1.0)


def test_envelope_csv_header():
    env = envelope([flat(1.0, "a"), flat(2.0, "b")], 500.0)
    lines = env.to_csv().splitlines()
    assert lines[0] == "freq_hz,zmin_ohm,zmax_ohm,ratio"
    assert lines[1] == "0.0,1.0,2.0,2.0"


# --- outliers ---------------------------------------------------------------

def test_outliers_identical():
    ss = [flat(2.0, f"s{i}") for i in range(5)]
    res = flag_outliers(ss)
    assert all(o.score == 0 and not o.flagged for o in res)


def test_outlier_scaled_tenfold():
    f = np.linspace(1, 1000, 50)
    base = tank_sweeps([1.0], f)[0].samples
    ss = [ImpedanceSweep(f"s{i}", f, base) for i in range(4)]
    ss.append(ImpedanceSweep("odd", f, base * 10))
    res = {o.snapshot_id: o for o in flag_outliers(ss)}
    assert res["odd"].score == pytest.approx(1.0, abs=1e-12)
    assert res["odd"].flagged
    assert not any(res[f"s{i}"].flagged for i in range(4))


def test_outliers_needs_three():
    with pytest.raises(InsufficientSnapshots):
        flag_outliers([flat(1.0, "a"), flat(1.0, "b")])


def test_outliers_mixed_grids():
    a = ImpedanceSweep("a", [0, 500, 1000], [1, 1, 1])
    b = ImpedanceSweep("b", [0, 250, 1000], [1, 1, 1])
    c = ImpedanceSweep("c", [0, 1000], [100, 100])
    res = flag_outliers([a, b, c])
    assert [o.flagged for o in res] == [False, False, True]
