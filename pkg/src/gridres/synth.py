"""
Seeded synthetic sweep sets standing in for field measurements.

Every regular snapshot is a damped RLC ladder seen from the PCC:

    R_load || (R_g + L_g) || (R_t + L_t + C_t)

The series trap (R_t, L_t, C_t) is tuned to `plunge_hz` in every snapshot
with a trap resistance that varies from snapshot to snapshot, so |Z| at the
plunge spreads by at least `spread`. Between the grid/trap parallel
resonance and the plunge the reactance is negative. The last snapshot is a
deliberate outlier: same topology with the whole impedance scaled up.
"""
from __future__ import annotations

import math

import numpy as np

from .ingest import ImpedanceSweep, common_grid
from .network import Capacitor, Inductor, Parallel, Resistor, Scaled, Series

TWO_PI = 2.0 * math.pi


def ladder(r_load, r_g, l_g, r_t, l_t, plunge_hz):
    c_t = 1.0 / ((TWO_PI * plunge_hz) ** 2 * l_t)
    return Parallel(
        Resistor(r_load),
        Series(Resistor(r_g), Inductor(l_g)),
        Series(Resistor(r_t), Inductor(l_t), Capacitor(c_t)),
    )


def generate_sweeps(n=24, seed=0, spread=20.0, plunge_hz=600.0, f_max=1000.0, step=5.0,
                    r_trap_min=0.1, outlier_scale=5.0):
    """Deterministic list of `n` ImpedanceSweep objects; the last is the outlier.

    The regular snapshots satisfy max|Z| / min|Z| >= 1.05 * `spread` at
    `plunge_hz`, which must lie on the sample grid.
    """
    if n < 3:
        raise ValueError("need at least 3 snapshots (two regular plus the outlier)")
    if not spread >= 1:
        raise ValueError("spread must be >= 1")
    rng = np.random.default_rng(seed)
    freqs = common_grid(0.0, float(f_max), float(step))
    n_reg = n - 1
    params = [dict(r_load=rng.uniform(40.0, 60.0), r_g=rng.uniform(0.5, 1.5),
                   l_g=rng.uniform(8e-3, 12e-3), l_t=rng.uniform(1.5e-3, 2.5e-3))
              for _ in range(n)]
    r_hi = r_trap_min * spread * 1.1
    r_trap = np.exp(rng.uniform(math.log(r_trap_min), math.log(r_hi), n_reg))
    r_trap[0] = r_trap_min

    # raise the largest trap resistance until the plunge spread is met
    target = 1.05 * spread
    r_trap[1] = r_hi
    for _ in range(60):
        mags = [abs(ladder(**params[k], r_t=float(r_trap[k]), plunge_hz=plunge_hz)(plunge_hz))
                for k in range(n_reg)]
        ratio = max(mags) / min(mags)
        if ratio >= target:
            break
        r_trap[1] *= 1.01 * target / ratio
    else:
        raise ValueError(f"spread {spread!r} is not reachable with this ladder")
    r_out = math.sqrt(r_trap_min * r_hi)

    width = len(str(n))
    sweeps = []
    for k in range(n):
        meta = {"synthetic": True, "seed": int(seed), "role": "regular"}
        if k < n_reg:
            z = ladder(**params[k], r_t=float(r_trap[k]), plunge_hz=plunge_hz)
        else:
            z = Scaled(ladder(**params[k], r_t=r_out, plunge_hz=plunge_hz), outlier_scale)
            meta["role"] = "outlier"
        sweeps.append(ImpedanceSweep(f"snap{k + 1:0{width}d}", freqs, z(freqs), meta,
                                     f_range=(0.0, float(f_max))))
    return sweeps
