"""
Rational pole-residue fitting of driving-point impedance sweeps.

The model is

    Z(s) = d + s*e + sum_i r_i / (s - p_i)

with complex poles stored once (upper half plane representative) and their
conjugate partners implied. Poles are located by iterated weighted linear
least squares with pole relocation (vector fitting): the data is divided by
an auxiliary scaling function sigma(s) sharing the current poles, the zeros
of sigma become the next poles, and a last fixed-pole solve gives residues,
d and e.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidOrder, InvalidRange, SingularSystem, TooFewSamples, UnstablePole

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
W_FLOOR = 1e-6
AUTO_ORDERS = tuple(range(2, 21, 2))


@dataclass(frozen=True, eq=False)
class RationalModel:
    """Stable pole-residue impedance model.

    Parameters
    ----------
    d : float
        Constant term (ohm).
    e : float
        Proportional term (ohm*s).
    poles : array_like of complex
        Poles in rad/s. Real poles have zero imaginary part; a complex pair
        is represented by its member with positive imaginary part.
    residues : array_like of complex
        Residues aligned with `poles` (ohm*rad/s).
    """

    d: float
    e: float = 0.0
    poles: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    residues: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))

    def __post_init__(self):
        p = np.array(self.poles, dtype=complex).reshape(-1)
        r = np.array(self.residues, dtype=complex).reshape(-1)
        if p.shape != r.shape:
            raise ValueError("poles and residues must have the same length")
        # store one member per conjugate pair, the one in the upper half plane
        flip = p.imag < 0
        p[flip] = p[flip].conj()
        r[flip] = r[flip].conj()
        if np.any(p.real >= 0):
            raise UnstablePole(f"poles must have negative real part: {p[p.real >= 0]}")
        real = p.imag == 0
        if np.any(r[real].imag != 0):
            raise ValueError("real poles need real residues")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "e", float(self.e))
        object.__setattr__(self, "poles", p)
        object.__setattr__(self, "residues", r)

    @property
    def paired(self):
        """True where a pole stands for a complex-conjugate pair."""
        return self.poles.imag != 0

    @property
    def order(self):
        return int(np.sum(np.where(self.paired, 2, 1)))

    def all_poles(self):
        """Every pole, conjugates included."""
        return np.concatenate([self.poles, self.poles[self.paired].conj()])

    def __call__(self, frequency):
        return evaluate(self, frequency)

    def to_dict(self):
        cplx = lambda a: [{"re": float(v.real), "im": float(v.imag)} for v in a]
        return {"d": self.d, "e": self.e, "poles": cplx(self.poles),
                "residues": cplx(self.residues)}

    @classmethod
    def from_dict(cls, data):
        cplx = lambda a: [complex(v["re"], v["im"]) for v in a]
        return cls(data["d"], data.get("e", 0.0), cplx(data.get("poles", [])),
                   cplx(data.get("residues", [])))


def evaluate_s(model, s):
    """Z(s) at complex frequency `s` (rad/s), scalar or array."""
    s = np.asarray(s, dtype=complex)
    z = model.d + s * model.e + np.zeros_like(s)
    for p, r, pair in zip(model.poles, model.residues, model.paired):
        z = z + r / (s - p)
        if pair:
            z = z + r.conjugate() / (s - p.conjugate())
    return z


def evaluate(model, frequency):
    """Z(j*2*pi*f) for `frequency` in Hz (scalar or array)."""
    z = evaluate_s(model, 1j * TWO_PI * np.asarray(frequency, dtype=float))
    return complex(z) if z.ndim == 0 else z


@dataclass(frozen=True)
class FitReport:
    rms_rel_error: float
    max_rel_error: float
    max_error_frequency: float
    iterations_used: int
    converged: bool
    passivity_violations: tuple = ()
    order: int = 0

    @property
    def passive(self):
        return not self.passivity_violations

    def to_dict(self):
        out = asdict(self)
        out["passivity_violations"] = [list(iv) for iv in self.passivity_violations]
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["passivity_violations"] = tuple(tuple(iv) for iv in data.get("passivity_violations", ()))
        return cls(**data)


def initial_poles(order, f_min, f_max):
    """Starting poles for the relocation iterations (rad/s, conjugates included).

    Complex pairs get imaginary parts log-spaced over [2*pi*f_min, 2*pi*f_max]
    (a single pair sits at the geometric mean) and real parts of -imag/100;
    an odd order adds one real pole at -2*pi*f_min.
    """
    if int(order) != order or order < 1:
        raise InvalidOrder(f"order must be a positive integer, got {order!r} (use order=0 for a d/e-only fit)")
    if not (0 < f_min < f_max):
        raise InvalidRange(f"need 0 < f_min < f_max, got {f_min!r}, {f_max!r}")
    order = int(order)
    npairs = order // 2
    if npairs == 1:
        imag = np.array([TWO_PI * math.sqrt(f_min * f_max)])
    else:
        imag = TWO_PI * np.geomspace(f_min, f_max, npairs)
    poles = []
    for b in imag:
        p = complex(-b / 100.0, b)
        poles += [p, p.conjugate()]
    if order % 2:
        poles.append(complex(-TWO_PI * f_min, 0.0))
    return np.array(poles, dtype=complex)


def _compress(poles):
    poles = np.asarray(poles, dtype=complex)
    return np.concatenate([poles[poles.imag == 0], poles[poles.imag > 0]])


def _basis(s, poles):
    """Real-coefficient basis: one column per real pole, two per pair."""
    cols = []
    for p in poles:
        if p.imag == 0:
            cols.append(1.0 / (s - p))
        else:
            a, b = 1.0 / (s - p), 1.0 / (s - p.conjugate())
            cols.append(a + b)
            cols.append(1j * a - 1j * b)
    return np.column_stack(cols) if cols else np.zeros((len(s), 0), complex)


def _residues_from_coeffs(poles, c):
    res, k = [], 0
    for p in poles:
        if p.imag == 0:
            res.append(complex(c[k], 0.0))
            k += 1
        else:
            res.append(complex(c[k], c[k + 1]))
            k += 2
    return np.array(res, dtype=complex)


def _solve(a, b, *, strict):
    """Least squares on the real-stacked system with unit-norm column scaling.

    With `strict`, numerical rank deficiency raises SingularSystem; otherwise
    the minimum-norm (truncated SVD) solution is returned.
    """
    a = np.vstack([a.real, a.imag])
    b = np.concatenate([b.real, b.imag])
    norms = np.linalg.norm(a, axis=0)
    norms[norms == 0] = 1.0
    x, _, rank, sv = np.linalg.lstsq(a / norms, b, rcond=None)
    if rank < a.shape[1]:
        if strict:
            raise SingularSystem(
                f"least-squares system has rank {rank} < {a.shape[1]} unknowns; "
                "model order is probably too high for the data"
            )
        log.debug("relocation system rank %d < %d, using minimum-norm solution", rank, a.shape[1])
    return x / norms


def _weights(z):
    return 1.0 / np.maximum(np.abs(z), W_FLOOR)


def _fit_residues(s, z, w, poles, include_e):
    phi = _basis(s, poles)
    cols = [phi, np.ones((len(s), 1))]
    if include_e:
        cols.append(s[:, None])
    a = np.hstack(cols) * w[:, None]
    x = _solve(a, z * w, strict=True)
    n = phi.shape[1]
    d = x[n]
    e = x[n + 1] if include_e else 0.0
    return RationalModel(d, e, poles, _residues_from_coeffs(poles, x[:n]))


def _relocate(s, z, w, poles, include_e, tol, eps):
    phi = _basis(s, poles)
    n = phi.shape[1]
    cols = [phi, np.ones((len(s), 1))]
    if include_e:
        cols.append(s[:, None])
    cols.append(-z[:, None] * phi)
    a = np.hstack(cols) * w[:, None]
    x = _solve(a, z * w, strict=False)
    c_sigma = x[-n:]

    # zeros of sigma = eig(A - b c^T) for a real block-diagonal realization of the basis
    amat = np.zeros((n, n))
    bvec = np.zeros(n)
    k = 0
    for p in poles:
        if p.imag == 0:
            amat[k, k] = p.real
            bvec[k] = 1.0
            k += 1
        else:
            re, im = p.real, p.imag
            amat[k:k + 2, k:k + 2] = [[re, im], [-im, re]]
            bvec[k] = 2.0
            k += 2
    zeros = np.linalg.eigvals(amat - np.outer(bvec, c_sigma))

    new = []
    for q in zeros:
        if q.imag < 0:
            continue
        re = q.real
        if re > 0:
            re = -re
        elif re == 0:
            re = -tol * abs(q.imag) - eps
        new.append(complex(re, q.imag))
    return _compress(new)


def _errors(model, s, z, w):
    err = np.abs(evaluate_s(model, s) - z) * w
    return float(np.sqrt(np.mean(err ** 2))), err


def relative_errors(model, sweep):
    """Per-sample weighted relative error |Z_fit - Z| / max(|Z|, floor)."""
    z = sweep.samples
    return np.abs(evaluate(model, sweep.frequencies) - z) * _weights(z)


def fit_rational(sweep, order, include_e=True, max_iter=20, tol=1e-6, check_passivity=True):
    """Fit `sweep` with a stable rational model of the given order.

    Returns
    -------
    model : RationalModel
    report : FitReport
    """
    if int(order) != order or order < 0:
        raise InvalidOrder(f"order must be a non-negative integer, got {order!r}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    order = int(order)
    f = sweep.frequencies
    z = sweep.samples
    if len(f) < 2 * order + 2:
        raise TooFewSamples(f"order {order} needs at least {2 * order + 2} samples, sweep has {len(f)}")
    s = 1j * TWO_PI * f
    w = _weights(z)

    iterations = 0
    if order == 0:
        poles = np.zeros(0, complex)
    else:
        fpos = f[f > 0]
        poles = _compress(initial_poles(order, fpos[0], fpos[-1]))
    model = _fit_residues(s, z, w, poles, include_e)
    rms, err = _errors(model, s, z, w)
    if order > 0:
        eps = TWO_PI * float(f[f > 0][0]) * 1e-9
        while rms >= tol and iterations < max_iter:
            poles = _relocate(s, z, w, poles, include_e, tol, eps)
            iterations += 1
            model = _fit_residues(s, z, w, poles, include_e)
            prev = rms
            rms, err = _errors(model, s, z, w)
            log.debug("order %d iteration %d rms %.3e", order, iterations, rms)
            if abs(prev - rms) < tol / 10:
                break

    k = int(np.argmax(err))
    violations = ()
    if check_passivity:
        lo, hi = float(f[0]), float(f[-1])
        step = (hi - lo) / (10 * len(f))
        violations = tuple(passivity_scan(model, lo, hi, step))
    report = FitReport(
        rms_rel_error=rms,
        max_rel_error=float(err[k]),
        max_error_frequency=float(f[k]),
        iterations_used=iterations,
        converged=bool(rms < tol),
        passivity_violations=violations,
        order=order,
    )
    return model, report


def fit_auto(sweep, tol=1e-3, include_e=True, max_iter=20, orders=AUTO_ORDERS):
    """Raise the order through `orders` until the fit meets `tol`.

    Returns the first converged fit, otherwise the lowest-error one tried.
    """
    best = None
    for n in orders:
        if len(sweep) < 2 * n + 2:
            break
        try:
            model, report = fit_rational(sweep, n, include_e=include_e, max_iter=max_iter, tol=tol)
        except SingularSystem:
            break
        if best is None or report.rms_rel_error < best[1].rms_rel_error:
            best = (model, report)
        if report.converged:
            return model, report
    if best is None:
        raise TooFewSamples(f"sweep {sweep.snapshot_id!r} has too few samples for any order in {orders}")
    return best


def _bisect_re(model, a, b, tol):
    fa = evaluate(model, a).real
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = evaluate(model, m).real
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def passivity_scan(model, f_min, f_max, step):
    """Frequency intervals (Hz) on which Re{Z(j*2*pi*f)} < 0.

    Scans a grid of spacing `step`; interior interval ends are refined by
    bisection to within step/100.
    """
    if not (0 <= f_min < f_max) or not step > 0:
        raise InvalidRange(f"bad scan range {f_min!r}..{f_max!r} step {step!r}")
    n = int(math.floor((f_max - f_min) / step + 1e-9))
    grid = f_min + step * np.arange(n + 1)
    if grid[-1] < f_max:
        grid = np.append(grid, f_max)
    neg = evaluate(model, grid).real < 0
    out = []
    i = 0
    while i < len(grid):
        if not neg[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(grid) and neg[j + 1]:
            j += 1
        lo = grid[0] if i == 0 else _bisect_re(model, grid[i - 1], grid[i], step / 100)
        hi = grid[-1] if j == len(grid) - 1 else _bisect_re(model, grid[j], grid[j + 1], step / 100)
        out.append((float(lo), float(hi)))
        i = j + 1
    return out


def model_to_json(model, report=None):
    data = model.to_dict()
    if report is not None:
        data["report"] = report.to_dict()
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def model_from_json(text):
    """Parse model JSON; returns (model, report or None)."""
    data = json.loads(text)
    report = FitReport.from_dict(data["report"]) if data.get("report") else None
    return RationalModel.from_dict(data), report
