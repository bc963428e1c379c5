"""
Command-line front end: ``gridres <subcommand> [options]``.

Exit codes: 0 success, 1 failed verdict (``comply``) or total batch failure,
2 configuration or I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import GridResError
from .fitting import fit_auto, fit_rational, model_from_json, model_to_json
from .harmonics import (
    CURRENT,
    INVERTER_SIDE,
    HarmonicSpectrum,
    check_compliance,
    default_limits,
    load_limits,
    percent_of_fundamental,
    propagate,
    read_spectrum,
    thd,
)
from .ingest import (
    envelope,
    flag_outliers,
    load_manifest,
    negative_reactance_ranges,
    write_manifest,
    write_sweep,
)
from .network import LclParams, Model, expr_from_dict, lcl_network, load_network
from .resonance import (
    BACKGROUND,
    INJECTION,
    branch_count_sweep,
    dominant_parallel,
    magnification_map,
    resonance_drift,
    scan_resonances,
)
from .svg import line_chart
from .synth import generate_sweeps

log = logging.getLogger("gridres")

DEFAULT_SPECTRUM = {1: 1.0, 3: 0.01, 5: 0.01, 7: 0.01}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Effective settings of one run; see README for every key."""

    manifest: str | None = None
    models: str | None = None
    out: str = "out"
    fmin: float = 1.0
    fmax: float = 1000.0
    step: float = 1.0
    order: object = "auto"
    tol: float = 1e-3
    max_iter: int = 20
    include_e: bool = True
    lcl: dict = field(default_factory=lambda: {"l1": 1e-3, "l2": 0.5e-3, "c": 50e-6, "rd": 0.5})
    inv_z: dict = field(default_factory=lambda: {"kind": "short"})
    limits: str | None = None
    spectrum: str | None = None
    network: str | None = None
    location: str = INVERTER_SIDE
    f1: float = 50.0
    orders: list = field(default_factory=lambda: list(range(1, 14)))
    source: str = INJECTION
    branch_base: dict = field(default_factory=lambda: {"kind": "C", "value": 20e-6})
    branch_grid: dict = field(default_factory=lambda: {"kind": "L", "value": 10e-3})
    n_values: list = field(default_factory=lambda: [1, 2, 4, 9])
    prominence: float = 1.5
    seed: int = 0
    n_snapshots: int = 24
    spread: float = 20.0
    synth_step: float = 5.0
    allow_extended: bool = False
    from_csv: bool = False
    through_network: bool = False
    jobs: int = 1

    PATH_KEYS = ("manifest", "models", "limits", "spectrum", "network")

    def validate(self):
        if not (0 <= self.fmin < self.fmax):
            raise ConfigError(f"need 0 <= fmin < fmax, got {self.fmin} .. {self.fmax}")
        if not self.step > 0:
            raise ConfigError("step must be positive")
        if self.order != "auto" and not (isinstance(self.order, int) and self.order >= 0):
            raise ConfigError(f"order must be 'auto' or a non-negative integer, got {self.order!r}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not self.f1 > 0:
            raise ConfigError("f1 must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.source not in (INJECTION, BACKGROUND):
            raise ConfigError(f"source must be injection or background, got {self.source!r}")
        try:
            LclParams.from_dict(self.lcl)
        except (GridResError, TypeError) as exc:
            raise ConfigError(f"lcl: {exc}") from None

    def frozen(self):
        data = dataclasses.asdict(self)
        data.pop("out")
        return data


def _resolve(value, base):
    if value is None:
        return None
    p = Path(value)
    return str((p if p.is_absolute() else Path(base) / p).resolve())


def load_config(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"config {path}: unknown keys {sorted(unknown)}")
    for key in RunConfig.PATH_KEYS:
        if data.get(key) is not None:
            data[key] = _resolve(data[key], path.parent)
    return data


# --- helpers ----------------------------------------------------------------

def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _pmap(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _num(v):
    return "" if v is None else repr(float(v))


def _load_sweeps(cfg):
    if not cfg.manifest:
        raise ConfigError("no manifest given (--manifest or config 'manifest')")
    try:
        return load_manifest(cfg.manifest, allow_extended=cfg.allow_extended)
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {cfg.manifest}: {exc}") from None


def _models_dir(cfg):
    return Path(cfg.models) if cfg.models else Path(cfg.out) / "models"


def _load_models(cfg):
    d = _models_dir(cfg)
    files = sorted(d.glob("*.json")) if d.is_dir() else []
    if not files:
        raise ConfigError(f"no fitted models found in {d}")
    models = {}
    for p in files:
        model, _ = model_from_json(p.read_text(encoding="utf-8"))
        models[p.stem] = model
    return models


def _grid_impedances(cfg):
    """Snapshot id -> evaluable grid impedance (fitted models or raw sweeps)."""
    if cfg.from_csv:
        return {s.snapshot_id: s for s in _load_sweeps(cfg)}
    return {k: Model(m) for k, m in _load_models(cfg).items()}


def _resonance_rows(sid, points):
    return [f"{sid},{p.kind},{p.frequency!r},{_num(p.magnitude)},{_num(p.prominence)},{_num(p.q_estimate)}"
            for p in points]


RES_HEADER = "snapshot_id,kind,freq_hz,magnitude_ohm,prominence,q"


# --- subcommands ------------------------------------------------------------

def cmd_synth(cfg):
    out = Path(cfg.out)
    sweeps = generate_sweeps(n=cfg.n_snapshots, seed=cfg.seed, spread=cfg.spread,
                             f_max=1000.0, step=cfg.synth_step)
    entries = []
    for s in sweeps:
        rel = f"sweeps/{s.snapshot_id}.csv"
        (out / "sweeps").mkdir(parents=True, exist_ok=True)
        write_sweep(s, out / rel)
        entries.append({"id": s.snapshot_id, "path": rel, "meta": s.metadata})
    write_manifest(entries, out / "manifest.json")
    log.info("wrote %d synthetic sweeps to %s", len(sweeps), out)
    return 0


def cmd_envelope(cfg):
    out = Path(cfg.out)
    sweeps = _load_sweeps(cfg)
    try:
        env = envelope(sweeps, cfg.step, cfg.fmin, cfg.fmax)
    except GridResError as exc:
        raise ConfigError(str(exc)) from None
    _write(out / "envelope.csv", env.to_csv())
    lines = ["snapshot_id,score,flagged"]
    if len(sweeps) >= 3:
        for o in flag_outliers(sweeps):
            lines.append(f"{o.snapshot_id},{o.score!r},{str(o.flagged).lower()}")
    _write(out / "outliers.csv", "\n".join(lines) + "\n")
    lines = ["snapshot_id,f_lo_hz,f_hi_hz"]
    for s in sweeps:
        for lo, hi in negative_reactance_ranges(s):
            lines.append(f"{s.snapshot_id},{lo!r},{hi!r}")
    _write(out / "negative_reactance.csv", "\n".join(lines) + "\n")
    f, r = env.worst_ratio
    _write(out / "envelope_summary.json", _json({"worst_ratio": r, "worst_ratio_freq_hz": f}))
    _write(out / "envelope.svg", line_chart(
        [("min |Z|", env.frequencies, env.z_min), ("max |Z|", env.frequencies, env.z_max)],
        title="Impedance envelope across snapshots", xlabel="frequency (Hz)", ylabel="|Z| (ohm)", logy=True))
    log.info("worst spread %.3g at %.6g Hz", r, f)
    return 0


def _fit_one(cfg, sweep):
    try:
        if cfg.order == "auto":
            model, report = fit_auto(sweep, tol=cfg.tol, include_e=cfg.include_e, max_iter=cfg.max_iter)
        else:
            model, report = fit_rational(sweep, cfg.order, include_e=cfg.include_e,
                                         max_iter=cfg.max_iter, tol=cfg.tol)
        return sweep.snapshot_id, model, report, "ok"
    except GridResError as exc:
        return sweep.snapshot_id, None, None, f"failed: {type(exc).__name__}: {exc}"


def cmd_fit(cfg):
    out = Path(cfg.out)
    sweeps = _load_sweeps(cfg)
    results = _pmap(lambda s: _fit_one(cfg, s), sweeps, cfg.jobs)
    lines = ["snapshot_id,order,rms_rel_error,max_rel_error,max_error_freq_hz,iterations,converged,passive,status"]
    mdir = _models_dir(cfg)
    ok = 0
    for sid, model, report, status in sorted(results, key=lambda r: r[0]):
        if model is None:
            lines.append(f"{sid},,,,,,,,{status.replace(',', ';')}")
            log.warning("fit of %s %s", sid, status)
            continue
        ok += 1
        _write(mdir / f"{sid}.json", model_to_json(model, report))
        lines.append(f"{sid},{report.order},{report.rms_rel_error!r},{report.max_rel_error!r},"
                     f"{report.max_error_frequency!r},{report.iterations_used},"
                     f"{str(report.converged).lower()},{str(report.passive).lower()},{status}")
    _write(out / "fit_summary.csv", "\n".join(lines) + "\n")
    log.info("fitted %d/%d snapshots", ok, len(sweeps))
    return 0 if ok else 1


def cmd_resonance(cfg):
    out = Path(cfg.out)
    grids = _grid_impedances(cfg)
    ids = sorted(grids)
    scans = _pmap(lambda k: scan_resonances(grids[k], cfg.fmin, cfg.fmax, cfg.step, cfg.prominence),
                  ids, cfg.jobs)
    lines = [RES_HEADER]
    summary = {}
    for sid, pts in zip(ids, scans):
        lines += _resonance_rows(sid, pts)
        dom = dominant_parallel(pts)
        summary[sid] = None if dom is None else dom.frequency
    _write(out / "resonances.csv", "\n".join(lines) + "\n")
    freqs = [v for v in summary.values() if v is not None]
    _write(out / "resonance_summary.json", _json({
        "dominant_parallel_hz": summary,
        "min_hz": min(freqs) if freqs else None,
        "max_hz": max(freqs) if freqs else None,
    }))
    f = np.linspace(cfg.fmin, cfg.fmax, 1000)
    series = []
    for sid in ids:
        z = grids[sid]
        series.append((sid, f, np.abs(z.interpolate(np.clip(f, z.frequencies[0], z.frequencies[-1])))
                       if hasattr(z, "interpolate") else np.abs(z.values(f)[0])))
    _write(out / "impedance_overlay.svg", line_chart(
        series, title=f"{len(ids)} grid impedance snapshots", xlabel="frequency (Hz)",
        ylabel="|Z| (ohm)", logy=True))
    return 0


def cmd_drift(cfg):
    out = Path(cfg.out)
    grids = _grid_impedances(cfg)
    lcl = LclParams.from_dict(cfg.lcl)
    inv_z = expr_from_dict(cfg.inv_z)
    res = resonance_drift(grids, lcl, inv_z, cfg.fmin, cfg.fmax, cfg.step, cfg.prominence)
    lines = [RES_HEADER]
    for sid, pts in res.resonances.items():
        lines += _resonance_rows(sid, pts)
    _write(out / "drift.csv", "\n".join(lines) + "\n")
    _write(out / "drift_summary.json", _json({
        "dominant_parallel_hz": {k: (None if p is None else p.frequency) for k, p in res.dominant.items()},
        "min_hz": res.f_lowest, "max_hz": res.f_highest, "drift_hz": res.drift,
    }))
    log.info("dominant resonance drift %s Hz", res.drift)
    return 0


def cmd_branches(cfg):
    out = Path(cfg.out)
    rows = branch_count_sweep(expr_from_dict(cfg.branch_base), expr_from_dict(cfg.branch_grid),
                              cfg.n_values, cfg.fmin, cfg.fmax, cfg.step, cfg.prominence)
    lines = ["n,freq_hz,status"]
    for r in rows:
        lines.append(f"{r.n},{_num(r.frequency)},{r.status.split(':')[0]}")
    _write(out / "branches.csv", "\n".join(lines) + "\n")
    return 0


def _networks(cfg):
    lcl = LclParams.from_dict(cfg.lcl)
    inv_z = expr_from_dict(cfg.inv_z)
    return {k: lcl_network(lcl, z, inv_z) for k, z in _grid_impedances(cfg).items()}


def cmd_magnify(cfg):
    out = Path(cfg.out)
    mm = magnification_map(_networks(cfg), cfg.f1, cfg.orders, cfg.source)
    _write(out / "magnification.csv", mm.to_csv())
    return 0


def _limits(cfg):
    if cfg.limits is None:
        return default_limits()
    try:
        return load_limits(cfg.limits)
    except OSError as exc:
        raise ConfigError(f"cannot read limit table {cfg.limits}: {exc}") from None


def cmd_comply(cfg, spectrum_path=None):
    out = Path(cfg.out)
    path = spectrum_path or cfg.spectrum
    if path is None:
        raise ConfigError("no spectrum file given")
    limits = _limits(cfg)
    try:
        spec = read_spectrum(path)
    except OSError as exc:
        raise ConfigError(f"cannot read spectrum {path}: {exc}") from None
    if cfg.through_network:
        if cfg.network is None:
            raise ConfigError("--through-network needs --network")
        try:
            net = load_network(cfg.network)
        except OSError as exc:
            raise ConfigError(f"cannot read network {cfg.network}: {exc}") from None
        spec = propagate(spec, net, cfg.location)
    pct = percent_of_fundamental(spec)
    report = check_compliance(pct, limits)
    data = report.to_dict()
    data["thd_percent"] = thd(spec)
    data["failed_orders"] = {str(h): msg for h, msg in spec.failed.items()}
    _write(out / "compliance.json", _json(data))
    text = report.to_text()
    _write(out / "compliance.txt", text)
    sys.stdout.write(text)
    return 0 if report.passed else 1


def _report_compliance(cfg):
    """Per-snapshot compliance of the inverter spectrum propagated to the PCC."""
    out = Path(cfg.out)
    if cfg.spectrum:
        spec = read_spectrum(cfg.spectrum)
    else:
        spec = HarmonicSpectrum(DEFAULT_SPECTRUM, CURRENT, cfg.f1)
    limits = _limits(cfg)
    lines = ["snapshot_id,order,percent,limit,verdict"]
    overall = {}
    for sid, net in sorted(_networks(cfg).items()):
        pcc = propagate(spec, net, cfg.location)
        rep = check_compliance(percent_of_fundamental(pcc), limits)
        overall[sid] = rep.verdict
        for r in rep.rows:
            lines.append(f"{sid},{r.order},{r.percent!r},{_num(r.limit)},{r.verdict}")
    _write(out / "compliance.csv", "\n".join(lines) + "\n")
    _write(out / "compliance_summary.json", _json({"limits": limits.source_label, "verdicts": overall}))


def cmd_report(cfg):
    out = Path(cfg.out)
    sub = dataclasses.replace(cfg)
    if not sub.manifest:
        cmd_synth(sub)
        sub.manifest = str(out / "manifest.json")
    sub.models = str(out / "models")
    sub.from_csv = False
    cmd_envelope(sub)
    if cmd_fit(sub) != 0:
        raise ConfigError("every snapshot failed to fit")
    cmd_resonance(sub)
    cmd_drift(sub)
    cmd_branches(sub)
    cmd_magnify(sub)
    _report_compliance(sub)
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "index.json")
    index = {
        "version": __version__,
        "files": [{"path": p.relative_to(out).as_posix(),
                   "sha256": hashlib.sha256(p.read_bytes()).hexdigest()} for p in files],
    }
    _write(out / "index.json", _json(index))
    return 0


COMMANDS = {
    "synth": cmd_synth, "fit": cmd_fit, "resonance": cmd_resonance, "drift": cmd_drift,
    "branches": cmd_branches, "magnify": cmd_magnify, "comply": cmd_comply,
    "envelope": cmd_envelope, "report": cmd_report,
}


# --- argument parsing -------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--out", help="output directory (default: out)")
    g.add_argument("--seed", type=int, help="seed of the synthetic generator")
    g.add_argument("--fmin", type=float, help="scan/grid start (Hz)")
    g.add_argument("--fmax", type=float, help="scan/grid stop (Hz)")
    g.add_argument("--step", type=float, help="scan/grid step (Hz)")
    g.add_argument("--jobs", type=int, help="parallel workers for per-snapshot work")
    g.add_argument("--manifest", help="sweep-set manifest (JSON)")
    g.add_argument("--models", help="directory of fitted model JSON files")
    g.add_argument("--allow-extended", action="store_true", default=None,
                   help="accept sweep rows outside 0-1000 Hz")

    parser = argparse.ArgumentParser(prog="gridres", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gridres {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", parents=[common], help="generate a synthetic sweep set")
    p.add_argument("--n", dest="n_snapshots", type=int)
    p.add_argument("--spread", type=float)

    p = subs.add_parser("fit", parents=[common], help="fit rational models to sweeps")
    p.add_argument("--order", help="model order or 'auto'")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--no-e", dest="include_e", action="store_false", default=None,
                   help="omit the proportional s*e term")

    p = subs.add_parser("resonance", parents=[common], help="scan resonances of each grid snapshot")
    p.add_argument("--from-csv", dest="from_csv", action="store_true", default=None,
                   help="scan interpolated raw sweeps instead of fitted models")
    p.add_argument("--prominence", type=float)

    p = subs.add_parser("drift", parents=[common], help="PCC resonance drift with the LCL filter")
    p.add_argument("--from-csv", dest="from_csv", action="store_true", default=None)
    p.add_argument("--prominence", type=float)

    p = subs.add_parser("branches", parents=[common], help="resonance versus number of parallel branches")
    p.add_argument("--n-values", dest="n_values", type=lambda s: [int(v) for v in s.split(",")])

    p = subs.add_parser("magnify", parents=[common], help="harmonic magnification map")
    p.add_argument("--f1", type=float)
    p.add_argument("--orders", type=lambda s: [int(v) for v in s.split(",")])
    p.add_argument("--source", choices=[INJECTION, BACKGROUND])
    p.add_argument("--from-csv", dest="from_csv", action="store_true", default=None)

    p = subs.add_parser("comply", parents=[common], help="check a spectrum against harmonic limits")
    p.add_argument("spectrum", help="spectrum CSV (order,amp_real,amp_imag) with optional .json sidecar")
    p.add_argument("--limits", help="limit table JSON (default: built-in h3 <= 3 %%)")
    p.add_argument("--through-network", dest="through_network", action="store_true", default=None)
    p.add_argument("--network", help="network description JSON")
    p.add_argument("--location", choices=["grid_side", "inverter_side"])

    p = subs.add_parser("envelope", parents=[common], help="multi-snapshot envelope and outliers")

    p = subs.add_parser("report", parents=[common], help="run the whole pipeline into one directory")
    p.add_argument("--n", dest="n_snapshots", type=int)
    p.add_argument("--spread", type=float)
    return parser


def make_config(args):
    data = {}
    if args.config:
        data.update(load_config(args.config))
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for key, value in vars(args).items():
        if key in known and value is not None:
            if key in RunConfig.PATH_KEYS:
                value = str(Path(value).resolve())
            data[key] = value
    if isinstance(data.get("order"), str) and data["order"] != "auto":
        try:
            data["order"] = int(data["order"])
        except ValueError:
            raise ConfigError(f"order must be 'auto' or an integer, got {data['order']!r}") from None
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


def _setup_logging():
    level = os.environ.get("GRIDRES_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "config.json", _json(cfg.frozen()))
        if args.command == "comply":
            return cmd_comply(cfg, args.spectrum)
        return COMMANDS[args.command](cfg)
    except (ConfigError, OSError, GridResError, ValueError, KeyError, TypeError) as exc:
        log.error("%s", exc)
        print(f"gridres: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
