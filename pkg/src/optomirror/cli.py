"""Batch command-line front end.

    optomirror {spectrum,sigma,peaks,thermometry,oracle} [--config PATH | --demo]
               [--out DIR] [--format csv|json|both] [--serial] [--tol X]

Exit status is 0 when every per-point tolerance and built-in check passes,
1 when a check fails and 2 for unusable input.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .bath import PhononSpectrum, is_flat, spectrum_from_dict, spectrum_to_dict
from .model import ConfigError, ModelConfig
from .oracle import (NonconvergenceError, OracleRefusedError, TruncationError, langevin_moments,
                     run_oracle)
from .peaks import (DegenerateInputError, PeakSeriesParams, decompose, sigma_from_peaks,
                    thermometry_report)
from .spectrum import (MuGrid, SpectrumResult, exact_spectrum, input_spectrum, susceptibility,
                       total_power)

DEMO_CONFIG = {
    "oscillator": {"Omega": 1.0, "gamma": 0.005},
    "laser": {"amp2": 1.0, "omega0": 10.0, "Lp": 0.0, "phase": 0.0},
    "mirror": {"v": 0.3, "phi": 0.0},
    "detector": {"varkappa": 0.005, "alpha": 0.0},
    "bath": {"kind": "flat", "N0": 0.5},
    "grid": {"mu_min": 5.0, "mu_max": 15.0, "points": 10001},
    "numerics": {"tol": 1e-9},
}

# the master-equation oracle needs a modest occupancy to fit a truncated basis
DEMO_ORACLE = {
    "oscillator": {"Omega": 1.0, "gamma": 0.4},
    "mirror": {"v": 0.5, "phi": 0.0},
}

SECTIONS = ("oscillator", "laser", "mirror", "detector", "bath", "grid", "numerics",
            "peaks", "thermometry", "oracle", "output")


class InputError(Exception):
    """Unusable configuration or input file."""


@dataclass
class RunConfig:
    model: ModelConfig
    bath: PhononSpectrum
    grid: MuGrid
    tol: float = 1e-9
    workers: int | None = None
    out_dir: Path = Path("out")
    fmt: str = "both"
    peaks_n_max: int | None = None
    thermo_window: float | None = None
    thermo_spectrum: Path | None = None
    thermo_kind: str = "susceptibility"
    oracle_dim_start: int = 20
    oracle_dim_max: int = 160
    raw: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Self-contained config that reproduces this run."""
        d = copy.deepcopy({k: v for k, v in self.raw.items() if k in SECTIONS})
        model = self.model.to_dict()
        for sec in ("oscillator", "laser", "mirror", "detector"):
            d[sec] = model[sec]
        d["bath"] = spectrum_to_dict(self.bath)
        d.setdefault("numerics", {})["tol"] = self.tol
        return d


def load_config_file(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None
    # a result JSON carries the resolved config of its run
    if "config" in data and isinstance(data["config"], dict) and "run_config" in data["config"]:
        data = data["config"]["run_config"]
    return data


def build_run_config(raw: dict, base_dir: Path, args) -> RunConfig:
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise InputError(f"unknown config sections: {sorted(unknown)}")
    try:
        model = ModelConfig.from_dict(raw)
    except KeyError as exc:
        raise InputError(f"missing config entry {exc}") from None
    except ConfigError as exc:
        raise InputError(str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad model parameters: {exc}") from None
    try:
        bath = spectrum_from_dict(raw.get("bath", {"kind": "flat", "N0": 0.0}), base_dir)
    except (TypeError, ValueError, OSError) as exc:
        raise InputError(f"bad [bath] section: {exc}") from None
    g = raw.get("grid", {})
    w = model.omega
    lo = float(g.get("mu_min", model.omega0 - 5 * w))
    hi = float(g.get("mu_max", model.omega0 + 5 * w))
    points = int(g.get("points", 4001))
    if points < 2:
        raise InputError("grid.points must be >= 2")
    try:
        grid = MuGrid.linspace(lo, hi, points)
    except ValueError as exc:
        raise InputError(f"bad [grid]: {exc}") from None
    num = raw.get("numerics", {})
    tol = float(args.tol if args.tol is not None else num.get("tol", 1e-9))
    if not tol > 0:
        raise InputError("tol must be positive")
    workers = 1 if args.serial else int(num.get("workers", os.cpu_count() or 1))
    out = raw.get("output", {})
    out_dir = Path(args.out) if args.out else Path(out.get("dir", "out"))
    fmt = args.format or out.get("format", "both")
    if fmt not in ("csv", "json", "both"):
        raise InputError(f"output format must be csv, json or both (got {fmt!r})")
    th = raw.get("thermometry", {})
    spec_path = getattr(args, "spectrum", None) or th.get("spectrum")
    if spec_path is not None:
        spec_path = Path(spec_path)
        if not spec_path.is_absolute() and not getattr(args, "spectrum", None):
            spec_path = base_dir / spec_path
    pk = raw.get("peaks", {})
    orc = raw.get("oracle", {})
    return RunConfig(
        model, bath, grid, tol, workers, out_dir, fmt,
        peaks_n_max=pk.get("n_max"),
        thermo_window=th.get("window_halfwidth"),
        thermo_spectrum=spec_path,
        thermo_kind=th.get("kind", "susceptibility"),
        oracle_dim_start=int(orc.get("dim_start", 20)),
        oracle_dim_max=int(orc.get("dim_max", 160)),
        raw=raw,
    )


# -- output helpers ---------------------------------------------------------

class Report:
    def __init__(self, stream=None):
        self.stream = stream or sys.stdout
        self.failures: list[str] = []

    def line(self, text: str = "") -> None:
        print(text, file=self.stream)

    def check(self, name: str, ok: bool, detail: str) -> None:
        self.line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if not ok:
            self.failures.append(name)


def _ensure_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {path}: {exc}") from None


def _write_result(rc: RunConfig, result: SpectrumResult, stem: str, rep: Report) -> None:
    result.config["run_config"] = rc.resolved()
    if rc.fmt in ("csv", "both"):
        result.to_csv(rc.out_dir / f"{stem}.csv")
        rep.line(f"wrote {rc.out_dir / (stem + '.csv')}")
    if rc.fmt in ("json", "both"):
        result.to_json(rc.out_dir / f"{stem}.json")
        rep.line(f"wrote {rc.out_dir / (stem + '.json')}")


def _point_failures(result: SpectrumResult, rep: Report, name: str) -> None:
    bad = np.nonzero(result.failed)[0]
    detail = f"{bad.size} of {result.failed.size} points above tolerance"
    if bad.size:
        worst = int(np.argmax(result.errors))
        detail += f" (worst mu={result.mu[worst]:.6g}, err={result.errors[worst]:.3g})"
    rep.check(f"{name} per-point tolerance", bad.size == 0, detail)


def _rel_diff(a: np.ndarray, b: np.ndarray) -> float:
    mask = np.abs(b) > 1e-6 * np.max(np.abs(b)) if np.any(b) else np.ones(b.shape, bool)
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(a - b)[mask] / np.abs(b)[mask]))


# -- commands ---------------------------------------------------------------

def cmd_spectrum(rc: RunConfig, rep: Report) -> None:
    cfg = rc.model
    result = exact_spectrum(cfg, rc.bath, rc.grid, rc.tol, rc.workers)
    _ensure_dir(rc.out_dir)
    _write_result(rc, result, "spectrum", rep)
    _point_failures(result, rep, "spectrum")
    if cfg.v == 0:
        dev = float(np.max(np.abs(result.values - input_spectrum(cfg, rc.grid).values)))
        rep.check("v=0 limit", dev < 1e-6, f"max |P - P_in| = {dev:.3e}")
    if cfg.amp2 == 0:
        dev = float(np.max(np.abs(result.values - 1.0)))
        rep.check("zero drive", dev == 0.0, f"max |P - 1| = {dev:.3e}")
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            tp = total_power(result, center=cfg.omega0)
        for w in caught:
            rep.line(f"warning: {w.message}")
        rel = abs(tp / (2.0 * cfg.amp2) - 1.0)
        rep.check("total power", rel < 0.01,
                  f"(1/2pi) int (P-1) = {tp:.8g}, 2|lambda|^2 = {2 * cfg.amp2:.8g}, rel. dev. {rel:.3e}")


def cmd_sigma(rc: RunConfig, rep: Report) -> None:
    cfg = rc.model
    quad = susceptibility(cfg, rc.bath, rc.grid, rc.tol, rc.workers)
    params = PeakSeriesParams.from_config(cfg, rc.bath, n_max=rc.peaks_n_max)
    approx = sigma_from_peaks(params, cfg, rc.grid)
    _ensure_dir(rc.out_dir)
    _write_result(rc, quad, "sigma", rep)
    _write_result(rc, approx, "sigma_peaks", rep)
    diff = approx.values - quad.values
    path = rc.out_dir / "sigma_compare.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["mu", "quadrature", "peaks", "difference"])
        for row in zip(rc.grid.values, quad.values, approx.values, diff):
            wr.writerow([repr(float(x)) for x in row])
    rep.line(f"wrote {path}")
    _point_failures(quad, rep, "sigma")
    rel = _rel_diff(approx.values, quad.values)
    rep.line(f"N(omega) = {params.N_at_omega:.6g}, peaks used |n| <= {approx.meta['n_max']}")
    if is_flat(rc.bath):
        rep.check("series vs quadrature", rel < 1e-3, f"max relative difference {rel:.3e}")
    else:
        rep.line(f"series vs quadrature: max relative difference {rel:.3e} "
                 "(bath not flat: reported only)")


def cmd_peaks(rc: RunConfig, rep: Report) -> None:
    cfg = rc.model
    params = PeakSeriesParams.from_config(cfg, rc.bath)
    dec = decompose(params, cfg, rc.peaks_n_max)
    _ensure_dir(rc.out_dir)
    path = rc.out_dir / "peaks.json"
    d = dec.to_json_dict()
    d["config"] = {"run_config": rc.resolved()}
    path.write_text(json.dumps(d, indent=1))
    rep.line(f"wrote {path}")
    rows = dec.ratio_table()
    rpath = rc.out_dir / "peak_ratios.csv"
    with open(rpath, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "stokes_weight", "antistokes_weight", "ratio", "expected"])
        for r in rows:
            wr.writerow([r["n"], repr(r["stokes"]), repr(r["antistokes"]), repr(r["ratio"]),
                         repr(r["expected"])])
    rep.line(f"wrote {rpath}")
    rep.line(f"N(omega) = {dec.N_at_omega:.6g}, prefactor = {dec.prefactor:.6g}, "
             f"residual weight = {dec.residual_weight:.3e}")
    rep.line(f"{'n':>4} {'weight':>14}")
    for p in sorted(dec.peaks, key=lambda p: p.n):
        rep.line(f"{p.n:>4} {p.weight:>14.8e}")
    worst = 0.0
    for r in rows:
        if r["stokes"] > 0 and r["expected"] > 0:
            worst = max(worst, abs(r["ratio"] / r["expected"] - 1.0))
        elif r["antistokes"] != 0:
            worst = math.inf
    rep.check("detailed balance", worst <= 1e-10, f"max |ratio/expected - 1| = {worst:.3e}")


def _load_spectrum_file(path: Path, kind: str) -> SpectrumResult:
    try:
        if path.suffix.lower() == ".json":
            return SpectrumResult.from_json(path)
        return SpectrumResult.from_csv(path, kind)
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"malformed spectrum file {path}: {exc}") from None


def cmd_thermometry(rc: RunConfig, rep: Report) -> None:
    cfg = rc.model
    if rc.thermo_spectrum is not None:
        result = _load_spectrum_file(rc.thermo_spectrum, rc.thermo_kind)
        rep.line(f"spectrum: {rc.thermo_spectrum} (kind {result.kind})")
    else:
        result = susceptibility(cfg, rc.bath, rc.grid, rc.tol, rc.workers)
        rep.line("spectrum: susceptibility computed from the configuration")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            r = thermometry_report(result, cfg, rc.thermo_window)
        except DegenerateInputError as exc:
            rep.check("thermometry", False, str(exc))
            return
        except ValueError as exc:
            raise InputError(str(exc)) from None
    for w in caught:
        rep.line(f"warning: {w.message}")
    rep.line(f"window half-width = {r.half_width:.6g}")
    rep.line(f"Stokes area       = {r.W_minus1:.10g}")
    rep.line(f"anti-Stokes area  = {r.W_plus1:.10g}")
    rep.line(f"elastic area      = {r.W_elastic:.10g}")
    rep.line(f"est. leakage      = {r.leakage:.3e}")
    rep.line(f"N(omega) estimate = {r.estimate:.10g}")


def cmd_oracle(rc: RunConfig, rep: Report) -> None:
    cfg = rc.model
    try:
        res = run_oracle(cfg, rc.bath, tol=min(rc.tol, 1e-9), dim_start=rc.oracle_dim_start,
                         dim_max=rc.oracle_dim_max)
    except OracleRefusedError as exc:
        raise InputError(f"oracle refused: {exc}") from None
    except (TruncationError, NonconvergenceError) as exc:
        rep.check("master equation steady state", False, str(exc))
        return
    lang = langevin_moments(cfg, float(rc.bath.N0))
    rep.line(f"dim = {res.dim}, method = {res.method}, top population = {res.top_population:.2e}, "
             f"||L rho||_1 = {res.residual:.2e}, min eigenvalue = {res.min_eigenvalue:.2e}")
    m, e, lg = res.moments, res.expected, lang
    rows = [
        ("<q>", m.q, e.q, lg.q), ("<p>", m.p, e.p, lg.p),
        ("<q^2>-<q>^2", m.var_q, e.var_q, lg.var_q), ("<p^2>", m.p2, e.p2, lg.p2),
        ("<{q,p}>", m.qp_anti, e.qp_anti, lg.qp_anti), ("<a^+a>", m.n, e.n, lg.n),
        ("Re<a^2>", m.a2.real, e.a2.real, lg.a2.real), ("Im<a^2>", m.a2.imag, e.a2.imag, lg.a2.imag),
    ]
    errs = res.relative_errors()
    lerrs = lang.relative_errors(e, res.vacuum_scale)
    keys = ["q", "p", "var_q", "p2", "qp_anti", "n", "Re a2", "Im a2"]
    rep.line(f"{'moment':<12} {'master eq.':>14} {'closed form':>14} {'Langevin':>14} "
             f"{'rel err':>9} {'rel err L':>9}")
    for (name, a, b, c), k in zip(rows, keys):
        rep.line(f"{name:<12} {a:>14.8g} {b:>14.8g} {c:>14.8g} {errs[k]:>9.2e} {lerrs[k]:>9.2e}")
    rep.check("master equation vs closed form", max(errs.values()) < 1e-3,
              f"max relative error {max(errs.values()):.3e}")
    rep.check("Langevin kernels vs closed form", max(lerrs.values()) < 1e-6,
              f"max relative error {max(lerrs.values()):.3e}")


COMMANDS = {
    "spectrum": cmd_spectrum,
    "sigma": cmd_sigma,
    "peaks": cmd_peaks,
    "thermometry": cmd_thermometry,
    "oracle": cmd_oracle,
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="TOML or JSON configuration file")
    src.add_argument("--demo", action="store_true", help="use the built-in resolved-sideband demo")
    common.add_argument("--out", type=Path, help="output directory (default: out)")
    common.add_argument("--format", choices=("csv", "json", "both"), help="spectrum file format")
    common.add_argument("--serial", action="store_true",
                        help="evaluate grid points one after another")
    common.add_argument("--tol", type=float, help="absolute tolerance per grid point")
    parser = argparse.ArgumentParser(prog="optomirror", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="exact heterodyne power spectrum")
    sub.add_parser("sigma", parents=[common], help="susceptibility: quadrature and peak series")
    sub.add_parser("peaks", parents=[common], help="peak decomposition and weight ratios")
    th = sub.add_parser("thermometry", parents=[common], help="sideband-area occupancy estimate")
    th.add_argument("--spectrum", type=Path, help="spectrum file (CSV or JSON) to analyse")
    sub.add_parser("oracle", parents=[common], help="master-equation moment check")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    rep = Report()
    try:
        if args.demo or args.config is None:
            raw, base = copy.deepcopy(DEMO_CONFIG), Path.cwd()
            if args.command == "oracle":
                raw.update(copy.deepcopy(DEMO_ORACLE))
            if not args.demo:
                rep.line("no --config given: using the demo configuration")
        else:
            raw, base = load_config_file(args.config), args.config.resolve().parent
        rc = build_run_config(raw, base, args)
        COMMANDS[args.command](rc, rep)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if rep.failures:
        rep.line(f"{len(rep.failures)} check(s) failed: {', '.join(rep.failures)}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
