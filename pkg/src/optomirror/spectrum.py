"""Heterodyne power spectra of the reflected light.

All spectra share one time-domain structure,

    value(mu) = baseline + scale * Re int_0^inf exp(i (mu - omega0) t) g(t) dt,

with a mu-independent envelope ``g``. ``g`` is expanded once on adaptive
Legendre panels in t and every mu is then an exact panel-wise Fourier
integral of that expansion (see :class:`~optomirror.numerics.FourierPanels`),
so the detuning never needs to be resolved by the panels.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bath import PhononSpectrum, n_eff, spectrum_to_dict, thermal_kernel_table
from .kernels import OpticalKernelParams, kick_kernel_table, scattering_exponent
from .model import ModelConfig
from .numerics import FourierPanels, legendre_panels

SCHEMA_VERSION = 1
KINDS = ("input", "exact", "susceptibility", "peaks-approx")
#: Legendre order and initial panel width (in units of pi/omega) in t
PANEL_ORDER = 12
PANEL_FRACTION = 1.0 / 8.0


class GridTooNarrowWarning(UserWarning):
    """The spectrum has not decayed at the ends of the mu-grid."""


class SpectrumEvaluationError(RuntimeError):
    """One or more grid points missed their tolerance."""

    def __init__(self, result: "SpectrumResult"):
        self.result = result
        bad = np.nonzero(result.failed)[0]
        super().__init__(f"{bad.size} of {result.grid.values.size} points missed tolerance; "
                         f"worst error estimate {result.errors.max():.3e}")


@dataclass(frozen=True, eq=False)
class MuGrid:
    """Strictly increasing local-oscillator frequencies."""

    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if v.ndim != 1 or v.size < 1:
            raise ValueError("MuGrid needs a 1-D array")
        if not np.all(np.isfinite(v)):
            raise ValueError("MuGrid values must be finite")
        if np.any(np.diff(v) <= 0):
            raise ValueError("MuGrid values must be strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def linspace(cls, lo: float, hi: float, points: int) -> "MuGrid":
        if points < 1:
            raise ValueError("need at least one grid point")
        return cls(np.linspace(lo, hi, points))

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    grid: MuGrid
    values: np.ndarray
    kind: str
    errors: np.ndarray
    config: dict = field(default_factory=dict)
    failed: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        vals = np.asarray(self.values, dtype=float)
        errs = np.asarray(self.errors, dtype=float)
        if vals.shape != self.grid.values.shape or errs.shape != vals.shape:
            raise ValueError("grid, values and errors must have matching lengths")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "errors", errs)
        if self.failed is None:
            object.__setattr__(self, "failed", np.zeros(vals.shape, dtype=bool))

    @property
    def mu(self) -> np.ndarray:
        return self.grid.values

    @property
    def baseline(self) -> float:
        return 1.0 if self.kind in ("input", "exact") else 0.0

    # -- serialisation -------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mu", "value", "err_estimate"])
            for m, v, e in zip(self.mu, self.values, self.errors):
                w.writerow([repr(float(m)), repr(float(v)), repr(float(e))])

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "package_version": __version__,
            "kind": self.kind,
            "config": self.config,
            "mu": self.mu.tolist(),
            "value": self.values.tolist(),
            "err_estimate": self.errors.tolist(),
            "failed": [int(i) for i in np.nonzero(self.failed)[0]],
            "meta": self.meta,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1))

    @classmethod
    def from_json(cls, path) -> "SpectrumResult":
        d = json.loads(Path(path).read_text())
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema_version {d.get('schema_version')!r}")
        n = len(d["mu"])
        failed = np.zeros(n, dtype=bool)
        failed[d.get("failed", [])] = True
        return cls(MuGrid(np.asarray(d["mu"])), np.asarray(d["value"]), d["kind"],
                   np.asarray(d["err_estimate"]), d.get("config", {}), failed, d.get("meta", {}))

    @classmethod
    def from_csv(cls, path, kind: str) -> "SpectrumResult":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0][:3]] != ["mu", "value", "err_estimate"]:
            raise ValueError(f"{path}: expected header 'mu,value,err_estimate'")
        try:
            data = np.array([[float(c) for c in r[:3]] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None
        if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != 3:
            raise ValueError(f"{path}: need at least two rows of three columns")
        return cls(MuGrid(data[:, 0]), data[:, 1], kind, data[:, 2])


def config_snapshot(cfg: ModelConfig, spec: PhononSpectrum | None = None, **extra) -> dict:
    snap = {"model": cfg.to_dict()}
    if spec is not None:
        snap["bath"] = spectrum_to_dict(spec)
    snap.update(extra)
    return snap


def _as_grid(grid) -> MuGrid:
    return grid if isinstance(grid, MuGrid) else MuGrid(np.asarray(grid, dtype=float))


def input_spectrum(cfg: ModelConfig, grid) -> SpectrumResult:
    """Power spectrum of the unscattered laser light (closed form)."""
    grid = _as_grid(grid)
    k = cfg.kappa
    delta = grid.values - cfg.omega0
    vals = 1.0 + 2.0 * cfg.amp2 * k / (0.25 * k * k + delta * delta)
    return SpectrumResult(grid, vals, "input", np.zeros_like(vals), config_snapshot(cfg))


class SpectrumEvaluator:
    """Precomputed time-domain envelope for one (config, bath, kind).

    Construction does all mu-independent work; :meth:`point` then costs
    one panel-wise Fourier sum. Each point is computed by the same code
    path whether called alone or from :meth:`grid`, so results are
    bitwise reproducible.
    """

    def __init__(self, cfg: ModelConfig, spec: PhononSpectrum, kind: str = "exact", tol: float = 1e-9):
        if kind not in ("exact", "susceptibility"):
            raise ValueError("SpectrumEvaluator handles kind 'exact' or 'susceptibility'")
        if not tol > 0:
            raise ValueError("tol must be positive")
        self.cfg, self.spec, self.kind, self.tol = cfg, spec, kind, tol
        osc, d = cfg.osc, cfg.derived
        kappa, gamma, v = cfg.kappa, cfg.gamma, cfg.v
        amp2 = cfg.amp2 if kind == "exact" else 0.0
        self.scale = 4.0 * cfg.amp2 if kind == "exact" else 4.0
        self.baseline = 1.0 if kind == "exact" else 0.0
        ktol = 1e-3 * tol
        self.n_eff = n_eff(spec, osc, d, ktol) if v != 0 else n_eff(spec, osc, d, 1e-10)
        log_pref = -(self.n_eff + 0.5) * osc.Omega * v * v / d.omega
        if amp2 != 0 and v != 0:
            kp = OpticalKernelParams(osc, d, v, tol=ktol)
            self.A = scattering_exponent(kp)
            log_pref += 2.0 * amp2 * self.A.real
        else:
            kp, self.A = None, 0j
        self.log_prefactor = log_pref
        # |g(t)| <= exp(-kappa t/2): the prefactor cancels the maxima of both kernels
        trunc_target = 0.1 * tol / (self.scale * 2.0 / kappa) if self.scale else 1.0
        t_max = max(40.0 / kappa, 40.0 / gamma, 2.0 * math.log(max(1.0 / trunc_target, 1.0)) / kappa)
        self.t_max = t_max
        kick = kick_kernel_table(kp, t_max) if kp is not None else None

        def envelope(t):
            t = np.asarray(t, dtype=float)
            expo = log_pref - 0.5 * kappa * t
            if v != 0:
                expo = expo + thermal_kernel_table(spec, osc, d, v, t, ktol).values
            if kick is not None:
                expo = expo + amp2 * kick(t)
            return np.exp(expo)

        width = PANEL_FRACTION * math.pi / max(d.omega, 1.0 / t_max)
        n = max(1, int(math.ceil(t_max / width)))
        edges = np.linspace(0.0, t_max, n + 1)
        if self.scale == 0:
            self._fourier = None
            self.trunc_err = 0.0
            return
        panels = legendre_panels(envelope, edges, order=PANEL_ORDER, abs_tol=0.25 * tol / self.scale)
        self.panels = panels
        self._fourier = FourierPanels(panels)
        tail_env = float(np.abs(envelope(np.array([t_max])))[0])
        self.trunc_err = tail_env * 2.0 / kappa

    def point(self, mu: float) -> tuple[float, float]:
        """``(value, error_estimate)`` at one detector frequency."""
        if self._fourier is None:
            return self.baseline, 0.0
        F, err = self._fourier(float(mu) - self.cfg.omega0)
        return self.baseline + self.scale * F.real, self.scale * (err + self.trunc_err)

    def grid(self, grid, workers: int | None = None) -> SpectrumResult:
        """Evaluate every grid point; ``workers > 1`` uses a thread pool."""
        grid = _as_grid(grid)
        mus = [float(m) for m in grid.values]
        if workers and workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                pairs = list(pool.map(self.point, mus))
        else:
            pairs = [self.point(m) for m in mus]
        vals = np.array([p[0] for p in pairs])
        errs = np.array([p[1] for p in pairs])
        failed = ~(errs <= self.tol)
        meta = {"n_eff": self.n_eff, "log_prefactor": self.log_prefactor, "t_max": self.t_max,
                "tol": self.tol, "panels": int(self.panels.lo.size) if self._fourier is not None else 0}
        if self.A:
            meta["scattering_exponent"] = [self.A.real, self.A.imag]
        return SpectrumResult(grid, vals, self.kind, errs, config_snapshot(self.cfg, self.spec),
                              failed, meta)


def spectrum_grid_eval(cfg: ModelConfig, spec: PhononSpectrum, grid, kind: str = "exact",
                       tol: float = 1e-9, workers: int | None = None) -> SpectrumResult:
    """Evaluate a spectrum of the given ``kind`` on ``grid``.

    ``kind`` is one of ``input``, ``exact`` or ``susceptibility``. Points
    are independent; the output order always matches the grid. Points
    whose error estimate exceeds ``tol`` are flagged in ``result.failed``.
    """
    grid = _as_grid(grid)
    if kind == "input":
        return input_spectrum(cfg, grid)
    return SpectrumEvaluator(cfg, spec, kind, tol).grid(grid, workers)


def exact_spectrum(cfg: ModelConfig, spec: PhononSpectrum, grid, tol: float = 1e-9,
                   workers: int | None = None) -> SpectrumResult:
    """Exact output power spectrum P(mu) for arbitrary probe strength."""
    return spectrum_grid_eval(cfg, spec, grid, "exact", tol, workers)


def susceptibility(cfg: ModelConfig, spec: PhononSpectrum, grid, tol: float = 1e-9,
                   workers: int | None = None) -> SpectrumResult:
    """Weak-probe optical susceptibility, ``lim (P - 1)/|lambda|^2``."""
    return spectrum_grid_eval(cfg, spec, grid, "susceptibility", tol, workers)


def _tail_integral(x: np.ndarray, y: np.ndarray, center: float, side: int) -> float:
    """Integral beyond the grid end of a ``c/(a + (mu - center)^2)`` fit."""
    d = np.abs(x - center)
    if np.any(y <= 0) or np.any(d == 0):
        return 0.0
    A = np.column_stack([np.ones_like(d), d * d])
    (p0, p1), *_ = np.linalg.lstsq(A, 1.0 / y, rcond=None)
    if p1 <= 0:
        return 0.0
    c = 1.0 / p1
    a = p0 * c
    D = d[0] if side < 0 else d[-1]
    if a > 0:
        s = math.sqrt(a)
        return c / s * (0.5 * math.pi - math.atan(D / s))
    return c / D


def total_power(result: SpectrumResult, center: float | None = None) -> float:
    """``(1/2pi) int (value - baseline) dmu`` with a Lorentzian tail correction.

    The outermost 10% of points on each side are fitted to
    ``c/(a + (mu - center)^2)`` and the fit integrated analytically past
    the grid ends. Warns with :class:`GridTooNarrowWarning` when the ends
    have not decayed below 1e-6 of the maximum.
    """
    mu = result.mu
    y = result.values - result.baseline
    if mu.size < 2:
        raise ValueError("total_power needs at least two grid points")
    peak = float(np.max(np.abs(y)))
    if peak == 0:
        return 0.0
    if max(abs(y[0]), abs(y[-1])) >= 1e-6 * peak:
        warnings.warn("spectrum has not decayed at the grid ends; total power may be inaccurate",
                      GridTooNarrowWarning, stacklevel=2)
    if center is None:
        center = float(mu[np.argmax(np.abs(y))])
    body = float(np.trapezoid(y, mu)) if hasattr(np, "trapezoid") else float(np.trapz(y, mu))
    m = max(3, mu.size // 10)
    tails = 0.0
    if mu.size >= 2 * m:
        left = slice(0, m)
        right = slice(mu.size - m, mu.size)
        if mu[m - 1] < center:
            tails += _tail_integral(mu[left], y[left], center, -1)
        if mu[mu.size - m] > center:
            tails += _tail_integral(mu[right], y[right], center, +1)
    return (body + tails) / (2.0 * math.pi)


__all__ = [
    "GridTooNarrowWarning",
    "KINDS",
    "MuGrid",
    "SpectrumEvaluationError",
    "SpectrumEvaluator",
    "SpectrumResult",
    "config_snapshot",
    "exact_spectrum",
    "input_spectrum",
    "spectrum_grid_eval",
    "susceptibility",
    "total_power",
]
