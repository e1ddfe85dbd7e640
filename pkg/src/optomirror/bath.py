"""Phonon bath occupancy spectra N(nu), effective occupancy and thermal kernel.

All spectra are occupancy densities (dimensionless) over angular
frequency. Support anywhere on the real line is allowed; nothing here
restricts N to nu > 0.

The Lorentzian weight centred on the damped frequency is handled through
the substitution ``nu = omega + (gamma/2) tan(theta)``, under which
``(gamma/2pi) dnu / (gamma^2/4 + (nu - omega)^2) = dtheta/pi``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.interpolate import CubicSpline

from .model import DerivedOscillator, OscillatorParams
from .numerics import (
    FourierPanels,
    QuadratureSpec,
    adaptive_quad,
    legendre_panels,
)


@dataclass(frozen=True)
class Flat:
    """Constant occupancy; the Markovian limit of the bath."""

    N0: float

    def __post_init__(self):
        if not (math.isfinite(self.N0) and self.N0 >= 0):
            raise ValueError(f"Flat N0 must be >= 0, got {self.N0}")

    def __call__(self, nu):
        return np.full(np.shape(nu), float(self.N0))

    def support(self, tol):
        return -math.inf, math.inf

    def breakpoints(self):
        return []


@dataclass(frozen=True)
class Lorentzian:
    """``peak * halfwidth**2 / (halfwidth**2 + (nu - center)**2)``."""

    center: float
    halfwidth: float
    peak: float

    def __post_init__(self):
        if not self.halfwidth > 0:
            raise ValueError("Lorentzian halfwidth must be positive")
        if not self.peak >= 0:
            raise ValueError("Lorentzian peak must be >= 0")

    def __call__(self, nu):
        x = (np.asarray(nu, dtype=float) - self.center) / self.halfwidth
        return self.peak / (1.0 + x * x)

    def support(self, tol):
        if self.peak == 0:
            return self.center, self.center
        r = self.halfwidth * math.sqrt(max(self.peak / tol - 1.0, 1.0))
        return self.center - r, self.center + r

    def breakpoints(self):
        return [self.center + k * self.halfwidth for k in (-8, -2, -1, 0, 1, 2, 8)]


@dataclass(frozen=True)
class Gaussian:
    """``peak * exp(-(nu - center)**2 / (2 sigma**2))``."""

    center: float
    sigma: float
    peak: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("Gaussian sigma must be positive")
        if not self.peak >= 0:
            raise ValueError("Gaussian peak must be >= 0")

    def __call__(self, nu):
        x = (np.asarray(nu, dtype=float) - self.center) / self.sigma
        return self.peak * np.exp(-0.5 * x * x)

    def support(self, tol):
        if self.peak == 0:
            return self.center, self.center
        r = self.sigma * math.sqrt(2.0 * math.log(max(self.peak / tol, math.e)))
        return self.center - r, self.center + r

    def breakpoints(self):
        return [self.center + k * self.sigma for k in (-4, -2, -1, 0, 1, 2, 4)]


@dataclass(frozen=True)
class BoseEinstein:
    """Thermal occupancy ``1/(exp(nu/T) - 1)`` on ``ir_cutoff < nu < cutoff``.

    The Bose factor behaves like T/nu near zero, so frequency integrals
    need ``ir_cutoff > 0``; with the default 0 only pointwise evaluation
    is available.
    """

    temperature: float
    cutoff: float
    ir_cutoff: float = 0.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("BoseEinstein temperature must be positive")
        if not 0 <= self.ir_cutoff < self.cutoff:
            raise ValueError("BoseEinstein needs 0 <= ir_cutoff < cutoff")

    def __call__(self, nu):
        nu = np.asarray(nu, dtype=float)
        inside = (nu > self.ir_cutoff) & (nu < self.cutoff)
        safe = np.where(inside, nu, self.cutoff)
        return np.where(inside, 1.0 / np.expm1(safe / self.temperature), 0.0)

    def support(self, tol):
        if self.ir_cutoff == 0:
            raise ValueError("BoseEinstein occupancy is not integrable at nu = 0; set ir_cutoff > 0")
        return self.ir_cutoff, self.cutoff

    def breakpoints(self):
        lo, hi = self.ir_cutoff, self.cutoff
        if lo == 0:
            return [hi]
        pts = [lo, hi]
        x = lo
        while x * 2 < hi:
            x *= 2
            pts.append(x)
        return pts


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Piecewise-linear N through ``(nu_grid, values)``; zero outside the grid."""

    nu_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.nu_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise ValueError("Tabulated needs matching 1-D nu_grid and values with >= 2 points")
        if not np.all(np.isfinite(g)) or not np.all(np.isfinite(v)):
            raise ValueError("Tabulated grid and values must be finite")
        if np.any(np.diff(g) <= 0):
            raise ValueError("Tabulated nu_grid must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("Tabulated values must be >= 0")
        object.__setattr__(self, "nu_grid", g)
        object.__setattr__(self, "values", v)

    def __call__(self, nu):
        return np.interp(nu, self.nu_grid, self.values, left=0.0, right=0.0)

    def support(self, tol):
        return float(self.nu_grid[0]), float(self.nu_grid[-1])

    def breakpoints(self):
        return list(self.nu_grid)


PhononSpectrum = Union[Flat, Lorentzian, Gaussian, BoseEinstein, Tabulated]

_KINDS = {
    "flat": Flat,
    "lorentzian": Lorentzian,
    "gaussian": Gaussian,
    "bose_einstein": BoseEinstein,
    "tabulated": Tabulated,
}


def spectrum_to_dict(spec: PhononSpectrum) -> dict:
    for name, cls in _KINDS.items():
        if type(spec) is cls:
            break
    if isinstance(spec, Tabulated):
        return {"kind": name, "nu": spec.nu_grid.tolist(), "N": spec.values.tolist()}
    d = {"kind": name}
    d.update({k: getattr(spec, k) for k in spec.__dataclass_fields__})
    return d


def spectrum_from_dict(d: dict, base_dir: Path | None = None) -> PhononSpectrum:
    """Inverse of :func:`spectrum_to_dict`; ``tabulated`` may give ``csv = path``."""
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown bath kind {kind!r}; expected one of {sorted(_KINDS)}")
    if kind == "tabulated":
        if "csv" in d:
            path = Path(d["csv"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return load_tabulated_csv(path)
        return Tabulated(np.asarray(d["nu"], float), np.asarray(d["N"], float))
    return _KINDS[kind](**{k: float(v) for k, v in d.items()})


def load_tabulated_csv(path) -> Tabulated:
    """Read a two-column ``nu, N`` CSV with a header row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise ValueError(f"{path}: need a header and at least two data rows")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 2:
            raise ValueError(f"{path}:{lineno}: expected two columns")
        try:
            data.append((float(row[0]), float(row[1])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    arr = np.asarray(data)
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ValueError(f"{path}: nu column must be strictly increasing")
    return Tabulated(arr[:, 0], arr[:, 1])


def is_flat(spec: PhononSpectrum) -> bool:
    return isinstance(spec, Flat)


def n_of(spec: PhononSpectrum, nu):
    """Occupancy N(nu); scalar in, float out."""
    out = spec(nu)
    return float(out) if np.ndim(out) == 0 else out


def _theta_of(nu, d: DerivedOscillator, osc: OscillatorParams):
    return np.arctan(2.0 * (np.asarray(nu, dtype=float) - d.omega) / osc.gamma)


def _theta_range(spec, d, osc, tol):
    lo, hi = spec.support(tol)
    a = -0.5 * math.pi if lo == -math.inf else float(_theta_of(lo, d, osc))
    b = 0.5 * math.pi if hi == math.inf else float(_theta_of(hi, d, osc))
    pts = [float(x) for x in _theta_of(np.asarray(spec.breakpoints(), float), d, osc)] if spec.breakpoints() else []
    pts += list(np.linspace(a, b, 33)[1:-1])
    return a, b, pts


def n_eff(spec: PhononSpectrum, osc: OscillatorParams, d: DerivedOscillator, tol: float = 1e-10) -> float:
    """Effective occupancy: N averaged over the Lorentzian of width gamma at omega.

    Raises :class:`~optomirror.numerics.QuadratureError` if the requested
    tolerance cannot be met.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if osc.gamma == 0:
        # the averaging Lorentzian collapses onto omega
        return float(n_of(spec, d.omega))
    a, b, pts = _theta_range(spec, d, osc, tol)
    if not a < b:
        return 0.0

    def f(theta):
        return spec(d.omega + 0.5 * osc.gamma * np.tan(theta))

    value, _ = adaptive_quad(f, a, b, QuadratureSpec(abs_tol=tol, rel_tol=tol), points=pts)
    return max(0.0, float(value) / math.pi)


def lamb_dicke_prefactor(spec: PhononSpectrum, osc: OscillatorParams, d: DerivedOscillator, v: float,
                         tol: float = 1e-10) -> float:
    """``exp(-(N_eff + 1/2) Omega v^2 / omega)``."""
    if v == 0:
        return 1.0
    return math.exp(-(n_eff(spec, osc, d, tol) + 0.5) * osc.Omega * v * v / d.omega)


def _vacuum_part(osc, d, v, t):
    t = np.asarray(t, dtype=float)
    return (osc.Omega * v * v / (2 * d.omega)) * np.exp((1j * d.omega - 0.5 * osc.gamma) * t)


def _flat_n_part(N0, osc, d, v, t):
    t = np.asarray(t, dtype=float)
    return N0 * (osc.Omega * v * v / d.omega) * np.exp(-0.5 * osc.gamma * t) * np.cos(d.omega * t)


def thermal_kernel(spec: PhononSpectrum, osc: OscillatorParams, d: DerivedOscillator, v: float, t: float,
                   tol: float = 1e-10, analytic_flat: bool = True) -> complex:
    """Thermal exponent entering the heterodyne spectrum at time lag ``t >= 0``.

    The vacuum part ``(Omega v^2 / 2 omega) exp((i omega - gamma/2) t)`` is
    analytic. The N-dependent part, which is real, is a quadrature over
    the tan-mapped frequency axis (closed form for :class:`Flat` unless
    ``analytic_flat`` is false).
    """
    if t < 0:
        raise ValueError("thermal_kernel is defined for t >= 0 only")
    if v == 0:
        return 0j
    vac = complex(_vacuum_part(osc, d, v, t))
    if isinstance(spec, Flat) and analytic_flat:
        return vac + float(_flat_n_part(spec.N0, osc, d, v, t))
    if isinstance(spec, Flat):
        return complex(thermal_kernel_table(spec, osc, d, v, [t], tol, analytic_flat=False).values[0])
    a, b, pts = _theta_range(spec, d, osc, tol)
    if not a < b:
        return vac
    scale = osc.Omega * v * v / (math.pi * d.omega)

    def f(theta):
        nu = d.omega + 0.5 * osc.gamma * np.tan(theta)
        return spec(nu) * np.cos(nu * t)

    n_pts = max(33, int(8 * t * osc.gamma) + 33)
    pts = pts + list(np.linspace(a, b, n_pts)[1:-1])
    val, _ = adaptive_quad(f, a, b, QuadratureSpec(abs_tol=tol / scale, rel_tol=tol, max_subdivisions=200000),
                           points=pts)
    return vac + scale * float(val)


@dataclass(frozen=True, eq=False)
class ThermalKernelTable:
    """Thermal kernel sampled at fixed times, with cubic interpolation between.

    Values at the stored times are exact quadrature results; ``__call__``
    interpolates (``order`` records the interpolation degree).
    """

    t_grid: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    order: int = 3
    _spline: object = field(default=None, repr=False)

    def __call__(self, t):
        spline = self._spline
        if spline is None:
            idx = np.argsort(self.t_grid, kind="stable")
            tg, vals = self.t_grid[idx], self.values[idx]
            keep = np.concatenate([[True], np.diff(tg) > 0])
            spline = CubicSpline(tg[keep], vals[keep])
            object.__setattr__(self, "_spline", spline)
        return spline(t)


def thermal_kernel_table(spec: PhononSpectrum, osc: OscillatorParams, d: DerivedOscillator, v: float,
                         t_grid, tol: float = 1e-10, analytic_flat: bool = True) -> ThermalKernelTable:
    """Evaluate the thermal kernel at every time in ``t_grid`` at once.

    For non-flat spectra the frequency integral is expanded on adaptive
    Legendre panels once; each time lag is then an exact panel-wise
    Fourier integral of that expansion.
    """
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < 0):
        raise ValueError("t_grid must be non-negative")
    if v == 0:
        z = np.zeros(t.shape, dtype=complex)
        return ThermalKernelTable(t, z, np.zeros(t.shape))
    vac = _vacuum_part(osc, d, v, t)
    if isinstance(spec, Flat) and analytic_flat:
        return ThermalKernelTable(t, vac + _flat_n_part(spec.N0, osc, d, v, t), np.zeros(t.shape))
    lo, hi = spec.support(tol)
    if isinstance(spec, Flat):
        # drop Lorentzian-weight tails of mass ~ tol
        reach = 0.5 * osc.gamma / math.tan(min(tol, 0.1))
        lo, hi = d.omega - reach, d.omega + reach
    if not lo < hi:
        return ThermalKernelTable(t, vac, np.zeros(t.shape))
    a, b = float(_theta_of(lo, d, osc)), float(_theta_of(hi, d, osc))
    thetas = np.linspace(a, b, 129)
    edges = d.omega + 0.5 * osc.gamma * np.tan(thetas)
    edges = np.concatenate([edges, [x for x in spec.breakpoints() if lo < x < hi], [lo, hi]])
    edges = np.unique(np.clip(edges, lo, hi))
    w0 = osc.Omega * v * v * osc.gamma / (4 * math.pi * d.omega)

    def weighted(nu):
        return w0 * spec(nu) / (0.25 * osc.gamma ** 2 + (nu - d.omega) ** 2)

    panels = legendre_panels(weighted, edges, order=16, abs_tol=0.1 * tol)
    ft = FourierPanels(panels)
    vals, errs = ft.many(t)
    return ThermalKernelTable(t, vac + 2.0 * vals.real, 2.0 * errs)


__all__ = [
    "Flat",
    "Lorentzian",
    "Gaussian",
    "BoseEinstein",
    "Tabulated",
    "PhononSpectrum",
    "ThermalKernelTable",
    "is_flat",
    "load_tabulated_csv",
    "n_of",
    "n_eff",
    "lamb_dicke_prefactor",
    "spectrum_from_dict",
    "spectrum_to_dict",
    "thermal_kernel",
    "thermal_kernel_table",
]
