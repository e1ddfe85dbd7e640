"""Mechanical response h(r) and the photon-scattering integrals built on it.

    h(r) = (Omega/omega) exp(-gamma r/2) sin(omega r)
    A    = int_0^inf (exp(i v^2 h(u)) - 1) du
    K(t) = int_0^inf (exp(i v^2 h(t+s)) - 1)(exp(-i v^2 h(s)) - 1) ds

No series expansion of exp(i v^2 h) is used; everything is quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_interp_spline

from .model import DerivedOscillator, ModelConfig, OscillatorParams
from .numerics import QuadratureSpec, half_line_correlation, legendre_panels, semi_infinite_quad


@dataclass(frozen=True)
class OpticalKernelParams:
    osc: OscillatorParams
    derived: DerivedOscillator
    v: float
    tol: float = 1e-11
    #: integrals over the response are cut at ``envelope_cutoff/gamma``
    envelope_cutoff: float = 40.0

    @classmethod
    def from_config(cls, cfg: ModelConfig, tol: float = 1e-11) -> "OpticalKernelParams":
        return cls(cfg.osc, cfg.derived, cfg.v, tol)

    @property
    def u_max(self) -> float:
        return self.envelope_cutoff / self.osc.gamma


def h(r, osc: OscillatorParams, d: DerivedOscillator):
    """Impulse response of the damped oscillator's position to a momentum kick."""
    r = np.asarray(r, dtype=float)
    out = (osc.Omega / d.omega) * np.exp(-0.5 * osc.gamma * r) * np.sin(d.omega * r)
    return float(out) if out.ndim == 0 else out


def _phi(params: OpticalKernelParams):
    v2 = params.v * params.v
    osc, d = params.osc, params.derived

    def phi(u):
        return np.expm1(1j * v2 * h(u, osc, d))
    return phi


def scattering_exponent(params: OpticalKernelParams, method: str = "gk") -> complex:
    """``A = int_0^inf (exp(i v^2 h(u)) - 1) du``.

    ``method="gk"`` uses adaptive Gauss-Kronrod on the truncated half line;
    ``method="legendre"`` uses adaptive Legendre panels. The two are
    independent schemes and are compared in the test-suite.
    """
    if params.v == 0:
        return 0j
    osc, d = params.osc, params.derived
    phi = _phi(params)
    bound = params.v ** 2 * osc.Omega / d.omega
    if method == "gk":
        spec = QuadratureSpec(abs_tol=params.tol, rel_tol=params.tol, max_subdivisions=100000)
        value, _ = semi_infinite_quad(phi, 0.5 * osc.gamma, d.omega, spec, bound=bound)
        return complex(value)
    if method == "legendre":
        T = math.log(100 * bound / params.tol) / (0.5 * osc.gamma)
        n = max(1, int(math.ceil(T / (math.pi / (2 * d.omega)))))
        pan = legendre_panels(phi, np.linspace(0.0, T, n + 1), order=16, abs_tol=params.tol)
        return pan.integral()
    raise ValueError(f"unknown method {method!r}")


def kick_kernel(params: OpticalKernelParams, t: float) -> complex:
    """K(t) by direct adaptive quadrature (the reference path)."""
    if t < 0:
        raise ValueError("kick_kernel is defined for t >= 0 only")
    if params.v == 0:
        return 0j
    osc, d = params.osc, params.derived
    phi = _phi(params)
    bound = (params.v ** 2 * osc.Omega / d.omega) ** 2 * math.exp(-0.5 * osc.gamma * t)
    if bound < 0.01 * params.tol:
        return 0j

    def f(s):
        return phi(t + s) * np.conj(phi(s))

    spec = QuadratureSpec(abs_tol=params.tol, rel_tol=params.tol, max_subdivisions=100000)
    value, _ = semi_infinite_quad(f, osc.gamma, d.omega, spec, bound=bound)
    return complex(value)


@dataclass(frozen=True, eq=False)
class KickKernelTable:
    """K(t) on a uniform grid; quintic-spline interpolation in between.

    Beyond ``t_grid[-1]`` the kernel is treated as zero.
    """

    t_grid: np.ndarray
    values: np.ndarray
    order: int = 5
    _spline: object = field(default=None, repr=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        spline = self._spline
        if spline is None:
            spline = make_interp_spline(self.t_grid, self.values, k=self.order)
            object.__setattr__(self, "_spline", spline)
        out = spline(np.clip(t, 0.0, self.t_grid[-1]))
        return np.where(t > self.t_grid[-1], 0.0, out)


def kick_kernel_table(params: OpticalKernelParams, t_max: float) -> KickKernelTable:
    """Tabulate K(t) for ``0 <= t <= t_max`` by one FFT correlation.

    ``exp(i v^2 h) - 1`` is sampled on a uniform grid fine enough for its
    harmonics; the s-integral uses trapezoid weights with Gregory end
    corrections.
    """
    osc, d = params.osc, params.derived
    if params.v == 0:
        grid = np.array([0.0, t_max])
        return KickKernelTable(grid, np.zeros(2, dtype=complex), order=1)
    strength = params.v ** 2 * osc.Omega / d.omega
    step = math.pi / (128.0 * d.omega * (1.0 + strength))
    bound = strength ** 2
    s_max = max(params.u_max, math.log(max(100 * bound / (params.tol * osc.gamma), math.e)) / osc.gamma)
    t_tab = min(t_max, 2 * s_max)
    n_lags = int(math.ceil(t_tab / step)) + 1
    n = n_lags + int(math.ceil(s_max / step)) + 1
    grid = np.arange(n) * step
    phi = _phi(params)(grid)
    values = half_line_correlation(phi, step, n_lags)
    return KickKernelTable(grid[:n_lags], values)


__all__ = [
    "OpticalKernelParams",
    "KickKernelTable",
    "h",
    "scattering_exponent",
    "kick_kernel",
    "kick_kernel_table",
]
