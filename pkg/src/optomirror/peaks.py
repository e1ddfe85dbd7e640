"""Peak decomposition of the weak-probe susceptibility and sideband thermometry.

With the bath occupancy frozen at its value N at the damped frequency,
the susceptibility is a sum of Lorentzians grouped into peaks at
``omega0 + n*omega``. Writing ``y = Omega v^2/(2 omega)`` and
``x = y^2 N (N+1)``, component ``j`` of peak ``n`` has width
``kappa + (2j + |n|) gamma`` and area

    elastic      x^j / (j!)^2
    Stokes  -n   (N+1)^n y^n x^j / (j! (j+n)!)
    anti-Stokes  N^n     y^n x^j / (j! (j+n)!)

so anti-Stokes/Stokes area ratios are ``(N/(N+1))^n`` term by term.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bath import PhononSpectrum, n_of
from .model import ModelConfig
from .numerics import SeriesError, kahan_series_sum
from .spectrum import MuGrid, SpectrumResult, _as_grid, config_snapshot

#: peaks are added until the omitted weight is below this fraction of the total
WEIGHT_CUTOFF = 1e-10
MAX_PEAK_INDEX = 1000


class DegenerateInputError(ValueError):
    """Sideband areas cannot come from a physical spectrum."""


class PeakOverlapWarning(UserWarning):
    """Neighbouring peaks leak noticeably into a thermometry window."""


class UnresolvedPeaksWarning(UserWarning):
    """Peak widths are not small compared with the mechanical frequency."""


@dataclass(frozen=True)
class PeakSeriesParams:
    N_at_omega: float
    y: float
    tol: float = 1e-12
    max_terms: int = 200
    n_max: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.N_at_omega) and self.N_at_omega >= 0):
            raise ValueError(f"N_at_omega must be >= 0 (got {self.N_at_omega})")
        if not (math.isfinite(self.y) and self.y >= 0):
            raise ValueError(f"y must be >= 0 (got {self.y})")
        if not self.tol > 0:
            raise ValueError("series tolerance must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        if self.n_max is not None and self.n_max < 0:
            raise ValueError("n_max must be >= 0")

    @property
    def x(self) -> float:
        N = self.N_at_omega
        return self.y * self.y * N * (N + 1.0)

    @classmethod
    def from_config(cls, cfg: ModelConfig, spec: PhononSpectrum | float, **kw) -> "PeakSeriesParams":
        """Use N evaluated at the damped frequency (not N_eff)."""
        N = float(spec) if isinstance(spec, (int, float)) else float(n_of(spec, cfg.omega))
        y = cfg.Omega * cfg.v ** 2 / (2.0 * cfg.omega)
        return cls(N, y, **kw)


@dataclass(frozen=True)
class Peak:
    n: int
    weight: float
    #: (center, width, amplitude); ``amplitude`` is (1/2pi) times the component's integral
    components: tuple[tuple[float, float, float], ...]
    terms: int

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        out = np.zeros(mu.shape)
        for c, w, a in self.components:
            out = out + a * w / (0.25 * w * w + (mu - c) ** 2)
        return out


def _component_areas(params: PeakSeriesParams, n: int) -> list[float]:
    N, y, x = params.N_at_omega, params.y, params.x
    k = abs(n)
    if n < 0:
        first = math.exp(k * math.log((N + 1.0) * y) - math.lgamma(k + 1)) if y > 0 else 0.0
    elif n > 0:
        first = math.exp(k * math.log(N * y) - math.lgamma(k + 1)) if N * y > 0 else 0.0
    else:
        first = 1.0
    areas: list[float] = []

    def gen():
        t = first
        j = 0
        while True:
            areas.append(t)
            yield t
            t = t * x / ((j + 1) * (j + 1 + k))
            j += 1

    kahan_series_sum(gen(), params.tol, params.max_terms)
    return areas


def _series_weight(areas: list[float]) -> float:
    total, _ = kahan_series_sum(iter(areas), 0.0, len(areas) + 1)
    return total


def peak(params: PeakSeriesParams, cfg: ModelConfig, n: int) -> Peak:
    """Peak ``n`` (negative: Stokes, positive: anti-Stokes, 0: elastic)."""
    areas = _component_areas(params, n)
    k = abs(n)
    center = cfg.omega0 + n * cfg.omega
    comps = tuple((center, cfg.kappa + (2 * j + k) * cfg.gamma, a) for j, a in enumerate(areas))
    return Peak(n, _series_weight(areas), comps, len(areas))


def elastic_peak(params: PeakSeriesParams, cfg: ModelConfig, mu):
    return peak(params, cfg, 0)(mu)


def stokes_peak(params: PeakSeriesParams, cfg: ModelConfig, n: int, mu):
    if n < 1:
        raise ValueError("Stokes peak index must be >= 1")
    return peak(params, cfg, -n)(mu)


def antistokes_peak(params: PeakSeriesParams, cfg: ModelConfig, n: int, mu):
    if n < 1:
        raise ValueError("anti-Stokes peak index must be >= 1")
    return peak(params, cfg, n)(mu)


def peak_weight(params: PeakSeriesParams, n: int) -> float:
    """Area ``(1/2pi) int Pi_n dmu`` of peak ``n``."""
    return _series_weight(_component_areas(params, n))


def total_weight(params: PeakSeriesParams) -> float:
    """Sum of all peak weights, ``exp((2N+1) y)`` in closed form."""
    return math.exp((2.0 * params.N_at_omega + 1.0) * params.y)


@dataclass(frozen=True)
class PeakDecomposition:
    peaks: tuple[Peak, ...]
    prefactor: float
    N_at_omega: float
    residual_weight: float
    n_max: int

    def weight(self, n: int) -> float:
        for p in self.peaks:
            if p.n == n:
                return p.weight
        raise KeyError(n)

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        out = np.zeros(mu.shape)
        for p in sorted(self.peaks, key=lambda p: p.weight):
            out = out + p(mu)
        return 2.0 * self.prefactor * out

    def ratio_table(self) -> list[dict]:
        """Anti-Stokes/Stokes weight ratios next to ``(N/(N+1))^n``."""
        N = self.N_at_omega
        rows = []
        for n in range(1, self.n_max + 1):
            ws, wa = self.weight(-n), self.weight(n)
            rows.append({"n": n, "stokes": ws, "antistokes": wa,
                         "ratio": wa / ws if ws > 0 else float("nan"),
                         "expected": (N / (N + 1.0)) ** n})
        return rows

    def to_json_dict(self) -> dict:
        return {
            "N_at_omega": self.N_at_omega,
            "prefactor": self.prefactor,
            "n_max": self.n_max,
            "residual_weight": self.residual_weight,
            "peaks": [
                {"n": p.n, "weight": p.weight, "center": p.components[0][0],
                 "widths": [c[1] for c in p.components],
                 "amplitudes": [c[2] for c in p.components]}
                for p in sorted(self.peaks, key=lambda p: p.n)
            ],
            "ratios": self.ratio_table(),
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1))


def decompose(params: PeakSeriesParams, cfg: ModelConfig, n_max: int | None = None) -> PeakDecomposition:
    """All peaks up to ``n_max``; chosen from the weight cutoff when omitted."""
    n_max = params.n_max if n_max is None else n_max
    total = total_weight(params)
    peaks = [peak(params, cfg, 0)]
    captured = peaks[0].weight
    n = 0
    while True:
        residual = max(total - captured, 0.0)
        if n_max is not None:
            if n >= n_max:
                break
        elif residual < WEIGHT_CUTOFF * total or n >= MAX_PEAK_INDEX:
            if residual >= WEIGHT_CUTOFF * total:
                raise SeriesError("peak weights did not converge", captured, n)
            break
        n += 1
        for p in (peak(params, cfg, -n), peak(params, cfg, n)):
            peaks.append(p)
            captured += p.weight
    pref = math.exp(-(params.N_at_omega + 0.5) * 2.0 * params.y)
    return PeakDecomposition(tuple(peaks), pref, params.N_at_omega, max(total - captured, 0.0), n)


def sigma_from_peaks(params: PeakSeriesParams, cfg: ModelConfig, grid, n_max: int | None = None) -> SpectrumResult:
    """Susceptibility rebuilt from the peak series (kind ``peaks-approx``).

    The error column bounds the omitted peak weight at its largest
    possible pointwise height plus the series truncation.
    """
    grid = _as_grid(grid)
    dec = decompose(params, cfg, n_max)
    vals = dec(grid.values)
    err = 2.0 * dec.prefactor * dec.residual_weight * 4.0 / cfg.kappa + params.tol * np.abs(vals)
    meta = {"N_at_omega": dec.N_at_omega, "n_max": dec.n_max, "residual_weight": dec.residual_weight,
            "prefactor": dec.prefactor}
    return SpectrumResult(grid, vals, "peaks-approx", np.broadcast_to(err, vals.shape),
                          config_snapshot(cfg, N_at_omega=dec.N_at_omega), None, meta)


def thermometry_estimate(W_plus1: float, W_minus1: float) -> float:
    """Occupancy from anti-Stokes (``W_plus1``) and Stokes (``W_minus1``) areas."""
    if not (math.isfinite(W_plus1) and math.isfinite(W_minus1)):
        raise DegenerateInputError("sideband areas must be finite")
    if W_plus1 < 0:
        raise DegenerateInputError(f"anti-Stokes area must be >= 0 (got {W_plus1})")
    if not W_minus1 > W_plus1:
        raise DegenerateInputError(
            f"Stokes area ({W_minus1}) must exceed anti-Stokes area ({W_plus1})")
    return W_plus1 / (W_minus1 - W_plus1)


@dataclass(frozen=True)
class ThermometryReport:
    estimate: float
    W_plus1: float
    W_minus1: float
    W_elastic: float
    half_width: float
    leakage: float
    warnings: tuple[str, ...] = field(default_factory=tuple)


def _window_area(mu: np.ndarray, y: np.ndarray, lo: float, hi: float) -> float:
    if lo < mu[0] or hi > mu[-1]:
        raise ValueError(f"window [{lo:.6g}, {hi:.6g}] extends beyond the spectrum grid "
                         f"[{mu[0]:.6g}, {mu[-1]:.6g}]")
    inside = (mu > lo) & (mu < hi)
    xs = np.concatenate([[lo], mu[inside], [hi]])
    ys = np.concatenate([[np.interp(lo, mu, y)], y[inside], [np.interp(hi, mu, y)]])
    return float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))) / (2.0 * math.pi)


def _lorentz_fraction(distance: float, half: float, width: float) -> float:
    """Share of a unit Lorentzian at ``distance`` from a window centre inside it."""
    g = 0.5 * width
    return (math.atan((distance + half) / g) - math.atan((distance - half) / g)) / math.pi


def thermometry_report(result: SpectrumResult, cfg: ModelConfig,
                       window_halfwidth: float | None = None) -> ThermometryReport:
    """Sideband areas over windows at ``omega0 -/+ omega`` and the occupancy estimate.

    Windows have half-width ``max(5 (kappa + gamma), window_halfwidth)``.
    The baseline (1 for ``input``/``exact`` spectra, else 0) is removed;
    the estimator is invariant under an overall scale of the areas.
    """
    kappa, gamma, omega = cfg.kappa, cfg.gamma, cfg.omega
    half = 5.0 * (kappa + gamma)
    if window_halfwidth is not None:
        half = max(half, float(window_halfwidth))
    notes = []
    if kappa + gamma > 0.2 * omega:
        msg = (f"peaks are not resolved: kappa + gamma = {kappa + gamma:.4g} is not small "
               f"compared with omega = {omega:.4g}")
        notes.append(msg)
        warnings.warn(msg, UnresolvedPeaksWarning, stacklevel=2)
    mu = result.mu
    y = result.values - result.baseline
    w0 = cfg.omega0
    Wm = _window_area(mu, y, w0 - omega - half, w0 - omega + half)
    Wp = _window_area(mu, y, w0 + omega - half, w0 + omega + half)
    try:
        We = _window_area(mu, y, w0 - half, w0 + half)
    except ValueError:
        We = max(Wm, Wp)
    # neighbours one omega away: the elastic peak and the second sidebands,
    # whose areas are bounded by the elastic and first-sideband areas
    width = kappa + 2.0 * gamma
    frac = _lorentz_fraction(omega, half, width)
    leakage = frac * (We + Wm)
    if half >= 0.5 * omega or leakage > 0.01 * Wp:
        msg = (f"adjacent peaks leak into the sideband windows: estimated leakage "
               f"{leakage:.3g} vs anti-Stokes area {Wp:.3g}")
        notes.append(msg)
        warnings.warn(msg, PeakOverlapWarning, stacklevel=2)
    est = thermometry_estimate(max(Wp, 0.0), Wm)
    return ThermometryReport(est, Wp, Wm, We, half, leakage, tuple(notes))


def thermometry_from_spectrum(result: SpectrumResult, cfg: ModelConfig,
                              window_halfwidth: float | None = None) -> float:
    """Area-based occupancy estimate ``N(omega)`` from a resolved spectrum."""
    return thermometry_report(result, cfg, window_halfwidth).estimate


__all__ = [
    "DegenerateInputError",
    "Peak",
    "PeakDecomposition",
    "PeakOverlapWarning",
    "PeakSeriesParams",
    "ThermometryReport",
    "UnresolvedPeaksWarning",
    "antistokes_peak",
    "decompose",
    "elastic_peak",
    "peak",
    "peak_weight",
    "sigma_from_peaks",
    "stokes_peak",
    "thermometry_estimate",
    "thermometry_from_spectrum",
    "thermometry_report",
    "total_weight",
]
