import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import i0, iv

from optomirror.bath import Flat, Lorentzian
from optomirror.model import make_config
from optomirror.peaks import (
    DegenerateInputError,
    PeakOverlapWarning,
    PeakSeriesParams,
    UnresolvedPeaksWarning,
    antistokes_peak,
    decompose,
    elastic_peak,
    peak,
    peak_weight,
    sigma_from_peaks,
    stokes_peak,
    thermometry_estimate,
    thermometry_from_spectrum,
    thermometry_report,
    total_weight,
)
from optomirror.spectrum import MuGrid, susceptibility

W0 = 10.0


def cfg(v=0.5, gamma=0.02, varkappa=0.02, Omega=1.0):
    return make_config(Omega, gamma, amp2=1.0, omega0=W0, v=v, varkappa=varkappa)


def params_for(c, N, **kw):
    return PeakSeriesParams.from_config(c, float(N), **kw)


def test_param_validation():
    with pytest.raises(ValueError):
        PeakSeriesParams(-0.1, 0.1)
    with pytest.raises(ValueError):
        PeakSeriesParams(0.1, 0.1, tol=0)
    p = PeakSeriesParams(1.0, 0.3)
    assert p.x == pytest.approx(0.09 * 2)


def test_x_matches_definition():
    c = cfg(v=0.7)
    N = 1.3
    p = params_for(c, N)
    assert p.x == pytest.approx(c.Omega ** 2 * c.v ** 4 * N * (N + 1) / (4 * c.omega ** 2), rel=1e-14)


def test_from_config_uses_n_at_omega():
    c = cfg()
    spec = Lorentzian(c.omega, 0.3, 1.7)
    assert PeakSeriesParams.from_config(c, spec).N_at_omega == pytest.approx(1.7, rel=1e-12)


def test_ground_state_elastic():
    c = cfg()
    p = params_for(c, 0.0)
    mu = np.linspace(8, 12, 101)
    k = c.kappa
    assert np.allclose(elastic_peak(p, c, mu), k / (k * k / 4 + (mu - W0) ** 2), rtol=1e-14, atol=0)
    assert peak_weight(p, 0) == 1.0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_ground_state_stokes(n):
    c = cfg()
    p = params_for(c, 0.0)
    mu = np.linspace(5, 12, 101)
    Om, v, w, k, g = c.Omega, c.v, c.omega, c.kappa, c.gamma
    amp = Om ** n * v ** (2 * n) / (math.factorial(n) * 2 ** n * w ** n)
    expected = amp * (k + n * g) / ((k + n * g) ** 2 / 4 + (mu - W0 + n * w) ** 2)
    assert np.allclose(stokes_peak(p, c, n, mu), expected, rtol=1e-13, atol=0)
    assert peak_weight(p, -n) == pytest.approx(amp, rel=1e-14)
    assert np.all(antistokes_peak(p, c, n, mu) == 0)


def test_elastic_weight_is_bessel():
    p = PeakSeriesParams(0.8, 0.9)
    x = p.x
    brute = math.fsum(math.exp(j * math.log(x) - 2 * math.lgamma(j + 1)) for j in range(200))
    assert peak_weight(p, 0) == pytest.approx(brute, rel=1e-12)
    assert peak_weight(p, 0) == pytest.approx(i0(2 * math.sqrt(x)), rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_sideband_weights_are_bessel(n):
    N, y = 0.8, 0.9
    p = PeakSeriesParams(N, y)
    s = 2 * y * math.sqrt(N * (N + 1))
    base = iv(n, s)
    assert peak_weight(p, -n) == pytest.approx(((N + 1) / N) ** (n / 2) * base, rel=1e-12)
    assert peak_weight(p, n) == pytest.approx((N / (N + 1)) ** (n / 2) * base, rel=1e-12)


@pytest.mark.parametrize("N", [0.1, 0.7, 1.0, 3.0, 20.0])
def test_detailed_balance(N):
    p = PeakSeriesParams(N, 0.4)
    for n in range(1, 6):
        assert peak_weight(p, n) / peak_weight(p, -n) == pytest.approx((N / (N + 1)) ** n, rel=1e-12)


def test_ratio_quarter():
    p = PeakSeriesParams(1.0, 0.4)
    assert peak_weight(p, 2) / peak_weight(p, -2) == pytest.approx(0.25, rel=1e-12)


@pytest.mark.parametrize("n", [0, -1, 1, -3])
def test_weight_against_profile_quadrature(n):
    c = cfg(v=0.8)
    p = params_for(c, 0.9)
    pk = peak(p, c, n)
    center = W0 + n * c.omega
    val = sum(quad(lambda m: float(pk(m)), a, b, limit=2000, epsabs=0, epsrel=1e-11)[0]
              for a, b in ((-np.inf, center), (center, np.inf)))
    assert val / (2 * math.pi) == pytest.approx(pk.weight, rel=1e-6)


def test_total_weight_closed_form():
    p = PeakSeriesParams(1.2, 0.6)
    dec = decompose(p, cfg())
    captured = sum(pk.weight for pk in dec.peaks)
    assert captured == pytest.approx(total_weight(p), rel=1e-10)
    assert dec.residual_weight < 1e-10 * total_weight(p)


def test_decomposition_invariants():
    c = cfg(v=0.8)
    dec = decompose(params_for(c, 0.6), c)
    for pk in dec.peaks:
        assert pk.weight >= 0
        for center, width, amp in pk.components:
            assert center == pytest.approx(W0 + pk.n * c.omega)
            assert width > 0 and amp >= 0
    for row in dec.ratio_table():
        assert row["ratio"] == pytest.approx(row["expected"], rel=1e-10)
    d = dec.to_json_dict()
    assert len(d["peaks"]) == 2 * dec.n_max + 1


def test_fixed_n_max():
    c = cfg()
    dec = decompose(params_for(c, 0.5), c, n_max=2)
    assert dec.n_max == 2 and len(dec.peaks) == 5
    assert dec.residual_weight > 0


def test_sigma_from_peaks_zero_v():
    c = cfg(v=0.0)
    g = MuGrid.linspace(8, 12, 201)
    r = sigma_from_peaks(params_for(c, 0.5), c, g)
    k = c.kappa
    assert r.kind == "peaks-approx"
    assert np.allclose(r.values, 2 * k / (k * k / 4 + (g.values - W0) ** 2), rtol=1e-14, atol=0)


def test_sigma_integral_matches_weights():
    c = cfg(v=0.6)
    p = params_for(c, 0.5)
    dec = decompose(p, c)
    pk_sum = 0.0
    for pk in dec.peaks:
        for center, width, amp in pk.components:
            pk_sum += amp
    # (1/2pi) int Sigma = 2 * prefactor * sum of weights
    expected = 2 * dec.prefactor * sum(pk.weight for pk in dec.peaks)
    assert 2 * dec.prefactor * pk_sum == pytest.approx(expected, rel=1e-12)
    mu_tot = quad(lambda m: float(dec(m)), -np.inf, np.inf, limit=4000, points=None)[0] / (2 * math.pi)
    assert mu_tot == pytest.approx(expected, rel=1e-6)


def test_flat_bath_peaks_match_quadrature():
    c = cfg(v=0.5, gamma=0.02, varkappa=0.02)
    g = MuGrid.linspace(4, 16, 2001)
    N = 0.5
    quad_sigma = susceptibility(c, Flat(N), g)
    peak_sigma = sigma_from_peaks(params_for(c, N), c, g)
    rel = np.abs(quad_sigma.values - peak_sigma.values) / np.max(quad_sigma.values)
    assert np.max(rel) < 1e-3


def test_thermometry_estimate_examples():
    assert thermometry_estimate(0.2, 0.3) == pytest.approx(2.0)
    assert thermometry_estimate(0.0, 0.3) == 0.0
    p = PeakSeriesParams(0.7, 0.3)
    assert thermometry_estimate(peak_weight(p, 1), peak_weight(p, -1)) == pytest.approx(0.7, abs=1e-10)
    for wp, wm in ((0.3, 0.3), (0.4, 0.3), (-0.1, 0.3), (float("nan"), 1.0)):
        with pytest.raises(DegenerateInputError):
            thermometry_estimate(wp, wm)


def resolved_cfg():
    return cfg(v=0.5, gamma=0.002, varkappa=0.002)


@pytest.mark.parametrize("N", [0.5, 0.1, 2.0])
def test_thermometry_synthetic(N):
    c = resolved_cfg()
    g = MuGrid.linspace(8, 12, 40001)
    r = sigma_from_peaks(params_for(c, N), c, g)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        est = thermometry_from_spectrum(r, c)
    assert est == pytest.approx(N, rel=2e-2)


def test_thermometry_ground_state():
    c = resolved_cfg()
    g = MuGrid.linspace(8, 12, 40001)
    r = sigma_from_peaks(params_for(c, 0.0), c, g)
    # only Lorentzian tails of neighbouring peaks reach the anti-Stokes window;
    # the report's leakage bound is the estimator's floor
    with pytest.warns(PeakOverlapWarning):
        rep = thermometry_report(r, c)
    assert 0 <= rep.estimate <= rep.leakage / (rep.W_minus1 - rep.W_plus1)
    assert rep.estimate < 1e-3


def test_thermometry_overlap_warning():
    c = cfg(v=0.5, gamma=0.1, varkappa=0.8)
    g = MuGrid.linspace(0, 20, 4001)
    r = sigma_from_peaks(params_for(c, 0.5), c, g)
    with pytest.warns(PeakOverlapWarning), pytest.warns(UnresolvedPeaksWarning):
        rep = thermometry_report(r, c)
    assert rep.warnings


def test_thermometry_window_outside_grid():
    c = resolved_cfg()
    r = sigma_from_peaks(params_for(c, 0.5), c, MuGrid.linspace(9.5, 10.5, 101))
    with pytest.raises(ValueError, match="beyond"):
        thermometry_from_spectrum(r, c)
