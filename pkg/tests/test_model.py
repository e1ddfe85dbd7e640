import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optomirror.model import (
    ConfigError,
    DerivedOscillator,
    DetectorParams,
    LaserParams,
    MirrorCoupling,
    ModelConfig,
    OscillatorParams,
    OverdampedError,
    derive_oscillator,
    hamiltonian_mean,
    make_config,
    mean_mode_from_qp,
    mean_qp_from_mode,
    validate_config,
)


def underdamped():
    return st.floats(0.01, 100.0).flatmap(
        lambda Om: st.tuples(st.just(Om), st.floats(1e-6 * Om, 1.999 * Om)))


def test_undamped_limit():
    d = derive_oscillator(OscillatorParams(1.0, 0.0))
    assert d.omega == 1.0
    assert d.tau == 1.0


def test_known_damped_values():
    d = derive_oscillator(OscillatorParams(1.0, 0.6))
    # sqrt(1 - 0.09) evaluated independently
    assert d.omega == pytest.approx(math.sqrt(0.91), abs=1e-15)
    assert d.omega == pytest.approx(0.9539392014169456, abs=1e-15)
    assert d.tau.real == pytest.approx(0.9539392014169456, abs=1e-15)
    assert d.tau.imag == pytest.approx(-0.3, abs=1e-15)


def test_tau_unit_modulus_near_critical():
    d = derive_oscillator(OscillatorParams(2.0, 3.9))
    assert abs(abs(d.tau) - 1.0) < 1e-12


@pytest.mark.parametrize("Om,g", [(1.0, 2.0), (1.0, 3.0), (0.5, 1.0)])
def test_overdamped_rejected(Om, g):
    with pytest.raises(OverdampedError, match="overdamped"):
        derive_oscillator(OscillatorParams(Om, g))


@given(underdamped())
@settings(max_examples=200, deadline=None)
def test_parametrization_identities(pair):
    Om, g = pair
    d = derive_oscillator(OscillatorParams(Om, g))
    assert abs(abs(d.tau) - 1.0) < 1e-12
    assert abs(d.omega ** 2 + g * g / 4 - Om * Om) <= 1e-12 * Om * Om


def test_mode_amplitude_examples():
    o = OscillatorParams(1.0, 0.0)
    d = derive_oscillator(o)
    assert mean_mode_from_qp(0.0, 0.0, d, o) == 0
    assert mean_mode_from_qp(1.0, 0.0, d, o) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert mean_qp_from_mode(0j, d, o) == (0.0, 0.0)
    q, p = mean_qp_from_mode(1j, d, o)
    assert q == pytest.approx(0.0, abs=1e-15)
    assert p == pytest.approx(math.sqrt(2), abs=1e-14)


@given(underdamped(), st.floats(-50, 50), st.floats(-50, 50))
@settings(max_examples=200, deadline=None)
def test_mode_round_trip(pair, q, p):
    o = OscillatorParams(*pair)
    d = derive_oscillator(o)
    q2, p2 = mean_qp_from_mode(mean_mode_from_qp(q, p, d, o), d, o)
    scale = 1 + abs(q) + abs(p)
    assert abs(q2 - q) < 1e-12 * scale
    assert abs(p2 - p) < 1e-12 * scale


def test_qp_from_mode_is_real():
    rng = np.random.default_rng(1)
    o = OscillatorParams(1.3, 0.7)
    d = derive_oscillator(o)
    s = math.sqrt(o.Omega / (2 * d.omega))
    for a in rng.normal(size=20) + 1j * rng.normal(size=20):
        qc = s * (d.tau.conjugate() * a + d.tau * a.conjugate())
        pc = 1j * s * (a.conjugate() - a)
        assert abs(qc.imag) < 1e-14 and abs(pc.imag) < 1e-14


def test_hamiltonian_mean():
    d = derive_oscillator(OscillatorParams(1.0, 0.6))
    assert hamiltonian_mean(0.0, d) == pytest.approx(0.5 * d.omega)
    assert hamiltonian_mean(2.0, d) == pytest.approx(2.5 * d.omega)


def test_valid_config_passes_unchanged():
    cfg = make_config(1.0, 0.1, amp2=0.5, v=0.3, Lp=0.01)
    assert validate_config(cfg) is cfg
    assert cfg.kappa == pytest.approx(0.03)


def test_negative_gamma_named():
    with pytest.raises(ConfigError) as err:
        make_config(1.0, -1.0)
    assert any("gamma" in v for v in err.value.violations)


def test_overdamped_config():
    with pytest.raises(OverdampedError):
        make_config(1.0, 2.0)


def test_all_violations_listed():
    with pytest.raises(ConfigError) as err:
        make_config(1.0, 0.1, amp2=-1.0, omega0=-2.0, Lp=-0.1, varkappa=0.0, phi=7.0)
    text = " ".join(err.value.violations)
    for word in ("amp2", "omega0", "Lp", "varkappa", "phi"):
        assert word in text
    assert len(err.value.violations) == 5


def test_inconsistent_derived_rejected():
    cfg = make_config(1.0, 0.1)
    bad = ModelConfig(cfg.osc, DerivedOscillator(0.9, cfg.tau), cfg.laser, cfg.mirror, cfg.detector,
                      cfg.kappa)
    with pytest.raises(ConfigError, match="derived.omega"):
        validate_config(bad)
    bad = ModelConfig(cfg.osc, cfg.derived, cfg.laser, cfg.mirror, cfg.detector, 1.0)
    with pytest.raises(ConfigError, match="kappa"):
        validate_config(bad)


def test_dict_round_trip_and_updates():
    cfg = make_config(1.0, 0.1, amp2=0.5, v=0.3, Lp=0.01, phase=1.0, phi=0.5, alpha=0.2)
    again = ModelConfig.from_dict(cfg.to_dict())
    assert again == cfg
    moved = cfg.with_updates(mirror=MirrorCoupling(0.4))
    assert moved.v == 0.4 and moved.osc == cfg.osc
    new = cfg.with_updates(osc=OscillatorParams(2.0, 0.1))
    assert new.omega == pytest.approx(math.sqrt(4 - 0.0025))


def test_create_equivalent_to_make_config():
    a = ModelConfig.create(OscillatorParams(1.0, 0.1), LaserParams(0.2, 5.0), MirrorCoupling(0.1),
                           DetectorParams(0.05))
    assert a == make_config(1.0, 0.1, amp2=0.2, omega0=5.0, v=0.1, varkappa=0.05)
