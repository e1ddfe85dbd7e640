"""Physical parameters of the illuminated micro-mirror and derived quantities.

Units are dimensionless with hbar = 1; every rate and frequency shares one
time unit. Frequencies are angular (rad/time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

#: Tolerance used when re-checking derived quantities.
DERIVED_TOL = 1e-12


class ConfigError(ValueError):
    """A configuration violates one or more invariants.

    ``violations`` lists one human-readable message per problem.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.violations))


class OverdampedError(ConfigError):
    """Omega <= gamma/2: the oscillator is not underdamped."""


@dataclass(frozen=True)
class OscillatorParams:
    Omega: float
    gamma: float


@dataclass(frozen=True)
class DerivedOscillator:
    """Damped frequency ``omega`` and unit-modulus phase factor ``tau``."""

    omega: float
    tau: complex


@dataclass(frozen=True)
class LaserParams:
    """Laser drive. Only ``amp2`` enters computed quantities."""

    amp2: float
    omega0: float
    Lp: float = 0.0
    phase: float = 0.0


@dataclass(frozen=True)
class MirrorCoupling:
    v: float
    phi: float = 0.0


@dataclass(frozen=True)
class DetectorParams:
    varkappa: float
    alpha: float = 0.0


@dataclass(frozen=True)
class ModelConfig:
    """Full parameter set. Build it with :meth:`create`."""

    osc: OscillatorParams
    derived: DerivedOscillator
    laser: LaserParams
    mirror: MirrorCoupling
    detector: DetectorParams
    kappa: float = field(default=float("nan"))

    @classmethod
    def create(cls, osc, laser, mirror, detector) -> "ModelConfig":
        """Derive ``derived`` and ``kappa``, then validate everything."""
        if _oscillator_violations(osc):
            derived = DerivedOscillator(float("nan"), complex("nan"))
        else:
            derived = derive_oscillator(osc)
        cfg = cls(osc, derived, laser, mirror, detector, detector.varkappa + laser.Lp)
        return validate_config(cfg)

    def with_updates(self, **changes) -> "ModelConfig":
        """Copy with sub-records replaced, e.g. ``mirror=MirrorCoupling(0.3)``.

        Derived quantities are recomputed.
        """
        parts = dict(osc=self.osc, laser=self.laser, mirror=self.mirror, detector=self.detector)
        parts.update(changes)
        return ModelConfig.create(**parts)

    @property
    def Omega(self) -> float:
        return self.osc.Omega

    @property
    def gamma(self) -> float:
        return self.osc.gamma

    @property
    def omega(self) -> float:
        return self.derived.omega

    @property
    def tau(self) -> complex:
        return self.derived.tau

    @property
    def amp2(self) -> float:
        return self.laser.amp2

    @property
    def v(self) -> float:
        return self.mirror.v

    @property
    def omega0(self) -> float:
        return self.laser.omega0

    def to_dict(self) -> dict:
        """Plain nested dict of the independent parameters."""
        return {
            "oscillator": {"Omega": self.osc.Omega, "gamma": self.osc.gamma},
            "laser": {
                "amp2": self.laser.amp2,
                "phase": self.laser.phase,
                "omega0": self.laser.omega0,
                "Lp": self.laser.Lp,
            },
            "mirror": {"v": self.mirror.v, "phi": self.mirror.phi},
            "detector": {"varkappa": self.detector.varkappa, "alpha": self.detector.alpha},
            "derived": {
                "omega": self.derived.omega,
                "tau": [self.derived.tau.real, self.derived.tau.imag],
                "kappa": self.kappa,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        o, la, m, de = d["oscillator"], d["laser"], d["mirror"], d["detector"]
        return cls.create(
            OscillatorParams(float(o["Omega"]), float(o["gamma"])),
            LaserParams(
                amp2=float(la["amp2"]),
                omega0=float(la["omega0"]),
                Lp=float(la.get("Lp", 0.0)),
                phase=float(la.get("phase", 0.0)),
            ),
            MirrorCoupling(float(m["v"]), float(m.get("phi", 0.0))),
            DetectorParams(float(de["varkappa"]), float(de.get("alpha", 0.0))),
        )


def _oscillator_violations(osc: OscillatorParams) -> list[str]:
    out = []
    if not (math.isfinite(osc.Omega) and osc.Omega > 0):
        out.append(f"Omega must be positive (got {osc.Omega})")
    if not (math.isfinite(osc.gamma) and osc.gamma > 0):
        out.append(f"gamma must be positive (got {osc.gamma})")
    if not out and not osc.Omega > osc.gamma / 2:
        out.append(f"overdamped: need Omega > gamma/2 (Omega={osc.Omega}, gamma={osc.gamma})")
    return out


def derive_oscillator(osc: OscillatorParams) -> DerivedOscillator:
    """Damped frequency and phase factor of an underdamped oscillator.

    ``omega = sqrt(Omega**2 - gamma**2/4)`` and
    ``tau = omega/Omega - 1j*gamma/(2*Omega)``. ``gamma = 0`` is accepted
    here as the undamped limit; a full :class:`ModelConfig` needs
    ``gamma > 0``.
    """
    if osc.gamma == 0 and math.isfinite(osc.Omega) and osc.Omega > 0:
        problems = []
    else:
        problems = _oscillator_violations(osc)
    if problems:
        cls = OverdampedError if any("overdamped" in p for p in problems) else ConfigError
        raise cls(problems)
    Om, g = osc.Omega, osc.gamma
    # (Om - g/2)(Om + g/2) avoids cancellation near critical damping
    omega = math.sqrt((Om - 0.5 * g) * (Om + 0.5 * g))
    tau = complex(omega / Om, -0.5 * g / Om)
    return DerivedOscillator(omega, tau)


def mean_mode_from_qp(q_mean: float, p_mean: float, d: DerivedOscillator, osc: OscillatorParams) -> complex:
    """Mode amplitude ``sqrt(Omega/(2 omega)) (q + i tau p)``."""
    return math.sqrt(osc.Omega / (2 * d.omega)) * (q_mean + 1j * d.tau * p_mean)


def mean_qp_from_mode(a_mean: complex, d: DerivedOscillator, osc: OscillatorParams) -> tuple[float, float]:
    """Inverse of :func:`mean_mode_from_qp`."""
    s = math.sqrt(osc.Omega / (2 * d.omega))
    a = complex(a_mean)
    q = s * (d.tau.conjugate() * a + d.tau * a.conjugate())
    p = 1j * s * (a.conjugate() - a)
    return q.real, p.real


def hamiltonian_mean(N: float, d: DerivedOscillator) -> float:
    """Mean mechanical energy ``omega (N + 1/2)`` at occupancy N."""
    return d.omega * (N + 0.5)


def validate_config(cfg: ModelConfig) -> ModelConfig:
    """Return ``cfg`` unchanged if valid; otherwise raise :class:`ConfigError`
    listing every violation."""
    problems = _oscillator_violations(cfg.osc)
    if not problems:
        ref = derive_oscillator(cfg.osc)
        if abs(ref.omega - cfg.derived.omega) > DERIVED_TOL * max(1.0, ref.omega):
            problems.append("derived.omega inconsistent with oscillator parameters")
        if abs(ref.tau - cfg.derived.tau) > DERIVED_TOL:
            problems.append("derived.tau inconsistent with oscillator parameters")
    la, m, de = cfg.laser, cfg.mirror, cfg.detector
    if not (math.isfinite(la.amp2) and la.amp2 >= 0):
        problems.append(f"laser amp2 must be >= 0 (got {la.amp2})")
    if not (math.isfinite(la.omega0) and la.omega0 > 0):
        problems.append(f"laser omega0 must be positive (got {la.omega0})")
    if not (math.isfinite(la.Lp) and la.Lp >= 0):
        problems.append(f"laser Lp must be >= 0 (got {la.Lp})")
    if not math.isfinite(la.phase):
        problems.append("laser phase must be finite")
    if not math.isfinite(m.v):
        problems.append(f"mirror v must be real and finite (got {m.v})")
    if not (math.isfinite(m.phi) and 0 <= m.phi < 2 * math.pi):
        problems.append(f"mirror phi must lie in [0, 2pi) (got {m.phi})")
    if not (math.isfinite(de.varkappa) and de.varkappa > 0):
        problems.append(f"detector varkappa must be positive (got {de.varkappa})")
    if not math.isfinite(de.alpha):
        problems.append("detector alpha must be finite")
    if not problems and abs(cfg.kappa - (de.varkappa + la.Lp)) > DERIVED_TOL * max(1.0, cfg.kappa):
        problems.append("kappa must equal varkappa + Lp")
    if problems:
        cls = OverdampedError if any("overdamped" in p for p in problems) else ConfigError
        raise cls(problems)
    return cfg


def make_config(
    Omega: float,
    gamma: float,
    *,
    amp2: float = 0.0,
    omega0: float = 10.0,
    Lp: float = 0.0,
    v: float = 0.0,
    varkappa: float = 0.02,
    phase: float = 0.0,
    phi: float = 0.0,
    alpha: float = 0.0,
) -> ModelConfig:
    """Keyword shortcut for :meth:`ModelConfig.create`."""
    return ModelConfig.create(
        OscillatorParams(Omega, gamma),
        LaserParams(amp2=amp2, omega0=omega0, Lp=Lp, phase=phase),
        MirrorCoupling(v, phi),
        DetectorParams(varkappa, alpha),
    )


__all__ = [
    "ConfigError",
    "OverdampedError",
    "OscillatorParams",
    "DerivedOscillator",
    "LaserParams",
    "MirrorCoupling",
    "DetectorParams",
    "ModelConfig",
    "derive_oscillator",
    "mean_mode_from_qp",
    "mean_qp_from_mode",
    "hamiltonian_mean",
    "validate_config",
    "make_config",
]
