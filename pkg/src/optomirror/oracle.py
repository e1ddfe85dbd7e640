"""Independent checks on equilibrium mirror moments.

Two routes to the same numbers:

* the Markovian master equation (flat bath, no phase diffusion) solved on
  a truncated number basis, with steady state from the generator's null
  space or by Runge-Kutta time stepping;
* the explicit linear response of q and p to thermal noise and to
  Poissonian photon kicks, integrated numerically with ``scipy``.

Both are compared with closed-form moments in the test-suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .bath import PhononSpectrum, is_flat
from .model import DerivedOscillator, ModelConfig, OscillatorParams

#: largest dimension for which the dense vectorised generator is solved directly
DIRECT_MAX_DIM = 48
TOP_POPULATION_TOL = 1e-8


class OracleRefusedError(ValueError):
    """The master equation only holds for a flat bath and no phase diffusion."""


class TruncationError(RuntimeError):
    """Population at the top of the truncated basis stayed too large."""


class NonconvergenceError(RuntimeError):
    """Time stepping did not reach a stationary state."""


@dataclass(frozen=True, eq=False)
class TruncatedOperators:
    dim: int
    v: float
    a: np.ndarray
    q: np.ndarray
    p: np.ndarray
    H: np.ndarray
    kick: np.ndarray
    unitarity_defect: float


def build_operators(dim: int, osc: OscillatorParams, d: DerivedOscillator, v: float) -> TruncatedOperators:
    """Lowering operator, q, p, H and ``exp(i v q)`` on ``dim`` number states."""
    if dim < 4:
        raise ValueError("dim must be >= 4")
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)
    ad = a.conj().T
    s = math.sqrt(osc.Omega / (2.0 * d.omega))
    tau = d.tau
    q = s * (np.conj(tau) * a + tau * ad)
    p = 1j * s * (ad - a)
    q = 0.5 * (q + q.conj().T)
    p = 0.5 * (p + p.conj().T)
    H = d.omega * (ad @ a + 0.5 * np.eye(dim))
    if v == 0:
        kick = np.eye(dim, dtype=complex)
    else:
        lam, V = np.linalg.eigh(q)
        kick = (V * np.exp(1j * v * lam)) @ V.conj().T
    defect = float(np.max(np.abs(kick.conj().T @ kick - np.eye(dim))))
    return TruncatedOperators(dim, v, a, q, p, H, kick, defect)


def _check_kick(ops: TruncatedOperators, v: float) -> None:
    if v != ops.v:
        raise ValueError(f"operators were built for v={ops.v}, not v={v}")


def liouvillian_apply(ops: TruncatedOperators, rho: np.ndarray, osc: OscillatorParams,
                      d: DerivedOscillator, N_eff: float, amp2: float, v: float) -> np.ndarray:
    """Time derivative of ``rho`` under the Markovian generator."""
    _check_kick(ops, v)
    a, H, U = ops.a, ops.H, ops.kick
    ad = a.conj().T
    g = osc.gamma
    out = -1j * (H @ rho - rho @ H)
    ar = a @ rho
    adr = ad @ rho
    nr = ad @ ar
    n_rho_n = rho @ ad @ a
    nn_r = a @ adr
    r_nn = rho @ a @ ad
    out += g * (N_eff + 1.0) * (ar @ ad - 0.5 * (nr + n_rho_n))
    out += g * N_eff * (adr @ a - 0.5 * (nn_r + r_nn))
    if amp2:
        out += amp2 * (U @ rho @ U.conj().T - rho)
    return out


def liouvillian_matrix(ops: TruncatedOperators, osc: OscillatorParams, d: DerivedOscillator,
                       N_eff: float, amp2: float) -> np.ndarray:
    """Generator on row-major ``vec(rho)``: ``vec(A rho B) = (A kron B^T) vec(rho)``."""
    n = ops.dim
    eye = np.eye(n)
    a, H, U = ops.a, ops.H, ops.kick
    ad = a.conj().T

    def diss(c):
        cd = c.conj().T
        cdc = cd @ c
        return np.kron(c, c.conj()) - 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T))

    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    L += osc.gamma * (N_eff + 1.0) * diss(a)
    L += osc.gamma * N_eff * diss(ad)
    if amp2:
        L += amp2 * (np.kron(U, U.conj()) - np.eye(n * n))
    return L


def _hermitize(rho):
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def trace_norm(m: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def steady_state_direct(ops, osc, d, N_eff, amp2) -> np.ndarray:
    n = ops.dim
    L = liouvillian_matrix(ops, osc, d, N_eff, amp2)
    # replace one equation by the trace condition
    L[0, :] = np.eye(n).reshape(-1)
    rhs = np.zeros(n * n, dtype=complex)
    rhs[0] = 1.0
    return _hermitize(linalg.solve(L, rhs).reshape(n, n))


def steady_state_rk4(ops, osc, d, N_eff, amp2, tol, rho0=None, dt=None, t_end=None) -> np.ndarray:
    """Classical RK4 until ``rho`` changes by less than ``tol`` over ``1/gamma``."""
    n = ops.dim
    rho = np.zeros((n, n), dtype=complex) if rho0 is None else rho0.astype(complex)
    if rho0 is None:
        rho[0, 0] = 1.0
    dt = dt or 0.01 / max(osc.Omega, osc.gamma, amp2)
    t_end = t_end or 30.0 / osc.gamma
    per_check = max(1, int(round(1.0 / (osc.gamma * dt))))
    f = lambda r: liouvillian_apply(ops, r, osc, d, N_eff, amp2, ops.v)  # noqa: E731
    t = 0.0
    while True:
        start = rho
        for _ in range(per_check):
            k1 = f(rho)
            k2 = f(rho + 0.5 * dt * k1)
            k3 = f(rho + 0.5 * dt * k2)
            k4 = f(rho + dt * k3)
            rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += per_check * dt
        rho = _hermitize(rho)
        if trace_norm(rho - start) < tol:
            return rho
        if t >= t_end:
            raise NonconvergenceError(f"no stationary state by t={t:.4g} (dim {n})")


@dataclass(frozen=True)
class Moments:
    q: float
    p: float
    q2: float
    p2: float
    qp_anti: float
    n: float
    a2: complex

    @property
    def var_q(self) -> float:
        return self.q2 - self.q ** 2

    def relative_errors(self, ref: "Moments", vacuum_scale: float = 0.5) -> dict:
        """Relative deviations from ``ref``.

        A vanishing target is measured against 1e-3 of a natural scale
        instead: the fluctuation size for ``q`` and ``p``, ``vacuum_scale``
        (the ground-state ``<q^2>``) for the mode moments.
        """
        def rel(x, r, scale):
            return abs(x - r) / max(abs(r), 1e-3 * scale)

        sq, sp = math.sqrt(abs(ref.var_q)), math.sqrt(abs(ref.p2))
        return {
            "q": rel(self.q, ref.q, sq),
            "p": rel(self.p, ref.p, sp),
            "var_q": rel(self.var_q, ref.var_q, vacuum_scale),
            "p2": rel(self.p2, ref.p2, vacuum_scale),
            "qp_anti": rel(self.qp_anti, ref.qp_anti, vacuum_scale),
            "n": rel(self.n, ref.n, vacuum_scale),
            "Re a2": rel(self.a2.real, ref.a2.real, vacuum_scale),
            "Im a2": rel(self.a2.imag, ref.a2.imag, vacuum_scale),
        }


def equilibrium_moments(rho: np.ndarray, ops: TruncatedOperators) -> Moments:
    def ev(op):
        return complex(np.trace(rho @ op))

    q, p, a = ops.q, ops.p, ops.a
    return Moments(
        q=ev(q).real, p=ev(p).real, q2=ev(q @ q).real, p2=ev(p @ p).real,
        qp_anti=ev(q @ p + p @ q).real, n=ev(a.conj().T @ a).real, a2=ev(a @ a),
    )


def closed_form_moments(cfg: ModelConfig, N_eff: float) -> Moments:
    Om, g, w, tau = cfg.Omega, cfg.gamma, cfg.omega, cfg.tau
    amp2, v = cfg.amp2, cfg.v
    q_inf = v * amp2 / Om
    var = (Om / w) * (N_eff + 0.5) + amp2 * v * v / (2.0 * g)
    shift = Om * q_inf ** 2 / (2.0 * w)
    return Moments(
        q=q_inf, p=0.0, q2=var + q_inf ** 2, p2=var,
        qp_anti=-(g / w) * (N_eff + 0.5),
        n=N_eff + Om * v * v * amp2 / (2.0 * w * g) + shift,
        a2=1j * tau * amp2 * v * v / (4.0 * w) + shift,
    )


def moments_from_qp(q, p, q2, p2, qp_anti, d: DerivedOscillator, osc: OscillatorParams) -> Moments:
    """Fill in ``<a^dag a>`` and ``<a^2>`` using ``[q, p] = i``."""
    s2 = osc.Omega / (2.0 * d.omega)
    tau = d.tau
    n = s2 * (q2 + p2 - qp_anti * tau.imag - tau.real)
    a2 = s2 * (q2 - tau * tau * p2 + 1j * tau * qp_anti)
    return Moments(q, p, q2, p2, qp_anti, n, complex(a2))


def langevin_moments(cfg: ModelConfig, N_eff: float, tol: float = 1e-12) -> Moments:
    """Moments from the explicit linear solutions for q and p.

    Thermal noise enters q and p through the kernels
    ``k_x(r) = c_x sqrt(Omega gamma/2 omega) exp(-(i omega + gamma/2) r)`` with
    ``c_q = conj(tau)``, ``c_p = -i``; its symmetrised correlation is
    ``(2 N + 1) delta``. Photon kicks of size ``v`` at rate ``|lambda|^2``
    enter through the free-oscillator responses ``g_q``, ``g_p``.
    """
    osc, d = cfg.osc, cfg.derived
    Om, g, w, tau = osc.Omega, osc.gamma, d.omega, d.tau
    amp2, v = cfg.amp2, cfg.v
    pre = Om * g / (2.0 * w)
    coef = {"q": np.conj(tau), "p": -1j}

    def quad(f):
        val, _ = integrate.quad(f, 0.0, np.inf, epsabs=tol, epsrel=tol, limit=500)
        return val

    def thermal(x, y):
        c = coef[x] * np.conj(coef[y]) * pre
        # Re(c exp(-gamma r)): the oscillating phases cancel in k_x conj(k_y)
        return (4.0 * N_eff + 2.0) * quad(lambda r: (c * math.exp(-g * r)).real)

    def gq(r):
        return v * (Om / w) * math.exp(-0.5 * g * r) * math.sin(w * r)

    def gp(r):
        return v * math.exp(-0.5 * g * r) * (math.cos(w * r) - 0.5 * g / w * math.sin(w * r))

    def photon(f1, f2):
        if amp2 == 0 or v == 0:
            return 0.0
        return amp2 * _osc_quad(lambda r: f1(r) * f2(r), g, w, tol)

    q_mean = amp2 * _osc_quad(gq, 0.5 * g, w, tol) if amp2 and v else 0.0
    p_mean = amp2 * _osc_quad(gp, 0.5 * g, w, tol) if amp2 and v else 0.0
    var_q = 0.5 * thermal("q", "q") + photon(gq, gq)
    var_p = 0.5 * thermal("p", "p") + photon(gp, gp)
    cov = thermal("q", "p") + 2.0 * photon(gq, gp)
    return moments_from_qp(q_mean, p_mean, var_q + q_mean ** 2, var_p + p_mean ** 2,
                           cov + 2.0 * q_mean * p_mean, d, osc)


def _osc_quad(f, decay, freq, tol):
    """Half-line integral of an exponentially damped oscillation, period by period."""
    T = math.log(1.0 / tol) / decay + 10.0 / decay
    period = 2.0 * math.pi / freq
    n = int(math.ceil(T / (0.5 * period)))
    edges = np.linspace(0.0, n * 0.5 * period, n + 1)
    total = math.fsum(integrate.quad(f, lo, hi, epsabs=tol, epsrel=1e-10, limit=200)[0]
                      for lo, hi in zip(edges[:-1], edges[1:]))
    return total


@dataclass(frozen=True, eq=False)
class OracleResult:
    rho: np.ndarray
    ops: TruncatedOperators
    moments: Moments
    expected: Moments
    dim: int
    top_population: float
    residual: float
    method: str
    vacuum_scale: float = 0.5

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.rho).min())

    def relative_errors(self) -> dict:
        return self.moments.relative_errors(self.expected, self.vacuum_scale)


def steady_state(ops: TruncatedOperators, cfg: ModelConfig, N_eff: float, tol: float = 1e-9,
                 method: str = "auto", rho0: np.ndarray | None = None) -> np.ndarray:
    """Stationary density matrix on the basis of ``ops``."""
    osc, d = cfg.osc, cfg.derived
    _check_kick(ops, cfg.v)
    if method == "auto":
        method = "direct" if ops.dim <= DIRECT_MAX_DIM else "rk4"
    if method == "direct":
        rho = steady_state_direct(ops, osc, d, N_eff, cfg.amp2)
    elif method == "rk4":
        rho = steady_state_rk4(ops, osc, d, N_eff, cfg.amp2, tol, rho0)
    else:
        raise ValueError(f"unknown method {method!r}")
    return rho


def _check_applicable(cfg: ModelConfig, spec: PhononSpectrum | None) -> None:
    if spec is not None and not is_flat(spec):
        raise OracleRefusedError(
            "the master-equation oracle needs a flat phonon spectrum; "
            f"got {type(spec).__name__}")
    if cfg.laser.Lp > 0:
        raise OracleRefusedError("the master-equation oracle needs Lp = 0 (no phase diffusion)")


def run_oracle(cfg: ModelConfig, spec: PhononSpectrum | None = None, N_eff: float | None = None,
               tol: float = 1e-9, dim_start: int = 20, dim_max: int = 160) -> OracleResult:
    """Steady state with automatic truncation and its moments.

    The basis doubles from ``dim_start`` until the top two number-state
    populations are below 1e-8; :class:`TruncationError` if ``dim_max``
    is not enough.
    """
    _check_applicable(cfg, spec)
    if N_eff is None:
        if spec is None:
            raise ValueError("give a flat spectrum or N_eff")
        N_eff = float(spec.N0)
    osc, d = cfg.osc, cfg.derived
    dim = dim_start
    rho_prev = None
    while True:
        ops = build_operators(dim, osc, d, cfg.v)
        rho0 = None
        if rho_prev is not None:
            rho0 = np.zeros((dim, dim), dtype=complex)
            k = rho_prev.shape[0]
            rho0[:k, :k] = rho_prev
        method = "direct" if dim <= DIRECT_MAX_DIM else "rk4"
        rho = steady_state(ops, cfg, N_eff, tol, method, rho0)
        pops = np.real(np.diag(rho))
        top = float(np.max(np.abs(pops[-2:])))
        if top < TOP_POPULATION_TOL:
            break
        if 2 * dim > dim_max:
            raise TruncationError(
                f"top populations {top:.3g} exceed {TOP_POPULATION_TOL} at dim {dim} (cap {dim_max})")
        rho_prev = rho
        dim = min(2 * dim, dim_max)
    resid = trace_norm(liouvillian_apply(ops, rho, osc, d, N_eff, cfg.amp2, cfg.v))
    return OracleResult(rho, ops, equilibrium_moments(rho, ops), closed_form_moments(cfg, N_eff),
                        dim, top, resid, method, cfg.Omega / (2.0 * cfg.omega))


__all__ = [
    "Moments",
    "NonconvergenceError",
    "OracleRefusedError",
    "OracleResult",
    "TruncatedOperators",
    "TruncationError",
    "build_operators",
    "closed_form_moments",
    "equilibrium_moments",
    "langevin_moments",
    "liouvillian_apply",
    "liouvillian_matrix",
    "moments_from_qp",
    "run_oracle",
    "steady_state",
    "trace_norm",
]
