"""Quadrature and series utilities with explicit error control.

Everything here is double precision and deterministic: the same inputs
always produce bitwise identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import spherical_jn

_EPS = np.finfo(float).eps

# 7-point Gauss / 15-point Kronrod pair on [-1, 1].
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES15 = np.concatenate([-_XK[:-1], _XK[::-1]])
_WK15 = np.concatenate([_WK[:-1], _WK[::-1]])
# Gauss nodes are the odd-indexed Kronrod nodes.
_WG15 = np.zeros(15)
_WG15[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])


class QuadratureError(ArithmeticError):
    """Raised when a quadrature cannot reach its tolerance.

    The best value found and its error estimate are kept on the exception.
    """

    def __init__(self, message: str, value: complex, error: float):
        super().__init__(f"{message} (value={value!r}, error estimate={error:.3e})")
        self.value = value
        self.error = error


class SeriesError(ArithmeticError):
    """Raised when a series fails to converge within ``max_terms``."""

    def __init__(self, message: str, value: float, terms: int):
        super().__init__(f"{message} (partial sum={value!r} after {terms} terms)")
        self.value = value
        self.terms = terms


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and hints for the adaptive integrators.

    ``osc_freq`` caps the initial panel width at pi/(8*osc_freq);
    ``decay_rate`` is only used by :func:`semi_infinite_quad`.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 20000
    osc_freq: float = 0.0
    decay_rate: float = 0.0

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.osc_freq < 0 or self.decay_rate < 0:
            raise ValueError("quadrature hints must be non-negative")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


def _gk15(f, lo: np.ndarray, hi: np.ndarray):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * _NODES15[None, :]
    fx = np.asarray(f(x.ravel())).reshape(x.shape)
    kron = half * (fx @ _WK15)
    gauss = half * (fx @ _WG15)
    resabs = np.abs(half) * (np.abs(fx) @ _WK15)
    mean = kron / np.where(half == 0, 1.0, 2 * half)
    resasc = np.abs(half) * (np.abs(fx - mean[:, None]) @ _WK15)
    diff = np.abs(kron - gauss)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(resasc > 0, np.minimum(1.0, (200.0 * diff / resasc) ** 1.5), 1.0)
    err = np.where(resasc > 0, resasc * scale, diff)
    err = np.maximum(err, 50 * _EPS * resabs)
    return kron, err, resabs


def adaptive_quad(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    spec: QuadratureSpec | None = None,
    points: Sequence[float] = (),
) -> tuple[complex | float, float]:
    """Globally adaptive Gauss-Kronrod (7/15) quadrature of ``f`` over [a, b].

    ``f`` must be vectorised: it receives a 1-D array of abscissae and
    returns values of the same shape (real or complex). Panels are split
    worst-error first until the summed error estimate meets
    ``max(abs_tol, rel_tol*|I|)``. Optional ``points`` are forced panel
    boundaries (kinks, peaks).

    Returns ``(value, error_estimate)``; raises :class:`QuadratureError`
    when the subdivision budget is exhausted.
    """
    spec = spec or QuadratureSpec()
    if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
        raise ValueError(f"need finite a < b, got a={a}, b={b}")
    edges = [a] + sorted(p for p in set(points) if a < p < b) + [b]
    edges = np.asarray(edges, dtype=float)
    if spec.osc_freq > 0:
        width = math.pi / (8 * spec.osc_freq)
        pieces = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            n = max(1, int(math.ceil((hi - lo) / width)))
            pieces.append(np.linspace(lo, hi, n + 1)[:-1])
        edges = np.concatenate(pieces + [[b]])
    lo, hi = edges[:-1], edges[1:]
    val, err, resabs = _gk15(f, lo, hi)

    while True:
        order = np.argsort(lo, kind="stable")
        lo, hi, val, err, resabs = lo[order], hi[order], val[order], err[order], resabs[order]
        total = val.sum()
        total_err = float(err.sum())
        target = max(spec.abs_tol, spec.rel_tol * abs(total))
        if total_err <= target:
            return total, total_err
        if lo.size >= spec.max_subdivisions:
            raise QuadratureError("adaptive_quad: subdivision limit reached", total, total_err)
        # split the worst panels, enough of them to cover the excess error
        rank = np.argsort(-err, kind="stable")
        excess = total_err - 0.5 * target
        covered = np.cumsum(err[rank])
        n_split = int(np.searchsorted(covered, excess) + 1)
        n_split = min(n_split, rank.size, spec.max_subdivisions - lo.size)
        n_split = max(n_split, 1)
        pick = np.zeros(lo.size, dtype=bool)
        pick[rank[:n_split]] = True
        mid = 0.5 * (lo[pick] + hi[pick])
        if np.any((mid <= lo[pick]) | (mid >= hi[pick])):
            raise QuadratureError("adaptive_quad: panel width underflow", total, total_err)
        new_lo = np.concatenate([lo[pick], mid])
        new_hi = np.concatenate([mid, hi[pick]])
        nv, ne, nr = _gk15(f, new_lo, new_hi)
        keep = ~pick
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        val = np.concatenate([val[keep], nv])
        err = np.concatenate([err[keep], ne])
        resabs = np.concatenate([resabs[keep], nr])


def semi_infinite_quad(
    f: Callable[[np.ndarray], np.ndarray],
    decay_rate: float,
    osc_freq: float = 0.0,
    spec: QuadratureSpec | None = None,
    bound: float = 1.0,
    points: Sequence[float] = (),
) -> tuple[complex | float, float]:
    """Integrate ``f`` over [0, inf) for ``|f(t)| <= bound*exp(-decay_rate*t)``.

    The range is cut at T with ``bound*exp(-decay_rate*T) < 0.01*abs_tol``
    and the remainder handed to :func:`adaptive_quad` with an oscillation
    hint. The bound on the discarded tail is added to the error estimate.
    """
    if decay_rate <= 0:
        raise ValueError("decay_rate must be positive")
    spec = spec or QuadratureSpec()
    T = math.log(max(bound, _EPS) * 100.0 / spec.abs_tol) / decay_rate
    T = max(T, 1.0 / decay_rate)
    inner = QuadratureSpec(spec.abs_tol, spec.rel_tol, spec.max_subdivisions, osc_freq, decay_rate)
    value, err = adaptive_quad(f, 0.0, T, inner, points=points)
    tail = bound * math.exp(-decay_rate * T) / decay_rate
    return value, err + tail


def kahan_series_sum(
    terms: Iterable[float],
    tol: float = 1e-12,
    max_terms: int = 200,
) -> tuple[float, int]:
    """Compensated (Neumaier) summation of a series.

    Stops once the tail, estimated geometrically from the ratio ``r`` of
    the last two terms as ``|term| * r / (1 - r)``, is no larger than
    ``tol`` times the running sum. A zero term also stops the sum.
    Raises :class:`SeriesError` if that has not happened after
    ``max_terms`` terms.
    """
    total = 0.0
    comp = 0.0
    n = 0
    prev = None
    for term in terms:
        n += 1
        t = total + term
        if abs(total) >= abs(term):
            comp += (total - t) + term
        else:
            comp += (term - t) + total
        total = t
        if term == 0:
            return total + comp, n
        if prev is not None:
            r = abs(term / prev)
            if r < 1 and abs(term) * r <= tol * (1 - r) * abs(total + comp):
                return total + comp, n
        prev = term
        if n >= max_terms:
            break
    if n < max_terms:
        # generator exhausted: a finite sum is exact
        return total + comp, n
    raise SeriesError("series did not converge", total + comp, n)


# ---------------------------------------------------------------------------
# Legendre panels and Fourier-type integrals


@dataclass(frozen=True)
class LegendrePanels:
    """Piecewise Legendre expansion of a sampled function.

    ``coeffs[k, m]`` is the m-th Legendre coefficient on panel
    ``[lo[k], lo[k] + width[k]]`` (local variable y in [-1, 1]).
    ``nodes``/``samples`` hold the Gauss-Legendre abscissae and the
    function values there, panel by panel.
    """

    lo: np.ndarray
    width: np.ndarray
    coeffs: np.ndarray
    nodes: np.ndarray
    samples: np.ndarray

    @property
    def order(self) -> int:
        return self.coeffs.shape[1]

    def tail(self) -> np.ndarray:
        """Per-panel truncation indicator ``width*(|c_{p-1}| + |c_{p-2}|)``."""
        c = np.abs(self.coeffs)
        return self.width * (c[:, -1] + c[:, -2])

    def integral(self) -> complex:
        """Plain integral; only the zeroth coefficients contribute."""
        return complex(np.sum(self.width * self.coeffs[:, 0]))


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _legendre_rule(order: int):
    if order not in _GL_CACHE:
        y, w = np.polynomial.legendre.leggauss(order)
        # projection matrix: c_m = (2m+1)/2 * sum_j w_j P_m(y_j) f_j
        P = np.polynomial.legendre.legvander(y, order - 1)  # (j, m)
        proj = (P * w[:, None]).T * ((2 * np.arange(order) + 1) / 2.0)[:, None]
        _GL_CACHE[order] = (y, w, proj)
    return _GL_CACHE[order]


def panel_nodes(lo: np.ndarray, width: np.ndarray, order: int) -> np.ndarray:
    """Gauss-Legendre abscissae on each panel, shape (npanels, order)."""
    y, _, _ = _legendre_rule(order)
    return lo[:, None] + 0.5 * width[:, None] * (1.0 + y[None, :])


def legendre_from_samples(lo, width, samples: np.ndarray) -> LegendrePanels:
    """Build a :class:`LegendrePanels` from values at :func:`panel_nodes`."""
    lo = np.asarray(lo, dtype=float)
    width = np.asarray(width, dtype=float)
    order = samples.shape[1]
    _, _, proj = _legendre_rule(order)
    coeffs = samples @ proj.T
    return LegendrePanels(lo, width, coeffs, panel_nodes(lo, width, order), samples)


def legendre_panels(
    f: Callable[[np.ndarray], np.ndarray],
    edges: Sequence[float],
    order: int = 16,
    abs_tol: float = 1e-12,
    max_panels: int = 200000,
) -> LegendrePanels:
    """Adaptively bisect panels until each Legendre tail is small.

    A panel of width h is accepted when ``h*(|c_{p-1}| + |c_{p-2}|)`` is
    below ``abs_tol*h/L`` (L the total length), so the summed indicator
    stays below ``abs_tol``, or when it is at the round-off level of the
    panel's samples.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("panel edges must be strictly increasing")
    total_len = edges[-1] - edges[0]
    done_lo, done_w, done_s = [], [], []
    lo, width = edges[:-1], np.diff(edges)
    while lo.size:
        x = panel_nodes(lo, width, order)
        s = np.asarray(f(x.ravel())).reshape(x.shape)
        pan = legendre_from_samples(lo, width, s)
        tail = pan.tail()
        ok = tail <= abs_tol * width / total_len
        ok |= tail <= 512 * _EPS * width * np.max(np.abs(s), axis=1)
        ok |= width <= 1e-12 * total_len
        done_lo.append(lo[ok])
        done_w.append(width[ok])
        done_s.append(s[ok])
        lo, width = lo[~ok], width[~ok]
        if lo.size:
            half = 0.5 * width
            lo = np.concatenate([lo, lo + half])
            width = np.concatenate([half, half])
        if sum(a.size for a in done_lo) + lo.size > max_panels:
            raise QuadratureError("legendre_panels: panel limit reached", np.nan, np.inf)
    lo = np.concatenate(done_lo)
    width = np.concatenate(done_w)
    samples = np.concatenate(done_s)
    order_idx = np.argsort(lo, kind="stable")
    return legendre_from_samples(lo[order_idx], width[order_idx], samples[order_idx])


def spherical_bessel_orders(order: int, a) -> np.ndarray:
    """``j_m(a)`` for ``m = 0..order-1``, stacked on a new last axis.

    Upward recurrence where ``|a| >= order`` (stable there), a short power
    series for tiny arguments, and Miller's downward recurrence normalised
    by ``sum (2m+1) j_m^2 = 1`` in between.
    """
    a = np.asarray(a, dtype=float)
    shape = a.shape
    a = a.ravel()
    x = np.abs(a)
    out = np.empty((order, a.size))
    m_idx = np.arange(order)

    big = np.nonzero(x >= order)[0]
    if big.size:
        xb = x[big]
        inv = 1.0 / xb
        s, c = np.sin(xb), np.cos(xb)
        jm = np.empty((order, xb.size))
        jm[0] = s * inv
        if order > 1:
            jm[1] = (jm[0] - c) * inv
        for m in range(1, order - 1):
            jm[m + 1] = (2 * m + 1) * inv * jm[m] - jm[m - 1]
        out[:, big] = jm

    tiny = np.nonzero(x < 1e-3)[0]
    if tiny.size:
        xt = x[tiny][None, :]
        mm = m_idx[:, None]
        dfact = np.cumprod(np.concatenate([[1.0], 2.0 * m_idx[1:] + 1.0]))[:, None]  # (2m+1)!!
        out[:, tiny] = xt ** mm / dfact * (1 - xt * xt / (2 * (2 * mm + 3))
                                           + xt ** 4 / (8 * (2 * mm + 3) * (2 * mm + 5)))

    mid = np.nonzero((x < order) & (x >= 1e-3))[0]
    if mid.size:
        inv = 1.0 / x[mid]
        nxt = np.zeros(mid.size)
        cur = np.ones(mid.size)
        jm = np.empty((order, mid.size))
        norm = np.zeros(mid.size)
        for m in range(order + 30, 0, -1):
            nxt, cur = cur, (2 * m + 1) * inv * cur - nxt
            if m - 1 < order:
                jm[m - 1] = cur
            norm += (2 * m - 1) * cur * cur
            # the ratio per step is at most ~1e5 here; rescale well before overflow
            if m % 8 == 0:
                hot = np.abs(cur) > 1e60
                if hot.any():
                    f = np.where(hot, 1e-120, 1.0)
                    cur *= f
                    nxt *= f
                    norm *= f * f
                    if m - 1 < order:
                        jm[m - 1:] *= f
        out[:, mid] = jm / np.sqrt(norm)

    # j_m(-a) = (-1)^m j_m(a)
    neg = np.nonzero(a < 0)[0]
    if neg.size:
        out[1::2, neg] *= -1.0
    return out.T.reshape(shape + (order,))


class FourierPanels:
    """Evaluate ``F(w) = int f(x) exp(i w x) dx`` from a Legendre expansion.

    The oscillatory factor is integrated exactly against each panel's
    Legendre polynomial via ``int_{-1}^{1} e^{iay} P_m(y) dy = 2 i^m j_m(a)``,
    so the cost per frequency is independent of ``w``. Panels are grouped
    by width so the spherical Bessel values are shared.
    """

    def __init__(self, panels: LegendrePanels):
        self.panels = panels
        order = panels.order
        self._im = (1j) ** np.arange(order)
        widths, inverse = np.unique(panels.width, return_inverse=True)
        self._groups = []
        c = panels.coeffs
        ac = np.abs(c)
        for g, h in enumerate(widths):
            idx = np.nonzero(inverse == g)[0]
            centers = panels.lo[idx] + 0.5 * h
            self._groups.append((
                float(h),
                centers,
                np.ascontiguousarray(c[idx] * self._im[None, :]),
                float(np.sum(ac[idx, -1])),
                float(np.sum(ac[idx, -2])),
            ))
        self._m = np.arange(order)
        self._widths = np.array([g[0] for g in self._groups])
        # round-off floor on the error estimate
        self._floor = 16 * _EPS * float(np.sum(panels.width * np.max(np.abs(panels.samples), axis=1)))

    def __call__(self, w: float) -> tuple[complex, float]:
        """Return ``(F(w), error_estimate)`` for a single frequency."""
        value = 0j
        err = 0.0
        # few distinct widths: the library routine beats the batched recurrence here
        jms = spherical_jn(self._m[None, :], 0.5 * w * self._widths[:, None])
        for (h, centers, ci, tail1, tail2), jm in zip(self._groups, jms):
            phase = np.exp(1j * w * centers)
            value += h * (phase @ (ci @ jm))
            err += h * (tail1 * abs(jm[-1]) + tail2 * abs(jm[-2]))
        return complex(value), float(err) + self._floor

    def many(self, w: np.ndarray, block: int = 1 << 21) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised evaluation over an array of frequencies.

        All panels are handled in one batch per chunk of frequencies;
        ``block`` bounds the number of Bessel values held at once.
        """
        w = np.asarray(w, dtype=float)
        flat_w = w.ravel()
        out = np.zeros(flat_w.size, dtype=complex)
        err = np.zeros(flat_w.size)
        pan = self.panels
        p = pan.order
        half = 0.5 * pan.width
        centers = pan.lo + half
        ci = pan.coeffs * self._im[None, :]
        ac = np.abs(pan.coeffs)
        m = self._m
        chunk = max(1, block // (pan.lo.size * p))
        for start in range(0, flat_w.size, chunk):
            ww = flat_w[start:start + chunk]
            jm = spherical_bessel_orders(p, np.outer(ww, half))  # (nw, nk, p)
            phase = np.exp(1j * np.outer(ww, centers)) * pan.width[None, :]
            out[start:start + chunk] = np.einsum("wk,km,wkm->w", phase, ci, jm, optimize=True)
            err[start:start + chunk] = (np.abs(jm[:, :, -1]) @ (pan.width * ac[:, -1])
                                        + np.abs(jm[:, :, -2]) @ (pan.width * ac[:, -2]))
        return out.reshape(w.shape), err.reshape(w.shape) + self._floor


def gregory_weights(n: int, step: float, order: int = 6) -> np.ndarray:
    """Trapezoid weights with Gregory end corrections at the left end only.

    For a function sampled at ``k*step``, ``k = 0..n-1``, that has decayed
    to zero (with its derivatives) by the right end.
    """
    # Gregory coefficients for the left endpoint corrections
    gc = [1 / 12, -1 / 24, 19 / 720, -3 / 160, 863 / 60480, -275 / 24192][:order]
    w = np.ones(n)
    w[0] = 0.5
    # left-end corrections sum_k g_k Delta^k f_0, Delta^k f_0 = sum_i (-1)^(k-i) C(k,i) f_i
    for k, g in enumerate(gc, start=1):
        for i in range(min(k + 1, n)):
            w[i] += g * (-1) ** (k - i) * math.comb(k, i)
    return step * w


def half_line_correlation(phi: np.ndarray, step: float, n_lags: int) -> np.ndarray:
    """``C[m] = int_0^inf phi(m*step + s) conj(phi(s)) ds`` for m < n_lags.

    ``phi`` is sampled at ``k*step`` and must be negligible at its end;
    the s-integral uses :func:`gregory_weights`. Computed by FFT.
    """
    n = phi.size
    w = gregory_weights(n, step)
    size = 1 << int(math.ceil(math.log2(2 * n)))
    fa = np.fft.fft(phi, size)
    fb = np.fft.fft(phi * w, size)
    # sum_k phi[k+m] conj(w_k phi[k]) as a circular cross-correlation
    corr = np.fft.ifft(fa * np.conj(fb))
    return corr[:n_lags]
