"""Symbols on the torus: evaluation, Fourier coefficients, free IDS, envelopes.

A symbol is either a product of powers of ``2 - 2cos(x - E_i)`` (possibly
scaled) or a tabulated, uniformly sampled periodic function.  Points on the
torus are represented in ``[-pi, pi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .errors import AssumptionViolated, ExponentFitFailed, NonConvergent

TWO_PI = 2.0 * np.pi

# dyadic offsets 2^-6 ... 2^-16 used for the local log-log exponent fit
FIT_LOG2_RANGE = (6, 16)


def reduce_torus(x):
    """Map angles to [-pi, pi)."""
    return np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi


def torus_grid(n_points: int) -> np.ndarray:
    return -np.pi + TWO_PI * np.arange(n_points) / n_points


def cosine_well(x, center=0.0):
    """``2 - 2cos(x - center)``, written as ``4 sin^2`` to keep relative accuracy near the well."""
    return 4.0 * np.sin(0.5 * (np.asarray(x, dtype=float) - center)) ** 2


@dataclass(frozen=True)
class Symbol:
    """Real symbol on the torus.

    Use :meth:`cosine_product` or :meth:`tabulated` rather than the raw
    constructor.
    """

    kind: str
    scale: float = 1.0
    factors: tuple[tuple[float, float], ...] = ()
    samples: np.ndarray | None = field(default=None, compare=False, repr=False)
    nu: float | None = None

    @classmethod
    def cosine_product(cls, factors: Sequence[tuple[float, float]], scale: float = 1.0) -> "Symbol":
        if scale <= 0:
            raise ValueError("scale must be positive")
        if not factors:
            raise ValueError("need at least one factor")
        facs = []
        for center, alpha in factors:
            if alpha <= 0:
                raise ValueError(f"exponent must be positive, got {alpha}")
            facs.append((float(reduce_torus(center)), float(alpha)))
        centers = np.array([c for c, _ in facs])
        gaps = np.abs(reduce_torus(centers[:, None] - centers[None, :]))
        np.fill_diagonal(gaps, np.inf)
        if np.any(gaps < 1e-12):
            raise ValueError("minima locations must be pairwise distinct on the torus")
        return cls(kind="cosine_product", scale=float(scale), factors=tuple(facs))

    @classmethod
    def tabulated(cls, values, nu: float) -> "Symbol":
        vals = np.asarray(values, dtype=float)
        n = vals.size
        if vals.ndim != 1 or n < 4 or n & (n - 1):
            raise ValueError("tabulated symbols need a 1-d sample count that is a power of two")
        if not np.all(np.isfinite(vals)):
            raise ValueError("tabulated values must be finite")
        if nu is None or nu <= 0:
            raise ValueError("tabulated symbols must declare a positive Hoelder exponent nu")
        vals = vals - vals.min()
        vals.setflags(write=False)
        return cls(kind="tabulated", samples=vals, nu=float(nu))

    def __call__(self, x):
        x = reduce_torus(x)
        if self.kind == "cosine_product":
            out = np.full(x.shape, self.scale)
            for center, alpha in self.factors:
                out = out * cosine_well(x, center) ** alpha
            return out
        grid = torus_grid(self.samples.size)
        return np.interp(x, grid, self.samples, period=TWO_PI)

    @property
    def holder(self) -> float:
        if self.kind == "cosine_product":
            return min(1.0, 2.0 * min(a for _, a in self.factors))
        return self.nu

    @property
    def declared_minima(self) -> list[float]:
        return [c for c, _ in self.factors] if self.kind == "cosine_product" else []

    def shifted(self, shift: float) -> "Symbol":
        """Symbol ``x -> f(x + shift)``."""
        if self.kind == "cosine_product":
            return Symbol.cosine_product([(c - shift, a) for c, a in self.factors], self.scale)
        n = self.samples.size
        steps = shift / (TWO_PI / n)
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("tabulated symbols can only be shifted by whole grid steps")
        return Symbol.tabulated(np.roll(self.samples, -int(round(steps))), self.nu)

    def describe(self) -> dict:
        if self.kind == "cosine_product":
            return {"kind": self.kind, "scale": self.scale, "factors": [list(f) for f in self.factors]}
        return {"kind": self.kind, "nu": self.nu, "n_samples": int(self.samples.size)}


# Example from the envelope discussion: three minima with exponents 0.3, 0.6, 0.7.
THREE_MINIMA_EXAMPLE = Symbol.cosine_product([(0.0, 0.3), (2.5, 0.6), (-2.0, 0.7)], scale=0.5)


# ---------------------------------------------------------------- coefficients


@dataclass(frozen=True)
class DecayReport:
    nu_measured: float
    constant: float
    n_fitted: int


@dataclass(frozen=True)
class FourierCoefficients:
    """Coefficients ``a_n`` for ``|n| <= n_max``; ``values[n + n_max] = a_n``."""

    values: np.ndarray = field(repr=False)
    tol: float
    grid_size: int

    @property
    def n_max(self) -> int:
        return (self.values.size - 1) // 2

    def __getitem__(self, n):
        n = np.asarray(n)
        if np.any(np.abs(n) > self.n_max):
            raise IndexError("coefficient index outside stored range")
        return self.values[n + self.n_max]

    def column(self, length: int) -> np.ndarray:
        """``a_0, a_1, ..., a_{length-1}``, zero padded past ``n_max``."""
        out = np.zeros(length, dtype=complex)
        k = min(length, self.n_max + 1)
        out[:k] = self.values[self.n_max:self.n_max + k]
        return out

    def decay_report(self, floor: float | None = None) -> DecayReport:
        """Measure ``nu'`` with ``|a_n| <= C |n|^-(1+nu')`` over the stored range.

        Coefficients below ``floor`` are treated as zero.  A symbol whose
        coefficients all vanish past some band (trigonometric polynomials)
        gets ``nu_measured = inf`` and ``C`` is quoted with ``nu' = 1``.
        """
        if floor is None:
            floor = max(100.0 * self.tol, 1e-13 * abs(self.values[self.n_max]))
        n = np.arange(1, self.n_max + 1)
        mag = np.abs(self.values[self.n_max + 1:])
        live = mag > floor
        if live.sum() < 8 or not live[-len(live) // 4:].any():
            nu_eval = 1.0
            sup = float(np.max(mag[live] * n[live] ** (1 + nu_eval))) if live.any() else 0.0
            return DecayReport(math.inf, sup, int(live.sum()))
        last = n[live][-1]
        # tail envelope on the upper half of the resolved range
        env = np.maximum.accumulate(mag[::-1])[::-1]
        sel = (n >= max(4, last // 8)) & (n <= last) & (env > floor)
        fit = stats.linregress(np.log(n[sel]), np.log(env[sel]))
        nu = -fit.slope - 1.0
        sup = float(np.max(mag[live] * n[live] ** (1 + nu)))
        return DecayReport(float(nu), sup, int(sel.sum()))

    def rows(self):
        for n in range(-self.n_max, self.n_max + 1):
            a = self.values[n + self.n_max]
            yield n, a.real, a.imag


def _trapezoid_coefficients(s: Symbol, n_max: int, k: int) -> np.ndarray:
    x = torus_grid(k)
    spec = np.fft.rfft(s(x)) / k
    pos = spec[:n_max + 1] * np.where(np.arange(n_max + 1) % 2, -1.0, 1.0)
    return np.concatenate([np.conj(pos[:0:-1]), pos])


def fourier_coefficients(s: Symbol, n_max: int, tol: float = 1e-10, max_log2: int = 23) -> FourierCoefficients:
    """Trapezoid-rule Fourier coefficients, doubling the grid until stable.

    Real symbols make ``a_{-n} = conj(a_n)`` hold exactly: the negative half
    is built as the conjugate of the positive half.

    Raises
    ------
    NonConvergent
        If successive grids still differ by ``tol`` at ``2**max_log2`` points.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    k = max(256, 1 << int(math.ceil(math.log2(4 * (n_max + 1)))))
    if s.kind == "tabulated":
        k = max(k, s.samples.size)
    prev = _trapezoid_coefficients(s, n_max, k)
    while True:
        k *= 2
        if k > 1 << max_log2:
            raise NonConvergent(f"coefficients not stable to {tol:g} at grid 2^{max_log2}")
        cur = _trapezoid_coefficients(s, n_max, k)
        if np.max(np.abs(cur - prev)) < tol:
            return FourierCoefficients(cur, tol, k)
        prev = cur


# ---------------------------------------------------------------- free IDS


def _sublevel_measure(s: Symbol, x: np.ndarray, fx: np.ndarray, energy: float, xtol: float) -> float:
    h = TWO_PI / x.size
    below = fx <= energy
    nxt = np.roll(below, -1)
    total = np.count_nonzero(below & nxt) * h
    cells = np.flatnonzero(below != nxt)
    if cells.size:
        left_below = below[cells]
        lo = x[cells].copy()
        hi = lo + h
        for _ in range(int(math.ceil(math.log2(h / xtol))) + 1):
            mid = 0.5 * (lo + hi)
            same = (s(mid) <= energy) == left_below
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        root = 0.5 * (lo + hi)
        total += np.sum(np.where(left_below, root - x[cells], x[cells] + h - root))
        if total <= cells.size * xtol:  # isolated touching points: below resolution
            return 0.0
    return total / TWO_PI


def free_ids_closed(s: Symbol, energy, grid_log2: int = 20, xtol: float = 1e-12):
    """Normalized measure of ``{k : f(k) <= E}``.

    Level crossings found on a ``2**grid_log2`` grid are refined by
    bisection to ``xtol``.  Accepts a scalar or an array of energies.
    """
    x = torus_grid(1 << grid_log2)
    fx = s(x)
    es = np.atleast_1d(np.asarray(energy, dtype=float))
    out = np.array([_sublevel_measure(s, x, fx, e, xtol) for e in es])
    out = np.clip(out, 0.0, 1.0)
    return out if np.ndim(energy) else float(out[0])


# ---------------------------------------------------------------- minima and envelopes


@dataclass(frozen=True)
class MinimaReport:
    locations: tuple[float, ...]
    exponents: tuple[float, ...]
    residuals: tuple[float, ...]
    declared: tuple[float, ...] | None = None

    @property
    def b(self) -> float:
        return max(self.exponents)

    @property
    def i0(self) -> int:
        return int(np.argmax(self.exponents))


def _fit_offsets(s: Symbol, h_range) -> np.ndarray:
    hs = 2.0 ** -np.arange(h_range[0], h_range[1] + 1, dtype=float)
    if s.kind == "tabulated":
        hs = hs[hs >= 4 * TWO_PI / s.samples.size]
    return hs


def _refine_minimum(s: Symbol, x: np.ndarray, i: int) -> float:
    n = x.size
    h = x[1] - x[0]
    xm = x[i]
    fa, fb, fc = s(xm - h), s(xm), s(xm + h)
    if not (fb < fa and fb < fc):
        return float(xm)
    res = optimize.minimize_scalar(lambda t: float(s(t)), bracket=(xm - h, xm, xm + h),
                                   method="golden", tol=1e-12)
    return float(reduce_torus(res.x))


def minima_report(s: Symbol, grid_log2: int = 16, h_range=FIT_LOG2_RANGE,
                  fit_tol: float = 0.05, accept_tol: float = 1e-4,
                  declared_tol: float = 0.02) -> MinimaReport:
    """Locate the global minima and fit the local exponent at each.

    The exponent is the least-squares slope of ``log f(E +- h)`` against
    ``log h`` over dyadic ``h``.  For cosine products the located minima are
    snapped to the declared centers and each fit is cross-checked against
    ``2 * alpha``.
    """
    x = torus_grid(1 << grid_log2)
    fx = s(x)
    lo, span = fx.min(), fx.max() - fx.min()
    if span <= 0:
        raise AssumptionViolated("constant symbol has no isolated minima")
    local = (fx <= np.roll(fx, 1)) & (fx <= np.roll(fx, -1)) & (fx <= lo + 0.05 * span)
    locs = []
    for i in np.flatnonzero(local):
        xm = _refine_minimum(s, x, i)
        if s(xm) - lo <= accept_tol * span and all(abs(reduce_torus(xm - p)) > 4 * (x[1] - x[0]) for p in locs):
            locs.append(xm)
    declared = None
    if s.kind == "cosine_product":
        centers = np.array(s.declared_minima)
        snapped = []
        for xm in locs:
            j = int(np.argmin(np.abs(reduce_torus(centers - xm))))
            if abs(reduce_torus(centers[j] - xm)) > 1e-6:
                raise AssumptionViolated(f"minimum near {xm:.6g} matches no declared center")
            snapped.append(float(centers[j]))
        if sorted(snapped) != sorted(centers.tolist()):
            raise AssumptionViolated("not every declared center was located as a global minimum")
        locs = list(centers)
        declared = tuple(2.0 * a for _, a in s.factors)

    hs = _fit_offsets(s, h_range)
    if hs.size < 3:
        raise ExponentFitFailed("fit window has fewer than three resolvable offsets")
    exps, resids = [], []
    for xm in locs:
        vals = np.concatenate([s(xm + hs), s(xm - hs)])
        if np.any(vals <= 0):
            raise ExponentFitFailed(f"symbol vanishes near the minimum at {xm:.6g}")
        lx = np.log(np.concatenate([hs, hs]))
        fit = stats.linregress(lx, np.log(vals))
        resid = float(np.sqrt(np.mean((np.log(vals) - fit.intercept - fit.slope * lx) ** 2)))
        if resid > fit_tol:
            raise ExponentFitFailed(f"log-log residual {resid:.3g} at {xm:.6g} exceeds {fit_tol}")
        exps.append(float(fit.slope))
        resids.append(resid)
    if declared is not None:
        for got, want in zip(exps, declared):
            if abs(got - want) > declared_tol:
                raise ExponentFitFailed(f"fitted exponent {got:.4f} disagrees with declared {want:.4f}")
    nu = s.holder
    if any(e < nu - declared_tol for e in exps):
        raise AssumptionViolated("a fitted exponent is below the Hoelder exponent")
    return MinimaReport(tuple(float(v) for v in locs), tuple(exps), tuple(resids), declared)


@dataclass(frozen=True)
class EnvelopeBounds:
    c_low: float
    C_up: float
    b: float
    i0: int
    locations: tuple[float, ...]
    exponents: tuple[float, ...]

    def lower(self, x):
        out = np.full(np.shape(x), self.c_low, dtype=float)
        for center in self.locations:
            out = out * cosine_well(x, center) ** (self.b / 2)
        return out

    def upper(self, x):
        return self.C_up * cosine_well(x, self.locations[self.i0]) ** (self.b / 2)


def _sandwich_violations(f, lower, upper, rtol=1e-12) -> np.ndarray:
    slack = rtol * np.maximum(np.abs(f), 1e-300)
    return (lower > f + slack) | (f > upper + slack)


def envelope_bounds(s: Symbol, delta: float = 1e-3, grid_log2: int = 16,
                    report: MinimaReport | None = None) -> EnvelopeBounds:
    """Constants ``c <= C`` with ``c prod_i w_i^(b/2) <= f <= C w_i0^(b/2)``, ``w_i = 2 - 2cos(x - E_i)``.

    The ratio ``f / prod_i w_i^(beta_i/2)`` is bounded on the grid away
    from ``delta``-neighbourhoods of the minima (for cosine products it is
    the constant scale), then converted with the ``4^...`` factors coming
    from ``0 <= w_i <= 4``.  The resulting sandwich is checked pointwise.
    """
    rep = report or minima_report(s)
    locs = np.array(rep.locations)
    betas = np.array(rep.declared if rep.declared is not None else rep.exponents)
    b = float(betas.max())
    i0 = int(np.argmax(betas))
    x = torus_grid(1 << grid_log2)
    if s.kind == "cosine_product":
        c1 = C1 = s.scale
    else:
        dist = np.min(np.abs(reduce_torus(x[:, None] - locs[None, :])), axis=1)
        keep = dist > delta
        denom = np.prod([cosine_well(x[keep], c) ** (bt / 2) for c, bt in zip(locs, betas)], axis=0)
        ratio = s(x[keep]) / denom
        c1, C1 = float(ratio.min()), float(ratio.max())
    m = len(locs)
    c_low = c1 * 4.0 ** (0.5 * (betas.sum() - m * b))
    C_up = C1 * 4.0 ** (betas.sum() - betas[i0])
    env = EnvelopeBounds(float(c_low), float(C_up), b, i0, tuple(map(float, locs)), tuple(map(float, betas)))
    bad = _sandwich_violations(s(x), env.lower(x), env.upper(x))
    if bad.any():
        raise AssumptionViolated(f"envelope sandwich fails at {int(bad.sum())} grid points")
    return env


@dataclass(frozen=True)
class EnvelopeTable:
    t: np.ndarray
    f: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def violations(self) -> np.ndarray:
        return _sandwich_violations(self.f, self.lower, self.upper)

    @property
    def holds(self) -> bool:
        return not self.violations.any()


def envelope_table(s: Symbol, env: EnvelopeBounds, n_points: int = 4096) -> EnvelopeTable:
    """Tabulate ``f`` between the envelopes of ``env`` on a uniform torus grid."""
    t = torus_grid(n_points)
    return EnvelopeTable(t, s(t), env.lower(t), env.upper(t))
