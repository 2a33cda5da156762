"""Eigenvalue counting and Monte Carlo estimates of the integrated density of states."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._parallel import chunks, ordered_map
from .disorder import site_uniforms
from .operator import (
    DIRICHLET,
    EIGEN_CAP,
    NEUMANN,
    SIMPLE,
    FiniteSection,
    IntegerSymbolSpec,
    assemble_modified,
    assemble_simple,
    eigensolve,
    lattice_box,
    matrix_power,
)
from .symbol import Symbol, fourier_coefficients, free_ids_closed


@dataclass(frozen=True)
class Model:
    """Free part of ``H``: a symbol compressed with simple boundary conditions,
    or a banded spec ``scale * g^beta`` with a boundary tag.

    For a spec with modified boundary conditions the section is
    ``scale * (T^{bc,bc}_g)^beta``.
    """

    symbol: Symbol | None = None
    spec: IntegerSymbolSpec | None = None
    bc: str = SIMPLE
    coeff_tol: float = 1e-10

    def __post_init__(self):
        if (self.symbol is None) == (self.spec is None):
            raise ValueError("give exactly one of symbol or spec")
        if self.symbol is not None and self.bc != SIMPLE:
            raise ValueError("general symbols only support simple boundary conditions")

    def section(self, L: int) -> FiniteSection:
        box = lattice_box(L)
        if self.symbol is not None:
            c = fourier_coefficients(self.symbol, 2 * L, tol=self.coeff_tol)
            return assemble_simple(c, box, {"symbol": self.symbol.describe()})
        spec = self.spec
        if self.bc == SIMPLE and spec.beta != 1:
            c = fourier_coefficients(spec.symbol(), 2 * L, tol=self.coeff_tol)
            return assemble_simple(c, box, {"spec": spec.describe()})
        return matrix_power(assemble_modified(spec, box, self.bc), spec.beta, spec.scale)

    def describe(self) -> dict:
        if self.symbol is not None:
            return {"symbol": self.symbol.describe(), "bc": self.bc}
        return {"spec": self.spec.describe(), "bc": self.bc}


def counting_curve(sec, potential, energies, cap: int = EIGEN_CAP) -> np.ndarray:
    """``#{eigenvalues <= E} / dim`` of ``sec + diag(V)`` for each energy."""
    mat = sec.matrix if isinstance(sec, FiniteSection) else np.asarray(sec)
    if potential is not None:
        v = np.asarray(getattr(potential, "values", potential), dtype=float)
        if v.size != mat.shape[0]:
            raise ValueError("potential and section dimensions differ")
        mat = mat.copy()
        mat[np.diag_indices_from(mat)] += v
    w = eigensolve(mat, cap=cap).values
    return np.searchsorted(w, np.asarray(energies, dtype=float), side="right") / mat.shape[0]


@dataclass(frozen=True)
class IdsCurve:
    energies: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    L: int
    n_samples: int
    descriptor: dict
    samples: np.ndarray | None = field(default=None, repr=False)  # per-sample weighted counts
    ground: np.ndarray | None = field(default=None, repr=False)  # per-sample lowest eigenvalue

    def rows(self):
        for e, m, s in zip(self.energies, self.mean, self.stderr):
            yield e, m, s, self.n_samples, self.L


def _batch_size(dim: int) -> int:
    return int(max(1, min(64, (1 << 20) // (dim * dim))))


def _run_batch(base: np.ndarray, sampler, interval, seed: int, idx: range, energies: np.ndarray):
    dim = base.shape[0]
    u = np.stack([site_uniforms(seed, i, interval) for i in idx])
    v = np.asarray(sampler.ppf(u), dtype=float)
    mats = np.repeat(base[None, :, :], len(idx), axis=0)
    d = np.arange(dim)
    mats[:, d, d] += v
    w = np.linalg.eigvalsh(mats)
    counts = np.stack([np.searchsorted(wi, energies, side="right") for wi in w]) / dim
    if hasattr(sampler, "log_likelihood_ratio"):
        logw = sampler.log_likelihood_ratio(v).sum(axis=1)
    else:
        logw = np.zeros(len(idx))
    return counts, logw, w[:, 0]


def sample_counts(sec: FiniteSection, dist, energies, n_samples: int, seed: int,
                  threads: int | None = None, proposal=None):
    """Per-sample normalized counts, log importance weights, and ground energies.

    With a ``proposal`` the potentials are drawn from it and the returned
    log weights are ``log(dP/dQ)`` summed over sites.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    energies = np.asarray(energies, dtype=float)
    sampler = proposal if proposal is not None else dist
    base = sec.matrix
    parts = ordered_map(lambda idx: _run_batch(base, sampler, sec.interval, seed, idx, energies),
                        chunks(n_samples, _batch_size(sec.dim)), threads)
    counts = np.concatenate([p[0] for p in parts])
    logw = np.concatenate([p[1] for p in parts])
    ground = np.concatenate([p[2] for p in parts])
    return counts, logw, ground


def _summarize(values: np.ndarray):
    n = values.shape[0]
    mean = values.mean(axis=0)
    err = values.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, err


def mc_ids(model: Model, dist, L: int, energies, n_samples: int, seed: int,
           threads: int | None = None, proposal=None, section: FiniteSection | None = None) -> IdsCurve:
    """Average ``counting_curve`` over disorder samples ``0..n_samples-1``.

    Sample ``i`` uses the potential keyed by ``(seed, i)``, so two calls with
    the same seed share their disorder (common random numbers).
    """
    sec = section if section is not None else model.section(L)
    counts, logw, ground = sample_counts(sec, dist, energies, n_samples, seed, threads, proposal)
    vals = counts * np.exp(logw)[:, None] if proposal is not None else counts
    mean, err = _summarize(vals)
    desc = {"model": model.describe(), "distribution": dist.describe(), "seed": seed}
    if proposal is not None:
        desc["proposal"] = proposal.describe()
    return IdsCurve(np.asarray(energies, dtype=float), mean, err, L, n_samples, desc, vals, ground)


@dataclass(frozen=True)
class Sandwich:
    lower: IdsCurve  # Dirichlet
    upper: IdsCurve  # Neumann

    def rows(self):
        lo, up = self.lower, self.upper
        for i, e in enumerate(lo.energies):
            yield e, lo.mean[i], lo.stderr[i], up.mean[i], up.stderr[i], lo.n_samples, lo.L

    def per_sample_ordered(self) -> bool:
        return bool(np.all(self.lower.samples <= self.upper.samples))


def sandwich_curves(spec: IntegerSymbolSpec, dist, L: int, energies, n_samples: int, seed: int,
                    threads: int | None = None) -> Sandwich:
    """Dirichlet (lower) and Neumann (upper) curves on identical disorder."""
    if 2 * L + 1 < 2 * spec.N + 1:
        raise ValueError("L too small for the modified boundary conditions")
    lower = mc_ids(Model(spec=spec, bc=DIRICHLET), dist, L, energies, n_samples, seed, threads)
    upper = mc_ids(Model(spec=spec, bc=NEUMANN), dist, L, energies, n_samples, seed, threads)
    return Sandwich(lower, upper)


@dataclass(frozen=True)
class FreeIdsCheck:
    energies: np.ndarray
    counting: np.ndarray
    closed: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.counting - self.closed)))


def free_ids_check(s: Symbol, L: int, energies, coeff_tol: float = 1e-10,
                   cap: int = EIGEN_CAP) -> FreeIdsCheck:
    """Compare the simple-section counting function with the sublevel-set measure."""
    if L < 64:
        raise ValueError("free IDS comparison needs L >= 64")
    energies = np.asarray(energies, dtype=float)
    sec = Model(symbol=s, coeff_tol=coeff_tol).section(L)
    return FreeIdsCheck(energies, counting_curve(sec, None, energies, cap), free_ids_closed(s, energies))


def shift_check(s: Symbol, shift: float, L: int, potential=None, coeff_tol: float = 1e-12) -> float:
    """Max difference of sorted spectra for ``f`` and ``f(. + shift)`` with a common potential."""
    a = Model(symbol=s, coeff_tol=coeff_tol).section(L)
    b = Model(symbol=s.shifted(shift), coeff_tol=coeff_tol).section(L)
    v = np.zeros(a.dim) if potential is None else np.asarray(getattr(potential, "values", potential), float)
    wa = eigensolve(a.plus_potential(v)).values
    wb = eigensolve(b.plus_potential(v)).values
    return float(np.max(np.abs(wa - wb)))


@dataclass(frozen=True)
class EnvelopeCurves:
    upper_symbol: IdsCurve  # C w_i0^(b/2), fewest eigenvalues below E
    symbol: IdsCurve
    lower_symbol: IdsCurve  # c prod_i w_i^(b/2), most eigenvalues below E

    def per_sample_ordered(self) -> bool:
        a, f, c = self.upper_symbol.samples, self.symbol.samples, self.lower_symbol.samples
        return bool(np.all(a <= f) and np.all(f <= c))

    def rows(self):
        u, f, l = self.upper_symbol, self.symbol, self.lower_symbol
        for i, e in enumerate(f.energies):
            yield e, u.mean[i], f.mean[i], l.mean[i], f.n_samples, f.L


def envelope_curves(s: Symbol, env, dist, L: int, energies, n_samples: int, seed: int,
                    threads: int | None = None, coeff_tol: float = 1e-10) -> EnvelopeCurves:
    """Simple-section curves of ``f`` and its two envelope symbols on common disorder."""
    up = Symbol.cosine_product([(env.locations[env.i0], env.b / 2)], env.C_up)
    lo = Symbol.cosine_product([(c, env.b / 2) for c in env.locations], env.c_low)
    curves = [mc_ids(Model(symbol=g, coeff_tol=coeff_tol), dist, L, energies, n_samples, seed, threads)
              for g in (up, s, lo)]
    return EnvelopeCurves(*curves)


def doubling_diagnostic(model: Model, dist, L: int, energies, n_samples: int, seed: int,
                        threads: int | None = None) -> float:
    """``max_E |curve_{2L}(E) - curve_L(E)|``: how far the finite-volume curve still moves."""
    a = mc_ids(model, dist, L, energies, n_samples, seed, threads)
    b = mc_ids(model, dist, 2 * L, energies, n_samples, seed, threads)
    return float(np.max(np.abs(b.mean - a.mean)))
