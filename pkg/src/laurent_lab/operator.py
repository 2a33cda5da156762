"""Finite sections of Laurent operators and their boundary conditions.

Matrices follow ``M[m, n] = a_{m-n}``; sites of an interval ``(a, b)`` are
the integers ``a..b`` inclusive and map to matrix rows ``0..b-a``.

The modified Neumann and Dirichlet conditions for a banded symbol
``g = prod_i (2 - 2cos(x - E_i))^abar`` are realized through a root factor
``p`` with ``|p|^2 = g``: every row vector ``r_n`` (entries ``p_k`` at sites
``n + k``) contributes ``|r_n><r_n|`` to the Laurent matrix.  Neumann keeps
the rows lying inside the interval, Dirichlet additionally counts the rows
straddling an end twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import BracketViolated, DimensionCap, FactorMismatch, IntervalTooShort, NotPSD
from .symbol import FourierCoefficients, Symbol, cosine_well, reduce_torus, torus_grid

SIMPLE = "simple"
NEUMANN = "neumann"
DIRICHLET = "dirichlet"
BOUNDARY_TAGS = (SIMPLE, NEUMANN, DIRICHLET)

EIGEN_CAP = 4096
PSD_CLAMP = 1e-12
PSD_FAIL = 1e-8


def lattice_box(L: int) -> tuple[int, int]:
    """The interval ``[-L, L]``."""
    return (-L, L)


def _length(interval) -> int:
    a, b = interval
    if b < a:
        raise ValueError(f"empty interval {interval}")
    return b - a + 1


@dataclass(frozen=True)
class IntegerSymbolSpec:
    """``f = scale * g^beta`` with ``g = prod_i (2 - 2cos(x - E_i))^abar``."""

    minima: tuple[float, ...]
    abar: int = 1
    beta: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "minima", tuple(float(reduce_torus(e)) for e in self.minima))
        if not self.minima:
            raise ValueError("need at least one minimum")
        if int(self.abar) != self.abar or self.abar < 1:
            raise ValueError("abar must be a positive integer")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        e = np.array(self.minima)
        d = np.abs(reduce_torus(e[:, None] - e[None, :]))
        np.fill_diagonal(d, np.inf)
        if np.any(d < 1e-12):
            raise ValueError("minima must be pairwise distinct")

    @classmethod
    def from_alpha(cls, minima: Sequence[float], alpha: float, scale: float = 1.0) -> "IntegerSymbolSpec":
        abar = max(1, math.ceil(alpha - 1e-12))
        return cls(tuple(minima), abar, alpha / abar, scale)

    @property
    def M(self) -> int:
        return len(self.minima)

    @property
    def N(self) -> int:
        """Half bandwidth of the banded matrix of ``g``."""
        return self.M * self.abar

    @property
    def b(self) -> float:
        """Gap exponent ``2 * abar * beta`` (twice the exponent of each factor of ``f``)."""
        return 2.0 * self.abar * self.beta

    def g(self, x):
        out = np.ones(np.shape(x))
        for e in self.minima:
            out = out * cosine_well(x, e) ** self.abar
        return out

    def symbol(self) -> Symbol:
        """The symbol ``scale * g^beta`` as a cosine product."""
        return Symbol.cosine_product([(e, self.abar * self.beta) for e in self.minima], self.scale)

    def with_power(self, beta: float | None = None, scale: float | None = None) -> "IntegerSymbolSpec":
        return replace(self, beta=self.beta if beta is None else beta, scale=self.scale if scale is None else scale)

    def describe(self) -> dict:
        return {"minima": list(self.minima), "abar": self.abar, "beta": self.beta, "scale": self.scale}


@dataclass(frozen=True)
class RootFactor:
    coeffs: np.ndarray = field(repr=False)

    def __call__(self, x):
        k = np.arange(self.coeffs.size)
        return np.exp(1j * np.multiply.outer(np.asarray(x, dtype=float), k)) @ self.coeffs


def root_factor(spec: IntegerSymbolSpec, check_points: int = 1 << 12, tol: float = 1e-10) -> RootFactor:
    """Coefficients of ``p(x) = prod_i (1 - e^{i(x - E_i)})^abar`` in powers of ``e^{ix}``."""
    p = np.array([1.0 + 0j])
    for e in spec.minima:
        for _ in range(spec.abar):
            p = np.convolve(p, np.array([1.0, -np.exp(-1j * e)]))
    rf = RootFactor(p)
    x = torus_grid(check_points)
    g = spec.g(x)
    err = np.max(np.abs(np.abs(rf(x)) ** 2 - g))
    if err > tol * max(1.0, g.max()):
        raise FactorMismatch(f"|p|^2 differs from g by {err:.3g}")
    return rf


def spec_coefficients(spec: IntegerSymbolSpec, n_max: int | None = None) -> FourierCoefficients:
    """Exact Fourier coefficients of ``g`` from the root factor (``a_d = sum_k p_{k+d} conj(p_k)``).

    Only meaningful for the integer-power symbol ``g`` itself; ``beta`` and
    ``scale`` are ignored.
    """
    p = root_factor(spec).coeffs
    n = spec.N
    n_max = n if n_max is None else max(n_max, 1)
    vals = np.zeros(2 * n_max + 1, dtype=complex)
    for d in range(-min(n, n_max), min(n, n_max) + 1):
        k = np.arange(max(0, -d), min(n, n - d) + 1)
        vals[d + n_max] = np.sum(p[k + d] * np.conj(p[k]))
    return FourierCoefficients(vals, 0.0, 0)


@dataclass(frozen=True)
class FiniteSection:
    matrix: np.ndarray = field(repr=False)
    interval: tuple[int, int]
    bc: str
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.interval[0], self.interval[1] + 1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def plus_potential(self, values) -> np.ndarray:
        out = self.matrix.copy()
        out[np.diag_indices_from(out)] += values
        return out

    def rows(self):
        """Row-major entries as ``(row, col, re, im)``."""
        for i in range(self.dim):
            for j in range(self.dim):
                z = self.matrix[i, j]
                yield i, j, z.real, z.imag


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def _maybe_real(a: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(a) and np.max(np.abs(a.imag), initial=0.0) == 0.0:
        return np.ascontiguousarray(a.real)
    return a


def assemble_simple(coeffs: FourierCoefficients, interval, provenance: dict | None = None) -> FiniteSection:
    """Compression of the Laurent matrix to ``interval`` (no boundary terms)."""
    n = _length(interval)
    col = coeffs.column(n)
    row = np.conj(col)
    mat = scipy.linalg.toeplitz(col, row)
    prov = dict(provenance or {})
    if coeffs.n_max < n - 1:
        prov["truncated_at"] = coeffs.n_max
    return FiniteSection(_maybe_real(mat), tuple(interval), SIMPLE, prov)


def assemble_modified(spec: IntegerSymbolSpec, interval, bc: str) -> FiniteSection:
    """Section of ``g`` with modified Neumann or Dirichlet conditions at both ends.

    ``bc=SIMPLE`` is also accepted and reproduces the plain compression
    through the same row decomposition.
    """
    if bc not in BOUNDARY_TAGS:
        raise ValueError(f"unknown boundary condition {bc!r}")
    n = _length(interval)
    N = spec.N
    if n < 2 * N + 1:
        raise IntervalTooShort(f"interval of length {n} shorter than 2N+1 = {2 * N + 1}")
    p = root_factor(spec).coeffs
    mat = np.zeros((n, n), dtype=complex)
    # rows fully inside: local start positions 0..n-1-N
    starts = np.arange(n - N)
    for k in range(N + 1):
        for l in range(N + 1):
            mat[starts + k, starts + l] += p[k] * np.conj(p[l])
    if bc != NEUMANN:
        weight = 2.0 if bc == DIRICHLET else 1.0
        for s in range(-N, 0):
            # straddles the left end: sites 0..s+N
            r = p[-s:]
            mat[: r.size, : r.size] += weight * np.outer(r, np.conj(r))
        for s in range(n - N, n):
            r = p[: n - s]
            mat[s:, s:] += weight * np.outer(r, np.conj(r))
    prov = {"spec": spec.describe()}
    return FiniteSection(_maybe_real(_hermitize(mat)), tuple(interval), bc, prov)


def matrix_power(sec: FiniteSection, beta: float, scale: float = 1.0) -> FiniteSection:
    """``scale * sec^beta`` for a positive semidefinite section.

    Eigenvalues below ``1e-12 ||A||`` are clamped to zero; anything below
    ``-1e-8 ||A||`` is rejected.  ``beta == 1`` only rescales.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    prov = dict(sec.provenance, beta=beta, scale=scale)
    if beta == 1:
        return FiniteSection(scale * sec.matrix, sec.interval, sec.bc, prov)
    w, v = np.linalg.eigh(sec.matrix)
    norm = max(abs(w[0]), abs(w[-1]))
    if w[0] < -PSD_FAIL * norm:
        raise NotPSD(f"eigenvalue {w[0]:.3g} below -{PSD_FAIL:g}*||A||")
    w = np.where(w < PSD_CLAMP * norm, 0.0, w)
    out = (v * (scale * w ** beta)) @ v.conj().T
    return FiniteSection(_maybe_real(_hermitize(out)), sec.interval, sec.bc, prov)


def direct_sum(*sections: FiniteSection) -> FiniteSection:
    """Block-diagonal assembly of sections on adjacent intervals."""
    for left, right in zip(sections, sections[1:]):
        if left.interval[1] + 1 != right.interval[0]:
            raise ValueError("direct sum needs adjacent intervals")
    mat = scipy.linalg.block_diag(*[s.matrix for s in sections])
    interval = (sections[0].interval[0], sections[-1].interval[1])
    tags = {s.bc for s in sections}
    return FiniteSection(mat, interval, tags.pop() if len(tags) == 1 else "mixed",
                         {"blocks": [s.interval for s in sections]})


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    vectors: np.ndarray | None = field(default=None, repr=False)
    residual: float | None = None


def eigensolve(sec, want_vectors: bool = False, cap: int = EIGEN_CAP) -> Spectrum:
    """Full dense Hermitian eigendecomposition (LAPACK, via tridiagonal reduction).

    ``residual`` is ``max_j ||A v_j - lambda_j v_j|| / ||A||`` when vectors
    are requested.
    """
    a = sec.matrix if isinstance(sec, FiniteSection) else np.asarray(sec)
    if a.shape[0] > cap:
        raise DimensionCap(f"dimension {a.shape[0]} exceeds eigensolver cap {cap}")
    if not want_vectors:
        return Spectrum(np.linalg.eigvalsh(a))
    w, v = np.linalg.eigh(a)
    scale = max(abs(w[0]), abs(w[-1]), np.finfo(float).tiny)
    res = float(np.max(np.linalg.norm(a @ v - v * w, axis=0)) / scale)
    return Spectrum(w, v, res)


@dataclass(frozen=True)
class BracketReport:
    interval: tuple[int, int]
    cut: int
    lower_min: float
    upper_min: float
    norm: float
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return min(self.lower_min, self.upper_min) >= -self.tol * self.norm


def bracketing_check(spec: IntegerSymbolSpec, interval, cut: int, tol: float = 1e-10,
                     raise_on_fail: bool = True) -> BracketReport:
    """Check ``N(a..cut) + N(cut+1..b) <= T(a..b) <= D(a..cut) + D(cut+1..b)``.

    Returns the smallest eigenvalue of both differences.
    """
    a, b = interval
    left, right = (a, cut), (cut + 1, b)
    full = assemble_modified(spec, interval, SIMPLE)
    neu = direct_sum(assemble_modified(spec, left, NEUMANN), assemble_modified(spec, right, NEUMANN))
    dir_ = direct_sum(assemble_modified(spec, left, DIRICHLET), assemble_modified(spec, right, DIRICHLET))
    lo = float(np.linalg.eigvalsh(full.matrix - neu.matrix)[0])
    hi = float(np.linalg.eigvalsh(dir_.matrix - full.matrix)[0])
    rep = BracketReport(tuple(interval), cut, lo, hi, full.norm(), tol)
    if raise_on_fail and not rep.passed:
        worst = min(lo, hi)
        raise BracketViolated(f"bracketing fails with eigenvalue {worst:.3g}", worst)
    return rep
