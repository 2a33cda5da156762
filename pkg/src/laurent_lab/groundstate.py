"""Zero modes of modified-Neumann sections and the estimates built on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy import stats

from .errors import KernelDimensionMismatch, NotInSpan
from .operator import NEUMANN, IntegerSymbolSpec, assemble_modified, eigensolve, lattice_box, matrix_power

KERNEL_TOL = 1e-10


@dataclass(frozen=True)
class GroundBasis:
    """Unit vectors ``m^j e^{-i m E_k}`` on ``[-L, L]``, columns ordered by ``(k, j)``."""

    minima: tuple[float, ...]
    abar: int
    L: int
    vectors: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self) -> int:
        return 2 * self.L + 1

    @property
    def labels(self) -> list[tuple[int, int]]:
        return [(k, j) for k in range(len(self.minima)) for j in range(self.abar)]

    def orthonormal(self) -> np.ndarray:
        q, _ = np.linalg.qr(self.vectors)
        return q

    def projector_diagonal(self) -> np.ndarray:
        """``P(l, l)`` for the orthogonal projector onto the span."""
        q = self.orthonormal()
        return np.sum(np.abs(q) ** 2, axis=1)


def build_basis(minima: Sequence[float], abar: int, L: int) -> GroundBasis:
    n_vec = len(minima) * abar
    if 2 * L + 1 < n_vec:
        raise ValueError(f"L={L} too small for {n_vec} independent vectors")
    m = np.arange(-L, L + 1)
    cols = []
    for e in minima:
        phase = np.exp(-1j * m * e)
        for j in range(abar):
            v = (m.astype(float) ** j) * phase
            cols.append(v / np.linalg.norm(v))
    return GroundBasis(tuple(float(e) for e in minima), int(abar), int(L), np.column_stack(cols))


def basis_for(spec: IntegerSymbolSpec, L: int) -> GroundBasis:
    return build_basis(spec.minima, spec.abar, L)


@dataclass(frozen=True)
class GramReport:
    gram: np.ndarray = field(repr=False)
    max_offdiag: float
    max_cross: float
    size: int

    @property
    def scaled_offdiag(self) -> float:
        return self.max_offdiag * self.size

    @property
    def scaled_cross(self) -> float:
        """Largest overlap between vectors of different minima, times ``|Lambda_L|``."""
        return self.max_cross * self.size


def gram(basis: GroundBasis) -> GramReport:
    g = basis.vectors.conj().T @ basis.vectors
    off = np.abs(g - np.diag(np.diag(g)))
    ks = np.array([k for k, _ in basis.labels])
    cross = off[ks[:, None] != ks[None, :]]
    return GramReport(g, float(off.max(initial=0.0)), float(cross.max(initial=0.0)), basis.size)


@dataclass(frozen=True)
class FlatnessReport:
    max_density: float  # max_l |phi(l)|^2 |Lambda_L|
    count: int  # #S^a_L
    a: float
    N: int
    size: int

    @property
    def c_aN(self) -> float:
        return (1 - self.a) / (2 * self.N - self.a)

    @property
    def sup_ok(self) -> bool:
        return self.max_density <= 2 * self.N

    @property
    def count_ok(self) -> bool:
        return self.count >= self.c_aN * self.size


def flatness_report(phi: np.ndarray, basis: GroundBasis, a: float, span_tol: float = 1e-8) -> FlatnessReport:
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    phi = np.asarray(phi)
    if abs(np.linalg.norm(phi) - 1) > span_tol:
        raise ValueError("phi must have unit norm")
    q = basis.orthonormal()
    if np.linalg.norm(phi - q @ (q.conj().T @ phi)) > span_tol:
        raise NotInSpan("vector is not in the span of the ground basis")
    dens = basis.size * np.abs(phi) ** 2
    return FlatnessReport(float(dens.max()), int(np.count_nonzero(dens >= a)), a, basis.N, basis.size)


def random_span_vectors(basis: GroundBasis, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` unit vectors in the span, complex Gaussian coordinates; shape ``(size, count)``."""
    coef = rng.standard_normal((basis.N, count)) + 1j * rng.standard_normal((basis.N, count))
    vecs = basis.orthonormal() @ coef
    return vecs / np.linalg.norm(vecs, axis=0)


def min_form_over_G(basis: GroundBasis, potential, return_vector: bool = False):
    """Smallest ``<phi, V phi>`` over unit ``phi`` in the span (after QR)."""
    q = basis.orthonormal()
    v = np.asarray(getattr(potential, "values", potential), dtype=float)
    form = q.conj().T @ (v[:, None] * q)
    w, u = np.linalg.eigh(0.5 * (form + form.conj().T))
    if return_vector:
        return float(w[0]), q @ u[:, 0]
    return float(w[0])


def kernel_residual(spec: IntegerSymbolSpec, basis: GroundBasis) -> float:
    """``max_j ||A phi_j|| / ||A||`` for the Neumann section ``A`` on the basis interval."""
    sec = assemble_modified(spec, lattice_box(basis.L), NEUMANN)
    return float(np.max(np.linalg.norm(sec.matrix @ basis.vectors, axis=0)) / sec.norm())


@dataclass(frozen=True)
class GapScalingReport:
    Ls: np.ndarray
    gaps: np.ndarray  # mu_{N+1}
    kernel_dims: np.ndarray
    b: float
    slope: float
    intercept: float

    @property
    def C0(self) -> float:
        return float(np.min(self.gaps * self.Ls.astype(float) ** self.b))


def powered_neumann(spec: IntegerSymbolSpec, L: int):
    sec = assemble_modified(spec, lattice_box(L), NEUMANN)
    return matrix_power(sec, spec.beta, spec.scale)


def neumann_gap(spec: IntegerSymbolSpec, L: int, tol: float = KERNEL_TOL) -> tuple[float, int]:
    """``(mu_{N+1}, #eigenvalues below tol)`` of ``scale * (T^{N,N})^beta`` on ``[-L, L]``."""
    w = eigensolve(powered_neumann(spec, L)).values
    return float(w[spec.N]), int(np.count_nonzero(w < tol))


def gap_scaling(spec: IntegerSymbolSpec, Ls: Sequence[int], tol: float = KERNEL_TOL) -> GapScalingReport:
    """Spectral gap of the powered Neumann section over ``Ls`` and its log-log slope.

    Raises ``KernelDimensionMismatch`` unless exactly ``N`` eigenvalues lie
    below ``tol`` at every ``L``.
    """
    Ls = np.asarray(sorted(Ls), dtype=int)
    if Ls.min() < spec.N:
        raise ValueError("every L must satisfy 2L+1 >= 2N+1")
    gaps, dims = [], []
    for L in Ls:
        g, d = neumann_gap(spec, int(L), tol)
        if d != spec.N:
            raise KernelDimensionMismatch(f"L={L}: {d} zero modes, expected {spec.N}")
        gaps.append(g)
        dims.append(d)
    gaps = np.array(gaps)
    if len(Ls) >= 2:
        fit = stats.linregress(np.log(Ls), np.log(gaps))
        slope, icpt = float(fit.slope), float(fit.intercept)
    else:
        slope = icpt = float("nan")
    return GapScalingReport(Ls, gaps, np.array(dims), spec.b, slope, icpt)
