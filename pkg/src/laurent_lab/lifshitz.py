"""Tail analysis near the bottom of the spectrum.

Double-log exponent fits, the generalized Temple bound checked sample by
sample, the probability probes behind the upper and lower tail bounds, and
the energy of a smooth bump vector under powers of the discrete Laplacian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from ._parallel import chunks, ordered_map
from .disorder import Uniform, sample_potential, sample_values, site_uniforms
from .errors import GapConstantMissing, SupportTooWide, WindowInvalid
from .groundstate import basis_for, min_form_over_G, neumann_gap, powered_neumann
from .ids import IdsCurve, Model, mc_ids, sample_counts
from .operator import (
    DIRICHLET,
    EIGEN_CAP,
    NEUMANN,
    IntegerSymbolSpec,
    assemble_modified,
    lattice_box,
    matrix_power,
)

# ---------------------------------------------------------------- fits


@dataclass(frozen=True)
class TailFit:
    window: tuple[float, float]
    slope: float
    intercept: float
    residual: float  # max abs deviation from the fitted line
    n_points: int
    target: float | None = None  # -1/b when b is known

    @property
    def relative_error(self) -> float | None:
        if self.target is None:
            return None
        return abs(self.slope - self.target) / abs(self.target)


def _window_mask(e: np.ndarray, window) -> np.ndarray:
    if window is None:
        return np.ones(e.shape, dtype=bool)
    lo, hi = window
    return (e >= lo) & (e <= hi)


def _line(x: np.ndarray, y: np.ndarray):
    if x.size < 2:
        raise WindowInvalid("need at least two energies in the window")
    fit = stats.linregress(x, y)
    res = float(np.max(np.abs(y - (fit.intercept + fit.slope * x))))
    return float(fit.slope), float(fit.intercept), res


def double_log_fit(energies, values, window=None, b: float | None = None,
                   log_values: bool = False) -> TailFit:
    """Least-squares line through ``(ln E, ln|ln N(E)|)``.

    ``values`` may be an :class:`IdsCurve` (its mean is used) or an array.
    With ``log_values=True`` the array holds ``ln N`` already, which keeps
    curves far below the float range usable.
    """
    if isinstance(values, IdsCurve):
        values = values.mean
    e = np.asarray(energies, dtype=float)
    v = np.asarray(values, dtype=float)
    m = _window_mask(e, window)
    e, v = e[m], v[m]
    if np.any(e <= 0):
        raise WindowInvalid("energies must be positive")
    logn = v if log_values else None
    if logn is None:
        if np.any(v <= 0) or np.any(v >= 1):
            raise WindowInvalid("curve values must lie strictly between 0 and 1")
        logn = np.log(v)
    if np.any(logn >= 0) or not np.all(np.isfinite(logn)):
        raise WindowInvalid("ln N must be finite and negative")
    slope, icpt, res = _line(np.log(e), np.log(-logn))
    win = (float(e.min()), float(e.max())) if e.size else (math.nan, math.nan)
    return TailFit(win, slope, icpt, res, int(e.size), None if b is None else -1.0 / b)


def log_log_fit(energies, values, window=None) -> TailFit:
    """Least-squares line through ``(ln E, ln N(E))`` for positive values."""
    e = np.asarray(energies, dtype=float)
    v = np.asarray(values, dtype=float)
    m = _window_mask(e, window)
    e, v = e[m], v[m]
    if np.any(e <= 0) or np.any(v <= 0):
        raise WindowInvalid("log-log fit needs positive energies and values")
    slope, icpt, res = _line(np.log(e), np.log(v))
    return TailFit((float(e.min()), float(e.max())), slope, icpt, res, int(e.size))


# ---------------------------------------------------------------- Temple


@dataclass(frozen=True)
class TempleReport:
    E0: np.ndarray = field(repr=False)
    min_form: np.ndarray = field(repr=False)
    c_tilde: float
    C0: float
    L: int
    b: float
    tol: float = 1e-12

    @property
    def correction(self) -> float:
        return 6 * self.c_tilde ** 2 * self.C0 / float(self.L) ** self.b

    @property
    def margin(self) -> np.ndarray:
        """Left side minus right side of the bound, per sample."""
        return self.E0 + self.correction - (1 - 2 * self.c_tilde) ** 2 * self.min_form

    @property
    def passed(self) -> np.ndarray:
        return self.margin >= -self.tol

    @property
    def pass_rate(self) -> float:
        return float(np.mean(self.passed))

    def rows(self):
        for i, (e0, mf, ok) in enumerate(zip(self.E0, self.min_form, self.passed)):
            yield i, e0, mf, self.c_tilde, self.C0, self.L, self.b, int(ok)


def temple_verify(spec: IntegerSymbolSpec, dist, L: int, n_samples: int, seed: int,
                  C0: float | None, c_tilde: float = 0.25, threads: int | None = None,
                  potential_override=None) -> TempleReport:
    """Check ``E_0 + 6 c^2 C0 / L^b >= (1 - 2c)^2 min_G <phi, V~ phi>`` per sample.

    ``V~`` is the potential truncated at ``c C0 / L^b`` and ``E_0`` the
    ground energy of the powered Neumann section plus ``V~``.
    ``potential_override`` replaces the random draws by fixed site values.
    """
    if C0 is None:
        raise GapConstantMissing("C0 is required; measure it with gap_scaling")
    if not 0 < c_tilde < 0.5:
        raise ValueError("c_tilde must lie in (0, 1/2)")
    if L < spec.N:
        raise ValueError("L too small for the modified boundary conditions")
    gap, _ = neumann_gap(spec, L)
    if gap * L ** spec.b < C0 * (1 - 1e-9):
        raise GapConstantMissing(f"C0={C0:.6g} exceeds the measured gap constant at L={L}")
    base = powered_neumann(spec, L).matrix
    basis = basis_for(spec, L)
    box = lattice_box(L)
    cap = c_tilde * C0 / float(L) ** spec.b
    d = np.arange(base.shape[0])

    def run(idx):
        out = []
        for i in idx:
            if potential_override is not None:
                v = np.asarray(potential_override, dtype=float)
            else:
                v = dist.ppf(site_uniforms(seed, i, box))
            vt = np.minimum(v, cap)
            h = base.copy()
            h[d, d] += vt
            out.append((np.linalg.eigvalsh(h)[0], min_form_over_G(basis, vt)))
        return out

    res = [r for part in ordered_map(run, chunks(n_samples, 16), threads) for r in part]
    e0 = np.array([r[0] for r in res], dtype=float)
    mf = np.array([r[1] for r in res], dtype=float)
    return TempleReport(e0, mf, c_tilde, float(C0), int(L), spec.b)


def measure_C0(spec: IntegerSymbolSpec, Ls: Sequence[int]) -> float:
    """``min_L mu_{N+1}(L) L^b`` over the given volumes."""
    from .groundstate import gap_scaling

    return gap_scaling(spec, Ls).C0


# ---------------------------------------------------------------- probes


@dataclass(frozen=True)
class ProbeRow:
    E: float
    L: int
    n: int
    hits: int
    ci_low: float
    ci_high: float
    certificate_hits: int | None = None  # lower probe: #{certificate < E}
    dominance: float | None = None  # lower probe: fraction with certificate >= E_0

    @property
    def probability(self) -> float:
        return self.hits / self.n


@dataclass(frozen=True)
class ProbeReport:
    kind: str
    rows: list[ProbeRow]
    skipped: list[tuple[float, int]]  # (E, L) beyond the dimension cap
    constant: float | None = None  # C3 for the lower probe

    def table(self):
        for r in self.rows:
            yield (r.E, r.L, r.n, r.hits, r.probability, r.ci_low, r.ci_high,
                   r.certificate_hits if r.certificate_hits is not None else "",
                   r.dominance if r.dominance is not None else "")


def probe_length(E: float, gamma: float, b: float, N: int) -> int:
    """``L = ceil(gamma E^{-1/b})``, raised to ``N`` if needed."""
    if gamma <= 0 or E <= 0:
        raise ValueError("gamma and E must be positive")
    return max(math.ceil(gamma * E ** (-1.0 / b) - 1e-12), N)


def _wilson(k: int, n: int) -> tuple[float, float]:
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def upper_probe(spec: IntegerSymbolSpec, dist, energies, gamma: float, n_samples: int, seed: int,
                cap: int = EIGEN_CAP, threads: int | None = None) -> ProbeReport:
    """Empirical ``P(E_0(Neumann powered + V) < E)`` with ``L`` tied to ``E``."""
    rows, skipped = [], []
    for E in energies:
        L = probe_length(E, gamma, spec.b, spec.N)
        if 2 * L + 1 > cap:
            skipped.append((float(E), L))
            continue
        _, _, ground = sample_counts(powered_neumann(spec, L), dist, [E], n_samples, seed, threads)
        k = int(np.count_nonzero(ground < E))
        rows.append(ProbeRow(float(E), L, n_samples, k, *_wilson(k, n_samples)))
    return ProbeReport("upper", rows, skipped)


def bump_vector(L: int) -> np.ndarray:
    """Unit-norm ``psi_1(m / L)`` on ``[-L, L]``."""
    psi = bump_profile(np.arange(-L, L + 1) / L)
    return psi / np.linalg.norm(psi)


def bump_form(spec: IntegerSymbolSpec, L: int) -> float:
    """``scale * <phi, D phi>^beta`` for the normalized bump modulated to the first minimum.

    ``D`` is the Dirichlet section of ``g``; by Jensen this bounds
    ``<phi, scale * D^beta phi>`` from above.
    """
    m = np.arange(-L, L + 1)
    phi = bump_vector(L) * np.exp(-1j * m * spec.minima[0])
    d = assemble_modified(spec, lattice_box(L), DIRICHLET).matrix
    q = float(np.real(np.vdot(phi, d @ phi)))
    return spec.scale * max(q, 0.0) ** spec.beta


def lower_probe(spec: IntegerSymbolSpec, dist, energies, gamma: float, n_samples: int, seed: int,
                cap: int = EIGEN_CAP, threads: int | None = None, C3: float | None = None) -> ProbeReport:
    """Empirical ``P(E_0(Dirichlet powered + V) < E)`` next to the bump certificate.

    The certificate is ``C3 / L^b + max_n V(n)``; ``C3`` defaults to the
    largest ``bump_form * L^b`` over the probed volumes.  Each row records
    how often the certificate dominates ``E_0`` (always, unless a bug).
    """
    plan, skipped = [], []
    for E in energies:
        L = probe_length(E, gamma, spec.b, spec.N)
        if 2 * L + 1 > cap:
            skipped.append((float(E), L))
        else:
            plan.append((float(E), L))
    if C3 is None:
        C3 = max((bump_form(spec, L) * L ** spec.b for _, L in plan), default=0.0)
    rows = []
    for E, L in plan:
        sec = matrix_power(assemble_modified(spec, lattice_box(L), DIRICHLET), spec.beta, spec.scale)
        _, _, ground = sample_counts(sec, dist, [E], n_samples, seed, threads)
        vmax = sample_values(dist, lattice_box(L), seed, range(n_samples)).max(axis=1)
        cert = C3 / float(L) ** spec.b + vmax
        k = int(np.count_nonzero(ground < E))
        dom = float(np.mean(cert >= ground - 1e-12))
        rows.append(ProbeRow(E, L, n_samples, k, *_wilson(k, n_samples),
                             int(np.count_nonzero(cert < E)), dom))
    return ProbeReport("lower", rows, skipped, float(C3))


@dataclass(frozen=True)
class ChainCheck:
    dirichlet_count: np.ndarray  # normalized count of eigenvalues < E
    neumann_hit: np.ndarray
    truncated_hit: np.ndarray

    @property
    def holds(self) -> bool:
        return bool(np.all(self.dirichlet_count <= self.neumann_hit)
                    and np.all(self.neumann_hit <= self.truncated_hit))


def chain_check(spec: IntegerSymbolSpec, dist, L: int, E: float, n_samples: int, seed: int,
                C0: float, c_tilde: float = 0.25) -> ChainCheck:
    """Per-sample ordering of the Dirichlet count and both Neumann ground-state indicators."""
    box = lattice_box(L)
    dsec = matrix_power(assemble_modified(spec, box, DIRICHLET), spec.beta, spec.scale).matrix
    nsec = powered_neumann(spec, L).matrix
    cap = c_tilde * C0 / float(L) ** spec.b
    dc, nh, th = [], [], []
    for i in range(n_samples):
        v = sample_potential(dist, box, seed, i).values
        dc.append(np.count_nonzero(np.linalg.eigvalsh(dsec + np.diag(v)) < E) / v.size)
        nh.append(float(np.linalg.eigvalsh(nsec + np.diag(v))[0] < E))
        th.append(float(np.linalg.eigvalsh(nsec + np.diag(np.minimum(v, cap)))[0] < E))
    return ChainCheck(np.array(dc), np.array(nh), np.array(th))


# ---------------------------------------------------------------- tail estimate


@dataclass(frozen=True)
class TailEstimate:
    energies: np.ndarray
    Ls: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_samples: int
    tilts: np.ndarray  # proposal parameter per energy, 0 when untilted

    def rows(self):
        for e, L, m, s, t in zip(self.energies, self.Ls, self.mean, self.stderr, self.tilts):
            yield e, L, m, s, self.n_samples, t

    def fit(self, b: float | None = None) -> TailFit:
        return double_log_fit(self.energies, self.mean, b=b)


def neumann_tail_estimate(spec: IntegerSymbolSpec, dist, energies, gamma: float, n_samples: int,
                          seed: int, threads: int | None = None, tilt: bool = True) -> TailEstimate:
    """Expected normalized Neumann count at ``E`` on ``[-L, L]`` with ``L = ceil(gamma E^{-1/b})``.

    The values are far too small for plain sampling near the bottom of the
    window, so for a uniform law each energy draws from the exponential tilt
    with mean ``min(E, hi/2)`` and reweights (unbiased).
    """
    energies = np.asarray(energies, dtype=float)
    Ls, means, errs, tilts = [], [], [], []
    for E in energies:
        L = probe_length(E, gamma, spec.b, spec.N)
        prop = None
        if tilt and isinstance(dist, Uniform) and E < dist.mean:
            prop = dist.tilt_for_mean(E)
        model = Model(spec=spec, bc=NEUMANN)
        curve = mc_ids(model, dist, L, [E], n_samples, seed, threads, proposal=prop,
                       section=powered_neumann(spec, L))
        Ls.append(L)
        means.append(curve.mean[0])
        errs.append(curve.stderr[0])
        tilts.append(0.0 if prop is None else prop.theta)
    return TailEstimate(energies, np.array(Ls), np.array(means), np.array(errs), n_samples,
                        np.array(tilts))


# ---------------------------------------------------------------- bump


def _smooth_step(u):
    # 0 for u <= 0, 1 for u >= 1, C-infinity in between
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        h0 = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        w = 1.0 - u
        h1 = np.where(w > 0, np.exp(-1.0 / np.where(w > 0, w, 1.0)), 0.0)
    return h0 / (h0 + h1)


def bump_profile(x):
    """``psi_1``: equal to 1 on ``|x| <= 1/2``, 0 on ``|x| >= 3/4``, smooth."""
    return _smooth_step(3.0 - 4.0 * np.abs(np.asarray(x, dtype=float)))


@lru_cache(maxsize=8)
def _profile_derivative(order: int):
    import sympy as sp

    x = sp.symbols("x")
    h = lambda t: sp.exp(-1 / t)  # noqa: E731
    u = 3 - 4 * x
    expr = sp.diff(h(u) / (h(u) + h(1 - u)), x, order)
    return sp.lambdify(x, expr, "numpy")


def bump_derivative(x, order: int) -> np.ndarray:
    """``psi_1^{(order)}`` evaluated pointwise."""
    if order == 0:
        return bump_profile(x)
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    inside = (ax > 0.5 + 1e-9) & (ax < 0.75 - 1e-9)
    out = np.zeros_like(x)
    if np.any(inside):
        with np.errstate(all="ignore"):
            vals = _profile_derivative(order)(ax[inside])
        sign = np.where(x[inside] < 0, (-1.0) ** order, 1.0)
        out[inside] = np.nan_to_num(vals) * sign
    return out


@dataclass(frozen=True)
class BumpEnergy:
    N: int
    L: int
    psi: np.ndarray = field(repr=False)
    numerator: float  # <psi_L, A_D psi_L>
    norm_sq: float
    diff_deviation: float | None  # max |T^N psi - iterated integral| / max |T^N psi|

    @property
    def rayleigh(self) -> float:
        return self.numerator / self.norm_sq


def forward_difference(psi: np.ndarray, N: int) -> np.ndarray:
    """``T^N psi`` with ``(T psi)(n) = psi(n) - psi(n+1)``, zero beyond the right end."""
    out = np.asarray(psi, dtype=float)
    for _ in range(N):
        nxt = np.append(out[1:], 0.0)
        out = out - nxt
    return out


def iterated_integral(L: int, N: int, quad_points: int = 3) -> np.ndarray:
    """``(-1)^N L^{-N} int_{[0,1]^N} psi_1^{(N)}((m + s_1 + ... + s_N) / L) ds`` for ``m`` in ``[-L, L]``."""
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    grids = np.meshgrid(*([nodes] * N), indexing="ij")
    wgrid = np.ones_like(grids[0])
    for w in np.meshgrid(*([weights] * N), indexing="ij"):
        wgrid = wgrid * w
    offset = sum(grids).ravel()
    m = np.arange(-L, L + 1, dtype=float)
    pts = (m[:, None] + offset[None, :]) / L
    vals = bump_derivative(pts, N)
    return (-1.0) ** N * L ** (-N) * (vals @ wgrid.ravel())


def bump_energy(N: int, L: int, check_formula: bool = True, quad_points: int = 3) -> BumpEnergy:
    """Energy of ``psi_L(m) = psi_1(m / L)`` under the Dirichlet section of ``(2 - 2cos)^N``."""
    if N < 1:
        raise ValueError("N must be a positive integer")
    psi = bump_profile(np.arange(-L, L + 1) / L)
    if 2 * L + 1 < 2 * N + 1 or np.any(psi[:N] != 0) or np.any(psi[-N:] != 0):
        raise SupportTooWide(f"bump reaches the boundary layer of width {N} at L={L}")
    spec = IntegerSymbolSpec((0.0,), abar=N)
    a = assemble_modified(spec, lattice_box(L), DIRICHLET).matrix
    num = float(psi @ a @ psi)
    dev = None
    if check_formula:
        diff = forward_difference(psi, N)
        dev = float(np.max(np.abs(diff - iterated_integral(L, N, quad_points))) / np.max(np.abs(diff)))
    return BumpEnergy(N, L, psi, num, float(psi @ psi), dev)


@dataclass(frozen=True)
class BumpScaling:
    N: int
    Ls: np.ndarray
    numerators: np.ndarray
    deviations: np.ndarray
    slope: float

    @property
    def target(self) -> float:
        return -(2.0 * self.N - 1.0)


def bump_scaling(N: int, Ls: Sequence[int], quad_points: int = 3) -> BumpScaling:
    res = [bump_energy(N, int(L), quad_points=quad_points) for L in Ls]
    Ls = np.array([r.L for r in res])
    nums = np.array([r.numerator for r in res])
    devs = np.array([r.diff_deviation for r in res])
    slope = float(stats.linregress(np.log(Ls), np.log(nums)).slope)
    return BumpScaling(N, Ls, nums, devs, slope)

