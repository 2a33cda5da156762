"""Anderson potentials from a counter-based generator.

Each site value is a deterministic function of ``(seed, index, site)``:
the Philox key is ``(seed, index)`` and the site selects the output word,
so a site gets the same value whatever interval or thread produced it.
All single-site laws are sampled by inverse CDF from one uniform per site.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Philox
from scipy import optimize

SITE_OFFSET = 1 << 62
_U53 = 2.0 ** -53


def site_uniforms(seed: int, index: int, interval) -> np.ndarray:
    """Uniforms in (0, 1) for sites ``a..b``, keyed by ``(seed, index, site)``."""
    a, b = interval
    if not 0 <= seed < 1 << 64 or not 0 <= index < 1 << 64:
        raise ValueError("seed and index must fit in 64 unsigned bits")
    first = a + SITE_OFFSET
    block, skip = divmod(first, 4)
    bg = Philox(key=(seed << 64) | index, counter=block)
    raw = bg.random_raw(skip + b - a + 1)[skip:]
    return ((raw >> np.uint64(11)).astype(float) + 0.5) * _U53


@dataclass(frozen=True)
class Uniform:
    hi: float = 1.0
    kind = "uniform"

    def __post_init__(self):
        if self.hi <= 0:
            raise ValueError("hi must be positive")

    def ppf(self, u):
        return self.hi * u

    def cdf(self, v):
        return np.clip(np.asarray(v) / self.hi, 0.0, 1.0)

    @property
    def mean(self) -> float:
        return 0.5 * self.hi

    @property
    def sup(self) -> float:
        return self.hi

    def tilted(self, theta: float) -> "TiltedUniform":
        return TiltedUniform(self.hi, theta)

    def tilt_for_mean(self, target: float) -> "TiltedUniform":
        """Exponential tilt whose mean is ``target`` (must lie in ``(0, hi/2]``)."""
        if not 0 < target <= self.mean:
            raise ValueError("tilted mean must lie in (0, hi/2]")
        if target >= self.mean * (1 - 1e-12):
            return TiltedUniform(self.hi, 0.0)
        r = target / self.hi
        theta = optimize.brentq(lambda t: _tilted_unit_mean(t) - r, 1e-9, 1e12, xtol=1e-14, rtol=1e-14)
        return TiltedUniform(self.hi, theta / self.hi)

    def describe(self) -> dict:
        return {"kind": self.kind, "hi": self.hi}


def _tilted_unit_mean(t: float) -> float:
    # mean of density ~ exp(-t v) on [0, 1]
    if t < 1e-6:
        return 0.5 - t / 12
    if t > 700:
        return 1.0 / t
    return 1.0 / t - 1.0 / math.expm1(t)


@dataclass(frozen=True)
class TiltedUniform:
    """Density proportional to ``exp(-theta v)`` on ``[0, hi]``; proposal for rare small-potential events."""

    hi: float
    theta: float
    kind = "tilted_uniform"

    def ppf(self, u):
        if self.theta == 0:
            return self.hi * u
        t = self.theta
        return -np.log1p(-u * -math.expm1(-t * self.hi)) / t

    def log_likelihood_ratio(self, v) -> np.ndarray:
        """``log(base density / proposal density)`` per site."""
        if self.theta == 0:
            return np.zeros_like(np.asarray(v, dtype=float))
        t, h = self.theta, self.hi
        # base 1/h; proposal t e^{-t v} / (1 - e^{-t h})
        return np.log(-math.expm1(-t * h) / (t * h)) + t * np.asarray(v)

    @property
    def mean(self) -> float:
        return self.hi * _tilted_unit_mean(self.theta * self.hi)

    def describe(self) -> dict:
        return {"kind": self.kind, "hi": self.hi, "theta": self.theta}


@dataclass(frozen=True)
class Bernoulli:
    p: float
    value: float = 1.0
    kind = "bernoulli"

    def __post_init__(self):
        if not 0 < self.p <= 1 or self.value <= 0:
            raise ValueError("Bernoulli needs 0 < p <= 1 and value > 0")

    def ppf(self, u):
        return np.where(np.asarray(u) < self.p, self.value, 0.0)

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v < 0, 0.0, np.where(v < self.value, 1 - self.p, 1.0))

    @property
    def mean(self) -> float:
        return self.p * self.value

    @property
    def sup(self) -> float:
        return self.value

    def describe(self) -> dict:
        return {"kind": self.kind, "p": self.p, "value": self.value}


@dataclass(frozen=True)
class PowerLaw:
    """``P([0, eps)) = eps^kappa`` on ``[0, 1]``."""

    kappa: float
    kind = "power_law"

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")

    def ppf(self, u):
        return np.asarray(u) ** (1.0 / self.kappa)

    def cdf(self, v):
        return np.clip(np.asarray(v, dtype=float), 0.0, 1.0) ** self.kappa

    @property
    def mean(self) -> float:
        return self.kappa / (self.kappa + 1)

    @property
    def sup(self) -> float:
        return 1.0

    def describe(self) -> dict:
        return {"kind": self.kind, "kappa": self.kappa}


@dataclass(frozen=True)
class PointMass:
    value: float = 0.0
    kind = "point_mass"

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("point mass must be non-negative")

    def ppf(self, u):
        return np.full(np.shape(u), self.value)

    def cdf(self, v):
        return np.where(np.asarray(v, dtype=float) < self.value, 0.0, 1.0)

    @property
    def mean(self) -> float:
        return self.value

    @property
    def sup(self) -> float:
        return self.value

    def describe(self) -> dict:
        return {"kind": self.kind, "value": self.value}


SingleSiteDist = Uniform | Bernoulli | PowerLaw | PointMass

_KINDS = {"uniform": Uniform, "bernoulli": Bernoulli, "power_law": PowerLaw, "point_mass": PointMass}


def dist_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown distribution kind {kind!r}")
    return _KINDS[kind](**d)


@dataclass(frozen=True)
class Potential:
    interval: tuple[int, int]
    values: np.ndarray = field(repr=False)
    dist: dict
    seed: int
    index: int

    def rows(self):
        for site, v in zip(range(self.interval[0], self.interval[1] + 1), self.values):
            yield site, v


def sample_potential(dist, interval, seed: int, index: int) -> Potential:
    vals = dist.ppf(site_uniforms(seed, index, interval))
    return Potential(tuple(interval), np.asarray(vals, dtype=float), dist.describe(), seed, index)


def sample_values(dist, interval, seed: int, indices) -> np.ndarray:
    """Potentials for several sample indices stacked as rows."""
    return np.stack([dist.ppf(site_uniforms(seed, int(i), interval)) for i in indices])


def truncate_potential(pot: Potential, c_tilde: float, C0: float, L: int, b: float) -> Potential:
    """Pointwise ``min(V, c_tilde * C0 / L^b)``."""
    if not 0 < c_tilde < 0.5:
        raise ValueError("c_tilde must lie in (0, 1/2)")
    if C0 <= 0:
        raise ValueError("C0 must be positive")
    cap = c_tilde * C0 / float(L) ** b
    return Potential(pot.interval, np.minimum(pot.values, cap), dict(pot.dist, truncated_at=cap),
                     pot.seed, pot.index)
