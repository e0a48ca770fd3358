"""Scalar laws and deterministic stream seeding.

Every random quantity in the package is drawn by inverse transform from an
open-interval uniform stream, so independent and comonotone couplings share
one code path and a given :class:`SeedSpec` always reproduces the same draws.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy import special


class DistributionError(ValueError):
    """Invalid distribution parameters or query."""


class StreamRole(enum.IntEnum):
    THRESHOLD = 0
    OBJECTIVE = 1
    ORACLE = 2


@dataclass(frozen=True)
class SeedSpec:
    """Key of one random stream.

    Streams with distinct ``(trial_index, stage_index, stream_role)`` under the
    same master seed are statistically independent; the output depends only on
    the key, never on the order in which streams are created.
    """

    master_seed: int
    trial_index: int = 0
    stage_index: int = 0
    stream_role: StreamRole = StreamRole.THRESHOLD

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.trial_index < 0 or self.stage_index < 0:
            raise ValueError("trial_index and stage_index must be nonnegative")
        object.__setattr__(self, "stream_role", StreamRole(self.stream_role))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.trial_index, self.stage_index, int(self.stream_role)),
        )
        # Philox is counter based: the key fixes the whole stream.
        return np.random.Generator(np.random.Philox(seq))


def stream(master_seed: int, trial: int = 0, stage: int = 0,
           role: StreamRole = StreamRole.THRESHOLD) -> np.random.Generator:
    return SeedSpec(master_seed, trial, stage, role).generator()


_TWO53 = float(2**53)


def open_uniform(rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniform draws on the open interval (0, 1)."""
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k + 0.5) / _TWO53


class ScalarDistribution:
    """Base class for one-dimensional laws.

    Subclasses provide ``cdf``, ``cdf_left`` (``P{X < t}``) and ``ppf`` (the
    generalized inverse ``inf{t : F(t) >= u}``); all accept arrays.
    """

    family: str = ""

    def cdf(self, t):
        raise NotImplementedError

    def cdf_left(self, t):
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    def quantile_beta(self, beta: float) -> float:
        """Return ``inf{t : P{X <= t} > beta}`` for ``beta`` in [0, 1)."""
        raise NotImplementedError

    @property
    def essential_inf(self) -> float:
        return self.quantile_beta(0.0)

    def mean(self) -> float:
        raise NotImplementedError

    def var(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        return self.ppf(open_uniform(rng, size))

    def to_dict(self) -> dict:
        raise NotImplementedError


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 <= beta < 1.0:
        raise DistributionError(f"beta must lie in [0, 1), got {beta}")
    return beta


@dataclass(frozen=True)
class Uniform(ScalarDistribution):
    a: float = 0.0
    b: float = 1.0
    family = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or not self.b > self.a:
            raise DistributionError(f"uniform requires finite b > a, got a={self.a}, b={self.b}")

    def cdf(self, t):
        return np.clip((np.asarray(t, float) - self.a) / (self.b - self.a), 0.0, 1.0)

    cdf_left = cdf

    def ppf(self, u):
        return self.a + np.asarray(u, float) * (self.b - self.a)

    def quantile_beta(self, beta):
        return self.a + _check_beta(beta) * (self.b - self.a)

    def mean(self):
        return 0.5 * (self.a + self.b)

    def var(self):
        return (self.b - self.a) ** 2 / 12.0

    def to_dict(self):
        return {"family": "uniform", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Exponential(ScalarDistribution):
    rate: float = 1.0
    family = "exponential"

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise DistributionError(f"exponential requires rate > 0, got {self.rate}")

    def cdf(self, t):
        t = np.asarray(t, float)
        return np.where(t > 0, -np.expm1(-self.rate * np.maximum(t, 0.0)), 0.0)

    cdf_left = cdf

    def ppf(self, u):
        return -np.log1p(-np.asarray(u, float)) / self.rate

    def quantile_beta(self, beta):
        return float(-math.log1p(-_check_beta(beta)) / self.rate)

    def mean(self):
        return 1.0 / self.rate

    def var(self):
        return 1.0 / self.rate**2

    def to_dict(self):
        return {"family": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Normal(ScalarDistribution):
    """Gaussian law; meant for objective noise, never for chain thresholds."""

    mean_: float = 0.0
    sd: float = 1.0
    family = "normal"

    def __post_init__(self):
        if not (math.isfinite(self.mean_) and math.isfinite(self.sd) and self.sd > 0):
            raise DistributionError(f"normal requires finite mean and sd > 0, got sd={self.sd}")

    def cdf(self, t):
        return special.ndtr((np.asarray(t, float) - self.mean_) / self.sd)

    cdf_left = cdf

    def ppf(self, u):
        return self.mean_ + self.sd * special.ndtri(np.asarray(u, float))

    def quantile_beta(self, beta):
        beta = _check_beta(beta)
        if beta == 0.0:
            return -math.inf
        return float(self.mean_ + self.sd * special.ndtri(beta))

    def mean(self):
        return self.mean_

    def var(self):
        return self.sd**2

    def to_dict(self):
        return {"family": "normal", "mean": self.mean_, "sd": self.sd}


@dataclass(frozen=True)
class Discrete(ScalarDistribution):
    """Finitely supported law; atoms are kept sorted by value."""

    values: tuple = (0.0,)
    probs: tuple = (1.0,)
    family = "discrete"
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, float).ravel()
        probs = np.asarray(self.probs, float).ravel()
        if values.size == 0 or values.size != probs.size:
            raise DistributionError("discrete law needs matching nonempty values and probs")
        if not np.all(np.isfinite(values)) or np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise DistributionError("discrete atoms must be finite with nonnegative probabilities")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise DistributionError(f"discrete probabilities sum to {math.fsum(probs)!r}, not 1")
        if np.unique(values).size != values.size:
            raise DistributionError("discrete atoms must be distinct")
        order = np.argsort(values, kind="stable")
        values, probs = values[order], probs[order]
        cum = np.array([math.fsum(probs[: i + 1]) for i in range(probs.size)])
        cum[-1] = 1.0
        object.__setattr__(self, "values", tuple(values.tolist()))
        object.__setattr__(self, "probs", tuple(probs.tolist()))
        object.__setattr__(self, "_cum", cum)

    def cdf(self, t):
        t = np.asarray(t, float)
        idx = np.searchsorted(np.asarray(self.values), t, side="right")
        return np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)

    def cdf_left(self, t):
        t = np.asarray(t, float)
        idx = np.searchsorted(np.asarray(self.values), t, side="left")
        return np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)

    def ppf(self, u):
        u = np.asarray(u, float)
        idx = np.searchsorted(self._cum, u, side="left")
        return np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]

    def quantile_beta(self, beta):
        beta = _check_beta(beta)
        # smallest atom whose cumulative mass strictly exceeds beta
        for v, c in zip(self.values, self._cum):
            if c > beta:
                return float(v)
        return float(self.values[-1])

    def mean(self):
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    def var(self):
        mu = self.mean()
        return math.fsum(p * (v - mu) ** 2 for v, p in zip(self.values, self.probs))

    def to_dict(self):
        return {"family": "discrete", "values": list(self.values), "probs": list(self.probs)}


def point_mass(value: float) -> Discrete:
    return Discrete((float(value),), (1.0,))


@dataclass(frozen=True)
class Shifted(ScalarDistribution):
    """Law of ``loc + scale * X`` for a base law X and ``scale > 0``."""

    base: ScalarDistribution
    loc: float = 0.0
    scale: float = 1.0
    family = "shifted"

    def __post_init__(self):
        if not (math.isfinite(self.loc) and math.isfinite(self.scale) and self.scale > 0):
            raise DistributionError("shifted law requires finite loc and scale > 0")

    def _inv(self, t):
        return (np.asarray(t, float) - self.loc) / self.scale

    def cdf(self, t):
        return self.base.cdf(self._inv(t))

    def cdf_left(self, t):
        return self.base.cdf_left(self._inv(t))

    def ppf(self, u):
        return self.loc + self.scale * self.base.ppf(u)

    def quantile_beta(self, beta):
        return float(self.loc + self.scale * self.base.quantile_beta(beta))

    def mean(self):
        return self.loc + self.scale * self.base.mean()

    def var(self):
        return self.scale**2 * self.base.var()

    def to_dict(self):
        return {"family": "shifted", "base": self.base.to_dict(),
                "loc": self.loc, "scale": self.scale}


def sample(dist: ScalarDistribution, rng: np.random.Generator, size=None):
    return dist.sample(rng, size)


def cdf(dist: ScalarDistribution, t):
    return dist.cdf(t)


def quantile_beta(dist: ScalarDistribution, beta: float) -> float:
    return dist.quantile_beta(beta)


def from_dict(spec: Any) -> ScalarDistribution:
    """Build a law from a tagged config record; a bare number is a point mass."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return point_mass(float(spec))
    if not isinstance(spec, Mapping) or "family" not in spec:
        raise DistributionError(f"not a distribution record: {spec!r}")
    fam = spec["family"]
    try:
        if fam == "uniform":
            return Uniform(float(spec["a"]), float(spec["b"]))
        if fam == "exponential":
            return Exponential(float(spec["rate"]))
        if fam == "normal":
            return Normal(float(spec["mean"]), float(spec["sd"]))
        if fam == "discrete":
            return Discrete(tuple(spec["values"]), tuple(spec["probs"]))
        if fam == "shifted":
            return Shifted(from_dict(spec["base"]), float(spec.get("loc", 0.0)),
                           float(spec.get("scale", 1.0)))
    except KeyError as exc:
        raise DistributionError(f"{fam} record is missing field {exc}") from None
    raise DistributionError(f"unknown distribution family {fam!r}")
