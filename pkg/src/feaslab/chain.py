"""Chain-constrained domains ``{x : c_k(x) <= l_k(xi), k = 1..m}``.

Holds the constraint functions, the threshold laws, sampled thresholds, and
the degree-of-feasibility quantities built from them:

* ``dof_point``  -- ``d(x) = P{c_k(x) <= l_k for all k}``
* ``dfrak_r``    -- ``P{l_k >= min_i l_k(xi^i) for all k}``
* ``dfrak``      -- per-chain set containment of the sampled sets
* ``dof_domain`` -- containment of the whole SAA domain in ``dom f_xi``

All four reduce to ``P{l_k >= s_k for all k}`` for suitable levels ``s_k``;
they differ only in how the levels are formed, so one routine evaluates the
probability for every mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np

from . import rng as rd
from .rng import ScalarDistribution, SeedSpec
from .stats import Estimate, wilson_stderr

PSD_TOL = 1e-9
# box used to search for a point of a nonlinear, non-separable domain
SEARCH_RADIUS = 1e4


class ChainSpecError(ValueError):
    pass


class DependentThresholdsError(ValueError):
    """Analytic product formula requested for dependent thresholds."""


# ---------------------------------------------------------------- constraints


class ConstraintFn:
    """Convex function ``c(x)`` with a subgradient oracle."""

    kind = ""
    dim: int

    def value(self, x) -> float:
        raise NotImplementedError

    def subgradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def oracle(self, x) -> tuple[float, np.ndarray]:
        return self.value(x), self.subgradient(x)

    def value_range(self) -> tuple[float, float]:
        """``(inf c, sup c)`` over ``R^n``; the infimum is attained when finite."""
        raise NotImplementedError

    def support(self) -> tuple[int, ...]:
        """Coordinates the function depends on."""
        raise NotImplementedError

    def restrict(self) -> tuple[float, float, float] | None:
        """Coefficients ``(q, a, b)`` of ``q x_j^2 + a x_j + b`` when the function
        depends on one coordinate through a quadratic, ``None`` otherwise."""
        return None

    def sublevel_interval(self, t: float) -> tuple[float, float]:
        """``{x_j : c(x) <= t}`` for a single-coordinate function; empty if lo > hi."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _quad_interval(q: float, a: float, b: float, t: float) -> tuple[float, float]:
    """Solution set of ``q x^2 + a x + b <= t`` with ``q >= 0``."""
    c = b - t
    if q == 0.0:
        if a == 0.0:
            return (-math.inf, math.inf) if c <= 0 else (math.inf, -math.inf)
        root = -c / a
        return (-math.inf, root) if a > 0 else (root, math.inf)
    disc = a * a - 4.0 * q * c
    if disc < 0:
        return (math.inf, -math.inf)
    sq = math.sqrt(disc)
    # cancellation-free pair of roots
    qd = -0.5 * (a + math.copysign(sq, a))
    if qd == 0.0:
        return (0.0, 0.0)
    r1, r2 = qd / q, c / qd
    return (min(r1, r2), max(r1, r2))


@dataclass(frozen=True)
class Affine(ConstraintFn):
    a: tuple
    b: float = 0.0
    kind = "affine"

    def __post_init__(self):
        a = np.asarray(self.a, float).ravel()
        if a.size == 0 or not np.all(np.isfinite(a)) or not math.isfinite(self.b):
            raise ChainSpecError("affine constraint needs finite coefficients")
        object.__setattr__(self, "a", tuple(a.tolist()))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return len(self.a)

    def value(self, x):
        return float(np.dot(self.a, x) + self.b)

    def subgradient(self, x):
        return np.asarray(self.a, float)

    def value_range(self):
        if not any(self.a):
            return (self.b, self.b)
        return (-math.inf, math.inf)

    def support(self):
        return tuple(j for j, v in enumerate(self.a) if v != 0.0)

    def restrict(self):
        s = self.support()
        if len(s) != 1:
            return None
        return (0.0, self.a[s[0]], self.b)

    def sublevel_interval(self, t):
        q, a, b = self.restrict()
        return _quad_interval(q, a, b, t)

    def to_dict(self):
        return {"kind": "affine", "a": list(self.a), "b": self.b}


@dataclass(frozen=True)
class Quadratic(ConstraintFn):
    """``x^T Q x + a^T x + b`` with ``Q`` symmetric positive semidefinite."""

    Q: tuple
    a: tuple
    b: float = 0.0
    kind = "quadratic"

    def __post_init__(self):
        Q = np.asarray(self.Q, float)
        a = np.asarray(self.a, float).ravel()
        n = a.size
        if Q.shape != (n, n):
            raise ChainSpecError(f"Q must be {n}x{n}, got shape {Q.shape}")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(a)) and math.isfinite(self.b)):
            raise ChainSpecError("quadratic constraint needs finite coefficients")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ChainSpecError("Q must be symmetric")
        if n and np.linalg.eigvalsh(Q).min() < -PSD_TOL:
            raise ChainSpecError("Q is not positive semidefinite (min eigenvalue below -1e-9)")
        object.__setattr__(self, "Q", tuple(map(tuple, Q.tolist())))
        object.__setattr__(self, "a", tuple(a.tolist()))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return len(self.a)

    def _Q(self):
        return np.asarray(self.Q, float)

    def value(self, x):
        x = np.asarray(x, float)
        return float(x @ self._Q() @ x + np.dot(self.a, x) + self.b)

    def subgradient(self, x):
        return 2.0 * self._Q() @ np.asarray(x, float) + np.asarray(self.a, float)

    def value_range(self):
        Q, a = self._Q(), np.asarray(self.a, float)
        if not np.any(Q):
            return Affine(self.a, self.b).value_range()
        # minimizer solves 2 Q x = -a; unbounded below if a is not in range(Q)
        x, *_ = np.linalg.lstsq(2.0 * Q, -a, rcond=None)
        if np.linalg.norm(2.0 * Q @ x + a) > 1e-9 * max(1.0, np.linalg.norm(a)):
            return (-math.inf, math.inf)
        return (self.value(x), math.inf)

    def support(self):
        Q = self._Q()
        used = np.any(Q != 0, axis=0) | (np.asarray(self.a) != 0)
        return tuple(int(j) for j in np.flatnonzero(used))

    def restrict(self):
        s = self.support()
        if len(s) != 1:
            return None
        j = s[0]
        return (self.Q[j][j], self.a[j], self.b)

    def sublevel_interval(self, t):
        q, a, b = self.restrict()
        return _quad_interval(q, a, b, t)

    def to_dict(self):
        return {"kind": "quadratic", "Q": [list(r) for r in self.Q], "a": list(self.a), "b": self.b}


@dataclass(frozen=True)
class Norm(ConstraintFn):
    """Euclidean distance ``||x - center||``."""

    center: tuple
    kind = "norm"

    def __post_init__(self):
        c = np.asarray(self.center, float).ravel()
        if c.size == 0 or not np.all(np.isfinite(c)):
            raise ChainSpecError("norm constraint needs a finite center")
        object.__setattr__(self, "center", tuple(c.tolist()))

    @property
    def dim(self) -> int:
        return len(self.center)

    def value(self, x):
        return float(np.linalg.norm(np.asarray(x, float) - self.center))

    def subgradient(self, x):
        d = np.asarray(x, float) - self.center
        nrm = np.linalg.norm(d)
        return d / nrm if nrm > 0 else np.zeros_like(d)

    def value_range(self):
        return (0.0, math.inf)

    def support(self):
        return tuple(range(self.dim))

    def sublevel_interval(self, t):
        if self.dim != 1:
            raise ChainSpecError("interval form exists only for a 1-D norm")
        c = self.center[0]
        return (c - t, c + t) if t >= 0 else (math.inf, -math.inf)

    def to_dict(self):
        return {"kind": "norm", "center": list(self.center)}


def _single_coordinate(fn: ConstraintFn) -> int | None:
    s = fn.support()
    if len(s) != 1:
        return None
    if isinstance(fn, Norm) or fn.restrict() is not None:
        return s[0]
    return None


def constraint_from_dict(d: Mapping[str, Any]) -> ConstraintFn:
    kind = d.get("kind")
    try:
        if kind == "affine":
            return Affine(tuple(d["a"]), float(d.get("b", 0.0)))
        if kind == "quadratic":
            return Quadratic(tuple(map(tuple, d["Q"])), tuple(d["a"]), float(d.get("b", 0.0)))
        if kind == "norm":
            return Norm(tuple(d["center"]))
    except KeyError as exc:
        raise ChainSpecError(f"{kind} constraint is missing field {exc}") from None
    raise ChainSpecError(f"unknown constraint kind {kind!r}")


# ---------------------------------------------------------------- domains


class Chain(NamedTuple):
    fn: ConstraintFn
    law: ScalarDistribution


@dataclass(frozen=True)
class ChainDomainSpec:
    """``dom f_xi = {x in R^n : c_k(x) <= l_k(xi)}`` with threshold laws ``l_k``.

    With ``independent_thresholds=False`` the thresholds are comonotone: one
    uniform per outcome is pushed through every quantile function.
    """

    dim: int
    chains: tuple
    independent_thresholds: bool = True

    def __post_init__(self):
        chains = tuple(Chain(*c) for c in self.chains)
        object.__setattr__(self, "chains", chains)
        if len(chains) < 1:
            raise ChainSpecError("a chain domain needs m >= 1 chains")
        for k, (fn, law) in enumerate(chains):
            if fn.dim != self.dim:
                raise ChainSpecError(f"chain {k} has dimension {fn.dim}, domain has {self.dim}")
            if not math.isfinite(law.essential_inf):
                raise ChainSpecError(
                    f"chain {k}: threshold law has essential infimum -inf, so dom F is empty")
        # coordinate of each single-coordinate chain (-1: constant, None: coupled)
        coords = tuple(-1 if not f.support() else _single_coordinate(f) for f in self.fns)
        object.__setattr__(self, "_coords", coords)
        if not domain_nonempty(self, self.essential_infima()):
            raise ChainSpecError("dom F = {x : c_k(x) <= ess inf l_k} is empty")

    @property
    def m(self) -> int:
        return len(self.chains)

    @property
    def fns(self) -> list[ConstraintFn]:
        return [c.fn for c in self.chains]

    @property
    def laws(self) -> list[ScalarDistribution]:
        return [c.law for c in self.chains]

    def essential_infima(self) -> np.ndarray:
        return np.array([law.essential_inf for law in self.laws])

    @property
    def separable(self) -> bool:
        """Every chain depends on one coordinate (or none), so sublevel sets are boxes."""
        return all(j is not None for j in self._coords)

    @property
    def all_affine(self) -> bool:
        return all(isinstance(f, Affine) for f in self.fns)

    def values(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if x.shape != (self.dim,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.dim},)")
        return np.array([f.value(x) for f in self.fns])

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "independent_thresholds": self.independent_thresholds,
            "chains": [{"constraint": c.fn.to_dict(), "threshold": c.law.to_dict()}
                       for c in self.chains],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ChainDomainSpec":
        try:
            chains = [Chain(constraint_from_dict(c["constraint"]), rd.from_dict(c["threshold"]))
                      for c in d["chains"]]
            return cls(int(d["dim"]), tuple(chains), bool(d.get("independent_thresholds", True)))
        except KeyError as exc:
            raise ChainSpecError(f"chain domain record is missing field {exc}") from None


def box_domain(spec: ChainDomainSpec, thresholds) -> tuple[np.ndarray, np.ndarray] | None:
    """Per-coordinate bounds of ``{x : c_k(x) <= t_k}`` for separable specs.

    Returns ``None`` when the set is empty; coordinates not touched by any
    chain are unbounded.
    """
    lo = np.full(spec.dim, -math.inf)
    hi = np.full(spec.dim, math.inf)
    for fn, j, t in zip(spec.fns, spec._coords, thresholds):
        if j == -1:
            if fn.value(np.zeros(spec.dim)) > t:
                return None
            continue
        a, b = fn.sublevel_interval(t)
        lo[j] = max(lo[j], a)
        hi[j] = min(hi[j], b)
    if np.any(lo > hi):
        return None
    return lo, hi


def domain_nonempty(spec: ChainDomainSpec, thresholds) -> bool:
    """Is ``{x : c_k(x) <= t_k for all k}`` nonempty?"""
    from .convex import ConvexProgram, EmptyDomainError, find_feasible
    from .polyhedral.simplex import LPProblem, lp_solve

    thresholds = np.asarray(thresholds, float)
    if spec.separable:
        return box_domain(spec, thresholds) is not None
    if spec.all_affine:
        A = np.array([f.a for f in spec.fns])
        b = thresholds - np.array([f.b for f in spec.fns])
        res = lp_solve(LPProblem(np.zeros(spec.dim), A, b, ["<="] * spec.m,
                                 np.full(spec.dim, -np.inf), np.full(spec.dim, np.inf)))
        return res.status != "infeasible"
    cons = [(lambda x, f=f, t=t: (f.value(x) - t, f.subgradient(x)))
            for f, t in zip(spec.fns, thresholds)]
    prog = ConvexProgram(spec.dim, lambda x: (0.0, np.zeros(spec.dim)),
                         -SEARCH_RADIUS, SEARCH_RADIUS, cons)
    try:
        find_feasible(prog)
    except EmptyDomainError:
        return False
    return True


# ---------------------------------------------------------------- samples


@dataclass(frozen=True)
class ThresholdSample:
    """``N x m`` realized thresholds and their column minima."""

    values: np.ndarray
    minima: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("threshold sample must be an N x m array with N >= 1")
        v = v.copy()
        v.setflags(write=False)
        mins = v.min(axis=0)
        if self.minima is not None and not np.array_equal(np.asarray(self.minima, float), mins):
            raise ValueError("minima do not match the column minima of the sample")
        mins.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "minima", mins)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def append(self, other: "ThresholdSample") -> "ThresholdSample":
        return ThresholdSample(np.vstack([self.values, other.values]))

    def permuted(self, order) -> "ThresholdSample":
        return ThresholdSample(self.values[np.asarray(order)])


def threshold_matrix(spec: ChainDomainSpec, N: int, rng: np.random.Generator) -> np.ndarray:
    if N < 1:
        raise ValueError("N must be at least 1")
    if spec.independent_thresholds:
        U = rd.open_uniform(rng, (N, spec.m))
    else:
        U = np.repeat(rd.open_uniform(rng, (N, 1)), spec.m, axis=1)
    return np.column_stack([law.ppf(U[:, k]) for k, law in enumerate(spec.laws)])


def sample_thresholds(spec: ChainDomainSpec, N: int, seed: SeedSpec | np.random.Generator) -> ThresholdSample:
    """``N`` i.i.d. threshold rows by inverse transform."""
    gen = seed.generator() if isinstance(seed, SeedSpec) else seed
    return ThresholdSample(threshold_matrix(spec, N, gen))


def domain_contains(spec: ChainDomainSpec, x, thresholds) -> bool:
    thresholds = np.asarray(thresholds, float)
    if thresholds.shape != (spec.m,):
        raise ValueError(f"expected {spec.m} thresholds, got shape {thresholds.shape}")
    return bool(np.all(spec.values(x) <= thresholds))


# ---------------------------------------------------------------- probabilities


@dataclass(frozen=True)
class MonteCarlo:
    """Estimate by ``M`` fresh outcomes drawn from the stream ``seed``."""

    M: int
    seed: SeedSpec

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("Monte Carlo needs M >= 1")


ANALYTIC = "analytic"
EXACT = "exact"
Mode = Any  # "analytic" | "exact" | MonteCarlo


def prob_thresholds_at_least(spec: ChainDomainSpec, levels, mode: Mode = ANALYTIC) -> Estimate:
    """``P{l_k(xi) >= levels[k] for all k}`` for a fresh outcome ``xi``.

    ``analytic`` is the product rule and needs independent thresholds.
    ``exact`` also covers the comonotone coupling, where the event is
    ``U > max_k P{l_k < levels[k]}`` for the shared uniform ``U``.
    """
    levels = np.asarray(levels, float)
    if isinstance(mode, MonteCarlo):
        draws = threshold_matrix(spec, mode.M, mode.seed.generator())
        hits = int(np.all(draws >= levels, axis=1).sum())
        return Estimate(hits / mode.M, wilson_stderr(hits, mode.M))
    if mode not in (ANALYTIC, EXACT):
        raise ValueError(f"unknown mode {mode!r}")
    left = np.array([float(law.cdf_left(t)) if t > -math.inf else 0.0
                     for law, t in zip(spec.laws, levels)])
    if spec.independent_thresholds:
        return Estimate(float(np.prod(1.0 - left)), 0.0)
    if mode == ANALYTIC:
        raise DependentThresholdsError("analytic mode needs independent thresholds")
    return Estimate(float(max(0.0, 1.0 - left.max())), 0.0)


def dof_point(spec: ChainDomainSpec, x, mode: Mode = ANALYTIC) -> Estimate:
    """Degree of feasibility ``d(x)``."""
    return prob_thresholds_at_least(spec, spec.values(x), mode)


def dfrak_r(spec: ChainDomainSpec, sample: ThresholdSample, mode: Mode = ANALYTIC) -> Estimate:
    _check_sample(spec, sample)
    return prob_thresholds_at_least(spec, sample.minima, mode)


def _check_sample(spec, sample):
    if sample.m != spec.m:
        raise ValueError(f"sample has {sample.m} columns, spec has {spec.m} chains")


def dfrak_levels(spec: ChainDomainSpec, minima) -> np.ndarray:
    """Levels whose exceedance is per-chain set containment.

    ``{c_k <= s} subset {c_k <= t}`` holds when ``s <= t``, when the left set
    is empty (``s < inf c_k``), or when the right set is everything
    (``t >= sup c_k``).
    """
    out = []
    for fn, s in zip(spec.fns, minima):
        lo, hi = fn.value_range()
        if s < lo:
            out.append(-math.inf)
        else:
            out.append(min(s, hi))
    return np.array(out)


def dfrak(spec: ChainDomainSpec, sample: ThresholdSample, mode: Mode = ANALYTIC) -> Estimate:
    _check_sample(spec, sample)
    return prob_thresholds_at_least(spec, dfrak_levels(spec, sample.minima), mode)


def saa_domain_empty(spec: ChainDomainSpec, sample: ThresholdSample) -> bool:
    return not domain_nonempty(spec, sample.minima)


def _interval_sup(fn: ConstraintFn, lo: float, hi: float) -> float:
    """Supremum of a single-coordinate convex function over ``[lo, hi]``."""
    if isinstance(fn, Norm):
        c = fn.center[0]
        return max(abs(lo - c), abs(hi - c))
    q, a, b = fn.restrict()
    vals = []
    for x, side in ((lo, -1), (hi, 1)):
        if math.isinf(x):
            if q > 0 or a * side > 0:
                return math.inf
            vals.append(b if a == 0 else -math.inf)
        else:
            vals.append(q * x * x + a * x + b)
    return max(vals)


def domain_sup_levels(spec: ChainDomainSpec, minima) -> tuple[np.ndarray, bool]:
    """``s_k = sup{c_k(x) : x in SAA domain}`` and whether it is exact.

    Exact for separable and for all-affine specs; otherwise the per-chain
    containment levels are returned, which can only understate containment.
    """
    minima = np.asarray(minima, float)
    if spec.separable:
        box = box_domain(spec, minima)
        lo, hi = box
        s = []
        for fn, j, mk in zip(spec.fns, spec._coords, minima):
            if j == -1:
                s.append(fn.value(np.zeros(spec.dim)))
                continue
            s.append(min(mk, _interval_sup(fn, lo[j], hi[j])))
        return np.array(s), True
    if spec.all_affine:
        from .polyhedral.simplex import LPProblem, lp_solve

        A = np.array([f.a for f in spec.fns])
        b = minima - np.array([f.b for f in spec.fns])
        free = np.full(spec.dim, -np.inf), np.full(spec.dim, np.inf)
        s = []
        for k, fn in enumerate(spec.fns):
            res = lp_solve(LPProblem(-A[k], A, b, ["<="] * spec.m, *free))
            if res.status == "unbounded":
                s.append(math.inf)
            else:
                s.append(min(minima[k], -res.value + fn.b))
        return np.array(s), True
    return dfrak_levels(spec, minima), False


def dof_domain(spec: ChainDomainSpec, sample: ThresholdSample, mode: Mode) -> Estimate:
    """Degree of feasibility of the SAA domain, ``D``.

    An empty SAA domain is contained in every set, giving 1.
    """
    _check_sample(spec, sample)
    if saa_domain_empty(spec, sample):
        return Estimate(1.0, 0.0)
    levels, _ = domain_sup_levels(spec, sample.minima)
    return prob_thresholds_at_least(spec, levels, mode)


__all__ = [
    "ANALYTIC", "Affine", "Chain", "ChainDomainSpec", "ChainSpecError", "ConstraintFn",
    "DependentThresholdsError", "EXACT", "MonteCarlo", "Norm", "Quadratic", "ThresholdSample",
    "box_domain", "constraint_from_dict", "dfrak", "dfrak_levels", "dfrak_r", "dof_domain",
    "dof_point", "domain_contains", "domain_nonempty", "domain_sup_levels",
    "prob_thresholds_at_least", "sample_thresholds", "saa_domain_empty", "threshold_matrix",
]
