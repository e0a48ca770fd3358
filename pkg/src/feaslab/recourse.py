"""Recourse-induced chain domains.

For ``{y >= 0 : W y = h - T x}`` with cone generators ``R`` (rays) and ``L``
(lineality) of ``{a : a^T W >= 0}``, feasibility is

    R (h - T x) >= 0   and   L (h - T x) = 0.

Each ray gives one chain ``(r^T T) x <= r^T h``.  A lineality vector fixes
``l^T h`` exactly and contributes the two chains ``+-l``.  When each ray touches
at most one random component of ``h`` (independent components), the joint
probability factorizes over components into interval probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chain import MonteCarlo
from .polyhedral.farkas import RAY_TOL, farkas_feasible
from .polyhedral.rays import ConeGenerators, enumerate_rays
from .polyhedral.simplex import LPProblem, lp_solve
from .rng import Discrete, ScalarDistribution, SeedSpec, open_uniform
from .stats import Estimate, wilson_stderr

_COEF_TOL = 1e-12


def _is_degenerate(law: ScalarDistribution) -> bool:
    return isinstance(law, Discrete) and len(law.values) == 1


@dataclass(frozen=True)
class RecourseFamily:
    """Second-stage feasibility ``W y = h_xi - T x, y >= 0`` with random ``h``.

    ``h_laws`` has one independent law per row of ``W``; point masses model
    deterministic entries.
    """

    W: np.ndarray
    T: np.ndarray
    h_laws: tuple
    gen: ConeGenerators = field(default=None, compare=False)

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, float))
        T = np.asarray(self.T, float).reshape(W.shape[0], -1)
        if len(self.h_laws) != W.shape[0]:
            raise ValueError(f"need {W.shape[0]} laws for h, got {len(self.h_laws)}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "h_laws", tuple(self.h_laws))
        if self.gen is None:
            object.__setattr__(self, "gen", enumerate_rays(W))

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.T.shape[1]

    @property
    def m(self) -> int:
        """Chain count: one per ray, two per lineality direction."""
        return self.gen.n_rays + 2 * self.gen.lineality.shape[0]

    @property
    def chain_matrix(self) -> np.ndarray:
        """Rows ``a`` of the chains ``a^T T x <= a^T h``."""
        L = self.gen.lineality
        return np.vstack([self.gen.rays, L, -L]).reshape(-1, self.d)

    @property
    def random_components(self) -> np.ndarray:
        return np.array([not _is_degenerate(law) for law in self.h_laws], bool)

    @property
    def factorizes(self) -> bool:
        """Every chain involves at most one random component of ``h``."""
        C = self.chain_matrix
        if C.size == 0:
            return True
        touched = (np.abs(C) > _COEF_TOL) & self.random_components
        return bool(np.all(touched.sum(axis=1) <= 1))

    def sample_h(self, N: int, rng: np.random.Generator) -> np.ndarray:
        U = open_uniform(rng, (N, self.d))
        return np.column_stack([law.ppf(U[:, j]) for j, law in enumerate(self.h_laws)])

    def feasible(self, x, h) -> bool:
        return farkas_feasible(self.gen, h, self.T, x)

    def levels(self, x) -> np.ndarray:
        """``a^T T x`` for every chain row ``a``."""
        return self.chain_matrix @ (self.T @ np.atleast_1d(np.asarray(x, float)))

    def thresholds(self, H: np.ndarray) -> np.ndarray:
        """``a^T h^i`` for each sampled ``h^i`` (rows) and chain (columns)."""
        return np.atleast_2d(H) @ self.chain_matrix.T

    # ---------------------------------------------------------- probabilities

    def prob_at_least(self, s, mode="analytic") -> Estimate:
        """``P{a_k^T h >= s_k for every chain k}`` for fresh ``h``."""
        s = np.asarray(s, float)
        C = self.chain_matrix
        if C.shape[0] == 0:
            return Estimate(1.0, 0.0)
        if isinstance(mode, MonteCarlo):
            H = self.sample_h(mode.M, mode.seed.generator())
            ok = np.all(H @ C.T >= s - RAY_TOL, axis=1)
            hits = int(ok.sum())
            return Estimate(hits / mode.M, wilson_stderr(hits, mode.M))
        if not self.factorizes:
            raise ValueError("chains mix random components; use Monte Carlo mode")
        rand = self.random_components
        fixed = np.array([law.values[0] if not r else 0.0 for law, r in zip(self.h_laws, rand)])
        lo = np.full(self.d, -math.inf)
        hi = np.full(self.d, math.inf)
        for a, sk in zip(C, s):
            rest = sk - a @ fixed
            js = np.flatnonzero((np.abs(a) > _COEF_TOL) & rand)
            if js.size == 0:
                if rest > RAY_TOL:
                    return Estimate(0.0, 0.0)
                continue
            j = js[0]
            bound = rest / a[j]
            if a[j] > 0:
                lo[j] = max(lo[j], bound)
            else:
                hi[j] = min(hi[j], bound)
        p = 1.0
        for j in np.flatnonzero(rand):
            if lo[j] > hi[j]:
                return Estimate(0.0, 0.0)
            law = self.h_laws[j]
            up = 1.0 if hi[j] == math.inf else float(law.cdf(hi[j]))
            down = 0.0 if lo[j] == -math.inf else float(law.cdf_left(lo[j]))
            p *= max(0.0, up - down)
        return Estimate(p, 0.0)

    def dof_point(self, x, mode="analytic") -> Estimate:
        return self.prob_at_least(self.levels(x), mode)

    def dfrak_r(self, H: np.ndarray, mode="analytic") -> Estimate:
        return self.prob_at_least(self.thresholds(H).min(axis=0), mode)

    def saa_domain_rows(self, H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(A, b)`` with SAA domain ``{x : A x <= b}`` (lineality as two rows)."""
        C = self.chain_matrix
        return C @ self.T, self.thresholds(H).min(axis=0)

    def domain_sup_levels(self, H: np.ndarray) -> np.ndarray | None:
        """Exact ``sup (a_k^T T) x`` over the SAA domain, ``None`` if it is empty."""
        A, b = self.saa_domain_rows(H)
        free = (np.full(self.n, -np.inf), np.full(self.n, np.inf))
        if A.shape[0] == 0:
            return np.zeros(0)
        first = lp_solve(LPProblem(np.zeros(self.n), A, b, ["<="] * b.size, *free))
        if first.status == "infeasible":
            return None
        out = []
        for k in range(A.shape[0]):
            res = lp_solve(LPProblem(-A[k], A, b, ["<="] * b.size, *free))
            out.append(math.inf if res.status == "unbounded" else min(b[k], -res.value))
        return np.array(out)

    def dof_domain(self, H: np.ndarray, mode="analytic") -> Estimate:
        s = self.domain_sup_levels(H)
        if s is None:
            return Estimate(1.0, 0.0)
        return self.prob_at_least(s, mode)


def family_from_stage(A, B, b_laws: Sequence[ScalarDistribution],
                      gen: ConeGenerators | None = None) -> RecourseFamily:
    """Stage feasibility ``A x_t = b - B x_{t-1}, x_t >= 0`` as a recourse family."""
    return RecourseFamily(np.asarray(A, float), np.asarray(B, float), tuple(b_laws), gen)


__all__ = ["RecourseFamily", "family_from_stage"]
