"""Sample average approximation: problem assembly and solvers.

Two families are supported.

* Convex problems over a chain domain.  The objective is either a fixed
  convex oracle or the separable sampled form

      f_zeta(x) = c^T x + sum_j w_j loss(x_j, zeta_j)

  with ``loss`` one of ``square`` ``(x - z)^2``, ``abs`` ``|x - z|`` or
  ``product`` ``z x``.  The SAA domain is ``{x in X : c_k(x) <= min_i l_k^i}``.
* Two-stage LPs ``min c^T x + E[min{g^T y : W y = h_xi - T x, y >= 0}]``
  solved through their deterministic equivalent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .chain import (Affine, ChainDomainSpec, ThresholdSample, box_domain, domain_nonempty,
                    sample_thresholds)
from .convex import ConvexProgram, EmptyDomainError, kelley
from .polyhedral.simplex import LPProblem, lp_solve
from .recourse import RecourseFamily
from .rng import Discrete, Normal, ScalarDistribution, SeedSpec, StreamRole, Uniform, open_uniform

LOSSES = ("square", "abs", "product")
RESIDUAL_TOL = 1e-8


class SAAInfeasible(RuntimeError):
    """The SAA domain has no point in X; such trials are recorded, not retried."""


class ModelError(RuntimeError):
    """Unbounded extensive form or another defect of the model itself."""


# ---------------------------------------------------------------- objectives


@dataclass(frozen=True)
class SeparableObjective:
    """``c^T x + sum_j w_j loss(x_j, zeta_j)`` with independent ``zeta_j``."""

    c: tuple
    weights: tuple
    loss: str
    zeta_laws: tuple

    def __post_init__(self):
        n = len(self.c)
        if len(self.weights) != n or len(self.zeta_laws) != n:
            raise ValueError("c, weights and zeta_laws must have one entry per coordinate")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative for convexity")
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        object.__setattr__(self, "weights", tuple(float(v) for v in self.weights))
        object.__setattr__(self, "zeta_laws", tuple(self.zeta_laws))

    @property
    def dim(self) -> int:
        return len(self.c)

    @property
    def deterministic(self) -> bool:
        return all(isinstance(l, Discrete) and len(l.values) == 1 for l in self.zeta_laws)

    def sample(self, N: int, rng: np.random.Generator) -> np.ndarray:
        U = open_uniform(rng, (N, self.dim))
        return np.column_stack([law.ppf(U[:, j]) for j, law in enumerate(self.zeta_laws)])

    def _terms(self, x: np.ndarray, Z: np.ndarray):
        d = x[None, :] - Z
        if self.loss == "square":
            return d**2, 2.0 * d
        if self.loss == "abs":
            return np.abs(d), np.sign(d)
        return Z * x[None, :], Z

    def average(self, x, Z: np.ndarray) -> tuple[float, np.ndarray]:
        """Sample average value and a subgradient at ``x``."""
        x = np.asarray(x, float)
        vals, grads = self._terms(x, np.atleast_2d(Z))
        w = np.asarray(self.weights)
        c = np.asarray(self.c)
        value = float(c @ x + (vals.mean(axis=0) * w).sum())
        return value, c + w * grads.mean(axis=0)

    def expected(self, x) -> float:
        """``F(x) = E f_zeta(x)`` in closed form where available."""
        x = np.asarray(x, float)
        total = float(np.dot(self.c, x))
        for j, (w, law) in enumerate(zip(self.weights, self.zeta_laws)):
            if w:
                total += w * expected_loss(self.loss, law, x[j])
        return total

    def to_dict(self) -> dict:
        return {"kind": "separable", "c": list(self.c), "weights": list(self.weights),
                "loss": self.loss, "zeta": [l.to_dict() for l in self.zeta_laws]}


def expected_loss(loss: str, law: ScalarDistribution, x: float) -> float:
    """``E loss(x, zeta)``; raises ``NotImplementedError`` when no closed form is coded."""
    if loss == "product":
        return law.mean() * x
    if loss == "square":
        return (x - law.mean()) ** 2 + law.var()
    if isinstance(law, Discrete):
        return math.fsum(p * abs(x - v) for v, p in zip(law.values, law.probs))
    if isinstance(law, Uniform):
        a, b = law.a, law.b
        if x <= a:
            return law.mean() - x
        if x >= b:
            return x - law.mean()
        return ((x - a) ** 2 + (b - x) ** 2) / (2.0 * (b - a))
    if isinstance(law, Normal):
        z = (x - law.mean_) / law.sd
        pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        return law.sd * (2.0 * pdf + z * (2.0 * float(special.ndtr(z)) - 1.0))
    raise NotImplementedError(f"no closed form for E|x - zeta| under {type(law).__name__}")


Oracle = Callable[[np.ndarray], tuple[float, np.ndarray]]


# ---------------------------------------------------------------- problems


@dataclass(frozen=True)
class StochasticProblem:
    """``min_{x in X} E f_xi(x)`` with ``dom f_xi`` a chain domain.

    ``X`` is the compact box ``[lo, hi]`` intersected with ``A x <= b``.
    ``objective`` is a :class:`SeparableObjective` or a deterministic oracle.
    """

    domain: ChainDomainSpec
    objective: object
    lo: np.ndarray
    hi: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        n = self.domain.dim
        lo = np.broadcast_to(np.asarray(self.lo, float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(self.hi, float), (n,)).copy()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(hi < lo):
            raise ValueError("X must be a nonempty compact box")
        A = np.zeros((0, n)) if self.A is None else np.asarray(self.A, float).reshape(-1, n)
        b = np.zeros(0) if self.b is None else np.asarray(self.b, float).ravel()
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if isinstance(self.objective, SeparableObjective) and self.objective.dim != n:
            raise ValueError("objective dimension does not match the domain")
        if _feasible_point(self, self.domain.essential_infima()) is None:
            raise ValueError("F is +inf on all of X: dom F does not meet X")

    @property
    def dim(self) -> int:
        return self.domain.dim


def _feasible_point(problem: StochasticProblem, thresholds) -> np.ndarray | None:
    """A point of ``X`` with ``c_k(x) <= thresholds_k``, or ``None``."""
    from .convex import find_feasible

    prog = _program(problem, thresholds, lambda x: (0.0, np.zeros(problem.dim)))
    try:
        return find_feasible(prog)
    except EmptyDomainError:
        return None


def _program(problem: StochasticProblem, thresholds, objective: Oracle) -> ConvexProgram:
    """Convex program over ``X`` and the chain constraints at ``thresholds``.

    Affine chains become exact LP rows; the others become cutting-plane
    constraints.
    """
    rows, rhs, cons = [problem.A], [problem.b], []
    for fn, t in zip(problem.domain.fns, thresholds):
        if isinstance(fn, Affine):
            rows.append(np.asarray(fn.a)[None, :])
            rhs.append([t - fn.b])
        else:
            cons.append(lambda x, f=fn, t=t: (f.value(x) - t, f.subgradient(x)))
    A = np.vstack(rows)
    b = np.concatenate([np.ravel(r) for r in rhs])
    return ConvexProgram(problem.dim, objective, problem.lo, problem.hi, cons, A, b)


@dataclass(frozen=True)
class SAAInstance:
    problem: StochasticProblem
    sample: ThresholdSample
    zeta: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.sample.N

    def objective(self, x) -> tuple[float, np.ndarray]:
        obj = self.problem.objective
        if isinstance(obj, SeparableObjective):
            return obj.average(x, self.zeta)
        return obj(np.asarray(x, float))

    def value(self, x) -> float:
        return self.objective(x)[0]

    def in_domain(self, x, tol: float = RESIDUAL_TOL) -> bool:
        return self.residual(x) <= tol

    def residual(self, x) -> float:
        x = np.asarray(x, float)
        p = self.problem
        r = [0.0, float(np.max(p.lo - x)), float(np.max(x - p.hi))]
        if p.b.size:
            r.append(float(np.max(p.A @ x - p.b)))
        r.append(float(np.max(p.domain.values(x) - self.sample.minima)))
        return max(r)


@dataclass
class SAASolution:
    x: np.ndarray
    value: float
    gap: float
    residual: float
    method: str
    converged: bool = True
    extra: dict = field(default_factory=dict)


def assemble_saa(problem: StochasticProblem, sample: ThresholdSample,
                 seed: SeedSpec | None = None, zeta: np.ndarray | None = None) -> SAAInstance:
    """Bind a threshold sample (and objective noise) to a problem.

    Objective noise is drawn from the ``objective`` stream of ``seed`` unless
    given explicitly.  Raises :class:`SAAInfeasible` when the SAA domain does
    not meet ``X``.
    """
    obj = problem.objective
    if isinstance(obj, SeparableObjective) and zeta is None:
        if seed is None:
            raise ValueError("a sampled objective needs a seed or explicit zeta")
        s = SeedSpec(seed.master_seed, seed.trial_index, seed.stage_index, StreamRole.OBJECTIVE)
        zeta = obj.sample(sample.N, s.generator())
    if zeta is not None:
        zeta = np.atleast_2d(np.asarray(zeta, float)).reshape(sample.N, -1)
    inst = SAAInstance(problem, sample, zeta)
    if not _domain_meets_x(problem, sample.minima):
        raise SAAInfeasible("SAA domain does not meet X")
    return inst


def _separable_box(problem: StochasticProblem, thresholds):
    """``X`` intersected with the SAA box when both are boxes, else ``None``."""
    if not problem.domain.separable or problem.b.size:
        return None
    box = box_domain(problem.domain, thresholds)
    if box is None:
        return (np.ones(problem.dim), -np.ones(problem.dim))
    lo = np.maximum(problem.lo, box[0])
    hi = np.minimum(problem.hi, box[1])
    return lo, hi


def _domain_meets_x(problem: StochasticProblem, thresholds) -> bool:
    box = _separable_box(problem, thresholds)
    if box is not None:
        return bool(np.all(box[0] <= box[1]))
    return _feasible_point(problem, thresholds) is not None


def _argmin_abs(cj: float, w: float, z: np.ndarray, lo: float, hi: float) -> float:
    """Smallest minimizer of ``cj x + (w / N) sum |x - z_i|`` on ``[lo, hi]``."""
    zs = np.sort(z)
    cand = np.concatenate([[lo, hi], zs[(zs > lo) & (zs < hi)]])
    cand.sort()
    pre = np.concatenate([[0.0], np.cumsum(zs)])
    k = np.searchsorted(zs, cand, side="right")
    n = zs.size
    s_abs = cand * k - pre[k] + (pre[n] - pre[k]) - cand * (n - k)
    vals = cj * cand + w * s_abs / n
    best = vals.min()
    scale = max(1.0, abs(best))
    return float(cand[np.flatnonzero(vals <= best + 1e-12 * scale)[0]])


def _closed_form(inst: SAAInstance, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    obj: SeparableObjective = inst.problem.objective
    x = np.empty(obj.dim)
    for j in range(obj.dim):
        c, w = obj.c[j], obj.weights[j]
        z = inst.zeta[:, j]
        if obj.loss == "product":
            c = c + w * float(z.mean())
            w = 0.0
        if w == 0.0:
            # linear: ties (c == 0) go to the lexicographically smallest point
            x[j] = hi[j] if c < 0 else lo[j]
        elif obj.loss == "square":
            x[j] = min(max(float(z.mean()) - c / (2.0 * w), lo[j]), hi[j])
        else:
            x[j] = _argmin_abs(c, w, z, lo[j], hi[j])
    return x


def solve_convex(inst: SAAInstance, tol: float = 1e-6, method: str = "auto",
                 max_iter: int = 500) -> SAASolution:
    """Minimize the SAA objective over the SAA domain.

    ``method="kelley"`` runs the cutting-plane method and certifies the gap.
    ``"closed_form"`` (chosen by ``"auto"`` when the objective is separable
    and the SAA domain intersected with ``X`` is a box) minimizes each
    coordinate exactly, so the gap is zero.
    """
    p = inst.problem
    box = _separable_box(p, inst.sample.minima) if isinstance(p.objective, SeparableObjective) else None
    if method == "closed_form" and box is None:
        raise ValueError("closed form needs a separable objective over a box-shaped SAA domain")
    if method in ("auto", "closed_form") and box is not None:
        lo, hi = box
        if np.any(lo > hi):
            raise SAAInfeasible("SAA domain does not meet X")
        x = _closed_form(inst, lo, hi)
        return SAASolution(x, inst.value(x), 0.0, inst.residual(x), "closed_form")
    if method not in ("auto", "kelley"):
        raise ValueError(f"unknown method {method!r}")
    prog = _program(p, inst.sample.minima, inst.objective)
    try:
        res = kelley(prog, tol=tol, max_iter=max_iter)
    except EmptyDomainError as exc:
        raise SAAInfeasible(str(exc)) from None
    return SAASolution(res.x, res.value, res.gap, inst.residual(res.x), "kelley",
                       res.converged, {"iterations": res.iterations, "lower": res.lower})


def estimate_uniform_deviation(problem: StochasticProblem, zeta: np.ndarray, grid,
                               reference: Callable[[np.ndarray], float] | None = None,
                               M_ref: int = 100_000, seed: SeedSpec | None = None):
    """``max_{x in grid} |F_N(x) - F(x)|`` and the error of the reference ``F``.

    ``F`` is ``reference`` if given, else the closed form of a separable
    objective, else a Monte Carlo average over ``M_ref`` independent draws,
    whose largest standard error over the grid is returned as the reference
    error.
    """
    obj = problem.objective
    grid = [np.atleast_1d(np.asarray(g, float)) for g in grid]
    if not isinstance(obj, SeparableObjective):
        # deterministic oracle: F_N equals F
        return 0.0, 0.0
    ref_err = 0.0
    if reference is None:
        try:
            refs = [obj.expected(x) for x in grid]
        except NotImplementedError:
            if seed is None:
                raise ValueError("Monte Carlo reference needs a seed") from None
            s = SeedSpec(seed.master_seed, seed.trial_index, seed.stage_index, StreamRole.ORACLE)
            Zr = obj.sample(M_ref, s.generator())
            refs = []
            for x in grid:
                vals, _ = obj._terms(x, Zr)
                per = np.asarray(obj.c) @ x + vals @ np.asarray(obj.weights)
                refs.append(float(per.mean()))
                ref_err = max(ref_err, float(per.std(ddof=1) / math.sqrt(M_ref)))
    else:
        refs = [reference(x) for x in grid]
    devs = [abs(obj.average(x, zeta)[0] - r) for x, r in zip(grid, refs)]
    return float(max(devs)), ref_err


# ---------------------------------------------------------------- two-stage LP


@dataclass(frozen=True)
class TwoStageProblem:
    """``min c^T x + E min{g^T y : W y = h_xi - T x, y >= 0}`` over ``X``."""

    family: RecourseFamily
    c: np.ndarray
    g: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        n = self.family.n
        object.__setattr__(self, "c", np.asarray(self.c, float).reshape(n))
        object.__setattr__(self, "g", np.asarray(self.g, float).reshape(self.family.W.shape[1]))
        object.__setattr__(self, "lo", np.broadcast_to(np.asarray(self.lo, float), (n,)).copy())
        object.__setattr__(self, "hi", np.broadcast_to(np.asarray(self.hi, float), (n,)).copy())
        A = np.zeros((0, n)) if self.A is None else np.asarray(self.A, float).reshape(-1, n)
        b = np.zeros(0) if self.b is None else np.asarray(self.b, float).ravel()
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.family.n


def solve_two_stage(problem: TwoStageProblem, H: np.ndarray) -> SAASolution:
    """Deterministic equivalent over the sampled right-hand sides ``H`` (rows).

    Ties among optimal first-stage decisions are broken lexicographically.
    """
    fam = problem.family
    H = np.atleast_2d(np.asarray(H, float))
    N = H.shape[0]
    n, d, p = fam.n, fam.d, fam.W.shape[1]
    nv = n + N * p
    c = np.concatenate([problem.c] + [problem.g / N] * N)
    rows = np.zeros((N * d + problem.b.size, nv))
    rhs = np.zeros(N * d + problem.b.size)
    senses = ["="] * (N * d) + ["<="] * problem.b.size
    for i in range(N):
        r = slice(i * d, (i + 1) * d)
        rows[r, :n] = fam.T
        rows[r, n + i * p:n + (i + 1) * p] = fam.W
        rhs[r] = H[i]
    if problem.b.size:
        rows[N * d:, :n] = problem.A
        rhs[N * d:] = problem.b
    lb = np.concatenate([problem.lo, np.zeros(N * p)])
    ub = np.concatenate([problem.hi, np.full(N * p, np.inf)])
    res = lp_solve(LPProblem(c, rows, rhs, senses, lb, ub), lexicographic=list(range(n)))
    if res.status == "infeasible":
        raise SAAInfeasible("extensive form is infeasible")
    if res.status == "unbounded":
        raise ModelError("extensive form is unbounded below")
    x = res.x[:n]
    Y = res.x[n:].reshape(N, p)
    resid = max(float(np.max(np.abs(fam.W @ Y[i] + fam.T @ x - H[i]))) for i in range(N))
    return SAASolution(x, res.value, 0.0, resid, "extensive_lp", True, {"y": Y})


def two_stage_objective(problem: TwoStageProblem, H: np.ndarray) -> Oracle:
    """SAA objective through the second-stage LP oracle, with dual subgradients."""
    from .polyhedral.farkas import second_stage_solution

    fam = problem.family
    H = np.atleast_2d(H)

    def f(x):
        total = float(problem.c @ x)
        grad = problem.c.copy()
        for h in H:
            v, _, duals = second_stage_solution(fam.W, fam.T, h, problem.g, x)
            if not math.isfinite(v):
                return math.inf, grad
            total += v / len(H)
            # d/dx of min{g y : W y = h - T x} is -T^T pi
            grad = grad - fam.T.T @ duals / len(H)
        return total, grad

    return f


def solve_two_stage_convex(problem: TwoStageProblem, H: np.ndarray, tol: float = 1e-7,
                           max_iter: int = 500) -> SAASolution:
    """Same SAA problem by Kelley, with the ray-induced SAA domain as LP rows."""
    fam = problem.family
    H = np.atleast_2d(np.asarray(H, float))
    A_dom, b_dom = fam.saa_domain_rows(H)
    A = np.vstack([problem.A, A_dom])
    b = np.concatenate([problem.b, b_dom])
    prog = ConvexProgram(fam.n, two_stage_objective(problem, H), problem.lo, problem.hi, (), A, b)
    try:
        res = kelley(prog, tol=tol, max_iter=max_iter)
    except EmptyDomainError as exc:
        raise SAAInfeasible(str(exc)) from None
    resid = float(max(0.0, np.max(A @ res.x - b, initial=0.0)))
    return SAASolution(res.x, res.value, res.gap, resid, "kelley", res.converged,
                       {"iterations": res.iterations})


__all__ = [
    "solve_two_stage_convex", "LOSSES", "ModelError", "SAAInfeasible", "SAAInstance", "SAASolution", "SeparableObjective",
    "StochasticProblem", "TwoStageProblem", "assemble_saa", "estimate_uniform_deviation",
    "expected_loss", "solve_convex", "solve_two_stage", "two_stage_objective",
]
