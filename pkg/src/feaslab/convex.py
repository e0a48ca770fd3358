"""Kelley cutting-plane method for small convex programs over a box.

Solves ``min f(x)`` subject to ``g_k(x) <= 0``, ``A x <= b`` and
``lo <= x <= hi`` where ``f`` and each ``g_k`` come with a subgradient oracle.
The lower bound is the cutting-plane master LP value; the upper bound is the
best feasible point seen, where infeasible master points are pulled back to
the feasible set by bisection toward a known feasible point.  The reported
gap ``upper - lower`` is therefore a certificate, not an estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .polyhedral.simplex import LPProblem, lp_solve

Oracle = Callable[[np.ndarray], tuple[float, np.ndarray]]

FEAS_TOL = 1e-9


class EmptyDomainError(RuntimeError):
    """The constraint set has no point inside the box."""


class SolverFailure(RuntimeError):
    pass


@dataclass
class ConvexProgram:
    dim: int
    objective: Oracle
    lo: np.ndarray
    hi: np.ndarray
    constraints: Sequence[Oracle] = ()
    A: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        self.lo = np.broadcast_to(np.asarray(self.lo, float), (self.dim,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, float), (self.dim,)).copy()
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise ValueError("the search box must be compact")
        if np.any(self.hi < self.lo):
            raise EmptyDomainError("search box is empty")
        if self.A is None:
            self.A = np.zeros((0, self.dim))
            self.b = np.zeros(0)
        self.A = np.asarray(self.A, float).reshape(-1, self.dim)
        self.b = np.asarray(self.b, float).ravel()

    def max_violation(self, x: np.ndarray) -> float:
        v = [0.0]
        v += [g(x)[0] for g in self.constraints]
        if self.b.size:
            v.append(float(np.max(self.A @ x - self.b)))
        return float(max(v))


@dataclass
class KelleyResult:
    x: np.ndarray
    value: float
    lower: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)

    @property
    def gap(self) -> float:
        return self.value - self.lower


class _Master:
    """Cut pool over ``(x, t)``; rows are ``a^T x - t * w <= rhs``."""

    def __init__(self, prog: ConvexProgram, t_lo: float = -np.inf):
        self.prog = prog
        n = prog.dim
        self.rows = [np.concatenate([r, [0.0]]) for r in prog.A]
        self.rhs = list(prog.b)
        self.lb = np.concatenate([prog.lo, [t_lo]])
        self.ub = np.concatenate([prog.hi, [np.inf]])
        self.c = np.zeros(n + 1)
        self.c[-1] = 1.0

    def _add(self, row: np.ndarray, rhs: float):
        # near-duplicate cuts make the master degenerate without adding information
        scale = np.linalg.norm(row)
        key = np.concatenate([row, [rhs]]) / scale
        for r, b in zip(self.rows, self.rhs):
            other = np.concatenate([r, [b]]) / np.linalg.norm(r)
            if np.max(np.abs(key - other)) <= 1e-7:
                return
        self.rows.append(row)
        self.rhs.append(rhs)

    def add_objective_cut(self, x, fx, s):
        # t >= fx + s (y - x)   <=>   s y - t <= s x - fx
        self._add(np.concatenate([s, [-1.0]]), float(s @ x - fx))

    def add_constraint_cut(self, x, gx, s):
        # gx + s (y - x) <= 0
        if not np.any(s):
            return
        self._add(np.concatenate([s, [0.0]]), float(s @ x - gx))

    def solve(self):
        A = np.array(self.rows) if self.rows else np.zeros((0, self.c.size))
        res = lp_solve(LPProblem(self.c, A, np.array(self.rhs), ["<="] * len(self.rhs),
                                 self.lb, self.ub))
        return res


def _lp_feasible_point(prog: ConvexProgram) -> np.ndarray | None:
    """Any point of box and affine rows (no nonlinear constraints)."""
    c = np.zeros(prog.dim)
    res = lp_solve(LPProblem(c, prog.A, prog.b, ["<="] * prog.b.size, prog.lo, prog.hi))
    return res.x if res.optimal else None


def find_feasible(prog: ConvexProgram, max_iter: int = 500) -> np.ndarray:
    """A point with all constraints at most ``FEAS_TOL``, preferring interior points.

    Runs Kelley on ``max_k g_k`` and stops as soon as the value is negative
    (a Slater point) or the lower bound proves the set empty.
    """
    x0 = _lp_feasible_point(prog)
    if x0 is None:
        raise EmptyDomainError("box and affine constraints have no common point")
    if not prog.constraints:
        return x0

    def gmax(x):
        vals = [g(x) for g in prog.constraints]
        k = int(np.argmax([v for v, _ in vals]))
        return vals[k]

    v0, _ = gmax(x0)
    if v0 < 0:
        return x0
    master = _Master(prog)
    best_x, best_v = x0, v0
    x = x0
    for _ in range(max_iter):
        v, s = gmax(x)
        if v < best_v:
            best_x, best_v = x, v
        if best_v < -1e-7:
            return best_x
        master.add_objective_cut(x, v, s)
        res = master.solve()
        if not res.optimal:
            raise SolverFailure(f"phase-1 master LP returned {res.status}")
        lower = res.x[-1]
        if lower > FEAS_TOL:
            raise EmptyDomainError(f"constraints are infeasible (certified min max g = {lower:.3e})")
        if best_v - lower <= 1e-10:
            break
        x = res.x[:-1]
    if best_v <= FEAS_TOL:
        return best_x
    raise EmptyDomainError(f"no feasible point found; best max violation {best_v:.3e}")


def _pull_back(prog: ConvexProgram, x_in: np.ndarray, x_out: np.ndarray, steps: int = 60):
    """Bisection on the segment from feasible ``x_in`` toward ``x_out``."""
    lo, hi = 0.0, 1.0
    d = x_out - x_in
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if prog.max_violation(x_in + mid * d) <= FEAS_TOL:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return x_in + lo * d


def kelley(prog: ConvexProgram, tol: float = 1e-6, max_iter: int = 500,
           x_feasible: np.ndarray | None = None) -> KelleyResult:
    """Minimize ``prog.objective`` to a certified gap ``tol`` (absolute)."""
    if x_feasible is None:
        x_feasible = find_feasible(prog)
    if prog.max_violation(x_feasible) > FEAS_TOL:
        raise ValueError("supplied starting point is not feasible")
    anchor = x_feasible
    master = _Master(prog)
    fx, s = prog.objective(x_feasible)
    best_x, best_f = x_feasible.copy(), fx
    master.add_objective_cut(x_feasible, fx, s)
    for g in prog.constraints:
        gv, gs = g(x_feasible)
        if gv >= -1e-6:
            master.add_constraint_cut(x_feasible, gv, gs)
    lower = -np.inf
    history = []
    for it in range(1, max_iter + 1):
        res = master.solve()
        if not res.optimal:
            raise SolverFailure(f"Kelley master LP returned {res.status}")
        lower = max(lower, float(res.x[-1]))
        history.append((lower, best_f))
        if best_f - lower <= tol:
            return KelleyResult(best_x, best_f, lower, it, True, history)
        x = res.x[:-1]
        fx, s = prog.objective(x)
        master.add_objective_cut(x, fx, s)
        for g in prog.constraints:
            gv, gs = g(x)
            if gv > 0.0:
                master.add_constraint_cut(x, gv, gs)
        # points on a boundary may miss it by round-off, hence the tolerance
        if prog.max_violation(x) <= FEAS_TOL:
            if fx < best_f:
                best_x, best_f = x.copy(), fx
        else:
            xb = _pull_back(prog, anchor, x)
            fb, sb = prog.objective(xb)
            master.add_objective_cut(xb, fb, sb)
            for g in prog.constraints:
                gv, gs = g(xb)
                if gv >= -1e-9:
                    master.add_constraint_cut(xb, gv, gs)
            if fb < best_f:
                best_x, best_f = xb, fb
    return KelleyResult(best_x, best_f, lower, max_iter, False, history)
