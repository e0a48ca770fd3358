"""Dense two-phase revised simplex with Bland's rule.

Problems are given in the general form

    min c^T x  s.t.  A x (<= | >= | =) b,  lb <= x <= ub

and converted internally to ``min c^T z, A z = b, z >= 0``.  The basis
inverse is kept explicitly and updated by elementary row operations, with a
periodic refactorization.  Bland's rule (smallest eligible index enters,
smallest basic index leaves on ratio ties) rules out cycling; an iteration cap
still guards against numerical stalling and raises instead of returning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

MAX_NONZEROS = 10_000
# relative slack on earlier optima when breaking ties lexicographically
LEX_SLACK = 1e-10
_SENSES = ("<=", ">=", "=")


class LPError(RuntimeError):
    """Solver failure: size limit, bad data, or the cycling guard firing."""


@dataclass
class LPProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: Sequence[str] = ()
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, float).reshape(-1, n)
        self.b = np.asarray(self.b, float).ravel()
        m = self.A.shape[0]
        if self.b.size != m:
            raise LPError(f"rhs has {self.b.size} entries for {m} rows")
        senses = list(self.senses) if len(self.senses) else ["<="] * m
        if len(senses) != m or any(s not in _SENSES for s in senses):
            raise LPError(f"need one sense from {_SENSES} per row")
        self.senses = senses
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, float).ravel()
        if self.lb.size != n or self.ub.size != n:
            raise LPError("bounds must match the number of variables")
        for arr in (self.c, self.A, self.b):
            if not np.all(np.isfinite(arr)):
                raise LPError("LP data must be finite")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)) or np.any(self.lb == np.inf) \
                or np.any(self.ub == -np.inf):
            raise LPError("invalid variable bounds")

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class LPResult:
    status: str
    value: float = np.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _StandardForm:
    """Bookkeeping for ``x = offset + M z`` and the row transformations."""

    def __init__(self, p: LPProblem):
        n, m = p.n, p.A.shape[0]
        cols = []  # (original var, sign)
        offset = np.zeros(n)
        ub_rows = []  # (std column, bound)
        for j in range(n):
            lo, hi = p.lb[j], p.ub[j]
            if np.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    if hi < lo:
                        raise LPError(f"variable {j} has ub < lb")
                    ub_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        nz = len(cols)
        M = np.zeros((n, nz))
        for k, (j, s) in enumerate(cols):
            M[j, k] = s
        rows_A = p.A @ M
        rows_b = p.b - p.A @ offset
        senses = list(p.senses)
        if ub_rows:
            extra = np.zeros((len(ub_rows), nz))
            for r, (k, bound) in enumerate(ub_rows):
                extra[r, k] = 1.0
            rows_A = np.vstack([rows_A, extra])
            rows_b = np.concatenate([rows_b, [bd for _, bd in ub_rows]])
            senses += ["<="] * len(ub_rows)
        total_rows = rows_A.shape[0]
        n_slack = sum(s != "=" for s in senses)
        A = np.zeros((total_rows, nz + n_slack))
        A[:, :nz] = rows_A
        slack_of_row = [-1] * total_rows
        k = nz
        for i, s in enumerate(senses):
            if s == "<=":
                A[i, k] = 1.0
            elif s == ">=":
                A[i, k] = -1.0
            else:
                continue
            slack_of_row[i] = k
            k += 1
        sign = np.where(rows_b < 0, -1.0, 1.0)
        A *= sign[:, None]
        self.A = A
        self.b = rows_b * sign
        self.row_sign = sign
        self.slack_of_row = slack_of_row
        self.c = np.concatenate([M.T @ p.c, np.zeros(n_slack)])
        self.const = float(p.c @ offset)
        self.M = M
        self.offset = offset
        self.n_struct = nz
        self.m_orig = m

    def recover(self, z: np.ndarray) -> np.ndarray:
        return self.offset + self.M @ z[: self.n_struct]


class _Revised:
    def __init__(self, A, b, basis, max_iter, tol=1e-9):
        self.A = A
        self.b = b
        self.basis = list(basis)
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0
        self._refactor()

    def _refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise LPError("basis matrix became singular") from exc
        self.xB = self.Binv @ self.b
        self._since = 0

    def _pivot(self, r: int, j: int, u: np.ndarray):
        piv = u[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(u, row)
        self.Binv[r] = row
        xr = self.xB[r] / piv
        self.xB -= u * xr
        self.xB[r] = xr
        self.basis[r] = j
        self._since += 1
        if self._since >= 64:
            self._refactor()

    def run(self, c: np.ndarray, allowed: np.ndarray) -> str:
        """Bland-rule iterations on cost ``c``; returns OPTIMAL or UNBOUNDED."""
        A, tol = self.A, self.tol
        while True:
            if self.iterations >= self.max_iter:
                raise LPError(f"simplex iteration cap {self.max_iter} reached (cycling guard)")
            y = c[self.basis] @ self.Binv
            d = c - y @ A
            d[self.basis] = 0.0
            cand = np.flatnonzero((d < -tol) & allowed)
            if cand.size == 0:
                if self._since:
                    # confirm with a fresh factorization before stopping
                    self._refactor()
                    continue
                return OPTIMAL
            j = int(cand[0])
            u = self.Binv @ A[:, j]
            pos = u > tol
            if not np.any(pos):
                if self._since:
                    self._refactor()
                    continue
                self.iterations += 1
                self._ray = (j, u)
                return UNBOUNDED
            # Harris pass: widen the step by a feasibility tolerance, then among
            # rows blocking within that step take Bland's smallest basic index
            # from those whose pivot is not tiny relative to the largest one
            xB = np.maximum(self.xB, 0.0)
            rows = np.flatnonzero(pos)
            ratio = xB[rows] / u[rows]
            theta = np.min((xB[rows] + tol) / u[rows])
            elig = rows[ratio <= theta]
            if elig.size == 0:
                raise LPError("ratio test failed on non-finite basis data")
            big = u[elig].max()
            elig = elig[u[elig] >= 1e-2 * big]
            r = int(min(elig, key=lambda i: self.basis[i]))
            self._pivot(r, j, u)
            self.iterations += 1

    def z(self, n: int) -> np.ndarray:
        z = np.zeros(n)
        z[self.basis] = np.maximum(self.xB, 0.0)
        return z


def _count_nonzeros(p: LPProblem) -> int:
    return int(np.count_nonzero(p.A))


def _solve_once(p: LPProblem, max_iter: int | None) -> LPResult:
    if _count_nonzeros(p) > MAX_NONZEROS:
        raise LPError(f"LP has {_count_nonzeros(p)} nonzeros, limit is {MAX_NONZEROS}")
    sf = _StandardForm(p)
    A, b = sf.A, sf.b
    rows, cols = A.shape
    if max_iter is None:
        max_iter = 50 * (rows + cols) + 1000
    if rows == 0:
        # only bounds: each standard variable sits at zero unless its cost is negative
        if np.any(sf.c < -1e-12):
            return LPResult(UNBOUNDED)
        z = np.zeros(cols)
        return LPResult(OPTIMAL, sf.const, sf.recover(z), np.zeros(sf.m_orig), 0)

    # crash basis: a slack or a structural unit column with a positive entry
    # serves as the starting basic variable of its row; other rows get artificials
    nnz = np.count_nonzero(A, axis=0)
    unit_row = np.where(nnz == 1, np.argmax(A != 0, axis=0), -1)
    taken = np.zeros(cols, bool)
    basis, art_rows = [], []
    for i in range(rows):
        k = sf.slack_of_row[i]
        if not (k >= 0 and A[i, k] > 0):
            k = -1
            for j in np.flatnonzero((unit_row == i) & ~taken):
                if A[i, j] > 0:
                    k = int(j)
                    break
        if k >= 0:
            taken[k] = True
            basis.append(k)
        else:
            basis.append(-1)
            art_rows.append(i)
    n_art = len(art_rows)
    if n_art:
        art = np.zeros((rows, n_art))
        for a, i in enumerate(art_rows):
            art[i, a] = 1.0
            basis[i] = cols + a
        A = np.hstack([A, art])
    total = cols + n_art
    allowed = np.ones(total, bool)
    solver = _Revised(A, b, basis, max_iter)

    if n_art:
        c1 = np.zeros(total)
        c1[cols:] = 1.0
        solver.run(c1, allowed)
        infeas = float(c1[solver.basis] @ np.maximum(solver.xB, 0.0))
        if infeas > 1e-9 * max(1.0, float(np.abs(b).max())):
            return LPResult(INFEASIBLE, iterations=solver.iterations,
                            extra={"phase1": infeas})
        allowed[cols:] = False
        # drive zero-level artificials out of the basis where a pivot exists
        for r in range(rows):
            if solver.basis[r] < cols:
                continue
            row = solver.Binv[r] @ A[:, :cols]
            nonbasic = np.ones(cols, bool)
            nonbasic[[k for k in solver.basis if k < cols]] = False
            cand = np.flatnonzero(nonbasic & (np.abs(row) > 1e-9))
            if cand.size:
                j = int(cand[0])
                solver._pivot(r, j, solver.Binv @ A[:, j])
        solver.xB[[r for r in range(rows) if solver.basis[r] >= cols]] = 0.0

    c2 = np.zeros(total)
    c2[:cols] = sf.c
    status = solver.run(c2, allowed)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, -np.inf, iterations=solver.iterations)
    z = solver.z(total)[:cols]
    y = c2[solver.basis] @ solver.Binv
    duals = (y * sf.row_sign)[: sf.m_orig]
    value = float(sf.c @ z) + sf.const
    return LPResult(OPTIMAL, value, sf.recover(z), duals, solver.iterations)


def lp_solve(problem: LPProblem, lexicographic: Sequence[int] | None = None,
             max_iter: int | None = None) -> LPResult:
    """Solve an LP; optionally break ties among optima lexicographically.

    With ``lexicographic=[j1, j2, ...]`` the returned point minimizes
    ``x[j1]`` over the optimal face, then ``x[j2]`` over what remains, and so
    on.  Each stage is one extra LP with the previous optima fixed to within
    a relative ``LEX_SLACK``.
    """
    res = _solve_once(problem, max_iter)
    if not res.optimal or not lexicographic:
        return res
    A = [problem.A, problem.c[None, :]]
    b = [problem.b, [res.value + LEX_SLACK * max(1.0, abs(res.value))]]
    senses = list(problem.senses) + ["<="]
    iters = res.iterations
    x = res.x
    for j in lexicographic:
        e = np.zeros(problem.n)
        e[j] = 1.0
        sub = LPProblem(e, np.vstack(A), np.concatenate([np.ravel(v) for v in b]),
                        senses, problem.lb, problem.ub)
        r = _solve_once(sub, max_iter)
        iters += r.iterations
        if not r.optimal:
            break
        x = r.x
        A.append(e[None, :])
        b.append([r.value + LEX_SLACK * max(1.0, abs(r.value))])
        senses.append("<=")
    return LPResult(OPTIMAL, float(problem.c @ x), x, res.duals, iters)


def constraint_residual(problem: LPProblem, x: np.ndarray) -> float:
    """Largest violation of rows and bounds at ``x`` (0 when feasible)."""
    ax = problem.A @ x
    viol = [0.0]
    for i, s in enumerate(problem.senses):
        if s == "<=":
            viol.append(ax[i] - problem.b[i])
        elif s == ">=":
            viol.append(problem.b[i] - ax[i])
        else:
            viol.append(abs(ax[i] - problem.b[i]))
    viol.append(float(np.max(problem.lb - x, initial=0.0)))
    viol.append(float(np.max(x - problem.ub, initial=0.0)))
    return float(max(viol))
