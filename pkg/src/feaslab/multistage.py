"""Scenario trees built by identical conditional sampling.

Stage ``t >= 2`` draws ``N_t`` right-hand sides once; every stage-``(t-1)``
node branches to all of them, so the tree has ``prod_{s<=t} N_s`` nodes at
stage ``t`` and each node carries its own decision.  The extensive form is a
single LP over all node decisions:

    min  sum_nodes P(node) c_t^T x_node
    s.t. A_1 x_root = b_1
         A_t x_node + B_t x_parent = b_t^{i_t},   x >= 0.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bounds import binomial_tail, multistage_product
from .polyhedral.rays import ConeGenerators
from .polyhedral.simplex import LPProblem, lp_solve
from .recourse import RecourseFamily
from .rng import SeedSpec, StreamRole
from .stats import Estimate

MAX_STAGES = 4
MAX_BRANCHING = 50
FEAS_TOL = 1e-8


class TreeError(RuntimeError):
    pass


class InfeasibleTree(TreeError):
    """No feasible assignment of node decisions exists (a censored trial)."""


@dataclass(frozen=True)
class RootStage:
    """Deterministic first stage ``A_1 x_1 = b_1, x_1 >= 0`` with cost ``c_1``."""

    A: np.ndarray
    b: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        cost = np.asarray(self.cost, float).ravel()
        A = np.asarray(self.A, float).reshape(-1, cost.size)
        b = np.asarray(self.b, float).ravel()
        if b.size != A.shape[0]:
            raise TreeError("root stage rhs does not match its rows")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "cost", cost)

    @property
    def n(self) -> int:
        return self.cost.size


@dataclass(frozen=True)
class StageData:
    """Stage ``t >= 2``: ``A x_t + B x_{t-1} = b_xi``, ``x_t >= 0``, cost ``c_t``."""

    A: np.ndarray
    B: np.ndarray
    b_laws: tuple
    cost: np.ndarray
    _family: RecourseFamily = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, float))
        B = np.asarray(self.B, float).reshape(A.shape[0], -1)
        cost = np.asarray(self.cost, float).ravel()
        if cost.size != A.shape[1]:
            raise TreeError("stage cost does not match the columns of A")
        if len(self.b_laws) != A.shape[0]:
            raise TreeError("need one law per row of A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "b_laws", tuple(self.b_laws))
        # rays depend only on A, so they are enumerated once here
        object.__setattr__(self, "_family", RecourseFamily(A, B, self.b_laws))

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    @property
    def family(self) -> RecourseFamily:
        return self._family

    @property
    def generators(self) -> ConeGenerators:
        return self._family.gen

    @property
    def m(self) -> int:
        return self._family.m

    def sample(self, N: int, rng: np.random.Generator) -> np.ndarray:
        return self._family.sample_h(N, rng)


@dataclass(frozen=True)
class MultistageProblem:
    root: RootStage
    stages: tuple

    def __post_init__(self):
        stages = tuple(self.stages)
        object.__setattr__(self, "stages", stages)
        if len(stages) + 1 > MAX_STAGES:
            raise TreeError(f"at most {MAX_STAGES} stages are supported")
        prev = self.root.n
        for t, st in enumerate(stages, start=2):
            if st.B.shape[1] != prev:
                raise TreeError(f"stage {t}: B has {st.B.shape[1]} columns, stage {t - 1} has {prev} variables")
            prev = st.n

    @property
    def T(self) -> int:
        return len(self.stages) + 1


@dataclass
class ScenarioTree:
    """Sampled tree; ``samples[t]`` is the ``N_t x rows`` matrix for stage ``t``.

    Nodes at stage ``t`` are indexed by paths ``(i_2, ..., i_t)`` in
    lexicographic order, which is also the row order of ``decisions[t]``.
    """

    problem: MultistageProblem
    branching: tuple
    samples: dict
    decisions: dict | None = None
    value: float | None = None

    @property
    def T(self) -> int:
        return self.problem.T

    def n_nodes(self, t: int) -> int:
        return int(np.prod(self.branching[: t - 1], dtype=np.int64)) if t > 1 else 1

    def paths(self, t: int) -> list[tuple]:
        return list(itertools.product(*[range(N) for N in self.branching[: t - 1]]))

    @property
    def solved(self) -> bool:
        return self.decisions is not None


def build_tree(problem: MultistageProblem, branching: Sequence[int], seed: SeedSpec) -> ScenarioTree:
    """Sample every stage once from its own stream ``stage_index = t``."""
    branching = tuple(int(N) for N in branching)
    if len(branching) != problem.T - 1:
        raise TreeError(f"need {problem.T - 1} branching factors, got {len(branching)}")
    if any(N < 1 or N > MAX_BRANCHING for N in branching):
        raise TreeError(f"branching factors must lie in 1..{MAX_BRANCHING}")
    samples = {}
    for t, (st, N) in enumerate(zip(problem.stages, branching), start=2):
        s = SeedSpec(seed.master_seed, seed.trial_index, t, StreamRole.THRESHOLD)
        samples[t] = st.sample(N, s.generator())
    return ScenarioTree(problem, branching, samples)


def extensive_form(tree: ScenarioTree) -> tuple[LPProblem, list[int]]:
    """The node LP and the column offset of each stage's first node."""
    p = tree.problem
    sizes = [p.root.n] + [st.n for st in p.stages]
    counts = [tree.n_nodes(t) for t in range(1, p.T + 1)]
    offsets = np.concatenate([[0], np.cumsum([s * c for s, c in zip(sizes, counts)])]).astype(int)
    nv = int(offsets[-1])
    n_rows = p.root.A.shape[0] + sum(st.rows * c for st, c in zip(p.stages, counts[1:]))
    A = np.zeros((n_rows, nv))
    b = np.zeros(n_rows)
    c = np.zeros(nv)
    r0 = p.root.A.shape[0]
    A[:r0, : p.root.n] = p.root.A
    b[:r0] = p.root.b
    c[: p.root.n] = p.root.cost
    row = r0
    prob = 1.0
    for t, st in enumerate(p.stages, start=2):
        N = tree.branching[t - 2]
        prob /= N
        n_prev = sizes[t - 2]
        for k in range(counts[t - 1]):
            parent, i = divmod(k, N)
            col = offsets[t - 1] + k * st.n
            pcol = offsets[t - 2] + parent * n_prev
            A[row:row + st.rows, col:col + st.n] = st.A
            A[row:row + st.rows, pcol:pcol + n_prev] += st.B
            b[row:row + st.rows] = tree.samples[t][i]
            c[col:col + st.n] = prob * st.cost
            row += st.rows
    return LPProblem(c, A, b, ["="] * n_rows), list(offsets)


def solve_tree(tree: ScenarioTree, lexicographic_root: bool = True) -> ScenarioTree:
    """Solve the extensive form and store node decisions on the tree.

    Ties among optima are broken by lexicographic minimality of the root
    decision; deeper nodes take the vertex reached by Bland's rule.
    """
    lp, offsets = extensive_form(tree)
    lex = list(range(tree.problem.root.n)) if lexicographic_root else None
    res = lp_solve(lp, lexicographic=lex)
    if res.status == "infeasible":
        raise InfeasibleTree("extensive form has no feasible node assignment")
    if res.status == "unbounded":
        raise TreeError("extensive form is unbounded below")
    p = tree.problem
    sizes = [p.root.n] + [st.n for st in p.stages]
    decisions = {}
    for t in range(1, p.T + 1):
        blk = res.x[offsets[t - 1]:offsets[t]]
        decisions[t] = np.maximum(blk.reshape(tree.n_nodes(t), sizes[t - 1]), 0.0)
    tree.decisions = decisions
    tree.value = res.value
    _check_nodes(tree)
    return tree


def _check_nodes(tree: ScenarioTree):
    p = tree.problem
    x1 = tree.decisions[1][0]
    if p.root.A.size and np.max(np.abs(p.root.A @ x1 - p.root.b)) > FEAS_TOL * 10:
        raise TreeError("root decision violates its constraints")
    for t, st in enumerate(p.stages, start=2):
        N = tree.branching[t - 2]
        X, Xp = tree.decisions[t], tree.decisions[t - 1]
        for k in range(X.shape[0]):
            parent, i = divmod(k, N)
            r = st.A @ X[k] + st.B @ Xp[parent] - tree.samples[t][i]
            if np.max(np.abs(r)) > 1e-7 * max(1.0, np.abs(tree.samples[t][i]).max()):
                raise TreeError(f"stage {t} node {k} violates its constraints by {np.abs(r).max():.2e}")


def stage_dof(stage: StageData, x_prev, mode="analytic") -> Estimate:
    """``P{A x + B x_prev = b_xi has a solution x >= 0}``."""
    return stage.family.dof_point(x_prev, mode)


def min_path_dof(tree: ScenarioTree, t: int, mode="analytic") -> float:
    """Smallest stage-``t`` degree of feasibility over stage-``(t-1)`` decisions."""
    if not tree.solved:
        raise TreeError("solve the tree first")
    if not 2 <= t <= tree.T:
        raise TreeError(f"stage must lie in 2..{tree.T}")
    st = tree.problem.stages[t - 2]
    return min(stage_dof(st, x, mode).value for x in tree.decisions[t - 1])


def stage_dfrak_r(tree: ScenarioTree, t: int) -> float:
    """``D_r`` from the stage-``t`` samples, a lower bound for ``min_path_dof``."""
    st = tree.problem.stages[t - 2]
    return st.family.dfrak_r(tree.samples[t]).value


def stage_bounds(problem: MultistageProblem, branching, alphas) -> dict:
    """Per-stage binomial tails and the product lower bound on the joint event."""
    inputs = [(st.m, N, a) for st, N, a in zip(problem.stages, branching, alphas)]
    return {
        "binom": {t: binomial_tail(m, N, a) for t, (m, N, a) in enumerate(inputs, start=2)},
        "product": multistage_product(inputs),
        "m": {t: m for t, (m, _, _) in enumerate(inputs, start=2)},
    }


__all__ = [
    "InfeasibleTree", "MultistageProblem", "RootStage", "ScenarioTree", "StageData",
    "TreeError", "build_tree", "extensive_form", "min_path_dof", "solve_tree",
    "stage_bounds", "stage_dfrak_r", "stage_dof",
]
