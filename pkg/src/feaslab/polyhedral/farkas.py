"""Recourse feasibility: the ray test and the LP it must agree with."""

from __future__ import annotations

import math

import numpy as np

from .rays import ConeGenerators
from .simplex import INFEASIBLE, UNBOUNDED, LPProblem, lp_solve

RAY_TOL = 1e-8


class UnboundedRecourseError(RuntimeError):
    """The second-stage LP is unbounded below: the model itself is broken."""


def _rhs(h, T, x) -> np.ndarray:
    h = np.atleast_1d(np.asarray(h, float))
    T = np.asarray(T, float).reshape(h.size, -1)
    x = np.atleast_1d(np.asarray(x, float))
    if T.shape[1] != x.size:
        raise ValueError(f"T has {T.shape[1]} columns but x has {x.size} entries")
    return h - T @ x


def farkas_feasible(gen: ConeGenerators, h, T, x) -> bool:
    """Decide ``{y >= 0 : W y = h - T x}`` nonempty from the cone generators."""
    v = _rhs(h, T, x)
    if v.size != gen.dim:
        raise ValueError(f"h has {v.size} entries, the cone lives in dimension {gen.dim}")
    if gen.n_rays and np.any(gen.rays @ v < -RAY_TOL):
        return False
    if gen.lineality.shape[0] and np.any(np.abs(gen.lineality @ v) > RAY_TOL):
        return False
    return True


def phase1_feasible(W, v) -> bool:
    """Simplex oracle for ``{y >= 0 : W y = v}`` nonempty."""
    W = np.asarray(W, float)
    v = np.atleast_1d(np.asarray(v, float))
    res = lp_solve(LPProblem(np.zeros(W.shape[1]), W, v, ["="] * W.shape[0]))
    return res.status != INFEASIBLE


def second_stage_value(W, T, h, g, x) -> float:
    """``min g^T y  s.t.  W y = h - T x, y >= 0``; ``+inf`` when infeasible."""
    W = np.asarray(W, float)
    v = _rhs(h, T, x)
    res = lp_solve(LPProblem(np.asarray(g, float), W, v, ["="] * W.shape[0]))
    if res.status == INFEASIBLE:
        return math.inf
    if res.status == UNBOUNDED:
        raise UnboundedRecourseError("second stage is unbounded below for this x")
    return res.value


def second_stage_solution(W, T, h, g, x):
    """Value, optimal ``y`` and equality-row duals of the second stage (``None`` if infeasible)."""
    W = np.asarray(W, float)
    v = _rhs(h, T, x)
    res = lp_solve(LPProblem(np.asarray(g, float), W, v, ["="] * W.shape[0]))
    if res.status == INFEASIBLE:
        return math.inf, None, None
    if res.status == UNBOUNDED:
        raise UnboundedRecourseError("second stage is unbounded below for this x")
    return res.value, res.x, res.duals
