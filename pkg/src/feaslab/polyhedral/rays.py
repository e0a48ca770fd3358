"""Extreme rays of recourse cones ``{a : a^T W >= 0}`` by double description.

The lineality space ``null(W^T)`` is split off first, so the remaining cone
lives in ``range(W)`` and is pointed.  That pointed cone is built one
inequality at a time starting from a simplicial cone, keeping only pairs of
rays that are adjacent (their common active set has rank ``r - 2``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simplex import LPProblem, lp_solve

MAX_ROWS = 12
MAX_COLS = 24
RANK_TOL = 1e-9
# singular values between these two relative levels make the rank ambiguous
_RANK_FLOOR = 1e-12
_ZERO_TOL = 1e-9


class ConeSizeError(ValueError):
    pass


class DegenerateInputError(ValueError):
    """Numerical rank of W cannot be decided at the working tolerance."""


@dataclass(frozen=True)
class ConeGenerators:
    """Generators of ``{a : a^T W >= 0}``.

    ``rays`` is ``(k, d)`` with unit rows; ``lineality`` is ``(l, d)`` with
    orthonormal rows.  The cone is ``cone(rays) + span(lineality)``.
    """

    W: np.ndarray
    rays: np.ndarray
    lineality: np.ndarray

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def n_rays(self) -> int:
        return self.rays.shape[0]

    @property
    def is_trivial(self) -> bool:
        """True for the cone {0}, i.e. complete recourse."""
        return self.n_rays == 0 and self.lineality.shape[0] == 0

    def to_dict(self) -> dict:
        return {"rays": self.rays.tolist(), "lineality": self.lineality.tolist()}


def _as_matrix(W) -> np.ndarray:
    W = np.asarray(W, float)
    if W.ndim != 2:
        raise ValueError("W must be a 2-D matrix")
    if not np.all(np.isfinite(W)):
        raise ValueError("W must have finite entries")
    d, p = W.shape
    if d > MAX_ROWS or p > MAX_COLS:
        raise ConeSizeError(f"W is {d}x{p}; ray enumeration is limited to {MAX_ROWS}x{MAX_COLS}")
    return W


def _split_range(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases of range(W) and null(W^T), as columns."""
    d = W.shape[0]
    if W.shape[1] == 0:
        return np.zeros((d, 0)), np.eye(d)
    U, s, _ = np.linalg.svd(W, full_matrices=True)
    scale = max(1.0, float(s[0]) if s.size else 0.0)
    ambiguous = (s > _RANK_FLOOR * scale) & (s <= RANK_TOL * scale)
    if np.any(ambiguous):
        raise DegenerateInputError(
            f"W has singular value {s[ambiguous].max():.3e} inside the rank tolerance band; "
            "rank is numerically undecidable")
    r = int(np.sum(s > RANK_TOL * scale))
    return U[:, :r], U[:, r:]


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _initial_rows(G: np.ndarray, r: int) -> list[int]:
    """Greedy choice of ``r`` linearly independent rows, lowest index first."""
    chosen: list[int] = []
    basis = np.zeros((0, G.shape[1]))
    for i in range(G.shape[0]):
        cand = np.vstack([basis, G[i]])
        if np.linalg.matrix_rank(cand, tol=RANK_TOL) > len(chosen):
            chosen.append(i)
            basis = cand
            if len(chosen) == r:
                break
    return chosen


def _pointed_rays(G: np.ndarray) -> np.ndarray:
    """Extreme rays of the pointed cone ``{z : G z >= 0}``, ``G`` full column rank."""
    r = G.shape[1]
    start = _initial_rows(G, r)
    R = np.linalg.inv(G[start]).T  # rows are rays of the initial simplicial cone
    rays = [_unit(v) for v in R]
    done = list(start)
    for i in range(G.shape[0]):
        if i in start:
            continue
        g = G[i]
        vals = np.array([g @ v for v in rays])
        pos = [v for v, s in zip(rays, vals) if s > _ZERO_TOL]
        neg = [(v, s) for v, s in zip(rays, vals) if s < -_ZERO_TOL]
        zero = [v for v, s in zip(rays, vals) if abs(s) <= _ZERO_TOL]
        if not neg:
            done.append(i)
            continue
        G_done = G[done]
        new = []
        for v in pos:
            sp = g @ v
            act_p = np.abs(G_done @ v) <= _ZERO_TOL
            for w, sn in neg:
                common = act_p & (np.abs(G_done @ w) <= _ZERO_TOL)
                rank = np.linalg.matrix_rank(G_done[common], tol=RANK_TOL) if np.any(common) else 0
                if rank != r - 2:
                    continue
                new.append(_unit(sp * w - sn * v))
        rays = pos + zero + new
        done.append(i)
    return np.array(rays) if rays else np.zeros((0, r))


def _dedupe_and_sort(rays: np.ndarray) -> np.ndarray:
    kept: list[np.ndarray] = []
    for v in rays:
        if not any(np.linalg.norm(v - k) <= 1e-8 for k in kept):
            kept.append(v)
    kept.sort(key=lambda v: tuple(-np.round(v, 9)))
    return np.array(kept) if kept else np.zeros((0, rays.shape[1]))


def enumerate_rays(W) -> ConeGenerators:
    """Generators of ``{a in R^d : a^T W >= 0}`` for a ``d x p`` matrix ``W``."""
    W = _as_matrix(W)
    d = W.shape[0]
    U, N = _split_range(W)
    lineality = N.T.copy()
    r = U.shape[1]
    if r == 0:
        return ConeGenerators(W, np.zeros((0, d)), lineality)
    G = W.T @ U
    norms = np.linalg.norm(G, axis=1)
    G = G[norms > RANK_TOL] / norms[norms > RANK_TOL, None]
    Z = _pointed_rays(G)
    rays = np.array([_unit(U @ z) for z in Z]) if len(Z) else np.zeros((0, d))
    rays[np.abs(rays) < 1e-14] = 0.0
    lineality[np.abs(lineality) < 1e-14] = 0.0
    # canonical sign for lineality vectors: first nonzero entry positive
    for k in range(lineality.shape[0]):
        nz = np.flatnonzero(np.abs(lineality[k]) > 1e-12)
        if nz.size and lineality[k, nz[0]] < 0:
            lineality[k] = -lineality[k]
    return ConeGenerators(W, _dedupe_and_sort(rays), lineality)


def in_cone(W, a, tol: float = 1e-9) -> bool:
    """Direct membership test ``a^T W >= -tol``."""
    return bool(np.all(np.asarray(a, float) @ np.asarray(W, float) >= -tol))


def in_generated_cone(gen: ConeGenerators, a, tol: float = 1e-7) -> bool:
    """LP test: is ``a`` a nonnegative ray combination plus a lineality vector?"""
    a = np.asarray(a, float)
    k, ell = gen.n_rays, gen.lineality.shape[0]
    if k + ell == 0:
        return bool(np.linalg.norm(a) <= tol)
    A = np.hstack([gen.rays.T, gen.lineality.T]).reshape(gen.dim, k + ell)
    lb = np.concatenate([np.zeros(k), np.full(ell, -np.inf)])
    # minimize the L1 residual so round-off does not flip the answer
    d = gen.dim
    Afull = np.hstack([A, np.eye(d), -np.eye(d)])
    c = np.concatenate([np.zeros(k + ell), np.ones(2 * d)])
    lbf = np.concatenate([lb, np.zeros(2 * d)])
    res = lp_solve(LPProblem(c, Afull, a, ["="] * d, lbf))
    return res.optimal and res.value <= tol * max(1.0, float(np.linalg.norm(a)))


def is_minimal(gen: ConeGenerators) -> bool:
    """No ray lies in the cone generated by the others plus the lineality space."""
    for i in range(gen.n_rays):
        others = ConeGenerators(gen.W, np.delete(gen.rays, i, axis=0), gen.lineality)
        if in_generated_cone(others, gen.rays[i]):
            return False
    return True


def rays_from_dict(W, data: dict) -> ConeGenerators:
    W = _as_matrix(W)
    d = W.shape[0]
    rays = np.asarray(data.get("rays", []), float).reshape(-1, d)
    lin = np.asarray(data.get("lineality", []), float).reshape(-1, d)
    return ConeGenerators(W, rays, lin)


__all__ = [
    "ConeGenerators", "ConeSizeError", "DegenerateInputError", "enumerate_rays",
    "in_cone", "in_generated_cone", "is_minimal",
]
