"""Built-in problem instances, expressed as config records.

Every chain problem here is coordinate separable, so the SAA solution is
exact per coordinate and the domain quantities are exact as well; this keeps
the full default grid within desk-scale runtime.
"""

from __future__ import annotations

from .config import DEFAULT_ALPHA, DEFAULT_N, DEFAULT_TIGHTNESS_TRIALS, DEFAULT_TRIALS


def uniform(a, b):
    return {"family": "uniform", "a": a, "b": b}


def normal(mean, sd):
    return {"family": "normal", "mean": mean, "sd": sd}


def exponential(rate, loc=0.0):
    base = {"family": "exponential", "rate": rate}
    return base if loc == 0.0 else {"family": "shifted", "base": base, "loc": loc}


def affine(a, b=0.0):
    return {"kind": "affine", "a": list(a), "b": b}


def quadratic(Q, a, b=0.0):
    return {"kind": "quadratic", "Q": Q, "a": list(a), "b": b}


def norm(center):
    return {"kind": "norm", "center": list(center)}


def _domain(dim, chains, independent=True):
    return {"dim": dim, "independent_thresholds": independent,
            "chains": [{"constraint": c, "threshold": t} for c, t in chains]}


def _objective(c, loss, zeta, weights=None):
    return {"c": list(c), "weights": list(weights or [1.0] * len(c)), "loss": loss,
            "zeta": list(zeta)}


def bound_check_problems() -> dict[str, dict]:
    """Catalog for the dominance check: m in {1, 2, 4}, both couplings."""
    return {
        # x* sits at min l almost surely, so d(x*) = 1 - min l and the bound is attained
        "m1_uniform": {
            "domain": _domain(1, [(affine([1.0]), uniform(0.0, 1.0))]),
            "objective": _objective([0.0], "square", [normal(1.0, 0.5)]),
            "lo": [-2.0], "hi": [2.0],
        },
        "m2_independent": {
            "domain": _domain(2, [(affine([1.0, 0.0]), uniform(0.0, 1.0)),
                                  (affine([0.0, 1.0]), exponential(1.0))]),
            "objective": _objective([0.0, 0.0], "abs", [uniform(1.0, 2.0), normal(2.0, 0.5)]),
            "lo": [-3.0, -3.0], "hi": [3.0, 3.0],
        },
        "m2_comonotone": {
            "domain": _domain(2, [(affine([1.0, 0.0]), uniform(0.0, 1.0)),
                                  (affine([0.0, 1.0]), exponential(2.0, loc=0.5))],
                              independent=False),
            "objective": _objective([0.0, 0.0], "product", [normal(-1.0, 0.3), normal(-1.0, 0.3)]),
            "lo": [-2.0, -2.0], "hi": [2.0, 2.0],
        },
        "m4_norm_independent": {
            "domain": _domain(1, [(affine([1.0]), uniform(0.0, 1.0)),
                                  (affine([-1.0]), uniform(0.0, 1.0)),
                                  (norm([0.2]), uniform(0.5, 1.0)),
                                  (quadratic([[1.0]], [0.0]), uniform(0.25, 1.0))]),
            "objective": _objective([0.0], "square", [normal(0.8, 1.0)]),
            "lo": [-2.0], "hi": [2.0],
        },
        "m4_quadratic_comonotone": {
            "domain": _domain(1, [(affine([1.0]), uniform(0.0, 1.0)),
                                  (affine([-1.0]), exponential(1.0)),
                                  (quadratic([[1.0]], [-1.0]), uniform(0.0, 0.5)),
                                  (norm([0.0]), uniform(0.5, 1.5))], independent=False),
            "objective": _objective([0.0], "abs", [uniform(-1.0, 2.0)]),
            "lo": [-2.0], "hi": [2.0],
        },
        "m1_discrete": {
            "domain": _domain(1, [(affine([1.0]), {"family": "discrete",
                                                   "values": [0.0, 0.5, 1.0],
                                                   "probs": [0.2, 0.3, 0.5]})]),
            "objective": _objective([0.0], "square", [normal(2.0, 0.5)]),
            "lo": [-2.0], "hi": [2.0],
        },
    }


def interior_problem() -> dict:
    """dom F = {x <= 0.5} and the true minimizer 0.2 lies in its interior."""
    return {
        "domain": _domain(1, [(affine([1.0]), uniform(0.5, 1.5))]),
        "objective": _objective([0.0], "square", [normal(0.2, 1.0)]),
        "lo": [-5.0], "hi": [5.0],
    }


def active_problem(perturbed: bool = True) -> dict:
    """m = 4 chains of which only ``x_1 <= l_1`` is active at the true minimizer.

    The objective ``-x_1 + (x_2 - zeta)^2`` pushes ``x_1`` to its chain bound and
    keeps ``x_2`` near 0, strictly inside the other three chains.
    """
    chains = [(affine([1.0, 0.0]), uniform(0.0, 1.0)),
              (affine([0.0, 1.0]), uniform(1.0, 2.0)),
              (affine([-1.0, 0.0]), uniform(1.0, 2.0)),
              (affine([0.0, -1.0]), uniform(1.0, 2.0))]
    p = {
        "domain": _domain(2, chains),
        "objective": _objective([-1.0, 0.0], "square", [normal(0.0, 0.5), normal(0.0, 0.5)],
                                weights=[0.0, 1.0]),
        "lo": [-3.0, -3.0], "hi": [3.0, 3.0],
        "active": [0],
    }
    if perturbed:
        loose = list(chains)
        loose[1] = (affine([0.0, 1.0]), uniform(2.0, 3.0))
        p["perturbed_domain"] = _domain(2, loose)
    return p


def two_stage_problem() -> dict:
    """``y = h - x >= 0``: two rays, both binding at the SAA solution."""
    return {
        "W": [[1.0, 0.0], [0.0, 1.0]],
        "T": [[1.0, 0.0], [0.0, 1.0]],
        "h": [uniform(1.0, 2.0), uniform(0.5, 1.5)],
        "c": [-1.0, -1.0], "g": [0.5, 0.5],
        "lo": [0.0, 0.0], "hi": [3.0, 3.0],
    }


def complete_recourse_problem() -> dict:
    """``y+ - y- = h - x`` is always solvable: the cone has no rays (m = 0)."""
    return {
        "W": [[1.0, -1.0]],
        "T": [[1.0]],
        "h": [normal(0.0, 1.0)],
        "c": [0.0], "g": [1.0, 1.0],
        "lo": [-1.0], "hi": [1.0],
    }


def multistage_problem(branching=(10, 10), alpha=(0.2, 0.2)) -> dict:
    """Inventory-style chain: stage variables ``(q, p, s, u, e)``.

    Rows at stage ``t >= 2``: ``s_t + q_{t-1} = b_1``, ``u_t + p_{t-1} = b_2`` and
    ``q_t + e_t = b_3``.  Costs ``-q - p`` reward large decisions, which the
    next stage must absorb, so stored decisions sit on the sampled minima.
    The cone ``{r : r^T A >= 0}`` is the nonnegative orthant, giving m_t = 3.
    """
    A = [[0.0, 0.0, 1.0, 0.0, 0.0],
         [0.0, 0.0, 0.0, 1.0, 0.0],
         [1.0, 0.0, 0.0, 0.0, 1.0]]
    B = [[1.0, 0.0, 0.0, 0.0, 0.0],
         [0.0, 1.0, 0.0, 0.0, 0.0],
         [0.0, 0.0, 0.0, 0.0, 0.0]]
    laws = [uniform(1.0, 2.0), exponential(2.0, loc=0.5), uniform(1.5, 2.5)]
    cost = [-1.0, -1.0, 0.0, 0.0, 0.0]
    stages = [{"A": A, "B": B, "b": laws, "cost": cost} for _ in branching]
    stages[-1]["cost"] = [0.0] * 5
    return {
        "root": {"A": [[1.0, 0.0, 0.0, 0.0, 1.0]], "b": [2.0], "cost": cost},
        "stages": stages,
        "branching": list(branching),
        "alpha": list(alpha),
    }


def _cfg(kind, name, problem, N=DEFAULT_N, alpha=DEFAULT_ALPHA, trials=DEFAULT_TRIALS,
         seed=20240601):
    return {"experiment": kind, "name": name, "seed": seed, "trials": trials,
            "grid": {"N": list(N), "alpha": list(alpha)}, "problem": problem}


def default_configs() -> dict[str, dict]:
    """Config records for every shipped experiment, keyed by file stem."""
    out = {}
    for m, N, a in ((1, 10, 0.1), (2, 20, 0.05), (3, 30, 0.1)):
        out[f"tightness_m{m}"] = _cfg("tightness", f"m{m}", {"m": m}, [N], [a],
                                      DEFAULT_TIGHTNESS_TRIALS)
    for name, p in bound_check_problems().items():
        out[f"bound_check_{name}"] = _cfg("bound_check", name, p)
    out["two_stage"] = _cfg("two_stage", "rhs_rays", two_stage_problem(), [10, 20, 50],
                            [0.05, 0.1, 0.2], 500)
    out["two_stage_complete"] = _cfg("two_stage", "complete_recourse",
                                     complete_recourse_problem(), [10, 20, 50],
                                     [0.05, 0.1, 0.2], 200)
    out["interior_decay"] = _cfg("interior_decay", "interior", interior_problem(),
                                 [10, 20, 50, 100, 200], [0.0], 20_000)
    out["active_constraints"] = _cfg("active_constraints", "m4_J1", active_problem(),
                                     [10, 20, 50, 100, 200, 500], [0.01, 0.05, 0.1, 0.2])
    out["multistage"] = _cfg("multistage", "T3", multistage_problem(), [], [], 1000)
    return out


__all__ = [
    "active_problem", "bound_check_problems", "complete_recourse_problem", "default_configs",
    "interior_problem", "multistage_problem", "two_stage_problem",
]
