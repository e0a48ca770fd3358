"""Experiment configuration files (JSON) and the problem objects they describe.

A config is a JSON object::

    {
      "experiment": "bound_check",          # one of KINDS
      "name": "m2_independent",             # label written to every CSV row
      "seed": 20240601,                     # master seed, unsigned 64-bit
      "trials": 10000,                      # R
      "grid": {"N": [10, 20], "alpha": [0.05, 0.1]},
      "problem": {...},                     # kind-specific, see below
      "output": "results/m2_independent"    # optional default output directory
    }

Problem records by kind:

* ``tightness``: ``{"m": 3}``.
* ``bound_check`` / ``interior_decay``: a chain problem,
  ``{"domain": ChainDomainSpec record, "objective": separable objective record,
  "lo": [...], "hi": [...]}``.
* ``active_constraints``: a chain problem plus ``"active": [k, ...]`` (indices of
  the chains active at the true solution) and optionally
  ``"perturbed_domain"`` (same chains with loosened inactive thresholds).
* ``two_stage``: ``{"W", "T", "h": [law, ...], "c", "g", "lo", "hi"}``.
* ``multistage``: ``{"root": {"A", "b", "cost"}, "stages": [{"A", "B", "b": [law, ...],
  "cost"}, ...], "branching": [N_2, ...], "alpha": [alpha_2, ...]}``.

Laws use the tagged records of :func:`feaslab.rng.from_dict`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .. import rng as rd
from ..chain import ChainDomainSpec, ChainSpecError
from ..multistage import MultistageProblem, RootStage, StageData, TreeError
from ..recourse import RecourseFamily
from ..saa import SeparableObjective, StochasticProblem, TwoStageProblem

KINDS = ("tightness", "bound_check", "two_stage", "interior_decay", "active_constraints",
         "multistage")
BOUND_KINDS = ("bound_check", "two_stage", "active_constraints", "multistage")
MIN_TRIALS = 100

DEFAULT_N = (10, 20, 50, 100, 200, 500)
DEFAULT_ALPHA = (0.01, 0.05, 0.1, 0.2)
DEFAULT_TRIALS = 10_000
DEFAULT_TIGHTNESS_TRIALS = 100_000


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    name: str
    problem: Mapping[str, Any]
    N: tuple = DEFAULT_N
    alpha: tuple = DEFAULT_ALPHA
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    output: str | None = None
    raw: Mapping[str, Any] = field(default=None, compare=False, repr=False)

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.name}" if self.name else self.kind

    def with_seed(self, seed: int) -> "ExperimentConfig":
        d = dict(self.to_dict())
        d["seed"] = int(seed)
        return config_from_dict(d)

    def to_dict(self) -> dict:
        d = {
            "experiment": self.kind,
            "name": self.name,
            "seed": self.seed,
            "trials": self.trials,
            "grid": {"N": list(self.N), "alpha": list(self.alpha)},
            "problem": self.problem,
        }
        if self.output:
            d["output"] = self.output
        return d


def _require(d: Mapping, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing field '{key}'")
    return d[key]


def config_from_dict(d: Mapping[str, Any]) -> ExperimentConfig:
    if not isinstance(d, Mapping):
        raise ConfigError("config must be a JSON object")
    kind = _require(d, "experiment", "config")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    problem = _require(d, "problem", "config")
    if not isinstance(problem, Mapping):
        raise ConfigError("'problem' must be an object")
    grid = d.get("grid", {})
    Ns = tuple(int(n) for n in grid.get("N", DEFAULT_N))
    alphas = tuple(float(a) for a in grid.get("alpha", DEFAULT_ALPHA))
    default_R = DEFAULT_TIGHTNESS_TRIALS if kind == "tightness" else DEFAULT_TRIALS
    R = int(d.get("trials", default_R))
    seed = int(d.get("seed", 0))
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if R < 1:
        raise ConfigError("trials must be positive")
    if kind in BOUND_KINDS and R < MIN_TRIALS:
        raise ConfigError(f"{kind} needs at least {MIN_TRIALS} trials, got {R}")
    if kind != "multistage":
        if not Ns or any(n < 1 for n in Ns):
            raise ConfigError("grid N values must be positive integers")
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise ConfigError("alpha values must lie in [0, 1]")
    cfg = ExperimentConfig(kind, str(d.get("name", "")), problem, Ns, alphas, R, seed,
                           d.get("output"), d)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(d)


# ---------------------------------------------------------------- problems


def _laws(records, where: str) -> tuple:
    try:
        return tuple(rd.from_dict(r) for r in records)
    except rd.DistributionError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def objective_from_dict(d: Mapping[str, Any]) -> SeparableObjective:
    try:
        return SeparableObjective(tuple(d["c"]), tuple(d.get("weights", [1.0] * len(d["c"]))),
                                  d.get("loss", "square"), _laws(d["zeta"], "objective"))
    except KeyError as exc:
        raise ConfigError(f"objective: missing field {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"objective: {exc}") from None


def domain_from_dict(d: Mapping[str, Any]) -> ChainDomainSpec:
    try:
        return ChainDomainSpec.from_dict(d)
    except (ChainSpecError, rd.DistributionError) as exc:
        raise ConfigError(f"domain: {exc}") from None


def chain_problem(p: Mapping[str, Any], domain_key: str = "domain") -> StochasticProblem:
    dom = domain_from_dict(_require(p, domain_key, "problem"))
    obj = objective_from_dict(_require(p, "objective", "problem"))
    try:
        return StochasticProblem(dom, obj, np.asarray(p.get("lo", -10.0), float),
                                 np.asarray(p.get("hi", 10.0), float),
                                 p.get("A"), p.get("b"), p.get("name", ""))
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from None


def two_stage_problem(p: Mapping[str, Any]) -> TwoStageProblem:
    try:
        W = np.atleast_2d(np.asarray(p["W"], float))
        fam = RecourseFamily(W, np.asarray(p["T"], float), _laws(p["h"], "h"))
        return TwoStageProblem(fam, p["c"], p["g"], p.get("lo", 0.0), p.get("hi", 10.0),
                               p.get("A"), p.get("b"))
    except KeyError as exc:
        raise ConfigError(f"two-stage problem: missing field {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"two-stage problem: {exc}") from None


def multistage_problem(p: Mapping[str, Any]) -> MultistageProblem:
    try:
        r = p["root"]
        root = RootStage(np.asarray(r["A"], float), np.asarray(r["b"], float),
                         np.asarray(r["cost"], float))
        stages = [StageData(np.asarray(s["A"], float), np.asarray(s["B"], float),
                            _laws(s["b"], "stage"), np.asarray(s["cost"], float))
                  for s in p["stages"]]
        return MultistageProblem(root, tuple(stages))
    except KeyError as exc:
        raise ConfigError(f"multistage problem: missing field {exc}") from None
    except (TreeError, ValueError) as exc:
        raise ConfigError(f"multistage problem: {exc}") from None


def build(cfg: ExperimentConfig):
    """Problem object(s) for ``cfg``."""
    p = cfg.problem
    if cfg.kind == "tightness":
        return int(_require(p, "m", "problem"))
    if cfg.kind in ("bound_check", "interior_decay"):
        return chain_problem(p)
    if cfg.kind == "active_constraints":
        base = chain_problem(p)
        pert = chain_problem(p, "perturbed_domain") if "perturbed_domain" in p else None
        return base, pert
    if cfg.kind == "two_stage":
        return two_stage_problem(p)
    return multistage_problem(p)


def chain_count(cfg: ExperimentConfig, problem=None) -> int:
    problem = build(cfg) if problem is None else problem
    if cfg.kind == "tightness":
        return problem
    if cfg.kind in ("bound_check", "interior_decay"):
        return problem.domain.m
    if cfg.kind == "active_constraints":
        return problem[0].domain.m
    if cfg.kind == "two_stage":
        return problem.family.m
    return max(st.m for st in problem.stages)


def validate(cfg: ExperimentConfig):
    problem = build(cfg)
    m = chain_count(cfg, problem)
    if cfg.kind == "tightness":
        if m < 1:
            raise ConfigError("tightness needs m >= 1")
        bad = [a for a in cfg.alpha if a > 1.0 / m]
        if bad:
            raise ConfigError(f"tightness needs alpha <= 1/m = {1.0 / m:.4g}; got {bad}")
    if cfg.kind == "multistage":
        br = _require(cfg.problem, "branching", "problem")
        al = _require(cfg.problem, "alpha", "problem")
        if len(br) != problem.T - 1 or len(al) != problem.T - 1:
            raise ConfigError("branching and alpha need one entry per stage after the root")
        for st, N, a in zip(problem.stages, br, al):
            if not 1 <= int(N) <= 50:
                raise ConfigError("branching factors must lie in 1..50")
            if st.m > int(N):
                raise ConfigError(f"bound needs N_t >= m_t, got N={N} < m={st.m}")
            if not 0.0 <= float(a) <= 1.0:
                raise ConfigError("stage alpha must lie in [0, 1]")
        return
    if cfg.kind == "active_constraints":
        J = _require(cfg.problem, "active", "problem")
        if any(not 0 <= int(k) < m for k in J) or len(set(J)) != len(J):
            raise ConfigError("'active' must list distinct chain indices")
        base, pert = problem
        if pert is not None and pert.domain.m != m:
            raise ConfigError("perturbed domain must have the same number of chains")
    if cfg.kind != "interior_decay":
        small = [N for N in cfg.N if N < m]
        if small:
            raise ConfigError(f"bound evaluation needs N >= m = {m}; got N = {small}")


__all__ = [
    "BOUND_KINDS", "ConfigError", "DEFAULT_ALPHA", "DEFAULT_N", "ExperimentConfig", "KINDS",
    "build", "chain_count", "chain_problem", "config_from_dict", "domain_from_dict",
    "load_config", "multistage_problem", "objective_from_dict", "two_stage_problem",
]
