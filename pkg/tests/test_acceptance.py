"""End-to-end acceptance checks at full scale.

Each test carries a ``criterion`` marker; ``conftest.py`` prints one
PASS/FAIL line per criterion after the run.  Total runtime is roughly ten
minutes on one core.
"""

import json
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest
from scipy.optimize import linprog

from feaslab.bounds import binomial_tail, chernoff_estimate
from feaslab.experiments import config_from_dict, load_config, run, write_outputs
from feaslab.experiments.config import DEFAULT_ALPHA, DEFAULT_N, build
from feaslab.polyhedral.farkas import farkas_feasible, phase1_feasible
from feaslab.polyhedral.rays import enumerate_rays, in_cone, in_generated_cone

from instances import random_two_stage

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
BOUND_CONFIGS = sorted(CONFIGS.glob("bound_check_*.json"))


def mp_tail(m, N, alpha):
    mpmath.mp.dps = 50
    a = mpmath.mpf(alpha)
    return float(mpmath.fsum(mpmath.binomial(N, k) * a**k * (1 - a) ** (N - k) for k in range(m)))


def report(record_property, text):
    record_property("detail", text)
    print(text)


# ---------------------------------------------------------------- 1


@pytest.mark.criterion(1, "tightness of the binomial bound")
def test_tightness(record_property):
    lines, ok = [], True
    for m, N, a in ((1, 10, 0.1), (2, 20, 0.05), (3, 30, 0.1)):
        cfg = load_config(CONFIGS / f"tightness_m{m}.json")
        assert (cfg.N, cfg.alpha, cfg.trials) == ((N,), (a,), 100_000)
        t0 = time.perf_counter()
        cell = run(cfg).report["cells"][0]
        dt = time.perf_counter() - t0
        ref = mp_tail(m, N, a)
        assert cell["bound"] == pytest.approx(ref, rel=1e-12)
        z = abs(cell["p_hat"] - ref) / cell["stderr"]
        ok &= z <= 3 and dt <= 60
        lines.append(f"(m={m},N={N},a={a}) p={cell['p_hat']:.5f} bound={ref:.5f} "
                     f"|z|={z:.2f} {dt:.0f}s")
    report(record_property, "; ".join(lines))
    assert mp_tail(3, 30, 0.1) == pytest.approx(0.41135, abs=5e-6)
    assert ok


# ---------------------------------------------------------------- 2


@pytest.mark.criterion(2, "bound dominance on the chain catalog")
def test_bound_dominance(record_property):
    kinds = set()
    bad, cells = [], 0
    for path in BOUND_CONFIGS:
        cfg = load_config(path)
        assert cfg.N == DEFAULT_N and cfg.alpha == DEFAULT_ALPHA and cfg.trials == 10_000
        spec = build(cfg).domain
        kinds.add((spec.m, spec.independent_thresholds))
        res = run(cfg)
        cells += len(res.summary)
        for row in res.summary:
            for q in ("dfrak_r", "dxstar"):
                if row[f"freq_{q}"] > row["bound_binom"] + 3 * row[f"se_{q}"]:
                    bad.append((path.stem, row["N"], row["alpha"], q))
    report(record_property, f"{len(BOUND_CONFIGS)} problems, {cells} grid cells, "
                            f"{len(bad)} violations {bad[:3]}")
    assert len(BOUND_CONFIGS) >= 5
    assert {m for m, _ in kinds} == {1, 2, 4}
    assert {ind for _, ind in kinds} == {True, False}
    assert not bad


# ---------------------------------------------------------------- 3


@pytest.mark.criterion(3, "Chernoff estimate dominates the binomial tail")
def test_chernoff(record_property):
    checked, edge, bad = 0, 0, []
    for m in (1, 2, 3, 4):
        for N in DEFAULT_N:
            for a in DEFAULT_ALPHA:
                if N * a < m - 1:
                    continue
                c, b = chernoff_estimate(m, N, a), binomial_tail(m, N, a)
                checked += 1
                if abs(N * a - (m - 1)) <= 1e-9:
                    # zero exponent: the estimate is exactly 1
                    edge += 1
                    if abs(c - 1.0) > 1e-12 or c < b:
                        bad.append((m, N, a))
                elif not c > b * (1 + 1e-12):
                    bad.append((m, N, a))
    # explicit equality points Na = m - 1
    for m, N, a in ((2, 10, 0.1), (3, 20, 0.1), (4, 60, 0.05)):
        checked += 1
        edge += 1
        if abs(chernoff_estimate(m, N, a) - 1.0) > 1e-12:
            bad.append((m, N, a))
    report(record_property, f"{checked} points ({edge} with Na = m-1), {len(bad)} failures")
    assert not bad


# ---------------------------------------------------------------- 4


@pytest.mark.criterion(4, "Farkas test agrees with phase-1 simplex")
def test_farkas_vs_phase1(record_property):
    rng = np.random.default_rng(20240601)
    agree = feasible = highs_agree = 0
    for _ in range(1000):
        W, T, h, x = random_two_stage(rng)
        v = h - T @ x
        f = farkas_feasible(enumerate_rays(W), h, T, x)
        p = phase1_feasible(W, v)
        agree += f == p
        feasible += p
        r = linprog(np.zeros(W.shape[1]), A_eq=W, b_eq=v, bounds=(0, None), method="highs")
        highs_agree += (r.status == 0) == p
    report(record_property, f"{agree}/1000 agree ({feasible} feasible); "
                            f"HiGHS cross-check {highs_agree}/1000")
    assert 100 <= feasible <= 900
    assert agree == 1000


# ---------------------------------------------------------------- 5


def _same_rays(got, want):
    got = got / np.linalg.norm(got, axis=1, keepdims=True) if len(got) else got
    want = want / np.linalg.norm(want, axis=1, keepdims=True) if len(want) else want
    if len(got) != len(want):
        return False
    return all(np.min(np.linalg.norm(got - w, axis=1)) < 1e-9 for w in want)


@pytest.mark.criterion(5, "extreme ray enumeration")
def test_rays(record_property):
    rng = np.random.default_rng(5)
    catalog = []
    for d in (1, 2, 3, 5):
        catalog.append((f"I_{d}", np.eye(d), np.eye(d)))
    for d in (2, 3, 4):
        while True:
            W = rng.integers(-3, 4, (d, d)).astype(float)
            if abs(np.linalg.det(W)) > 0.5:
                break
        # a^T W >= 0 iff a = W^{-T} u, u >= 0: the rays are the rows of W^{-1}
        catalog.append((f"inv_{d}", W, np.linalg.inv(W)))
    for name, W in (("zero_1", [[1.0, -1.0]]), ("zero_2", np.hstack([np.eye(2), -np.eye(2)])),
                    ("zero_3", [[1.0, 0.0, 0.0, -1.0], [0.0, 1.0, 0.0, -1.0],
                                [0.0, 0.0, 1.0, -1.0]])):
        catalog.append((name, np.asarray(W), np.zeros((0, np.asarray(W).shape[0]))))
    mismatch, member_bad = [], 0
    for name, W, want in catalog:
        gen = enumerate_rays(W)
        if gen.lineality.shape[0] or not _same_rays(gen.rays, want):
            mismatch.append(name)
        d = W.shape[0]
        dirs = rng.normal(size=(500, d))
        if gen.n_rays:
            dirs = np.vstack([dirs, rng.exponential(size=(500, gen.n_rays)) @ gen.rays])
        else:
            dirs = np.vstack([dirs, rng.normal(size=(500, d))])
        member_bad += sum(in_cone(W, a) != in_generated_cone(gen, a) for a in dirs)
    report(record_property, f"{len(catalog)} cones, ray mismatches {mismatch}, "
                            f"membership disagreements {member_bad}/{1000 * len(catalog)}")
    assert not mismatch and member_bad == 0


# ---------------------------------------------------------------- 6


@pytest.mark.criterion(6, "interior decay of P{x* outside dom F}")
def test_interior_decay(record_property):
    cfg = load_config(CONFIGS / "interior_decay.json")
    assert cfg.N == (10, 20, 50, 100, 200)
    rep = run(cfg).report
    report(record_property, f"slope={rep['slope']:.4f} R^2={rep['r2']:.4f} "
                            f"points={[(n, round(p, 5)) for n, p in rep['points']]}")
    assert rep["slope"] < 0 and rep["r2"] >= 0.9


# ---------------------------------------------------------------- 7


@pytest.mark.criterion(7, "active-constraint refinement")
def test_active_constraints(record_property):
    cfg = load_config(CONFIGS / "active_constraints.json")
    res = run(cfg)
    assert res.report["m"] == 4 and res.report["J"] == 1
    rows = [r for r in res.summary if r["N"] >= 100 and r["alpha"] == 0.05]
    assert rows
    lines, ok = [], True
    for r in rows:
        b = binomial_tail(1, r["N"], 0.05)
        ok &= r["freq_dxstar"] <= b + 3 * r["se_dxstar"]
        lines.append(f"N={r['N']} p={r['freq_dxstar']:.2e} bound1={b:.2e}")
    report(record_property, "; ".join(lines)
           + f"; perturbation equal={res.report['perturbation_equal']}")
    assert ok


# ---------------------------------------------------------------- 8


@pytest.mark.criterion(8, "multistage per-stage and joint bounds")
def test_multistage(record_property):
    cfg = load_config(CONFIGS / "multistage.json")
    assert cfg.problem["branching"] == [10, 10] and cfg.trials == 1000
    assert build(cfg).T == 3
    t0 = time.perf_counter()
    rep = run(cfg).report
    dt = time.perf_counter() - t0
    report(record_property, f"stage dominance={rep['stage_dominance']} "
                            f"joint={rep['joint_freq']:.3f}+-{rep['joint_stderr']:.3f} "
                            f"product={rep['product_bound']:.4f} censored={rep['censored']} "
                            f"{dt:.0f}s")
    assert rep["stage_dominance"] and rep["joint_ok"] and dt <= 300


# ---------------------------------------------------------------- 9


@pytest.mark.criterion(9, "determinism across worker counts")
def test_determinism(tmp_path, record_property):
    names = []
    for stem, trials in (("two_stage", 250), ("bound_check_m2_comonotone", 500),
                         ("multistage", 100), ("tightness_m2", 2000)):
        d = json.loads((CONFIGS / f"{stem}.json").read_text())
        d["trials"] = trials
        cfg = config_from_dict(d)
        for k in (1, 8):
            write_outputs(run(cfg, threads=k), tmp_path / f"{stem}_{k}")
        for csv in sorted((tmp_path / f"{stem}_1").glob("*.csv")):
            same = csv.read_bytes() == (tmp_path / f"{stem}_8" / csv.name).read_bytes()
            names.append((f"{stem}/{csv.name}", same))
    report(record_property, ", ".join(f"{n}={'same' if s else 'DIFFERENT'}" for n, s in names))
    assert all(s for _, s in names)
