import numpy as np
import pytest

from feaslab.chain import MonteCarlo
from feaslab.recourse import RecourseFamily, family_from_stage
from feaslab.rng import Exponential, SeedSpec, StreamRole, Uniform, point_mass


def mc(M=50_000, seed=0):
    return MonteCarlo(M, SeedSpec(seed, 0, 0, StreamRole.ORACLE))


def test_identity_recourse_has_one_chain_per_row():
    fam = RecourseFamily(np.eye(2), np.eye(2), (Uniform(1, 2), Uniform(0, 1)))
    assert fam.m == 2
    assert fam.factorizes


def test_complete_recourse_has_no_chains():
    fam = RecourseFamily([[1.0, -1.0]], [[1.0]], (Uniform(0, 1),))
    assert fam.m == 0
    assert fam.dof_point([5.0]).value == 1.0
    assert fam.dfrak_r(np.array([[0.3]])).value == 1.0


def test_lineality_counts_as_two_chains():
    # second row of W is zero: its component of h - T x must vanish exactly
    fam = RecourseFamily([[1.0, 2.0], [0.0, 0.0]], np.eye(2), (Uniform(1, 2), point_mass(0.0)))
    assert fam.gen.n_rays == 1 and fam.gen.lineality.shape[0] == 1
    assert fam.m == 3
    assert fam.dof_point([0.5, 0.0]).value == 1.0
    assert fam.dof_point([0.5, 0.1]).value == 0.0


def test_law_count_must_match_rows():
    with pytest.raises(ValueError):
        RecourseFamily(np.eye(2), np.eye(2), (Uniform(0, 1),))


def test_point_probability_is_product_of_interval_probabilities():
    fam = RecourseFamily(np.eye(2), np.eye(2), (Uniform(1, 2), Exponential(1.0)))
    # need h1 >= 1.25 and h2 >= 0.5
    assert fam.dof_point([1.25, 0.5]).value == pytest.approx(0.75 * np.exp(-0.5))


def test_mixed_rays_need_monte_carlo():
    # the ray (1, -1)/sqrt2 mixes both random components
    fam = RecourseFamily([[1.0, 1.0], [0.0, 1.0]], np.eye(2), (Uniform(0, 1), Uniform(0, 1)))
    assert not fam.factorizes
    with pytest.raises(ValueError):
        fam.dof_point([0.0, 0.0])
    est = fam.dof_point([0.0, 0.0], mc())
    # feasible iff h1 >= h2 (first ray) and h2 >= 0 (second): probability 1/2
    assert abs(est.value - 0.5) <= 4 * est.stderr


@pytest.mark.parametrize("seed", range(5))
def test_analytic_matches_monte_carlo(seed):
    rng = np.random.default_rng(seed)
    fam = RecourseFamily(np.eye(2), rng.normal(size=(2, 2)), (Uniform(0, 2), Exponential(0.5)))
    H = fam.sample_h(10, SeedSpec(seed).generator())
    for fn, arg in ((fam.dfrak_r, H), (fam.dof_domain, H), (fam.dof_point, rng.normal(size=2))):
        exact = fn(arg).value
        est = fn(arg, mc(40_000, seed))
        assert abs(exact - est.value) <= 4 * est.stderr


@pytest.mark.parametrize("seed", range(5))
def test_domain_containment_dominates_dfrak_r(seed):
    fam = RecourseFamily(np.eye(2), [[1.0, 0.5], [0.0, 1.0]], (Uniform(1, 2), Uniform(0.5, 1.5)))
    H = fam.sample_h(8, SeedSpec(seed).generator())
    assert fam.dof_domain(H).value >= fam.dfrak_r(H).value - 1e-12


def test_chain_thresholds_reproduce_farkas_feasibility():
    fam = RecourseFamily([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]], [[1.0], [2.0]],
                         (Uniform(0, 2), Uniform(0, 2)))
    rng = np.random.default_rng(1)
    for _ in range(300):
        x = rng.uniform(-1, 2, 1)
        h = rng.uniform(0, 2, 2)
        by_chain = bool(np.all(fam.levels(x) <= fam.thresholds(h[None, :])[0] + 1e-8))
        assert by_chain == fam.feasible(x, h)


def test_saa_domain_rows_are_intersection_of_sample_domains():
    fam = RecourseFamily(np.eye(2), np.eye(2), (Uniform(0, 1), Uniform(0, 1)))
    H = np.array([[0.3, 0.9], [0.6, 0.2]])
    A, b = fam.saa_domain_rows(H)
    x = np.array([0.3, 0.2])
    assert np.all(A @ x <= b + 1e-12)
    assert all(fam.feasible(x, h) for h in H)
    assert not fam.feasible(x + [1e-3, 0.0], H[0])


def test_stage_family_uses_previous_decision():
    fam = family_from_stage([[1.0]], [[1.0]], (Uniform(1, 2),))
    assert fam.dof_point([1.5]).value == pytest.approx(0.5)
