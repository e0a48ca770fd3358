import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from feaslab.chain import (EXACT, Affine, ChainDomainSpec, ChainSpecError,
                           DependentThresholdsError, MonteCarlo, Norm, Quadratic, ThresholdSample,
                           dfrak, dfrak_r, dof_domain, dof_point, domain_contains,
                           sample_thresholds)
from feaslab.rng import Discrete, Exponential, Normal, SeedSpec, StreamRole, Uniform, point_mass


def coord_spec(laws, independent=True):
    n = len(laws)
    fns = [Affine(np.eye(n)[k]) for k in range(n)]
    return ChainDomainSpec(n, tuple(zip(fns, laws)), independent)


def mc(M=100_000, seed=0):
    return MonteCarlo(M, SeedSpec(seed, 0, 0, StreamRole.ORACLE))


# ---------------------------------------------------------------- construction


def test_unbounded_below_threshold_rejected():
    with pytest.raises(ChainSpecError):
        coord_spec([Normal(0, 1)])


def test_empty_essential_domain_rejected():
    # x <= 0 and -x <= -1 cannot both hold at the essential infima
    fns = (Affine([1.0]), Affine([-1.0]))
    with pytest.raises(ChainSpecError):
        ChainDomainSpec(1, tuple(zip(fns, [Uniform(0, 1), Uniform(-1, 0)])))


def test_indefinite_quadratic_rejected():
    with pytest.raises(ChainSpecError):
        Quadratic([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0])


def test_dimension_mismatch_rejected():
    with pytest.raises(ChainSpecError):
        ChainDomainSpec(2, ((Affine([1.0]), Uniform(0, 1)),))


def test_round_trip_through_config_record():
    spec = ChainDomainSpec(2, ((Affine([1.0, 0.5], 0.1), Uniform(0, 1)),
                               (Quadratic([[1.0, 0.0], [0.0, 2.0]], [0.0, 1.0]), Exponential(1.0)),
                               (Norm([0.5, 0.0]), Uniform(1.0, 2.0))), False)
    again = ChainDomainSpec.from_dict(spec.to_dict())
    assert again == spec


# ---------------------------------------------------------------- sampling


def test_point_mass_thresholds_are_deterministic():
    spec = coord_spec([point_mass(0.5), point_mass(1.5)])
    s = sample_thresholds(spec, 1, SeedSpec(3))
    assert s.values.tolist() == [[0.5, 1.5]]


def test_minimum_of_uniforms_has_expected_mean():
    spec = coord_spec([Uniform(0, 1), Uniform(0, 1)])
    N, reps = 10_000, 400
    mins = np.array([sample_thresholds(spec, N, SeedSpec(1, r)).minima for r in range(reps)])
    mean = 1.0 / (N + 1)
    sd = math.sqrt(N / ((N + 1) ** 2 * (N + 2)))
    assert np.all(np.abs(mins.mean(axis=0) - mean) <= 3 * sd / math.sqrt(reps))


def test_same_seed_same_sample():
    spec = coord_spec([Uniform(0, 1), Exponential(1.0)])
    a = sample_thresholds(spec, 50, SeedSpec(8, 2))
    b = sample_thresholds(spec, 50, SeedSpec(8, 2))
    assert np.array_equal(a.values, b.values)


def test_comonotone_columns_share_ranks():
    spec = coord_spec([Uniform(0, 1), Exponential(2.0)], independent=False)
    v = sample_thresholds(spec, 200, SeedSpec(4)).values
    assert np.array_equal(np.argsort(v[:, 0]), np.argsort(v[:, 1]))


def test_sample_minima_must_match():
    with pytest.raises(ValueError):
        ThresholdSample(np.array([[1.0], [2.0]]), np.array([2.0]))


# ---------------------------------------------------------------- membership


def test_infinite_thresholds_contain_everything():
    spec = coord_spec([Uniform(0, 1), Uniform(0, 1)])
    assert domain_contains(spec, [1e6, -3.0], [math.inf, math.inf])


def test_boundary_is_feasible():
    spec = coord_spec([Uniform(0, 1)])
    assert domain_contains(spec, [0.5], [0.5])


def test_one_violated_coordinate():
    spec = coord_spec([Uniform(0, 1), Uniform(0, 1)])
    assert not domain_contains(spec, [0.31, 0.5], [0.3, 0.7])


def test_membership_dimension_mismatch():
    spec = coord_spec([Uniform(0, 1), Uniform(0, 1)])
    with pytest.raises(ValueError):
        domain_contains(spec, [0.1, 0.1], [0.3])
    with pytest.raises(ValueError):
        domain_contains(spec, [0.1], [0.3, 0.3])


# ---------------------------------------------------------------- probabilities


def test_point_inside_essential_domain():
    spec = coord_spec([Uniform(0, 1), Exponential(1.0)])
    assert dof_point(spec, [-1.0, 0.0]).value == 1.0


def test_one_chain_point():
    assert dof_point(coord_spec([Uniform(0, 1)]), [0.3]).value == pytest.approx(0.7)


def test_product_rule_point():
    assert dof_point(coord_spec([Uniform(0, 1)] * 2), [0.5, 0.5]).value == pytest.approx(0.25)


def test_atom_at_level_counts_as_feasible():
    spec = coord_spec([Discrete((0.0, 1.0), (0.5, 0.5))])
    assert dof_point(spec, [1.0]).value == pytest.approx(0.5)
    assert dof_point(spec, [0.0]).value == 1.0


def test_analytic_refuses_dependent_thresholds():
    spec = coord_spec([Uniform(0, 1)] * 2, independent=False)
    with pytest.raises(DependentThresholdsError):
        dof_point(spec, [0.5, 0.5])
    # comonotone: both exceed their levels iff U > max of the cdfs
    assert dof_point(spec, [0.5, 0.2], EXACT).value == pytest.approx(0.5)


def test_dfrak_r_at_essential_infima():
    spec = coord_spec([Uniform(0, 1), Exponential(1.0)])
    s = ThresholdSample(np.array([[0.0, 0.0], [0.5, 0.1]]))
    assert dfrak_r(spec, s).value == 1.0


def test_dfrak_r_one_chain():
    spec = coord_spec([Uniform(0, 1)])
    assert dfrak_r(spec, ThresholdSample(np.array([[0.2], [0.9]]))).value == pytest.approx(0.8)


def test_dfrak_r_product():
    spec = coord_spec([Uniform(0, 1)] * 2)
    s = ThresholdSample(np.array([[0.1, 0.9], [0.4, 0.5]]))
    assert dfrak_r(spec, s).value == pytest.approx(0.45)


def test_dof_domain_at_infimum_is_one():
    spec = coord_spec([Uniform(0, 1)])
    s = ThresholdSample(np.array([[0.0], [0.3]]))
    assert dof_domain(spec, s, mc(10_000)).value == 1.0


def test_dof_domain_monte_carlo_one_chain():
    spec = coord_spec([Uniform(0, 1)])
    est = dof_domain(spec, ThresholdSample(np.array([[0.2]])), mc(100_000, 5))
    assert abs(est.value - 0.8) <= 3 * est.stderr


def test_empty_saa_domain_is_contained_everywhere():
    fns = (Affine([1.0]), Affine([-1.0]))
    spec = ChainDomainSpec(1, tuple(zip(fns, [Uniform(0, 1), Uniform(0, 1)])))
    s = ThresholdSample(np.array([[0.1, -0.5]]))
    assert dof_domain(spec, s, EXACT).value == 1.0


def test_constant_chain_is_clipped_at_its_value():
    # c = 0 has sublevel set R^n for every t >= 0, so containment holds once l >= 0
    spec = ChainDomainSpec(1, ((Affine([0.0]), Uniform(0, 1)),))
    s = ThresholdSample(np.array([[0.3]]))
    assert dfrak_r(spec, s).value == pytest.approx(0.7)
    assert dfrak(spec, s).value == 1.0


# ---------------------------------------------------------------- independent D oracle


def _vertices(A, b):
    """Vertices of the 2-D polygon {x : A x <= b} by pairwise intersection."""
    out = []
    for i in range(len(b)):
        for j in range(i + 1, len(b)):
            M = A[[i, j]]
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            v = np.linalg.solve(M, b[[i, j]])
            if np.all(A @ v <= b + 1e-9):
                out.append(v)
    return np.array(out)


def _sup_levels_1d(spec, minima, grid):
    vals = np.array([[f.value(np.array([x])) for f in spec.fns] for x in grid])
    inside = np.all(vals <= minima, axis=1)
    return vals[inside].max(axis=0) if inside.any() else None


def _sup_levels_polygon(spec, minima):
    A = np.array([f.a for f in spec.fns])
    b = np.asarray(minima) - np.array([f.b for f in spec.fns])
    V = _vertices(A, b)
    return None if V.size == 0 else (V @ A.T + np.array([f.b for f in spec.fns])).max(axis=0)


ORACLE_SPECS = [
    ChainDomainSpec(1, ((Affine([1.0]), Uniform(0, 1)), (Affine([-1.0]), Uniform(0, 1)),
                        (Norm([0.2]), Uniform(0.5, 1.0)),
                        (Quadratic([[1.0]], [0.0]), Uniform(0.25, 1.0)))),
    ChainDomainSpec(1, ((Affine([1.0]), Uniform(0, 1)), (Affine([-1.0]), Exponential(1.0)),
                        (Quadratic([[1.0]], [-1.0]), Uniform(0.0, 0.5)),
                        (Norm([0.0]), Uniform(0.5, 1.5))), False),
    ChainDomainSpec(2, ((Affine([1.0, 1.0]), Uniform(0, 1)), (Affine([-1.0, 0.0]), Uniform(0, 1)),
                        (Affine([0.0, -1.0]), Uniform(0, 1)),
                        (Affine([1.0, -1.0]), Uniform(0.5, 1.5)))),
]


@pytest.mark.parametrize("k", range(len(ORACLE_SPECS)))
def test_dof_domain_matches_brute_force_containment(k):
    from feaslab.chain import threshold_matrix

    spec = ORACLE_SPECS[k]
    grid = np.linspace(-3, 3, 60_001)
    rng = np.random.default_rng(k)
    for r in range(6):
        s = sample_thresholds(spec, 5, SeedSpec(40 + k, r))
        if spec.dim == 1:
            sup = _sup_levels_1d(spec, s.minima, grid)
        else:
            sup = _sup_levels_polygon(spec, s.minima)
        draws = threshold_matrix(spec, 20_000, rng)
        hits = np.ones(len(draws), bool) if sup is None else np.all(draws >= sup - 1e-4, axis=1)
        p = hits.mean()
        se = math.sqrt(max(p * (1 - p), 1e-4) / hits.size)
        exact = dof_domain(spec, s, EXACT).value
        assert abs(exact - p) <= 4 * se + 1e-3


# ---------------------------------------------------------------- invariants


def _random_spec(rng, independent):
    m = int(rng.integers(1, 4))
    laws = [Uniform(0, 1), Exponential(2.0), Discrete((0.0, 0.3, 1.0), (0.2, 0.3, 0.5)),
            Uniform(0.5, 1.5)]
    chains = []
    for _ in range(m):
        kind = rng.integers(3)
        if kind == 0:
            fn = Affine(rng.normal(size=2).round(2))
        elif kind == 1:
            fn = Norm(rng.normal(size=2).round(2) * 0.1)
        else:
            fn = Quadratic(np.eye(2), rng.normal(size=2).round(2) * 0.1, -0.5)
        chains.append((fn, laws[int(rng.integers(len(laws)))]))
    try:
        return ChainDomainSpec(2, tuple(chains), independent)
    except ChainSpecError:
        return None


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans(), st.integers(1, 30))
def test_ordering_chain(seed, independent, N):
    rng = np.random.default_rng(seed)
    spec = _random_spec(rng, independent)
    if spec is None:
        return
    s = sample_thresholds(spec, N, SeedSpec(seed, 1))
    r = dfrak_r(spec, s, EXACT).value
    f = dfrak(spec, s, EXACT).value
    D = dof_domain(spec, s, EXACT).value
    assert r <= f + 1e-12
    assert f <= D + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 20))
def test_point_in_saa_domain_dominates_D(seed, N):
    spec = coord_spec([Uniform(0, 1), Exponential(1.0), Uniform(-1, 1)])
    s = sample_thresholds(spec, N, SeedSpec(seed))
    rng = np.random.default_rng(seed)
    x = s.minima - rng.random(3) * 0.5
    assert domain_contains(spec, x, s.minima)
    assert dof_point(spec, x).value >= dof_domain(spec, s, EXACT).value - 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30))
def test_permutation_invariance(seed, N):
    spec = coord_spec([Uniform(0, 1), Exponential(1.0)], independent=bool(seed % 2))
    s = sample_thresholds(spec, N, SeedSpec(seed))
    order = np.random.default_rng(seed).permutation(N)
    p = s.permuted(order)
    assert dfrak_r(spec, s, EXACT) == dfrak_r(spec, p, EXACT)
    assert dof_domain(spec, s, EXACT) == dof_domain(spec, p, EXACT)
    assert dof_domain(spec, s, mc(500)) == dof_domain(spec, p, mc(500))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 30))
def test_appending_rows_never_decreases_dfrak_r(seed, N, extra):
    spec = coord_spec([Uniform(0, 1), Exponential(1.0)])
    s = sample_thresholds(spec, N, SeedSpec(seed, 0))
    t = s.append(sample_thresholds(spec, extra, SeedSpec(seed, 1)))
    # smaller minima are exceeded more often
    assert np.all(t.minima <= s.minima)
    assert dfrak_r(spec, t).value >= dfrak_r(spec, s).value


def test_analytic_agrees_with_monte_carlo():
    rng = np.random.default_rng(17)
    checked = 0
    for i in range(40):
        spec = _random_spec(rng, independent=bool(i % 2))
        if spec is None:
            continue
        s = sample_thresholds(spec, int(rng.integers(1, 10)), SeedSpec(i))
        for fn in (dfrak_r, dof_domain):
            exact = fn(spec, s, EXACT).value
            est = fn(spec, s, mc(20_000, i))
            assert abs(exact - est.value) <= 4 * est.stderr
        x = rng.normal(size=2) * 0.3
        exact = dof_point(spec, x, EXACT).value
        est = dof_point(spec, x, mc(20_000, i + 1000))
        assert abs(exact - est.value) <= 4 * est.stderr
        checked += 1
    assert checked >= 20
