import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from feaslab.polyhedral import (ConeSizeError, UnboundedRecourseError, enumerate_rays,
                                farkas_feasible, in_cone, in_generated_cone, is_minimal,
                                phase1_feasible, second_stage_value)

from instances import random_two_stage


def same_ray_set(A, B, tol=1e-9):
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    if A.shape[0] != B.shape[0]:
        return False
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    B = B / np.linalg.norm(B, axis=1, keepdims=True)
    return all(np.min(np.linalg.norm(B - a, axis=1)) <= tol for a in A)


# ---------------------------------------------------------------- rays


@pytest.mark.parametrize("d", [1, 2, 5])
def test_identity_gives_standard_basis(d):
    g = enumerate_rays(np.eye(d))
    assert same_ray_set(g.rays, np.eye(d))
    assert g.lineality.shape[0] == 0


def test_opposite_columns_give_zero_cone():
    g = enumerate_rays([[1.0, -1.0]])
    assert g.n_rays == 0 and g.lineality.shape[0] == 0
    assert g.is_trivial


def test_invertible_two_by_two():
    g = enumerate_rays([[1.0, 1.0], [0.0, 1.0]])
    assert same_ray_set(g.rays, [[1.0, -1.0], [0.0, 1.0]])
    assert np.allclose(np.linalg.norm(g.rays, axis=1), 1.0)


def test_invertible_rays_are_columns_of_inverse_transpose():
    rng = np.random.default_rng(3)
    for _ in range(20):
        d = int(rng.integers(2, 6))
        W = rng.normal(size=(d, d))
        if abs(np.linalg.det(W)) < 0.1:
            continue
        g = enumerate_rays(W)
        # a^T W = b^T >= 0  <=>  a = W^{-T} b, so the rays are the columns of W^{-T}
        assert same_ray_set(g.rays, np.linalg.inv(W), tol=1e-7)


def test_zero_matrix_is_all_lineality():
    g = enumerate_rays(np.zeros((3, 2)))
    assert g.n_rays == 0
    assert g.lineality.shape[0] == 3
    assert np.allclose(g.lineality @ g.lineality.T, np.eye(3))


def test_rank_deficient_has_lineality():
    # a^T W >= 0 only constrains a_1; a_2 is free
    g = enumerate_rays([[1.0, 2.0], [0.0, 0.0]])
    assert same_ray_set(g.rays, [[1.0, 0.0]])
    assert same_ray_set(g.lineality, [[0.0, 1.0]])


def test_size_limit():
    with pytest.raises(ConeSizeError):
        enumerate_rays(np.eye(13))
    with pytest.raises(ConeSizeError):
        enumerate_rays(np.ones((2, 25)))


def test_non_finite_input_rejected():
    with pytest.raises(ValueError):
        enumerate_rays([[np.inf, 1.0]])


def test_many_rays_pyramid():
    # the cone {a : a^T W >= 0} for W = rows of a square pyramid is the pyramid's dual
    W = np.array([[1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0], [1.0, 1.0, 1.0, 1.0]])
    g = enumerate_rays(W)
    assert g.n_rays == 4
    assert is_minimal(g)


def _cone_checks(W, rng, n_dirs):
    g = enumerate_rays(W)
    for r in g.rays:
        assert np.all(r @ W >= -1e-9)
    for ell in g.lineality:
        assert np.allclose(ell @ W, 0.0, atol=1e-9)
    assert is_minimal(g)
    d = W.shape[0]
    for _ in range(n_dirs):
        a = rng.normal(size=d)
        if rng.random() < 0.5 and g.n_rays:
            # land exactly on a face to exercise the boundary
            a = rng.random(g.n_rays) @ g.rays
            if g.lineality.shape[0]:
                a = a + rng.normal(size=g.lineality.shape[0]) @ g.lineality
        assert in_cone(W, a, tol=1e-7) == in_generated_cone(g, a)
    return g


def test_random_cones_membership():
    rng = np.random.default_rng(11)
    for _ in range(30):
        d = int(rng.integers(1, 5))
        p = int(rng.integers(1, 7))
        W = rng.integers(-2, 3, (d, p)).astype(float)
        _cone_checks(W, rng, 30)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_removing_any_ray_shrinks_the_cone(seed):
    rng = np.random.default_rng(seed)
    W = rng.integers(-2, 3, (3, int(rng.integers(1, 6)))).astype(float)
    g = enumerate_rays(W)
    assert is_minimal(g)


# ---------------------------------------------------------------- Farkas


def test_complete_recourse_always_feasible():
    g = enumerate_rays([[1.0, -1.0]])
    for h in (-5.0, 0.0, 3.0):
        assert farkas_feasible(g, [h], [[1.0]], [0.7])


def test_single_ray_negative_rhs():
    g = enumerate_rays([[1.0]])
    assert not farkas_feasible(g, [-1.0], [[1.0]], [0.0])
    assert not phase1_feasible([[1.0]], [-1.0])


def test_identity_is_componentwise():
    g = enumerate_rays(np.eye(2))
    T = np.eye(2)
    for h in ([1.0, 1.0], [1.0, -0.5], [-0.1, 2.0], [0.0, 0.0]):
        x = np.array([0.5, 0.25])
        expect = bool(np.all(np.array(h) - x >= 0))
        assert farkas_feasible(g, h, T, x) == expect == phase1_feasible(np.eye(2), np.array(h) - x)


def test_dimension_mismatch():
    g = enumerate_rays(np.eye(2))
    with pytest.raises(ValueError):
        farkas_feasible(g, [1.0, 1.0, 1.0], np.eye(3), [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        farkas_feasible(g, [1.0, 1.0], np.eye(2), [0.0])


def test_farkas_agrees_with_phase_one():
    rng = np.random.default_rng(5)
    hits = [0, 0]
    for _ in range(400):
        W, T, h, x = random_two_stage(rng)
        g = enumerate_rays(W)
        ours = farkas_feasible(g, h, T, x)
        assert ours == phase1_feasible(W, h - T @ x)
        hits[ours] += 1
    assert min(hits) > 50


def test_nested_feasible_sets_along_a_chain():
    # feasibility in x for h and h' with r^T h <= r^T h' for every ray is nested
    W = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    T = np.eye(2)
    g = enumerate_rays(W)
    h_small, h_big = np.array([0.5, 0.3]), np.array([1.0, 0.9])
    assert np.all(g.rays @ h_small <= g.rays @ h_big)
    rng = np.random.default_rng(0)
    for x in rng.uniform(-1, 2, (300, 2)):
        if farkas_feasible(g, h_small, T, x):
            assert farkas_feasible(g, h_big, T, x)


# ---------------------------------------------------------------- second stage


def test_zero_cost_feasible_value():
    assert second_stage_value(np.eye(2), np.eye(2), [1.0, 1.0], [0.0, 0.0], [0.5, 0.5]) == 0.0


def test_single_variable_value():
    assert second_stage_value([[1.0]], [[1.0]], [2.0], [1.0], [0.5]) == pytest.approx(1.5)


def test_infeasible_is_infinite():
    assert second_stage_value([[1.0]], [[1.0]], [-1.0], [1.0], [0.0]) == math.inf


def test_unbounded_second_stage_raises():
    with pytest.raises(UnboundedRecourseError):
        second_stage_value([[1.0, -1.0]], [[1.0]], [0.0], [-1.0, 0.0], [0.0])


def test_second_stage_is_convex_in_x():
    rng = np.random.default_rng(2)
    checked = 0
    for _ in range(300):
        d, p, n = 2, 4, 2
        W = rng.integers(-2, 3, (d, p)).astype(float)
        T = rng.normal(size=(d, n))
        h = rng.normal(size=d)
        g = rng.random(p)
        x0, x1 = rng.normal(size=n), rng.normal(size=n)
        try:
            f0 = second_stage_value(W, T, h, g, x0)
            f1 = second_stage_value(W, T, h, g, x1)
            fm = second_stage_value(W, T, h, g, 0.5 * (x0 + x1))
        except UnboundedRecourseError:
            continue
        if math.isinf(f0) or math.isinf(f1):
            continue
        assert fm <= 0.5 * (f0 + f1) + 1e-7
        checked += 1
    assert checked > 50
