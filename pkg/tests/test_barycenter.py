import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from baryaug import ot
from baryaug.barycenter import (BarycentricCoordinates, batch_barycenters,
                                free_support_barycenter, matched_costs, ordered_barycenter,
                                permutation_table, sample_dirichlet)
from baryaug.errors import InputError
from baryaug.measures import PointCloud, make_uniform_cloud, support_diameter

from oracles import fixed_point_barycenter


def clouds(rng, k, s, spread=1.0, ordered=False):
    return [make_uniform_cloud(rng.normal(size=(s, 2)) * spread, ordered) for _ in range(k)]


# coordinates

def test_coordinates_checked():
    with pytest.raises(InputError):
        BarycentricCoordinates(np.array([0.5, 0.6]))
    with pytest.raises(InputError):
        BarycentricCoordinates(np.array([1.5, -0.5]))
    with pytest.raises(InputError):
        BarycentricCoordinates(np.array([]))
    assert BarycentricCoordinates(np.array([0.25, 0.75])).tolist() == [0.25, 0.75]


def test_dirichlet_single_vertex():
    assert sample_dirichlet(1, np.random.default_rng(0)).tolist() == [1.0]
    with pytest.raises(InputError):
        sample_dirichlet(0, np.random.default_rng(0))


def test_dirichlet_mean():
    rng = np.random.default_rng(1)
    lam = np.array([sample_dirichlet(3, rng).values for _ in range(100_000)])
    np.testing.assert_allclose(lam.mean(0), 1 / 3, atol=0.01)


def test_dirichlet_two_is_uniform():
    rng = np.random.default_rng(2)
    first = np.array([sample_dirichlet(2, rng).values[0] for _ in range(100_000)])
    assert stats.kstest(first, "uniform").statistic < 0.01


def test_dirichlet_deterministic():
    a = sample_dirichlet(4, np.random.default_rng(9)).values
    b = sample_dirichlet(4, np.random.default_rng(9)).values
    assert np.array_equal(a, b)


# free support

def test_single_measure():
    m = make_uniform_cloud(np.random.default_rng(3).normal(size=(6, 2)))
    res = free_support_barycenter([m], [1.0])
    assert ot.w2_exact(res.cloud, m)[0] <= 1e-9
    assert res.converged


def test_dirac_midpoint():
    a, b = make_uniform_cloud([(0, 0)]), make_uniform_cloud([(2, 0)])
    res = free_support_barycenter([a, b], [0.5, 0.5], support_size=1)
    np.testing.assert_allclose(res.cloud.points, [[1.0, 0.0]], atol=1e-12)


def test_translate_family_closed_form(rng):
    base = rng.normal(size=(5, 2))
    t = rng.normal(size=(3, 2)) * 0.1
    lam = np.array([0.2, 0.5, 0.3])
    ms = [make_uniform_cloud(base + ti) for ti in t]
    res = free_support_barycenter(ms, lam)
    want = make_uniform_cloud(base + lam @ t)
    assert ot.w2_exact(res.cloud, want)[0] <= 1e-6


@pytest.mark.parametrize("seed", range(8))
def test_matches_enumeration_oracle(seed):
    rng = np.random.default_rng(seed)
    k, s = int(rng.integers(2, 5)), int(rng.integers(1, 6))
    ms = clouds(rng, k, s)
    lam = rng.dirichlet(np.ones(k))
    res = free_support_barycenter(ms, lam, tol=1e-13, max_iter=200)
    want = np.array(fixed_point_barycenter([m.points.tolist() for m in ms], lam.tolist()))
    np.testing.assert_allclose(res.cloud.points, want, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_one_hot_returns_vertex(seed):
    rng = np.random.default_rng(seed)
    ms = clouds(rng, 4, 6)
    diam = support_diameter(*ms)
    for i in range(4):
        res = free_support_barycenter(ms, np.eye(4)[i])
        assert ot.w2_exact(res.cloud, ms[i])[0] <= 1e-6 * diam


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_objective_trace_monotone(k, s, seed):
    rng = np.random.default_rng(seed)
    res = free_support_barycenter(clouds(rng, k, s), rng.dirichlet(np.ones(k)))
    tr = np.array(res.trace)
    assert np.all(np.diff(tr) <= 1e-9)
    assert res.objective >= 0


def test_translation_equivariance(rng):
    ms = clouds(rng, 3, 5)
    lam = [0.3, 0.3, 0.4]
    t = np.array([12.5, -3.0])
    a = free_support_barycenter(ms, lam).cloud.points
    b = free_support_barycenter([m.translate(t) for m in ms], lam).cloud.points
    np.testing.assert_allclose(b, a + t, atol=1e-9)


def test_permutation_invariance(rng):
    ms = clouds(rng, 4, 5)
    lam = np.array([0.1, 0.2, 0.3, 0.4])
    perm = [2, 0, 3, 1]
    a = free_support_barycenter(ms, lam).cloud.points
    b = free_support_barycenter([ms[i] for i in perm], lam[perm]).cloud.points
    np.testing.assert_allclose(b, a, atol=1e-12)


def test_agrees_with_ordered_when_identity_optimal(rng):
    base = rng.normal(size=(6, 2)) * 5
    ms = [make_uniform_cloud(base + rng.normal(size=(6, 2)) * 0.05, ordered=True)
          for _ in range(3)]
    for a in ms:
        for b in ms:
            P = ot.w2_exact(a, b)[1].matrix
            assert np.allclose(P, np.eye(6) / 6)
    lam = [0.5, 0.25, 0.25]
    want = ordered_barycenter(ms, lam)
    res = free_support_barycenter(ms, lam, init="mean")
    np.testing.assert_allclose(res.cloud.points, want.points, atol=1e-6)


def test_init_strategies(rng):
    ms = clouds(rng, 3, 4, spread=0.1)
    lam = [0.2, 0.5, 0.3]
    for init in ("largest", "mean", "random"):
        res = free_support_barycenter(ms, lam, init=init, rng=np.random.default_rng(0))
        assert res.converged
    with pytest.raises(InputError):
        free_support_barycenter(ms, lam, init="random")
    with pytest.raises(InputError):
        free_support_barycenter(ms, lam, init="median")


def test_unequal_sizes_and_support(rng):
    a = make_uniform_cloud(rng.normal(size=(3, 2)))
    b = make_uniform_cloud(rng.normal(size=(6, 2)))
    res = free_support_barycenter([a, b], [0.5, 0.5], support_size=6)
    assert res.cloud.size == 6
    assert np.all(np.diff(res.trace) <= 1e-9)


def test_large_clouds_use_sinkhorn(rng):
    ms = clouds(rng, 2, 70, spread=0.1)
    res = free_support_barycenter(ms, [0.5, 0.5], max_iter=5)
    assert res.cloud.size == 70
    assert np.all(np.isfinite(res.cloud.points))


def test_nonconvergence_flagged(rng):
    res = free_support_barycenter(clouds(rng, 3, 6), [0.2, 0.3, 0.5], max_iter=1, tol=1e-15)
    assert not res.converged and res.iterations == 1


def test_free_support_errors(rng):
    ms = clouds(rng, 2, 3)
    with pytest.raises(InputError):
        free_support_barycenter(ms, [1.0])
    with pytest.raises(InputError):
        free_support_barycenter([], [])
    bad = PointCloud([(0, 0)], [0.5])
    with pytest.raises(InputError, match="measure 1"):
        free_support_barycenter([ms[0], bad], [0.5, 0.5])


# ordered

def test_ordered_one_hot_and_midpoint():
    a = make_uniform_cloud([(0, 0), (2, 2)], ordered=True)
    b = make_uniform_cloud([(4, 0), (0, 2)], ordered=True)
    assert ordered_barycenter([a, b], [1.0, 0.0]) == a
    mid = ordered_barycenter([a, b], [0.5, 0.5])
    np.testing.assert_array_equal(mid.points, [[2, 0], [1, 2]])


def test_ordered_translate_family_exact():
    base = np.array([(0.0, 0.0), (1.0, 0.0), (0.5, 2.0)])
    t = np.array([(1.0, 0.0), (0.0, 2.0), (-1.0, -1.0)])
    lam = np.array([0.25, 0.25, 0.5])
    out = ordered_barycenter([make_uniform_cloud(base + ti, ordered=True) for ti in t], lam)
    np.testing.assert_array_equal(out.points, base + lam @ t)


def test_ordered_errors():
    a = make_uniform_cloud([(0, 0)], ordered=True)
    with pytest.raises(InputError):
        ordered_barycenter([a, make_uniform_cloud([(0, 0)])], [0.5, 0.5])
    with pytest.raises(InputError):
        ordered_barycenter([a, make_uniform_cloud([(0, 0), (1, 1)], ordered=True)], [0.5, 0.5])


# batched path

def test_matched_costs_against_solver(rng):
    X = rng.normal(size=(20, 4, 2))
    Y = rng.normal(size=(4, 2))
    costs, _ = matched_costs(X, Y, permutation_table(4))
    for x, c in zip(X, costs):
        assert c == pytest.approx(ot.w2_exact(make_uniform_cloud(x), make_uniform_cloud(Y))[0] ** 2)


def test_batch_matches_single(rng):
    ms = clouds(rng, 3, 4)
    lams = rng.dirichlet(np.ones(3), size=25)
    out = batch_barycenters(ms, lams)
    for lam, X in zip(lams, out):
        np.testing.assert_allclose(X, free_support_barycenter(ms, lam).cloud.points, atol=1e-9)


def test_batch_fallback_for_large(rng):
    ms = clouds(rng, 2, 7)
    lams = rng.dirichlet(np.ones(2), size=3)
    out = batch_barycenters(ms, lams)
    assert out.shape == (3, 7, 2)
