import csv
import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from mflab.transport import (
    EmpiricalMeasure,
    GaussianMeasure,
    ResourceCapError,
    TransportPlan,
    coordinate_projection,
    coupled_cost,
    cost_matrix,
    distance_to_point,
    kantorovich_potential,
    kr_dual_certificate,
    mk2_gaussian,
    mk_distance,
    random_max_affine,
)


def _brute_force(x, y, p):
    c = cost_matrix(x, y, p)
    n = len(x)
    best = min(c[np.arange(n), list(perm)].sum() for perm in itertools.permutations(range(n)))
    return (best / n) ** (1.0 / p)


@st.composite
def point_pairs(draw, max_n=7):
    n = draw(st.integers(1, max_n))
    d = draw(st.integers(1, 3))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), rng.normal(size=(n, d))


@given(point_pairs(), st.sampled_from([1, 2]))
def test_matches_exhaustive_permutations(pair, p):
    x, y = pair
    dist, plan = mk_distance(EmpiricalMeasure(x), EmpiricalMeasure(y), p)
    assert dist == pytest.approx(_brute_force(x, y, p), rel=1e-12, abs=1e-12)
    plan.check(1e-12)


@given(point_pairs(max_n=6))
def test_lp_and_assignment_agree(pair):
    mu, nu = EmpiricalMeasure(pair[0]), EmpiricalMeasure(pair[1])
    a = mk_distance(mu, nu, 1, method="assignment")[0]
    b = mk_distance(mu, nu, 1, method="lp")[0]
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 12))
def test_one_dimensional_weighted_matches_quantile_formula(seed, n, m):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=n), rng.normal(size=m)
    a, b = rng.random(n) + 0.1, rng.random(m) + 0.1
    mu = EmpiricalMeasure.normalized(x[:, None], a)
    nu = EmpiricalMeasure.normalized(y[:, None], b)
    ref = wasserstein_distance(x, y, a, b)
    assert mk_distance(mu, nu, 1)[0] == pytest.approx(ref, rel=1e-8, abs=1e-10)


@given(point_pairs(max_n=5), point_pairs(max_n=5))
def test_metric_axioms(p1, p2):
    x, y = p1
    z = p2[0]
    if z.shape[1] != x.shape[1]:
        z = np.resize(z, (z.shape[0], x.shape[1]))
    mx, my, mz = EmpiricalMeasure(x), EmpiricalMeasure(y), EmpiricalMeasure(z)
    dxy = mk_distance(mx, my, 1)[0]
    assert dxy == pytest.approx(mk_distance(my, mx, 1)[0], abs=1e-12)
    assert mk_distance(mx, mx, 1)[0] == pytest.approx(0.0, abs=1e-12)
    assert dxy <= mk_distance(mx, mz, 1)[0] + mk_distance(mz, my, 1)[0] + 1e-9


def test_mk1_le_mk2_and_sum_ground_sandwich():
    rng = np.random.default_rng(3)
    mu = EmpiricalMeasure(rng.normal(size=(30, 4)))
    nu = EmpiricalMeasure(rng.normal(size=(30, 4)) + 0.5)
    d1 = mk_distance(mu, nu, 1)[0]
    assert d1 <= mk_distance(mu, nu, 2)[0] + 1e-12
    ds = mk_distance(mu, nu, 1, ground="sum")[0]
    assert d1 - 1e-12 <= ds <= np.sqrt(2) * d1 + 1e-12


def test_translation_distance_exact():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(20, 3))
    shift = np.array([0.3, -0.4, 1.2])
    for p in (1, 2):
        d, _ = mk_distance(EmpiricalMeasure(x), EmpiricalMeasure(x + shift), p)
        assert d == pytest.approx(np.linalg.norm(shift), rel=1e-10)


def test_gaussian_closed_form_matches_samples():
    rng = np.random.default_rng(5)
    g1 = GaussianMeasure([0.0, 0.0], [[1.0, 0.3], [0.3, 0.5]])
    g2 = GaussianMeasure([1.0, -0.5], [[0.7, -0.2], [-0.2, 1.2]])
    exact = mk2_gaussian(g1, g2)
    vals = [mk_distance(g1.sample(400, rng), g2.sample(400, rng), 2)[0] ** 2 for _ in range(12)]
    # the empirical estimator is biased upward by O(N^{-1/2}) in 2-d
    assert np.mean(vals) >= exact**2 - 3 * np.std(vals, ddof=1) / np.sqrt(len(vals))
    assert np.mean(vals) == pytest.approx(exact**2, rel=0.1)


def test_gaussian_closed_form_commuting_case():
    # diagonal covariances: MK2^2 = |m1 - m2|^2 + sum (sqrt(a_i) - sqrt(b_i))^2
    g1 = GaussianMeasure([1.0, 2.0], np.diag([4.0, 1.0]))
    g2 = GaussianMeasure([0.0, 0.0], np.diag([1.0, 9.0]))
    assert mk2_gaussian(g1, g2) == pytest.approx(np.sqrt(5 + 1 + 4))


def test_kantorovich_potential_attains_mk1():
    rng = np.random.default_rng(6)
    mu = EmpiricalMeasure.normalized(rng.normal(size=(15, 2)), rng.random(15) + 0.1)
    nu = EmpiricalMeasure(rng.normal(size=(9, 2)) + 1)
    d = mk_distance(mu, nu, 1)[0]
    phi = kantorovich_potential(mu, nu)
    assert kr_dual_certificate(mu, nu, phi) == pytest.approx(d, rel=1e-7)
    for f in (coordinate_projection(0), distance_to_point([0.1, 0.2]), random_max_affine(rng, 2)):
        assert kr_dual_certificate(mu, nu, f) <= d + 1e-9


def test_coupled_cost_of_optimal_plan_and_product():
    rng = np.random.default_rng(7)
    mu = EmpiricalMeasure(rng.normal(size=(10, 2)))
    nu = EmpiricalMeasure(rng.normal(size=(10, 2)))
    d, plan = mk_distance(mu, nu, 1)
    assert coupled_cost(plan) == pytest.approx(d)
    assert coupled_cost(TransportPlan.product(mu, nu)) >= d - 1e-12
    assert coupled_cost(TransportPlan.identity(mu)) == 0.0


def test_plan_validation_errors():
    mu = EmpiricalMeasure(np.zeros((2, 1)))
    bad = TransportPlan(mu, mu, np.array([[0.5, 0.2], [0.0, 0.3]]))
    with pytest.raises(ValueError, match="marginals"):
        bad.check()


def test_measure_validation_errors():
    with pytest.raises(ValueError, match="sum"):
        EmpiricalMeasure(np.zeros((2, 1)), [0.5, 0.6])
    with pytest.raises(ValueError, match="finite"):
        EmpiricalMeasure(np.array([[np.nan]]))
    with pytest.raises(ValueError, match="nonnegative"):
        EmpiricalMeasure(np.zeros((2, 1)), [1.5, -0.5])
    with pytest.raises(ValueError):
        GaussianMeasure([0, 0], [[1, 0], [0, -1]])


def test_dimension_mismatch_and_cap():
    with pytest.raises(ValueError):
        mk_distance(EmpiricalMeasure(np.zeros((2, 1))), EmpiricalMeasure(np.zeros((2, 2))))
    big = EmpiricalMeasure(np.zeros((50, 1)))
    with pytest.raises(ResourceCapError):
        mk_distance(big, big, 1, cap=10)


def test_plan_csv(tmp_path):
    rng = np.random.default_rng(8)
    mu = EmpiricalMeasure(rng.normal(size=(5, 2)))
    _, plan = mk_distance(mu, EmpiricalMeasure(rng.normal(size=(5, 2))), 1)
    plan.to_csv(tmp_path / "plan.csv")
    rows = list(csv.DictReader(open(tmp_path / "plan.csv")))
    assert len(rows) == 5
    assert sum(float(r["mass"]) for r in rows) == pytest.approx(1.0)
