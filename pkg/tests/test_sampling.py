import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mflab.sampling import (
    ReferenceDensity,
    fg_envelope,
    fg_rate_experiment,
    fg_trial_distances,
    reference_density,
    sample_iid,
    substream,
)
from mflab.transport import ResourceCapError


def test_substreams_are_deterministic_and_distinct():
    a = substream(7, 1, 2).standard_normal(5)
    assert np.array_equal(a, substream(7, 1, 2).standard_normal(5))
    assert not np.array_equal(a, substream(7, 2, 1).standard_normal(5))
    assert not np.array_equal(a, substream(8, 1, 2).standard_normal(5))


def test_sample_iid_deterministic():
    f = reference_density("gaussian_phase", 2, sigma=0.5)
    assert np.array_equal(sample_iid(f, 10, 3).atoms, sample_iid(f, 10, 3).atoms)
    assert sample_iid(f, 10, 3).dim == 4


@pytest.mark.parametrize("d,q", [(1, 2), (3, 3), (2, 4)])
def test_gaussian_moment_matches_monte_carlo(d, q):
    f = ReferenceDensity("gaussian_phase", d, {"sigma": 0.8}, q)
    z = f.sample(400000, substream(0, d, q))
    mc = ((np.linalg.norm(z[:, :d], axis=1) + np.linalg.norm(z[:, d:], axis=1)) ** q)
    assert f.moment == pytest.approx(mc.mean(), abs=4 * mc.std() / np.sqrt(len(mc)))


def test_gaussian_moment_unavailable_for_fractional_q():
    assert ReferenceDensity("gaussian_phase", 1, {}, 1.5).moment is None


def test_gaussian_second_moment_closed_form():
    # in 1-d, E(|x| + |xi|)^2 = 2 sigma^2 + 2 (sigma sqrt(2/pi))^2
    f = ReferenceDensity("gaussian_phase", 1, {"sigma": 2.0}, 2)
    assert f.moment == pytest.approx(2 * 4.0 * (1 + 2 / np.pi))


def test_two_bump_point_masses_and_moment():
    f = reference_density("two_bump", 1, p=0.25, width=0.0, center1=[1.0, 2.0], center2=[-3.0, 0.0])
    pm = f.point_masses()
    assert np.allclose(pm.weights, [0.25, 0.75])
    assert f.moment == pytest.approx(0.25 * 27 + 0.75 * 27)
    z = f.sample(1000, substream(1))
    assert set(map(tuple, z)) <= {(1.0, 2.0), (-3.0, 0.0)}


def test_degenerate_two_bump_is_exact():
    f = reference_density("two_bump", 3, p=1.0, width=0.0)
    assert f.is_degenerate
    vals = fg_trial_distances(f, 16, 5, 0)
    assert np.allclose(vals, 0.0)


def test_uniform_box_sampling_range():
    f = reference_density("uniform_box", 2, half_width=0.5)
    z = f.sample(1000, substream(2))
    assert np.abs(z).max() <= 0.5 and z.shape == (1000, 4)


@pytest.mark.parametrize("name,params", [
    ("gaussian_phase", {"sigma": -1}),
    ("uniform_box", {"half_width": 0}),
    ("two_bump", {"p": 1.5}),
    ("two_bump", {"center1": [0.0]}),
    ("laplace", {}),
    ("gaussian_phase", {"scale": 1}),
])
def test_invalid_densities(name, params):
    with pytest.raises(ValueError):
        ReferenceDensity(name, 1, params)


def test_fg_errors():
    f = reference_density("gaussian_phase", 3)
    with pytest.raises(ValueError, match="5 trials"):
        fg_rate_experiment(f, [8, 16], 4, 0)
    with pytest.raises(ValueError, match="excluded"):
        fg_rate_experiment(f, [8, 16], 5, 0, q=6 / 5)
    with pytest.raises(ValueError, match="d >= 3"):
        fg_rate_experiment(reference_density("gaussian_phase", 2), [8, 16], 5, 0)
    with pytest.raises(ResourceCapError):
        fg_rate_experiment(f, [8, 16], 5, 0, estimator="reference", ref_factor=20, cap=100)


def test_fg_small_run_is_deterministic_and_decreasing():
    f = reference_density("gaussian_phase", 3)
    r = fg_rate_experiment(f, [16, 64, 256], 6, 11)
    r2 = fg_rate_experiment(f, [16, 64, 256], 6, 11)
    assert np.array_equal(r.samples, r2.samples)
    assert r.decreasing(2.0, strict=True)
    assert r.slope < 0
    # each N reuses the same substreams regardless of the N list
    assert np.array_equal(fg_trial_distances(f, 64, 6, 11), r.samples[1])


def test_fg_reference_estimator_bracketed_by_two_sample():
    f = reference_density("gaussian_phase", 3)
    two = fg_rate_experiment(f, [32], 6, 3)
    ref = fg_rate_experiment(f, [32], 6, 3, estimator="reference", ref_factor=32, cap=1024)
    # E MK1(mu_N, f) <= E MK1(mu_N, nu_N) <= 2 E MK1(mu_N, f); a large reference sample approximates f
    assert 0.4 * two.means[0] < ref.means[0] < 1.2 * two.means[0]


@given(n=st.integers(1, 10**6), q=st.floats(1.1, 20))
def test_envelope_positive_and_decreasing(n, q):
    e = fg_envelope([n, n + 1], q)
    assert e[0] > e[1] > 0


def test_envelope_check_anchor():
    f = reference_density("gaussian_phase", 3)
    r = fg_rate_experiment(f, [16, 64], 5, 0)
    c, env, tol, ok = r.envelope_check(8.0)
    assert env[0] == pytest.approx(r.means[0])
    assert c == pytest.approx(r.means[0] / fg_envelope(16, 8.0))
    _, _, tol2, _ = r.envelope_check(8.0, n_stderr=2.0)
    # at the anchor the mean and its own stderr enter twice
    assert tol2[0] == pytest.approx(2 * np.sqrt(2) * r.stderrs[0] + tol[0])


def test_fg_csv_and_json(tmp_path):
    r = fg_rate_experiment(reference_density("gaussian_phase", 3), [8, 16], 5, 0)
    r.to_csv(tmp_path / "fg.csv")
    r.to_json(tmp_path / "fg.json")
    rows = list(csv.DictReader(open(tmp_path / "fg.csv")))
    assert [int(x["N"]) for x in rows] == [8, 16]
    assert float(rows[0]["mean"]) == r.means[0]
    assert json.load(open(tmp_path / "fg.json"))["slope"] == r.slope
