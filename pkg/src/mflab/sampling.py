"""Seeded i.i.d. sampling of phase-space densities and empirical-measure convergence rates."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .transport import EmpiricalMeasure, ResourceCapError, mk_distance

__all__ = [
    "ReferenceDensity",
    "reference_density",
    "substream",
    "sample_iid",
    "FGResult",
    "fg_rate_experiment",
    "fg_envelope",
    "fg_trial_distances",
    "fg_result",
    "DENSITY_NAMES",
]

DENSITY_NAMES = ("gaussian_phase", "uniform_box", "two_bump")


def _chi_moment(d: int, k: int) -> float:
    """E[chi_d^k] = 2^{k/2} Gamma((d + k)/2) / Gamma(d/2)."""
    return math.exp(0.5 * k * math.log(2.0) + math.lgamma(0.5 * (d + k)) - math.lgamma(0.5 * d))


@dataclass(frozen=True)
class ReferenceDensity:
    """A probability density on phase space R^{2d}.

    Families and parameters:

    - ``gaussian_phase``: centred isotropic Gaussian, ``sigma``
    - ``uniform_box``: uniform on [-a, a]^{2d}, ``half_width``
    - ``two_bump``: mixture weight ``p`` at ``center1`` and 1 - p at
      ``center2``, each an isotropic Gaussian of std ``width`` (zero width
      gives point masses)
    """

    name: str
    d: int
    params: dict = field(default_factory=dict)
    q: float = 3.0

    def __post_init__(self):
        if self.name not in DENSITY_NAMES:
            raise ValueError(f"unsupported density {self.name!r}; choose from {DENSITY_NAMES}")
        if self.d < 1:
            raise ValueError("spatial dimension must be positive")
        if self.q <= 1:
            raise ValueError("moment order q must exceed 1")
        p = dict(self.params)
        if self.name == "gaussian_phase":
            p.setdefault("sigma", 1.0)
            if p["sigma"] <= 0:
                raise ValueError("sigma must be positive")
        elif self.name == "uniform_box":
            p.setdefault("half_width", 1.0)
            if p["half_width"] <= 0:
                raise ValueError("half_width must be positive")
        else:
            p.setdefault("p", 0.5)
            p.setdefault("width", 0.0)
            p.setdefault("center1", [1.0] + [0.0] * (2 * self.d - 1))
            p.setdefault("center2", [-1.0] + [0.0] * (2 * self.d - 1))
            for key in ("center1", "center2"):
                if len(p[key]) != 2 * self.d:
                    raise ValueError(f"{key} must have {2 * self.d} coordinates")
            if not 0.0 <= p["p"] <= 1.0 or p["width"] < 0:
                raise ValueError("invalid two_bump parameters")
        unknown = set(p) - {"sigma", "half_width", "p", "width", "center1", "center2"}
        if unknown:
            raise ValueError(f"unknown density parameters {sorted(unknown)}")
        object.__setattr__(self, "params", p)

    @property
    def dim(self) -> int:
        return 2 * self.d

    @property
    def is_degenerate(self) -> bool:
        """True when the law is a single point mass."""
        if self.name != "two_bump" or self.params["width"] > 0:
            return False
        p = self.params
        return p["p"] in (0.0, 1.0) or np.array_equal(p["center1"], p["center2"])

    @property
    def moment(self) -> float | None:
        """Analytic M_q = E (|x| + |xi|)^q, or None when no closed form is coded."""
        q = self.q
        if self.name == "gaussian_phase":
            if q != int(q):
                return None
            q = int(q)
            s = self.params["sigma"]
            tot = sum(math.comb(q, k) * _chi_moment(self.d, k) * _chi_moment(self.d, q - k)
                      for k in range(q + 1))
            return s**q * tot
        if self.name == "two_bump" and self.params["width"] == 0:
            p = self.params
            d = self.d
            val = [np.linalg.norm(c[:d]) + np.linalg.norm(c[d:])
                   for c in (np.asarray(p["center1"]), np.asarray(p["center2"]))]
            return float(p["p"] * val[0] ** q + (1 - p["p"]) * val[1] ** q)
        return None

    def point_masses(self) -> EmpiricalMeasure:
        """The exact law for zero-width two_bump densities."""
        if self.name != "two_bump" or self.params["width"] > 0:
            raise ValueError("only zero-width two_bump densities are atomic")
        p = self.params
        atoms = np.array([p["center1"], p["center2"]], dtype=float)
        w = np.array([p["p"], 1 - p["p"]])
        keep = w > 0
        return EmpiricalMeasure(atoms[keep], w[keep])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        k = self.dim
        p = self.params
        if self.name == "gaussian_phase":
            return p["sigma"] * rng.standard_normal((n, k))
        if self.name == "uniform_box":
            return rng.uniform(-p["half_width"], p["half_width"], size=(n, k))
        first = rng.random(n) < p["p"]
        centers = np.where(first[:, None], np.asarray(p["center1"], float), np.asarray(p["center2"], float))
        if p["width"] > 0:
            centers = centers + p["width"] * rng.standard_normal((n, k))
        return centers


def reference_density(name: str, d: int, q: float = 3.0, **params) -> ReferenceDensity:
    return ReferenceDensity(name, d, params, q)


def substream(seed, *keys: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by (seed, *keys)."""
    seed = [seed] if np.isscalar(seed) else list(seed)
    ss = np.random.SeedSequence([int(s) for s in seed] + [int(k) for k in keys])
    return np.random.Generator(np.random.Philox(ss))


def sample_iid(f: ReferenceDensity, n: int, seed) -> EmpiricalMeasure:
    """N uniform-weight atoms drawn i.i.d. from f; deterministic per (f, N, seed)."""
    if n < 1:
        raise ValueError("need at least one sample")
    return EmpiricalMeasure(f.sample(n, substream(seed, n)))


@dataclass(frozen=True)
class FGResult:
    n_list: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    trials: int
    slope: float
    q: float
    moment: float | None
    estimator: str
    samples: np.ndarray = field(repr=False)  # (len(N), trials)

    def rows(self):
        return [(int(n), float(m), float(s), self.trials)
                for n, m, s in zip(self.n_list, self.means, self.stderrs)]

    def decreasing(self, n_stderr: float = 2.0, strict: bool = True) -> bool:
        """Consecutive means decrease.

        ``strict`` requires each drop to exceed ``n_stderr`` combined standard
        errors; otherwise a rise of up to that many standard errors is allowed.
        """
        drop = self.means[:-1] - self.means[1:]
        se = np.hypot(self.stderrs[:-1], self.stderrs[1:])
        return bool(np.all(drop > n_stderr * se)) if strict else bool(np.all(drop > -n_stderr * se))

    def envelope_check(self, q: float | None = None, n_stderr: float = 0.0):
        """Anchor c at the first N; return (c, envelope, tolerance, all means below).

        The anchor is a Monte Carlo mean, so the tolerance combines the stderr
        at each N with the anchor's stderr carried along the envelope.
        """
        q = self.q if q is None else q
        env = fg_envelope(self.n_list, q)
        c = self.means[0] / env[0]
        env = c * env
        tol = n_stderr * np.hypot(self.stderrs, env / env[0] * self.stderrs[0]) + 1e-12 * env
        return c, env, tol, bool(np.all(self.means <= env + tol))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "mean", "stderr", "trials"])
            for n, m, s, t in self.rows():
                w.writerow([n, repr(m), repr(s), t])

    def summary(self) -> dict:
        return {"slope": self.slope, "q": self.q, "M_q": self.moment, "estimator": self.estimator,
                "trials": self.trials, "N": [int(n) for n in self.n_list]}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def fg_envelope(n, q: float) -> np.ndarray:
    """N^{-1/q} + N^{-(1 - 1/q)}."""
    n = np.asarray(n, dtype=float)
    return n ** (-1.0 / q) + n ** (-(1.0 - 1.0 / q))


def _check_fg(f: ReferenceDensity, q: float, trials: int, estimator: str) -> None:
    if trials < 5:
        raise ValueError("fg_rate_experiment needs at least 5 trials")
    if q <= 1 or abs(q - 2 * f.d / (2 * f.d - 1)) < 1e-12:
        raise ValueError(f"moment order q = {q} is excluded (need q > 1, q != 2d/(2d-1))")
    if f.d < 3:
        raise ValueError("the rate theorem needs d >= 3")
    if estimator not in ("two_sample", "reference"):
        raise ValueError(f"unknown estimator {estimator!r}")


def fg_trial_distances(f: ReferenceDensity, n: int, trials: int, seed, estimator: str = "two_sample",
                       ref_size: int | None = None, cap: int = 4096) -> np.ndarray:
    """MK1 distances of ``trials`` independent N-samples; see fg_rate_experiment.

    Trial t of size N always uses the substream (seed, N, t, .), so the values
    do not depend on which other N are run alongside.
    """
    out = np.zeros(trials)
    ref = f.point_masses() if f.is_degenerate else None
    if ref is None and estimator == "reference":
        if ref_size is None or ref_size % n:
            raise ValueError("reference size must be a multiple of every N")
        if ref_size > cap:
            raise ResourceCapError(f"reference sample of {ref_size} atoms exceeds the exact-solver cap {cap}")
        ref_atoms = f.sample(ref_size, substream(seed, 0, 0, 2))
    for t in range(trials):
        mu = EmpiricalMeasure(f.sample(n, substream(seed, n, t, 0)))
        if ref is not None:
            out[t] = mk_distance(mu, ref, 1)[0]
        elif estimator == "two_sample":
            nu = EmpiricalMeasure(f.sample(n, substream(seed, n, t, 1)))
            out[t] = mk_distance(mu, nu, 1, cap=cap)[0]
        else:
            # MK1 to an m-atom sample equals MK1 after splitting each of the N atoms into m/N copies
            rep = EmpiricalMeasure(np.repeat(mu.atoms, ref_size // n, axis=0))
            out[t] = mk_distance(rep, EmpiricalMeasure(ref_atoms), 1, cap=cap)[0]
    return out


def fg_result(f: ReferenceDensity, n_list, samples: np.ndarray, q: float, estimator: str) -> FGResult:
    """Assemble means, standard errors and the log-log slope from per-trial distances."""
    n_list = np.asarray(n_list, dtype=int)
    trials = samples.shape[1]
    means = samples.mean(axis=1)
    stderrs = samples.std(axis=1, ddof=1) / np.sqrt(trials)
    pos = means > 0
    slope = float(np.polyfit(np.log(n_list[pos]), np.log(means[pos]), 1)[0]) if pos.sum() >= 2 else 0.0
    moment = ReferenceDensity(f.name, f.d, f.params, q).moment
    return FGResult(n_list, means, stderrs, trials, slope, q, moment,
                    "exact" if f.is_degenerate else estimator, samples)


def fg_rate_experiment(f: ReferenceDensity, n_list: Sequence[int], trials: int, seed,
                       q: float | None = None, estimator: str = "two_sample",
                       ref_factor: int = 20, cap: int = 4096) -> FGResult:
    """Monte Carlo mean of MK1 between empirical measures of f and the law itself.

    ``estimator``:

    - ``two_sample``: MK1(mu_N, nu_N) for two independent N-samples. Its mean
      lies between E MK1(mu_N, f) and twice that, so it has the same rate.
    - ``reference``: MK1(mu_N, mu_ref) against one fixed sample of size
      ``ref_factor * max(N)``. Solved exactly by replicating each atom of mu_N,
      which limits it to ``ref_factor * max(N) <= cap``.

    Zero-width degenerate laws are compared against the exact point mass.
    """
    q = f.q if q is None else float(q)
    _check_fg(f, q, trials, estimator)
    n_list = np.asarray(n_list, dtype=int)
    if n_list[0] < 1 or np.any(np.diff(n_list) <= 0):
        raise ValueError("N list must be positive and increasing")
    ref_size = ref_factor * int(n_list.max())
    samples = np.array([fg_trial_distances(f, int(n), trials, seed, estimator, ref_size, cap) for n in n_list])
    return fg_result(f, n_list, samples, q, estimator)
