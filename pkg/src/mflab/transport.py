"""Monge-Kantorovich (Wasserstein) distances between discrete measures.

Equal-size uniform measures go through the linear assignment solver
(``scipy.optimize.linear_sum_assignment``); everything else is solved as a
transportation linear program with HiGHS. Both paths are exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.linalg import sqrtm
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

__all__ = [
    "EmpiricalMeasure",
    "TransportPlan",
    "GaussianMeasure",
    "LipschitzFunction",
    "cost_matrix",
    "mk_distance",
    "mk2_gaussian",
    "kr_dual_certificate",
    "kantorovich_potential",
    "coupled_cost",
    "coordinate_projection",
    "distance_to_point",
    "random_max_affine",
    "DEFAULT_ATOM_CAP",
    "ResourceCapError",
]

DEFAULT_ATOM_CAP = 4096


class ResourceCapError(MemoryError):
    """A requested problem would exceed a configured size or memory cap."""


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted atoms in R^n. Weights default to uniform 1/N."""

    atoms: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if atoms.shape[0] == 0:
            raise ValueError("empirical measure needs at least one atom")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atom coordinates must be finite")
        if self.weights is None:
            w = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.shape[0] != atoms.shape[0]:
                raise ValueError("weights and atoms differ in length")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"weights sum to {w.sum():.15g}, expected 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    @classmethod
    def normalized(cls, atoms, weights) -> "EmpiricalMeasure":
        """Build from unnormalized nonnegative weights."""
        w = np.asarray(weights, dtype=float)
        return cls(atoms, w / w.sum())


@dataclass(frozen=True)
class TransportPlan:
    """A coupling of ``row_measure`` and ``col_measure`` given by ``mass[i, j]``."""

    row_measure: EmpiricalMeasure
    col_measure: EmpiricalMeasure
    mass: np.ndarray = field(repr=False)

    def marginal_error(self) -> float:
        rows = np.abs(self.mass.sum(axis=1) - self.row_measure.weights).max()
        cols = np.abs(self.mass.sum(axis=0) - self.col_measure.weights).max()
        return float(max(rows, cols))

    def check(self, tol: float = 1e-9) -> None:
        if self.mass.shape != (self.row_measure.size, self.col_measure.size):
            raise ValueError("plan shape does not match the measures")
        if np.any(self.mass < -tol):
            raise ValueError("plan has negative mass")
        err = self.marginal_error()
        if err > tol:
            raise ValueError(f"plan marginals violated by {err:.3g}")

    def support(self, threshold: float = 0.0):
        """Indices (i, j) and masses of the nonzero entries, in lexicographic order."""
        i, j = np.nonzero(self.mass > threshold)
        return i, j, self.mass[i, j]

    @classmethod
    def identity(cls, mu: EmpiricalMeasure) -> "TransportPlan":
        return cls(mu, mu, np.diag(mu.weights))

    @classmethod
    def product(cls, mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> "TransportPlan":
        return cls(mu, nu, np.outer(mu.weights, nu.weights))

    @classmethod
    def from_permutation(cls, mu: EmpiricalMeasure, nu: EmpiricalMeasure, perm) -> "TransportPlan":
        if not (mu.is_uniform and nu.is_uniform and mu.size == nu.size):
            raise ValueError("permutation plans need equal-size uniform measures")
        mass = np.zeros((mu.size, nu.size))
        mass[np.arange(mu.size), np.asarray(perm)] = 1.0 / mu.size
        return cls(mu, nu, mass)

    def to_csv(self, path) -> None:
        i, j, m = self.support()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "mass"])
            for row in zip(i, j, m):
                w.writerow([int(row[0]), int(row[1]), repr(float(row[2]))])


@dataclass(frozen=True)
class GaussianMeasure:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        a = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if a.shape != (m.size, m.size):
            raise ValueError("covariance shape does not match the mean")
        if np.abs(a - a.T).max() > 1e-12:
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(a).min() <= 0:
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", a)

    def sample(self, n: int, rng: np.random.Generator) -> EmpiricalMeasure:
        return EmpiricalMeasure(rng.multivariate_normal(self.mean, self.cov, size=n))


def _split_norm(diff: np.ndarray, ground: str) -> np.ndarray:
    if ground == "l2":
        return np.sqrt((diff * diff).sum(-1))
    if ground == "sum":
        # phase-space sum form |dx| + |dxi|, with the first half of coordinates as positions
        n = diff.shape[-1]
        if n % 2:
            raise ValueError("sum-form ground metric needs an even phase-space dimension")
        d = n // 2
        return (np.sqrt((diff[..., :d] ** 2).sum(-1)) + np.sqrt((diff[..., d:] ** 2).sum(-1)))
    raise ValueError(f"unknown ground metric {ground!r}; use 'l2' or 'sum'")


def cost_matrix(x: np.ndarray, y: np.ndarray, p: float = 1.0, ground: str = "l2") -> np.ndarray:
    """Pairwise costs |x_i - y_j|^p under the chosen ground metric."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if ground == "l2":
        if p == 2:
            return cdist(x, y, "sqeuclidean")
        dist = cdist(x, y)
    elif ground == "sum":
        n = x.shape[1]
        if n % 2:
            raise ValueError("sum-form ground metric needs an even phase-space dimension")
        d = n // 2
        dist = cdist(x[:, :d], y[:, :d]) + cdist(x[:, d:], y[:, d:])
    else:
        raise ValueError(f"unknown ground metric {ground!r}; use 'l2' or 'sum'")
    return dist if p == 1 else dist**p


def _solve_lp(cost: np.ndarray, a: np.ndarray, b: np.ndarray):
    n, m = cost.shape
    rows = sp.kron(sp.eye(n), np.ones((1, m)))
    cols = sp.kron(np.ones((1, n)), sp.eye(m))
    a_eq = sp.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate([a, b])
    # one marginal equation is redundant (total masses agree)
    res = linprog(cost.ravel(), A_eq=a_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    duals = res.eqlin.marginals
    u = duals[:n]
    v = np.concatenate([duals[n:], [0.0]])
    return res.x.reshape(n, m), u, v


def _check_pair(mu, nu, p, cap):
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if p not in (1, 2):
        raise ValueError("only exponents p = 1 and p = 2 are supported")
    if max(mu.size, nu.size) > cap:
        raise ResourceCapError(f"atom count {max(mu.size, nu.size)} exceeds the exact-solver cap {cap}")


def mk_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: int = 1, ground: str = "l2",
                cap: int = DEFAULT_ATOM_CAP, method: str = "auto"):
    """Exact Monge-Kantorovich distance of exponent ``p`` with its optimal plan.

    ``method`` is ``"auto"`` (assignment when both measures are uniform with
    equal size, LP otherwise), ``"assignment"`` or ``"lp"``.
    Returns ``(distance, TransportPlan)``.
    """
    _check_pair(mu, nu, p, cap)
    if mu.size == 1 or nu.size == 1:
        plan = TransportPlan.product(mu, nu)
        c = cost_matrix(mu.atoms, nu.atoms, p, ground)
        return float((plan.mass * c).sum()) ** (1.0 / p), plan
    c = cost_matrix(mu.atoms, nu.atoms, p, ground)
    square_uniform = mu.size == nu.size and mu.is_uniform and nu.is_uniform
    if method == "auto":
        method = "assignment" if square_uniform else "lp"
    if method == "assignment":
        if not square_uniform:
            raise ValueError("assignment solver needs equal-size uniform measures")
        rows, cols = linear_sum_assignment(c)
        plan = TransportPlan.from_permutation(mu, nu, cols[np.argsort(rows)])
        total = c[rows, cols].sum() / mu.size
    elif method == "lp":
        mass, _, _ = _solve_lp(c, mu.weights, nu.weights)
        plan = TransportPlan(mu, nu, mass)
        total = float((mass * c).sum())
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(max(total, 0.0)) ** (1.0 / p), plan


def mk2_gaussian(g1: GaussianMeasure, g2: GaussianMeasure) -> float:
    """Closed-form MK2 distance between two Gaussian measures."""
    if g1.mean.size != g2.mean.size:
        raise ValueError("Gaussian measures live in different dimensions")
    for g in (g1, g2):
        if np.linalg.cond(g.cov) > 1e12:
            raise ValueError("covariance is numerically singular")
    r1 = sqrtm(g1.cov).real
    cross = sqrtm(r1 @ g2.cov @ r1).real
    d2 = (((g1.mean - g2.mean) ** 2).sum() + np.trace(g1.cov) + np.trace(g2.cov)
          - 2 * np.trace(cross))
    return float(np.sqrt(max(d2, 0.0)))


@dataclass(frozen=True)
class LipschitzFunction:
    """A test function together with a certified Lipschitz constant."""

    fn: Callable[[np.ndarray], np.ndarray]
    lip: float
    label: str = ""

    def __call__(self, z):
        return self.fn(np.atleast_2d(z))


def coordinate_projection(i: int) -> LipschitzFunction:
    return LipschitzFunction(lambda z: z[:, i], 1.0, f"coord[{i}]")


def distance_to_point(point) -> LipschitzFunction:
    point = np.asarray(point, dtype=float)
    return LipschitzFunction(lambda z: np.sqrt(((z - point) ** 2).sum(-1)), 1.0, "dist")


def random_max_affine(rng: np.random.Generator, dim: int, pieces: int = 8,
                      offset_scale: float = 1.0) -> LipschitzFunction:
    """max_k (a_k . z + b_k) with |a_k| <= 1, hence 1-Lipschitz."""
    a = rng.normal(size=(pieces, dim))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    a *= rng.uniform(0.0, 1.0, size=(pieces, 1))
    b = rng.normal(scale=offset_scale, size=pieces)
    return LipschitzFunction(lambda z: (z @ a.T + b).max(axis=1), 1.0, "max-affine")


def kantorovich_potential(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> LipschitzFunction:
    """Optimal 1-Lipschitz potential for MK1 (l2 ground metric), from the LP duals.

    The c-transform phi(x) = min_j (|x - y_j| - v_j) of the column duals is
    1-Lipschitz and attains the Kantorovich-Rubinstein supremum.
    """
    _check_pair(mu, nu, 1, DEFAULT_ATOM_CAP)
    c = cost_matrix(mu.atoms, nu.atoms, 1)
    _, _, v = _solve_lp(c, mu.weights, nu.weights)
    y = nu.atoms.copy()

    def phi(z):
        return (cost_matrix(z, y, 1) - v[None, :]).min(axis=1)

    return LipschitzFunction(phi, 1.0, "kantorovich")


def kr_dual_certificate(mu: EmpiricalMeasure, nu: EmpiricalMeasure, phi: LipschitzFunction) -> float:
    """|int phi dmu - int phi dnu| for a 1-Lipschitz phi; a lower bound on MK1."""
    if phi.lip > 1.0:
        raise ValueError(f"test function has Lipschitz constant {phi.lip} > 1")
    a = phi(mu.atoms)
    b = phi(nu.atoms)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("test function returned non-finite values")
    return float(abs(mu.weights @ a - nu.weights @ b))


def coupled_cost(plan: TransportPlan, cost_exponent: float = 1.0, ground: str = "l2",
                 tol: float = 1e-9) -> float:
    """sum_ij pi_ij c(x_i, y_j) for a (possibly suboptimal) plan."""
    plan.check(tol)
    i, j, m = plan.support()
    diff = plan.row_measure.atoms[i] - plan.col_measure.atoms[j]
    c = _split_norm(diff, ground) ** cost_exponent
    return float(m @ c)
