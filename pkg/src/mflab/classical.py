"""Scaled classical N-body dynamics: x_j' = xi_j, xi_j' = -(1/N) sum_{k != j} grad V(x_j - x_k)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .potentials import InteractionPotential

__all__ = [
    "ParticleState",
    "Trajectory",
    "nbody_rhs",
    "integrate_flow",
    "total_energy",
    "verlet_steps",
]


@dataclass(frozen=True)
class ParticleState:
    positions: np.ndarray
    momenta: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.positions, dtype=float))
        xi = np.atleast_2d(np.asarray(self.momenta, dtype=float))
        if x.shape != xi.shape:
            raise ValueError("positions and momenta must have the same shape (N, d)")
        if x.shape[0] < 1:
            raise ValueError("need at least one particle")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise ValueError("particle state has non-finite entries")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "momenta", xi)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def phase_space(self) -> np.ndarray:
        """(N, 2d) array of (x_j, xi_j)."""
        return np.hstack([self.positions, self.momenta])


@dataclass(frozen=True)
class Trajectory:
    """Snapshots at uniform output times; arrays have a leading time axis."""

    times: np.ndarray
    positions: np.ndarray = field(repr=False)
    momenta: np.ndarray = field(repr=False)
    dt: float = 0.0
    scheme: str = "velocity-verlet"

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def state(self, k: int) -> ParticleState:
        return ParticleState(self.positions[k], self.momenta[k], float(self.times[k]))

    @property
    def final(self) -> ParticleState:
        return self.state(-1)

    def to_csv(self, path) -> None:
        n, d = self.positions.shape[1:]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "j"] + [f"x{i}" for i in range(d)] + [f"xi{i}" for i in range(d)])
            for k, t in enumerate(self.times):
                for j in range(n):
                    w.writerow([repr(float(t)), j, *map(repr, self.positions[k, j].tolist()),
                                *map(repr, self.momenta[k, j].tolist())])


def _pair_forces(x: np.ndarray, V: InteractionPotential) -> np.ndarray:
    n = x.shape[0]
    diff = x[:, None, :] - x[None, :, :]
    g = V.gradient(diff)
    idx = np.arange(n)
    g[idx, idx] = 0.0
    return -g.sum(axis=1) / n


def nbody_rhs(state: ParticleState, V: InteractionPotential):
    """Right-hand side (dX, dXi) of the scaled Newton system."""
    if V.dim != state.dim:
        raise ValueError("potential and state dimensions differ")
    return state.momenta.copy(), _pair_forces(state.positions, V)


def verlet_steps(x, xi, force, dt, n_steps, save_every=1, t0=0.0):
    """Kick-drift-kick velocity Verlet driver shared by the particle solvers.

    ``force(x)`` returns the acceleration. Yields ``(t, x, xi)`` at t0 and after
    every ``save_every`` steps; the last step is always yielded.
    """
    a = force(x)
    yield t0, x, xi
    for step in range(1, n_steps + 1):
        xi = xi + 0.5 * dt * a
        x = x + dt * xi
        a = force(x)
        xi = xi + 0.5 * dt * a
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise FloatingPointError(f"non-finite state at step {step}")
        if step % save_every == 0 or step == n_steps:
            yield t0 + step * dt, x, xi


def _n_steps(t_end: float, dt: float) -> tuple[int, float]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    n = int(np.ceil(t_end / dt - 1e-9))
    return n, (t_end / n if n else dt)


def integrate_flow(state0: ParticleState, V: InteractionPotential, t_end: float, dt: float = 1e-3,
                   save_every: int = 1) -> Trajectory:
    """Integrate the N-body flow to ``t_end`` with velocity Verlet.

    The step is shrunk slightly, if needed, so that an integer number of steps
    lands exactly on ``t_end``.
    """
    if V.dim != state0.dim:
        raise ValueError("potential and state dimensions differ")
    n, h = _n_steps(t_end, dt)
    snaps = list(verlet_steps(state0.positions, state0.momenta, lambda x: _pair_forces(x, V),
                              h, n, save_every, state0.t))
    return Trajectory(
        times=np.array([s[0] for s in snaps]),
        positions=np.array([s[1] for s in snaps]),
        momenta=np.array([s[2] for s in snaps]),
        dt=h,
    )


def total_energy(state: ParticleState, V: InteractionPotential) -> float:
    """sum_j |xi_j|^2 / 2 + (1/N) sum_{j<k} V(x_j - x_k)."""
    kinetic = 0.5 * (state.momenta**2).sum()
    n = state.n
    if n == 1:
        return float(kinetic)
    j, k = np.triu_indices(n, 1)
    pair = V.value(state.positions[j] - state.positions[k]).sum()
    return float(kinetic + pair / n)
