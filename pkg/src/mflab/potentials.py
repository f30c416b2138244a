"""Pair interaction potentials with analytic regularity constants.

Every potential is even, has a bounded Lipschitz gradient, and carries the
exact constants ``lip_grad`` (Lipschitz constant of the gradient) and
``sup_grad`` (sup norm of the gradient). Periodic potentials additionally
carry a finite Fourier series, which the quantum grid solvers require.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = ["InteractionPotential", "builtin_potential", "BUILTIN_NAMES"]

BUILTIN_NAMES = ("zero", "gaussian", "cosine", "mollified_screened")


@dataclass(frozen=True)
class InteractionPotential:
    """An even pair potential V on R^d.

    ``value`` maps an array of shape (..., d) to (...); ``gradient`` maps
    (..., d) to (..., d). ``fourier_freqs`` (K, d) and ``fourier_coeffs`` (K,)
    hold the series V(z) = sum_w c_w exp(i w.z); both are empty for
    non-periodic potentials.
    """

    name: str
    dim: int
    value: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    gradient: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    lip_grad: float
    sup_grad: float
    fourier_freqs: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)), repr=False)
    fourier_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    period: float | None = None
    params: tuple = ()

    @property
    def is_periodic(self) -> bool:
        return self.period is not None and len(self.fourier_coeffs) > 0

    @property
    def fourier_l1(self) -> float:
        """Sum of |c_w|, the torus counterpart of ||V^||_{L1} / (2 pi)^d."""
        return float(np.abs(self.fourier_coeffs).sum())

    def fourier_series(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        phase = np.tensordot(z, self.fourier_freqs.T, axes=([-1], [0]))
        return (np.exp(1j * phase) * self.fourier_coeffs).sum(axis=-1)

    def check_box(self, box_length: float, tol: float = 1e-9) -> None:
        """Raise unless the Fourier frequencies lie on the lattice of a box of side ``box_length``."""
        if not self.is_periodic:
            raise ValueError(f"potential {self.name!r} has no Fourier data; quantum grids need a periodic potential")
        n = self.fourier_freqs * box_length / (2 * np.pi)
        if np.abs(n - np.round(n)).max() > tol:
            raise ValueError(
                f"box length {box_length} is not a multiple of the potential period {self.period}"
            )


def _as_points(z, dim):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {z.shape}")
    return z


def _sq(z):
    # |z|^2 over the last axis; einsum avoids a slow length-d reduction
    return np.einsum("...d,...d->...", z, z)


def _zero(dim: int) -> InteractionPotential:
    return InteractionPotential(
        name="zero",
        dim=dim,
        value=lambda z: np.zeros(_as_points(z, dim).shape[:-1]),
        gradient=lambda z: np.zeros_like(_as_points(z, dim)),
        lip_grad=0.0,
        sup_grad=0.0,
        fourier_freqs=np.zeros((0, dim)),
        fourier_coeffs=np.zeros(0),
    )


def _gaussian(dim: int, a: float, sigma: float) -> InteractionPotential:
    # V = a exp(-|z|^2 / 2 sigma^2). Hessian norm peaks at the origin (|a|/sigma^2);
    # |grad V| = |a| r/sigma^2 exp(-r^2/2 sigma^2) peaks at r = sigma.
    if sigma <= 0:
        raise ValueError("gaussian width must be positive")

    def value(z):
        z = _as_points(z, dim)
        return a * np.exp(-0.5 * _sq(z) / sigma**2)

    def gradient(z):
        z = _as_points(z, dim)
        g = np.exp(-0.5 * _sq(z) / sigma**2)
        return (-a / sigma**2) * g[..., None] * z

    return InteractionPotential(
        name="gaussian",
        dim=dim,
        value=value,
        gradient=gradient,
        lip_grad=abs(a) / sigma**2,
        sup_grad=abs(a) / sigma * np.exp(-0.5),
        fourier_freqs=np.zeros((0, dim)),
        fourier_coeffs=np.zeros(0),
        params=(a, sigma),
    )


def _cosine(dim: int, a: float, period: float, harmonic: int = 1) -> InteractionPotential:
    # V = a sum_i cos(kappa z_i), kappa = 2 pi n / L.
    if period <= 0:
        raise ValueError("cosine period must be positive")
    if harmonic < 1 or int(harmonic) != harmonic:
        raise ValueError("cosine harmonic must be a positive integer")
    kappa = 2 * np.pi * harmonic / period

    def value(z):
        z = _as_points(z, dim)
        return a * np.cos(kappa * z).sum(-1)

    def gradient(z):
        z = _as_points(z, dim)
        return -a * kappa * np.sin(kappa * z)

    freqs = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = kappa
        freqs.extend([e, -e])
    return InteractionPotential(
        name="cosine",
        dim=dim,
        value=value,
        gradient=gradient,
        lip_grad=abs(a) * kappa**2,
        sup_grad=abs(a) * kappa * np.sqrt(dim),
        fourier_freqs=np.array(freqs),
        fourier_coeffs=np.full(2 * dim, a / 2.0),
        period=float(period),
        params=(a, period, harmonic),
    )


def _radial_max(fun, scale: float) -> float:
    """Maximum of a smooth nonnegative radial profile on [0, inf)."""
    r = np.linspace(0.0, 40.0 * scale, 200001)
    vals = fun(r)
    i = int(np.argmax(vals))
    lo, hi = r[max(i - 1, 0)], r[min(i + 1, len(r) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda s: -fun(np.array([s]))[0], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-14 * max(scale, 1.0)})
        return float(max(vals[i], -res.fun))
    return float(vals[i])


def _mollified_screened(dim: int, a: float, kappa: float, delta: float) -> InteractionPotential:
    # V = a exp(-kappa s)/s with s = sqrt(|z|^2 + delta^2): Yukawa with the
    # distance itself mollified, so V is smooth and even at the origin.
    if delta <= 0:
        raise ValueError("mollification delta must be positive")
    if kappa < 0:
        raise ValueError("screening kappa must be nonnegative")

    def phi_prime_over_s(s):
        return -a * np.exp(-kappa * s) * (kappa * s + 1) / s**3

    def value(z):
        z = _as_points(z, dim)
        s = np.sqrt(_sq(z) + delta**2)
        return a * np.exp(-kappa * s) / s

    def gradient(z):
        z = _as_points(z, dim)
        s = np.sqrt(_sq(z) + delta**2)
        return phi_prime_over_s(s)[..., None] * z

    def grad_norm(r):
        s = np.sqrt(r * r + delta**2)
        return np.abs(phi_prime_over_s(s)) * r

    def hess_norm(r):
        # grad V = psi(s) z: eigenvalues psi (tangential) and psi + psi'(s) r^2/s (radial)
        s = np.sqrt(r * r + delta**2)
        psi = phi_prime_over_s(s)
        dpsi = a * np.exp(-kappa * s) * (kappa**2 * s**2 + 3 * kappa * s + 3) / s**4
        radial = psi + dpsi * r * r / s
        return np.maximum(np.abs(psi), np.abs(radial))

    scale = delta + (1.0 / kappa if kappa > 0 else delta)
    return InteractionPotential(
        name="mollified_screened",
        dim=dim,
        value=value,
        gradient=gradient,
        lip_grad=_radial_max(hess_norm, scale),
        sup_grad=_radial_max(grad_norm, scale),
        fourier_freqs=np.zeros((0, dim)),
        fourier_coeffs=np.zeros(0),
        params=(a, kappa, delta),
    )


def builtin_potential(name: str, params: Sequence[float] = (), dim: int = 1) -> InteractionPotential:
    """Build one of the named potential families.

    Parameters by family:

    - ``zero``: none
    - ``gaussian``: ``[a, sigma]``, V = a exp(-|z|^2 / 2 sigma^2)
    - ``cosine``: ``[a, L]`` or ``[a, L, n]``, V = a sum_i cos(2 pi n z_i / L)
    - ``mollified_screened``: ``[a, kappa, delta]``,
      V = a exp(-kappa s) / s with s = sqrt(|z|^2 + delta^2)
    """
    if dim < 1 or int(dim) != dim:
        raise ValueError("dimension must be a positive integer")
    params = [float(p) for p in params]
    if name == "zero":
        return _zero(dim)
    if name == "gaussian":
        a, sigma = (params + [1.0, 1.0][len(params):])[:2]
        return _gaussian(dim, a, sigma)
    if name == "cosine":
        if len(params) < 2:
            raise ValueError("cosine potential requires a period: params [a, L] or [a, L, n]")
        harmonic = int(params[2]) if len(params) > 2 else 1
        return _cosine(dim, params[0], params[1], harmonic)
    if name == "mollified_screened":
        if len(params) != 3:
            raise ValueError("mollified_screened requires params [a, kappa, delta]")
        return _mollified_screened(dim, *params)
    raise ValueError(f"unknown potential {name!r}; choose from {BUILTIN_NAMES}")
