"""Phase-space pictures of density operators and quantum-to-classical transport bounds.

Conventions (d = 1, periodic box of side L, M grid points, spacing h):

- Wigner: W(x, xi) = (2 pi eps)^{-1} int exp(-i xi u / eps) r(x + u/2, x - u/2) du,
  sampled at 2M positions of spacing h/2 and at 2M momenta xi_n = n pi eps / L,
  n in [-M, M). The kernel is first interpolated trigonometrically onto the
  h/2 grid, so u runs over multiples of h and W keeps the full x-bandwidth
  of r (twice that of a wave function). The kernel is extended by zero outside
  the box instead of periodically, which removes the ghost images a torus
  Wigner function would otherwise carry.
- Husimi: exp(eps Delta / 4) applied to the Wigner grid (heat kernel of
  variance eps / 2 per coordinate), periodic in both directions.
- Coherent state |q + ip, eps> = (pi eps)^{-1/4} exp(-(x-q)^2 / 2 eps) exp(i p x / eps),
  periodized by summing images.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .quantum import DensityOperator, SpatialGrid, WaveFunction, periodized_gaussian
from .transport import EmpiricalMeasure, mk_distance

__all__ = [
    "semiclassical_grid",
    "excited_state",
    "PhaseSpaceGrid",
    "CoherentState",
    "coherent_state",
    "wigner_transform",
    "husimi_transform",
    "husimi_coherent",
    "toeplitz_quantize",
    "grid_to_measure",
    "PseudoDistanceBounds",
    "pseudo_distance_bounds",
]


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Real samples W[i, n] at (x_i, xi_n) on a uniform lattice."""

    x: np.ndarray
    xi: np.ndarray
    values: np.ndarray = field(repr=False)
    scale: float = 1.0
    kind: str = "wigner"
    source_spacing: float | None = None

    def __post_init__(self):
        if self.values.shape != (len(self.x), len(self.xi)):
            raise ValueError("values shape does not match the axes")

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0])

    @property
    def cell_area(self) -> float:
        return self.dx * self.dxi

    def mass(self) -> float:
        return float(self.values.sum() * self.cell_area)

    def duality_defect(self) -> float:
        """|h * dxi * (number of momenta) - 2 pi scale| with h the spacing of the source grid."""
        h = self.dx if self.source_spacing is None else self.source_spacing
        return abs(h * self.dxi * len(self.xi) - 2 * np.pi * self.scale)

    def at(self, x: float, xi: float) -> float:
        """Value at the lattice point nearest to (x, xi)."""
        i = int(np.argmin(np.abs(self.x - x)))
        n = int(np.argmin(np.abs(self.xi - xi)))
        return float(self.values[i, n])

    def moments(self):
        """Mean and covariance of the (signed) grid density."""
        w = self.values * self.cell_area
        X, P = np.meshgrid(self.x, self.xi, indexing="ij")
        m = w.sum()
        mean = np.array([(w * X).sum(), (w * P).sum()]) / m
        dX, dP = X - mean[0], P - mean[1]
        cov = np.array([[(w * dX * dX).sum(), (w * dX * dP).sum()],
                        [(w * dX * dP).sum(), (w * dP * dP).sum()]]) / m
        return mean, cov

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "xi", "W"])
            for i, x in enumerate(self.x):
                for n, p in enumerate(self.xi):
                    w.writerow([repr(float(x)), repr(float(p)), repr(float(self.values[i, n]))])

    def to_gnuplot(self, path) -> None:
        """Blocks of 'x xi W' lines separated by blank lines, one block per x (splot format)."""
        with open(path, "w") as fh:
            fh.write(f"# {self.kind} scale={self.scale!r}\n")
            for i, x in enumerate(self.x):
                for n, p in enumerate(self.xi):
                    fh.write(f"{x!r} {p!r} {self.values[i, n]!r}\n")
                fh.write("\n")


@dataclass(frozen=True)
class CoherentState:
    q: float
    p: float
    eps: float


def coherent_state(grid: SpatialGrid, q: float, p: float, eps: float) -> WaveFunction:
    """Periodized coherent state; raises when the grid cannot resolve it."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    # six standard deviations of the momentum profile, 1 / sqrt(2 eps) in wavenumber, below Nyquist
    if abs(p) / eps + 6.0 / np.sqrt(2 * eps) > np.pi / grid.h:
        raise ValueError(f"momentum p = {p} is not resolved by grid spacing {grid.h} at eps = {eps}")
    a = (np.pi * eps) ** -0.25 * periodized_gaussian(grid, q, p / eps, eps)
    try:
        return WaveFunction(a, grid, eps)
    except ValueError as exc:
        raise ValueError(f"coherent state at ({q}, {p}) is under-resolved: {exc}") from None


def semiclassical_grid(eps: float, L: float | None = None, per_width: float = 4.0) -> SpatialGrid:
    """Power-of-two grid with ``per_width`` points per coherent width sqrt(eps)."""
    _check_eps(eps)
    L = max(8.0, 16.0 * np.sqrt(eps)) if L is None else float(L)
    m = 2 ** int(np.ceil(np.log2(L * per_width / np.sqrt(eps))))
    return SpatialGrid(max(m, 16), L)


def excited_state(grid: SpatialGrid, eps: float) -> WaveFunction:
    """First excited harmonic-oscillator state x exp(-x^2 / (2 eps)), normalized."""
    _check_eps(eps)
    x = grid.x
    return WaveFunction.normalized(x * np.exp(-x * x / (2 * eps)), grid, eps)


def _check_eps(eps: float) -> None:
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")


def _fourier_pad(a: np.ndarray, axis: int) -> np.ndarray:
    """Spectrum of length M -> 2M with the Nyquist coefficient split between +-M/2."""
    m = a.shape[axis]
    a = np.moveaxis(a, axis, 0)
    out = np.zeros((2 * m,) + a.shape[1:], dtype=complex)
    half = m // 2
    out[:half] = a[:half]
    out[-half + 1:] = a[half + 1:]
    out[half] = 0.5 * a[half]
    out[-half] = 0.5 * a[half]
    return np.moveaxis(out, 0, axis)


def _fine_kernel(r: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of r(x, y) onto the grid of spacing h/2."""
    s = np.fft.fft2(r)
    s = _fourier_pad(_fourier_pad(s, 0), 1)
    return 4.0 * np.fft.ifft2(s)


def wigner_transform(R: DensityOperator, eps: float) -> PhaseSpaceGrid:
    _check_eps(eps)
    if R.k != 1:
        raise ValueError("Wigner transform needs a single-particle density operator")
    g = R.grid
    M, h, L = g.M, g.h, g.L
    rf = _fine_kernel(R.kernel)
    i = np.arange(2 * M)[:, None]
    m = np.arange(-M, M)[None, :]
    a, b = i + m, i - m
    inside = (a >= 0) & (a < 2 * M) & (b >= 0) & (b < 2 * M)
    K = np.where(inside, rf[a % (2 * M), b % (2 * M)], 0.0)
    # sum_m exp(-2 pi i n m / 2M) K[i, m] with m and n both in [-M, M)
    W = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(K, axes=1), axis=1), axes=1)
    W = W * h / (2 * np.pi * eps)
    imag = np.abs(W.imag).max()
    if imag > 1e-8 * max(1.0, np.abs(W.real).max()):
        raise ValueError(f"Wigner transform has imaginary residue {imag:.3g}; kernel is not Hermitian")
    xi = np.arange(-M, M) * np.pi * eps / L
    x = -0.5 * L + 0.5 * h * np.arange(2 * M)
    return PhaseSpaceGrid(x, xi, W.real.copy(), eps, "wigner", h)


def husimi_transform(R: DensityOperator, eps: float, wigner: PhaseSpaceGrid | None = None) -> PhaseSpaceGrid:
    """Heat smoothing exp(eps Delta / 4) of the Wigner grid."""
    _check_eps(eps)
    W = wigner_transform(R, eps) if wigner is None else wigner
    kx = 2 * np.pi * np.fft.fftfreq(len(W.x), W.dx)
    kp = 2 * np.pi * np.fft.fftfreq(len(W.xi), W.dxi)
    mult = np.exp(-0.25 * eps * (kx[:, None] ** 2 + kp[None, :] ** 2))
    H = np.fft.ifft2(mult * np.fft.fft2(W.values)).real
    return PhaseSpaceGrid(W.x, W.xi, H, eps, "husimi", W.source_spacing)


def husimi_coherent(R: DensityOperator, eps: float, x=None, xi=None) -> PhaseSpaceGrid:
    """Husimi function as <z|R|z> / (2 pi eps), evaluated directly from coherent states.

    Defaults to the lattice of ``wigner_transform``. Used as an independent
    check of the smoothing route.
    """
    _check_eps(eps)
    g = R.grid
    x = -0.5 * g.L + 0.5 * g.h * np.arange(2 * g.M) if x is None else np.asarray(x, float)
    xi = np.arange(-g.M, g.M) * np.pi * eps / g.L if xi is None else np.asarray(xi, float)
    out = np.zeros((len(x), len(xi)))
    images = int(np.ceil(10 * np.sqrt(eps) / g.L)) + 1
    pref = (np.pi * eps) ** -0.25
    shifts = np.arange(-images, images + 1) * g.L
    # the plane-wave factor depends on y + q = x_grid + jL only, so it is shared by all q
    waves = [np.exp(1j * np.outer(xi, g.x + s) / eps) for s in shifts]
    for i, q in enumerate(x):
        Z = np.zeros((len(xi), g.M), dtype=complex)
        for s, E in zip(shifts, waves):
            y = g.x - q + s
            Z += np.exp(-0.5 * y * y / eps)[None, :] * E
        Z *= pref
        out[i] = np.real(((Z.conj() @ R.kernel) * Z).sum(axis=1)) * g.h**2
    return PhaseSpaceGrid(x, xi, out / (2 * np.pi * eps), eps, "husimi", g.h)


def toeplitz_quantize(mu: EmpiricalMeasure, eps: float, grid: SpatialGrid) -> DensityOperator:
    """sum_k w_k |z_k, eps><z_k, eps| for a probability measure on R^2."""
    _check_eps(eps)
    if mu.dim != 2:
        raise ValueError("Töplitz quantization here needs phase-space atoms in R^2")
    q = mu.atoms[:, 0]
    lo, hi = -0.75 * grid.L, 0.75 * grid.L
    if np.any(q < lo) or np.any(q >= hi):
        raise ValueError("atoms lie outside the periodic box by more than L/4")
    states = np.array([coherent_state(grid, a[0], a[1], eps).amplitudes for a in mu.atoms])
    r = np.einsum("k,ki,kj->ij", mu.weights, states, states.conj())
    R = DensityOperator(r, grid, 1, validate=False)
    R.check(psd_tol=1e-12)
    return R


def grid_to_measure(G: PhaseSpaceGrid, cap: int = 2500, drop: float = 1e-14):
    """Convert a nonnegative phase-space grid to weighted atoms.

    Cells become atoms at their centres with weight value * area; cells below
    ``drop`` times the largest weight are discarded and the rest renormalized.
    Above ``cap`` atoms, b x b blocks are merged into their weighted centroids
    with b the smallest factor that fits. Returns ``(measure, delta2)`` where
    delta2 bounds the squared MK2 cost of moving each cell's mass to its atom
    (block spread plus the within-cell variance (dx^2 + dxi^2) / 12).
    """
    w = np.clip(G.values, 0.0, None) * G.cell_area
    if w.sum() <= 0:
        raise ValueError("grid carries no positive mass")
    w = np.where(w > drop * w.max(), w, 0.0)
    X, P = np.meshgrid(G.x, G.xi, indexing="ij")
    b = 1
    while True:
        nx, np_ = -(-w.shape[0] // b), -(-w.shape[1] // b)
        bi = (np.arange(w.shape[0]) // b)[:, None] * np_ + (np.arange(w.shape[1]) // b)[None, :]
        mass = np.bincount(bi.ravel(), w.ravel(), nx * np_)
        if np.count_nonzero(mass) <= cap:
            break
        b += 1
    safe = np.where(mass > 0, mass, 1.0)
    cx = np.bincount(bi.ravel(), (w * X).ravel(), nx * np_) / safe
    cp = np.bincount(bi.ravel(), (w * P).ravel(), nx * np_) / safe
    tot = mass.sum()
    spread = (w * ((X - cx[bi]) ** 2 + (P - cp[bi]) ** 2)).sum() / tot
    delta2 = spread + (G.dx**2 + G.dxi**2) / 12.0
    keep = mass > 0
    return EmpiricalMeasure(np.column_stack([cx[keep], cp[keep]]), mass[keep] / tot), float(delta2)


def _moments(R: DensityOperator, eps: float):
    g = R.grid
    h = g.h
    rho_x = np.real(np.diag(R.kernel)) * h
    e = np.exp(1j * np.outer(g.k, g.x)) / np.sqrt(g.L)  # plane waves e_n(x_i)
    rho_p = np.real(np.einsum("ni,ij,nj->n", e.conj(), R.kernel, e)) * h * h
    return g.x, rho_x, eps * g.k, rho_p


def _trivial_cost(R: DensityOperator, eps: float, atoms: np.ndarray, weights: np.ndarray) -> float:
    x, rx, p, rp = _moments(R, eps)
    cost = 0.0
    for (a, b), w in zip(atoms, weights):
        cost += w * (rx @ (a - x) ** 2 + rp @ (b - p) ** 2)
    return float(cost)


@dataclass(frozen=True)
class PseudoDistanceBounds:
    """Bounds on the squared pseudo-distance, all in squared-cost units."""

    lower: float
    upper_trivial: float
    upper_toeplitz: float | None
    mk2_sq_husimi: float
    d_eps: float
    tolerance: float

    @property
    def upper(self) -> float:
        return self.upper_trivial if self.upper_toeplitz is None else min(self.upper_trivial, self.upper_toeplitz)

    def consistent(self) -> bool:
        return self.lower <= self.upper + self.tolerance


def pseudo_distance_bounds(f: EmpiricalMeasure, R: DensityOperator, eps: float,
                           mu_opt: EmpiricalMeasure | None = None, cap: int = 2500,
                           husimi: PhaseSpaceGrid | None = None) -> PseudoDistanceBounds:
    """lower = max(d eps, MK2(f, Husimi R)^2 - d eps); upper_trivial from the product coupling;
    upper_toeplitz = MK2(f, mu_opt)^2 + d eps when R is the Töplitz quantization of mu_opt.

    ``tolerance`` propagates the grid-to-atoms discretization of the Husimi
    density into the squared MK2 value.
    """
    _check_eps(eps)
    d = R.grid.d
    if f.dim != 2 * d:
        raise ValueError("classical measure must live on R^{2d}")
    H = husimi_transform(R, eps) if husimi is None else husimi
    # a single classical atom needs no solver, so the Husimi grid is kept at full resolution
    hm, delta2 = grid_to_measure(H, cap if f.size > 1 else H.values.size)
    mk2 = mk_distance(f, hm, 2, cap=max(cap, f.size, hm.size if f.size == 1 else 0))[0]
    mk2_sq = mk2**2
    tol = 2 * mk2 * np.sqrt(delta2) + delta2
    d_eps = d * eps
    lower = max(d_eps, mk2_sq - d_eps)
    upper_trivial = _trivial_cost(R, eps, f.atoms, f.weights)
    upper_toe = None
    if mu_opt is not None:
        upper_toe = mk_distance(f, mu_opt, 2, cap=max(cap, f.size, mu_opt.size))[0] ** 2 + d_eps
    return PseudoDistanceBounds(lower, upper_trivial, upper_toe, mk2_sq, d_eps, float(tol))
