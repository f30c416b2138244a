"""Grid quantum dynamics on a one-dimensional periodic box.

Wave functions are sampled on x_i = -L/2 + i h, h = L/M. A single-particle
operator is stored as the matrix B acting on samples, (B psi)_i = sum_j B_ij psi_j,
so that <phi|A|psi> = h sum conj(phi) (B psi). A density operator is stored by
its integral kernel r(x, y); its matrix on samples is r h^k.

Hartree:      i s d_t psi = -s^2/2 psi'' + (V * |psi|^2) psi
N-body:       i s d_t Psi = sum_j -s^2/2 d_j^2 Psi + (1/N) sum_{k<l} V(x_k - x_l) Psi

with s the scale (hbar, or the semiclassical epsilon).
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field

import numpy as np

from .potentials import InteractionPotential
from .transport import ResourceCapError

__all__ = [
    "ResourceCapError",
    "DEFAULT_AMPLITUDE_CAP",
    "SpatialGrid",
    "WaveFunction",
    "DensityOperator",
    "plane_wave",
    "gaussian_packet",
    "periodized_gaussian",
    "product_state",
    "symmetrize",
    "apply_one_body",
    "projector_matrix",
    "multiplication_matrix",
    "kinetic_matrix",
    "mean_field_potential",
    "hartree_evolve",
    "hartree_energy",
    "pair_potential_diagonal",
    "nbody_schrodinger_evolve",
    "nbody_energy",
    "reduce_density",
    "one_body_marginal",
    "klimontovich_apply",
    "klimontovich_expectation",
    "interaction_bracket_expectation",
    "interaction_commutator_expectation",
    "qklim_residual",
    "mf_error",
    "mean_field_bound",
    "save_checkpoint",
    "load_checkpoint",
]

DEFAULT_AMPLITUDE_CAP = 2**24
MAGIC = b"MFQ1"


@dataclass(frozen=True)
class SpatialGrid:
    M: int
    L: float
    d: int = 1

    def __post_init__(self):
        if self.d != 1:
            raise ValueError("quantum grids are one-dimensional")
        if self.M < 2 or self.M & (self.M - 1):
            raise ValueError(f"grid size M = {self.M} must be a power of two")
        if not self.L > 0:
            raise ValueError("box length must be positive")

    @property
    def h(self) -> float:
        return self.L / self.M

    @property
    def x(self) -> np.ndarray:
        return -0.5 * self.L + self.h * np.arange(self.M)

    @property
    def k(self) -> np.ndarray:
        """Angular wave numbers in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.M, self.h)


@dataclass(frozen=True)
class WaveFunction:
    """Amplitudes of shape (M,) * N with h^N sum |Psi|^2 = 1."""

    amplitudes: np.ndarray = field(repr=False)
    grid: SpatialGrid
    scale: float
    t: float = 0.0
    norm_tol: float = field(default=1e-10, repr=False)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim < 1 or any(s != self.grid.M for s in a.shape):
            raise ValueError(f"amplitude shape {a.shape} does not match grid size {self.grid.M}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "amplitudes", a)
        err = abs(self.norm() - 1.0)
        if err > self.norm_tol:
            raise ValueError(f"wave function norm deviates from 1 by {err:.3g}")

    @classmethod
    def normalized(cls, amplitudes, grid: SpatialGrid, scale: float, t: float = 0.0) -> "WaveFunction":
        a = np.asarray(amplitudes, dtype=complex)
        n2 = grid.h**a.ndim * (np.abs(a) ** 2).sum()
        return cls(a / np.sqrt(n2), grid, scale, t)

    @property
    def n_particles(self) -> int:
        return self.amplitudes.ndim

    def norm(self) -> float:
        return float(self.grid.h**self.n_particles * (np.abs(self.amplitudes) ** 2).sum())

    def inner(self, other: "WaveFunction") -> complex:
        return complex(self.grid.h**self.n_particles * np.vdot(self.amplitudes, other.amplitudes))

    def with_time(self, amplitudes, t) -> "WaveFunction":
        return WaveFunction(amplitudes, self.grid, self.scale, t, norm_tol=1e-6)


@dataclass(frozen=True)
class DensityOperator:
    """Density operator on the k-particle grid, stored by its kernel r (M^k x M^k)."""

    kernel: np.ndarray = field(repr=False)
    grid: SpatialGrid
    k: int = 1
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        r = np.asarray(self.kernel, dtype=complex)
        n = self.grid.M**self.k
        if r.shape != (n, n):
            raise ValueError(f"kernel shape {r.shape} does not match ({n}, {n})")
        object.__setattr__(self, "kernel", r)
        if self.validate:
            self.check()

    @property
    def weight(self) -> float:
        return self.grid.h**self.k

    @property
    def matrix(self) -> np.ndarray:
        return self.kernel * self.weight

    def trace(self) -> float:
        return float(np.real(np.trace(self.kernel)) * self.weight)

    def eigenvalues(self) -> np.ndarray:
        m = self.matrix
        return np.linalg.eigvalsh(0.5 * (m + m.conj().T))

    def check(self, herm_tol: float = 1e-10, psd_tol: float = 1e-10, trace_tol: float = 1e-8) -> None:
        m = self.matrix
        herm = np.abs(m - m.conj().T).max()
        if herm > herm_tol:
            raise ValueError(f"density operator not Hermitian (deviation {herm:.3g})")
        lo = self.eigenvalues().min()
        if lo < -psd_tol:
            raise ValueError(f"density operator has negative eigenvalue {lo:.3g}")
        tr = self.trace()
        if abs(tr - 1.0) > trace_tol:
            raise ValueError(f"density operator trace {tr:.12g} differs from 1")

    def expectation(self, B: np.ndarray) -> complex:
        """trace(R A) for the operator with sample matrix B."""
        return complex(np.einsum("ij,ji->", self.matrix, B))

    @classmethod
    def pure(cls, psi: WaveFunction) -> "DensityOperator":
        a = psi.amplitudes.reshape(-1)
        return cls(np.outer(a, a.conj()), psi.grid, psi.n_particles)


# --- state builders -------------------------------------------------------

def plane_wave(grid: SpatialGrid, n: int, scale: float = 1.0) -> WaveFunction:
    """e^{i k_n x} / sqrt(L) with k_n = 2 pi n / L."""
    a = np.exp(2j * np.pi * n * grid.x / grid.L) / np.sqrt(grid.L)
    return WaveFunction(a, grid, scale)


def periodized_gaussian(grid: SpatialGrid, q: float, wavenumber: float, width: float) -> np.ndarray:
    """Unnormalized sum over images of exp(-(y^2) / 2 width + i wavenumber (y + q)), y = x - q + jL."""
    x = grid.x
    images = int(np.ceil(10 * np.sqrt(width) / grid.L)) + 1
    out = np.zeros(grid.M, dtype=complex)
    for j in range(-images, images + 1):
        y = x - q + j * grid.L
        out += np.exp(-0.5 * y * y / width + 1j * wavenumber * (y + q))
    return out


def gaussian_packet(grid: SpatialGrid, q: float, p: float, width: float, scale: float) -> WaveFunction:
    """Normalized periodized packet exp(-(x-q)^2 / 2 width + i p x / scale)."""
    return WaveFunction.normalized(periodized_gaussian(grid, q, p / scale, width), grid, scale)


def product_state(psis) -> WaveFunction:
    """Tensor product psi_1 x ... x psi_N of single-particle states on one grid."""
    psis = list(psis)
    a = psis[0].amplitudes
    for p in psis[1:]:
        if p.grid != psis[0].grid:
            raise ValueError("factors live on different grids")
        a = np.multiply.outer(a, p.amplitudes)
    return WaveFunction(a, psis[0].grid, psis[0].scale, norm_tol=1e-8)


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Average of an amplitude tensor over all axis permutations."""
    perms = list(itertools.permutations(range(a.ndim)))
    return sum(np.transpose(a, p) for p in perms) / len(perms)


def _check_bosonic(a: np.ndarray, tol: float = 1e-12) -> None:
    scale = np.abs(a).max()
    for j in range(1, a.ndim):
        if np.abs(np.swapaxes(a, 0, j) - a).max() > tol * max(scale, 1.0):
            raise ValueError("state is not symmetric under particle exchange")


# --- one-body operators ---------------------------------------------------

def apply_one_body(amps: np.ndarray, B: np.ndarray, axis: int) -> np.ndarray:
    """J_axis B applied to an amplitude tensor."""
    return np.moveaxis(np.tensordot(B, amps, axes=([1], [axis])), 0, axis)


def projector_matrix(phi: WaveFunction) -> np.ndarray:
    """Sample matrix of |phi><phi|."""
    a = phi.amplitudes
    return np.outer(a, a.conj()) * phi.grid.h


def multiplication_matrix(values) -> np.ndarray:
    return np.diag(np.asarray(values, dtype=complex))


def kinetic_matrix(grid: SpatialGrid, scale: float) -> np.ndarray:
    """Sample matrix of -scale^2/2 d^2/dx^2 (spectral)."""
    f = np.fft.fft(np.eye(grid.M), axis=0)
    return np.fft.ifft(0.5 * scale**2 * grid.k[:, None] ** 2 * f, axis=0)


def _fourier_data(V: InteractionPotential, grid: SpatialGrid):
    V.check_box(grid.L)
    if V.dim != 1:
        raise ValueError("quantum grids need a one-dimensional potential")
    return V.fourier_freqs[:, 0], V.fourier_coeffs


def _cap(n_amp: int, cap: int) -> None:
    if n_amp > cap:
        raise ResourceCapError(f"{n_amp} amplitudes exceed the memory cap {cap}")


# --- Hartree --------------------------------------------------------------

def mean_field_potential(amps: np.ndarray, grid: SpatialGrid, V: InteractionPotential) -> np.ndarray:
    """(V * |psi|^2)(x) from the Fourier data of V, exact for trigonometric V."""
    w, c = _fourier_data(V, grid)
    x = grid.x
    rho = np.abs(amps) ** 2
    rho_hat = grid.h * np.exp(-1j * np.outer(w, x)) @ rho
    return np.real((c * rho_hat) @ np.exp(1j * np.outer(w, x)))


def hartree_energy(psi: WaveFunction, V: InteractionPotential) -> float:
    """int s^2/2 |psi'|^2 + 1/2 iint V(x - y) |psi(x)|^2 |psi(y)|^2."""
    g = psi.grid
    a = psi.amplitudes
    da = np.fft.ifft(1j * g.k * np.fft.fft(a))
    kin = 0.5 * psi.scale**2 * g.h * (np.abs(da) ** 2).sum()
    pot = 0.5 * g.h * ((np.abs(a) ** 2) * mean_field_potential(a, g, V)).sum()
    return float(kin + pot)


def _strang(amps, half_kinetic, full_kinetic, potential_step, n_steps, save_every, norm_fn):
    """Strang splitting K/2 P K/2 with adjacent half kinetic steps merged."""
    out = [(0, amps)]
    a = half_kinetic(amps)
    for step in range(1, n_steps + 1):
        a = potential_step(a)
        if step % save_every == 0 or step == n_steps:
            a = half_kinetic(a)
            err = abs(norm_fn(a) - 1.0)
            if not np.isfinite(err) or err > 1e-6:
                raise FloatingPointError(f"normalization lost at step {step} (error {err:.3g})")
            out.append((step, a))
            if step < n_steps:
                a = half_kinetic(a)
        else:
            a = full_kinetic(a)
    return out


def _steps(t_end: float, dt: float):
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    n = int(np.ceil(t_end / dt - 1e-9))
    return n, (t_end / n if n else dt)


def hartree_evolve(psi0: WaveFunction, V: InteractionPotential, scale: float | None = None,
                   t_end: float = 1.0, dt: float = 1e-3, save_every: int = 1) -> list[WaveFunction]:
    """Strang-split Hartree evolution; returns the snapshots including t = 0."""
    if psi0.n_particles != 1:
        raise ValueError("hartree_evolve needs a single-particle state")
    s = psi0.scale if scale is None else float(scale)
    if not 0 < s <= 1:
        raise ValueError("scale must lie in (0, 1]")
    g = psi0.grid
    _fourier_data(V, g)
    n, h = _steps(t_end, dt)
    k2 = g.k**2
    half = np.exp(-0.25j * s * h * k2)
    full = half * half

    def pot(a):
        return a * np.exp(-1j * h / s * mean_field_potential(a, g, V))

    snaps = _strang(psi0.amplitudes, lambda a: np.fft.ifft(half * np.fft.fft(a)),
                    lambda a: np.fft.ifft(full * np.fft.fft(a)), pot, n, save_every,
                    lambda a: g.h * (np.abs(a) ** 2).sum())
    return [WaveFunction(a, g, s, psi0.t + st * h, norm_tol=1e-6) for st, a in snaps]


# --- N-body Schrodinger ---------------------------------------------------

def pair_potential_diagonal(grid: SpatialGrid, n: int, V: InteractionPotential) -> np.ndarray:
    """(1/N) sum_{k<l} V(x_k - x_l) on the tensor grid."""
    x = grid.x
    vv = V.value((x[:, None] - x[None, :])[..., None])
    out = np.zeros((grid.M,) * n)
    for k, l in itertools.combinations(range(n), 2):
        shape = [1] * n
        shape[k] = grid.M
        shape[l] = grid.M
        out = out + vv.reshape(shape)
    return out / n


def _kinetic_symbol(grid: SpatialGrid, n: int) -> np.ndarray:
    k2 = grid.k**2
    out = np.zeros((grid.M,) * n)
    for j in range(n):
        shape = [1] * n
        shape[j] = grid.M
        out = out + k2.reshape(shape)
    return out


def nbody_schrodinger_evolve(Psi0: WaveFunction, V: InteractionPotential, scale: float | None = None,
                             t_end: float = 1.0, dt: float = 1e-3, save_every: int = 1,
                             bosonic: bool = False, cap: int = DEFAULT_AMPLITUDE_CAP) -> list[WaveFunction]:
    """Strang-split N-body evolution with the exact diagonal pair-potential phase."""
    g = Psi0.grid
    n = Psi0.n_particles
    _cap(g.M**n, cap)
    _fourier_data(V, g)
    if bosonic:
        _check_bosonic(Psi0.amplitudes)
    s = Psi0.scale if scale is None else float(scale)
    if not 0 < s <= 1:
        raise ValueError("scale must lie in (0, 1]")
    steps, h = _steps(t_end, dt)
    ksym = _kinetic_symbol(g, n)
    half = np.exp(-0.25j * s * h * ksym)
    full = half * half
    phase = np.exp(-1j * h / s * pair_potential_diagonal(g, n, V))
    w = g.h**n
    snaps = _strang(Psi0.amplitudes, lambda a: np.fft.ifftn(half * np.fft.fftn(a)),
                    lambda a: np.fft.ifftn(full * np.fft.fftn(a)), lambda a: phase * a, steps,
                    save_every, lambda a: w * (np.abs(a) ** 2).sum())
    return [WaveFunction(a, g, s, Psi0.t + st * h, norm_tol=1e-6) for st, a in snaps]


def nbody_energy(Psi: WaveFunction, V: InteractionPotential) -> float:
    """<Psi| sum_j -s^2/2 d_j^2 + (1/N) sum_{k<l} V |Psi>."""
    g = Psi.grid
    n = Psi.n_particles
    a = Psi.amplitudes
    kin = np.fft.ifftn(0.5 * Psi.scale**2 * _kinetic_symbol(g, n) * np.fft.fftn(a))
    pot = pair_potential_diagonal(g, n, V) * a
    return float(np.real(g.h**n * np.vdot(a, kin + pot)))


# --- reduced densities and the Klimontovich map ---------------------------

def reduce_density(Psi: WaveFunction, k: int = 1, cap: int = DEFAULT_AMPLITUDE_CAP) -> DensityOperator:
    """k-particle marginal: r_k(X, Y) = h^{N-k} sum_Z Psi(X, Z) conj(Psi(Y, Z))."""
    n = Psi.n_particles
    if not 1 <= k < n:
        raise ValueError(f"marginal order k = {k} must satisfy 1 <= k < N = {n}")
    g = Psi.grid
    _cap(g.M ** (2 * k), cap)
    a = Psi.amplitudes.reshape(g.M**k, -1)
    r = g.h ** (n - k) * (a @ a.conj().T)
    return DensityOperator(r, g, k, validate=False)


def one_body_marginal(Psi: WaveFunction, cap: int = DEFAULT_AMPLITUDE_CAP) -> DensityOperator:
    """(1/N) sum_k of the one-particle marginals on each particle axis.

    Equals reduce_density(Psi, 1) for symmetric Psi; for product states of
    distinct factors it is the marginal of the symmetrized state.
    """
    n = Psi.n_particles
    g = Psi.grid
    _cap(g.M**2, cap)
    r = np.zeros((g.M, g.M), dtype=complex)
    for k in range(n):
        a = np.moveaxis(Psi.amplitudes, k, 0).reshape(g.M, -1)
        r += a @ a.conj().T
    return DensityOperator(r * g.h ** (n - 1) / n, g, 1, validate=False)


def klimontovich_apply(amps: np.ndarray, B: np.ndarray) -> np.ndarray:
    """((1/N) sum_k J_k A) Psi."""
    n = amps.ndim
    if B.shape != (amps.shape[0],) * 2:
        raise ValueError(f"operator shape {B.shape} does not match the grid")
    return sum(apply_one_body(amps, B, j) for j in range(n)) / n


def klimontovich_expectation(Psi: WaveFunction, B: np.ndarray) -> complex:
    """<Psi| (1/N) sum_k J_k A |Psi> for the operator with sample matrix B."""
    B = np.asarray(B)
    if B.shape != (Psi.grid.M, Psi.grid.M):
        raise ValueError(f"operator shape {B.shape} does not match grid size {Psi.grid.M}")
    w = Psi.grid.h**Psi.n_particles
    return complex(w * np.vdot(Psi.amplitudes, klimontovich_apply(Psi.amplitudes, B)))


def interaction_bracket_expectation(Psi: WaveFunction, B: np.ndarray, V: InteractionPotential) -> complex:
    """<Psi| C[V, M, M](A) |Psi> as the finite Fourier sum over the lattice frequencies of V.

    Each term is sum_w c_w ( <M(E_w) Psi | M(E_w A) Psi> - <M(E_-w A*) Psi | M(E_-w) Psi> ).
    """
    g = Psi.grid
    w_freq, c = _fourier_data(V, g)
    if len(c) == 0:
        raise ValueError("potential has no Fourier data")
    B = np.asarray(B, dtype=complex)
    a = Psi.amplitudes
    wt = g.h**Psi.n_particles
    Bh = B.conj().T
    total = 0.0j
    for om, cw in zip(w_freq, c):
        e = np.exp(1j * om * g.x)
        E = np.diag(e)
        Ec = np.diag(e.conj())
        first = np.vdot(klimontovich_apply(a, E), klimontovich_apply(a, E @ B))
        second = np.vdot(klimontovich_apply(a, Ec @ Bh), klimontovich_apply(a, Ec))
        total += cw * (first - second)
    return complex(wt * total)


def interaction_commutator_expectation(Psi: WaveFunction, B: np.ndarray, V: InteractionPotential) -> complex:
    """<Psi| [V_N, M(A)] |Psi> with V_N = (1/N) sum_{k<l} V(x_k - x_l), computed directly."""
    g = Psi.grid
    a = Psi.amplitudes
    vn = pair_potential_diagonal(g, Psi.n_particles, V)
    ma = klimontovich_apply(a, np.asarray(B, dtype=complex))
    return complex(g.h**Psi.n_particles * (np.vdot(a, vn * ma) - np.vdot(a, klimontovich_apply(vn * a, B))))


def qklim_residual(series: list[WaveFunction], B: np.ndarray, V: InteractionPotential) -> np.ndarray:
    """Residual of i s d/dt <M(t)A> = <ad*(K) M(t)A> - <C[V, M(t), M(t)]A> at interior snapshots.

    The time derivative is a central difference over consecutive snapshots,
    which must be equally spaced. ad*(K) M A = -M([K, A]) with K = -s^2/2 d^2.
    """
    if len(series) < 3:
        raise ValueError("need at least three snapshots")
    t = np.array([p.t for p in series])
    dts = np.diff(t)
    if np.ptp(dts) > 1e-9 * dts.mean():
        raise ValueError("snapshots must be equally spaced")
    dt = dts.mean()
    s = series[0].scale
    K = kinetic_matrix(series[0].grid, s)
    comm = K @ B - B @ K
    e = np.array([klimontovich_expectation(p, B) for p in series])
    lhs = 1j * s * (e[2:] - e[:-2]) / (2 * dt)
    rhs = np.array([-klimontovich_expectation(p, comm) - interaction_bracket_expectation(p, B, V)
                    for p in series[1:-1]])
    return np.abs(lhs - rhs)


# --- mean-field error -----------------------------------------------------

def mf_error(Psi: WaveFunction, psi: WaveFunction):
    """(||R_{N:1} - |psi><psi|||, 1 - <psi|R_{N:1}|psi>)."""
    if Psi.grid != psi.grid:
        raise ValueError("states live on different grids")
    if abs(Psi.scale - psi.scale) > 1e-14:
        raise ValueError("states use different scales")
    R = reduce_density(Psi, 1)
    a = psi.amplitudes
    h = psi.grid.h
    diff = (R.kernel - np.outer(a, a.conj())) * h
    op_norm = float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).max())
    overlap = float(np.real(h * h * np.vdot(a, R.kernel @ a)))
    return op_norm, float(min(max(1.0 - overlap, 0.0), 1.0))


def mean_field_bound(n: int, t: float, V: InteractionPotential, scale: float) -> float:
    """(2 / sqrt(N)) exp(2 t sum_w |c_w| / s)."""
    return 2.0 / np.sqrt(n) * np.exp(2.0 * t * V.fourier_l1 / scale)


# --- checkpoints ----------------------------------------------------------

_HEADER = struct.Struct("<4sqqqddd")


def save_checkpoint(path, Psi: WaveFunction) -> None:
    g = Psi.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.d, Psi.n_particles, g.M, g.L, Psi.scale, Psi.t))
        fh.write(np.ascontiguousarray(Psi.amplitudes, dtype="<c16").tobytes())


def load_checkpoint(path) -> WaveFunction:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError("checkpoint header truncated")
        magic, d, n, m, L, scale, t = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        body = fh.read()
    expected = 16 * m**n
    if len(body) != expected:
        raise ValueError(f"checkpoint body has {len(body)} bytes, expected {expected}")
    a = np.frombuffer(body, dtype="<c16").reshape((m,) * n).astype(complex)
    return WaveFunction(a, SpatialGrid(int(m), float(L), int(d)), scale, t, norm_tol=1e-6)
