"""The verification experiments.

Each experiment appends rows to ``ctx.rows``. A row asserts ``lhs <= rhs + tol``
and carries an anchor string naming the result it checks. Rows with
``gate=False`` are informational and never decide the verdict.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..classical import ParticleState, Trajectory, _n_steps, integrate_flow, total_energy
from ..quantum import (
    DensityOperator,
    SpatialGrid,
    WaveFunction,
    hartree_energy,
    hartree_evolve,
    interaction_bracket_expectation,
    interaction_commutator_expectation,
    klimontovich_expectation,
    load_checkpoint,
    mean_field_bound,
    mf_error,
    multiplication_matrix,
    nbody_energy,
    nbody_schrodinger_evolve,
    one_body_marginal,
    product_state,
    projector_matrix,
    qklim_residual,
    reduce_density,
    save_checkpoint,
    symmetrize,
    gaussian_packet,
)
from ..sampling import fg_result, fg_trial_distances, substream
from ..semiclassical import (
    coherent_state,
    excited_state,
    grid_to_measure,
    husimi_coherent,
    husimi_transform,
    pseudo_distance_bounds,
    semiclassical_grid,
    toeplitz_quantize,
    wigner_transform,
)
from ..transport import EmpiricalMeasure, mk_distance
from ..vlasov import VlasovParticleSolution, coupled_growth, dobrushin_rate, evolve_vlasov, first_moment, moment_growth_rate
from .config import ExperimentConfig

__all__ = ["RunContext", "ArtifactMismatchError", "EXPERIMENT_FUNCS", "joint_limit_gamma", "joint_limit_bound"]

# anchor strings, one per asserted result
A_KLIM = "klimontovich-equivalence"
A_ENERGY = "hamiltonian-energy-conservation"
A_DOB = "dobrushin-stability"
A_COUPLING = "coupling-propagation"
A_MOMENT = "moment-propagation"
A_FG = "fournier-guillin-rate"
A_QMF = "quantum-mean-field-bound"
A_UNITARY = "schrodinger-unitarity"
A_DENSITY = "density-operator-validity"
A_QDUAL = "klimontovich-duality"
A_QKLIM = "quantum-klimontovich-equation"
A_BRACKET = "interaction-bracket-commutator"
A_WIGNER = "wigner-negativity-example"
A_WMASS = "wigner-unit-mass"
A_HUSIMI = "husimi-positivity"
A_COHERENT = "coherent-state-phase-space"
A_TOEPLITZ = "toeplitz-positivity"
A_LB = "pseudo-distance-lower-bound"
A_UB = "toeplitz-upper-bound"
A_TRI = "pseudo-distance-triangle"
A_JOINT = "joint-mean-field-classical-limit"


class ArtifactMismatchError(RuntimeError):
    """An existing artifact or checkpoint was produced by a different config."""


@dataclass
class RunContext:
    jobs: int = 1
    config_hash: str = ""
    cache_dir: str | None = None
    rows: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)  # file name -> writer(path)
    info: dict = field(default_factory=dict)

    def row(self, experiment, check, lhs, rhs, tol=0.0, *, anchor, label="", t=None, n=None, gate=True):
        lhs, rhs, tol = float(lhs), float(rhs), float(tol)
        self.rows.append({
            "experiment": experiment, "check": check, "label": label,
            "t": "" if t is None else float(t), "N": "" if n is None else int(n),
            "lhs": lhs, "rhs": rhs, "tol": tol, "pass": bool(lhs <= rhs + tol),
            "gate": bool(gate), "anchor": anchor,
        })

    def map(self, fn, args):
        """Ordered map over independent jobs; a process pool when jobs > 1."""
        args = list(args)
        if self.jobs <= 1 or len(args) <= 1:
            return [fn(*a) for a in args]
        with ProcessPoolExecutor(max_workers=min(self.jobs, len(args))) as pool:
            return list(pool.map(fn, *zip(*args)))

    def figure(self, name, curves, title="", xlabel="x", ylabel="y", logx=False, logy=False, annotation=""):
        self.series[name] = {"title": title, "xlabel": xlabel, "ylabel": ylabel, "logx": logx, "logy": logy,
                             "annotation": annotation, "curves": curves}


def _curve(label, x, y, yerr=None):
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    e = [0.0] * len(x) if yerr is None else [float(v) for v in yerr]
    return {"label": label, "x": x, "y": y, "yerr": e}


def _snapshot_every(t_end, dt, snapshots):
    n, _ = _n_steps(t_end, dt)
    return max(1, n // snapshots)


# --- checkpoint cache ----------------------------------------------------

def _cache_get(cache_dir, config_hash, name):
    if not cache_dir:
        return None
    path = os.path.join(cache_dir, name)
    if not (os.path.exists(path + ".mfq") and os.path.exists(path + ".json")):
        return None
    with open(path + ".json") as fh:
        meta = json.load(fh)
    if meta.get("config_hash") != config_hash:
        raise ArtifactMismatchError(
            f"checkpoint {path}.mfq belongs to config {meta.get('config_hash', '?')[:12]}, "
            f"not {config_hash[:12]}; remove it or point MFLAB_CACHE elsewhere")
    return load_checkpoint(path + ".mfq"), meta


def _cache_put(cache_dir, config_hash, name, Psi, meta):
    if not cache_dir:
        return
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, name)
    for suffix, write in ((".mfq", lambda p: save_checkpoint(p, Psi)),
                          (".json", lambda p: _write_json(p, {**meta, "config_hash": config_hash}))):
        tmp = f"{path}{suffix}.tmp{os.getpid()}"
        write(tmp)
        os.replace(tmp, path + suffix)


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)


# --- classical ------------------------------------------------------------

def klimontovich_equivalence(cfg: ExperimentConfig, ctx: RunContext) -> None:
    ex = cfg.experiment
    V = cfg.build_potential()
    f = cfg.build_density()
    d, n = cfg.d, cfg.n_list[0]
    atoms = f.sample(n, substream(cfg.seed, n))
    traj = integrate_flow(ParticleState(atoms[:, :d], atoms[:, d:]), V, cfg.t_end, cfg.dt)
    sol = evolve_vlasov(EmpiricalMeasure(atoms), V, cfg.t_end, cfg.dt)
    z_nbody = np.concatenate([traj.positions, traj.momenta], axis=2)
    dev = np.linalg.norm(z_nbody - sol.atoms, axis=2).max(axis=1)
    every = _snapshot_every(cfg.t_end, cfg.dt, cfg.snapshots)
    idx = np.unique(np.r_[np.arange(0, len(traj), every), len(traj) - 1])
    tol = cfg.options["tolerance"]
    for k in idx[1:]:
        ctx.row(ex, "nbody-vs-vlasov-deviation", dev[: k + 1].max(), tol, anchor=A_KLIM, t=traj.times[k], n=n)
    ctx.row(ex, "nbody-vs-vlasov-max-deviation", dev.max(), tol, anchor=A_KLIM, label="all steps", n=n)
    energy = np.array([total_energy(traj.state(k), V) for k in idx])
    drift = np.abs(energy - energy[0]).max() / max(1.0, abs(energy[0])) / max(cfg.t_end, 1e-300)
    ctx.row(ex, "nbody-energy-drift-per-time", drift, cfg.options["energy_drift_tol"], anchor=A_ENERGY, n=n)
    ctx.info.update(max_deviation=float(dev.max()), energy0=float(energy[0]), dt=traj.dt)
    ctx.figure("klimontovich_deviation", [_curve("max_j |z_j(t) - z_j^Vlasov(t)|", traj.times[idx], dev[idx])],
               "N-body vs Vlasov particle flow", "t", "deviation")
    ctx.figure("nbody_energy", [_curve("E(t) - E(0)", traj.times[idx], energy - energy[0])],
               "N-body energy error", "t", "energy error")
    sub_t = Trajectory(traj.times[idx], traj.positions[idx], traj.momenta[idx], traj.dt, traj.scheme)
    sub_v = VlasovParticleSolution(sol.times[idx], sol.atoms[idx], sol.weights, sol.dt, V)
    ctx.artifacts["nbody_trajectory.csv"] = sub_t.to_csv
    ctx.artifacts["vlasov_particles.csv"] = sub_v.to_csv


def _dobrushin_pair(cfg: ExperimentConfig, p: int) -> dict:
    V = cfg.build_potential()
    f = cfg.build_density()
    d, n = cfg.d, cfg.n_list[0]
    opts = cfg.options
    rng = substream(cfg.seed, p, 2)
    a = f.sample(n, substream(cfg.seed, p, 0))
    b = f.sample(n, substream(cfg.seed, p, 1))
    shift = rng.uniform(-opts["shift"], opts["shift"], 2 * d)
    b = shift + rng.uniform(*opts["spread"]) * b
    f0, g0 = EmpiricalMeasure(a), EmpiricalMeasure(b)
    _, plan = mk_distance(f0, g0, 1, ground="sum")
    every = _snapshot_every(cfg.t_end, cfg.dt, cfg.snapshots)
    times, D, sf, sg = coupled_growth(f0, g0, plan, V, cfg.t_end, cfg.dt, every, return_solutions=True)
    out = {"t": times, "D": D, "sum": [], "l2": [], "m_f": [], "m_g": []}
    for k in range(len(times)):
        ft, gt = sf.measure(k), sg.measure(k)
        out["sum"].append(mk_distance(ft, gt, 1, ground="sum")[0])
        out["l2"].append(mk_distance(ft, gt, 1)[0])
        out["m_f"].append(first_moment(ft))
        out["m_g"].append(first_moment(gt))
    return {k: np.asarray(v, dtype=float) for k, v in out.items()}


def dobrushin(cfg: ExperimentConfig, ctx: RunContext) -> None:
    ex = cfg.experiment
    V = cfg.build_potential()
    n = cfg.n_list[0]
    rate = dobrushin_rate(V)
    mrate = moment_growth_rate(V)
    slack = cfg.options["slack"]
    res = ctx.map(_dobrushin_pair, [(cfg, p) for p in range(cfg.trials)])
    for p, r in enumerate(res):
        lab = f"pair {p}"
        for k in range(1, len(r["t"])):
            t = r["t"][k]
            ctx.row(ex, "mk1-sum-metric", r["sum"][k], r["sum"][0] * np.exp(rate * t), slack,
                    anchor=A_DOB, label=lab, t=t, n=n)
            ctx.row(ex, "mk1-euclidean-sqrt2", r["l2"][k], np.sqrt(2) * r["l2"][0] * np.exp(rate * t), slack,
                    anchor=A_DOB, label=lab, t=t, n=n)
            ctx.row(ex, "mk1-euclidean-raw", r["l2"][k], r["l2"][0] * np.exp(rate * t), slack,
                    anchor=A_DOB, label=lab, t=t, n=n, gate=False)
            ctx.row(ex, "coupling-cost-growth", r["D"][k], r["D"][0] * np.exp(mrate * t), slack,
                    anchor=A_COUPLING, label=lab, t=t, n=n)
            ctx.row(ex, "coupling-dominates-mk1", r["sum"][k], r["D"][k], 1e-9,
                    anchor=A_COUPLING, label=lab, t=t, n=n)
            ctx.row(ex, "first-moment-f", r["m_f"][k], r["m_f"][0] * np.exp(mrate * t), slack,
                    anchor=A_MOMENT, label=lab, t=t, n=n)
            ctx.row(ex, "first-moment-g", r["m_g"][k], r["m_g"][0] * np.exp(mrate * t), slack,
                    anchor=A_MOMENT, label=lab, t=t, n=n)
    t = res[0]["t"]
    meas = np.array([r["sum"] for r in res])
    bound = np.array([r["sum"][0] * np.exp(rate * t) for r in res])
    se = np.sqrt(len(res))
    ctx.figure("dobrushin", [
        _curve("measured MK1 (mean over pairs)", t, meas.mean(0), meas.std(0) / se),
        _curve("stability bound (mean over pairs)", t, bound.mean(0), bound.std(0) / se)],
        "MK1 stability of Vlasov solutions", "t", "MK1 (sum metric)")
    ctx.info.update(rate=rate, moment_rate=mrate, pairs=len(res))


def _fg_one(cfg: ExperimentConfig, n: int) -> np.ndarray:
    o = cfg.options
    return fg_trial_distances(cfg.build_density(), n, cfg.trials, cfg.seed, o["estimator"],
                              o["ref_factor"] * max(cfg.n_list), cap=max(4096, max(cfg.n_list)))


def fournier_guillin(cfg: ExperimentConfig, ctx: RunContext) -> None:
    ex = cfg.experiment
    o = cfg.options
    f = cfg.build_density()
    samples = np.array(ctx.map(_fg_one, [(cfg, n) for n in cfg.n_list]))
    r = fg_result(f, cfg.n_list, samples, f.q, o["estimator"])
    se = np.hypot(r.stderrs[:-1], r.stderrs[1:])
    for k in range(len(r.n_list) - 1):
        ctx.row(ex, "mean-strictly-decreasing", r.means[k + 1] + o["n_stderr"] * se[k], r.means[k],
                anchor=A_FG, label=f"N={r.n_list[k]}->{r.n_list[k + 1]}", n=r.n_list[k + 1])
    ctx.row(ex, "loglog-slope", r.slope, o["slope_max"], anchor=A_FG)
    for q, gate in ((o["q_envelope"], True), (r.q, False)):
        c, env, tol, _ = r.envelope_check(q, o["n_stderr"])
        for n, m, e, t in zip(r.n_list, r.means, env, tol):
            ctx.row(ex, f"below-envelope-q{q:g}", m, e, t, anchor=A_FG, n=n, gate=gate)
    c, env, _, _ = r.envelope_check(o["q_envelope"])
    ctx.info.update(r.summary())
    ctx.figure("fournier_guillin", [
        _curve("mean MK1", r.n_list, r.means, r.stderrs),
        _curve(f"envelope q={o['q_envelope']:g}", r.n_list, env)],
        "Empirical measure convergence", "N", "E MK1", logx=True, logy=True,
        annotation=f"fitted slope {r.slope:.6f}")
    ctx.artifacts["fg.csv"] = r.to_csv
    ctx.artifacts["fg_summary.json"] = r.to_json


# --- quantum --------------------------------------------------------------

def _grid(cfg: ExperimentConfig) -> SpatialGrid:
    return SpatialGrid(cfg.grid["M"], float(cfg.grid["L"]), cfg.d)


def _energy_drift(values, t_end):
    v = np.asarray(values)
    return float(np.abs(v - v[0]).max() / max(1.0, abs(v[0])) / max(t_end, 1e-300))


def _qmf_initial(cfg: ExperimentConfig) -> WaveFunction:
    q, p, w = cfg.options["packet"]
    return gaussian_packet(_grid(cfg), q, p, w, cfg.scale)


def _qmf_one(cfg: ExperimentConfig, n: int, cache_dir, config_hash) -> dict:
    name = f"quantum_meanfield-N{n}"
    hit = _cache_get(cache_dir, config_hash, name)
    if hit is not None:
        Psi, meta = hit
        return {"Psi": Psi, **meta}
    V = cfg.build_potential()
    Psi0 = product_state([_qmf_initial(cfg)] * n)
    every = _snapshot_every(cfg.t_end, cfg.dt, cfg.snapshots)
    series = nbody_schrodinger_evolve(Psi0, V, cfg.scale, cfg.t_end, cfg.dt, every, bosonic=True,
                                      cap=cfg.options["amplitude_cap"])
    a = series[-1].amplitudes
    meta = {
        "energies": [nbody_energy(s, V) for s in series],
        "norms": [s.norm() for s in series],
        "symmetry": float(max(np.abs(np.swapaxes(a, 0, j) - a).max() for j in range(1, n))),
    }
    _cache_put(cache_dir, config_hash, name, series[-1], meta)
    return {"Psi": series[-1], **meta}


def quantum_meanfield(cfg: ExperimentConfig, ctx: RunContext) -> None:
    ex = cfg.experiment
    o = cfg.options
    V = cfg.build_potential()
    psi0 = _qmf_initial(cfg)
    every = _snapshot_every(cfg.t_end, cfg.dt, cfg.snapshots)
    hart = hartree_evolve(psi0, V, cfg.scale, cfg.t_end, cfg.dt, every)
    psi_t = hart[-1]
    norms = [s.norm() for s in hart]
    energies = [hartree_energy(s, V) for s in hart]
    ctx.row(ex, "hartree-norm-drift", max(abs(v - 1.0) for v in norms), o["norm_tol"], anchor=A_UNITARY)
    ctx.row(ex, "hartree-energy-drift-per-time", _energy_drift(energies, cfg.t_end), o["energy_drift_tol"],
            anchor=A_ENERGY)
    res = ctx.map(_qmf_one, [(cfg, n, ctx.cache_dir, ctx.config_hash) for n in cfg.n_list])
    ops = []
    for n, r in zip(cfg.n_list, res):
        op, pickl = mf_error(r["Psi"], psi_t)
        ops.append(op)
        bound = mean_field_bound(n, cfg.t_end, V, cfg.scale)
        ctx.row(ex, "operator-norm-bound", op, bound, anchor=A_QMF, t=cfg.t_end, n=n)
        ctx.row(ex, "pickl-functional", pickl, 1.0, anchor=A_QMF, t=cfg.t_end, n=n, gate=False)
        ctx.row(ex, "nbody-norm-drift", max(abs(v - 1.0) for v in r["norms"]), o["norm_tol"],
                anchor=A_UNITARY, n=n)
        ctx.row(ex, "nbody-energy-drift-per-time", _energy_drift(r["energies"], cfg.t_end),
                o["energy_drift_tol"], anchor=A_ENERGY, n=n)
        ctx.row(ex, "bosonic-symmetry", r["symmetry"], 1e-12, anchor=A_UNITARY, n=n)
        R = reduce_density(r["Psi"], 1)
        ev = R.eigenvalues()
        ctx.row(ex, "marginal-psd", -ev.min(), 1e-10, anchor=A_DENSITY, n=n)
        ctx.row(ex, "marginal-trace", abs(R.trace() - 1.0), 1e-8, anchor=A_DENSITY, n=n)
    for k in range(len(ops) - 1):
        ctx.row(ex, "operator-norm-nonincreasing", ops[k + 1], ops[k], o["monotone_slack"], anchor=A_QMF,
                label=f"N={cfg.n_list[k]}->{cfg.n_list[k + 1]}", n=cfg.n_list[k + 1])
    ctx.figure("quantum_meanfield", [
        _curve("||R_N:1(t) - |psi(t)><psi(t)|||", cfg.n_list, ops),
        _curve("bound", cfg.n_list, [mean_field_bound(n, cfg.t_end, V, cfg.scale) for n in cfg.n_list])],
        "Mean-field error at t_end", "N", "operator norm", logy=True)
    ctx.figure("hartree_energy", [_curve("E(t) - E(0)", [s.t for s in hart], np.array(energies) - energies[0])],
               "Hartree energy error", "t", "energy error")


def _smooth_amplitudes(grid: SpatialGrid, n: int, rng: np.random.Generator, kmax: int = 4) -> np.ndarray:
    modes = np.r_[0:kmax + 1, grid.M - kmax:grid.M]
    shape = (len(modes),) * n
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    coef = np.zeros((grid.M,) * n, dtype=complex)
    coef[np.ix_(*[modes] * n)] = c
    return np.fft.ifftn(coef)


def _random_symmetric_state(grid, n, scale, rng) -> WaveFunction:
    return WaveFunction.normalized(symmetrize(_smooth_amplitudes(grid, n, rng)), grid, scale)


def _random_orbital(grid, scale, rng) -> WaveFunction:
    return WaveFunction.normalized(_smooth_amplitudes(grid, 1, rng), grid, scale)


def _duality_triple(cfg: ExperimentConfig, trial: int) -> dict:
    V = cfg.build_potential()
    g = _grid(cfg)
    rng = substream(cfg.seed, 5, trial)
    n = cfg.n_list[trial % len(cfg.n_list)]
    Psi = _random_symmetric_state(g, n, cfg.scale, rng)
    phi = _random_orbital(g, cfg.scale, rng)
    t = float(rng.uniform(0.0, cfg.t_end))
    Psi_t = nbody_schrodinger_evolve(Psi, V, cfg.scale, t, cfg.dt, 10**9, bosonic=True,
                                     cap=cfg.options["amplitude_cap"])[-1] if t > 0 else Psi
    B = projector_matrix(phi)
    klim = klimontovich_expectation(Psi_t, B)
    marg = reduce_density(Psi_t, 1).expectation(B)
    return {"n": n, "t": t, "klim": klim, "marg": marg}


def klimontovich_quantum(cfg: ExperimentConfig, ctx: RunContext) -> None:
    ex = cfg.experiment
    o = cfg.options
    V = cfg.build_potential()
    g = _grid(cfg)
    for r in ctx.map(_duality_triple, [(cfg, k) for k in range(cfg.trials)]):
        ctx.row(ex, "duality-klimontovich-vs-marginal", abs(r["klim"] - r["marg"]), o["duality_tol"],
                anchor=A_QDUAL, t=r["t"], n=r["n"])
    n = cfg.n_list[0]
    rng = substream(cfg.seed, 6)
    Psi = _random_symmetric_state(g, n, cfg.scale, rng)
    steps = o["residual_steps"]
    series = nbody_schrodinger_evolve(Psi, V, cfg.scale, steps * cfg.dt, cfg.dt, 1, bosonic=True,
                                      cap=o["amplitude_cap"])
    h = series[1].t - series[0].t
    budget = 10 * h * h + 1e-8
    curves = []
    for j in range(o["residual_observables"]):
        B = projector_matrix(_random_orbital(g, cfg.scale, rng))
        res = qklim_residual(series, B, V)
        ctx.row(ex, "klimontovich-equation-residual", res.max(), budget, anchor=A_QKLIM,
                label=f"observable {j}", n=n)
        curves.append(_curve(f"observable {j}", [s.t for s in series[1:-1]], res))
        for s in (series[0], series[-1]):
            br = interaction_bracket_expectation(s, B, V)
            cm = interaction_commutator_expectation(s, B, V)
            ctx.row(ex, "bracket-vs-commutator", abs(br - cm), o["bracket_tol"], anchor=A_BRACKET,
                    label=f"observable {j}", t=s.t, n=n)
    ident = multiplication_matrix(np.ones(g.M))
    ctx.row(ex, "bracket-identity-vanishes", abs(interaction_bracket_expectation(series[-1], ident, V)),
            o["bracket_tol"], anchor=A_BRACKET, n=n)
    ctx.info.update(residual_budget=budget, residual_dt=h)
    ctx.figure("qklim_residual", curves, "Klimontovich equation residual", "t", "residual", logy=True)


# --- semiclassical --------------------------------------------------------

def _cell_gaussian(x, xi, q, p, var):
    X, P = np.meshgrid(x, xi, indexing="ij")
    return np.exp(-((X - q) ** 2 + (P - p) ** 2) / (2 * var)) / (2 * np.pi * var)


def _random_mixture_state(rng, eps) -> DensityOperator:
    g = semiclassical_grid(eps)
    kernel = np.zeros((g.M, g.M), dtype=complex)
    weights = rng.dirichlet(np.ones(int(rng.integers(1, 4))))
    for w in weights:
        a = np.zeros(g.M, dtype=complex)
        for _ in range(int(rng.integers(1, 4))):
            c = rng.standard_normal() + 1j * rng.standard_normal()
            a += c * coherent_state(g, rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), eps).amplitudes
        a /= np.sqrt(g.h * np.vdot(a, a).real)
        kernel += w * np.outer(a, a.conj())
    return DensityOperator(kernel, g, 1)


def _wh_trial(cfg: ExperimentConfig, trial: int) -> dict:
    o = cfg.options
    rng = substream(cfg.seed, 7, trial)
    eps = o["eps_list"][trial % len(o["eps_list"])]
    R = _random_mixture_state(rng, eps)
    W = wigner_transform(R, eps)
    H = husimi_transform(R, eps, W)
    Hc = husimi_coherent(R, eps, H.x, H.xi)
    atoms = np.column_stack([rng.uniform(-2, 2, 5), rng.uniform(-1.5, 1.5, 5)])
    T = toeplitz_quantize(EmpiricalMeasure(atoms, rng.dirichlet(np.ones(5))), eps, R.grid)
    return {"eps": eps, "psd": -R.eigenvalues().min(), "w_mass": abs(W.mass() - 1), "h_min": -H.values.min(),
            "h_mass": abs(H.mass() - 1), "smooth": np.abs(H.values - Hc.values).max(),
            "t_psd": -T.eigenvalues().min(), "t_trace": abs(T.trace() - 1)}


def wigner_husimi_suite(cfg: ExperimentConfig, ctx: RunContext) -> None:
    ex = cfg.experiment
    o = cfg.options
    slices = []
    for eps in o["eps_list"]:
        lab = f"eps={eps:g}"
        g = semiclassical_grid(eps)
        R = DensityOperator.pure(excited_state(g, eps))
        W = wigner_transform(R, eps)
        H = husimi_transform(R, eps, W)
        ctx.row(ex, "excited-origin-value", abs(W.at(0.0, 0.0) * np.pi * eps + 1.0), o["value_rtol"],
                anchor=A_WIGNER, label=lab)
        ctx.row(ex, "excited-origin-negative", W.at(0.0, 0.0), 0.0, anchor=A_WIGNER, label=lab)
        ctx.row(ex, "wigner-mass", abs(W.mass() - 1.0), o["mass_tol"], anchor=A_WMASS, label=lab)
        ctx.row(ex, "wigner-duality-defect", W.duality_defect(), 1e-10, anchor=A_WMASS, label=lab)
        ctx.row(ex, "husimi-floor", -H.values.min(), -o["husimi_floor"], anchor=A_HUSIMI, label=lab)
        ctx.row(ex, "husimi-mass", abs(H.mass() - 1.0), o["husimi_mass_tol"], anchor=A_HUSIMI, label=lab)
        q, p = 0.5, -0.3
        Rc = DensityOperator.pure(coherent_state(g, q, p, eps))
        Wc = wigner_transform(Rc, eps)
        Hc = husimi_transform(Rc, eps, Wc)
        ctx.row(ex, "coherent-wigner-gaussian", np.abs(Wc.values - _cell_gaussian(Wc.x, Wc.xi, q, p, eps / 2)).max(),
                o["coherent_tol"], anchor=A_COHERENT, label=lab)
        ctx.row(ex, "coherent-husimi-gaussian", np.abs(Hc.values - _cell_gaussian(Hc.x, Hc.xi, q, p, eps)).max(),
                o["coherent_tol"], anchor=A_COHERENT, label=lab)
        mean, cov = Hc.moments()
        ctx.row(ex, "coherent-husimi-moments", max(np.abs(mean - [q, p]).max(), np.abs(cov - eps * np.eye(2)).max()),
                o["coherent_tol"], anchor=A_COHERENT, label=lab)
        tag = f"{eps:g}".replace(".", "p")
        ctx.artifacts[f"wigner_excited_eps{tag}.csv"] = W.to_csv
        ctx.artifacts[f"husimi_excited_eps{tag}.dat"] = H.to_gnuplot
        j = int(np.argmin(np.abs(W.xi)))
        slices.append(_curve(f"W(x, 0), {lab}", W.x, W.values[:, j]))
        slices.append(_curve(f"Q(x, 0), {lab}", H.x, H.values[:, j]))
    ctx.figure("wigner_excited_slice", slices, "Excited state at zero momentum", "x", "density")
    for k, r in enumerate(ctx.map(_wh_trial, [(cfg, k) for k in range(cfg.trials)])):
        lab = f"mixture {k}, eps={r['eps']:g}"
        ctx.row(ex, "mixture-psd", r["psd"], 1e-10, anchor=A_DENSITY, label=lab)
        ctx.row(ex, "mixture-wigner-mass", r["w_mass"], o["mass_tol"], anchor=A_WMASS, label=lab)
        ctx.row(ex, "mixture-husimi-floor", r["h_min"], -o["husimi_floor"], anchor=A_HUSIMI, label=lab)
        ctx.row(ex, "mixture-husimi-mass", r["h_mass"], o["husimi_mass_tol"], anchor=A_HUSIMI, label=lab)
        ctx.row(ex, "husimi-smoothing-vs-coherent", r["smooth"], o["coherent_tol"], anchor=A_HUSIMI, label=lab)
        ctx.row(ex, "toeplitz-psd", r["t_psd"], -o["toeplitz_floor"], anchor=A_TOEPLITZ, label=lab)
        ctx.row(ex, "toeplitz-trace", r["t_trace"], 1e-8, anchor=A_TOEPLITZ, label=lab)


def _mixture_atoms(rng, count):
    k = int(rng.integers(2, 5))
    means = rng.uniform(-1.5, 1.5, (k, 2))
    stds = rng.uniform(0.2, 0.6, k)
    comp = rng.choice(k, size=count, p=rng.dirichlet(np.ones(k)))
    return means[comp] + stds[comp, None] * rng.standard_normal((count, 2))


def _sandwich_trial(cfg: ExperimentConfig, trial: int) -> dict:
    o = cfg.options
    eps = o["sandwich_eps"]
    g = _grid(cfg)
    rng = substream(cfg.seed, 11, trial)
    f = EmpiricalMeasure(_mixture_atoms(rng, o["atoms"]))
    f2 = EmpiricalMeasure(_mixture_atoms(rng, o["atoms"]))
    R = toeplitz_quantize(f, eps, g)
    H = husimi_transform(R, eps)
    b = pseudo_distance_bounds(f, R, eps, mu_opt=f, cap=o["husimi_cap"], husimi=H)
    b2 = pseudo_distance_bounds(f2, R, eps, cap=o["husimi_cap"], husimi=H)
    return {"b": b, "b2": b2, "mk2_ff": mk_distance(f, f2, 2)[0]}


def pseudo_distance_suite(cfg: ExperimentConfig, ctx: RunContext) -> None:
    ex = cfg.experiment
    o = cfg.options
    tol = o["pinned_tol"]
    for eps in o["pinned_eps"]:
        g = semiclassical_grid(eps)
        for q, p in o["pinned_points"]:
            lab = f"eps={eps:g}, z=({q:g}, {p:g})"
            R = DensityOperator.pure(coherent_state(g, q, p, eps))
            b = pseudo_distance_bounds(EmpiricalMeasure(np.array([[q, p]], dtype=float)), R, eps)
            ctx.row(ex, "pinned-lower", abs(b.lower - b.d_eps), tol, anchor=A_LB, label=lab)
            ctx.row(ex, "pinned-upper-trivial", abs(b.upper_trivial - b.d_eps), tol, anchor=A_UB, label=lab)
            ctx.row(ex, "pinned-husimi-mk2", abs(b.mk2_sq_husimi - 2 * b.d_eps), tol + b.tolerance,
                    anchor=A_LB, label=lab)
            ctx.row(ex, "lower-at-least-d-eps", b.d_eps, b.lower, anchor=A_LB, label=lab)
    eps = o["sandwich_eps"]
    res = ctx.map(_sandwich_trial, [(cfg, k) for k in range(cfg.trials)])
    for k, r in enumerate(res):
        b, b2 = r["b"], r["b2"]
        lab = f"mixture {k}"
        ctx.row(ex, "toeplitz-husimi-mk2", b.mk2_sq_husimi, 2 * b.d_eps, b.tolerance, anchor=A_UB, label=lab)
        ctx.row(ex, "lower-le-upper-toeplitz", b.lower, b.upper_toeplitz, b.tolerance, anchor=A_UB, label=lab)
        ctx.row(ex, "lower-le-upper-trivial", b.lower, b.upper_trivial, b.tolerance, anchor=A_UB, label=lab)
        ctx.row(ex, "triangle-second-measure", np.sqrt(max(b2.lower - b2.tolerance, 0.0)),
                r["mk2_ff"] + np.sqrt(b.upper), anchor=A_TRI, label=lab)
    ctx.info.update(sandwich_eps=eps)
    ks = np.arange(len(res))
    ctx.figure("toeplitz_sandwich", [
        _curve("MK2(f, Husimi R)^2", ks, [r["b"].mk2_sq_husimi for r in res], [r["b"].tolerance for r in res]),
        _curve("lower bound", ks, [r["b"].lower for r in res]),
        _curve("Toeplitz upper bound", ks, [r["b"].upper_toeplitz for r in res]),
        _curve("2 d eps", ks, [2 * r["b"].d_eps for r in res])],
        f"Pseudo-distance bounds for Toeplitz states, eps={eps:g}", "mixture", "squared cost")


# --- joint limit ----------------------------------------------------------

def joint_limit_gamma(V) -> float:
    """1 + 2 max(1, 2 Lip(grad V)^2) from the analytic constants."""
    return 1.0 + 2.0 * max(1.0, 2.0 * V.lip_grad**2)


def joint_limit_bound(V, n: int, t: float, eps: float, d: int = 1) -> float:
    """d eps (1 + e^{G t}) + (2 ||grad V||)^2 / (N - 1) (e^{G t} - 1) / G."""
    G = joint_limit_gamma(V)
    e = np.exp(G * t)
    return d * eps * (1.0 + e) + (2.0 * V.sup_grad) ** 2 / (n - 1) * (e - 1.0) / G


def _joint_draw(cfg: ExperimentConfig, draw: int, M: int, L: float) -> tuple[np.ndarray, np.ndarray]:
    V = cfg.build_potential()
    g = SpatialGrid(M, L)
    eps, n = cfg.scale, cfg.n_list[0]
    centers = cfg.build_density().sample(n, substream(cfg.seed, 13, draw))
    Psi0 = product_state([coherent_state(g, c[0], c[1], eps) for c in centers])
    Psi = nbody_schrodinger_evolve(Psi0, V, eps, cfg.t_end, cfg.dt, 10**9,
                                   cap=cfg.options["amplitude_cap"])[-1]
    return one_body_marginal(Psi0).kernel, one_body_marginal(Psi).kernel


def _mk2_sq_to_husimi(f, kernel, g, eps, cap):
    H = husimi_transform(DensityOperator(kernel, g, 1, validate=False), eps)
    hm, delta2 = grid_to_measure(H, cap)
    mk2 = mk_distance(f, hm, 2, cap=max(cap, f.size, hm.size))[0]
    return mk2**2, 2 * mk2 * np.sqrt(delta2) + delta2, H


def _joint_quantum(cfg, ctx, M, L):
    g = SpatialGrid(M, L)
    draws = ctx.map(_joint_draw, [(cfg, k, M, L) for k in range(cfg.trials)])
    k0 = np.array([d[0] for d in draws])
    kt = np.array([d[1] for d in draws])
    return g, k0, kt


def joint_limit(cfg: ExperimentConfig, ctx: RunContext) -> None:
    ex = cfg.experiment
    o = cfg.options
    V = cfg.build_potential()
    eps, n, d = cfg.scale, cfg.n_list[0], cfg.d
    if n < 2:
        raise ValueError("joint_limit needs N >= 2")
    nb = o["batches"]
    if cfg.trials % nb:
        raise ValueError("trials must be a multiple of batches")
    f0 = EmpiricalMeasure(cfg.build_density().sample(o["classical_atoms"], substream(cfg.seed, 14)))
    ft = evolve_vlasov(f0, V, cfg.t_end, o["classical_dt"]).final
    g, k0, kt = _joint_quantum(cfg, ctx, cfg.grid["M"], float(cfg.grid["L"]))
    bound = joint_limit_bound(V, n, cfg.t_end, eps, d)
    cap = o["husimi_cap"]

    lhs, disc, H = _mk2_sq_to_husimi(ft, kt.mean(0), g, eps, cap)
    batch = [_mk2_sq_to_husimi(ft, b.mean(0), g, eps, cap)[0] for b in np.split(kt, nb)]
    mc = o["n_stderr"] * np.std(batch, ddof=1) / np.sqrt(nb)
    ctx.row(ex, "joint-limit-inequality", lhs, bound, mc + disc, anchor=A_JOINT, t=cfg.t_end, n=n)
    for j, v in enumerate(batch):
        ctx.row(ex, "joint-limit-inequality-batch", v, bound, disc, anchor=A_JOINT, label=f"batch {j}",
                t=cfg.t_end, n=n, gate=False)
    lhs0, disc0, _ = _mk2_sq_to_husimi(f0, k0.mean(0), g, eps, cap)
    ctx.row(ex, "joint-limit-initial", lhs0, 2 * d * eps, disc0, anchor=A_JOINT, t=0.0, n=n, gate=False)
    R = DensityOperator(kt.mean(0), g, 1, validate=False)
    ev = R.eigenvalues()
    ctx.row(ex, "averaged-marginal-psd", -ev.min(), 1e-10, anchor=A_DENSITY, n=n)
    ctx.row(ex, "averaged-marginal-trace", abs(R.trace() - 1.0), 1e-8, anchor=A_DENSITY, n=n)
    X = np.abs(H.x)[:, None] * np.ones_like(H.values)
    edge = float(H.values[X > 0.375 * g.L].sum() * H.cell_area)
    ctx.row(ex, "husimi-edge-mass", edge, 1e-3, anchor=A_JOINT, n=n, gate=False)
    if o["box_doubling"]:
        g2, _, kt2 = _joint_quantum(cfg, ctx, 2 * cfg.grid["M"], 2 * float(cfg.grid["L"]))
        lhs2 = _mk2_sq_to_husimi(ft, kt2.mean(0), g2, eps, cap)[0]
        ctx.row(ex, "box-doubling-change", abs(lhs2 - lhs), mc + disc, anchor=A_JOINT, n=n, gate=False)
    ctx.info.update(gamma=joint_limit_gamma(V), bound=bound, lhs=lhs, mc_tolerance=mc, grid_tolerance=disc,
                    margin=bound + mc + disc - lhs)
    ctx.figure("joint_limit", [
        _curve("MK2^2 per batch", np.arange(nb), batch),
        _curve("MK2^2 all draws", np.arange(nb), [lhs] * nb, [mc + disc] * nb),
        _curve("bound", np.arange(nb), [bound] * nb)],
        "Joint mean-field and classical limit at t_end", "batch", "squared distance")
    ctx.artifacts["husimi_marginal.dat"] = H.to_gnuplot


EXPERIMENT_FUNCS = {
    "klimontovich_equivalence": klimontovich_equivalence,
    "dobrushin": dobrushin,
    "fournier_guillin": fournier_guillin,
    "quantum_meanfield": quantum_meanfield,
    "klimontovich_quantum": klimontovich_quantum,
    "wigner_husimi_suite": wigner_husimi_suite,
    "pseudo_distance_suite": pseudo_distance_suite,
    "joint_limit": joint_limit,
}
