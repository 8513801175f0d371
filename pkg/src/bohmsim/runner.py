"""Run orchestration: co-evolve the two levels, record series, persist bundles.

The wave functional advances on its own clock and is sampled quasi-statically:
each first-quantized step uses the functional magnitude frozen at the start of
the step, then the functional state is advanced to the next step boundary.
Bundles are written atomically; re-running a persisted config reproduces every
numeric CSV byte for byte.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .funcdyn import (TimeStepperConfig, build_functional_hamiltonian,
                      step_functional)
from .funcspace import functional_polar_split, init_wave_functional
from .io_utils import atomic_write_json, atomic_write_text, write_csv
from .modschrod import (MODE_MODIFIED, MODE_MODIFIED_ANTI, MODE_STANDARD,
                        EvolutionState, step_modified, step_pair, step_standard)
from .polar import standard_quantum_potential, to_polar, velocity_field
from .qcorr import (build_qcorrection, continuity_source,
                    modified_quantum_potential)
from .scenario import ScenarioConfig
from .trajectories import integrate, sample_initial


@dataclass
class SnapshotRecord:
    time: float
    amplitude: np.ndarray
    phase: np.ndarray
    q_standard: np.ma.MaskedArray
    q_modified: np.ma.MaskedArray
    q_density: np.ma.MaskedArray
    source: np.ma.MaskedArray
    velocity: np.ma.MaskedArray


@dataclass
class RunResult:
    config: ScenarioConfig
    times: np.ndarray                 # output times
    norms: np.ndarray
    survival_norms: np.ndarray
    integrated_sources: np.ndarray
    snapshots: list
    trajectory_times: Optional[np.ndarray] = None
    trajectory_positions: Optional[np.ndarray] = None
    psi_history: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def _functional_state(cfg: ScenarioConfig):
    f = cfg.functional
    lattice = cfg.functional_lattice()
    dom = cfg.config_grid()
    psi = init_wave_functional(dom, f.center, f.width)
    H = build_functional_hamiltonian(cfg.potential, lattice, dom)
    return psi, H


def run_simulation(cfg: ScenarioConfig) -> RunResult:
    """Execute one scenario and collect every recorded observable in memory."""
    t_start = time.perf_counter()
    params = cfg.params
    grid = cfg.grid
    psi0 = cfg.initial_field()
    state = EvolutionState(0.0, psi0.copy(),
                           psi_bar=psi0.copy() if cfg.mode == MODE_MODIFIED_ANTI else None,
                           mode=cfg.mode)

    functional_psi = None
    rfun = None
    ham = None
    if cfg.mode != MODE_STANDARD:
        functional_psi, ham = _functional_state(cfg)
        rfun = functional_polar_split(functional_psi)
        n_sub = max(1, int(round(cfg.dt / cfg.functional_dt)))
        f_cfg = TimeStepperConfig(dt=cfg.dt / n_sub, scheme=cfg.functional_scheme)

    times, norms, survivals, int_sources = [], [], [], []
    snapshots = []
    vel_history = []

    def record(current: EvolutionState, current_rfun):
        pol = to_polar(current.psi, params)
        q_std = standard_quantum_potential(pol, params)
        vel = velocity_field(pol, params)
        if current_rfun is not None:
            f = cfg.functional
            bundle = build_qcorrection(current_rfun, pol, cfg.potential, params,
                                       t=current.time, mode=f.coupling,
                                       qbar_mode=f.qbar_mode)
            dec = modified_quantum_potential(pol, current_rfun, cfg.potential,
                                             params, t=current.time,
                                             convention=f.convention)
            src = continuity_source(pol, current_rfun, cfg.potential, params,
                                    t=current.time, convention=f.convention)
            q_mod = dec.total
            q_dens = bundle.q_density
        else:
            zeros = np.ma.masked_array(np.zeros(grid.sites), mask=np.zeros(grid.sites, bool))
            q_mod, q_dens, src = q_std, zeros, zeros
        times.append(current.time)
        norms.append(current.norm)
        survivals.append(current.survival_norm)
        int_sources.append(float(grid.spacing * np.ma.filled(src, 0.0).sum()))
        snapshots.append(SnapshotRecord(
            time=current.time, amplitude=pol.amplitude, phase=pol.phase_action,
            q_standard=q_std, q_modified=q_mod, q_density=q_dens, source=src,
            velocity=vel))
        vel_history.append(np.ma.filled(vel, 0.0))

    record(state, rfun)
    psi_history = [state.psi.values.copy()]
    for step in range(cfg.n_steps):
        if cfg.mode == MODE_STANDARD:
            state = step_standard(state, cfg.potential, params, cfg.dt, step)
        else:
            f = cfg.functional
            if cfg.mode == MODE_MODIFIED_ANTI:
                state = step_pair(state, cfg.potential, rfun, params, cfg.dt,
                                  mode=f.coupling, qbar_mode=f.qbar_mode,
                                  step_index=step)
            else:
                state = step_modified(state, cfg.potential, rfun, params, cfg.dt,
                                      mode=f.coupling, qbar_mode=f.qbar_mode,
                                      step_index=step)
            if not f.frozen:
                functional_psi = step_functional(functional_psi, ham, f_cfg,
                                                 steps=n_sub)
                rfun = functional_polar_split(functional_psi)
        if (step + 1) % cfg.output_stride == 0 or step + 1 == cfg.n_steps:
            record(state, rfun)
            psi_history.append(state.psi.values.copy())

    result = RunResult(config=cfg, times=np.array(times), norms=np.array(norms),
                       survival_norms=np.array(survivals),
                       integrated_sources=np.array(int_sources),
                       snapshots=snapshots, psi_history=psi_history)

    if cfg.traj_count > 0:
        density0 = snapshots[0].amplitude ** 2
        starts = sample_initial(grid, density0, cfg.traj_count, cfg.traj_seed)
        ens = integrate(starts, grid, result.times, np.array(vel_history),
                        substeps=cfg.traj_substeps,
                        interpolation=cfg.traj_interpolation, seed=cfg.traj_seed)
        result.trajectory_times = ens.times
        result.trajectory_positions = ens.positions

    result.timings["wall_seconds"] = time.perf_counter() - t_start
    return result


def write_bundle(result: RunResult, out_dir):
    """Persist a run: verbatim config, metadata, and the numeric CSV tables."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    if cfg.raw_text:
        atomic_write_text(os.path.join(out_dir, "config.json"), cfg.raw_text)

    import scipy

    atomic_write_json(os.path.join(out_dir, "metadata.json"), {
        "bohmsim_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "mode": cfg.mode,
        "steps": cfg.n_steps,
        "dt": cfg.dt,
        "trajectory_seed": cfg.traj_seed,
        "wall_seconds": result.timings.get("wall_seconds"),
        "final_norm": result.norms[-1],
        "final_survival_norm": result.survival_norms[-1],
    })

    write_csv(os.path.join(out_dir, "series.csv"),
              ["t", "norm", "survival_norm", "integrated_source"],
              [(t, n, s, q) for t, n, s, q in
               zip(result.times, result.norms, result.survival_norms,
                   result.integrated_sources)])

    x = cfg.grid.coordinates
    rows = []
    for snap in result.snapshots:
        for j in range(cfg.grid.sites):
            rows.append((snap.time, x[j], snap.amplitude[j], snap.phase[j],
                         snap.q_standard[j], snap.q_modified[j],
                         snap.q_density[j], snap.source[j]))
    write_csv(os.path.join(out_dir, "snapshots.csv"),
              ["t", "x", "R", "S", "Q_std", "Q_modified", "q_density", "source"],
              rows)

    if result.trajectory_positions is not None:
        rows = []
        for pid in range(result.trajectory_positions.shape[1]):
            for k, t in enumerate(result.trajectory_times):
                rows.append((pid, t, result.trajectory_positions[k, pid]))
        write_csv(os.path.join(out_dir, "trajectories.csv"),
                  ["particle_id", "t", "x"], rows)
    return out_dir


@dataclass
class ModeComparison:
    times: np.ndarray
    l2_distance: np.ndarray
    q_std_final: np.ma.MaskedArray
    q_modified_final: np.ma.MaskedArray
    displacement_mean: float
    displacement_max: float


def compare_modes(cfg: ScenarioConfig) -> ModeComparison:
    """Run standard and modified side by side with identical seeds."""
    import dataclasses

    std_cfg = dataclasses.replace(cfg, mode=MODE_STANDARD)
    mod_cfg = dataclasses.replace(cfg, mode=MODE_MODIFIED)
    if cfg.traj_count == 0:
        std_cfg = dataclasses.replace(std_cfg, traj_count=256)
        mod_cfg = dataclasses.replace(mod_cfg, traj_count=256)
    std = run_simulation(std_cfg)
    mod = run_simulation(mod_cfg)
    a = cfg.grid.spacing
    l2 = np.array([np.sqrt(a * np.sum(np.abs(pa - pb) ** 2))
                   for pa, pb in zip(std.psi_history, mod.psi_history)])
    disp = np.abs(std.trajectory_positions[-1] - mod.trajectory_positions[-1])
    return ModeComparison(times=std.times, l2_distance=l2,
                          q_std_final=std.snapshots[-1].q_standard,
                          q_modified_final=mod.snapshots[-1].q_modified,
                          displacement_mean=float(disp.mean()),
                          displacement_max=float(disp.max()))


def write_comparison(comp: ModeComparison, cfg: ScenarioConfig, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "compare_psi.csv"), ["t", "l2_distance"],
              list(zip(comp.times, comp.l2_distance)))
    x = cfg.grid.coordinates
    write_csv(os.path.join(out_dir, "compare_potential.csv"),
              ["x", "Q_std", "Q_modified"],
              [(x[j], comp.q_std_final[j], comp.q_modified_final[j])
               for j in range(cfg.grid.sites)])
    atomic_write_json(os.path.join(out_dir, "compare_summary.json"), {
        "max_l2_distance": float(np.max(comp.l2_distance)),
        "trajectory_displacement_mean": comp.displacement_mean,
        "trajectory_displacement_max": comp.displacement_max,
    })
    return out_dir
