"""Subcommand drivers: validate, simulate, aggregate, and write outputs.

Each driver resolves its inputs from the validated Config, runs the
requested computation, and writes one data table plus a deterministic
``summary.jsonl``.  Wall-clock data goes to ``timings.jsonl`` only, so
two runs with the same config and seed produce byte-identical data files
regardless of thread count.
"""

from __future__ import annotations

import dataclasses
import math
import os
import time

import numpy as np

from .atomlight import DENSITY_MATRIX_MAX_J, od_params, sme_protocol_step
from .classical import (
    ClassicalGenerator,
    LyapunovOptions,
    estimate_lyapunov,
    fibonacci_sphere,
)
from .config import Config
from .dicke import spin_coherent_state
from .engines import GaussianGenerator, run_trajectories
from .errors import EngineMismatchError
from .io import (
    ensure_out_dir,
    write_summary,
    write_table,
    write_timings,
    write_trajectories,
)
from .metrics import max_classical_distance, similarity
from .protocol import DensityMatrix, ProtocolParams, averaged_step, rho_bloch
from .streams import substream

__all__ = ["COMMANDS", "DEFAULT_ENGINE", "run_command"]

# engine used when the CLI flag is absent; None means the command does
# not take an engine (it evolves a density matrix directly)
DEFAULT_ENGINE = {
    "trajectory": "classical",
    "portrait": "hp",
    "lyapunov": "classical",
    "averaged": None,
    "sme": None,
    "similarity": "hp",
    "sweep-sigma": "hp",
    "sweep-od": "hp",
}

# classical Benettin products tolerate long horizons; stochastic
# generators drift off the common-noise linearization, so keep it short
_LYAP_STEPS = {"classical": 500, "hp": 100}


def protocol_params(cfg: Config) -> ProtocolParams:
    p = cfg.protocol
    return ProtocolParams.from_scaled(
        k=p.k, sigma_over_sqrtj=p.sigma_over_sqrtj, n_atoms=p.n_atoms,
        n_steps=p.n_steps, p=p.p,
    )


def angles_to_vectors(pairs) -> np.ndarray:
    out = np.empty((len(pairs), 3))
    for i, (theta, phi) in enumerate(pairs):
        st = math.sin(theta)
        out[i] = (st * math.cos(phi), st * math.sin(phi), math.cos(theta))
    return out


def ic_cells(cfg: Config) -> np.ndarray:
    if cfg.run.ic_grid_size is not None:
        return fibonacci_sphere(cfg.run.ic_grid_size)
    return angles_to_vectors(cfg.run.ics)


def _mean_se(values) -> tuple[float, float]:
    vals = np.asarray(values, dtype=float)
    mean = math.fsum(vals) / vals.size
    if vals.size < 2:
        return mean, float("nan")
    var = math.fsum((vals - mean) ** 2) / (vals.size - 1)
    return mean, math.sqrt(var / vals.size)


def _require_stochastic(command: str, engine: str) -> None:
    if engine == "classical":
        raise EngineMismatchError(
            f"{command} compares a stochastic engine against the classical "
            "reference; choose hp or quantum"
        )


def _check_dm_cap(command: str, j: float) -> None:
    if j > DENSITY_MATRIX_MAX_J:
        raise EngineMismatchError(
            f"{command} evolves a density matrix, supported up to "
            f"J={DENSITY_MATRIX_MAX_J:g} (requested J={j:g}); reduce N"
        )


def cmd_trajectory(cfg, engine, seed, out_dir, threads, fmt):
    params = protocol_params(cfg)
    cells = ic_cells(cfg)
    ts = run_trajectories(
        engine, params, cells, cfg.run.n_trajectories, seed,
        record_V=(engine != "classical"), threads=threads,
    )
    path = os.path.join(out_dir, f"trajectories.{fmt}")
    rows = write_trajectories(ts, path, fmt)
    return {
        "outputs": [{"file": os.path.basename(path), "rows": rows}],
        "counts": {"n_ics": int(cells.shape[0]), "n_trajectories": ts.n_traj,
                   "n_steps": ts.n_steps},
    }


def _per_ic_scores(ts, ref):
    """Similarity and distance of every trajectory against its cell's reference."""
    scores, dists = [], []
    for b in range(ts.n_traj):
        c = int(ts.ic_index[b])
        scores.append(similarity(ts.n[b], ref.n[c]))
        dists.append(max_classical_distance(ts.n[b], ref.n[c]))
    return scores, dists


def cmd_portrait(cfg, engine, seed, out_dir, threads, fmt):
    params = protocol_params(cfg)
    cells = ic_cells(cfg)
    n_real = cfg.run.n_trajectories
    ts = run_trajectories(engine, params, cells, n_real, seed, threads=threads)
    ref = run_trajectories("classical", params, cells, 1, seed, threads=threads)
    scores, dists = _per_ic_scores(ts, ref)

    rows = []
    cell_means = []
    for c in range(cells.shape[0]):
        sl = slice(c * n_real, (c + 1) * n_real)
        cell_scores = scores[sl]
        valid = [s.S for s in cell_scores if s.valid]
        n_flagged = sum(1 for s in cell_scores if not s.valid)
        mean_s = math.fsum(valid) / len(valid) if valid else float("nan")
        mean_d = math.fsum(dists[sl]) / n_real
        theta = math.acos(max(-1.0, min(1.0, cells[c, 2])))
        phi = math.atan2(cells[c, 1], cells[c, 0])
        rows.append([c, theta, phi, n_real, n_flagged, mean_s, mean_d])
        if valid:
            cell_means.append(mean_s)
    path = os.path.join(out_dir, f"portrait.{fmt}")
    n_rows = write_table(
        path, ["ic_id", "theta", "phi", "n_traj", "n_flagged", "mean_S", "mean_dmax"],
        rows, fmt,
    )
    median_s = float(np.median(cell_means)) if cell_means else float("nan")
    return {
        "outputs": [{"file": os.path.basename(path), "rows": n_rows}],
        "counts": {"n_ics": int(cells.shape[0]), "n_trajectories": ts.n_traj,
                   "n_flagged_cells": int(cells.shape[0]) - len(cell_means)},
        "median_S": median_s,
    }


def cmd_lyapunov(cfg, engine, seed, out_dir, threads, fmt):
    if engine == "quantum":
        raise EngineMismatchError(
            "lyapunov supports the classical and hp engines; the exact-state "
            "engine has no per-step generator for the divergence driver"
        )
    lc = cfg.lyapunov
    n_steps = lc.n_steps if lc.n_steps is not None else _LYAP_STEPS[engine]
    opts = LyapunovOptions(
        d0=lc.d0, n_shadows=lc.n_shadows, renorm_interval=lc.renorm_interval,
        n_steps=n_steps, n_discard=lc.n_discard,
    )
    ics = fibonacci_sphere(lc.ic_grid_size)
    k_grid = cfg.sweep.k_grid if cfg.sweep.k_grid is not None else (cfg.protocol.k,)

    rows = []
    n_failures = 0
    for ki, k in enumerate(k_grid):
        if engine == "classical":
            gen = ClassicalGenerator(k, cfg.protocol.p)
        else:
            p_k = ProtocolParams.from_scaled(
                k=k, sigma_over_sqrtj=cfg.protocol.sigma_over_sqrtj,
                n_atoms=cfg.protocol.n_atoms, n_steps=1, p=cfg.protocol.p,
            )
            gen = GaussianGenerator(p_k)
        est = estimate_lyapunov(gen, ics, opts, seed, stream_prefix=(ki,))
        n_failures += len(est.failures)
        rows.append([float(k), est.lambda_largest, est.stderr, est.variance,
                     est.n_ok, len(est.failures)])
    path = os.path.join(out_dir, f"lyapunov.{fmt}")
    n_rows = write_table(
        path, ["k", "lambda_largest", "stderr", "variance", "n_ok", "n_failed"],
        rows, fmt,
    )
    return {
        "outputs": [{"file": os.path.basename(path), "rows": n_rows}],
        "counts": {"n_k": len(k_grid), "n_ics": int(ics.shape[0]),
                   "n_failed_ics": n_failures},
    }


def cmd_averaged(cfg, engine, seed, out_dir, threads, fmt):
    params = protocol_params(cfg)
    _check_dm_cap("averaged", params.j)
    theta, phi = cfg.run.ics[0]
    psi = spin_coherent_state(theta, phi, params.j)
    rho = DensityMatrix(params.j, np.outer(psi.amps, psi.amps.conj()))
    rows = []
    for t in range(params.n_steps):
        rho = averaged_step(rho, params)
        n = rho_bloch(rho)
        rows.append([t, float(n[0]), float(n[1]), float(n[2]), rho.purity()])
    path = os.path.join(out_dir, f"averaged.{fmt}")
    n_rows = write_table(path, ["step", "n_x", "n_y", "n_z", "purity"], rows, fmt)
    return {
        "outputs": [{"file": os.path.basename(path), "rows": n_rows}],
        "counts": {"n_steps": params.n_steps},
    }


def cmd_sme(cfg, engine, seed, out_dir, threads, fmt):
    params = protocol_params(cfg)
    _check_dm_cap("sme", params.j)
    light = od_params(
        params.n_atoms,
        sigma0_over_A=cfg.atomlight.sigma0_over_a,
        sigma_sq=params.sigma**2,
        gamma_s=cfg.atomlight.gamma_s,
        dt_factor=cfg.atomlight.dt_factor,
    )
    theta, phi = cfg.run.ics[0]
    psi = spin_coherent_state(theta, phi, params.j)
    rows = []
    for ti in range(cfg.run.n_trajectories):
        rng = substream(seed, ti)
        rho = DensityMatrix(params.j, np.outer(psi.amps, psi.amps.conj()))
        for t in range(params.n_steps):
            rho, m = sme_protocol_step(rho, params, light, rng)
            n = rho_bloch(rho)
            rows.append([ti, t, float(m), float(n[0]), float(n[1]), float(n[2]),
                         rho.purity()])
    path = os.path.join(out_dir, f"sme.{fmt}")
    n_rows = write_table(
        path, ["traj_id", "step", "m", "n_x", "n_y", "n_z", "purity"], rows, fmt,
    )
    return {
        "outputs": [{"file": os.path.basename(path), "rows": n_rows}],
        "counts": {"n_trajectories": cfg.run.n_trajectories,
                   "n_steps": params.n_steps,
                   "n_substeps_per_step": light.n_substeps,
                   "od": light.od, "kappa_T": light.kappa * light.T,
                   "gamma_s_T": light.gamma_s * light.T},
    }


def cmd_similarity(cfg, engine, seed, out_dir, threads, fmt):
    _require_stochastic("similarity", engine)
    params = protocol_params(cfg)
    cells = ic_cells(cfg)
    n_real = cfg.run.n_trajectories
    ts = run_trajectories(engine, params, cells, n_real, seed, threads=threads)
    ref = run_trajectories("classical", params, cells, 1, seed, threads=threads)
    scores, dists = _per_ic_scores(ts, ref)
    rows = []
    for b in range(ts.n_traj):
        s = scores[b]
        rows.append([
            int(ts.ic_index[b]), int(ts.traj_index[b]), s.S, s.cor_theta,
            s.cor_phi, s.min_norm_sq, s.flag if s.flag is not None else "",
            dists[b],
        ])
    path = os.path.join(out_dir, f"similarity.{fmt}")
    n_rows = write_table(
        path,
        ["ic_id", "traj_id", "S", "cor_theta", "cor_phi", "min_norm_sq",
         "flag", "d_max"],
        rows, fmt,
    )
    valid = [s.S for s in scores if s.valid]
    return {
        "outputs": [{"file": os.path.basename(path), "rows": n_rows}],
        "counts": {"n_trajectories": ts.n_traj,
                   "n_flagged": ts.n_traj - len(valid)},
        "mean_S": (math.fsum(valid) / len(valid)) if valid else float("nan"),
        "mean_dmax": math.fsum(dists) / len(dists),
    }


def cmd_sweep_sigma(cfg, engine, seed, out_dir, threads, fmt):
    _require_stochastic("sweep-sigma", engine)
    cells = ic_cells(cfg)
    n_real = cfg.run.n_trajectories
    ref = run_trajectories("classical", protocol_params(cfg), cells, 1, seed,
                           threads=threads)
    rows = []
    for si, s_over in enumerate(cfg.sweep.sigma_grid):
        params = ProtocolParams.from_scaled(
            k=cfg.protocol.k, sigma_over_sqrtj=s_over,
            n_atoms=cfg.protocol.n_atoms, n_steps=cfg.protocol.n_steps,
            p=cfg.protocol.p,
        )
        ts = run_trajectories(engine, params, cells, n_real, seed,
                              stream_prefix=(si,), threads=threads)
        _, dists = _per_ic_scores(ts, ref)
        mean_d, se_d = _mean_se(dists)
        rows.append([float(s_over), ts.n_traj, mean_d, se_d])
    path = os.path.join(out_dir, f"sweep_sigma.{fmt}")
    n_rows = write_table(
        path, ["sigma_over_sqrtJ", "n_traj", "mean_dmax", "stderr_dmax"],
        rows, fmt,
    )
    return {
        "outputs": [{"file": os.path.basename(path), "rows": n_rows}],
        "counts": {"n_sigma": len(cfg.sweep.sigma_grid),
                   "n_ics": int(cells.shape[0]),
                   "n_trajectories_per_sigma": int(cells.shape[0]) * n_real},
    }


def cmd_sweep_od(cfg, engine, seed, out_dir, threads, fmt):
    if engine != "hp":
        raise EngineMismatchError(
            "sweep-od models scattering decoherence at the Gaussian level; "
            "only the hp engine is supported"
        )
    params = protocol_params(cfg)
    cells = ic_cells(cfg)
    n_real = cfg.run.n_trajectories
    ref = run_trajectories("classical", params, cells, 1, seed, threads=threads)
    rows = []
    for oi, od in enumerate(cfg.sweep.od_grid):
        light = od_params(
            params.n_atoms,
            sigma0_over_A=od / params.n_atoms,
            sigma_sq=params.sigma**2,
            gamma_s=cfg.atomlight.gamma_s,
            dt_factor=cfg.atomlight.dt_factor,
        )
        g = light.gamma_s * light.T
        ts = run_trajectories(engine, params, cells, n_real, seed,
                              stream_prefix=(oi,), decoherence_g=g,
                              threads=threads)
        scores, _ = _per_ic_scores(ts, ref)
        valid = [s.S for s in scores if s.valid]
        mean_s, se_s = _mean_se(valid) if valid else (float("nan"), float("nan"))
        rows.append([float(od), g, ts.n_traj, ts.n_traj - len(valid),
                     mean_s, se_s])
    path = os.path.join(out_dir, f"sweep_od.{fmt}")
    n_rows = write_table(
        path, ["od", "gamma_s_T", "n_traj", "n_flagged", "mean_S", "stderr_S"],
        rows, fmt,
    )
    return {
        "outputs": [{"file": os.path.basename(path), "rows": n_rows}],
        "counts": {"n_od": len(cfg.sweep.od_grid), "n_ics": int(cells.shape[0]),
                   "n_trajectories_per_od": int(cells.shape[0]) * n_real},
    }


COMMANDS = {
    "trajectory": cmd_trajectory,
    "portrait": cmd_portrait,
    "lyapunov": cmd_lyapunov,
    "averaged": cmd_averaged,
    "sme": cmd_sme,
    "similarity": cmd_similarity,
    "sweep-sigma": cmd_sweep_sigma,
    "sweep-od": cmd_sweep_od,
}


def run_command(command: str, cfg: Config, *, engine: str | None, seed: int,
                out_dir: str, threads: int, fmt: str) -> dict:
    """Execute one subcommand and write its outputs plus summary/timings."""
    driver = COMMANDS[command]
    resolved = DEFAULT_ENGINE[command] if engine is None else engine
    if DEFAULT_ENGINE[command] is None:
        resolved = None  # density-matrix commands take no engine
    t0 = time.perf_counter()
    ensure_out_dir(out_dir)
    summary = driver(cfg, resolved, seed, out_dir, threads, fmt)
    summary.update({
        "command": command,
        "engine": resolved,
        "seed": int(seed),
        "format": fmt,
        "config": dataclasses.asdict(cfg),
    })
    write_summary(os.path.join(out_dir, "summary.jsonl"), summary)
    write_timings(os.path.join(out_dir, "timings.jsonl"), {
        "command": command,
        "threads": int(threads),
        "wall_seconds": time.perf_counter() - t0,
    })
    return summary
