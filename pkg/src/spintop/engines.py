"""Batched ensemble drivers for the three trajectory engines.

Every trajectory owns a counter-based random stream keyed by
(master_seed, *stream_prefix, trajectory index), and the batch is evolved
in fixed-size chunks, so results are bitwise independent of both the
thread count and the batch composition.  Threads only parallelize chunks;
all draws happen up front in trajectory order.

Engines:

* ``classical``: the deterministic mean-field map; the record column is
  the noise-free value J * n_z read out before each kick.
* ``hp``: Gaussian (mean, covariance) evolution with sampled records.
* ``quantum``: exact pure-state evolution in the symmetric subspace,
  capped at ``QUANTUM_MAX_ATOMS`` atoms.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .classical import ckt_step
from .dicke import moments_rows, spin_coherent_state
from .errors import EngineMismatchError, ParameterError
from .gaussian import (
    coherent_cov_rows,
    hp_condition_arrays,
    hp_decoherent_step_arrays,
    hp_feedback_arrays,
    hp_step_arrays,
)
from .metrics import TrajectoryRecord
from .protocol import (
    ProtocolParams,
    apply_kraus_rows,
    feedback_rows,
    sample_outcomes_rows,
)
from .streams import substream

__all__ = [
    "ENGINES",
    "QUANTUM_MAX_ATOMS",
    "TrajectorySet",
    "expand_ics",
    "run_trajectories",
    "replay_hp",
    "GaussianGenerator",
]

ENGINES = ("classical", "hp", "quantum")

# 2J+1 amplitudes per trajectory get expensive in memory and time well
# before this; beyond it the Gaussian engine is the supported surrogate.
QUANTUM_MAX_ATOMS = 10_000

# Work is split into fixed slices of the trajectory batch.  The slice
# boundaries depend only on the batch size, never on the thread count.
_CHUNK = 64


@dataclass(frozen=True)
class TrajectorySet:
    """Outcome of an ensemble run: per-step means and records for each trajectory."""

    engine: str
    master_seed: int
    stream_prefix: tuple
    ics: np.ndarray         # (B, 3) starting directions
    ic_index: np.ndarray    # (B,) grid cell of each trajectory
    traj_index: np.ndarray  # (B,) stream index of each trajectory
    n: np.ndarray           # (B, n_steps, 3)
    m: np.ndarray           # (B, n_steps)
    V: np.ndarray | None = None  # (B, n_steps, 3, 3)

    @property
    def n_traj(self) -> int:
        return self.n.shape[0]

    @property
    def n_steps(self) -> int:
        return self.n.shape[1]

    def record(self, b: int) -> TrajectoryRecord:
        return TrajectoryRecord(
            engine=self.engine,
            ic_index=int(self.ic_index[b]),
            traj_index=int(self.traj_index[b]),
            master_seed=self.master_seed,
            ic=self.ics[b],
            n=self.n[b],
            m=self.m[b],
            V=None if self.V is None else self.V[b],
        )

    def validate(self) -> None:
        for b in range(self.n_traj):
            self.record(b).validate()


def expand_ics(ic_cells: np.ndarray, n_realizations: int):
    """Flatten an IC grid into per-trajectory arrays.

    Trajectory ``c * n_realizations + r`` is realization r of cell c; the
    index doubles as the stream key, so the draws are a pure function of
    (cells, n_realizations, master seed) and nothing else.
    """
    cells = np.atleast_2d(np.asarray(ic_cells, dtype=float))
    if cells.ndim != 2 or cells.shape[1] != 3:
        raise ParameterError("initial conditions must have shape (n_cells, 3)")
    if int(n_realizations) != n_realizations or n_realizations < 1:
        raise ParameterError("n_realizations must be a positive integer")
    n_real = int(n_realizations)
    b = cells.shape[0] * n_real
    ics = np.repeat(cells, n_real, axis=0)
    ic_index = np.repeat(np.arange(cells.shape[0], dtype=np.int64), n_real)
    traj_index = np.arange(b, dtype=np.int64)
    return ics, ic_index, traj_index


def _chunk_slices(b: int) -> list[slice]:
    return [slice(s, min(s + _CHUNK, b)) for s in range(0, b, _CHUNK)]


def _run_chunks(worker, slices, threads: int) -> None:
    if threads <= 1 or len(slices) <= 1:
        for sl in slices:
            worker(sl)
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        # consume the iterator so worker exceptions propagate
        list(ex.map(worker, slices))


def _coherent_rows(cells: np.ndarray, j: float) -> np.ndarray:
    """Spin-coherent amplitudes for each IC cell direction."""
    dim = int(round(2 * j)) + 1
    rows = np.empty((cells.shape[0], dim), dtype=np.complex128)
    for c, vec in enumerate(cells):
        nn = np.linalg.norm(vec)
        if nn <= 0:
            raise ParameterError("initial condition must be a nonzero vector")
        theta = float(np.arccos(np.clip(vec[2] / nn, -1.0, 1.0)))
        phi = float(np.arctan2(vec[1], vec[0]))
        rows[c] = spin_coherent_state(theta, phi, j).amps
    return rows


def run_trajectories(
    engine: str,
    params: ProtocolParams,
    ic_cells: np.ndarray,
    n_realizations: int,
    master_seed: int,
    *,
    stream_prefix: tuple = (),
    record_V: bool = False,
    decoherence_g: float = 0.0,
    threads: int = 1,
) -> TrajectorySet:
    """Evolve ``n_realizations`` trajectories from every IC cell.

    ``decoherence_g`` adds per-step isotropic relaxation (hp engine only).
    ``record_V`` also stores the scaled covariance track (hp and quantum).
    """
    if engine not in ENGINES:
        raise ParameterError(f"unknown engine {engine!r}; choose from {ENGINES}")
    if engine == "quantum" and params.n_atoms > QUANTUM_MAX_ATOMS:
        raise EngineMismatchError(
            f"quantum engine supports at most {QUANTUM_MAX_ATOMS} atoms "
            f"(requested {params.n_atoms}); use the hp engine instead"
        )
    if decoherence_g < 0:
        raise ParameterError("decoherence_g must be non-negative")
    if decoherence_g > 0 and engine != "hp":
        raise EngineMismatchError(
            "per-step decoherence is only modeled by the hp engine"
        )
    if record_V and engine == "classical":
        raise ParameterError("the classical engine has no covariance track")

    ics, ic_index, traj_index = expand_ics(ic_cells, n_realizations)
    b = ics.shape[0]
    t_steps = params.n_steps
    n_out = np.empty((b, t_steps, 3))
    m_out = np.empty((b, t_steps))
    v_out = np.empty((b, t_steps, 3, 3)) if record_V else None

    # all stochastic draws happen here, in trajectory order
    z_noise = None
    u_noise = None
    if engine in ("hp", "quantum") and t_steps:
        z_noise = np.empty((b, t_steps))
        if engine == "quantum":
            u_noise = np.empty((b, t_steps))
        for i in range(b):
            rng = substream(master_seed, *stream_prefix, int(traj_index[i]))
            if u_noise is not None:
                u_noise[i] = rng.random(t_steps)
            z_noise[i] = rng.standard_normal(t_steps)

    if engine == "classical":

        def worker(sl: slice) -> None:
            cur = ics[sl].copy()
            for t in range(t_steps):
                m_out[sl, t] = params.j * cur[:, 2]
                cur = ckt_step(cur, params.k, params.p)
                n_out[sl, t] = cur

    elif engine == "hp":

        def worker(sl: slice) -> None:
            nc = ics[sl].copy()
            vc = coherent_cov_rows(nc)
            for t in range(t_steps):
                if decoherence_g > 0:
                    nc, vc, mt = hp_decoherent_step_arrays(
                        nc, vc, params.j, params, z_noise[sl, t], decoherence_g
                    )
                else:
                    nc, vc, mt = hp_step_arrays(
                        nc, vc, params.j, params, z_noise[sl, t]
                    )
                m_out[sl, t] = mt
                n_out[sl, t] = nc
                if v_out is not None:
                    v_out[sl, t] = vc

    else:
        cell_rows = _coherent_rows(np.atleast_2d(np.asarray(ic_cells, float)), params.j)
        rows0 = np.repeat(cell_rows, int(n_realizations), axis=0)

        def worker(sl: slice) -> None:
            rows = rows0[sl].copy()
            for t in range(t_steps):
                mt = sample_outcomes_rows(
                    rows, params.j, params.sigma, u_noise[sl, t], z_noise[sl, t]
                )
                rows = apply_kraus_rows(rows, params.j, mt, params.sigma)
                rows = feedback_rows(rows, params.j, mt, params)
                mos = moments_rows(rows, params.j)
                m_out[sl, t] = mt
                n_out[sl, t] = [mo.n for mo in mos]
                if v_out is not None:
                    v_out[sl, t] = [mo.V for mo in mos]

    _run_chunks(worker, _chunk_slices(b), threads)
    return TrajectorySet(
        engine=engine,
        master_seed=int(master_seed),
        stream_prefix=tuple(stream_prefix),
        ics=ics,
        ic_index=ic_index,
        traj_index=traj_index,
        n=n_out,
        m=m_out,
        V=v_out,
    )


def replay_hp(
    params: ProtocolParams,
    ics: np.ndarray,
    m: np.ndarray,
    *,
    record_V: bool = False,
) -> TrajectorySet:
    """Drive the Gaussian engine with an externally supplied record.

    Used to compare engines on *shared* measurement outcomes: each step
    conditions on the given m and applies the record-driven feedback.
    There is no sampling, so the run is deterministic.
    """
    ics = np.atleast_2d(np.asarray(ics, dtype=float))
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if ics.ndim != 2 or ics.shape[1] != 3:
        raise ParameterError("initial conditions must have shape (B, 3)")
    if m.shape[0] != ics.shape[0]:
        raise ParameterError("record batch must match the number of trajectories")
    b, t_steps = m.shape
    n_out = np.empty((b, t_steps, 3))
    v_out = np.empty((b, t_steps, 3, 3)) if record_V else None
    nc = ics.copy()
    vc = coherent_cov_rows(nc)
    for t in range(t_steps):
        nc, vc = hp_condition_arrays(nc, vc, params.j, m[:, t], params.sigma)
        nc, vc = hp_feedback_arrays(nc, vc, m[:, t], params)
        n_out[:, t] = nc
        if v_out is not None:
            v_out[:, t] = vc
    return TrajectorySet(
        engine="hp",
        master_seed=0,
        stream_prefix=("replay",),
        ics=ics,
        ic_index=np.arange(b, dtype=np.int64),
        traj_index=np.arange(b, dtype=np.int64),
        n=n_out,
        m=m.copy(),
        V=v_out,
    )


class GaussianGenerator:
    """Gaussian-engine stepper for the divergence driver.

    State is a [means, covariances] pair; shadows share the fiducial's
    noise (the driver repeats draws across the group), and ``set_points``
    replaces only the means, so each member keeps its own covariance.
    """

    noise_dim = 1

    def __init__(self, params: ProtocolParams, decoherence_g: float = 0.0):
        if decoherence_g < 0:
            raise ParameterError("decoherence_g must be non-negative")
        self.params = params
        self.decoherence_g = float(decoherence_g)

    def start(self, points: np.ndarray):
        pts = np.array(points, dtype=float, copy=True)
        return [pts, coherent_cov_rows(pts)]

    def step(self, state, noise):
        n, v = state
        xi = np.asarray(noise, dtype=float)[:, 0]
        if self.decoherence_g > 0:
            n2, v2, _ = hp_decoherent_step_arrays(
                n, v, self.params.j, self.params, xi, self.decoherence_g
            )
        else:
            n2, v2, _ = hp_step_arrays(n, v, self.params.j, self.params, xi)
        return [n2, v2]

    def points(self, state) -> np.ndarray:
        return state[0]

    def set_points(self, state, points: np.ndarray):
        return [np.array(points, dtype=float, copy=True), state[1]]
