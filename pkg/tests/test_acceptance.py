"""Top-level acceptance checks for the measurement-feedback simulator.

Each test pins one advertised behavior of the package at a stated
tolerance, exercising the public APIs end to end with frozen seeds so
the suite is reproducible run to run:

1.  The Gaussian-Kraus measurement family resolves the identity.
2.  Record-averaged trajectory ensembles reproduce the dephasing map.
3.  The dephasing map equals the Jz Lindblad semigroup, and its rate
    is minimized at the predicted resolution.
4.  The exact-state engine tracks a Gaussian replay of its own record.
5.  Closeness to the classical map is best at intermediate resolution,
    improving with atom number.
6.  At large atom number the measured dynamics reproduce classical
    phase-space structure with high similarity.
7.  Divergence-rate estimates recover regular and chaotic behavior and
    converge to the classical rate with atom number.
8.  Higher optical depth yields better classical agreement under
    scattering decoherence at fixed resolution.
9.  Every command-line run is byte-deterministic in the thread count.
"""

import math
import os
import textwrap

import numpy as np

from spintop.atomlight import od_params
from spintop.classical import (
    ClassicalGenerator,
    LyapunovOptions,
    chaotic_asymptote,
    estimate_lyapunov,
    fibonacci_sphere,
)
from spintop.cli import main
from spintop.config import DEFAULT_SIGMA_GRID
from spintop.dicke import m_values, spin_coherent_state
from spintop.engines import GaussianGenerator, replay_hp, run_trajectories
from spintop.metrics import max_classical_distance, similarity
from spintop.protocol import (
    DensityMatrix,
    ProtocolParams,
    apply_kraus_rows,
    averaged_step,
    dephase,
    feedback_rows,
    gamma_rate,
    kraus_weights,
    optimal_sigma_sq,
    sample_outcomes_rows,
    trace_distance,
)
from spintop.runner import angles_to_vectors
from spintop.streams import substream


def _mean_se(values):
    vals = np.asarray(values, dtype=float)
    mean = math.fsum(vals.tolist()) / vals.size
    var = math.fsum(((x - mean) ** 2 for x in vals.tolist())) / (vals.size - 1)
    return mean, math.sqrt(var / vals.size)


def test_criterion_1_measurement_family_resolves_identity():
    # integral over the record of K_m^dag K_m must be the identity on
    # every Dicke level, to 1e-8, across coarse and fine resolutions
    j = 20.0
    worst = 0.0
    for sigma in (0.5, 2.0, 10.0):
        half = j + 10.0 * sigma
        grid = np.linspace(-half, half, 4001)
        w2 = np.stack([kraus_weights(m, sigma, j) ** 2 for m in grid])
        total = np.trapezoid(w2, grid, axis=0)
        worst = max(worst, float(np.max(np.abs(total - 1.0))))
    assert worst < 1e-8


def test_criterion_2_trajectory_average_matches_dephasing_map():
    # averaging many sampled measurement+feedback trajectories must
    # reproduce the record-averaged channel (dephase then kick) in
    # trace distance
    params = ProtocolParams.from_scaled(
        k=3.0, sigma_over_sqrtj=0.9, n_atoms=20, n_steps=5)
    j = params.j
    psi = spin_coherent_state(2.0, 1.0, j)
    n_mc = 10_000
    rows = np.tile(psi.amps, (n_mc, 1))
    rng = substream(11, 0)
    uniforms = rng.random((n_mc, params.n_steps))
    normals = rng.standard_normal((n_mc, params.n_steps))
    for t in range(params.n_steps):
        m = sample_outcomes_rows(rows, j, params.sigma,
                                 uniforms[:, t], normals[:, t])
        rows = apply_kraus_rows(rows, j, m, params.sigma)
        rows = feedback_rows(rows, j, m, params)
    mc_avg = DensityMatrix(j, rows.T @ rows.conj() / n_mc)
    rho = DensityMatrix.from_pure(psi)
    for _ in range(params.n_steps):
        rho = averaged_step(rho, params)
    assert trace_distance(mc_avg, rho) < 0.03


def test_criterion_3_dephasing_semigroup_and_optimal_resolution():
    # (a) the dephasing factor applied between kicks equals the Jz
    # Lindblad semigroup exp(Gamma * L) acting on the same state
    from scipy.linalg import expm

    j = 2.0
    gamma = gamma_rate(2.5, 0.8 * math.sqrt(j), j)
    a = spin_coherent_state(1.1, 0.3, j)
    b = spin_coherent_state(2.2, -1.0, j)
    rho = DensityMatrix(j, 0.6 * np.outer(a.amps, a.amps.conj())
                        + 0.4 * np.outer(b.amps, b.amps.conj()))
    jz = np.diag(m_values(j)).astype(complex)
    eye = np.eye(int(2 * j + 1), dtype=complex)
    lind = -(np.kron(jz @ jz, eye) + np.kron(eye, (jz @ jz).T)
             - 2.0 * np.kron(jz, jz.T))
    vec = expm(gamma * lind) @ rho.rho.reshape(-1)
    direct = dephase(rho, gamma)
    assert np.max(np.abs(vec.reshape(rho.rho.shape) - direct.rho)) < 1e-10

    # (b) the decoherence rate is smallest at the predicted resolution,
    # to within one grid cell of a dense log-spaced scan
    j_big, k = 50.0, 2.0
    s2_grid = np.geomspace(1.0, 100.0, 81)
    rates = [gamma_rate(k, math.sqrt(s2), j_big) for s2 in s2_grid]
    i = int(np.argmin(rates))
    assert 0 < i < s2_grid.size - 1
    cell = math.log(s2_grid[1] / s2_grid[0])
    assert abs(math.log(s2_grid[i] / optimal_sigma_sq(k, j_big))) <= cell


def test_criterion_4_exact_state_tracks_gaussian_replay():
    # drive the Gaussian engine with the record sampled by the exact
    #1001-level simulation; the two Bloch tracks must agree closely
    params = ProtocolParams.from_scaled(
        k=1.5, sigma_over_sqrtj=0.9, n_atoms=1000, n_steps=30)
    cells = angles_to_vectors(((2.0, 1.0),))
    ts = run_trajectories("quantum", params, cells, 1, 3)
    rep = replay_hp(params, cells, ts.m)
    gap = float(np.max(np.abs(ts.n[0, :, 2] - rep.n[0, :, 2])))
    assert gap < 0.05


def test_criterion_5_resolution_sweep_has_interior_minimum():
    # mean max-distance to the classical map versus sigma is U-shaped:
    # too fine disturbs, too coarse misinforms the feedback; the large
    # ensemble does at least as well everywhere in the useful window
    k, n_steps, seed, n_real = 1.5, 30, 21, 10
    cells = fibonacci_sphere(100)
    curves = {}
    for n_atoms in (1_000, 100_000):
        ref = run_trajectories(
            "classical",
            ProtocolParams.from_scaled(k=k, sigma_over_sqrtj=0.9,
                                       n_atoms=n_atoms, n_steps=n_steps),
            cells, 1, seed)
        means, ses = [], []
        for si, s_over in enumerate(DEFAULT_SIGMA_GRID):
            params = ProtocolParams.from_scaled(
                k=k, sigma_over_sqrtj=s_over, n_atoms=n_atoms,
                n_steps=n_steps)
            ts = run_trajectories("hp", params, cells, n_real, seed,
                                  stream_prefix=(si,))
            dists = [max_classical_distance(ts.n[b],
                                            ref.n[int(ts.ic_index[b])])
                     for b in range(ts.n_traj)]
            mean, se = _mean_se(dists)
            means.append(mean)
            ses.append(se)
        curves[n_atoms] = (np.array(means), np.array(ses))

    for n_atoms, (means, _) in curves.items():
        i = int(np.argmin(means))
        assert 0 < i < len(DEFAULT_SIGMA_GRID) - 1, n_atoms
        assert 0.5 <= DEFAULT_SIGMA_GRID[i] <= 2.0, n_atoms
    m_small, s_small = curves[1_000]
    m_large, s_large = curves[100_000]
    for si, s_over in enumerate(DEFAULT_SIGMA_GRID):
        if 0.3 <= s_over <= 2.2:
            slack = 2.0 * math.hypot(s_small[si], s_large[si])
            assert m_large[si] <= m_small[si] + slack, s_over


def test_criterion_6_large_ensembles_reproduce_classical_structure():
    # at N = 1e7 the measured dynamics shadow the classical map over a
    # 100-point IC grid with median similarity above 0.95
    seed, n_atoms = 17, 10_000_000
    cells = fibonacci_sphere(100)
    for k, n_steps in ((1.5, 8), (2.5, 8), (4.0, 8), (1.5, 30)):
        params = ProtocolParams.from_scaled(
            k=k, sigma_over_sqrtj=0.9, n_atoms=n_atoms, n_steps=n_steps)
        ts = run_trajectories("hp", params, cells, 1, seed)
        ref = run_trajectories("classical", params, cells, 1, seed)
        valid = []
        for b in range(ts.n_traj):
            s = similarity(ts.n[b], ref.n[int(ts.ic_index[b])])
            if s.valid:
                valid.append(s.S)
        assert len(valid) >= 90, (k, n_steps)
        assert float(np.median(valid)) > 0.95, (k, n_steps)


def test_criterion_7_divergence_rates():
    seed = 31
    ics = fibonacci_sphere(200)
    opts = LyapunovOptions()

    # (a) regular regime: rates indistinguishable from zero
    for k in (0.5, 1.0, 1.5, 2.0):
        est = estimate_lyapunov(ClassicalGenerator(k, math.pi / 2), ics,
                                opts, seed)
        assert abs(est.lambda_largest) < 0.05, k

    # (b) deep chaos approaches ln(k/2) within 10 percent
    est12 = estimate_lyapunov(
        ClassicalGenerator(12.0, math.pi / 2), ics,
        LyapunovOptions(n_steps=2000), seed)
    target = chaotic_asymptote(12.0)
    assert abs(est12.lambda_largest - target) / target < 0.10

    # (c, d) the measured dynamics at k = 8: the rate converges to the
    # classical one as the ensemble grows, and agrees within errors at
    # N = 1e7
    est_cl = estimate_lyapunov(ClassicalGenerator(8.0, math.pi / 2), ics,
                               opts, seed)
    hp_opts = LyapunovOptions(n_steps=100)
    diffs = []
    for n_atoms in (10**3, 10**4, 10**5, 10**6, 10**7):
        params = ProtocolParams.from_scaled(
            k=8.0, sigma_over_sqrtj=0.9, n_atoms=n_atoms, n_steps=1)
        est = estimate_lyapunov(GaussianGenerator(params), ics, hp_opts,
                                seed)
        diffs.append((abs(est.lambda_largest - est_cl.lambda_largest),
                      est.stderr))
    d_last, se_last = diffs[-1]
    assert d_last <= 2.0 * math.hypot(se_last, est_cl.stderr)
    for (d_prev, se_prev), (d_next, se_next) in zip(diffs, diffs[1:]):
        assert d_next <= d_prev + math.hypot(se_prev, se_next)


def test_criterion_8_optical_depth_controls_agreement():
    # at fixed resolution the scattering cost per step scales as 1/OD;
    # similarity to the classical map must drop markedly from OD = 300
    # to OD = 30
    n_atoms, seed = 1_000_000, 1
    params = ProtocolParams.from_scaled(
        k=1.5, sigma_over_sqrtj=4.0, n_atoms=n_atoms, n_steps=30)
    cells = fibonacci_sphere(100)
    ref = run_trajectories("classical", params, cells, 1, seed)
    mean_s = {}
    for oi, od in enumerate((300.0, 30.0)):
        light = od_params(n_atoms, sigma0_over_A=od / n_atoms,
                          sigma_sq=params.sigma**2, gamma_s=1.0)
        ts = run_trajectories(
            "hp", params, cells, 2, seed, stream_prefix=(oi,),
            decoherence_g=light.gamma_s * light.T)
        valid = []
        for b in range(ts.n_traj):
            s = similarity(ts.n[b], ref.n[int(ts.ic_index[b])])
            if s.valid:
                valid.append(s.S)
        mean_s[od] = math.fsum(valid) / len(valid)
    assert mean_s[300.0] - mean_s[30.0] >= 0.2


_RUNS = {
    "trajectory": ("""
        [protocol]
        k = 1.5
        N = 40
        n_steps = 4

        [run]
        n_trajectories = 2
    """, ["--engine", "quantum"]),
    "portrait": ("""
        [protocol]
        k = 1.5
        N = 1000
        n_steps = 5

        [run]
        n_trajectories = 2
        ic_grid_size = 6
    """, []),
    "lyapunov": ("""
        [protocol]
        k = 3.0
        N = 100

        [lyapunov]
        ic_grid_size = 10
        n_steps = 50
    """, []),
    "averaged": ("""
        [protocol]
        k = 1.5
        N = 30
        n_steps = 3
    """, []),
    "sme": ("""
        [protocol]
        k = 1.5
        N = 20
        n_steps = 2

        [atomlight]
        sigma0_over_A = 0.5

        [run]
        n_trajectories = 1
    """, []),
    "similarity": ("""
        [protocol]
        k = 1.5
        N = 1000
        n_steps = 4

        [run]
        n_trajectories = 2
        ics = [[2.0, 1.0], [1.0, 0.5]]
    """, []),
    "sweep-sigma": ("""
        [protocol]
        k = 1.5
        N = 1000
        n_steps = 4

        [run]
        n_trajectories = 2
        ic_grid_size = 5

        [sweep]
        sigma_grid = [0.5, 1.0]
    """, []),
    "sweep-od": ("""
        [protocol]
        k = 1.5
        N = 1000
        n_steps = 4

        [run]
        n_trajectories = 2
        ic_grid_size = 5

        [sweep]
        od_grid = [300.0, 30.0]
    """, []),
}


def test_criterion_9_outputs_independent_of_thread_count(tmp_path):
    # every subcommand, run twice with different worker counts, must
    # produce byte-identical files; only the timings sidecar may differ
    for command, (text, extra) in _RUNS.items():
        cfg = tmp_path / f"{command}.toml"
        cfg.write_text(textwrap.dedent(text), encoding="utf-8")
        out1 = str(tmp_path / f"{command}-t1")
        out2 = str(tmp_path / f"{command}-t3")
        argv = [command, "--config", str(cfg), "--seed", "7"] + extra
        assert main(argv + ["--threads", "1", "--out", out1]) == 0, command
        assert main(argv + ["--threads", "3", "--out", out2]) == 0, command
        names = sorted(os.listdir(out1))
        assert names == sorted(os.listdir(out2)), command
        assert "summary.jsonl" in names and "timings.jsonl" in names
        for name in names:
            if name == "timings.jsonl":
                continue
            with open(os.path.join(out1, name), "rb") as f:
                a = f.read()
            with open(os.path.join(out2, name), "rb") as f:
                b = f.read()
            assert a == b, (command, name)
