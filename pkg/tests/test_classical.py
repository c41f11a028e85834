"""Classical kicked-top map and the Benettin divergence estimator."""

import numpy as np
import pytest

from spintop.classical import (
    ClassicalGenerator,
    LyapunovOptions,
    chaotic_asymptote,
    ckt_step,
    ckt_trajectory,
    estimate_lyapunov,
    fibonacci_sphere,
    local_lyapunov,
    twist_kick_rotation,
)
from spintop.errors import NumericalDegeneracyError, ParameterError
from spintop.streams import substream


def test_rotation_matrices_orthogonal():
    phi = np.array([0.0, 0.4, -2.2, 9.0])
    r = twist_kick_rotation(phi, np.pi / 2)
    for mat in r:
        assert np.allclose(mat @ mat.T, np.eye(3), atol=1e-14)
        assert np.linalg.det(mat) == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("k", [0.5, 1.5, 3.0, 8.0])
def test_fixed_points_on_y_axis(k):
    for z in (1.0, -1.0):
        p = np.array([0.0, z, 0.0])
        assert np.allclose(ckt_step(p, k), p, atol=1e-15)


@pytest.mark.parametrize("k", [0.7, 2.5, 6.0])
def test_period_four_orbit(k):
    # (1,0,0) -> (0,0,1) -> (-1,0,0) -> (0,0,-1) -> (1,0,0) for any k
    p = np.array([1.0, 0.0, 0.0])
    seen = [p]
    for _ in range(4):
        p = ckt_step(p, k)
        seen.append(p)
    assert np.allclose(seen[1], [0.0, 0.0, 1.0], atol=1e-15)
    assert np.allclose(seen[2], [-1.0, 0.0, 0.0], atol=1e-15)
    assert np.allclose(seen[3], [0.0, 0.0, -1.0], atol=1e-15)
    assert np.allclose(seen[4], [1.0, 0.0, 0.0], atol=1e-15)


def test_norm_conserved_over_long_runs():
    rng = np.random.default_rng(0)
    pts = rng.standard_normal((32, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    for _ in range(200):
        pts = ckt_step(pts, 3.7)
    assert np.abs(np.linalg.norm(pts, axis=1) - 1.0).max() < 1e-12


def test_trajectory_matches_iterated_step():
    ics = fibonacci_sphere(5)
    traj = ckt_trajectory(ics, 2.0, np.pi / 2, 3)
    assert traj.shape == (5, 3, 3)
    cur = ics.copy()
    for t in range(3):
        cur = ckt_step(cur, 2.0)
        assert np.array_equal(traj[:, t], cur)


def test_fibonacci_sphere_properties():
    pts = fibonacci_sphere(200)
    assert pts.shape == (200, 3)
    assert np.abs(np.linalg.norm(pts, axis=1) - 1.0).max() < 1e-12
    # quasi-uniform: both hemispheres populated about equally
    assert abs(int((pts[:, 2] > 0).sum()) - 100) <= 1
    with pytest.raises(ParameterError):
        fibonacci_sphere(0)


def test_chaotic_asymptote():
    assert chaotic_asymptote(12.0) == pytest.approx(np.log(6.0))
    with pytest.raises(ParameterError):
        chaotic_asymptote(0.0)


def test_lyapunov_options_validation():
    with pytest.raises(ParameterError):
        LyapunovOptions(d0=0.0)
    with pytest.raises(ParameterError):
        LyapunovOptions(n_shadows=0)
    with pytest.raises(ParameterError):
        LyapunovOptions(renorm_interval=10, n_steps=5)
    with pytest.raises(ParameterError):
        LyapunovOptions(n_steps=10, renorm_interval=1, n_discard=10)


def test_regular_kick_gives_small_rate():
    opts = LyapunovOptions(n_steps=300, n_discard=10)
    est = estimate_lyapunov(ClassicalGenerator(0.5), fibonacci_sphere(50), opts, 3)
    assert abs(est.lambda_largest) < 0.05
    assert est.n_ok == 50


def test_chaotic_kick_rate_band():
    opts = LyapunovOptions(n_steps=200, n_discard=10)
    est = estimate_lyapunov(ClassicalGenerator(8.0), fibonacci_sphere(50), opts, 5)
    assert 1.15 < est.lambda_largest < 1.35
    assert est.stderr < 0.05


def test_estimate_is_deterministic():
    opts = LyapunovOptions(n_steps=120, n_discard=5)
    ics = fibonacci_sphere(20)
    a = estimate_lyapunov(ClassicalGenerator(3.0), ics, opts, 17, stream_prefix=(2,))
    b = estimate_lyapunov(ClassicalGenerator(3.0), ics, opts, 17, stream_prefix=(2,))
    assert np.array_equal(a.per_ic, b.per_ic)
    assert a.lambda_largest == b.lambda_largest
    c = estimate_lyapunov(ClassicalGenerator(3.0), ics, opts, 18, stream_prefix=(2,))
    assert not np.array_equal(a.per_ic, c.per_ic)


def test_local_matches_grid_entry():
    opts = LyapunovOptions(n_steps=120, n_discard=5)
    ic = np.array([0.3, -0.5, 0.81])
    ic /= np.linalg.norm(ic)
    grid = estimate_lyapunov(ClassicalGenerator(2.5), ic[None, :], opts, 9)
    single = local_lyapunov(ClassicalGenerator(2.5), ic, opts, substream(9, 0))
    assert single == pytest.approx(grid.lambda_largest, abs=1e-12)


class _CollapsingGenerator:
    """Maps every point to one fixed target, destroying all separations."""

    noise_dim = 0

    def start(self, points):
        return np.array(points, dtype=float, copy=True)

    def step(self, state, noise=None):
        return np.tile(np.array([1.0, 0.0, 0.0]), (state.shape[0], 1))

    def points(self, state):
        return state

    def set_points(self, state, points):
        return np.array(points, dtype=float, copy=True)


def test_collapsed_shadows_reported():
    opts = LyapunovOptions(n_steps=30, n_discard=2)
    with pytest.raises(NumericalDegeneracyError):
        estimate_lyapunov(_CollapsingGenerator(), fibonacci_sphere(4), opts, 1)
    with pytest.raises(NumericalDegeneracyError):
        local_lyapunov(_CollapsingGenerator(), np.array([0.0, 0.0, 1.0]), opts,
                       substream(1, 0))


def test_zero_ic_rejected():
    opts = LyapunovOptions(n_steps=20, n_discard=1)
    with pytest.raises(ParameterError):
        local_lyapunov(ClassicalGenerator(1.0), np.zeros(3), opts, substream(0, 0))
