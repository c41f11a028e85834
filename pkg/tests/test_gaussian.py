"""Gaussian large-spin engine: conditioning, backaction, feedback, relaxation."""

import numpy as np
import pytest

from spintop.classical import ckt_step, twist_kick_rotation
from spintop.errors import FrameDegeneracyError, ParameterError
from spintop.gaussian import (
    GaussianSpinState,
    coherent_cov_rows,
    comoving_frame,
    decohere_arrays,
    frames_rows,
    hp_condition,
    hp_condition_arrays,
    hp_decoherent_step_arrays,
    hp_feedback_arrays,
    hp_step,
    hp_step_arrays,
    hp_step_detail,
    noise_variances,
    scs_covariance,
)
from spintop.protocol import ProtocolParams


def params_for(n_atoms, k=1.5, sigma_over=0.9):
    return ProtocolParams.from_scaled(
        k=k, sigma_over_sqrtj=sigma_over, n_atoms=n_atoms, n_steps=1,
    )


def random_directions(b, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((b, 3))
    return v / np.linalg.norm(v, axis=1)[:, None]


def test_coherent_state_covariance():
    s = GaussianSpinState.coherent(1.1, 0.4, 500.0)
    s.validate()
    w = np.linalg.eigvalsh(s.V)
    assert np.allclose(sorted(w), [0.0, 0.5, 0.5], atol=1e-12)
    # no variance along the pointing direction
    assert abs(s.n @ s.V @ s.n) < 1e-12


def test_comoving_frame_orthonormal():
    for seed in range(5):
        n = random_directions(1, seed)[0]
        a = comoving_frame(n)
        assert np.allclose(a @ a.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(a) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(a[:, 2], n, atol=1e-12)


def test_comoving_frame_at_pole():
    a = comoving_frame(np.array([0.0, 0.0, 1.0]))
    assert np.allclose(a[:, 0], [1.0, 0.0, 0.0], atol=1e-15)
    with pytest.raises(FrameDegeneracyError):
        comoving_frame(np.zeros(3))


def test_frames_rows_matches_single():
    n = random_directions(6, 1)
    frames = frames_rows(n)
    for b in range(6):
        assert np.allclose(frames[b], comoving_frame(n[b]), atol=1e-13)
    with pytest.raises(FrameDegeneracyError):
        frames_rows(np.zeros((2, 3)))


def test_coherent_cov_rows_matches_single():
    n = random_directions(4, 2)
    vs = coherent_cov_rows(n)
    for b in range(4):
        assert np.allclose(vs[b], scs_covariance(n[b]), atol=1e-13)


def test_noise_variances_formulas():
    p = params_for(1000, k=2.0)
    dJz2 = 37.0
    s1, s2 = noise_variances(p, dJz2)
    tot = p.sigma**2 + dJz2
    assert s1 == pytest.approx(tot / p.sigma**4, rel=1e-13)
    assert s2 == pytest.approx(p.k**2 * tot / p.j**2, rel=1e-13)
    with pytest.raises(ParameterError):
        noise_variances(p, -1.0)


def test_conditioning_shrinks_measured_variance():
    j = 500.0
    s = GaussianSpinState.coherent(2.0, 1.0, j)
    sigma = 0.9 * np.sqrt(j)
    m = j * s.n[2] + 3.0
    out = hp_condition(s, m, sigma)
    s2 = sigma**2
    big_s = j * s.V[2, 2] + s2
    # Kalman posterior on the measured direction
    assert out.V[2, 2] == pytest.approx(s.V[2, 2] * s2 / big_s, rel=1e-10)
    assert out.V[2, 2] < s.V[2, 2]
    # mean moves toward the record along the z gain
    assert out.n[2] == pytest.approx(s.n[2] + s.V[2, 2] * 3.0 / big_s, rel=1e-10)


def test_backaction_heats_conjugate_direction():
    j = 500.0
    sigma = 4.0
    s = GaussianSpinState.coherent(np.pi / 2, 0.3, j)
    n1, v1 = hp_condition_arrays(
        s.n[None, :], s.V[None, :, :], j, np.array([j * s.n[2]]), sigma
    )
    nh = n1[0] / np.linalg.norm(n1[0])
    c = np.array([0.0, 0.0, 1.0]) - nh[2] * nh
    c2 = float(c @ c)
    u = c / np.sqrt(c2)
    w = np.cross(nh, u)
    h_expected = j * float(n1[0] @ n1[0]) * c2 / (4 * sigma**2)
    got = float(w @ v1[0] @ w) - float(w @ s.V @ w)
    assert got == pytest.approx(h_expected, rel=1e-8)
    assert got > 0


@pytest.mark.parametrize("theta,phi,sigma_over", [
    (2.0, 1.0, 0.9), (1.0, -0.5, 0.3), (2.6, 2.2, 2.0),
])
def test_conditioning_preserves_minimum_uncertainty(theta, phi, sigma_over):
    # the heating term is calibrated so coherent inputs stay at tangent
    # det 1/4 up to an O(1/sqrt(J)) frame correction; check both the
    # smallness and the decay with J
    def tangent_det(j):
        s = GaussianSpinState.coherent(theta, phi, j)
        sigma = sigma_over * np.sqrt(j)
        m = j * s.n[2] + 0.7 * sigma
        n1, v1 = hp_condition_arrays(
            s.n[None, :], s.V[None, :, :], j, np.array([m]), sigma
        )
        tangent = comoving_frame(n1[0])[:, :2]
        return np.linalg.det(tangent.T @ v1[0] @ tangent)

    small = abs(tangent_det(1e3) - 0.25)
    large = abs(tangent_det(1e5) - 0.25)
    assert small < 2e-3
    assert large < 0.3 * small


def test_feedback_is_rigid_rotation():
    j = 500.0
    p = params_for(1000, k=2.0)
    n = random_directions(3, 3)
    V = coherent_cov_rows(n)
    m = np.array([10.0, -40.0, 3.0])
    n2, v2 = hp_feedback_arrays(n, V, m, p)
    r = twist_kick_rotation(p.k * m / j, p.p)
    for b in range(3):
        assert np.allclose(n2[b], r[b] @ n[b], atol=1e-13)
        assert np.allclose(v2[b], r[b] @ V[b] @ r[b].T, atol=1e-13)


def test_norm_clamp_after_rotation():
    p = params_for(1000)
    n = np.array([[0.0, 0.0, 1.0 + 5e-9]])
    V = np.zeros((1, 3, 3))
    n2, _ = hp_feedback_arrays(n, V, np.array([0.0]), p)
    assert np.linalg.norm(n2[0]) <= 1.0 + 1e-12


def test_noiseless_step_retraces_classical_map():
    # zeroed variates make the Gaussian mean identical to the classical
    # map, floating point included
    p = params_for(10**6, k=2.5)
    n = random_directions(8, 4)
    V = coherent_cov_rows(n)
    n2, _, m = hp_step_arrays(n, V, p.j, p, np.zeros(8))
    assert np.array_equal(n2, ckt_step(n, p.k, p.p))
    assert np.array_equal(m, p.j * n[:, 2])


def test_step_detail_reports_noises():
    p = params_for(1000, k=2.0)
    s = GaussianSpinState.coherent(2.0, 1.0, p.j)
    out, m, draw = hp_step_detail(s, p, 1.3)
    nu = np.sqrt(p.sigma**2 + p.j * s.V[2, 2]) * 1.3
    assert m == pytest.approx(p.j * s.n[2] + nu, rel=1e-12)
    assert draw.eta1 == pytest.approx(nu / p.sigma**2, rel=1e-12)
    assert draw.eta2 == pytest.approx(p.k * nu / p.j, rel=1e-12)
    assert draw.dJz2 == pytest.approx(p.j * s.V[2, 2], rel=1e-12)
    out.validate()


def test_step_detail_checks_params():
    s = GaussianSpinState.coherent(1.0, 0.0, 100.0)
    with pytest.raises(ParameterError):
        hp_step_detail(s, params_for(1000), 0.0)


def test_hp_step_none_rng_is_noiseless():
    p = params_for(2000)
    s = GaussianSpinState.coherent(2.0, 1.0, p.j)
    a = hp_step(s, p, None)
    b, _, _ = hp_step_detail(s, p, 0.0)
    assert np.array_equal(a.n, b.n)
    assert np.array_equal(a.V, b.V)


def test_decohere_zero_weight_is_identity():
    n = random_directions(3, 5)
    V = coherent_cov_rows(n) * 1.7
    n2, v2 = decohere_arrays(n, V, 0.0)
    assert np.array_equal(n2, n)
    assert np.array_equal(v2, V)
    # copies, not views
    n2[0, 0] += 1.0
    assert n[0, 0] != n2[0, 0]


def test_decohere_contracts_toward_coherent():
    n = random_directions(4, 6)
    V = coherent_cov_rows(n) * 3.0
    g = 0.4
    n2, v2 = decohere_arrays(n, V, g)
    assert np.allclose(n2, n * np.exp(-g), atol=1e-14)
    vt = coherent_cov_rows(n)
    assert np.allclose(v2, vt + (V - vt) * np.exp(-g), atol=1e-13)
    # strong relaxation lands on the coherent form of the same direction
    _, v_inf = decohere_arrays(n, V, 50.0)
    assert np.allclose(v_inf, vt, atol=1e-12)
    with pytest.raises(ParameterError):
        decohere_arrays(n, V, -0.1)


def test_decoherent_step_reduces_to_plain_step():
    p = params_for(10**5)
    n = random_directions(6, 7)
    V = coherent_cov_rows(n)
    xi = np.random.default_rng(8).standard_normal(6)
    a = hp_step_arrays(n, V, p.j, p, xi)
    b = hp_decoherent_step_arrays(n, V, p.j, p, xi, 0.0)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_decoherent_step_shrinks_norm():
    p = params_for(10**5)
    n = random_directions(6, 9)
    V = coherent_cov_rows(n)
    xi = np.zeros(6)
    g = 0.3
    n2, _, _ = hp_decoherent_step_arrays(n, V, p.j, p, xi, g)
    # two half-relaxations bracket the measurement: total contraction e^-g
    assert np.allclose(np.linalg.norm(n2, axis=1),
                       np.exp(-g) * np.ones(6), atol=1e-6)


def test_state_shape_validation():
    with pytest.raises(ParameterError):
        GaussianSpinState(10.0, np.zeros(2), np.zeros((3, 3)))
    s = GaussianSpinState(10.0, np.array([0.0, 0.0, 1.0]),
                          np.array([[0.5, 0.3, 0.0], [0.0, 0.5, 0.0],
                                    [0.0, 0.0, 0.0]]))
    with pytest.raises(ParameterError):
        s.validate()
