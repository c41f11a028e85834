"""Gaussian (Holstein-Primakoff) model of the protocol for large atom number.

The state is the pair (n, V): the mean-spin direction n = <J>/J and the
scaled covariance V_ab = (<{Ja,Jb}> - 2<Ja><Jb>) / 2J, a 3x3 real matrix
that is ~O(1) and lives (approximately) on the tangent plane of the
sphere at n.  A spin coherent state has V = 1/2 on both tangent
directions and 0 along n.

One protocol step:

* draw the record m ~ Normal(J n_z, sigma^2 + Var Jz), Var Jz = J V_zz
  taken before the measurement;
* condition the Gaussian on m.  For Gaussian amplitudes the Kraus
  operator exp(-(Jz - m)^2 / 4 sigma^2) acts like classical Bayes on the
  measured direction (Kalman gain J V_(.z) / (J V_zz + sigma^2), Schur
  complement on V) PLUS a deterministic backaction term: the tangent
  direction conjugate to the measured one picks up J |n|^2 |c|^2 / 4
  sigma^2 of extra variance, where c is the tangent-plane component of
  e_z.  The heating keeps the state minimum-uncertainty when it starts
  so, and is what makes strongly resolved measurements (small sigma)
  scramble the trajectory;
* rotate mean and covariance by the feedback, z by k m / J then y by p
  (congruence V -> R V R^T; the feedback is a rigid rotation, so this
  part is exact).

Writing m = J n_z + nu, the two noises driving the mean map are
eta1 = nu / sigma^2 (measurement backaction) and eta2 = k nu / J
(feedback angle noise), with variances
sigma1^2 = (sigma^2 + Var Jz) / sigma^4 and
sigma2^2 = k^2 (sigma^2 + Var Jz) / J^2.  With both noises forced to
zero the mean follows the deterministic kicked-top map exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical import twist_kick_rotation
from .errors import FrameDegeneracyError, ParameterError
from .protocol import ProtocolParams

__all__ = [
    "GaussianSpinState",
    "NoiseDraw",
    "comoving_frame",
    "frames_rows",
    "noise_variances",
    "hp_condition",
    "hp_feedback",
    "hp_step",
    "hp_step_detail",
    "hp_condition_arrays",
    "hp_feedback_arrays",
    "hp_step_arrays",
    "hp_decoherent_step_arrays",
    "decohere_arrays",
    "coherent_cov_rows",
    "scs_covariance",
]

_EZ = np.array([0.0, 0.0, 1.0])
_EX = np.array([1.0, 0.0, 0.0])
_NORM_CLAMP = 1e-9
_FRAME_FLOOR = 1e-12
_POLE_CUT = 1e-8


@dataclass(frozen=True)
class GaussianSpinState:
    """Mean direction and scaled covariance of a large collective spin."""

    j: float
    n: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if n.shape != (3,) or V.shape != (3, 3):
            raise ParameterError("GaussianSpinState needs n of shape (3,) and V of shape (3,3)")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "V", V)

    def validate(self, sym_tol=1e-12, eig_tol=1e-10, norm_tol=_NORM_CLAMP) -> None:
        if np.abs(self.V - self.V.T).max() > sym_tol:
            raise ParameterError("covariance is not symmetric")
        if np.linalg.eigvalsh(self.V).min() < -eig_tol:
            raise ParameterError("covariance has a negative eigenvalue")
        if np.linalg.norm(self.n) > 1.0 + norm_tol:
            raise ParameterError("|n| exceeds 1 beyond tolerance")

    @classmethod
    def coherent(cls, theta: float, phi: float, j: float) -> "GaussianSpinState":
        """Gaussian model of a spin coherent state along (theta, phi)."""
        n = np.array(
            [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
        )
        return cls(j, n, scs_covariance(n))


def scs_covariance(n: np.ndarray) -> np.ndarray:
    """Coherent-state covariance at direction n: 1/2 transverse, 0 along n."""
    a = comoving_frame(n)
    return a @ np.diag([0.5, 0.5, 0.0]) @ a.T


def comoving_frame(n: np.ndarray) -> np.ndarray:
    """Right-handed frame (e1, e2, n_hat) as columns of a rotation matrix.

    e1 = normalize(e_z x n) away from the poles, e_x at them; e2 closes
    the triad.  Returns the matrix mapping frame components to lab ones.
    """
    n = np.asarray(n, dtype=float)
    nn = np.linalg.norm(n)
    if nn < _FRAME_FLOOR:
        raise FrameDegeneracyError(f"mean spin length {nn:.3e} too small for a frame")
    nh = n / nn
    c = np.cross(_EZ, nh)
    cn = np.linalg.norm(c)
    e1 = c / cn if cn > _POLE_CUT else _EX.copy()
    e2 = np.cross(nh, e1)
    return np.column_stack([e1, e2, nh])


def frames_rows(n: np.ndarray) -> np.ndarray:
    """Vectorized ``comoving_frame`` for an (B, 3) array of directions."""
    n = np.asarray(n, dtype=float)
    nn = np.linalg.norm(n, axis=1)
    if np.any(nn < _FRAME_FLOOR):
        raise FrameDegeneracyError("mean spin length collapsed in a batch entry")
    nh = n / nn[:, None]
    c = np.stack([-nh[:, 1], nh[:, 0], np.zeros(len(n))], axis=1)
    cn = np.linalg.norm(c, axis=1)
    safe = cn > _POLE_CUT
    e1 = np.where(safe[:, None], c / np.where(safe, cn, 1.0)[:, None], _EX[None, :])
    e2 = np.cross(nh, e1)
    return np.stack([e1, e2, nh], axis=2)


def noise_variances(params: ProtocolParams, dJz2: float):
    """(sigma1^2, sigma2^2) for the current Jz variance (pre-measurement)."""
    if dJz2 < 0:
        raise ParameterError("dJz2 must be non-negative")
    s2 = params.sigma**2
    tot = s2 + dJz2
    return tot / s2**2, params.k**2 * tot / params.j**2


@dataclass(frozen=True)
class NoiseDraw:
    """Realized noises of one Gaussian protocol step."""

    xi: float
    m: float
    eta1: float
    eta2: float
    sigma1_sq: float
    sigma2_sq: float
    dJz2: float


def hp_condition_arrays(n, V, j, m, sigma):
    """Condition (n, V) batches on record values m.  Shapes (B,3), (B,3,3), (B,)."""
    n = np.array(n, dtype=float, copy=True)
    V = np.array(V, dtype=float, copy=True)
    m = np.asarray(m, dtype=float)
    s2 = sigma**2
    vz = V[:, :, 2]  # z column
    S = j * V[:, 2, 2] + s2
    nu = m - j * n[:, 2]
    n += vz * (nu / S)[:, None]
    V -= (j / S)[:, None, None] * np.einsum("bi,bj->bij", vz, vz)
    # backaction: heat the tangent direction conjugate to the measured one
    nn = np.linalg.norm(n, axis=1)
    nh = n / np.where(nn > _FRAME_FLOOR, nn, 1.0)[:, None]
    c = _EZ[None, :] - nh[:, 2:3] * nh
    c2 = np.einsum("bi,bi->b", c, c)
    good = (c2 > _POLE_CUT**2) & (nn > _FRAME_FLOOR)
    u = c / np.sqrt(np.where(good, c2, 1.0))[:, None]
    w = np.cross(nh, u)
    h = np.where(good, j * nn**2 * c2 / (4 * s2), 0.0)
    V += h[:, None, None] * np.einsum("bi,bj->bij", w, w)
    return n, V


def _rotate_mean_cov(n, V, phi, p):
    r = twist_kick_rotation(phi, p)
    n2 = np.einsum("nab,nb->na", r, n)
    V2 = np.einsum("nab,nbc,ndc->nad", r, V, r)
    # clamp: |n| may creep beyond 1 through conditioning roundoff
    nn = np.linalg.norm(n2, axis=1)
    over = nn > 1.0 + _NORM_CLAMP
    if np.any(over):
        n2[over] /= nn[over][:, None]
    return n2, V2


def hp_feedback_arrays(n, V, m, params: ProtocolParams):
    """Feedback rotation of mean and covariance, batched."""
    phi = params.k * np.asarray(m, dtype=float) / params.j
    return _rotate_mean_cov(n, V, phi, params.p)


def coherent_cov_rows(n: np.ndarray) -> np.ndarray:
    """Coherent-state covariance at each row's pointing direction."""
    a = frames_rows(np.asarray(n, dtype=float))
    return np.einsum("nab,b,ncb->nac", a, np.array([0.5, 0.5, 0.0]), a)


def decohere_arrays(n, V, g):
    """Optical-pumping contraction over a window of integrated rate g.

    The mean shrinks by exp(-g); the covariance relaxes toward the
    coherent-state form at the (unchanged) pointing direction.
    """
    if g < 0:
        raise ParameterError("decoherence weight must be non-negative")
    if g == 0:
        return np.array(n, copy=True), np.array(V, copy=True)
    n = np.asarray(n, dtype=float)
    V = np.asarray(V, dtype=float)
    vt = coherent_cov_rows(n)
    f = np.exp(-g)
    return n * f, vt + (V - vt) * f


def hp_condition(state: GaussianSpinState, m: float, sigma: float) -> GaussianSpinState:
    """Single-state conditioning on a record value (no feedback)."""
    n, V = hp_condition_arrays(
        state.n[None, :], state.V[None, :, :], state.j, np.array([m]), sigma
    )
    return GaussianSpinState(state.j, n[0], V[0])


def hp_feedback(state: GaussianSpinState, m: float, params: ProtocolParams) -> GaussianSpinState:
    n, V = hp_feedback_arrays(state.n[None, :], state.V[None, :, :], np.array([m]), params)
    return GaussianSpinState(state.j, n[0], V[0])


def hp_step_arrays(n, V, j, params: ProtocolParams, xi):
    """One protocol step on (B, 3)/(B, 3, 3) batches driven by variates xi.

    Returns (n', V', m).  The feedback angle is written as
    k*n_z + k*nu/J so a zeroed xi column retraces the classical map's
    float path exactly.
    """
    n = np.asarray(n, dtype=float)
    V = np.asarray(V, dtype=float)
    xi = np.asarray(xi, dtype=float)
    dJz2 = j * V[:, 2, 2]
    nu = np.sqrt(params.sigma**2 + dJz2) * xi
    m = j * n[:, 2] + nu
    phi = params.k * n[:, 2] + params.k * nu / j
    n1, V1 = hp_condition_arrays(n, V, j, m, params.sigma)
    n2, V2 = _rotate_mean_cov(n1, V1, phi, params.p)
    return n2, V2, m


def hp_decoherent_step_arrays(
    n: np.ndarray,
    V: np.ndarray,
    j: float,
    params: ProtocolParams,
    xi: np.ndarray,
    g: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One protocol step with isotropic spin relaxation of weight ``g`` per step.

    The relaxation is split symmetrically around the measurement (half before,
    half after) so the record is drawn from the partially relaxed state, then
    the feedback rotation is applied.  With ``g = 0`` this reduces bitwise to
    :func:`hp_step_arrays`.
    """
    n = np.asarray(n, dtype=float)
    V = np.asarray(V, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n, V = decohere_arrays(n, V, 0.5 * g)
    dJz2 = j * V[:, 2, 2]
    nu = np.sqrt(params.sigma**2 + dJz2) * xi
    m = j * n[:, 2] + nu
    phi = params.k * n[:, 2] + params.k * nu / j
    n, V = hp_condition_arrays(n, V, j, m, params.sigma)
    n, V = decohere_arrays(n, V, 0.5 * g)
    n, V = _rotate_mean_cov(n, V, phi, params.p)
    return n, V, m


def hp_step_detail(
    state: GaussianSpinState, params: ProtocolParams, xi: float
) -> tuple[GaussianSpinState, float, NoiseDraw]:
    """One protocol step driven by a supplied standard-normal variate."""
    if 2 * params.j != 2 * state.j:
        raise ParameterError("params.n_atoms disagrees with the state's j")
    j = state.j
    dJz2 = j * state.V[2, 2]
    s1, s2 = noise_variances(params, dJz2)
    nu = np.sqrt(params.sigma**2 + dJz2) * xi
    n2, v2, m = hp_step_arrays(
        state.n[None, :], state.V[None, :, :], j, params, np.array([xi])
    )
    draw = NoiseDraw(
        xi=xi,
        m=float(m[0]),
        eta1=float(nu / params.sigma**2),
        eta2=float(params.k * nu / j),
        sigma1_sq=float(s1),
        sigma2_sq=float(s2),
        dJz2=float(dJz2),
    )
    return GaussianSpinState(state.j, n2[0], v2[0]), float(m[0]), draw


def hp_step(
    state: GaussianSpinState, params: ProtocolParams, rng: np.random.Generator | None
) -> GaussianSpinState:
    """One protocol step; ``rng=None`` forces the noiseless (mean-map) limit."""
    xi = float(rng.standard_normal()) if rng is not None else 0.0
    return hp_step_detail(state, params, xi)[0]
