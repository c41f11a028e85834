"""Physical layer of the Jz probe: continuous record, conditional master
equation, and photon-scattering decoherence.

A dispersive beam reads out Jz at rate kappa = (sigma0/A) * gamma_s,
where sigma0/A is the resonant cross section over the beam area and
gamma_s the photon scattering rate.  Integrating the record over a
window T yields an effective Gaussian measurement with resolution
variance sigma^2 = 1/(kappa T), while the same scattered photons
depolarize the ensemble at rate gamma_s.  The optical density
OD = N sigma0/A fixes the trade-off: the decoherence per window obeys
gamma_s T = 1/((sigma0/A) sigma^2), proportional to 1/OD at any fixed
resolution target.

Two state-level models are provided.  The density-matrix model evolves
rho under

    drho = (sqrt(kappa)/2) H[rho] dW + (kappa/8) L_D[rho] dt
           + gamma_s D[rho] dt

with H[rho] = {rho, Jz} - 2<Jz> rho, collective dephasing
L_D[rho] = -[Jz, [Jz, rho]], and an isotropic collective depolarizer
D[rho] = sum_a (J_a rho J_a) - J(J+1) rho chosen so that
d<J>/dt = -gamma_s <J> exactly.  The Gaussian model applies the matching
mean contraction with covariance relaxation toward the coherent-state
form.  The multilevel structure of real optical pumping is intentionally
coarse-grained into these collective channels.

The integrator is split-step: because Jz commutes with itself, the
measurement part of each substep is applied exactly, as Gaussian-Kraus
conditioning on the substep record y = <Jz> + dW/(dt sqrt(kappa)) at
resolution 1/(kappa dt).  Expanding that factor to first order
reproduces the (sqrt(kappa)/2) H dW and (kappa/8) L_D dt terms of the
master equation, while staying positive semidefinite for any step size
(a plain Euler treatment instead dips indefinite on tail noise draws
and is unstable in the far coherences at large J).  The depolarizer is
added to first order, which also preserves positivity whenever
gamma_s dt J(J+1) <= 1; the state is re-hermitized and renormalized
each substep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dicke import collective_op, m_values
from .errors import EngineMismatchError, IntegratorStepError, ParameterError
from .gaussian import GaussianSpinState, decohere_arrays
from .protocol import DensityMatrix, ProtocolParams, apply_feedback_rho

__all__ = [
    "AtomLightParams",
    "od_params",
    "continuous_record",
    "sme_step",
    "measurement_window",
    "sme_protocol_step",
    "gaussian_decohere",
    "DENSITY_MATRIX_MAX_J",
]

_PSD_TOL = 1e-6
_KAPPA_DT_MAX = 0.05
DENSITY_MATRIX_MAX_J = 200.0


@dataclass(frozen=True)
class AtomLightParams:
    """Probe parameters; every derived rate is recomputed on access.

    The substep count enforces both kappa*dt <= dt_factor and
    dt <= T/20, and dt always divides T exactly.
    """

    n_atoms: int
    sigma0_over_A: float
    gamma_s: float
    T: float
    dt_factor: float = _KAPPA_DT_MAX

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ParameterError("n_atoms must be at least 1")
        if not (np.isfinite(self.sigma0_over_A) and self.sigma0_over_A > 0):
            raise ParameterError("sigma0_over_A must be positive")
        if not (np.isfinite(self.gamma_s) and self.gamma_s >= 0):
            raise ParameterError("gamma_s must be non-negative")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ParameterError("window duration T must be positive")
        if not (0 < self.dt_factor <= _KAPPA_DT_MAX):
            raise ParameterError(f"dt_factor must lie in (0, {_KAPPA_DT_MAX}]")

    @property
    def j(self) -> float:
        return self.n_atoms / 2.0

    @property
    def kappa(self) -> float:
        """Information rate of the record."""
        return self.sigma0_over_A * self.gamma_s

    @property
    def od(self) -> float:
        return self.n_atoms * self.sigma0_over_A

    @property
    def sigma_sq(self) -> float:
        """Resolution variance of the window-averaged record."""
        k = self.kappa
        return math.inf if k == 0 else 1.0 / (k * self.T)

    @property
    def n_substeps(self) -> int:
        k = self.kappa
        by_rate = 0 if k == 0 else math.ceil(k * self.T / self.dt_factor)
        return max(20, by_rate)

    @property
    def dt(self) -> float:
        return self.T / self.n_substeps


def od_params(
    n_atoms: int,
    sigma0_over_A: float = 3e-4,
    sigma_sq: float | None = None,
    gamma_s: float = 1.0,
    dt_factor: float = _KAPPA_DT_MAX,
) -> AtomLightParams:
    """Probe parameters reaching a target record resolution.

    The default target matches sigma^2 to the coherent-state projection
    noise J/2, the weakest window that still resolves the spin
    distribution.  Fixing the target pins the decoherence per window to
    gamma_s*T = 1/((sigma0/A) sigma^2), which scales as 1/OD.
    """
    if n_atoms < 1:
        raise ParameterError("n_atoms must be at least 1")
    if sigma_sq is None:
        sigma_sq = n_atoms / 4.0  # J/2 with J = N/2
    if not (np.isfinite(sigma_sq) and sigma_sq > 0):
        raise ParameterError("sigma_sq must be positive")
    if not (np.isfinite(gamma_s) and gamma_s > 0):
        raise ParameterError("od_params needs gamma_s > 0")
    kappa = sigma0_over_A * gamma_s
    T = 1.0 / (kappa * sigma_sq)
    params = AtomLightParams(n_atoms, sigma0_over_A, gamma_s, T, dt_factor)
    # identity gamma_s*T*OD = N/sigma^2 holds by construction; guard refactors
    assert abs(params.gamma_s * params.T * params.od - n_atoms / sigma_sq) <= (
        1e-9 * n_atoms / sigma_sq
    )
    return params


def continuous_record(jz, params: AtomLightParams, rng: np.random.Generator) -> float:
    """Window average of the record dM = <Jz> dt + dW / sqrt(kappa).

    jz is a constant or a callable (substep index, time) -> <Jz> giving
    the left-endpoint mean of each substep.  The average over [0, T] has
    mean <Jz>-bar and variance sigma^2 = 1/(kappa T) around it.
    """
    if params.kappa <= 0:
        raise ParameterError("the continuous record needs kappa > 0")
    dt = params.dt
    amp = math.sqrt(dt / params.kappa)
    acc = 0.0
    for i in range(params.n_substeps):
        val = jz(i, i * dt) if callable(jz) else float(jz)
        acc += val * dt + amp * float(rng.standard_normal())
    return acc / params.T


@lru_cache(maxsize=8)
def _transverse_ops(two_j: int):
    j = two_j / 2.0
    return collective_op("x", j).matrix(), collective_op("y", j).matrix()


def _check_dm_size(j: float) -> None:
    if j > DENSITY_MATRIX_MAX_J:
        raise EngineMismatchError(
            f"density-matrix evolution is limited to J <= {DENSITY_MATRIX_MAX_J:g} "
            f"(got J = {j:g}); use the Gaussian model instead"
        )


def _sme_substep(
    arr: np.ndarray,
    j: float,
    params: AtomLightParams,
    dt: float,
    dw: float,
    include_scattering: bool,
) -> np.ndarray:
    mv = m_values(j)
    kappa = params.kappa
    if kappa > 0:
        jz_mean = float((np.diag(arr).real * mv).sum())
        y = jz_mean + dw / (dt * math.sqrt(kappa))
        # exact conditioning on this substep's record: a Gaussian Kraus
        # factor at resolution 1/(kappa dt) carries both the kappa/8
        # dephasing and the innovation term of the master equation
        g = np.exp(-(kappa * dt / 4.0) * (mv - y) ** 2)
        arr = arr * (g[:, None] * g[None, :])
    if include_scattering and params.gamma_s > 0:
        jx, jy = _transverse_ops(int(round(2 * j)))
        # sub-iterate so each Euler increment keeps gamma_s*dt*J(J+1)
        # small; beyond that the linear update loses positivity
        weight = params.gamma_s * dt * j * (j + 1.0)
        n_d = max(1, math.ceil(weight / 0.05))
        if n_d > 100_000:
            raise IntegratorStepError(
                f"scattering weight gamma_s*dt*J(J+1) = {weight:.3g} per substep "
                "is too large to integrate; shrink dt or gamma_s"
            )
        tau = params.gamma_s * dt / n_d
        for _ in range(n_d):
            lind = (
                jx @ arr @ jx
                + jy @ arr @ jy
                + (mv[:, None] * mv[None, :]) * arr
                - (j * (j + 1.0)) * arr
            )
            arr = arr + tau * lind
    arr = 0.5 * (arr + arr.conj().T)
    tr = float(np.trace(arr).real)
    if not (np.isfinite(tr) and tr > 0):
        raise IntegratorStepError(f"state trace collapsed to {tr!r}; shrink dt")
    arr = arr / tr
    wmin = float(np.linalg.eigvalsh(arr).min())
    if wmin < -_PSD_TOL:
        raise IntegratorStepError(
            f"integrator left the state indefinite (min eigenvalue {wmin:.3e}); shrink dt"
        )
    return arr


def sme_step(
    rho: DensityMatrix,
    params: AtomLightParams,
    dt: float,
    rng: np.random.Generator,
    include_scattering: bool = True,
) -> DensityMatrix:
    """One Euler-Maruyama step of the conditional master equation.

    ``include_scattering=False`` drops the gamma_s depolarizer while
    keeping the measurement terms, the pure-QND diagnostic limit.
    """
    _check_dm_size(rho.j)
    if not (np.isfinite(dt) and dt > 0):
        raise ParameterError("dt must be positive")
    dw = math.sqrt(dt) * float(rng.standard_normal())
    arr = np.array(rho.rho, dtype=np.complex128, copy=True)
    return DensityMatrix(rho.j, _sme_substep(arr, rho.j, params, dt, dw, include_scattering))


def measurement_window(
    rho: DensityMatrix,
    params: AtomLightParams,
    rng: np.random.Generator,
    include_scattering: bool = True,
) -> tuple[DensityMatrix, float]:
    """Continuous measurement over [0, T] with the record and state
    coupled through the same Wiener increments.

    Returns the conditioned state and the window-averaged record m.
    """
    _check_dm_size(rho.j)
    if params.kappa <= 0:
        raise ParameterError("a measurement window needs kappa > 0")
    if 2 * rho.j != params.n_atoms:
        raise ParameterError("params.n_atoms disagrees with the state's j")
    arr = np.array(rho.rho, dtype=np.complex128, copy=True)
    mv = m_values(rho.j)
    dt = params.dt
    sq = math.sqrt(dt)
    inv_root_kappa = 1.0 / math.sqrt(params.kappa)
    acc = 0.0
    for i in range(params.n_substeps):
        dw = sq * float(rng.standard_normal())
        jz_mean = float((np.diag(arr).real * mv).sum())
        acc += jz_mean * dt + inv_root_kappa * dw
        arr = _sme_substep(arr, rho.j, params, dt, dw, include_scattering)
    return DensityMatrix(rho.j, arr), acc / params.T


def sme_protocol_step(
    rho: DensityMatrix,
    protocol: ProtocolParams,
    light: AtomLightParams,
    rng: np.random.Generator,
    include_scattering: bool = True,
) -> tuple[DensityMatrix, float]:
    """One full protocol step with the physical-layer measurement:
    a continuous window, then the feedback rotation conditioned on its
    time-averaged record."""
    if protocol.n_atoms != light.n_atoms:
        raise ParameterError("protocol and probe disagree on n_atoms")
    out, m = measurement_window(rho, light, rng, include_scattering)
    return apply_feedback_rho(out, m, protocol), m


def gaussian_decohere(
    state: GaussianSpinState, gamma_s: float, dt: float
) -> GaussianSpinState:
    """Scattering decoherence over duration dt at the Gaussian level:
    the mean contracts by exp(-gamma_s dt) and the covariance relaxes
    toward the coherent-state form by the same factor."""
    if not (np.isfinite(gamma_s) and gamma_s >= 0):
        raise ParameterError("gamma_s must be non-negative")
    if not (np.isfinite(dt) and dt >= 0):
        raise ParameterError("dt must be non-negative")
    n, V = decohere_arrays(state.n[None, :], state.V[None, :, :], gamma_s * dt)
    return GaussianSpinState(state.j, n[0], V[0])
