"""Weak Jz measurement with rotation feedback on a collective spin.

One protocol step applies, in order:

1. a Gaussian weak measurement of Jz with resolution sigma, via the
   Kraus operator K_m = (2 pi sigma^2)^(-1/4) exp(-(Jz - m)^2 / 4 sigma^2)
   for the continuous record value m;
2. conditioned feedback U(m) = exp(i p Jy) exp(i (k/J) m Jz).

In the limit where the record tracks <Jz> exactly, the feedback rotation
reproduces one period of the kicked-top map with kick strength k, so an
ensemble of records realizes nonlinear mean-field dynamics from linear
conditioned rotations.  Averaging the conditioned step over records is
exactly equivalent to collective dephasing at rate
Gamma = k^2 sigma^2 / 2J^2 + 1 / 8 sigma^2 followed by the kicked-top
Floquet unitary exp(i p Jy) exp(i (k/2J) Jz^2); that averaged
density-matrix map is also implemented here.

Outcome sampling is exact and two-staged: draw a Dicke label m_z with
probability |c_{m_z}|^2, then m = m_z + sigma * xi with standard normal
xi.  The marginal of m is the correct Gaussian mixture density.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dicke import (
    DickeState,
    _raise_elements,
    dim_for,
    m_values,
    moments_rows,
    rotate,
    rotate_rows,
)
from .errors import DegenerateOutcomeError, ParameterError

__all__ = [
    "ProtocolParams",
    "DensityMatrix",
    "kraus_weights",
    "sample_outcome",
    "sample_outcomes_rows",
    "apply_kraus",
    "apply_kraus_rows",
    "apply_feedback",
    "feedback_rows",
    "feedback_unitary",
    "apply_feedback_rho",
    "rho_bloch",
    "trajectory_step",
    "qkt_floquet",
    "qkt_floquet_rho",
    "gamma_rate",
    "optimal_sigma_sq",
    "dephase",
    "averaged_step",
    "trace_distance",
]

_NORM_SQ_FLOOR = 1e-300


@dataclass(frozen=True)
class ProtocolParams:
    """Parameters of the measurement-feedback protocol.

    sigma is the absolute measurement resolution in units of m; configs
    usually specify sigma / sqrt(J), see ``from_scaled``.
    """

    k: float
    sigma: float
    n_atoms: int
    n_steps: int
    p: float = np.pi / 2

    def __post_init__(self):
        if not np.isfinite(self.k):
            raise ParameterError("k must be finite")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError("sigma must be positive")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ParameterError("n_atoms must be a positive integer")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ParameterError("n_steps must be a non-negative integer")
        if not np.isfinite(self.p):
            raise ParameterError("p must be finite")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def j(self) -> float:
        return self.n_atoms / 2.0

    @classmethod
    def from_scaled(
        cls,
        k: float,
        sigma_over_sqrtj: float,
        n_atoms: int,
        n_steps: int,
        p: float = np.pi / 2,
    ) -> "ProtocolParams":
        if not (np.isfinite(sigma_over_sqrtj) and sigma_over_sqrtj > 0):
            raise ParameterError("sigma_over_sqrtj must be positive")
        sigma = sigma_over_sqrtj * np.sqrt(n_atoms / 2.0)
        return cls(k=k, sigma=sigma, n_atoms=n_atoms, n_steps=n_steps, p=p)


@dataclass(frozen=True)
class DensityMatrix:
    """Mixed state on the symmetric subspace."""

    j: float
    rho: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=np.complex128)
        d = dim_for(self.j)
        if r.shape != (d, d):
            raise ParameterError(f"rho has shape {r.shape}, expected ({d}, {d})")
        object.__setattr__(self, "rho", r)

    @staticmethod
    def from_pure(state: DickeState) -> "DensityMatrix":
        return DensityMatrix(state.j, state.density_matrix())

    def validate(self, trace_tol=1e-10, herm_tol=1e-12, eig_tol=1e-10) -> None:
        tr = np.trace(self.rho)
        if abs(tr - 1.0) > trace_tol:
            raise ParameterError(f"trace deviates from 1 by {abs(tr - 1.0):.3e}")
        herm = np.abs(self.rho - self.rho.conj().T).max()
        if herm > herm_tol:
            raise ParameterError(f"hermiticity violation {herm:.3e}")
        w = np.linalg.eigvalsh(self.rho)
        if w.min() < -eig_tol:
            raise ParameterError(f"negative eigenvalue {w.min():.3e}")

    def purity(self) -> float:
        return float(np.einsum("ij,ji->", self.rho, self.rho).real)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """(1/2) trace-norm distance between two states of equal j."""
    if a.j != b.j:
        raise ParameterError("trace distance needs states of equal j")
    w = np.linalg.eigvalsh(a.rho - b.rho)
    return 0.5 * float(np.abs(w).sum())


def kraus_weights(m: float, sigma: float, j: float) -> np.ndarray:
    """Diagonal of the measurement Kraus operator K_m, prefactor included."""
    if not (np.isfinite(sigma) and sigma > 0):
        raise ParameterError("sigma must be positive")
    mv = m_values(j)
    pref = (2 * np.pi * sigma**2) ** (-0.25)
    return pref * np.exp(-((mv - m) ** 2) / (4 * sigma**2))


def sample_outcome(state: DickeState, sigma: float, rng: np.random.Generator) -> float:
    """Draw one record value m from the exact outcome density."""
    u = rng.random()
    xi = rng.standard_normal()
    p = np.abs(state.amps) ** 2
    tot = p.sum()
    if tot <= 0:
        raise ParameterError("cannot sample from a zero state")
    cum = np.cumsum(p)
    idx = min(int(np.searchsorted(cum, u * tot, side="right")), p.size - 1)
    return float(m_values(state.j)[idx] + sigma * xi)


def sample_outcomes_rows(
    rows: np.ndarray, j: float, sigma: float, uniforms: np.ndarray, normals: np.ndarray
) -> np.ndarray:
    """Vectorized ``sample_outcome`` over rows with supplied variates."""
    p = np.abs(rows) ** 2
    cum = np.cumsum(p, axis=1)
    targets = uniforms[:, None] * cum[:, -1:]
    idx = np.minimum((cum < targets).sum(axis=1), p.shape[1] - 1)
    return m_values(j)[idx] + sigma * normals


def apply_kraus(state: DickeState, m: float, sigma: float) -> DickeState:
    """Posterior state after record value m (normalized)."""
    mv = m_values(state.j)
    w = np.exp(-((mv - m) ** 2) / (4 * sigma**2))
    amps = state.amps * w
    n2 = float(np.vdot(amps, amps).real)
    if n2 < _NORM_SQ_FLOOR:
        raise DegenerateOutcomeError(
            f"outcome m={m:.6g} annihilated the state (norm^2={n2:.3e})"
        )
    return DickeState(state.j, amps / np.sqrt(n2))


def apply_kraus_rows(rows: np.ndarray, j: float, m: np.ndarray, sigma: float) -> np.ndarray:
    mv = m_values(j)
    work = rows * np.exp(-((mv[None, :] - m[:, None]) ** 2) / (4 * sigma**2))
    n2 = np.einsum("bi,bi->b", work.conj(), work).real
    bad = np.where(n2 < _NORM_SQ_FLOOR)[0]
    if bad.size:
        raise DegenerateOutcomeError(
            f"outcome annihilated {bad.size} trajectories (first index {bad[0]})"
        )
    return work / np.sqrt(n2)[:, None]


def apply_feedback(state: DickeState, m: float, params: ProtocolParams) -> DickeState:
    """Conditioned feedback exp(i p Jy) exp(i (k/J) m Jz)."""
    out = rotate(state, "z", params.k * m / params.j)
    return rotate(out, "y", params.p)


def feedback_rows(rows: np.ndarray, j: float, m: np.ndarray, params: ProtocolParams) -> np.ndarray:
    mv = m_values(j)
    work = rows * np.exp(1j * (params.k / j) * m[:, None] * mv[None, :])
    return rotate_rows(work, j, "y", params.p)


def feedback_unitary(m: float, params: ProtocolParams) -> np.ndarray:
    """Dense matrix of the conditioned feedback rotation U(m)."""
    mv = m_values(params.j)
    tw = np.exp(1j * (params.k / params.j) * m * mv)
    u = rotate_rows(np.eye(mv.size, dtype=np.complex128), params.j, "y", params.p)
    # rows of u are e_i^T R^T, so u.T is the y rotation; twist folds on the right
    return u.T * tw[None, :]


def apply_feedback_rho(rho: DensityMatrix, m: float, params: ProtocolParams) -> DensityMatrix:
    """Conjugate a density matrix by the conditioned feedback rotation."""
    if 2 * rho.j != 2 * params.j:
        raise ParameterError("params.n_atoms disagrees with the state's j")
    u = feedback_unitary(m, params)
    return DensityMatrix(rho.j, u @ rho.rho @ u.conj().T)


def rho_bloch(rho: DensityMatrix) -> np.ndarray:
    """Bloch vector <J>/J of a mixed state."""
    mv = m_values(rho.j)
    e = _raise_elements(rho.j)
    jz = float((np.diag(rho.rho).real * mv).sum())
    # <J+> couples idx -> idx-1 in descending-m storage
    plus = complex(np.sum(e[1:] * np.diag(rho.rho, -1)))
    return np.array([plus.real, plus.imag, jz]) / rho.j


def trajectory_step(
    state: DickeState, params: ProtocolParams, rng: np.random.Generator
) -> tuple[DickeState, float]:
    """One full measure-then-feedback step; returns (new state, record m)."""
    if 2 * params.j != 2 * state.j:
        raise ParameterError("params.n_atoms disagrees with the state's j")
    m = sample_outcome(state, params.sigma, rng)
    out = apply_kraus(state, m, params.sigma)
    return apply_feedback(out, m, params), m


def qkt_floquet(state: DickeState, params: ProtocolParams) -> DickeState:
    """Kicked-top Floquet unitary exp(i p Jy) exp(i (k/2J) Jz^2)."""
    mv = m_values(state.j)
    twisted = state.amps * np.exp(1j * (params.k / (2 * params.j)) * mv**2)
    return DickeState(state.j, rotate_rows(twisted[None, :], state.j, "y", params.p)[0])


def _floquet_unitary(params: ProtocolParams, j: float) -> np.ndarray:
    mv = m_values(j)
    d = mv.size
    twist = np.exp(1j * (params.k / (2 * j)) * mv**2)
    u = rotate_rows(np.eye(d, dtype=np.complex128), j, "y", params.p)
    # rows of u are e_i^T U^T, so u.T columns are U e_i; build U then fold twist
    return u.T * twist[None, :]


def qkt_floquet_rho(rho: DensityMatrix, params: ProtocolParams) -> DensityMatrix:
    """Conjugate a density matrix by the kicked-top Floquet unitary."""
    u = _floquet_unitary(params, rho.j)
    return DensityMatrix(rho.j, u @ rho.rho @ u.conj().T)


def gamma_rate(k: float, sigma: float, j: float) -> float:
    """Effective collective dephasing rate of the record-averaged map.

    Gamma = k^2 sigma^2 / (2 J^2) + 1 / (8 sigma^2): the first term is
    feedback noise fed by the record, the second measurement backaction.
    """
    if not (np.isfinite(sigma) and sigma > 0):
        raise ParameterError("sigma must be positive")
    if not np.isfinite(k):
        raise ParameterError("k must be finite")
    return k**2 * sigma**2 / (2 * j**2) + 1.0 / (8 * sigma**2)


def optimal_sigma_sq(k: float, j: float) -> float:
    """Resolution variance minimizing ``gamma_rate``: sigma^2 = J / 2k."""
    if k <= 0:
        raise ParameterError("optimal sigma requires k > 0")
    return j / (2 * k)


def dephase(rho: DensityMatrix, gamma: float) -> DensityMatrix:
    """Collective dephasing: rho_{mm'} *= exp(-gamma (m - m')^2)."""
    if gamma < 0:
        raise ParameterError("gamma must be non-negative")
    mv = m_values(rho.j)
    dm = mv[:, None] - mv[None, :]
    return DensityMatrix(rho.j, rho.rho * np.exp(-gamma * dm**2))


def averaged_step(rho: DensityMatrix, params: ProtocolParams) -> DensityMatrix:
    """Record-averaged protocol step: dephase, then Floquet conjugation."""
    if 2 * rho.j != 2 * params.j:
        raise ParameterError("params.n_atoms disagrees with the state's j")
    g = gamma_rate(params.k, params.sigma, params.j)
    return qkt_floquet_rho(dephase(rho, g), params)
