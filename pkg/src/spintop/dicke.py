"""Symmetric collective-spin states in the Dicke basis.

A collective spin J = N/2 lives in the (2J+1)-dimensional symmetric
subspace spanned by |J, m>, m = J .. -J.  Amplitude arrays here are
indexed with m DESCENDING: row 0 is m = +J, the last row is m = -J.

Rotation convention: ``rotate(state, axis, angle)`` applies the unitary
exp(+i * angle * J_axis).  Its induced action on the mean-spin direction
n = <J>/J is the 3x3 matrix returned by ``bloch_rotation``; e.g. a z
rotation by angle a maps (X, Y, Z) -> (X cos a + Y sin a,
Y cos a - X sin a, Z).

Rotations about x and y are evaluated through a cached eigendecomposition
of the (tridiagonal) generator, so a rotation costs one dense transform
of size (2J+1)^2.  That is the intended price up to J of a few thousand;
z rotations are pure phases and cost O(2J+1).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .errors import ParameterError

__all__ = [
    "DickeState",
    "SpinOperator",
    "SpinMoments",
    "dim_for",
    "m_values",
    "spin_coherent_state",
    "collective_op",
    "rotate",
    "rotate_rows",
    "expectations",
    "moments_rows",
    "bloch_rotation",
]

_AXES = ("x", "y", "z", "+", "-")


def _check_j(j: float) -> float:
    jj = float(j)
    if not np.isfinite(jj) or jj <= 0 or round(2 * jj) != 2 * jj:
        raise ParameterError(f"j must be a positive integer or half-integer, got {j!r}")
    return jj


def dim_for(j: float) -> int:
    """Dimension 2J+1 of the symmetric subspace."""
    return int(round(2 * _check_j(j))) + 1


def m_values(j: float) -> np.ndarray:
    """Jz quantum numbers in storage order (descending, m[0] = +J)."""
    j = _check_j(j)
    return j - np.arange(dim_for(j), dtype=float)


def _raise_elements(j: float) -> np.ndarray:
    """e[idx] = <m_idx + 1| J+ |m_idx> = sqrt(J(J+1) - m(m+1)); e[0] = 0."""
    m = m_values(j)
    val = j * (j + 1) - m * (m + 1)
    return np.sqrt(np.clip(val, 0.0, None))


@dataclass(frozen=True)
class DickeState:
    """Pure symmetric state: complex amplitudes over |J, m>, m descending."""

    j: float
    amps: np.ndarray

    def __post_init__(self):
        _check_j(self.j)
        a = np.asarray(self.amps, dtype=np.complex128)
        if a.shape != (dim_for(self.j),):
            raise ParameterError(
                f"amplitude vector has shape {a.shape}, expected ({dim_for(self.j)},)"
            )
        object.__setattr__(self, "amps", a)

    @property
    def dim(self) -> int:
        return self.amps.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "DickeState":
        n = self.norm()
        if n == 0.0:
            raise ParameterError("cannot normalize a zero state")
        return DickeState(self.j, self.amps / n)

    @staticmethod
    def basis(j: float, m: float) -> "DickeState":
        """The Dicke state |J, m>."""
        mv = m_values(j)
        idx = np.where(np.isclose(mv, m))[0]
        if idx.size == 0:
            raise ParameterError(f"m={m} is not a level of j={j}")
        a = np.zeros(dim_for(j), dtype=np.complex128)
        a[idx[0]] = 1.0
        return DickeState(j, a)

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amps, self.amps.conj())


@dataclass(frozen=True)
class SpinOperator:
    """A collective spin component in banded storage.

    ``diag`` holds the main diagonal, ``upper``/``lower`` the first
    off-diagonals (upper[idx] multiplies amps[idx+1] into row idx).
    x and y are tridiagonal with zero diagonal, z is purely diagonal.
    """

    j: float
    axis: str
    diag: np.ndarray
    upper: np.ndarray
    lower: np.ndarray

    def apply(self, amps: np.ndarray) -> np.ndarray:
        out = self.diag * amps
        out[:-1] += self.upper * amps[1:]
        out[1:] += self.lower * amps[:-1]
        return out

    def matrix(self) -> np.ndarray:
        d = self.diag.shape[0]
        mat = np.diag(self.diag)
        mat[np.arange(d - 1), np.arange(1, d)] = self.upper
        mat[np.arange(1, d), np.arange(d - 1)] = self.lower
        return mat


def collective_op(axis: str, j: float) -> SpinOperator:
    """Collective operator Jx, Jy, Jz, J+ or J- for total spin j."""
    j = _check_j(j)
    if axis not in _AXES:
        raise ParameterError(f"axis must be one of {_AXES}, got {axis!r}")
    d = dim_for(j)

    def zeros(n):
        return np.zeros(n, dtype=np.complex128)

    e = _raise_elements(j).astype(np.complex128)
    # J+ |m_idx> lands one row up (index idx-1): upper[idx-1] = e[idx]
    if axis == "z":
        return SpinOperator(j, axis, m_values(j).astype(np.complex128), zeros(d - 1), zeros(d - 1))
    if axis == "+":
        return SpinOperator(j, axis, zeros(d), e[1:], zeros(d - 1))
    if axis == "-":
        return SpinOperator(j, axis, zeros(d), zeros(d - 1), e[1:])
    if axis == "x":
        half = 0.5 * e[1:]
        return SpinOperator(j, axis, zeros(d), half, half.copy())
    # y = (J+ - J-) / 2i
    half = 0.5 * e[1:]
    return SpinOperator(j, axis, zeros(d), -1j * half, 1j * half)


def spin_coherent_state(theta: float, phi: float, j: float) -> DickeState:
    """Spin coherent state pointing along (theta, phi).

    Parameters
    ----------
    theta, phi : float
        Polar and azimuthal angles; the resulting mean spin is
        <J>/J = (sin(theta) cos(phi), sin(theta) sin(phi), cos(theta)).
    j : float
        Total spin (N/2 for N spin-1/2 constituents).

    Amplitudes are assembled in log space so that large j (up to several
    thousand) does not overflow the binomial weights.
    """
    j = _check_j(j)
    if not np.isfinite(theta) or not (0.0 <= theta <= np.pi):
        raise ParameterError(f"theta must lie in [0, pi], got {theta!r}")
    if not np.isfinite(phi):
        raise ParameterError("phi must be finite")
    m = m_values(j)
    half = 0.5 * theta
    lc = np.log(np.cos(half)) if np.cos(half) > 0 else -np.inf
    ls = np.log(np.sin(half)) if np.sin(half) > 0 else -np.inf
    log_binom = 0.5 * (
        gammaln(2 * j + 1) - gammaln(j - m + 1) - gammaln(j + m + 1)
    )
    # (j +/- m) can be exactly 0 where the log factor is -inf; 0 * -inf -> 0
    with np.errstate(invalid="ignore"):
        up = np.where(j + m > 0, (j + m) * lc, 0.0)
        dn = np.where(j - m > 0, (j - m) * ls, 0.0)
    log_mag = log_binom + up + dn
    log_mag -= log_mag.max()
    amps = np.exp(log_mag) * np.exp(-1j * m * phi)
    amps /= np.linalg.norm(amps)
    return DickeState(j, amps)


@lru_cache(maxsize=8)
def _xy_eigenbasis(two_j: int, axis: str):
    """Eigen-decomposition of Jx or Jy for total spin two_j/2.

    Returns (w, Q, phase) with J_axis = P Q diag(w) Q^T P^H, where
    P = diag(phase) and Q is real orthogonal (phase is all-ones for x).
    """
    j = two_j / 2.0
    e = _raise_elements(j)[1:]  # positive off-diagonal couplings
    d = dim_for(j)
    w, q = eigh_tridiagonal(np.zeros(d), 0.5 * e)
    if axis == "x":
        phase = np.ones(d, dtype=np.complex128)
    else:
        # diag(i^k) conjugation turns Jy into the same real tridiagonal
        phase = (1j) ** np.arange(d)
    return w, q, phase


def rotate(state: DickeState, axis: str, angle: float) -> DickeState:
    """Apply exp(+i * angle * J_axis) to a Dicke-basis state.

    Parameters
    ----------
    state : DickeState
    axis : {"x", "y", "z"}
    angle : float
        Rotation generator angle; see the module docstring for the sign
        of the induced Bloch-vector rotation.
    """
    if axis not in ("x", "y", "z"):
        raise ParameterError(f"rotation axis must be x, y or z, got {axis!r}")
    if not np.isfinite(angle):
        raise ParameterError("rotation angle must be finite")
    amps = rotate_rows(state.amps[None, :], state.j, axis, angle)[0]
    return DickeState(state.j, amps)


def rotate_rows(rows: np.ndarray, j: float, axis: str, angle: float) -> np.ndarray:
    """Vectorized ``rotate`` acting on each row of a (B, 2J+1) array."""
    j = _check_j(j)
    rows = np.asarray(rows, dtype=np.complex128)
    if axis == "z":
        return rows * np.exp(1j * angle * m_values(j))[None, :]
    w, q, phase = _xy_eigenbasis(int(round(2 * j)), axis)
    work = rows * phase.conj()[None, :] if axis == "y" else rows
    work = (work @ q) * np.exp(1j * angle * w)[None, :]
    work = work @ q.T
    if axis == "y":
        work = work * phase[None, :]
    return work


def bloch_rotation(axis: str, angle: float) -> np.ndarray:
    """3x3 action of ``rotate(. , axis, angle)`` on the mean-spin vector."""
    c, s = np.cos(angle), np.sin(angle)
    if axis == "z":
        return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    if axis == "y":
        return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    raise ParameterError(f"axis must be x, y or z, got {axis!r}")


@dataclass(frozen=True)
class SpinMoments:
    """First and symmetrized second moments of the collective spin."""

    j: float
    mean: np.ndarray  # <(Jx, Jy, Jz)>
    cov: np.ndarray   # Cov[a,b] = <{Ja,Jb}>/2 - <Ja><Jb>

    @property
    def n(self) -> np.ndarray:
        """Bloch vector <J>/J."""
        return self.mean / self.j

    @property
    def V(self) -> np.ndarray:
        """Scaled covariance (<{Ja,Jb}> - 2<Ja><Jb>) / 2J."""
        return self.cov / self.j

    @property
    def dJz2(self) -> float:
        """Variance of Jz."""
        return float(self.cov[2, 2])


def expectations(state: DickeState) -> SpinMoments:
    """Spin moments of a pure Dicke-basis state in O(2J+1) operations."""
    return moments_rows(state.amps[None, :], state.j)[0]


def moments_rows(rows: np.ndarray, j: float) -> list[SpinMoments]:
    """Moments for each row of a (B, 2J+1) amplitude array.

    Rows are normalized internally, so callers may pass unnormalized
    amplitudes.
    """
    j = _check_j(j)
    rows = np.asarray(rows, dtype=np.complex128)
    m = m_values(j)
    e = _raise_elements(j)  # e[idx] couples idx -> idx-1 under J+
    norms2 = np.einsum("bi,bi->b", rows.conj(), rows).real
    if np.any(norms2 <= 0):
        raise ParameterError("cannot take moments of a zero state")
    p = (rows.conj() * rows).real / norms2[:, None]
    c = rows / np.sqrt(norms2)[:, None]

    jz = p @ m
    jz2 = p @ (m * m)
    # <J+> = sum_idx conj(c[idx-1]) e[idx] c[idx]
    plus = np.einsum("bi,i,bi->b", c[:, :-1].conj(), e[1:], c[:, 1:])
    # <J+^2> couples idx -> idx-2
    e2 = e[1:-1] * e[2:]
    plus2 = np.einsum("bi,i,bi->b", c[:, :-2].conj(), e2, c[:, 2:])
    # diagonal products J+J- and J-J+
    npm = p @ (j * (j + 1) - m * (m - 1))
    nmp = p @ (j * (j + 1) - m * (m + 1))
    # W = <J+ (2Jz + 1)>
    w = np.einsum("bi,i,bi->b", c[:, :-1].conj(), e[1:] * (2 * m[1:] + 1), c[:, 1:])

    out = []
    for b in range(rows.shape[0]):
        mean = np.array([plus[b].real, plus[b].imag, jz[b]])
        jx2 = 0.25 * (2 * plus2[b].real + npm[b] + nmp[b])
        jy2 = 0.25 * (npm[b] + nmp[b] - 2 * plus2[b].real)
        # <{Jx,Jy}>/2 = Im<J+^2>/2, <{Jx,Jz}>/2 = Re<J+(2Jz+1)>/2
        sym_xy = 0.5 * plus2[b].imag
        sym_xz = 0.5 * w[b].real
        sym_yz = 0.5 * w[b].imag
        second = np.array(
            [
                [jx2, sym_xy, sym_xz],
                [sym_xy, jy2, sym_yz],
                [sym_xz, sym_yz, jz2[b]],
            ]
        )
        cov = second - np.outer(mean, mean)
        out.append(SpinMoments(j, mean, cov))
    return out
