"""Trajectory records and comparison metrics.

A trajectory is compared with a noise-free reference through two summaries:
the maximum pointwise Euclidean distance between the Bloch curves, and an
angular similarity score built from Pearson correlations of the polar and
(unwrapped) azimuthal angle sequences, weighted by the worst-case squared
norm of the simulated trajectory.  Statistically degenerate inputs (a fixed
point gives a constant angle sequence with no variance) produce a flagged
NaN score instead of an exception so parameter sweeps can skip those cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "TrajectoryRecord",
    "SimilarityScore",
    "FLAG_ZERO_NORM",
    "FLAG_ZERO_VARIANCE_THETA",
    "FLAG_ZERO_VARIANCE_PHI",
    "bloch_angles",
    "max_classical_distance",
    "pearson",
    "similarity",
]

# Angle sequences fluctuate by O(1/sqrt(N)) >= 1e-5 for any ensemble this
# package can simulate; anything below this is roundoff on a constant.
_STD_FLOOR = 1e-12

FLAG_ZERO_NORM = "zero-norm-point"
FLAG_ZERO_VARIANCE_THETA = "zero-variance-theta"
FLAG_ZERO_VARIANCE_PHI = "zero-variance-phi"


@dataclass(frozen=True)
class TrajectoryRecord:
    """One trajectory: per-step Bloch means, records, and optional covariances."""

    engine: str
    ic_index: int
    traj_index: int
    master_seed: int
    ic: np.ndarray
    n: np.ndarray
    m: np.ndarray
    V: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return self.n.shape[0]

    def validate(self) -> None:
        if self.ic.shape != (3,):
            raise ParameterError("initial condition must be a 3-vector")
        if self.n.ndim != 2 or self.n.shape[1] != 3:
            raise ParameterError("trajectory means must have shape (n_steps, 3)")
        if self.m.shape != (self.n.shape[0],):
            raise ParameterError("record length must match the number of steps")
        if self.V is not None and self.V.shape != (self.n.shape[0], 3, 3):
            raise ParameterError("covariance track must have shape (n_steps, 3, 3)")
        norms = np.linalg.norm(self.n, axis=1)
        if norms.size and norms.max() > 1.0 + 1e-9:
            raise ParameterError(f"Bloch norm {norms.max():.12g} exceeds 1")


@dataclass(frozen=True)
class SimilarityScore:
    """Angular similarity of a trajectory to a reference.

    S = cor_theta * cor_phi * min_norm_sq when defined; a degenerate input
    leaves S as NaN with ``flag`` naming the reason.
    """

    S: float
    cor_theta: float
    cor_phi: float
    min_norm_sq: float
    flag: str | None = None

    @property
    def valid(self) -> bool:
        return self.flag is None


def bloch_angles(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Polar and unwrapped azimuthal angles plus squared norms of a Bloch curve.

    Returns (theta, phi, norm_sq) arrays of length n_steps.  phi is made
    continuous with np.unwrap; rows with vanishing norm give NaN angles.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ParameterError("points must have shape (n_steps, 3)")
    norm_sq = np.einsum("ij,ij->i", pts, pts)
    norms = np.sqrt(norm_sq)
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.arccos(np.clip(pts[:, 2] / norms, -1.0, 1.0))
    phi = np.unwrap(np.arctan2(pts[:, 1], pts[:, 0]))
    theta = np.where(norms > 0.0, theta, np.nan)
    phi = np.where(norms > 0.0, phi, np.nan)
    return theta, phi, norm_sq


def max_classical_distance(points: np.ndarray, ref_points: np.ndarray) -> float:
    """Largest pointwise Euclidean distance between two aligned Bloch curves."""
    a = np.asarray(points, dtype=float)
    b = np.asarray(ref_points, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3 or b.ndim != 2 or b.shape[1] != 3:
        raise ParameterError("trajectories must have shape (n_steps, 3)")
    if a.shape[0] != b.shape[0]:
        raise ParameterError(
            f"trajectories have different lengths ({a.shape[0]} vs {b.shape[0]})"
        )
    if a.shape[0] == 0:
        raise ParameterError("trajectories must contain at least one step")
    return float(np.linalg.norm(a - b, axis=1).max())


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation, NaN when either sequence has (near) zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt((dx * dx).mean()))
    sy = float(np.sqrt((dy * dy).mean()))
    if sx <= _STD_FLOOR or sy <= _STD_FLOOR:
        return float("nan")
    return float((dx * dy).mean() / (sx * sy))


def similarity(points: np.ndarray, ref_points: np.ndarray) -> SimilarityScore:
    """Score how closely a trajectory tracks a reference on the sphere.

    Correlates the two polar-angle sequences and the two unwrapped
    azimuthal-angle sequences, then scales the product by the minimum
    squared Bloch norm of ``points`` so depolarized trajectories cannot
    score highly.  Needs at least 3 steps for a meaningful correlation.
    """
    a = np.asarray(points, dtype=float)
    b = np.asarray(ref_points, dtype=float)
    if a.shape != b.shape:
        raise ParameterError("trajectory and reference must have matching shapes")
    if a.ndim != 2 or a.shape[1] != 3:
        raise ParameterError("trajectories must have shape (n_steps, 3)")
    if a.shape[0] < 3:
        raise ParameterError("similarity needs at least 3 steps")

    theta_a, phi_a, norm_sq_a = bloch_angles(a)
    theta_b, phi_b, _ = bloch_angles(b)
    min_norm_sq = float(norm_sq_a.min())

    if np.isnan(theta_a).any() or np.isnan(theta_b).any():
        return SimilarityScore(
            S=float("nan"),
            cor_theta=float("nan"),
            cor_phi=float("nan"),
            min_norm_sq=min_norm_sq,
            flag=FLAG_ZERO_NORM,
        )

    cor_theta = pearson(theta_a, theta_b)
    cor_phi = pearson(phi_a, phi_b)
    if np.isnan(cor_theta):
        flag = FLAG_ZERO_VARIANCE_THETA
    elif np.isnan(cor_phi):
        flag = FLAG_ZERO_VARIANCE_PHI
    else:
        flag = None
    s = cor_theta * cor_phi * min_norm_sq if flag is None else float("nan")
    return SimilarityScore(
        S=float(s),
        cor_theta=float(cor_theta),
        cor_phi=float(cor_phi),
        min_norm_sq=min_norm_sq,
        flag=flag,
    )
