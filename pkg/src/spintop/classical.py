"""Classical kicked-top map on the sphere and Benettin-style Lyapunov rates.

The map is the mean-field limit of the feedback protocol: a z twist by
angle k*Z followed by a y rotation by p, acting on the unit vector
(X, Y, Z).  For p = pi/2 it has the period-4 orbit through (1, 0, 0)
and fixed points at (0, +/-1, 0).

Divergence rates come from the standard two-trajectory scheme: evolve a
fiducial point plus a few shadows offset by a geodesic distance d0,
renormalize the separations back to d0 every few steps, and average the
accumulated log stretch.  Stochastic generators are handled with common
random numbers (fiducial and shadows see the same draws), which makes
the finite-noise rate well defined.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalDegeneracyError, ParameterError
from .streams import substream

__all__ = [
    "twist_kick_rotation",
    "ckt_step",
    "ckt_trajectory",
    "fibonacci_sphere",
    "chaotic_asymptote",
    "LyapunovOptions",
    "LyapunovEstimate",
    "ClassicalGenerator",
    "local_lyapunov",
    "estimate_lyapunov",
]

_D_FLOOR = 1e-15


def twist_kick_rotation(phi: np.ndarray, p: float) -> np.ndarray:
    """Mean-spin rotation of one protocol step: z twist by phi, then y by p.

    Returns a (..., 3, 3) stack; the twist angles may be any shape.
    Both the classical map and the Gaussian engine apply exactly this
    matrix, so their deterministic limits agree bit for bit.
    """
    phi = np.asarray(phi, dtype=float)
    cz, sz = np.cos(phi), np.sin(phi)
    cp, sp = np.cos(p), np.sin(p)
    r = np.empty(phi.shape + (3, 3))
    # Ry(p) @ Rz(phi) in the mean-spin (adjoint) convention
    r[..., 0, 0] = cp * cz
    r[..., 0, 1] = cp * sz
    r[..., 0, 2] = -sp
    r[..., 1, 0] = -sz
    r[..., 1, 1] = cz
    r[..., 1, 2] = 0.0
    r[..., 2, 0] = sp * cz
    r[..., 2, 1] = sp * sz
    r[..., 2, 2] = cp
    return r


def ckt_step(points: np.ndarray, k: float, p: float = np.pi / 2) -> np.ndarray:
    """One classical kicked-top step for an (..., 3) array of unit vectors."""
    points = np.asarray(points, dtype=float)
    r = twist_kick_rotation(k * points[..., 2], p)
    return np.einsum("...ab,...b->...a", r, points)


def ckt_trajectory(ics: np.ndarray, k: float, p: float, n_steps: int) -> np.ndarray:
    """Post-step points of each classical trajectory: shape (B, n_steps, 3)."""
    ics = np.atleast_2d(np.asarray(ics, dtype=float))
    out = np.empty((ics.shape[0], n_steps, 3))
    cur = ics.copy()
    for t in range(n_steps):
        cur = ckt_step(cur, k, p)
        out[:, t] = cur
    return out


def fibonacci_sphere(n: int) -> np.ndarray:
    """Quasi-uniform lattice of n points on the unit sphere."""
    if n < 1:
        raise ParameterError("need at least one grid point")
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = i * (np.pi * (3.0 - np.sqrt(5.0)))
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def chaotic_asymptote(k: float) -> float:
    """Large-kick growth rate ln(k/2) of the fully chaotic top (k >~ 10)."""
    if k <= 0:
        raise ParameterError("k must be positive")
    return math.log(k / 2.0)


@dataclass(frozen=True)
class LyapunovOptions:
    """Knobs of the divergence estimate.

    n_steps defaults to 500, appropriate for the deterministic map; use
    around 100 for stochastic generators, where long products drift off
    the common-noise linearization.  The first n_discard renormalization
    intervals are excluded from the average: they cover the transient
    while a random offset rotates into the most-expanding direction, and
    keeping them biases strongly chaotic rates low.
    """

    d0: float = 1e-6
    n_shadows: int = 4
    renorm_interval: int = 1
    n_steps: int = 500
    n_discard: int = 10

    def __post_init__(self):
        if not (0 < self.d0 < 1e-2):
            raise ParameterError("d0 must be a small positive offset")
        if self.n_shadows < 1:
            raise ParameterError("need at least one shadow")
        if self.renorm_interval < 1 or self.n_steps < self.renorm_interval:
            raise ParameterError("renorm_interval must divide into n_steps at least once")
        if self.n_discard < 0 or self.n_steps // self.renorm_interval <= self.n_discard:
            raise ParameterError("n_discard must leave at least one accumulating interval")


@dataclass(frozen=True)
class LyapunovEstimate:
    """Aggregate divergence rate over an initial-condition grid."""

    lambda_largest: float
    variance: float
    n_ics: int
    per_ic: np.ndarray
    failures: list = field(default_factory=list)

    @property
    def n_ok(self) -> int:
        return self.n_ics - len(self.failures)

    @property
    def stderr(self) -> float:
        if self.n_ok < 2:
            return float("nan")
        return math.sqrt(self.variance / self.n_ok)


class ClassicalGenerator:
    """Deterministic kicked-top stepper for the divergence driver."""

    noise_dim = 0

    def __init__(self, k: float, p: float = np.pi / 2):
        self.k = k
        self.p = p

    def start(self, points: np.ndarray):
        return np.array(points, dtype=float, copy=True)

    def step(self, state, noise=None):
        return ckt_step(state, self.k, self.p)

    def points(self, state) -> np.ndarray:
        return state

    def set_points(self, state, points: np.ndarray):
        return np.array(points, dtype=float, copy=True)


def _tangent_offsets(ic: np.ndarray, n_shadows: int, d0: float, rng) -> np.ndarray:
    """Shadow points a geodesic distance d0 from ic, random directions."""
    nn = np.linalg.norm(ic)
    if nn <= 0:
        raise ParameterError("initial condition must be a nonzero vector")
    nh = ic / nn
    out = np.empty((n_shadows, 3))
    for s in range(n_shadows):
        for _ in range(64):
            v = rng.standard_normal(3)
            t = v - (v @ nh) * nh
            tn = np.linalg.norm(t)
            if tn > 1e-12:
                break
        else:  # pragma: no cover - probability zero
            raise NumericalDegeneracyError("could not draw a tangent direction")
        out[s] = nn * (math.cos(d0) * nh + math.sin(d0) * (t / tn))
    return out


def _run_groups(generator, ics: np.ndarray, opts: LyapunovOptions, rngs) -> tuple[np.ndarray, list]:
    """Evolve (fiducial + shadows) per IC; return per-IC rates and failures."""
    ics = np.atleast_2d(np.asarray(ics, dtype=float))
    g = ics.shape[0]
    s = opts.n_shadows
    span = 1 + s
    pts = np.empty((g, span, 3))
    noise = None
    if generator.noise_dim:
        noise = np.empty((g, opts.n_steps, generator.noise_dim))
    for i, rng in enumerate(rngs):
        pts[i, 0] = ics[i]
        pts[i, 1:] = _tangent_offsets(ics[i], s, opts.d0, rng)
        if noise is not None:
            noise[i] = rng.standard_normal((opts.n_steps, generator.noise_dim))

    state = generator.start(pts.reshape(g * span, 3))
    acc = np.zeros((g, s))
    alive = np.ones(g, dtype=bool)
    failures: list = []
    n_renorms = 0
    for t in range(opts.n_steps):
        step_noise = None
        if noise is not None:
            step_noise = np.repeat(noise[:, t, :], span, axis=0)
        state = generator.step(state, step_noise)
        if (t + 1) % opts.renorm_interval:
            continue
        n_renorms += 1
        cur = np.array(generator.points(state), copy=True).reshape(g, span, 3)
        diff = cur[:, 1:] - cur[:, :1]
        d = np.linalg.norm(diff, axis=2)
        collapsed = alive & np.any(d < _D_FLOOR, axis=1)
        for i in np.where(collapsed)[0]:
            failures.append((int(i), f"shadow separation underflow at step {t + 1}"))
        alive &= ~collapsed
        if n_renorms > opts.n_discard:
            ok = alive
            with np.errstate(divide="ignore"):
                acc[ok] += np.log(d[ok] / opts.d0)
        scale = np.where(d > _D_FLOOR, opts.d0 / np.where(d > 0, d, 1.0), 1.0)
        cur[:, 1:] = cur[:, :1] + diff * scale[:, :, None]
        state = generator.set_points(state, cur.reshape(g * span, 3))
    t_eff = max(n_renorms - opts.n_discard, 1) * opts.renorm_interval
    per_ic = acc.mean(axis=1) / t_eff
    per_ic[~alive] = np.nan
    return per_ic, failures


def local_lyapunov(generator, ic: np.ndarray, opts: LyapunovOptions, rng) -> float:
    """Divergence rate from a single initial condition.

    Raises NumericalDegeneracyError if the shadows collapse onto the
    fiducial trajectory below floating-point resolution.
    """
    per_ic, failures = _run_groups(generator, np.asarray(ic, dtype=float)[None, :], opts, [rng])
    if failures:
        raise NumericalDegeneracyError(
            f"divergence estimate degenerate: {failures[0][1]}",
            ic=list(map(float, np.asarray(ic, dtype=float))),
            d0=opts.d0,
        )
    return float(per_ic[0])


def estimate_lyapunov(
    generator,
    ics: np.ndarray,
    opts: LyapunovOptions,
    master_seed: int,
    stream_prefix: tuple = (),
) -> LyapunovEstimate:
    """Aggregate divergence rate over an IC grid.

    Each IC gets its own noise stream keyed by (master_seed, *prefix, i),
    so the result is independent of chunking or scheduling.  Collapsed
    ICs are excluded from the aggregate and reported in ``failures``.
    """
    ics = np.atleast_2d(np.asarray(ics, dtype=float))
    rngs = [substream(master_seed, *stream_prefix, i) for i in range(ics.shape[0])]
    per_ic, failures = _run_groups(generator, ics, opts, rngs)
    good = per_ic[~np.isnan(per_ic)]
    if good.size == 0:
        raise NumericalDegeneracyError("every initial condition failed", n_ics=ics.shape[0])
    mean = math.fsum(good.tolist()) / good.size
    if good.size > 1:
        var = math.fsum(((x - mean) ** 2 for x in good.tolist())) / (good.size - 1)
    else:
        var = float("nan")
    return LyapunovEstimate(
        lambda_largest=mean,
        variance=var,
        n_ics=ics.shape[0],
        per_ic=per_ic,
        failures=failures,
    )
