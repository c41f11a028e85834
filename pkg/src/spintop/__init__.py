"""Measurement-plus-feedback simulation of collective-spin kicked-top dynamics.

A weak collective-Jz measurement followed by record-conditioned rotation
feedback realizes the kicked-top map on a spin ensemble.  The package
provides exact pure-state trajectories in the Dicke basis, the
record-averaged dephasing map, a Gaussian large-N engine, the classical
limit with Lyapunov estimation, an atom-light decoherence layer, and a
CLI that orchestrates ensembles deterministically.
"""

from .atomlight import AtomLightParams, measurement_window, od_params, sme_protocol_step
from .classical import (
    ClassicalGenerator,
    LyapunovEstimate,
    LyapunovOptions,
    chaotic_asymptote,
    ckt_step,
    ckt_trajectory,
    estimate_lyapunov,
    fibonacci_sphere,
    local_lyapunov,
)
from .dicke import DickeState, SpinMoments, expectations, rotate, spin_coherent_state
from .engines import (
    ENGINES,
    GaussianGenerator,
    QUANTUM_MAX_ATOMS,
    TrajectorySet,
    replay_hp,
    run_trajectories,
)
from .errors import (
    ConfigError,
    DegenerateOutcomeError,
    EngineMismatchError,
    FrameDegeneracyError,
    IntegratorStepError,
    NumericalDegeneracyError,
    ParameterError,
    SpintopError,
)
from .gaussian import GaussianSpinState, hp_condition, hp_feedback, hp_step
from .metrics import SimilarityScore, TrajectoryRecord, max_classical_distance, similarity
from .protocol import (
    DensityMatrix,
    ProtocolParams,
    apply_feedback,
    apply_kraus,
    averaged_step,
    dephase,
    gamma_rate,
    optimal_sigma_sq,
    sample_outcome,
    trajectory_step,
)
from .streams import substream

__version__ = "0.1.0"
