"""Desk-scale laboratory for distributed SGD system relaxations.

Synthetic objectives, lossy gradient compression, error compensation,
asynchronous and decentralized training, and K-step model averaging, all
timed against a deterministic discrete-event model of a single logical
switch.
"""

from .compression import (
    Compressor,
    clip_bits,
    clipper,
    identity,
    measure_sigma_prime,
    one_bit,
    quantize_rq,
    rq,
    sign_compressor,
    sparsifier,
    sparsify,
)
from .collectives import (
    DECENTRALIZED_RING,
    PS_MULTI,
    PS_SINGLE,
    RING_PARTITIONED,
    RING_UNPARTITIONED,
    closed_form_cost,
    run_collective,
    simulate_round,
)
from .netsim import (
    EventTimeline,
    NetworkParams,
    SendRequest,
    SwitchSimulator,
    as_fraction,
    makespan,
    simulate,
)
from .objective import Objective, ShardedObjective, estimate_constants, make_objective
from .sampling import MinibatchSpec, draw, minibatch_gradient, variance_factor
from .topology import ConfusionMatrix, load_matrix, make_matrix, ring_rho_exact, spectral_rho
from .trainers import (
    RunMetrics,
    TrainerConfig,
    TrainerConfigError,
    auto_learning_rate,
    run,
    side_condition_violations,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
