"""Training loops: GD, SGD, and the distributed variants with their
system relaxations (compression, error compensation, decentralization,
local averaging).  Asynchronous training lives in ``asgd.py``.

Workers are simulated actors inside one deterministic loop; the network
clock advances by the exact per-round cost of the configured collective
(obtained by simulating one round, since all synchronous rounds are
identical).  Every random draw flows through per-worker PCG64 streams
spawned from the run seed, so matched seeds give matched sample paths
across algorithms, which is what the equivalence tests rely on.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import collectives
from .compression import Compressor, identity as identity_compressor
from .netsim import NetworkParams, as_fraction
from .objective import Objective, ShardedObjective
from .sampling import (
    WITHOUT_REPLACEMENT,
    MinibatchSpec,
    batch_mean_gradient,
    draw,
    spawn_rngs,
)
from .topology import ConfusionMatrix

GD = "gd"
SGD = "sgd"
MB_SGD = "mb-sgd"
CSGD = "csgd"
EC_SGD = "ec-sgd"
ASGD = "asgd"
DSGD = "dsgd"
K_STEP_AVG = "k-step-avg"

ALGORITHMS = (GD, SGD, MB_SGD, CSGD, EC_SGD, ASGD, DSGD, K_STEP_AVG)

GRADIENT_AGG = "gradient-agg"
MODEL_AGG = "model-agg"
GLOBAL_REPLICA = "global-replica"

BITS_PER_UNIT = 32


class TrainerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainerConfig:
    algorithm: str
    iterations: int
    n_workers: int = 1
    batch_size: int = 1
    gamma: float | str = "auto"
    seed: int = 0
    sampling_mode: str = WITHOUT_REPLACEMENT
    implementation: str = ""      # mb-sgd flavor, or csgd "ps" / "ring"
    collective: str = ""          # gradient-agg sum pattern; ring by default
    avg_every: int = 1            # local steps between averaging rounds
    tau_max: int | None = None    # staleness bound (asgd)
    compressor: Compressor | None = None
    confusion: ConfusionMatrix | None = None
    network: NetworkParams | None = None
    timing: str = "network"       # "network" or "off"
    compute_time: object = 0      # per-gradient compute delay (rational)
    compute_times: tuple | None = None  # per-worker override
    x0: np.ndarray | None = None
    record_trace: bool = False
    record_ec_state: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise TrainerConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.iterations < 1:
            raise TrainerConfigError("need at least one iteration")
        if self.n_workers < 1:
            raise TrainerConfigError("need at least one worker")
        if self.avg_every < 1:
            raise TrainerConfigError("averaging period must be >= 1")
        if self.tau_max is not None and self.tau_max < 0:
            raise TrainerConfigError("staleness bound must be nonnegative")
        if self.timing not in ("network", "off"):
            raise TrainerConfigError("timing must be 'network' or 'off'")
        if isinstance(self.gamma, str):
            if self.gamma != "auto":
                raise TrainerConfigError("gamma must be a number or 'auto'")
        elif self.gamma <= 0:
            raise TrainerConfigError("gamma must be positive")

    def worker_compute_times(self) -> list[Fraction]:
        if self.compute_times is not None:
            times = [as_fraction(c) for c in self.compute_times]
            if len(times) != self.n_workers:
                raise TrainerConfigError("need one compute time per worker")
            return times
        return [as_fraction(self.compute_time)] * self.n_workers


@dataclass
class RunMetrics:
    algorithm: str
    gamma: float
    loss: np.ndarray = field(default_factory=lambda: np.empty(0))
    grad_norm_sq: np.ndarray = field(default_factory=lambda: np.empty(0))
    consensus: np.ndarray = field(default_factory=lambda: np.empty(0))
    sim_time: list = field(default_factory=list)    # cumulative, exact
    bits_sent: list = field(default_factory=list)   # cumulative, exact
    comm_rounds: int = 0
    x_final: np.ndarray | None = None
    trace: list | None = None
    staleness: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    ec_state: list | None = None
    final_sim_time: Fraction = Fraction(0)
    final_bits: Fraction = Fraction(0)

    @property
    def iterations(self) -> int:
        return len(self.loss)

    @property
    def criterion(self) -> float:
        """The convergence measure: mean squared gradient norm over the run."""
        return float(np.mean(self.grad_norm_sq))

    def criterion_tail(self, fraction: float = 0.5) -> float:
        """Steady-state criterion: mean over the trailing part of the run."""
        start = int(len(self.grad_norm_sq) * (1.0 - fraction))
        return float(np.mean(self.grad_norm_sq[start:]))

    @property
    def total_sim_time(self) -> Fraction:
        """Clock after the final iteration's compute and communication."""
        return self.final_sim_time

    @property
    def total_bits(self) -> Fraction:
        return self.final_bits

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "gamma": self.gamma,
            "iterations": self.iterations,
            "criterion": self.criterion,
            "min_grad_norm_sq": float(np.min(self.grad_norm_sq)),
            "final_loss": float(self.loss[-1]),
            "total_sim_time": str(self.total_sim_time),
            "total_bits": str(self.total_bits),
            "comm_rounds": self.comm_rounds,
            "max_staleness": max(self.staleness) if self.staleness else None,
            "warnings": list(self.warnings),
        }


class _Recorder:
    def __init__(self, metrics: RunMetrics, obj: Objective, record_trace: bool):
        self.metrics = metrics
        self.obj = obj
        self._loss = []
        self._gns = []
        self._consensus = []
        if record_trace:
            self.metrics.trace = []

    def observe(self, x_bar, clock: Fraction, bits: Fraction, consensus: float = 0.0):
        grad = self.obj.full_gradient(x_bar)
        self._loss.append(self.obj.loss(x_bar))
        self._gns.append(float(grad @ grad))
        self._consensus.append(consensus)
        self.metrics.sim_time.append(clock)
        self.metrics.bits_sent.append(bits)
        if self.metrics.trace is not None:
            self.metrics.trace.append(np.array(x_bar, copy=True))

    def finish(self, x_final, clock=None):
        self.metrics.loss = np.array(self._loss)
        self.metrics.grad_norm_sq = np.array(self._gns)
        self.metrics.consensus = np.array(self._consensus)
        self.metrics.x_final = np.array(x_final, copy=True)
        if clock is not None:
            self.metrics.final_sim_time = clock.clock
            self.metrics.final_bits = clock.bits
        return self.metrics


# ---------------------------------------------------------------------------
# learning rates from the convergence theorems
# ---------------------------------------------------------------------------


def auto_learning_rate(
    algorithm: str,
    lipschitz: float,
    horizon: int,
    sigma: float = 0.0,
    sigma_prime: float = 0.0,
    varsigma: float = 0.0,
    rho: float = 0.0,
    tau: int = 0,
    n_workers: int = 1,
) -> float:
    """Theorem-prescribed step size for each algorithm at horizon T."""
    L, T, N = lipschitz, horizon, n_workers
    if L <= 0 or T < 1:
        raise TrainerConfigError("need a positive Lipschitz constant and horizon")
    if algorithm == GD:
        return 1.0 / L
    if algorithm in (SGD, MB_SGD, K_STEP_AVG):
        return 1.0 / (L + sigma * np.sqrt(T * L))
    if algorithm == CSGD:
        sigma_c = np.sqrt(sigma**2 / N + (1.0 + 1.0 / N) * sigma_prime**2)
        return 1.0 / (L + sigma_c * np.sqrt(T * L))
    if algorithm == EC_SGD:
        return 1.0 / (2.0 * L + np.sqrt(T / N) * sigma + T ** (1.0 / 3.0) * sigma_prime ** (2.0 / 3.0))
    if algorithm == ASGD:
        return 1.0 / (L * (tau + 1) + np.sqrt(T * L) * sigma)
    if algorithm == DSGD:
        if rho >= 1.0:
            raise TrainerConfigError("decentralized training needs a spectral gap")
        mixing = varsigma ** (2.0 / 3.0) * rho ** (2.0 / 3.0) * (1.0 - rho) ** (-2.0 / 3.0)
        return 1.0 / (1.0 + np.sqrt(T * N) * sigma + T ** (1.0 / 3.0) * mixing)
    raise TrainerConfigError(f"no learning-rate rule for {algorithm!r}")


def side_condition_violations(
    algorithm: str,
    gamma: float,
    lipschitz: float,
    horizon: int,
    sigma: float = 0.0,
    sigma_prime: float = 0.0,
    rho: float = 0.0,
    tau: int = 0,
    n_workers: int = 1,
) -> list:
    """Step-size requirements attached to each convergence theorem."""
    L, T, N = lipschitz, horizon, n_workers
    bad = []
    if algorithm == GD:
        if gamma >= 2.0 / L:
            bad.append(f"gamma={gamma:g} >= 2/L; descent no longer guaranteed")
        return bad
    if algorithm in (SGD, MB_SGD, K_STEP_AVG, CSGD):
        if gamma * L >= 1.0:
            bad.append(f"gamma*L={gamma * L:g} >= 1; expected-descent margin lost")
        return bad
    if algorithm == EC_SGD:
        if gamma > 1.0 / (4.0 * L):
            bad.append(f"gamma={gamma:g} > 1/(4L)")
        if sigma > 0 and gamma > np.sqrt(N / T) / sigma:
            bad.append(f"gamma={gamma:g} > sqrt(N/T)/sigma")
        if sigma_prime > 0 and gamma > T ** (-1.0 / 3.0) * sigma_prime ** (-2.0 / 3.0):
            bad.append(f"gamma={gamma:g} > T^(-1/3) sigma'^(-2/3)")
        return bad
    if algorithm == ASGD:
        if gamma * L > 1.0:
            bad.append(f"gamma*L={gamma * L:g} > 1")
        if gamma * L * tau > 0.5:
            bad.append(f"gamma*L*tau={gamma * L * tau:g} > 1/2")
        return bad
    if algorithm == DSGD:
        if gamma > (1.0 - rho) / (4.0 * L):
            bad.append(f"gamma={gamma:g} > (1-rho)/(4L)")
        if gamma > (1.0 - rho) ** 2 * N / L:
            bad.append(f"gamma={gamma:g} > (1-rho)^2 N / L")
        return bad
    return bad


def _measure_sigma_prime_for(obj: Objective, compressor: Compressor, seed: int) -> float:
    from .compression import measure_sigma_prime
    from .sampling import make_rng

    rng = make_rng((seed, 0x51F))
    probes = [obj.full_gradient(rng.standard_normal(obj.dim)) for _ in range(3)]
    return measure_sigma_prime(compressor, probes, trials=200, seed=seed)


def resolve_gamma(config: TrainerConfig, obj: Objective, metrics: RunMetrics) -> float:
    """Fill in gamma from the matching theorem, or validate an explicit one."""
    sigma_prime = 0.0
    if config.compressor is not None and config.compressor.kind != "identity":
        sp = config.compressor.sigma_prime
        sigma_prime = sp if sp is not None else np.sqrt(
            _measure_sigma_prime_for(obj, config.compressor, config.seed)
        )
    varsigma = 0.0
    if config.algorithm == DSGD and config.n_workers > 1:
        varsigma = ShardedObjective(obj, config.n_workers).varsigma_bound
    rho = config.confusion.rho if config.confusion is not None else 0.0
    if config.gamma == "auto":
        gamma = auto_learning_rate(
            config.algorithm,
            lipschitz=obj.lipschitz,
            horizon=config.iterations,
            sigma=obj.sigma_bound,
            sigma_prime=sigma_prime,
            varsigma=varsigma,
            rho=rho,
            tau=config.tau_max or 0,
            n_workers=config.n_workers,
        )
    else:
        gamma = float(config.gamma)
    violations = side_condition_violations(
        config.algorithm,
        gamma,
        lipschitz=obj.lipschitz,
        horizon=config.iterations,
        sigma=obj.sigma_bound,
        sigma_prime=sigma_prime,
        rho=rho,
        tau=config.tau_max or 0,
        n_workers=config.n_workers,
    )
    metrics.warnings.extend(violations)
    return gamma


# ---------------------------------------------------------------------------
# shared machinery
# ---------------------------------------------------------------------------


class WorkerPool:
    """Per-worker data shards and sampling streams."""

    def __init__(self, obj: Objective, config: TrainerConfig):
        self.obj = obj
        self.sharded = ShardedObjective(obj, config.n_workers)
        self.rngs = spawn_rngs(config.seed, config.n_workers)
        self.spec = MinibatchSpec(
            batch_size=config.batch_size, mode=config.sampling_mode, seed=config.seed
        )
        if config.sampling_mode == WITHOUT_REPLACEMENT:
            smallest = min(len(s) for s in self.sharded.shards)
            if config.batch_size > smallest:
                raise TrainerConfigError(
                    f"batch size {config.batch_size} exceeds the smallest shard ({smallest})"
                )

    def gradient(self, worker: int, x: np.ndarray) -> np.ndarray:
        shard = self.sharded.shards[worker]
        local = draw(self.spec, len(shard), self.rngs[worker])
        indices = np.sort(np.asarray(shard, dtype=np.int64)[local])
        return batch_mean_gradient(self.obj, x, indices)


def _mean_vectors(vectors) -> np.ndarray:
    total = vectors[0].copy()
    for v in vectors[1:]:
        total = total + v
    return total / len(vectors)


class RoundClock:
    """Accumulates exact simulated time and wire bits per round."""

    def __init__(self, round_cost: Fraction, units_per_round: Fraction, compute: Fraction):
        self.round_cost = round_cost
        self.units_per_round = units_per_round
        self.compute = compute
        self.clock = Fraction(0)
        self.bits = Fraction(0)
        self.rounds = 0

    def compute_only(self):
        self.clock += self.compute

    def advance(self):
        self.clock += self.compute + self.round_cost
        self.bits += self.units_per_round * BITS_PER_UNIT
        self.rounds += 1


def _round_profile(config: TrainerConfig, obj: Objective, kind: str, compressed: bool):
    """One communication round's exact cost and wire volume.

    All synchronous rounds of a run are identical, so one simulated round
    pins the per-round makespan exactly; 'timing: off' skips the network
    entirely.
    """
    w = config.n_workers
    compute = max(config.worker_compute_times()) if w else Fraction(0)
    if config.timing == "off" or w < 2 or config.network is None:
        return RoundClock(Fraction(0), Fraction(0), compute)
    params = config.network
    comp = config.compressor if (compressed and config.compressor) else identity_compressor()
    if kind in (collectives.RING_PARTITIONED, collectives.PS_MULTI):
        slices = collectives.partition_slices(obj.dim, w)
        sizes = [comp.encoded_units(sl.stop - sl.start) for sl in slices]
        timeline = collectives.simulate_round(kind, w, params, part_sizes=sizes)
        units = 2 * (w - 1) * sum(sizes)
    elif kind == collectives.PS_SINGLE:
        size = comp.encoded_units(obj.dim)
        timeline = collectives.simulate_round(kind, w, params, vector_size=size)
        units = 2 * w * size
    elif kind == collectives.DECENTRALIZED_RING:
        neighbor_lists = [config.confusion.neighbors(n) for n in range(w)]
        size = Fraction(obj.dim)
        timeline = collectives.simulate_round(
            kind, w, params, vector_size=size, neighbor_lists=neighbor_lists
        )
        units = sum(len(nb) for nb in neighbor_lists) * size
    else:
        size = comp.encoded_units(obj.dim)
        timeline = collectives.simulate_round(kind, w, params, vector_size=size)
        units = 2 * (w - 1) * size
    return RoundClock(timeline.makespan, units, compute)


def _initial_point(config: TrainerConfig, obj: Objective) -> np.ndarray:
    if config.x0 is not None:
        x0 = np.asarray(config.x0, dtype=float)
        if x0.shape != (obj.dim,):
            raise TrainerConfigError("x0 has the wrong dimension")
        return x0.copy()
    return np.zeros(obj.dim)


# ---------------------------------------------------------------------------
# the loops
# ---------------------------------------------------------------------------


def run_gd(config: TrainerConfig, obj: Objective) -> RunMetrics:
    metrics = RunMetrics(algorithm=GD, gamma=0.0)
    gamma = resolve_gamma(config, obj, metrics)
    metrics.gamma = gamma
    rec = _Recorder(metrics, obj, config.record_trace)
    x = _initial_point(config, obj)
    clock = RoundClock(Fraction(0), Fraction(0), as_fraction(config.compute_time))
    for _ in range(config.iterations):
        rec.observe(x, clock.clock, clock.bits)
        clock.compute_only()
        x = x - gamma * obj.full_gradient(x)
    return rec.finish(x, clock)


def run_sgd(config: TrainerConfig, obj: Objective) -> RunMetrics:
    if config.n_workers != 1:
        raise TrainerConfigError("plain SGD runs on a single worker; use mb-sgd")
    metrics = RunMetrics(algorithm=SGD, gamma=0.0)
    gamma = resolve_gamma(config, obj, metrics)
    metrics.gamma = gamma
    rec = _Recorder(metrics, obj, config.record_trace)
    pool = WorkerPool(obj, config)
    x = _initial_point(config, obj)
    clock = RoundClock(Fraction(0), Fraction(0), as_fraction(config.compute_time))
    for _ in range(config.iterations):
        rec.observe(x, clock.clock, clock.bits)
        clock.compute_only()
        x = x - gamma * pool.gradient(0, x)
    return rec.finish(x, clock)


def run_mb_sgd(config: TrainerConfig, obj: Objective) -> RunMetrics:
    impl = config.implementation or GRADIENT_AGG
    if impl == GRADIENT_AGG:
        return _run_gradient_agg(config, obj, MB_SGD, aggregate="plain")
    if impl == MODEL_AGG:
        return _run_local_average(config, obj, MB_SGD, avg_every=1)
    if impl == GLOBAL_REPLICA:
        return _run_global_replica(config, obj)
    raise TrainerConfigError(f"unknown mb-sgd implementation {impl!r}")


def run_csgd(config: TrainerConfig, obj: Objective) -> RunMetrics:
    form = config.implementation or "ring"
    if form not in ("ps", "ring"):
        raise TrainerConfigError("csgd form must be 'ps' or 'ring'")
    compressor = config.compressor or identity_compressor()
    aggregate = "compressed-ps" if form == "ps" else "compressed-ring"
    if not compressor.unbiased:
        message = (
            f"{compressor.kind} is biased; compressed SGD theory assumes an "
            "unbiased operator and convergence is not guaranteed"
        )
        warnings.warn(message, stacklevel=2)
        metrics = _run_gradient_agg(config, obj, CSGD, aggregate=aggregate)
        metrics.warnings.insert(0, message)
        return metrics
    return _run_gradient_agg(config, obj, CSGD, aggregate=aggregate)


def _run_gradient_agg(config: TrainerConfig, obj: Objective, name: str, aggregate: str) -> RunMetrics:
    metrics = RunMetrics(algorithm=name, gamma=0.0)
    gamma = resolve_gamma(config, obj, metrics)
    metrics.gamma = gamma
    rec = _Recorder(metrics, obj, config.record_trace)
    pool = WorkerPool(obj, config)
    w = config.n_workers
    compressor = config.compressor or identity_compressor()
    comp_rngs = spawn_rngs((config.seed, 0xC0), w + 1)
    if aggregate == "compressed-ps":
        kind = collectives.PS_MULTI
    elif aggregate == "compressed-ring":
        kind = collectives.RING_PARTITIONED
    else:
        kind = config.collective or collectives.RING_PARTITIONED
        if kind not in collectives.KINDS or kind == collectives.DECENTRALIZED_RING:
            raise TrainerConfigError(f"{kind!r} is not a sum collective")
    clock = _round_profile(config, obj, kind, compressed=aggregate != "plain")
    x = _initial_point(config, obj)
    for _ in range(config.iterations):
        rec.observe(x, clock.clock, clock.bits)
        grads = [pool.gradient(n, x) for n in range(w)]
        if w == 1:
            estimate = grads[0]
            clock.compute_only()
        elif aggregate == "plain":
            estimate = collectives.allreduce_sum(kind, grads) / w
            clock.advance()
        elif aggregate == "compressed-ps":
            estimate = collectives.compressed_ps_aggregate(grads, compressor, comp_rngs)
            clock.advance()
        else:
            estimate = collectives.compressed_ring_allreduce(grads, compressor, comp_rngs) / w
            clock.advance()
        x = x - gamma * estimate
    metrics.comm_rounds = clock.rounds
    return rec.finish(x, clock)


def _run_global_replica(config: TrainerConfig, obj: Objective) -> RunMetrics:
    metrics = RunMetrics(algorithm=MB_SGD, gamma=0.0)
    gamma = resolve_gamma(config, obj, metrics)
    metrics.gamma = gamma
    rec = _Recorder(metrics, obj, config.record_trace)
    pool = WorkerPool(obj, config)
    clock = _round_profile(config, obj, collectives.PS_MULTI, compressed=False)
    x = _initial_point(config, obj)
    for _ in range(config.iterations):
        rec.observe(x, clock.clock, clock.bits)
        grads = [pool.gradient(n, x) for n in range(config.n_workers)]
        if config.n_workers > 1:
            clock.advance()
        else:
            clock.compute_only()
        x = x - gamma * _mean_vectors(grads)
    metrics.comm_rounds = clock.rounds
    return rec.finish(x, clock)


def _run_local_average(config: TrainerConfig, obj: Objective, name: str, avg_every: int) -> RunMetrics:
    metrics = RunMetrics(algorithm=name, gamma=0.0)
    gamma = resolve_gamma(config, obj, metrics)
    metrics.gamma = gamma
    rec = _Recorder(metrics, obj, config.record_trace)
    pool = WorkerPool(obj, config)
    w = config.n_workers
    clock = _round_profile(config, obj, collectives.RING_PARTITIONED, compressed=False)
    models = [_initial_point(config, obj) for _ in range(w)]
    for t in range(config.iterations):
        x_bar = _mean_vectors(models)
        spread = float(
            np.sqrt(sum(float((m - x_bar) @ (m - x_bar)) for m in models))
        )
        rec.observe(x_bar, clock.clock, clock.bits, consensus=spread)
        models = [models[n] - gamma * pool.gradient(n, models[n]) for n in range(w)]
        last = t == config.iterations - 1
        if w > 1 and ((t + 1) % avg_every == 0 or last):
            total = collectives.allreduce_sum(collectives.RING_PARTITIONED, models)
            average = total / w
            models = [average.copy() for _ in range(w)]
            clock.advance()
        else:
            clock.compute_only()
    metrics.comm_rounds = clock.rounds
    return rec.finish(_mean_vectors(models), clock)


def run_k_step_avg(config: TrainerConfig, obj: Objective) -> RunMetrics:
    return _run_local_average(config, obj, K_STEP_AVG, avg_every=config.avg_every)


def run_ec_sgd(config: TrainerConfig, obj: Objective) -> RunMetrics:
    metrics = RunMetrics(algorithm=EC_SGD, gamma=0.0)
    gamma = resolve_gamma(config, obj, metrics)
    metrics.gamma = gamma
    rec = _Recorder(metrics, obj, config.record_trace)
    pool = WorkerPool(obj, config)
    w = config.n_workers
    compressor = config.compressor or identity_compressor()
    comp_rngs = spawn_rngs((config.seed, 0xC0), w + 1)
    server_rng = comp_rngs[w]
    clock = _round_profile(config, obj, collectives.PS_SINGLE, compressed=True)
    x = _initial_point(config, obj)
    worker_residual = [np.zeros(obj.dim) for _ in range(w)]
    server_residual = np.zeros(obj.dim)
    if config.record_ec_state:
        metrics.ec_state = []
    for _ in range(config.iterations):
        rec.observe(x, clock.clock, clock.bits)
        grads = [pool.gradient(n, x) for n in range(w)]
        sent = []
        for n in range(w):
            carried = grads[n] + worker_residual[n]
            encoded = compressor(carried, comp_rngs[n])
            worker_residual[n] = carried - encoded
            sent.append(encoded)
        aggregated = _mean_vectors(sent) + server_residual
        broadcast = compressor(aggregated, server_rng)
        server_residual = aggregated - broadcast
        if metrics.ec_state is not None:
            omega = server_residual + _mean_vectors(worker_residual)
            metrics.ec_state.append(
                {
                    "applied": broadcast.copy(),
                    "omega": omega,
                    "mean_gradient": _mean_vectors(grads),
                }
            )
        if w > 1:
            clock.advance()
        else:
            clock.compute_only()
        x = x - gamma * broadcast
    metrics.comm_rounds = clock.rounds
    return rec.finish(x, clock)


def run_dsgd(config: TrainerConfig, obj: Objective) -> RunMetrics:
    if config.confusion is None:
        raise TrainerConfigError("decentralized training needs a confusion matrix")
    confusion = config.confusion
    if confusion.size != config.n_workers:
        raise TrainerConfigError("confusion matrix size must match the worker count")
    if confusion.spectral_gap <= 1e-9:
        raise TrainerConfigError(
            f"confusion matrix has rho={confusion.rho:.12f}; a disconnected "
            "topology cannot mix and is rejected"
        )
    metrics = RunMetrics(algorithm=DSGD, gamma=0.0)
    gamma = resolve_gamma(config, obj, metrics)
    metrics.gamma = gamma
    rec = _Recorder(metrics, obj, config.record_trace)
    pool = WorkerPool(obj, config)
    w = config.n_workers
    clock = _round_profile(config, obj, collectives.DECENTRALIZED_RING, compressed=False)
    states = np.tile(_initial_point(config, obj), (w, 1))
    for _ in range(config.iterations):
        x_bar = _mean_vectors(list(states))
        spread = float(np.linalg.norm(states - x_bar, ord="fro"))
        rec.observe(x_bar, clock.clock, clock.bits, consensus=spread)
        grads = np.stack([pool.gradient(n, states[n]) for n in range(w)])
        states = confusion.mix(states - gamma * grads)
        if w > 1:
            clock.advance()
        else:
            clock.compute_only()
    metrics.comm_rounds = clock.rounds
    return rec.finish(_mean_vectors(list(states)), clock)


def run(config: TrainerConfig, obj: Objective) -> RunMetrics:
    """Dispatch on the configured algorithm."""
    from .asgd import run_asgd

    dispatch = {
        GD: run_gd,
        SGD: run_sgd,
        MB_SGD: run_mb_sgd,
        CSGD: run_csgd,
        EC_SGD: run_ec_sgd,
        ASGD: run_asgd,
        DSGD: run_dsgd,
        K_STEP_AVG: run_k_step_avg,
    }
    return dispatch[config.algorithm](config, obj)
