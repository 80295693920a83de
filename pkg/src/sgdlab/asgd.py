"""Asynchronous SGD against a single parameter server.

Workers loop independently: download the model, compute a gradient
(taking their configured compute time), upload it, and immediately ask
for the model again.  The interleaving is produced by the switch
simulator, so staleness emerges from transfer and compute delays rather
than being injected.

Updates are atomic: the server applies uploads one at a time, in arrival
order, breaking ties by worker id.  A hard gate keeps every applied
gradient's staleness within the configured bound: an upload is held back
whenever applying it would push some other worker's in-flight
computation past the bound.  Symmetric workers need the bound to be at
least N-1 (the cold start already creates that much); an infeasible
bound is reported as a configuration error with diagnostics instead of
silently hanging.

A gated worker simply waits; it does not recompute on a fresher model.
"""

from __future__ import annotations

from bisect import bisect_right
from fractions import Fraction

import numpy as np

from .netsim import NetworkParams, SendRequest, SwitchSimulator
from .sampling import MinibatchSpec, batch_mean_gradient, draw, spawn_rngs
from .trainers import (
    ASGD,
    BITS_PER_UNIT,
    RunMetrics,
    TrainerConfig,
    TrainerConfigError,
    _initial_point,
    _Recorder,
    resolve_gamma,
)


def run_asgd(config: TrainerConfig, obj) -> RunMetrics:
    if config.tau_max is None:
        raise TrainerConfigError("asynchronous training needs a staleness bound")
    if config.network is None and config.timing != "off":
        raise TrainerConfigError("asynchronous training needs network parameters")
    n = config.n_workers
    tau = config.tau_max
    metrics = RunMetrics(algorithm=ASGD, gamma=0.0)
    gamma = resolve_gamma(config, obj, metrics)
    metrics.gamma = gamma
    rec = _Recorder(metrics, obj, config.record_trace)

    params = config.network or NetworkParams(0, 0, 1)
    sim = SwitchSimulator(
        NetworkParams(params.t_latency, params.t_transfer_per_unit, n + 1)
    )
    server = n
    size = Fraction(obj.dim)
    compute_times = config.worker_compute_times()
    rngs = spawn_rngs(config.seed, n)
    spec = MinibatchSpec(
        batch_size=config.batch_size, mode=config.sampling_mode, seed=config.seed
    )

    history = [_initial_point(config, obj)]
    applied_times: list[Fraction] = []
    version = 0
    # a worker always has one outstanding cycle; this is the freshest model
    # version it can possibly be computing on (exact once the fetch lands)
    version_floor = [0] * n
    pending: list[tuple] = []  # (arrival, worker, gradient, fetched_version)
    computed: dict[int, tuple] = {}
    bits_per_update = 2 * size * BITS_PER_UNIT

    def submit_fetch(worker: int, when: Fraction):
        version_floor[worker] = version
        sim.submit(SendRequest(when, server, worker, size, f"fetch/{worker}"))

    def eligible(entry) -> bool:
        _, worker, _, fetched = entry
        if version - fetched > tau:
            return False
        return all(
            version + 1 - version_floor[other] <= tau
            for other in range(n)
            if other != worker
        )

    def drain(now: Fraction):
        nonlocal version
        progressed = True
        while progressed and version < config.iterations and pending:
            progressed = False
            for entry in sorted(pending, key=lambda e: (e[0], e[1])):
                if not eligible(entry):
                    continue
                pending.remove(entry)
                _, worker, gradient, fetched = entry
                current = history[version]
                rec.observe(current, now, Fraction(version + 1) * bits_per_update)
                history.append(current - gamma * gradient)
                applied_times.append(now)
                metrics.staleness.append(version - fetched)
                version += 1
                if version < config.iterations:
                    submit_fetch(worker, now)
                progressed = True
                break

    for worker in range(n):
        submit_fetch(worker, Fraction(0))

    while version < config.iterations:
        event = sim.step()
        if event is None:
            raise TrainerConfigError(
                "asynchronous run stalled: no update can be applied without "
                f"exceeding the staleness bound tau={tau} "
                f"(version={version}, outstanding fetch versions={version_floor}, "
                f"queued={[(str(e[0]), e[1], e[3]) for e in pending]}); "
                "symmetric workers need tau >= N-1"
            )
        kind, worker_str = event.tag.split("/")
        worker = int(worker_str)
        if kind == "fetch":
            fetched = bisect_right(applied_times, event.send_start)
            version_floor[worker] = fetched
            batch = np.sort(draw(spec, obj.n_samples, rngs[worker]))
            gradient = batch_mean_gradient(obj, history[fetched], batch)
            computed[worker] = (gradient, fetched)
            sim.submit(
                SendRequest(
                    event.completion + compute_times[worker],
                    worker,
                    server,
                    size,
                    f"push/{worker}",
                )
            )
        else:
            gradient, fetched = computed.pop(worker)
            pending.append((event.completion, worker, gradient, fetched))
            drain(event.completion)

    metrics.comm_rounds = config.iterations
    metrics.final_sim_time = applied_times[-1] if applied_times else Fraction(0)
    metrics.final_bits = Fraction(config.iterations) * bits_per_update
    return rec.finish(history[version])
