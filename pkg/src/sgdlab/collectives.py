"""Collective communication schedules over the switch model.

Five patterns are provided: a single dedicated parameter server, the
partitioned ring AllReduce (reduce-scatter + allgather), its
unpartitioned variant, a multi-server parameter server in which every
worker hosts one partition, and the decentralized neighbor exchange.

Each pattern has three faces that tests cross-check against each other:

* a value computation (exact sums with a documented reduction order, or
  the compressed aggregation forms),
* a message schedule driven through the event simulator, with later
  messages issued at the completion of the data they depend on,
* the closed-form cost, stated for a vector of a given size with the
  transfer term scaled by the compression ratio eta.

Worker-count convention: costs are expressed for W participating
workers.  The single-server pattern uses one extra machine as the
server; all other patterns involve only the W workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import ceil

import numpy as np

from .netsim import (
    EventTimeline,
    NetworkParams,
    SendRequest,
    SwitchSimulator,
    as_fraction,
)

PS_SINGLE = "ps-single"
RING_PARTITIONED = "allreduce-ring-partitioned"
RING_UNPARTITIONED = "allreduce-ring-unpartitioned"
PS_MULTI = "ps-multi"
DECENTRALIZED_RING = "decentralized-ring"

KINDS = (PS_SINGLE, RING_PARTITIONED, RING_UNPARTITIONED, PS_MULTI, DECENTRALIZED_RING)


class CollectiveError(ValueError):
    pass


def partition_slices(dim: int, n_workers: int) -> list[slice]:
    """Contiguous partitions whose sizes differ by at most one element."""
    base, extra = divmod(dim, n_workers)
    sizes = [base + (1 if i < extra else 0) for i in range(n_workers)]
    slices, start = [], 0
    for size in sizes:
        slices.append(slice(start, start + size))
        start += size
    return slices


def closed_form_cost(
    kind: str,
    n_workers: int,
    vector_size,
    params: NetworkParams,
    eta=Fraction(1),
) -> Fraction:
    """Cost of one synchronous round, with transfer scaled by eta.

    The vector is treated as evenly divisible for the partitioned kinds,
    matching the textbook formulas.
    """
    w = n_workers
    if w < 2:
        raise CollectiveError("collectives need at least 2 workers")
    eta = as_fraction(eta)
    if not 0 < eta <= 1:
        raise CollectiveError("compression ratio must lie in (0, 1]")
    lat = params.t_latency
    transfer = eta * as_fraction(vector_size) * params.t_transfer_per_unit
    if kind == PS_SINGLE:
        return 2 * w * (lat + transfer)
    if kind in (RING_PARTITIONED, PS_MULTI):
        return 2 * (w - 1) * lat + 2 * Fraction(w - 1, w) * transfer
    if kind == RING_UNPARTITIONED:
        return 2 * (w - 1) * (lat + transfer)
    if kind == DECENTRALIZED_RING:
        return 2 * lat + 2 * transfer
    raise CollectiveError(f"unknown collective kind {kind!r}")


def k_step_rounds(total_steps: int, k: int) -> int:
    """Averaging rounds for K-step local training: one per block of K."""
    if k < 1 or total_steps < 1:
        raise CollectiveError("need K >= 1 and at least one step")
    return ceil(total_steps / k)


# ---------------------------------------------------------------------------
# message schedules (timing only; sizes in transfer units)
# ---------------------------------------------------------------------------


def simulate_round(
    kind: str,
    n_workers: int,
    params: NetworkParams,
    part_sizes=None,
    vector_size=None,
    down_size=None,
    neighbor_lists=None,
) -> EventTimeline:
    """Drive one round of the pattern through the event simulator.

    ``part_sizes`` (per-partition units) feeds the partitioned kinds;
    ``vector_size`` the whole-vector kinds.  For the single-server
    pattern ``down_size`` may differ from the upload size.  Dependent
    messages are issued at the completion of the message that carried
    their data, so contention is resolved entirely by the simulator.
    """
    w = n_workers
    if w < 2:
        raise CollectiveError("collectives need at least 2 workers")
    if kind == PS_SINGLE:
        return _simulate_ps_single(w, params, vector_size, down_size)
    if kind == RING_PARTITIONED:
        return _simulate_ring_partitioned(w, params, part_sizes)
    if kind == PS_MULTI:
        return _simulate_ps_multi(w, params, part_sizes)
    if kind == RING_UNPARTITIONED:
        return _simulate_ring_unpartitioned(w, params, vector_size)
    if kind == DECENTRALIZED_RING:
        return _simulate_decentralized(w, params, vector_size, neighbor_lists)
    raise CollectiveError(f"unknown collective kind {kind!r}")


def _require_sizes(part_sizes, w):
    if part_sizes is None or len(part_sizes) != w:
        raise CollectiveError("partitioned kinds need one size per worker")
    return [as_fraction(s) for s in part_sizes]


def _sim_over(w, params):
    return SwitchSimulator(
        NetworkParams(params.t_latency, params.t_transfer_per_unit, w)
    )


def _simulate_ps_single(w, params, vector_size, down_size):
    if vector_size is None:
        raise CollectiveError("ps-single needs a vector size")
    up = as_fraction(vector_size)
    down = up if down_size is None else as_fraction(down_size)
    sim = SwitchSimulator(
        NetworkParams(params.t_latency, params.t_transfer_per_unit, w + 1)
    )
    server = w
    for i in range(w):
        sim.submit(SendRequest(Fraction(0), i, server, up, f"up/{i}"))
    ready = Fraction(0)
    while (done := sim.step()) is not None:
        ready = max(ready, done.completion)
    for i in range(w):
        sim.submit(SendRequest(ready, server, i, down, f"down/{i}"))
    return sim.run()


def _simulate_ring_partitioned(w, params, part_sizes):
    sizes = _require_sizes(part_sizes, w)
    sim = _sim_over(w, params)
    last_hop = 2 * w - 3

    def submit_hop(p, hop, issue):
        src = (p + hop) % w
        sim.submit(SendRequest(issue, src, (src + 1) % w, sizes[p], f"{p}/{hop}"))

    for p in range(w):
        submit_hop(p, 0, Fraction(0))
    while (done := sim.step()) is not None:
        p, hop = (int(s) for s in done.tag.split("/"))
        if hop < last_hop:
            submit_hop(p, hop + 1, done.completion)
    return sim.timeline


def _simulate_ps_multi(w, params, part_sizes):
    sizes = _require_sizes(part_sizes, w)
    sim = _sim_over(w, params)
    for k in range(1, w):
        for n in range(w):
            host = (n + k) % w
            sim.submit(SendRequest(Fraction(0), n, host, sizes[host], f"up/{k}/{n}"))
    ready = {n: Fraction(0) for n in range(w)}
    while (done := sim.step()) is not None:
        ready[done.dst] = max(ready[done.dst], done.completion)
    for k in range(1, w):
        for n in range(w):
            sim.submit(SendRequest(ready[n], n, (n + k) % w, sizes[n], f"down/{k}/{n}"))
    return sim.run()


def _simulate_ring_unpartitioned(w, params, vector_size):
    if vector_size is None:
        raise CollectiveError("the unpartitioned ring needs a vector size")
    size = as_fraction(vector_size)
    sim = _sim_over(w, params)
    sim.submit(SendRequest(Fraction(0), 0, 1 % w, size, "hop/0"))
    last_hop = 2 * w - 3
    while (done := sim.step()) is not None:
        hop = int(done.tag.split("/")[1])
        if hop < last_hop:
            src = (hop + 1) % w
            sim.submit(SendRequest(done.completion, src, (src + 1) % w, size, f"hop/{hop + 1}"))
    return sim.timeline


def _simulate_decentralized(w, params, vector_size, neighbor_lists):
    if vector_size is None:
        raise CollectiveError("neighbor exchange needs a vector size")
    if neighbor_lists is None:
        if w < 3:
            raise CollectiveError("the decentralized ring needs at least 3 workers")
        neighbor_lists = [[(n + 1) % w, (n - 1) % w] for n in range(w)]
    size = as_fraction(vector_size)
    sim = _sim_over(w, params)
    for n, neighbors in enumerate(neighbor_lists):
        # send order walks the ring rightward from each worker
        for j in sorted(neighbors, key=lambda j: (j - n) % w):
            sim.submit(SendRequest(Fraction(0), n, j, size, f"x/{n}/{j}"))
    return sim.run()


# ---------------------------------------------------------------------------
# value computations
# ---------------------------------------------------------------------------


def _check_inputs(inputs):
    vectors = [np.asarray(v, dtype=float) for v in inputs]
    if len(vectors) < 2:
        raise CollectiveError("collectives need at least 2 workers")
    dim = vectors[0].shape
    if any(v.shape != dim for v in vectors):
        raise CollectiveError("all inputs must share one dimension")
    return vectors


def allreduce_sum(kind: str, inputs) -> np.ndarray:
    """The sum every worker ends up holding, reduced in schedule order.

    ps-single and the unpartitioned ring accumulate w_0 + w_1 + ...;
    the partitioned ring starts partition p at worker p and follows the
    ring, and the multi-server pattern collects each partition at its
    host in arrival order.  All workers hold bitwise-identical copies,
    so a single array is returned.
    """
    vectors = _check_inputs(inputs)
    w = len(vectors)
    if kind in (PS_SINGLE, RING_UNPARTITIONED):
        total = vectors[0].copy()
        for v in vectors[1:]:
            total = total + v
        return total
    if kind == RING_PARTITIONED:
        out = np.empty_like(vectors[0])
        for p, sl in enumerate(partition_slices(vectors[0].size, w)):
            acc = vectors[p][sl].copy()
            for i in range(1, w):
                acc = acc + vectors[(p + i) % w][sl]
            out[sl] = acc
        return out
    if kind == PS_MULTI:
        out = np.empty_like(vectors[0])
        for host, sl in enumerate(partition_slices(vectors[0].size, w)):
            acc = vectors[host][sl].copy()
            for k in range(1, w):
                acc = acc + vectors[(host - k) % w][sl]
            out[sl] = acc
        return out
    raise CollectiveError(f"{kind!r} is not a sum collective")


def compressed_ps_aggregate(inputs, compressor, rngs) -> np.ndarray:
    """Multi-server aggregation with both directions compressed.

    Every worker compresses each of its partition chunks before upload
    (the host compresses its own chunk locally, for symmetry); the host
    averages the decoded chunks and compresses the result once more for
    the broadcast.  Chunks are compressed independently, matching the
    wire format where each message carries its own range scalars.
    """
    vectors = _check_inputs(inputs)
    w = len(vectors)
    out = np.empty_like(vectors[0])
    for host, sl in enumerate(partition_slices(vectors[0].size, w)):
        acc = compressor(vectors[host][sl], rngs[host])
        for k in range(1, w):
            sender = (host - k) % w
            acc = acc + compressor(vectors[sender][sl], rngs[sender])
        out[sl] = compressor(acc / w, rngs[host])
    return out


def compressed_ring_allreduce(inputs, compressor, rngs) -> np.ndarray:
    """Ring aggregation with recompression at every hop.

    Partition p starts compressed at worker p; each later worker adds
    its raw chunk to the decoded running sum and compresses again, so
    the sum passes through the operator once per worker.  The allgather
    phase forwards the final encoded value unchanged.
    """
    vectors = _check_inputs(inputs)
    w = len(vectors)
    out = np.empty_like(vectors[0])
    for p, sl in enumerate(partition_slices(vectors[0].size, w)):
        acc = compressor(vectors[p][sl], rngs[p])
        for i in range(1, w):
            holder = (p + i) % w
            acc = compressor(acc + vectors[holder][sl], rngs[holder])
        out[sl] = acc
    return out


# ---------------------------------------------------------------------------
# combined run
# ---------------------------------------------------------------------------


@dataclass
class CollectiveOutcome:
    results: list[np.ndarray]
    timeline: EventTimeline
    simulated_cost: Fraction
    closed_form_cost: Fraction
    total_units: Fraction


def run_collective(
    kind: str,
    inputs,
    params: NetworkParams,
    unit_size=Fraction(1),
) -> CollectiveOutcome:
    """Sum the inputs, simulate the round, and report both cost routes.

    ``unit_size`` scales element counts into transfer units (1 element =
    1 raw 32-bit unit by default).  The closed form is evaluated at the
    exact same total vector size; for evenly divisible vectors the two
    costs agree exactly.
    """
    vectors = _check_inputs(inputs)
    w = len(vectors)
    dim = vectors[0].size
    unit_size = as_fraction(unit_size)
    vec_units = dim * unit_size
    if kind == DECENTRALIZED_RING:
        left = [vectors[(n - 1) % w] for n in range(w)]
        right = [vectors[(n + 1) % w] for n in range(w)]
        results = [
            (vectors[n] + left[n] + right[n]) / 3.0 for n in range(w)
        ]
        timeline = simulate_round(kind, w, params, vector_size=vec_units)
        total_units = 2 * w * vec_units
    else:
        total = allreduce_sum(kind, vectors)
        results = [total.copy() for _ in range(w)]
        if kind in (RING_PARTITIONED, PS_MULTI):
            sizes = [unit_size * (sl.stop - sl.start) for sl in partition_slices(dim, w)]
            timeline = simulate_round(kind, w, params, part_sizes=sizes)
            total_units = 2 * (w - 1) * vec_units
        else:
            timeline = simulate_round(kind, w, params, vector_size=vec_units)
            total_units = (2 * w if kind == PS_SINGLE else 2 * (w - 1)) * vec_units
    return CollectiveOutcome(
        results=results,
        timeline=timeline,
        simulated_cost=timeline.makespan,
        closed_form_cost=closed_form_cost(kind, w, vec_units, params),
        total_units=total_units,
    )
