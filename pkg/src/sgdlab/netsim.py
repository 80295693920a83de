"""Deterministic discrete-event simulator of a single logical-switch network.

Every message pays a fixed per-message latency plus a transfer time
proportional to its size.  The switch itself has unlimited aggregate
bandwidth; all contention happens at the endpoints: each worker owns one
serial send channel and one serial receive channel and may drive both at
once (full duplex).

Channel semantics:

* The sender's send channel is held from send start until completion
  (the sender paces the whole transfer, latency included).
* The receiver's receive channel is occupied from first-bit arrival
  (send start + latency) until completion.
* A message that cannot start because a channel is occupied re-attempts
  at the moment that channel frees, and its latency begins only then.
  Latency is never pipelined with the wait.
* Pending sends from one worker form a FIFO queue: a later message never
  overtakes an earlier one from the same source.

Ties are broken by (attempt time, issue time, source id, submission
order), so identical inputs always produce identical timelines.

All times and sizes are exact rationals (`fractions.Fraction`), which lets
cost identities be tested with zero tolerance.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

Time = Fraction


def as_fraction(value) -> Fraction:
    """Coerce a config value to an exact rational.

    Accepts ints, Fractions, strings like ``"1.5"`` or ``"3/2"``, and
    floats.  Floats go through their shortest decimal repr, so a config
    value written as 1.5 means exactly 3/2 and 0.1 means exactly 1/10.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as an exact time/size")


class SimulationError(ValueError):
    """Raised for invalid network parameters or send requests."""


@dataclass(frozen=True)
class NetworkParams:
    """Two-parameter cost model: per-message latency, per-unit transfer time."""

    t_latency: Fraction
    t_transfer_per_unit: Fraction
    n_workers: int

    def __post_init__(self):
        object.__setattr__(self, "t_latency", as_fraction(self.t_latency))
        object.__setattr__(
            self, "t_transfer_per_unit", as_fraction(self.t_transfer_per_unit)
        )
        if self.t_latency < 0 or self.t_transfer_per_unit < 0:
            raise SimulationError("latency and transfer time must be nonnegative")
        if self.n_workers < 1:
            raise SimulationError("need at least one worker")

    def message_time(self, size) -> Fraction:
        """Uncontended duration of one message: latency + size * transfer."""
        return self.t_latency + as_fraction(size) * self.t_transfer_per_unit


@dataclass(frozen=True)
class SendRequest:
    issue_time: Fraction
    src: int
    dst: int
    size: Fraction
    tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "issue_time", as_fraction(self.issue_time))
        object.__setattr__(self, "size", as_fraction(self.size))
        if self.src == self.dst:
            raise SimulationError(f"message {self.tag!r} has src == dst == {self.src}")
        if self.size < 0:
            raise SimulationError(f"message {self.tag!r} has negative size")


@dataclass(frozen=True)
class Completion:
    tag: str
    src: int
    dst: int
    send_start: Fraction
    first_bit: Fraction
    completion: Fraction


@dataclass
class EventTimeline:
    completions: list[Completion] = field(default_factory=list)

    def __len__(self):
        return len(self.completions)

    @property
    def makespan(self) -> Fraction:
        return makespan(self)

    def by_tag(self) -> dict[str, Completion]:
        return {c.tag: c for c in self.completions}

    def to_json(self) -> str:
        records = [
            {
                "tag": c.tag,
                "src": c.src,
                "dst": c.dst,
                "send_start": str(c.send_start),
                "first_bit": str(c.first_bit),
                "completion": str(c.completion),
            }
            for c in self.completions
        ]
        return json.dumps(records, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tag", "src", "dst", "send_start", "first_bit", "completion"])
        for c in self.completions:
            writer.writerow(
                [
                    c.tag,
                    c.src,
                    c.dst,
                    repr(float(c.send_start)),
                    repr(float(c.first_bit)),
                    repr(float(c.completion)),
                ]
            )
        return buf.getvalue()


def makespan(timeline: EventTimeline, origin: Fraction | None = None) -> Fraction:
    """Max completion minus the earliest send start (or a given origin)."""
    if not timeline.completions:
        raise SimulationError("makespan of an empty timeline")
    end = max(c.completion for c in timeline.completions)
    if origin is None:
        origin = min(c.send_start for c in timeline.completions)
    return end - origin


class SwitchSimulator:
    """Incremental event engine over one logical switch.

    ``submit`` may be called at any point, also from code reacting to a
    completion returned by ``step`` (the new request's issue time must not
    precede the returned completion).  ``run`` drains everything and
    returns the full timeline.
    """

    def __init__(self, params: NetworkParams):
        self.params = params
        self._seq = 0
        self._completion_seq = 0
        # attempt heap entries: (attempt_time, issue_time, src, seq, request)
        self._attempts: list[tuple] = []
        # completion heap entries: (completion_time, completion_seq, Completion)
        self._completions: list[tuple] = []
        self._send_busy_until: dict[int, Fraction] = {}
        self._recv_busy_until: dict[int, Fraction] = {}
        # per-source FIFO of requests not yet released into the attempt heap
        self._send_queue: dict[int, list] = {}
        self.timeline = EventTimeline()

    def submit(self, request: SendRequest) -> None:
        for worker in (request.src, request.dst):
            if not 0 <= worker < self.params.n_workers:
                raise SimulationError(
                    f"worker id {worker} out of range for N={self.params.n_workers}"
                )
        seq = self._seq
        self._seq += 1
        queue = self._send_queue.setdefault(request.src, [])
        queue.append((seq, request))
        if len(queue) == 1:
            self._release_head(request.src)

    def _release_head(self, src: int) -> None:
        seq, request = self._send_queue[src][0]
        attempt = max(request.issue_time, self._send_busy_until.get(src, Fraction(0)))
        heapq.heappush(self._attempts, (attempt, request.issue_time, src, seq, request))

    def _process_attempt(self) -> None:
        attempt, _issue, src, seq, request = heapq.heappop(self._attempts)
        start = max(attempt, self._send_busy_until.get(src, Fraction(0)))
        first_bit = start + self.params.t_latency
        recv_free = self._recv_busy_until.get(request.dst, Fraction(0))
        if recv_free > first_bit:
            # Blocked: re-attempt at the moment the receive channel frees;
            # latency starts over from there.
            heapq.heappush(
                self._attempts, (recv_free, request.issue_time, src, seq, request)
            )
            return
        completion = first_bit + request.size * self.params.t_transfer_per_unit
        self._send_busy_until[src] = completion
        self._recv_busy_until[request.dst] = completion
        record = Completion(
            tag=request.tag,
            src=src,
            dst=request.dst,
            send_start=start,
            first_bit=first_bit,
            completion=completion,
        )
        heapq.heappush(
            self._completions, (completion, self._completion_seq, record)
        )
        self._completion_seq += 1
        queue = self._send_queue[src]
        queue.pop(0)
        if queue:
            self._release_head(src)

    def step(self) -> Completion | None:
        """Advance to the next message completion and return it."""
        while True:
            if not self._attempts and not self._completions:
                return None
            if self._attempts and (
                not self._completions or self._attempts[0][0] <= self._completions[0][0]
            ):
                self._process_attempt()
                continue
            _, _, record = heapq.heappop(self._completions)
            self.timeline.completions.append(record)
            return record

    def run(self) -> EventTimeline:
        while self.step() is not None:
            pass
        return self.timeline

    @property
    def clock(self) -> Fraction:
        """Time of the latest completion handed out so far."""
        if not self.timeline.completions:
            return Fraction(0)
        return self.timeline.completions[-1].completion


def simulate(params: NetworkParams, requests: Sequence[SendRequest]) -> EventTimeline:
    """Schedule a static batch of requests and return the full timeline.

    Requests are fed to the engine in issue order (stable), so each
    sender's FIFO queue follows issue times regardless of list order.
    """
    sim = SwitchSimulator(params)
    for _, _, request in sorted(
        (request.issue_time, position, request)
        for position, request in enumerate(requests)
    ):
        sim.submit(request)
    return sim.run()


def example_one_requests(to_m1: bool = True) -> list[SendRequest]:
    """The three-message workload used throughout the switch-model examples.

    The third message goes to machine 1, which is busy receiving from
    machine 2; with latency 3/2 and five time units per MB the workload
    spans exactly 14 units, and 9 units once all sizes are halved.
    ``to_m1=False`` redirects the third message to machine 2 instead.
    """
    third_dst = 0 if to_m1 else 1
    return [
        SendRequest(issue_time=Fraction(5), src=0, dst=1, size=Fraction(1), tag="m1-to-m2"),
        SendRequest(issue_time=Fraction(6), src=1, dst=0, size=Fraction(1), tag="m2-to-m1"),
        SendRequest(issue_time=Fraction(6), src=2, dst=third_dst, size=Fraction(1), tag="m3"),
    ]
