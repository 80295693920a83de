"""Minibatch index sampling and the batch-mean variance law.

The reproducibility contract: every random draw in this package flows
through ``numpy.random.Generator`` backed by PCG64, seeded through
``SeedSequence``.  Worker streams are spawned from the run seed, so runs
are bit-reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence

WITH_REPLACEMENT = "with-replacement"
WITHOUT_REPLACEMENT = "without-replacement"


def make_rng(seed) -> Generator:
    """The package-wide generator: PCG64 seeded via SeedSequence."""
    if isinstance(seed, SeedSequence):
        return Generator(PCG64(seed))
    return Generator(PCG64(SeedSequence(seed)))


def spawn_rngs(seed: int, count: int) -> list[Generator]:
    """Independent per-worker streams, deterministic in (seed, count)."""
    return [Generator(PCG64(ss)) for ss in SeedSequence(seed).spawn(count)]


@dataclass(frozen=True)
class MinibatchSpec:
    batch_size: int
    mode: str = WITHOUT_REPLACEMENT
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (WITH_REPLACEMENT, WITHOUT_REPLACEMENT):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")

    def to_config(self) -> dict:
        return {"batch_size": self.batch_size, "mode": self.mode, "seed": self.seed}

    @staticmethod
    def from_config(cfg: dict) -> "MinibatchSpec":
        return MinibatchSpec(
            batch_size=int(cfg["batch_size"]),
            mode=cfg.get("mode", WITHOUT_REPLACEMENT),
            seed=int(cfg.get("seed", 0)),
        )


def draw(spec: MinibatchSpec, population: int, rng: Generator) -> np.ndarray:
    """Draw a batch of indices from range(population).

    Without replacement this is a partial Fisher-Yates shuffle (sparse,
    O(B) extra memory), uniform over all size-B subsets.  With replacement
    the indices are i.i.d. uniform.
    """
    B = spec.batch_size
    if spec.mode == WITH_REPLACEMENT:
        return rng.integers(0, population, size=B)
    if B > population:
        raise ValueError(
            f"cannot draw {B} distinct indices from a population of {population}"
        )
    moved: dict[int, int] = {}
    out = np.empty(B, dtype=np.int64)
    for i in range(B):
        j = int(rng.integers(i, population))
        out[i] = moved.get(j, j)
        moved[j] = moved.get(i, i)
    return out


def minibatch_gradient(obj, x: np.ndarray, spec: MinibatchSpec, rng: Generator) -> np.ndarray:
    """Mean gradient over one drawn batch.

    The batch is summed in ascending index order, so drawing all of [M]
    without replacement reproduces the full gradient bit for bit.
    """
    indices = np.sort(draw(spec, obj.n_samples, rng))
    return batch_mean_gradient(obj, x, indices)


def batch_mean_gradient(obj, x: np.ndarray, indices) -> np.ndarray:
    total = np.zeros(obj.dim)
    for m in indices:
        total = total + obj.sample_gradient(x, int(m))
    return total / len(indices)


def variance_factor(population: int, batch_size: int, mode: str) -> float:
    """Multiplier on Var[single sample] for the variance of the batch mean.

    With replacement: 1/B.  Without replacement the factor is
    (M-B)/(M-1) * 1/B, which vanishes at B = M (only one possible batch).
    """
    B = batch_size
    if B < 1:
        raise ValueError("batch size must be at least 1")
    if mode == WITH_REPLACEMENT:
        return 1.0 / B
    if mode != WITHOUT_REPLACEMENT:
        raise ValueError(f"unknown sampling mode {mode!r}")
    M = population
    if M < 2:
        raise ValueError("without-replacement variance law needs M >= 2")
    if B > M:
        raise ValueError("batch size cannot exceed the population")
    return (M - B) / (M - 1) / B
