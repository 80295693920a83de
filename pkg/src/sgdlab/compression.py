"""Lossy compression operators with size accounting for the network model.

Encoded forms are modeled rather than bit-packed: each operator returns
the decoded vector plus the number of wire bits its encoding would
occupy, which is all the switch simulator needs.  Sizes depend only on
the operator's configuration and the vector length, never on the data,
so per-round communication costs are constants of the run.

Operator zoo:

* randomized quantization: b bits per element plus the two range scalars
  (64 bits); unbiased.
* randomized sparsification: keep each element with probability p,
  rescaled by 1/p; unbiased.
* one-bit sign: ||x|| * sign(x); deterministic and biased (sign(0) = +1).
* bit clipping: zero the lowest k mantissa bits of each float64;
  deterministic, biased, idempotent.
* identity: no-op baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.random import Generator

from .sampling import make_rng

RAW_BITS_PER_ELEMENT = 32
RANGE_SCALAR_BITS = 64  # min(x) and max(x) as two 32-bit scalars

IDENTITY = "identity"
RANDOMIZED_QUANTIZATION = "randomized-quantization"
RANDOMIZED_SPARSIFICATION = "randomized-sparsification"
ONE_BIT_SIGN = "one-bit-sign"
CLIPPING = "clipping"


class CompressionError(ValueError):
    pass


@dataclass(frozen=True)
class Compressor:
    kind: str
    bits: int = 0            # randomized quantization
    keep_prob: float = 0.0   # randomized sparsification
    dropped_bits: int = 0    # clipping
    sigma_prime: float | None = None  # measured distortion bound, optional

    def __post_init__(self):
        if self.kind == RANDOMIZED_QUANTIZATION and self.bits < 1:
            raise CompressionError("quantization needs at least 1 bit per element")
        if self.kind == RANDOMIZED_SPARSIFICATION and not 0.0 < self.keep_prob <= 1.0:
            raise CompressionError("keep probability must lie in (0, 1]")
        if self.kind == CLIPPING and not 0 <= self.dropped_bits <= 52:
            raise CompressionError("clipping drops between 0 and 52 mantissa bits")
        if self.kind not in (
            IDENTITY,
            RANDOMIZED_QUANTIZATION,
            RANDOMIZED_SPARSIFICATION,
            ONE_BIT_SIGN,
            CLIPPING,
        ):
            raise CompressionError(f"unknown compressor kind {self.kind!r}")

    @property
    def unbiased(self) -> bool:
        return self.kind in (IDENTITY, RANDOMIZED_QUANTIZATION, RANDOMIZED_SPARSIFICATION)

    @property
    def deterministic(self) -> bool:
        return self.kind in (IDENTITY, ONE_BIT_SIGN, CLIPPING)

    def __call__(self, x: np.ndarray, rng: Generator | None = None) -> np.ndarray:
        if self.kind == IDENTITY:
            return np.array(x, dtype=float, copy=True)
        if self.kind == RANDOMIZED_QUANTIZATION:
            return quantize_rq(x, self.bits, rng).decoded
        if self.kind == RANDOMIZED_SPARSIFICATION:
            return sparsify(x, self.keep_prob, rng)
        if self.kind == ONE_BIT_SIGN:
            return one_bit(x)
        return clip_bits(x, self.dropped_bits)

    def encoded_bits(self, n_elements: int) -> Fraction:
        """Wire bits for a vector of the given length; possibly fractional
        (expected size) for sparsification."""
        raw = Fraction(RAW_BITS_PER_ELEMENT * n_elements)
        if self.kind == IDENTITY:
            return raw
        if self.kind == RANDOMIZED_QUANTIZATION:
            return Fraction(self.bits * n_elements + RANGE_SCALAR_BITS)
        if self.kind == RANDOMIZED_SPARSIFICATION:
            return Fraction(self.keep_prob).limit_denominator(10**9) * raw
        if self.kind == ONE_BIT_SIGN:
            return Fraction(n_elements + RANGE_SCALAR_BITS // 2)
        # Clipping zeroes k of the 52 float64 mantissa bits; the survivors
        # plus sign and exponent go on the wire, capped at the raw size.
        return min(raw, Fraction((64 - self.dropped_bits) * n_elements))

    def encoded_units(self, n_elements: int) -> Fraction:
        """Size in transfer units (one unit = one raw 32-bit element)."""
        return self.encoded_bits(n_elements) / RAW_BITS_PER_ELEMENT

    def ratio(self, n_elements: int) -> Fraction:
        """Encoded over raw size; the eta that scales transfer time."""
        return self.encoded_bits(n_elements) / Fraction(RAW_BITS_PER_ELEMENT * n_elements)

    def to_config(self) -> dict:
        cfg = {"kind": self.kind}
        if self.kind == RANDOMIZED_QUANTIZATION:
            cfg["bits"] = self.bits
        elif self.kind == RANDOMIZED_SPARSIFICATION:
            cfg["keep_prob"] = self.keep_prob
        elif self.kind == CLIPPING:
            cfg["dropped_bits"] = self.dropped_bits
        return cfg

    @staticmethod
    def from_config(cfg: dict) -> "Compressor":
        return Compressor(
            kind=cfg.get("kind", IDENTITY),
            bits=int(cfg.get("bits", 0)),
            keep_prob=float(cfg.get("keep_prob", 0.0)),
            dropped_bits=int(cfg.get("dropped_bits", 0)),
        )


def identity() -> Compressor:
    return Compressor(kind=IDENTITY)


def rq(bits: int) -> Compressor:
    return Compressor(kind=RANDOMIZED_QUANTIZATION, bits=bits)


def sparsifier(keep_prob: float) -> Compressor:
    return Compressor(kind=RANDOMIZED_SPARSIFICATION, keep_prob=keep_prob)


def sign_compressor() -> Compressor:
    return Compressor(kind=ONE_BIT_SIGN)


def clipper(dropped_bits: int) -> Compressor:
    return Compressor(kind=CLIPPING, dropped_bits=dropped_bits)


@dataclass(frozen=True)
class QuantizedVector:
    """Modeled encoding: knob indices plus the range scalars."""

    levels: np.ndarray   # integer knob index per element
    lo: float
    hi: float
    bits: int

    @property
    def decoded(self) -> np.ndarray:
        if self.hi == self.lo:
            return np.full(self.levels.shape, self.lo)
        step = (self.hi - self.lo) / (2**self.bits - 1)
        return self.lo + self.levels * step

    @property
    def payload_bits(self) -> int:
        return self.bits * self.levels.size + RANGE_SCALAR_BITS

    def knob_values(self) -> np.ndarray:
        if self.hi == self.lo:
            return np.array([self.lo])
        step = (self.hi - self.lo) / (2**self.bits - 1)
        return self.lo + np.arange(2**self.bits) * step


def rq_level_probabilities(x: np.ndarray, bits: int):
    """Lower knob index and the probability of rounding up, per element.

    Exposed separately so tests can check the rounding law directly: an
    element in [c_i, c_{i+1}) moves to c_{i+1} with probability
    (x - c_i) / (c_{i+1} - c_i), which makes the knob choice unbiased.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise CompressionError("cannot quantize an empty vector")
    lo = float(np.min(x))
    hi = float(np.max(x))
    if hi == lo:
        return np.zeros(x.shape, dtype=np.int64), np.zeros(x.shape), lo, hi
    n_knobs = 2**bits
    step = (hi - lo) / (n_knobs - 1)
    position = (x - lo) / step
    lower = np.minimum(np.floor(position), n_knobs - 2).astype(np.int64)
    p_up = position - lower
    return lower, p_up, lo, hi


def quantize_rq(x: np.ndarray, bits: int, rng: Generator) -> QuantizedVector:
    """Randomized quantization onto 2**bits evenly spaced knobs."""
    if bits < 1:
        raise CompressionError("quantization needs at least 1 bit per element")
    lower, p_up, lo, hi = rq_level_probabilities(x, bits)
    if hi == lo:
        return QuantizedVector(levels=lower, lo=lo, hi=hi, bits=bits)
    up = rng.random(size=lower.shape) < p_up
    return QuantizedVector(levels=lower + up, lo=lo, hi=hi, bits=bits)


def sparsify(x: np.ndarray, keep_prob: float, rng: Generator) -> np.ndarray:
    """Keep each element with probability p, rescaled by 1/p; else zero."""
    if not 0.0 < keep_prob <= 1.0:
        raise CompressionError("keep probability must lie in (0, 1]")
    x = np.asarray(x, dtype=float)
    if keep_prob == 1.0:
        return x.copy()
    kept = rng.random(size=x.shape) < keep_prob
    return np.where(kept, x / keep_prob, 0.0)


def one_bit(x: np.ndarray) -> np.ndarray:
    """||x|| times the elementwise sign, with sign(0) taken as +1."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise CompressionError("cannot compress an empty vector")
    norm = float(np.linalg.norm(x))
    signs = np.where(x >= 0.0, 1.0, -1.0)
    return norm * signs


def clip_bits(x: np.ndarray, dropped_bits: int) -> np.ndarray:
    """Zero the lowest k mantissa bits of each element's float64 form."""
    if not 0 <= dropped_bits <= 52:
        raise CompressionError("clipping drops between 0 and 52 mantissa bits")
    x = np.asarray(x, dtype=float)
    if dropped_bits == 0:
        return x.copy()
    raw = x.view(np.uint64) if x.flags.c_contiguous else np.ascontiguousarray(x).view(np.uint64)
    mask = np.uint64(~np.uint64((1 << dropped_bits) - 1))
    return (raw & mask).view(np.float64).copy()


def measure_sigma_prime(
    compressor: Compressor, probes, trials: int = 1000, seed: int = 0
) -> float:
    """Worst-case Monte Carlo estimate of E||Q(y) - y||^2 over the probes."""
    if trials < 1:
        raise CompressionError("need at least one trial")
    probes = [np.asarray(p, dtype=float) for p in probes]
    if not probes:
        raise CompressionError("need at least one probe vector")
    rng = make_rng((seed, 0xD15))
    worst = 0.0
    effective_trials = 1 if compressor.deterministic else trials
    for y in probes:
        total = 0.0
        for _ in range(effective_trials):
            diff = compressor(y, rng) - y
            total += float(diff @ diff)
        worst = max(worst, total / effective_trials)
    return worst
