"""Mixing (confusion) matrices for decentralized averaging.

A valid matrix is symmetric, doubly stochastic, and entrywise
nonnegative; its largest eigenvalue is then 1 with eigenvector 1.  The
quantity that matters for gossip is rho, the second-largest absolute
eigenvalue: 1 - rho is the spectral gap, and decentralized SGD needs it
strictly positive.

rho is computed by power iteration on the deflated matrix
(W - 11^T/N)^2; tests cross-check against a dense eigensolver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sampling import make_rng

VALIDATION_TOL = 1e-12

FULLY_CONNECTED = "fully-connected"
RING = "ring"
DISCONNECTED_BLOCK = "disconnected-block"
CUSTOM = "custom"


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    entries: np.ndarray
    rho: float = field(init=False, default=0.0)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        validate_matrix(entries)
        object.__setattr__(self, "rho", spectral_rho(entries))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def spectral_gap(self) -> float:
        return 1.0 - self.rho

    def neighbors(self, worker: int) -> list[int]:
        """Off-diagonal support of the worker's row, i.e. who it talks to."""
        row = self.entries[worker]
        return [j for j in range(self.size) if j != worker and row[j] != 0.0]

    def mix(self, states: np.ndarray) -> np.ndarray:
        """Apply one averaging round to per-worker row vectors (N, d)."""
        return self.entries @ states


def validate_matrix(entries: np.ndarray, tol: float = VALIDATION_TOL) -> None:
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise TopologyError(f"confusion matrix must be square, got {entries.shape}")
    n = entries.shape[0]
    if np.min(entries) < -tol:
        raise TopologyError("confusion matrix has negative entries")
    if np.max(np.abs(entries - entries.T)) > tol:
        raise TopologyError("confusion matrix is not symmetric")
    row_sums = entries @ np.ones(n)
    if np.max(np.abs(row_sums - 1.0)) > tol:
        raise TopologyError("confusion matrix rows must sum to 1")


def spectral_rho(entries: np.ndarray, tol: float = 1e-14, max_iter: int = 20000) -> float:
    """Second-largest absolute eigenvalue via deflated power iteration.

    The all-ones eigenvector is projected out, and the iteration runs on
    the squared deflation so that a +/- rho eigenvalue pair cannot make
    the iterates oscillate.
    """
    entries = np.asarray(entries, dtype=float)
    n = entries.shape[0]
    if n == 1:
        return 0.0
    deflated = entries - np.ones((n, n)) / n
    rng = make_rng((n, 0x0E16))
    v = rng.standard_normal(n)
    v -= v.mean()  # stay orthogonal to the known top eigenvector
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v = np.arange(n, dtype=float) - (n - 1) / 2.0
        norm = np.linalg.norm(v)
    v /= norm
    estimate = 0.0
    for _ in range(max_iter):
        w = deflated @ (deflated @ v)
        w -= w.mean()
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new_estimate = float(v @ (deflated @ (deflated @ v)))
        if abs(new_estimate - estimate) <= tol * max(1.0, abs(new_estimate)):
            estimate = new_estimate
            break
        estimate = new_estimate
    return float(np.sqrt(max(estimate, 0.0)))


def ring_rho_exact(n: int) -> float:
    """Circulant eigenvalues of the 1/3-weighted ring give rho in closed form."""
    if n < 3:
        raise TopologyError("ring topology needs at least 3 workers")
    ks = np.arange(1, n)
    return float(np.max(np.abs((1.0 + 2.0 * np.cos(2.0 * np.pi * ks / n)) / 3.0)))


def make_matrix(kind: str, n: int, entries=None) -> ConfusionMatrix:
    """Construct a named mixing matrix.

    fully-connected: all entries 1/N (rho = 0).
    ring: 1/3 on the diagonal and both ring neighbors (needs N >= 3).
    disconnected-block: last worker isolated, rho = 1 (negative testing).
    custom: validate caller-supplied entries.
    """
    if n < 1:
        raise TopologyError("need at least one worker")
    if kind == FULLY_CONNECTED:
        return ConfusionMatrix(np.full((n, n), 1.0 / n))
    if kind == RING:
        if n < 3:
            raise TopologyError("ring topology needs at least 3 workers")
        w = np.zeros((n, n))
        for i in range(n):
            w[i, i] = 1.0 / 3.0
            w[i, (i + 1) % n] = 1.0 / 3.0
            w[i, (i - 1) % n] = 1.0 / 3.0
        return ConfusionMatrix(w)
    if kind == DISCONNECTED_BLOCK:
        if n < 2:
            raise TopologyError("a disconnected example needs at least 2 workers")
        w = np.zeros((n, n))
        w[: n - 1, : n - 1] = 1.0 / (n - 1)
        w[n - 1, n - 1] = 1.0
        return ConfusionMatrix(w)
    if kind == CUSTOM:
        if entries is None:
            raise TopologyError("custom topology needs explicit entries")
        return ConfusionMatrix(np.asarray(entries, dtype=float))
    raise TopologyError(f"unknown topology kind {kind!r}")


def load_matrix(path) -> ConfusionMatrix:
    """Read N rows of N space-separated decimals and validate them."""
    entries = np.atleast_2d(np.loadtxt(path, dtype=float))
    return ConfusionMatrix(entries)
