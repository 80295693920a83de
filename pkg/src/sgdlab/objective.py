"""Synthetic finite-sum objectives with exact per-sample gradients.

Each objective is a mean of M per-sample terms built from seeded Gaussian
coefficients, so the smoothness constant and (for least squares) the
minimizer are known analytically.  Full gradients and losses accumulate
per-sample terms in ascending index order, which makes the
"mean of sample gradients equals full gradient" identity exact in
floating point, not just up to reassociation noise.

Objectives are immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sampling import make_rng

LEAST_SQUARES = "least-squares"
LOGISTIC = "logistic"
NONCONVEX_TEST = "nonconvex-test"

_KINDS = (LEAST_SQUARES, LOGISTIC, NONCONVEX_TEST)

# Probe set used when measuring the declared variance bounds: the origin,
# the least-squares solution (when it exists), and a few seeded Gaussians.
_N_GAUSSIAN_PROBES = 4


class ObjectiveError(ValueError):
    pass


def _snap_degenerate(variance: float, mean_grad: np.ndarray, count: int) -> float:
    """Zero out variance that sits at the summation noise floor.

    Averaging identical gradients leaves rounding residue of order
    count * eps * ||g||, so a degenerate objective would otherwise report
    a spurious positive variance.
    """
    floor = (count * 4e-15 * (1.0 + float(np.linalg.norm(mean_grad)))) ** 2
    return 0.0 if variance <= floor else variance


@dataclass(frozen=True)
class Objective:
    kind: str
    coeffs: np.ndarray        # (M, d) per-sample vectors a_m
    targets: np.ndarray       # (M,) per-sample scalars b_m
    seed: int
    noise_scale: float
    epsilon: float = 0.0      # cosine perturbation weight (nonconvex kind only)
    lipschitz: float = field(init=False, default=0.0)
    f_star: float | None = field(init=False, default=None)
    minimizer: np.ndarray | None = field(init=False, default=None)
    sigma_bound: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ObjectiveError(f"unknown objective kind {self.kind!r}")
        gram = self.coeffs.T @ self.coeffs / self.n_samples
        top = float(np.linalg.eigvalsh(gram)[-1])
        if self.kind == LEAST_SQUARES:
            lip = top
            sol, *_ = np.linalg.lstsq(self.coeffs, self.targets, rcond=None)
            object.__setattr__(self, "minimizer", sol)
            object.__setattr__(self, "f_star", self.loss(sol))
        elif self.kind == LOGISTIC:
            lip = top / 4.0
        else:
            lip = top + self.epsilon
        object.__setattr__(self, "lipschitz", lip)
        object.__setattr__(self, "sigma_bound", self._measure_sigma())

    # -- basic shape -------------------------------------------------------

    @property
    def n_samples(self) -> int:
        return self.coeffs.shape[0]

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ObjectiveError(f"expected a length-{self.dim} vector, got shape {x.shape}")
        return x

    # -- values and gradients ----------------------------------------------

    def sample_loss(self, x: np.ndarray, m: int) -> float:
        x = self._check_dim(x)
        if not 0 <= m < self.n_samples:
            raise ObjectiveError(f"sample index {m} out of range [0, {self.n_samples})")
        margin = float(self.coeffs[m] @ x)
        if self.kind == LOGISTIC:
            return float(np.logaddexp(0.0, -self.targets[m] * margin))
        value = 0.5 * (margin - self.targets[m]) ** 2
        if self.kind == NONCONVEX_TEST:
            value += self.epsilon * float(np.sum(np.cos(x)))
        return float(value)

    def sample_gradient(self, x: np.ndarray, m: int) -> np.ndarray:
        x = self._check_dim(x)
        if not 0 <= m < self.n_samples:
            raise ObjectiveError(f"sample index {m} out of range [0, {self.n_samples})")
        a = self.coeffs[m]
        margin = float(a @ x)
        if self.kind == LOGISTIC:
            b = self.targets[m]
            return (-b / (1.0 + np.exp(b * margin))) * a
        grad = a * (margin - self.targets[m])
        if self.kind == NONCONVEX_TEST:
            grad = grad - self.epsilon * np.sin(x)
        return grad

    def loss(self, x: np.ndarray) -> float:
        x = self._check_dim(x)
        total = 0.0
        for m in range(self.n_samples):
            total = total + self.sample_loss(x, m)
        return total / self.n_samples

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        x = self._check_dim(x)
        total = np.zeros(self.dim)
        for m in range(self.n_samples):
            total = total + self.sample_gradient(x, m)
        return total / self.n_samples

    # -- declared constants --------------------------------------------------

    def _probe_points(self) -> list[np.ndarray]:
        rng = make_rng((self.seed, 0x5EED))
        probes = [np.zeros(self.dim)]
        if self.minimizer is not None:
            probes.append(self.minimizer)
        probes.extend(rng.standard_normal(self.dim) for _ in range(_N_GAUSSIAN_PROBES))
        return probes

    def _measure_sigma(self) -> float:
        worst = 0.0
        for x in self._probe_points():
            mean_grad = self.full_gradient(x)
            total = 0.0
            for m in range(self.n_samples):
                diff = self.sample_gradient(x, m) - mean_grad
                total += float(diff @ diff)
            worst = max(
                worst, _snap_degenerate(total / self.n_samples, mean_grad, self.n_samples)
            )
        return float(np.sqrt(worst))

    # -- serialization -------------------------------------------------------

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "M": self.n_samples,
            "d": self.dim,
            "seed": self.seed,
            "noise_scale": self.noise_scale,
            "epsilon": self.epsilon,
        }

    @staticmethod
    def from_config(cfg: dict) -> "Objective":
        return make_objective(
            kind=cfg.get("kind", LEAST_SQUARES),
            n_samples=int(cfg["M"]),
            dim=int(cfg["d"]),
            seed=int(cfg.get("seed", 0)),
            noise_scale=float(cfg.get("noise_scale", 0.1)),
            epsilon=float(cfg.get("epsilon", 0.05)),
        )


def make_objective(
    kind: str = LEAST_SQUARES,
    n_samples: int = 32,
    dim: int = 8,
    seed: int = 0,
    noise_scale: float = 0.1,
    epsilon: float = 0.05,
) -> Objective:
    """Generate a seeded instance with a constructible ground truth.

    Coefficients are standard normal; targets are a_m @ x_true plus
    Gaussian noise of the given scale (taken as labels' sign for the
    logistic kind).
    """
    rng = make_rng(seed)
    coeffs = rng.standard_normal((n_samples, dim))
    x_true = rng.standard_normal(dim)
    noise = noise_scale * rng.standard_normal(n_samples)
    raw = coeffs @ x_true + noise
    if kind == LOGISTIC:
        targets = np.where(raw >= 0.0, 1.0, -1.0)
    else:
        targets = raw
    return Objective(
        kind=kind,
        coeffs=coeffs,
        targets=targets,
        seed=seed,
        noise_scale=noise_scale,
        epsilon=epsilon if kind == NONCONVEX_TEST else 0.0,
    )


def from_samples(coeffs, targets, kind: str = LEAST_SQUARES, epsilon: float = 0.0) -> Objective:
    """Wrap explicit per-sample coefficients, e.g. for hand-built test cases."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    targets = np.asarray(targets, dtype=float).reshape(coeffs.shape[0])
    return Objective(
        kind=kind, coeffs=coeffs, targets=targets, seed=0, noise_scale=0.0, epsilon=epsilon
    )


@dataclass(frozen=True)
class ShardedObjective:
    """Disjoint equal-ish split of the samples across N workers."""

    parent: Objective
    n_workers: int
    shards: tuple = field(init=False, default=())
    varsigma_bound: float = field(init=False, default=0.0)

    def __post_init__(self):
        if not 1 <= self.n_workers <= self.parent.n_samples:
            raise ObjectiveError(
                f"cannot shard {self.parent.n_samples} samples over {self.n_workers} workers"
            )
        shards = tuple(
            tuple(int(i) for i in part)
            for part in np.array_split(np.arange(self.parent.n_samples), self.n_workers)
        )
        object.__setattr__(self, "shards", shards)
        object.__setattr__(self, "varsigma_bound", self._measure_varsigma())

    @property
    def dim(self) -> int:
        return self.parent.dim

    def shard_size(self, worker: int) -> int:
        return len(self.shards[worker])

    def shard_gradient(self, worker: int, x: np.ndarray) -> np.ndarray:
        total = np.zeros(self.parent.dim)
        for m in self.shards[worker]:
            total = total + self.parent.sample_gradient(x, m)
        return total / len(self.shards[worker])

    def _measure_varsigma(self) -> float:
        if self.n_workers == 1:
            return 0.0
        worst = 0.0
        for x in self.parent._probe_points():
            mean_grad = self.parent.full_gradient(x)
            total = 0.0
            for n in range(self.n_workers):
                diff = self.shard_gradient(n, x) - mean_grad
                total += float(diff @ diff)
            worst = max(
                worst,
                _snap_degenerate(
                    total / self.n_workers, mean_grad, self.parent.n_samples
                ),
            )
        return float(np.sqrt(worst))


def estimate_constants(obj: Objective, probe_count: int = 16, seed: int = 0, n_workers: int = 1):
    """Empirical (L, sigma, varsigma) estimates from seeded probe points.

    Ratios of gradient differences never exceed the analytic Lipschitz
    constant, so the estimates are safe lower bounds.
    """
    if probe_count < 2:
        raise ObjectiveError("need at least two probe points")
    rng = make_rng((seed, 0xE57))
    points = [rng.standard_normal(obj.dim) for _ in range(probe_count)]
    grads = [obj.full_gradient(x) for x in points]

    l_hat = 0.0
    for i in range(probe_count):
        for j in range(i + 1, probe_count):
            gap = float(np.linalg.norm(points[i] - points[j]))
            if gap == 0.0:
                continue
            l_hat = max(l_hat, float(np.linalg.norm(grads[i] - grads[j])) / gap)

    sigma_sq = 0.0
    for x, mean_grad in zip(points, grads):
        total = 0.0
        for m in range(obj.n_samples):
            diff = obj.sample_gradient(x, m) - mean_grad
            total += float(diff @ diff)
        sigma_sq = max(
            sigma_sq, _snap_degenerate(total / obj.n_samples, mean_grad, obj.n_samples)
        )

    varsigma_sq = 0.0
    if n_workers > 1:
        sharded = ShardedObjective(obj, n_workers)
        for x, mean_grad in zip(points, grads):
            total = 0.0
            for n in range(n_workers):
                diff = sharded.shard_gradient(n, x) - mean_grad
                total += float(diff @ diff)
            varsigma_sq = max(
                varsigma_sq,
                _snap_degenerate(total / n_workers, mean_grad, obj.n_samples),
            )

    return l_hat, float(np.sqrt(sigma_sq)), float(np.sqrt(varsigma_sq))
