"""Wasserstein-1 estimates, noise floors and running-moment diagnostics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "W1Report",
    "NoiseFloor",
    "w1_sorted",
    "w1_multivariate_by_marginals",
    "noise_floor",
    "running_relative_std_error",
    "RunningMoments",
    "batch_means_se",
]


def _quantiles(a, n):
    """Empirical quantiles at the midpoints ``(k - 1/2)/n``, ``k = 1..n``."""
    a = np.sort(np.asarray(a, dtype=float))
    p = (np.arange(n) + 0.5) / n
    idx = np.minimum((p * a.size).astype(np.int64), a.size - 1)
    return a[idx]


def w1_sorted(samples_a, samples_b, allow_unequal: bool = False) -> float:
    """``(1/n) sum_i |a_(i) - b_(i)|`` for two one-dimensional samples.

    With ``allow_unequal`` the two inverse CDFs are compared at
    ``max(n_a, n_b)`` midpoint quantiles instead.
    """
    a = np.ravel(np.asarray(samples_a, dtype=float))
    b = np.ravel(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be nonempty")
    if a.size != b.size:
        if not allow_unequal:
            raise ValueError(f"sample sizes differ: {a.size} vs {b.size}")
        n = max(a.size, b.size)
        return float(np.mean(np.abs(_quantiles(a, n) - _quantiles(b, n))))
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def brute_force_transport(samples_a, samples_b) -> float:
    """Optimal assignment cost over all permutations; for tiny inputs only."""
    # sorting ``a`` does not change the optimum and makes the sums comparable
    a = np.sort(np.asarray(samples_a, dtype=float))
    b = np.asarray(samples_b, dtype=float)
    if a.size != b.size or a.size > 8:
        raise ValueError("brute force needs equal sizes of at most 8")
    best = math.inf
    for perm in itertools.permutations(range(b.size)):
        best = min(best, float(np.sum(np.abs(a - b[list(perm)]))))
    return best / a.size


@dataclass
class W1Report:
    per_marginal_errors: np.ndarray
    total_error: float
    noise_floor_mean: float | None = None
    noise_floor_std: float | None = None

    def to_dict(self) -> dict:
        return {
            "per_marginal_errors": [float(e) for e in self.per_marginal_errors],
            "total_error": float(self.total_error),
            "noise_floor_mean": self.noise_floor_mean,
            "noise_floor_std": self.noise_floor_std,
        }


def w1_multivariate_by_marginals(samples_a, samples_b, floor: "NoiseFloor | None" = None, allow_unequal=False) -> W1Report:
    """Per-coordinate W1 errors and their sum."""
    a = np.atleast_2d(np.asarray(samples_a, dtype=float))
    b = np.atleast_2d(np.asarray(samples_b, dtype=float))
    if a.shape[1] != b.shape[1] or (a.shape != b.shape and not allow_unequal):
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    per = np.array([w1_sorted(a[:, i], b[:, i], allow_unequal) for i in range(a.shape[1])])
    return W1Report(
        per_marginal_errors=per,
        total_error=float(per.sum()),
        noise_floor_mean=None if floor is None else floor.mean,
        noise_floor_std=None if floor is None else floor.std,
    )


@dataclass(frozen=True)
class NoiseFloor:
    mean: float
    std: float
    errors: tuple = ()

    def __iter__(self):
        return iter((self.mean, self.std))


def noise_floor(exact_sampler, n: int, copies: int = 10, seed=0, coordinate=None) -> NoiseFloor:
    """Pairwise W1 errors between independent exact sample sets.

    Args:
        exact_sampler: callable ``(n, seed) -> samples`` of shape ``(n,)`` or ``(n, d)``.
        n: size of each set.
        copies: number of independent sets; all ``copies * (copies - 1) / 2``
            pairs are compared.
        seed: master seed; copy ``k`` uses the child seed ``(seed, k)``.
        coordinate: restrict to one coordinate; otherwise multivariate
            samples are compared by the marginal-sum total.
    """
    if copies < 2:
        raise ValueError("need at least two copies")
    sets = []
    for k in range(copies):
        s = np.asarray(exact_sampler(n, np.random.SeedSequence([int(seed), k])), dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if coordinate is not None:
            s = s[:, [coordinate]]
        sets.append(s)
    errs = [w1_multivariate_by_marginals(a, b).total_error for a, b in itertools.combinations(sets, 2)]
    return NoiseFloor(float(np.mean(errs)), float(np.std(errs, ddof=1)), tuple(errs))


class RunningMoments:
    """Welford accumulator for the mean and variance of a stream."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def extend(self, xs) -> None:
        for x in np.asarray(xs, dtype=float):
            self.push(float(x))

    @property
    def variance(self) -> float:
        """Population variance; zero for fewer than two points."""
        return self.m2 / self.n if self.n > 0 else math.nan

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def running_relative_std_error(samples, true_std: float, checkpoints, costs=None):
    """``|sigma_hat(t) - sigma| / sigma`` at each checkpoint.

    Args:
        samples: one-dimensional stream in production order.
        true_std: reference standard deviation.
        checkpoints: increasing cost levels (epochs).
        costs: cost at which each sample was produced; defaults to its
            one-based index.

    Returns:
        ``(checkpoints, errors)``; an error is NaN while no sample exists yet.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample stream")
    if not true_std > 0:
        raise ValueError("true_std must be positive")
    c = np.arange(1, x.size + 1, dtype=float) if costs is None else np.asarray(costs, dtype=float)
    cp = np.asarray(checkpoints, dtype=float)
    # blockwise Welford: merge the moments of each slice between checkpoints
    ends = np.searchsorted(c, cp, side="right")
    n, mean, m2 = 0, 0.0, 0.0
    start = 0
    out = np.full(cp.size, np.nan)
    for k, end in enumerate(ends):
        if end > start:
            blk = x[start:end]
            nb = blk.size
            mb = float(blk.mean())
            m2b = float(np.sum((blk - mb) ** 2))
            tot = n + nb
            delta = mb - mean
            mean += delta * nb / tot
            m2 += m2b + delta * delta * n * nb / tot
            n = tot
            start = end
        if n > 0:
            out[k] = abs(math.sqrt(m2 / n) - true_std) / true_std
    return cp, out


def batch_means_se(x, n_batches: int = 25) -> np.ndarray:
    """Standard error of the mean by non-overlapping batch means.

    Works on ``(n,)`` or ``(n, d)`` arrays and returns one value per column.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0] // n_batches * n_batches
    if n < n_batches:
        raise ValueError("not enough samples for batch means")
    means = x[:n].reshape(n_batches, -1, x.shape[1]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(n_batches)
