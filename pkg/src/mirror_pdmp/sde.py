"""Discretised Langevin baselines: ULA, PLMC, MYULA, MLAa, MLAm and subsampled variants.

Step functions are pure and operate on batches of chains (leading axis).
:func:`run_chains` drives many chains in lockstep with one random stream per
chain.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .barriers import Barrier
from .samplers import SubsampledGradient

__all__ = [
    "StepConfig",
    "ChainResult",
    "ula_step",
    "plmc_step",
    "myula_step",
    "mlaa_step",
    "mlam_step",
    "run_chains",
    "SDE_METHODS",
]

SDE_METHODS = ("ula", "plmc", "myula", "mlaa", "mlam", "smlaa", "smlam")

_warned_eps = False


def _check(x):
    if np.isnan(x).any():
        raise FloatingPointError("NaN produced by a Langevin step")
    return x


def ula_step(gradient, x, dt: float, xi):
    """``x - dt grad U(x) + sqrt(2 dt) xi``."""
    x = np.asarray(x, dtype=float)
    return _check(x - dt * np.asarray(gradient(x)) + math.sqrt(2.0 * dt) * np.asarray(xi))


def plmc_step(gradient, projection, x, dt: float, xi):
    """ULA step followed by the Euclidean projection onto the closed set."""
    return projection(ula_step(gradient, x, dt, xi))


def myula_step(gradient, projection, x, dt: float, eps: float, xi):
    """ULA step on the Moreau-Yosida envelope of the constraint.

    The penalty drift ``(dt / eps)(P(x) - x)`` pulls points back towards the
    set but nothing keeps them inside. A warning is emitted once per process
    when ``dt > eps``.
    """
    global _warned_eps
    if not eps > 0:
        raise ValueError("eps must be positive")
    if dt > eps and not _warned_eps:
        warnings.warn(f"MYULA step {dt:g} exceeds the regularisation {eps:g}; the chain may be unstable", RuntimeWarning, stacklevel=2)
        _warned_eps = True
    x = np.asarray(x, dtype=float)
    drift = -dt * np.asarray(gradient(x)) + (dt / eps) * (projection(x) - x)
    return _check(x + drift + math.sqrt(2.0 * dt) * np.asarray(xi))


def mlaa_step(barrier: Barrier, dual_gradient, z, dt: float, xi):
    """Langevin step on the dual potential; returns ``(z', grad psi*(z'))``."""
    z = np.asarray(z, dtype=float)
    zn = _check(z - dt * np.asarray(dual_gradient(z)) + math.sqrt(2.0 * dt) * np.asarray(xi))
    return zn, barrier.inverse(zn)


def mlam_step(barrier: Barrier, gradient, x, dt: float, xi):
    """Mirror-descent half step then Euler-Maruyama on the multiplicative noise.

    Args:
        barrier: mirror map.
        gradient: primal gradient of U.
        x: current primal points.
        dt: step size.
        xi: standard normals of shape ``(inner_steps,) + x.shape``; the inner
            dynamics ``dZ = sqrt(2) [hess psi*(Z)]^(-1/2) dW`` is integrated
            over time ``dt`` in ``inner_steps`` equal substeps.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    z = barrier.forward(x) - dt * np.asarray(gradient(x))
    h = dt / xi.shape[0]
    c = math.sqrt(2.0 * h)
    for k in range(xi.shape[0]):
        z = z + c * barrier.diffusion_matvec(z, xi[k])
    return barrier.inverse(_check(z))


@dataclass(frozen=True)
class StepConfig:
    step_size: float
    myula_epsilon: float = 0.01
    inner_steps: int = 10
    stochastic_gradient: SubsampledGradient | None = None

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.myula_epsilon > 0:
            raise ValueError("myula_epsilon must be positive")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be at least 1")


@dataclass
class ChainResult:
    """Output of :func:`run_chains`.

    Attributes:
        samples: recorded states ``(n_recorded, R, d_out)``.
        costs: gradient evaluations spent by each recorded state.
        final: last state of each chain ``(R, d_out)``.
        mean, var: moments of all post-burn-in states per chain.
        n_post: number of post-burn-in states.
        outside: per-chain count of post-burn-in states outside the closed set.
        gradient_evaluations: total cost per chain.
    """

    samples: np.ndarray
    costs: np.ndarray
    final: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    n_post: int
    outside: np.ndarray
    gradient_evaluations: float
    extra: dict = field(default_factory=dict)


class _Normals:
    """Per-chain buffered standard normals of a fixed shape per step."""

    def __init__(self, seeds, shape, block=256):
        self.gens = [np.random.default_rng(int(s)) for s in seeds]
        self.shape = tuple(shape)
        self.block = block
        self.ptr = block
        self.buf = None

    def next(self):
        if self.ptr == self.block:
            self.buf = np.stack([g.standard_normal((self.block,) + self.shape) for g in self.gens], axis=1)
            self.ptr = 0
        out = self.buf[self.ptr]
        self.ptr += 1
        return out


def run_chains(
    method: str,
    x0,
    n_steps: int,
    seeds,
    config: StepConfig,
    *,
    gradient: Callable | None = None,
    projection: Callable | None = None,
    barrier: Barrier | None = None,
    dual_gradient: Callable | None = None,
    domain=None,
    burn_in: float = 0.1,
    record_every: int = 1,
    record_coords=None,
):
    """Run one chain per seed for ``n_steps`` steps of ``method``.

    Args:
        method: one of ``SDE_METHODS``.
        x0: initial primal point shared by all chains.
        n_steps: number of steps per chain.
        seeds: one integer per chain.
        config: step size and method options. For ``smlaa``/``smlam`` the
            ``stochastic_gradient`` holds per-term dual (resp. primal)
            gradients and each step draws a single term.
        gradient: primal gradient (ula, plmc, myula, mlam).
        projection: Euclidean projection (plmc, myula).
        barrier: mirror map (mirror methods).
        dual_gradient: gradient of the dual potential (mlaa).
        domain: optional set used to count exits.
        burn_in: fraction of leading steps excluded from moments.
        record_every: keep every k-th state in ``samples``.
        record_coords: coordinates to keep (default all).

    Returns:
        :class:`ChainResult`. Mirror methods report primal states through
        the barrier's output representation.
    """
    if method not in SDE_METHODS:
        raise ValueError(f"unknown method {method!r}")
    seeds = [int(s) for s in np.atleast_1d(seeds)]
    R = len(seeds)
    dt = config.step_size
    x = np.broadcast_to(np.asarray(x0, dtype=float), (R, np.size(x0))).copy()
    d = x.shape[1]
    sg = config.stochastic_gradient
    cost = 1.0
    if method in ("smlaa", "smlam"):
        if sg is None:
            raise ValueError(f"{method} needs a stochastic gradient")
        cost = 1.0 / sg.n_terms
        jgens = [np.random.default_rng([s, 7]) for s in seeds]
    mirror = method in ("mlaa", "mlam", "smlaa", "smlam")
    if mirror and barrier is None:
        raise ValueError(f"{method} needs a barrier")
    if method in ("plmc", "myula") and projection is None:
        raise ValueError(f"{method} needs a projection")
    inner = config.inner_steps if method in ("mlam", "smlam") else None
    noise = _Normals(seeds, (inner, d) if inner else (d,))
    z = barrier.forward(x) if method in ("mlaa", "smlaa") else None

    def out_repr(y):
        return barrier.to_output(y) if mirror else y

    probe = out_repr(x)
    d_out = probe.shape[1]
    coords = np.arange(d_out) if record_coords is None else np.asarray(record_coords)
    n_burn = int(math.floor(burn_in * n_steps))
    n_rec = n_steps // record_every
    samples = np.empty((n_rec, R, coords.size))
    costs = np.empty(n_rec)
    mean = np.zeros((R, d_out))
    m2 = np.zeros((R, d_out))
    outside = np.zeros(R, dtype=np.int64)
    n_post = 0

    jbuf = None
    jptr = 0
    for step in range(n_steps):
        xi = noise.next()
        if inner:
            xi = np.swapaxes(xi, 0, 1)
        if sg is not None:
            if jbuf is None or jptr == 1024:
                jbuf = np.stack([g.integers(0, sg.n_terms, 1024) for g in jgens], axis=1)
                jptr = 0
            j = jbuf[jptr]
            jptr += 1
            est = lambda y, j=j: sg.estimate(y, j)
        if method == "ula":
            x = ula_step(gradient, x, dt, xi)
        elif method == "plmc":
            x = plmc_step(gradient, projection, x, dt, xi)
        elif method == "myula":
            x = myula_step(gradient, projection, x, dt, config.myula_epsilon, xi)
        elif method == "mlaa":
            z, x = mlaa_step(barrier, dual_gradient, z, dt, xi)
        elif method == "smlaa":
            z, x = mlaa_step(barrier, est, z, dt, xi)
        elif method == "mlam":
            x = mlam_step(barrier, gradient, x, dt, xi)
        else:
            x = mlam_step(barrier, est, x, dt, xi)
        y = out_repr(x)
        if (step + 1) % record_every == 0:
            k = (step + 1) // record_every - 1
            samples[k] = y[:, coords]
            costs[k] = (step + 1) * cost
        if step >= n_burn:
            n_post += 1
            delta = y - mean
            mean += delta / n_post
            m2 += delta * (y - mean)
            if domain is not None:
                outside += ~domain.contains(x, closed=True)
    var = m2 / max(n_post - 1, 1)
    return ChainResult(
        samples=samples,
        costs=costs,
        final=out_repr(x),
        mean=mean,
        var=var,
        n_post=n_post,
        outside=outside,
        gradient_evaluations=n_steps * cost,
    )
