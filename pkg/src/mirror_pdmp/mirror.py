"""Mirror PDMP samplers: Zig-Zag and Bouncy Particle run on the dual potential.

A mirror sampler moves in the dual space ``z = grad psi(x)`` targeting the
push-forward potential ``V(z) = U(grad psi*(z)) - log det hess psi*(z)``.
Samples are read off the dual path by linear interpolation and then mapped
back through ``grad psi*``, so they never leave the constraint set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barriers import Barrier
from .pdmp import Budget, PhaseState, Skeleton, Space, extract_samples, sample_costs, simulate_batch
from .samplers import (
    BouncySpec,
    RefreshDistribution,
    SubsampledGradient,
    ZigZagSpec,
    ZigZagSubsampledSpec,
    random_sphere_velocity,
    random_zz_velocity,
)

__all__ = [
    "DualPotential",
    "MirrorRun",
    "pushforward_potential",
    "barrier_inverse",
    "run_mzzs",
    "run_mbps",
    "run_mzzss",
    "mirror_zigzag_spec",
    "mirror_bouncy_spec",
    "initial_dual_states",
]


def pushforward_potential(barrier: Barrier, target, z):
    """``V(z)`` and ``grad V(z)`` by the chain rule through the inverse map."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("dual point must be finite")
    return barrier.pullback(z, target.potential, target.gradient)


def barrier_inverse(barrier: Barrier, z) -> np.ndarray:
    return barrier.inverse(np.asarray(z, dtype=float))


class DualPotential:
    """Push-forward potential of ``target`` under ``barrier``.

    Args:
        barrier: mirror map.
        target: object with batched ``potential`` and ``gradient``.
        gradient: optional closed-form dual gradient replacing the chain rule.
        potential: optional closed-form dual potential.
    """

    def __init__(self, barrier: Barrier, target, gradient=None, potential=None):
        self.barrier = barrier
        self.target = target
        self.dim = barrier.dim
        self._gradient = gradient
        self._potential = potential

    def value(self, z):
        if self._potential is not None:
            return self._potential(z)
        return pushforward_potential(self.barrier, self.target, z)[0]

    def gradient(self, z):
        if self._gradient is not None:
            return self._gradient(z)
        if hasattr(self.barrier, "dual_gradient"):
            return self.barrier.dual_gradient(z, self.target.gradient)
        return pushforward_potential(self.barrier, self.target, z)[1]


@dataclass
class MirrorRun:
    """Dual-space skeleton together with its barrier."""

    skeleton: Skeleton
    barrier: Barrier

    def dual_samples(self, n: int, burn_in: float = 0.1) -> np.ndarray:
        return extract_samples(self.skeleton, n, burn_in)

    def samples(self, n: int, burn_in: float = 0.1, output: bool = True) -> np.ndarray:
        """Primal samples at ``n`` equally spaced times, after burn-in.

        With ``output=True`` simplex samples carry the reconstructed last
        coordinate.
        """
        x = self.barrier.inverse(self.dual_samples(n, burn_in))
        return self.barrier.to_output(x) if output else x

    def sample_costs(self, n: int, burn_in: float = 0.1) -> np.ndarray:
        return sample_costs(self.skeleton, n, burn_in)

    @property
    def stats(self):
        return self.skeleton.stats


def mirror_zigzag_spec(barrier: Barrier, target, lipschitz: float, dual_gradient=None) -> ZigZagSpec:
    pot = DualPotential(barrier, target, gradient=dual_gradient)
    return ZigZagSpec(pot.gradient, lipschitz, barrier.dim, space=Space.DUAL)


def mirror_bouncy_spec(barrier, target, lipschitz, refresh_rate=1.0, refresh_dist=RefreshDistribution.UNIT_SPHERE, dual_gradient=None):
    pot = DualPotential(barrier, target, gradient=dual_gradient)
    return BouncySpec(pot.gradient, lipschitz, barrier.dim, refresh_rate, refresh_dist, space=Space.DUAL)


def initial_dual_states(barrier: Barrier, initial_x, seeds, kind: str = "zigzag"):
    """Dual starting points and random velocities for each replicate seed.

    The velocity for a replicate is drawn from a generator seeded with
    ``(seed, 1)`` so that it is independent of the event-loop streams.
    """
    x0 = np.asarray(initial_x, dtype=float)
    if not np.all(barrier.contains(x0)):
        raise ValueError("initial point must lie strictly inside the domain")
    z0 = barrier.forward(x0)
    R = len(seeds)
    Z = np.broadcast_to(z0, (R, barrier.dim)).copy()
    V = np.empty_like(Z)
    for r, s in enumerate(seeds):
        rng = np.random.default_rng([int(s), 1])
        V[r] = random_zz_velocity(barrier.dim, rng) if kind == "zigzag" else random_sphere_velocity(barrier.dim, rng)
    return Z, V


def _run(spec, barrier, initial_x, budget, seeds, kind, initial_velocity, on_error):
    single = np.isscalar(seeds)
    seed_list = [int(seeds)] if single else [int(s) for s in seeds]
    Z, V = initial_dual_states(barrier, initial_x, seed_list, kind)
    if initial_velocity is not None:
        V[:] = np.asarray(initial_velocity, dtype=float)
    sk = simulate_batch(spec, Z, V, Budget.coerce(budget), seed_list, on_error=on_error)
    runs = [s if isinstance(s, Exception) else MirrorRun(s, barrier) for s in sk]
    return runs[0] if single else runs


def run_mzzs(barrier, target, initial_x, budget, seed, lipschitz: float, initial_velocity=None, dual_gradient=None, on_error="raise"):
    """Mirror Zig-Zag: Zig-Zag on ``V`` with bound ``(v_i d_i V)^+ + L_V sqrt(d) s``.

    ``seed`` may be an integer (one run) or a sequence (replicates run in
    lockstep, one :class:`MirrorRun` per seed).
    """
    spec = mirror_zigzag_spec(barrier, target, lipschitz, dual_gradient)
    return _run(spec, barrier, initial_x, budget, seed, "zigzag", initial_velocity, on_error)


def run_mbps(
    barrier,
    target,
    initial_x,
    budget,
    seed,
    lipschitz: float,
    refresh_rate: float = 1.0,
    refresh_dist=RefreshDistribution.UNIT_SPHERE,
    initial_velocity=None,
    dual_gradient=None,
    on_error="raise",
):
    """Mirror Bouncy Particle sampler on ``V`` with exact refreshment at ``refresh_rate``."""
    spec = mirror_bouncy_spec(barrier, target, lipschitz, refresh_rate, refresh_dist, dual_gradient)
    return _run(spec, barrier, initial_x, budget, seed, "bouncy", initial_velocity, on_error)


def run_mzzss(barrier, sg: SubsampledGradient, initial_x, budget, seed, initial_velocity=None, on_error="raise"):
    """Mirror Zig-Zag with subsampling on the dual terms ``V^j``.

    ``sg`` holds the per-term dual gradients, the dual reference point and
    the constant ``L_{V,p}``.
    """
    spec = ZigZagSubsampledSpec(sg, space=Space.DUAL)
    return _run(spec, barrier, initial_x, budget, seed, "zigzag", initial_velocity, on_error)


def initial_state(barrier, initial_x, seed) -> PhaseState:
    z, v = initial_dual_states(barrier, initial_x, [seed])
    return PhaseState(z[0], v[0], Space.DUAL)
