"""Zig-Zag, Bouncy Particle and subsampled Zig-Zag as batched PDMP specs."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .pdmp import AffineRateBound, PDMPSpec, PhaseState, Skeleton, Space, simulate_batch, simulate_skeleton

__all__ = [
    "ZeroGradientError",
    "RefreshDistribution",
    "ZigZagSpec",
    "BouncySpec",
    "SubsampledGradient",
    "ZigZagSubsampledSpec",
    "zz_rate",
    "zz_flip",
    "zz_bounds",
    "bps_reflect",
    "ss_estimated_rate",
    "run_zzs",
    "run_bps",
    "run_zzss",
    "random_zz_velocity",
    "random_sphere_velocity",
]

ZERO_GRADIENT_TOL = 1e-14


class ZeroGradientError(ValueError):
    """Reflection requested where the gradient vanishes."""


class RefreshDistribution(str, enum.Enum):
    UNIT_SPHERE = "unit-sphere"
    STANDARD_GAUSSIAN = "standard-gaussian"


def _checked_gradient(gradient, x):
    g = np.asarray(gradient(x), dtype=float)
    if g.shape != x.shape:
        raise ValueError(f"gradient returned shape {g.shape} for input {x.shape}")
    if np.isnan(g).any():
        raise FloatingPointError("gradient evaluated to NaN")
    return g


class ZigZagSpec(PDMPSpec):
    """Zig-Zag process for ``exp(-U)`` with a global gradient-Lipschitz bound.

    Args:
        gradient: batched map ``(..., d) -> (..., d)`` returning the gradient of U.
        lipschitz: constant L with ``||grad U(x) - grad U(y)|| <= L ||x - y||``.
        dim: dimension d.
        space: which space the positions live in (used for tagging only).
        admissible: optional batched predicate on positions.
    """

    def __init__(self, gradient, lipschitz: float, dim: int, space=Space.PRIMAL, admissible=None):
        if not lipschitz >= 0 or not math.isfinite(lipschitz):
            raise ValueError(f"lipschitz must be a finite nonnegative number, got {lipschitz}")
        self.gradient = gradient
        self.lipschitz = float(lipschitz)
        self.dim = int(dim)
        self.n_clocks = self.dim
        self.space = Space(space)
        self._admissible = admissible
        self._slope = self.lipschitz * math.sqrt(self.dim)

    def validate_state(self, state):
        super().validate_state(state)
        if not np.all(np.abs(state.velocity) == 1.0):
            raise ValueError("Zig-Zag velocities must be +1 or -1")

    def admissible(self, x):
        ok = np.all(np.isfinite(x), axis=-1)
        if self._admissible is not None:
            ok &= self._admissible(x)
        return ok

    def evaluate(self, x):
        return _checked_gradient(self.gradient, x)

    def bounds(self, x, v, g):
        a = np.maximum(v * g, 0.0)
        return a, np.full_like(a, self._slope)

    def rate(self, x, v, g, clock, aux):
        rows = np.arange(x.shape[0])
        return np.maximum(v[rows, clock] * g[rows, clock], 0.0)

    def jump(self, x, v, g, clock, rngs):
        v = v.copy()
        rows = np.arange(v.shape[0])
        v[rows, clock] = -v[rows, clock]
        return v


def zz_rate(spec: ZigZagSpec, state: PhaseState) -> tuple[np.ndarray, float]:
    """Per-coordinate Zig-Zag rates ``(v_i d_i U(x))^+`` and their sum."""
    spec.validate_state(state)
    g = _checked_gradient(spec.gradient, state.position[None])[0]
    lam = np.maximum(state.velocity * g, 0.0)
    return lam, float(lam.sum())


def zz_flip(state: PhaseState, i: int) -> PhaseState:
    """Negate velocity coordinate ``i`` (zero-based)."""
    if not 0 <= i < state.dim:
        raise IndexError(f"coordinate {i} out of range for dimension {state.dim}")
    v = state.velocity.copy()
    v[i] = -v[i]
    return PhaseState(state.position.copy(), v, state.space)


def zz_bounds(spec: ZigZagSpec, state: PhaseState) -> list[AffineRateBound]:
    lam, _ = zz_rate(spec, state)
    slope = spec.lipschitz * float(np.linalg.norm(state.velocity))
    return [AffineRateBound(float(a), slope) for a in lam]


def bps_reflect(gradient_at_x, v) -> np.ndarray:
    """Reflect ``v`` off the hyperplane orthogonal to the gradient.

    Works on single vectors or on rows of a 2-d array.
    """
    g = np.asarray(gradient_at_x, dtype=float)
    v = np.asarray(v, dtype=float)
    gg = np.sum(g * g, axis=-1, keepdims=True)
    if np.any(np.sqrt(gg) <= ZERO_GRADIENT_TOL):
        raise ZeroGradientError("reflection undefined at a vanishing gradient")
    return v - 2.0 * (np.sum(v * g, axis=-1, keepdims=True) / gg) * g


def random_zz_velocity(dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(np.array([-1.0, 1.0]), size=dim)


def random_sphere_velocity(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(dim)
    return z / np.linalg.norm(z)


class BouncySpec(PDMPSpec):
    """Bouncy Particle Sampler with constant refreshment.

    Clock 0 proposes reflections under the bound
    ``(v.grad U)^+ + L ||v||^2 s``; clock 1 is an exact refreshment clock of
    rate ``refresh_rate``.
    """

    def __init__(
        self,
        gradient,
        lipschitz: float,
        dim: int,
        refresh_rate: float = 1.0,
        refresh_dist=RefreshDistribution.UNIT_SPHERE,
        space=Space.PRIMAL,
        admissible=None,
    ):
        if not refresh_rate > 0:
            raise ValueError(f"refresh_rate must be positive, got {refresh_rate}")
        if not lipschitz >= 0 or not math.isfinite(lipschitz):
            raise ValueError(f"lipschitz must be a finite nonnegative number, got {lipschitz}")
        self.gradient = gradient
        self.lipschitz = float(lipschitz)
        self.dim = int(dim)
        self.n_clocks = 2
        self.refresh_rate = float(refresh_rate)
        self.refresh_dist = RefreshDistribution(refresh_dist)
        self.space = Space(space)
        self._admissible = admissible

    def admissible(self, x):
        ok = np.all(np.isfinite(x), axis=-1)
        if self._admissible is not None:
            ok &= self._admissible(x)
        return ok

    def evaluate(self, x):
        return _checked_gradient(self.gradient, x)

    def bounds(self, x, v, g):
        a = np.empty((x.shape[0], 2))
        b = np.empty_like(a)
        a[:, 0] = np.maximum(np.sum(v * g, axis=1), 0.0)
        b[:, 0] = self.lipschitz * np.sum(v * v, axis=1)
        a[:, 1] = self.refresh_rate
        b[:, 1] = 0.0
        return a, b

    def rate(self, x, v, g, clock, aux):
        refl = np.maximum(np.sum(v * g, axis=1), 0.0)
        return np.where(clock == 0, refl, self.refresh_rate)

    def draw_velocity(self, rng) -> np.ndarray:
        if self.refresh_dist is RefreshDistribution.UNIT_SPHERE:
            return random_sphere_velocity(self.dim, rng)
        return rng.standard_normal(self.dim)

    def jump(self, x, v, g, clock, rngs):
        v = v.copy()
        for k in range(v.shape[0]):
            if clock[k] == 0 and math.sqrt(float(g[k] @ g[k])) > ZERO_GRADIENT_TOL:
                v[k] = bps_reflect(g[k], v[k])
            else:
                v[k] = self.draw_velocity(rngs[k])
        return v


@dataclass(frozen=True)
class SubsampledGradient:
    """Control-variate gradient estimator for ``U = (1/K) sum_j U^j``.

    Attributes:
        term_gradient: batched map ``(x, j) -> grad U^j(x)``; ``x`` has shape
            ``(R, d)`` and ``j`` integer shape ``(R,)``.
        n_terms: K.
        reference_point: anchor ``x_hat``.
        reference_gradient: ``grad U(x_hat)``.
        term_reference_gradients: ``(K, d)`` values ``grad U^j(x_hat)``.
        lipschitz: L_p, the Lipschitz constant of every ``grad U^j`` in the
            ``p`` norm.
        norm_order: p, one of 1, 2 or ``inf``.
    """

    term_gradient: Callable
    n_terms: int
    reference_point: np.ndarray
    reference_gradient: np.ndarray
    term_reference_gradients: np.ndarray
    lipschitz: float
    norm_order: float = math.inf

    @classmethod
    def from_terms(cls, term_gradient, n_terms: int, reference_point, lipschitz: float, norm_order=math.inf):
        """Precompute the reference gradients from the per-term map."""
        if norm_order not in (1, 2, math.inf):
            raise ValueError("norm_order must be 1, 2 or inf")
        xh = np.asarray(reference_point, dtype=float)
        js = np.arange(n_terms)
        per = np.asarray(term_gradient(np.broadcast_to(xh, (n_terms, xh.size)), js), dtype=float)
        return cls(term_gradient, int(n_terms), xh, per.mean(axis=0), per, float(lipschitz), norm_order)

    @property
    def dim(self) -> int:
        return self.reference_point.size

    def estimate(self, x, j) -> np.ndarray:
        """Rows of ``E^j(x) = grad U(x_hat) + grad U^j(x) - grad U^j(x_hat)``."""
        x = np.atleast_2d(x)
        j = np.broadcast_to(np.asarray(j), (x.shape[0],))
        if np.any((j < 0) | (j >= self.n_terms)):
            raise IndexError("term index out of range")
        return self.reference_gradient + self.term_gradient(x, j) - self.term_reference_gradients[j]

    def full_gradient(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        acc = np.zeros_like(x, dtype=float)
        for j in range(self.n_terms):
            acc += self.term_gradient(x, np.full(x.shape[0], j))
        return acc / self.n_terms


def ss_estimated_rate(sg: SubsampledGradient, state: PhaseState, i: int, j: int) -> float:
    """``(v_i E_i^j(x))^+`` for coordinate ``i`` and term ``j`` (zero-based)."""
    if not 0 <= i < state.dim:
        raise IndexError(f"coordinate {i} out of range")
    if not 0 <= j < sg.n_terms:
        raise IndexError(f"term {j} out of range")
    e = sg.estimate(state.position[None], np.array([j]))[0]
    return max(state.velocity[i] * e[i], 0.0)


class ZigZagSubsampledSpec(PDMPSpec):
    """Zig-Zag with a single-term control-variate rate at every proposal.

    Bounds are anchored at the reference point,
    ``(v_i d_i U(x_hat))^+ + L_p ||x - x_hat||_p + L_p ||v||_p s``, so a
    proposal touches one term only and costs ``1/K`` of a full evaluation.
    """

    uses_aux = True

    def __init__(self, sg: SubsampledGradient, space=Space.PRIMAL, admissible=None):
        self.sg = sg
        self.dim = sg.dim
        self.n_clocks = self.dim
        self.space = Space(space)
        self.evaluation_cost = Fraction(1, sg.n_terms)
        self.initial_cost = Fraction(0)
        self._admissible = admissible
        self._vnorm = float(np.linalg.norm(np.ones(self.dim), ord=sg.norm_order))

    def validate_state(self, state):
        super().validate_state(state)
        if not np.all(np.abs(state.velocity) == 1.0):
            raise ValueError("Zig-Zag velocities must be +1 or -1")

    def admissible(self, x):
        ok = np.all(np.isfinite(x), axis=-1)
        if self._admissible is not None:
            ok &= self._admissible(x)
        return ok

    def evaluate(self, x):
        return np.linalg.norm(x - self.sg.reference_point, ord=self.sg.norm_order, axis=1)

    def bounds(self, x, v, dist):
        L = self.sg.lipschitz
        a = np.maximum(v * self.sg.reference_gradient, 0.0) + (L * dist)[:, None]
        return a, np.full_like(a, L * self._vnorm)

    def rate(self, x, v, dist, clock, aux):
        j = np.minimum((aux * self.sg.n_terms).astype(np.int64), self.sg.n_terms - 1)
        e = self.sg.estimate(x, j)
        rows = np.arange(x.shape[0])
        return np.maximum(v[rows, clock] * e[rows, clock], 0.0)

    def jump(self, x, v, dist, clock, rngs):
        v = v.copy()
        rows = np.arange(v.shape[0])
        v[rows, clock] = -v[rows, clock]
        return v


def run_zzs(spec: ZigZagSpec, initial: PhaseState, budget, seed: int) -> Skeleton:
    return simulate_skeleton(spec, initial, budget, seed)


def run_bps(spec: BouncySpec, initial: PhaseState, budget, seed: int) -> Skeleton:
    return simulate_skeleton(spec, initial, budget, seed)


def run_zzss(sg: SubsampledGradient, initial: PhaseState, budget, seed: int, **kwargs) -> Skeleton:
    return simulate_skeleton(ZigZagSubsampledSpec(sg, space=initial.space, **kwargs), initial, budget, seed)


def run_batch(spec: PDMPSpec, positions, velocities, budget, seeds, on_error="raise"):
    """Convenience alias for :func:`mirror_pdmp.pdmp.simulate_batch`."""
    return simulate_batch(spec, positions, velocities, budget, seeds, on_error=on_error)
