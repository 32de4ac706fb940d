"""Generic PDMP machinery: states, skeletons, Poisson thinning and the event loop.

All flows are linear, so a PDMP is fully described by a :class:`PDMPSpec`
that supplies affine rate bounds, exact rates at proposal points and the
jump kernel. The event loop in :func:`simulate_batch` advances several
independent replicates in lockstep so that the per-proposal work is
vectorised across chains. Each replicate owns its own random streams, so
the result for a replicate does not depend on which other replicates share
the batch.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "Space",
    "PhaseState",
    "AffineRateBound",
    "ThinningStats",
    "Skeleton",
    "Budget",
    "PDMPSpec",
    "BoundViolationError",
    "InadmissibleStateError",
    "invert_affine_bound",
    "simulate_skeleton",
    "simulate_batch",
    "extract_samples",
    "write_skeleton",
    "read_skeleton",
]

# Relative slack allowed when comparing a realised rate with its bound.
BOUND_RTOL = 1e-9


class Space(str, enum.Enum):
    PRIMAL = "primal"
    DUAL = "dual"


class BoundViolationError(RuntimeError):
    """A realised rate exceeded the bound it was thinned under.

    Attributes:
        replicate: index of the replicate inside its batch.
        clock: index of the proposing clock.
        time: absolute process time of the proposal.
        position, velocity: state at the proposal.
        rate: realised rate.
        bound: value of the affine bound at the proposal.
    """

    def __init__(self, replicate, clock, time, position, velocity, rate, bound):
        self.replicate = int(replicate)
        self.clock = int(clock)
        self.time = float(time)
        self.position = np.asarray(position, dtype=float).copy()
        self.velocity = np.asarray(velocity, dtype=float).copy()
        self.rate = float(rate)
        self.bound = float(bound)
        super().__init__(
            f"rate {self.rate:.6g} exceeds bound {self.bound:.6g} on clock {self.clock} "
            f"at t={self.time:.6g} (replicate {self.replicate})"
        )

    def payload(self) -> dict:
        return {
            "replicate": self.replicate,
            "clock": self.clock,
            "time": self.time,
            "position": self.position.tolist(),
            "velocity": self.velocity.tolist(),
            "rate": self.rate,
            "bound": self.bound,
        }


class InadmissibleStateError(RuntimeError):
    """The position left the set the process is allowed to visit."""


@dataclass(frozen=True)
class PhaseState:
    """Position and velocity of a PDMP, tagged with the space it lives in."""

    position: np.ndarray
    velocity: np.ndarray
    space: Space = Space.PRIMAL

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.position, dtype=float))
        v = np.atleast_1d(np.asarray(self.velocity, dtype=float))
        if x.ndim != 1 or v.shape != x.shape or x.size < 1:
            raise ValueError(f"position and velocity must be 1-d of equal length, got {x.shape} and {v.shape}")
        object.__setattr__(self, "position", x)
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "space", Space(self.space))

    @property
    def dim(self) -> int:
        return self.position.size


@dataclass(frozen=True)
class AffineRateBound:
    """Bound ``s -> max(intercept + slope * s, 0)`` on a rate along a segment."""

    intercept: float
    slope: float

    def __post_init__(self):
        if math.isnan(self.intercept) or math.isnan(self.slope):
            raise ValueError("bound coefficients must not be NaN")
        if self.intercept < 0:
            raise ValueError(f"intercept must be nonnegative, got {self.intercept}")

    def __call__(self, s):
        return np.maximum(self.intercept + self.slope * np.asarray(s, dtype=float), 0.0)

    def total_mass(self) -> float:
        if self.slope < 0:
            return self.intercept**2 / (-2.0 * self.slope)
        return math.inf if (self.intercept > 0 or self.slope > 0) else 0.0


@dataclass
class ThinningStats:
    proposals: int = 0
    acceptances: int = 0
    clock_draws: int = 0
    gradient_evaluations: float = 0.0

    def to_dict(self) -> dict:
        return {
            "proposals": int(self.proposals),
            "acceptances": int(self.acceptances),
            "clock_draws": int(self.clock_draws),
            "gradient_evaluations": float(self.gradient_evaluations),
        }


@dataclass
class Skeleton:
    """Event times and post-jump states of a PDMP path with linear flow.

    Attributes:
        times: event times, strictly increasing and starting at 0.
        positions: ``(n_events, d)`` positions right after each event.
        velocities: ``(n_events, d)`` velocities right after each event.
        final_time: end of the simulated path.
        stats: thinning counters.
        costs: cumulative gradient evaluations spent when each event was
            accepted. Used for cost-aware sample extraction.
        final_cost: gradient evaluations spent by ``final_time``.
        max_rate_ratio: largest observed rate/bound ratio over all proposals.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    final_time: float
    stats: ThinningStats = field(default_factory=ThinningStats)
    space: Space = Space.PRIMAL
    costs: np.ndarray | None = None
    final_cost: float = 0.0
    max_rate_ratio: float = 0.0

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __len__(self) -> int:
        return self.times.size

    @property
    def events(self) -> Iterator[tuple[float, PhaseState]]:
        for t, x, v in zip(self.times, self.positions, self.velocities):
            yield float(t), PhaseState(x, v, self.space)

    @property
    def final_position(self) -> np.ndarray:
        return self.positions[-1] + (self.final_time - self.times[-1]) * self.velocities[-1]

    def path_consistency_error(self) -> float:
        """Largest mismatch between consecutive positions and the linear flow."""
        if len(self) < 2:
            return 0.0
        dt = np.diff(self.times)[:, None]
        pred = self.positions[:-1] + dt * self.velocities[:-1]
        scale = np.maximum(1.0, np.abs(self.positions[1:]))
        return float(np.max(np.abs(pred - self.positions[1:]) / scale))


@dataclass(frozen=True)
class Budget:
    """When to stop a simulation.

    Any combination may be set; the first limit reached stops the run.
    ``events`` counts accepted jumps (the initial state is not an event
    jump), ``gradient_evaluations`` caps the total cost and ``time`` is a
    horizon on process time.
    """

    events: int | None = None
    gradient_evaluations: float | None = None
    time: float | None = None

    def __post_init__(self):
        if self.events is None and self.gradient_evaluations is None and self.time is None:
            raise ValueError("budget needs at least one limit")
        for name in ("events", "gradient_evaluations", "time"):
            val = getattr(self, name)
            if val is not None and not val >= 1 and name != "time":
                raise ValueError(f"{name} budget must be >= 1, got {val}")
            if name == "time" and val is not None and not val > 0:
                raise ValueError(f"time horizon must be positive, got {val}")

    @classmethod
    def coerce(cls, budget) -> "Budget":
        if isinstance(budget, Budget):
            return budget
        if isinstance(budget, (int, np.integer)):
            return cls(events=int(budget))
        if isinstance(budget, dict):
            return cls(**budget)
        raise TypeError(f"cannot interpret {budget!r} as a budget")


class PDMPSpec:
    """Batched description of a PDMP with linear flow and factorised clocks.

    Arrays passed to the methods have a leading replicate axis of length R.
    Subclasses set ``dim``, ``n_clocks``, ``space`` and the per-call cost
    ``evaluation_cost`` (gradient evaluations charged for every call to
    :meth:`evaluate`), and ``initial_cost`` charged for the evaluation at the
    starting point.
    """

    dim: int
    n_clocks: int
    space: Space = Space.PRIMAL
    evaluation_cost: Fraction = Fraction(1)
    initial_cost: Fraction = Fraction(1)
    uses_aux: bool = False

    def validate_state(self, state: PhaseState) -> None:
        if state.dim != self.dim:
            raise ValueError(f"state has dimension {state.dim}, spec expects {self.dim}")
        if not (np.all(np.isfinite(state.position)) and np.all(np.isfinite(state.velocity))):
            raise ValueError("state must be finite")

    def evaluate(self, x: np.ndarray):
        """Work shared by bounds and rates at positions ``x`` (usually a gradient)."""
        raise NotImplementedError

    def bounds(self, x, v, cache) -> tuple[np.ndarray, np.ndarray]:
        """Intercepts and slopes, each ``(R, n_clocks)``."""
        raise NotImplementedError

    def rate(self, x, v, cache, clock, aux) -> np.ndarray:
        """True rate of ``clock[r]`` for each row; ``aux`` is a uniform per row."""
        raise NotImplementedError

    def jump(self, x, v, cache, clock, rngs) -> np.ndarray:
        """New velocities for the rows passed in (all of which jump)."""
        raise NotImplementedError

    def admissible(self, x: np.ndarray) -> np.ndarray:
        return np.all(np.isfinite(x), axis=-1)


def _invert_raw(a: np.ndarray, b: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Vectorised inverse of the cumulative bound; caller silences float warnings.

    ``t = 2E / (a + sqrt(a^2 + 2bE))`` is the stable root for every sign of
    ``b``. A negative discriminant (only possible for ``b < 0``) means the
    bound's finite mass is below ``E``, and ``a = 0, b <= 0`` is a zero bound.
    """
    disc = a * a + 2.0 * b * e
    t = 2.0 * e / (a + np.sqrt(disc))
    t[np.isnan(t)] = np.inf
    return t


def _invert(a, b, e) -> np.ndarray:
    a, b, e = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (a, b, e)))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _invert_raw(a, b, e)


def invert_affine_bound(bound: AffineRateBound, exp_draw: float) -> float:
    """Smallest ``t`` with ``int_0^t (a + b s)^+ ds = exp_draw``.

    Returns ``inf`` when the bound has finite total mass below ``exp_draw``.
    """
    if math.isnan(exp_draw):
        raise ValueError("exp_draw must not be NaN")
    if exp_draw <= 0:
        raise ValueError(f"exp_draw must be positive, got {exp_draw}")
    t = _invert(np.float64(bound.intercept), np.float64(bound.slope), np.float64(exp_draw))
    return float(t[0])


class _Streams:
    """Buffered random streams for one replicate.

    The seed sequence is split into fixed-role children: acceptance
    uniforms, auxiliary uniforms, a generator for jump kernels, and then one
    exponential stream per clock.
    """

    def __init__(self, seed: int, n_clocks: int, block: int):
        children = np.random.SeedSequence(seed).spawn(3 + n_clocks)
        self.accept = np.random.Generator(np.random.PCG64(children[0]))
        self.aux = np.random.Generator(np.random.PCG64(children[1]))
        self.jump = np.random.Generator(np.random.PCG64(children[2]))
        self.clocks = [np.random.Generator(np.random.PCG64(c)) for c in children[3:]]
        self.block = block

    def fill(self, n_clocks: int, with_aux: bool):
        e = np.empty((n_clocks, self.block))
        for i, g in enumerate(self.clocks):
            g.standard_exponential(self.block, out=e[i])
        u = self.accept.random(self.block)
        aux = self.aux.random(self.block) if with_aux else None
        return e, u, aux


def simulate_skeleton(spec: PDMPSpec, initial: PhaseState, budget, rng_seed: int) -> Skeleton:
    """Simulate one PDMP path; see :func:`simulate_batch`."""
    spec.validate_state(initial)
    (out,) = simulate_batch(spec, initial.position[None], initial.velocity[None], budget, [rng_seed])
    return out


def simulate_batch(
    spec: PDMPSpec,
    positions: np.ndarray,
    velocities: np.ndarray,
    budget,
    seeds: Sequence[int],
    on_error: str = "raise",
    block: int = 1024,
) -> list:
    """Run independent replicates of a PDMP in lockstep.

    Every iteration draws one exponential per clock and replicate, moves each
    replicate to its earliest proposal, and thins it with one acceptance
    uniform. Bounds are re-anchored at the new state after every proposal,
    accepted or not.

    Args:
        spec: batched PDMP description.
        positions, velocities: ``(R, d)`` initial states.
        budget: :class:`Budget`, an event count, or a dict of limits.
        seeds: one integer seed per replicate.
        on_error: ``"raise"`` to propagate sampler errors, ``"record"`` to
            return the exception in place of the failed replicate's skeleton.
        block: size of the random-number buffers.

    Returns:
        One :class:`Skeleton` (or exception when recording) per replicate.
    """
    budget = Budget.coerce(budget)
    X = np.array(positions, dtype=float, ndmin=2)
    V = np.array(velocities, dtype=float, ndmin=2)
    R, d = X.shape
    if V.shape != X.shape or len(seeds) != R:
        raise ValueError("positions, velocities and seeds must agree in the replicate axis")
    if d != spec.dim:
        raise ValueError(f"states have dimension {d}, spec expects {spec.dim}")
    if on_error not in ("raise", "record"):
        raise ValueError("on_error must be 'raise' or 'record'")
    C = spec.n_clocks
    with_aux = spec.uses_aux

    streams = [_Streams(int(s), C, block) for s in seeds]
    ids = list(range(R))
    results: list = [None] * R
    T = np.zeros(R)
    proposals = np.zeros(R, dtype=np.int64)
    n_events = np.zeros(R, dtype=np.int64)
    ratio = np.zeros(R)
    ev_t = [[0.0] for _ in range(R)]
    ev_x = [[X[r].copy()] for r in range(R)]
    ev_v = [[V[r].copy()] for r in range(R)]
    ev_c = [[0] for _ in range(R)]

    cost0, cost1 = spec.initial_cost, spec.evaluation_cost
    if budget.gradient_evaluations is not None:
        cap = Fraction(budget.gradient_evaluations).limit_denominator(10**9)
        max_props = math.floor((cap - cost0) / cost1) if cost1 > 0 else None
        if max_props is not None and max_props < 0:
            raise ValueError("budget smaller than the cost of the initial evaluation")
    else:
        max_props = None
    max_events = budget.events
    horizon = budget.time

    def cost_of(n):
        return float(cost0 + n * cost1)

    def finish(k, final_time, reason=None):
        r = ids[k]
        if isinstance(reason, Exception):
            results[r] = reason
            return
        n_acc = len(ev_t[r]) - 1
        stats = ThinningStats(
            proposals=int(proposals[k]),
            acceptances=n_acc,
            clock_draws=int(proposals[k]) * C,
            gradient_evaluations=cost_of(int(proposals[k])),
        )
        results[r] = Skeleton(
            times=np.asarray(ev_t[r]),
            positions=np.asarray(ev_x[r]),
            velocities=np.asarray(ev_v[r]),
            final_time=float(final_time),
            stats=stats,
            space=spec.space,
            costs=float(cost0) + np.asarray(ev_c[r], dtype=float) * float(cost1),
            final_cost=cost_of(int(proposals[k])),
            max_rate_ratio=float(ratio[k]),
        )

    ok = spec.admissible(X)
    if not np.all(ok):
        raise InadmissibleStateError("initial position is not admissible")
    cache = spec.evaluate(X)
    A, B = spec.bounds(X, V, cache)

    bufs = [s.fill(C, with_aux) for s in streams]
    E = np.stack([b[0] for b in bufs])
    U = np.stack([b[1] for b in bufs])
    AUX = np.stack([b[2] for b in bufs]) if with_aux else None
    ptr = 0
    rows = np.arange(R)

    def drop(keep):
        nonlocal X, V, T, proposals, n_events, ratio, A, B, cache, E, U, AUX, ids, streams
        X, V, T = X[keep], V[keep], T[keep]
        proposals, n_events, ratio = proposals[keep], n_events[keep], ratio[keep]
        A, B = A[keep], B[keep]
        cache = _take(cache, keep)
        E, U = E[keep], U[keep]
        if AUX is not None:
            AUX = AUX[keep]
        idx = np.flatnonzero(keep)
        ids = [ids[i] for i in idx]
        streams = [streams[i] for i in idx]

    # rows that already satisfy the budget
    done = np.zeros(len(ids), dtype=bool)
    if max_props is not None and max_props == 0:
        done[:] = True
    if max_events is not None and max_events == 0:
        done[:] = True
    for k in np.flatnonzero(done):
        finish(k, T[k])
    if done.any():
        drop(~done)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        while ids:
            if ptr == block:
                bufs = [s.fill(C, with_aux) for s in streams]
                E = np.stack([b[0] for b in bufs])
                U = np.stack([b[1] for b in bufs])
                AUX = np.stack([b[2] for b in bufs]) if with_aux else None
                ptr = 0
            n = len(ids)
            if rows.size != n:
                rows = np.arange(n)
            tau = _invert_raw(A, B, E[:, :, ptr])
            clock = tau.argmin(axis=1)
            t = tau[rows, clock]
            u = U[:, ptr]
            aux = AUX[:, ptr] if AUX is not None else None
            ptr += 1

            # replicates whose next proposal lies beyond the horizon or never comes
            stop = ~np.isfinite(t)
            if horizon is not None:
                stop |= T + t > horizon
            if stop.any():
                for k in np.flatnonzero(stop):
                    if horizon is None:
                        err = RuntimeError("all rates vanish and no time horizon was given")
                        if on_error == "raise":
                            raise err
                        finish(k, T[k], err)
                        continue
                    finish(k, horizon)
                keep = ~stop
                drop(keep)
                if not ids:
                    break
                rows = np.arange(len(ids))
                clock, t, u = clock[keep], t[keep], u[keep]
                if aux is not None:
                    aux = aux[keep]

            X = X + t[:, None] * V
            T = T + t
            proposals += 1
            failed = ~spec.admissible(X)
            any_failed = failed.any()
            if any_failed:
                for k in np.flatnonzero(failed):
                    err = InadmissibleStateError(f"state left the admissible set at t={T[k]:.6g}: {X[k].tolist()}")
                    if on_error == "raise":
                        raise err
                    finish(k, T[k], err)
            cache = spec.evaluate(X)
            bound = np.maximum(A[rows, clock] + B[rows, clock] * t, 0.0)
            rate = spec.rate(X, V, cache, clock, aux)
            viol = ~(rate <= bound * (1.0 + BOUND_RTOL))
            if viol.any():
                for k in np.flatnonzero(viol & ~failed):
                    if np.isnan(rate[k]):
                        err = FloatingPointError(f"NaN rate at t={T[k]:.6g}")
                    else:
                        err = BoundViolationError(ids[k], clock[k], T[k], X[k], V[k], rate[k], bound[k])
                    if on_error == "raise":
                        raise err
                    finish(k, T[k], err)
                failed = failed | viol
                any_failed = True
            ratio = np.fmax(ratio, rate / bound)

            accept = u * bound < rate
            if any_failed:
                accept &= ~failed
            if accept.any():
                acc = np.flatnonzero(accept)
                V[acc] = spec.jump(X[acc], V[acc], _take(cache, acc), clock[acc], [streams[k].jump for k in acc])
                n_events[acc] += 1
                for k in acc:
                    r = ids[k]
                    ev_t[r].append(T[k])
                    ev_x[r].append(X[k].copy())
                    ev_v[r].append(V[k].copy())
                    ev_c[r].append(int(proposals[k]))
            A, B = spec.bounds(X, V, cache)

            if max_props is not None or max_events is not None or any_failed:
                done = failed
                if max_props is not None:
                    done = done | (proposals >= max_props)
                if max_events is not None:
                    done = done | (n_events >= max_events)
                if done.any():
                    for k in np.flatnonzero(done & ~failed):
                        finish(k, T[k])
                    drop(~done)

    if on_error == "raise":
        for res in results:
            if isinstance(res, Exception):
                raise res
    return results


def _take(cache, idx):
    if cache is None:
        return None
    if isinstance(cache, tuple):
        return tuple(_take(c, idx) for c in cache)
    return cache[idx]


def extract_samples(skeleton: Skeleton, n: int, burn_in: float = 0.0) -> np.ndarray:
    """Positions of the linear-flow path at ``t_k = k T / n``, ``k = 1..n``.

    Args:
        skeleton: a path with ``final_time > 0``.
        n: number of equally spaced evaluation times.
        burn_in: fraction of the leading samples to discard.

    Returns:
        ``(n - floor(burn_in * n), d)`` array of positions.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if len(skeleton) == 0:
        raise ValueError("skeleton has no events")
    if not skeleton.final_time > 0:
        raise ValueError("skeleton has zero length")
    if not 0.0 <= burn_in < 1.0:
        raise ValueError("burn_in must be in [0, 1)")
    tk = skeleton.final_time * np.arange(1, n + 1) / n
    idx = np.searchsorted(skeleton.times, tk, side="right") - 1
    out = skeleton.positions[idx] + (tk - skeleton.times[idx])[:, None] * skeleton.velocities[idx]
    return out[int(math.floor(burn_in * n)):]


def sample_costs(skeleton: Skeleton, n: int, burn_in: float = 0.0) -> np.ndarray:
    """Gradient evaluations spent before each extracted sample is determined.

    A sample at ``t_k`` is known once the first event after ``t_k`` has been
    accepted, so it is charged the cost recorded at that event (or the final
    cost past the last event).
    """
    tk = skeleton.final_time * np.arange(1, n + 1) / n
    nxt = np.searchsorted(skeleton.times, tk, side="left")
    costs = np.append(skeleton.costs, skeleton.final_cost)
    out = costs[np.minimum(nxt, len(skeleton))]
    return out[int(math.floor(burn_in * n)):]


def write_skeleton(skeleton: Skeleton, path) -> tuple[Path, Path]:
    """Write the events as CSV and the stats as a JSON sidecar.

    The final flow state is written as the last row when it differs from the
    last event, so that ``final_time`` survives the round trip.
    """
    path = Path(path)
    d = skeleton.dim
    header = ["time"] + [f"x_{i + 1}" for i in range(d)] + [f"v_{i + 1}" for i in range(d)]
    rows = zip(skeleton.times, skeleton.positions, skeleton.velocities)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, x, v in rows:
            w.writerow([_fmt(t)] + [_fmt(a) for a in x] + [_fmt(a) for a in v])
    side = path.with_suffix(".json")
    meta = skeleton.stats.to_dict()
    meta["final_time"] = float(skeleton.final_time)
    meta["space"] = skeleton.space.value
    side.write_text(json.dumps(meta, indent=2))
    return path, side


def read_skeleton(path) -> Skeleton:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    d = (data.shape[1] - 1) // 2
    meta = json.loads(path.with_suffix(".json").read_text())
    stats = ThinningStats(
        proposals=meta["proposals"],
        acceptances=meta["acceptances"],
        clock_draws=meta["clock_draws"],
        gradient_evaluations=meta["gradient_evaluations"],
    )
    return Skeleton(
        times=data[:, 0].copy(),
        positions=data[:, 1 : 1 + d].copy(),
        velocities=data[:, 1 + d :].copy(),
        final_time=meta["final_time"],
        stats=stats,
        space=Space(meta.get("space", "primal")),
    )


def _fmt(x) -> str:
    return format(float(x), ".17g")
