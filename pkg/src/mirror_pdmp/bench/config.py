"""Experiment configuration: parsing, validation and object construction."""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..barriers import (
    BoxBarrier,
    EntropicQuadraticBarrier,
    HypercubeBarrier,
    IdentityBarrier,
    PreconditionedBarrier,
    SimplexEntropyBarrier,
)
from ..targets import (
    LDA_PROBABILITIES,
    DirichletPosterior,
    GammaProduct,
    GaussianMeanPosterior,
    GaussianTarget,
    TruncatedGaussian,
    lda_dataset,
)

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "build_target", "build_barrier", "SAMPLERS", "PDMP_SAMPLERS"]

SAMPLERS = ("zzs", "bps", "zzss", "mzzs", "mbps", "mzzss", "ula", "plmc", "myula", "mlaa", "mlam", "smlaa", "smlam")
PDMP_SAMPLERS = ("zzs", "bps", "zzss", "mzzs", "mbps", "mzzss")
FROM_APPENDIX = "from-appendix"


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    """One experiment: a target, a sampler, a budget and what to report.

    ``budget`` holds exactly one of ``gradient_evaluations``, ``epochs``
    (treated as gradient evaluations) or ``events`` (PDMP samplers only).
    ``protocol`` is ``"path"`` (samples along each replicate's trajectory)
    or ``"final"`` (one sample per replicate, its final state).
    """

    target: dict
    sampler: dict
    budget: dict
    barrier: dict | None = None
    name: str = "experiment"
    replicates: int = 1
    burn_in_fraction: float = 0.1
    master_seed: int = 0
    output: str | None = None
    samples: int | None = None
    protocol: str = "path"
    initial: object = "center"
    metrics: dict = field(default_factory=dict)
    write_skeletons: bool = False
    write_samples: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not isinstance(self.target, dict) or "id" not in self.target:
            raise ConfigError("target needs an 'id'")
        if not isinstance(self.sampler, dict) or self.sampler.get("id") not in SAMPLERS:
            raise ConfigError(f"sampler id must be one of {', '.join(SAMPLERS)}")
        if not isinstance(self.budget, dict) or len(self.budget) != 1:
            raise ConfigError("budget must set exactly one of gradient_evaluations, epochs, events")
        (key, val), = self.budget.items()
        if key not in ("gradient_evaluations", "epochs", "events"):
            raise ConfigError(f"unknown budget kind {key!r}")
        if not isinstance(val, (int, float)) or not val > 0:
            raise ConfigError("budget must be positive")
        if key == "events" and self.sampler["id"] not in PDMP_SAMPLERS:
            raise ConfigError("an event budget only applies to PDMP samplers")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError("replicates must be a positive integer")
        if not 0.0 <= float(self.burn_in_fraction) < 1.0:
            raise ConfigError("burn_in_fraction must lie in [0, 1)")
        if self.protocol not in ("path", "final"):
            raise ConfigError("protocol must be 'path' or 'final'")
        if self.samples is not None and (not isinstance(self.samples, int) or self.samples < 1):
            raise ConfigError("samples must be a positive integer")

    @property
    def sampler_id(self) -> str:
        return self.sampler["id"]

    @property
    def budget_kind(self) -> str:
        return next(iter(self.budget))

    @property
    def budget_value(self) -> float:
        return float(next(iter(self.budget.values())))

    def seeds(self) -> list[int]:
        return [int(self.master_seed) + i for i in range(self.replicates)]

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    def override(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**d)


def load_config(source) -> ExperimentConfig:
    """Read a YAML (or JSON) configuration file or mapping."""
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, dict):
        doc = source
    else:
        path = Path(source)
        try:
            doc = yaml.safe_load(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    try:
        return ExperimentConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _vec(spec, key, default=None):
    val = spec.get(key, default)
    if val is None:
        raise ConfigError(f"target parameter {key!r} is required")
    return np.atleast_1d(np.asarray(val, dtype=float))


def build_target(spec: dict):
    """Construct a target from its config mapping."""
    kind = spec["id"]
    try:
        if kind == "gamma":
            return GammaProduct(_vec(spec, "alpha", [3.0]), _vec(spec, "beta", [10.0]))
        if kind == "gaussian":
            if "precision" in spec:
                return GaussianTarget(np.asarray(spec["precision"], dtype=float))
            return GaussianTarget.standard(int(spec.get("dim", 1)))
        if kind == "gaussian-mean":
            return GaussianMeanPosterior(np.asarray(spec["data"], dtype=float))
        if kind == "truncated-gaussian":
            preset = spec.get("preset")
            if preset == "anisotropic-2d":
                return TruncatedGaussian.anisotropic_2d()
            if preset == "correlated-box":
                return TruncatedGaussian.correlated_box(int(spec.get("dim", 10)))
            if "covariance" in spec:
                return TruncatedGaussian.from_covariance(spec["covariance"], spec["lower"], spec["upper"])
            return TruncatedGaussian(np.asarray(spec["precision"], dtype=float), spec["lower"], spec["upper"])
        if kind in ("lda", "dirichlet"):
            if "dataset" in spec:
                return DirichletPosterior.from_json(spec["dataset"], alpha=spec.get("alpha"))
            return lda_dataset(
                spec.get("p", LDA_PROBABILITIES),
                int(spec.get("n_draws", 10_000)),
                int(spec.get("batches", 50)),
                seed=int(spec.get("seed", 0)),
                alpha=spec.get("alpha", 0.1),
            )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad parameters for target {kind!r}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown target {kind!r}")


def build_barrier(spec: dict | None, target):
    """Construct the barrier, defaulting to the natural one for the target."""
    if spec is None:
        if isinstance(target, GammaProduct):
            spec = {"id": "entropic-quadratic"}
        elif isinstance(target, TruncatedGaussian):
            spec = {"id": "box"}
        elif isinstance(target, DirichletPosterior):
            spec = {"id": "simplex-entropy"}
        else:
            spec = {"id": "identity"}
    kind = spec["id"]
    d = target.dim
    if kind == "identity":
        return IdentityBarrier(d)
    if kind == "entropic-quadratic":
        return EntropicQuadraticBarrier(d)
    if kind == "simplex-entropy":
        if not isinstance(target, DirichletPosterior):
            raise ConfigError("the simplex barrier needs a simplex target")
        return SimplexEntropyBarrier(target.categories)
    if kind in ("box", "hypercube", "preconditioned"):
        if not isinstance(target, TruncatedGaussian):
            raise ConfigError(f"barrier {kind!r} needs a box-constrained target")
        if kind == "box":
            return BoxBarrier(target.lower, target.upper)
        if np.any(target.lower != -1) or np.any(target.upper != 1):
            raise ConfigError(f"barrier {kind!r} is defined on [-1, 1]^d")
        if kind == "hypercube":
            return HypercubeBarrier(d)
        cov = np.diag(target.covariance)
        if np.any(np.abs(target.precision - np.diag(np.diag(target.precision))) > 0):
            raise ConfigError("preconditioned barrier needs a diagonal covariance")
        power = float(spec.get("power", 1.0))
        return PreconditionedBarrier(cov, power)
    raise ConfigError(f"unknown barrier {kind!r}")


def resolve_constant(value, default, what: str) -> float:
    """``from-appendix`` (or missing) picks ``default``; numbers pass through."""
    if value is None or value == FROM_APPENDIX:
        if default is None or not math.isfinite(default):
            raise ConfigError(f"{what} has no default for this target; set it explicitly")
        return float(default)
    try:
        val = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be a number or '{FROM_APPENDIX}'") from exc
    if not val > 0:
        raise ConfigError(f"{what} must be positive")
    return val
