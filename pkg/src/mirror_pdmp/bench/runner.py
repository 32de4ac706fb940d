"""Run experiments from configs and write plot-ready result files."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..barriers import IdentityBarrier
from ..metrics import batch_means_se, noise_floor, running_relative_std_error, w1_multivariate_by_marginals
from ..mirror import DualPotential, initial_dual_states
from ..pdmp import BoundViolationError, Space, Budget, extract_samples, sample_costs, simulate_batch, write_skeleton
from ..samplers import BouncySpec, RefreshDistribution, SubsampledGradient, ZigZagSpec, ZigZagSubsampledSpec
from ..sde import StepConfig, run_chains
from ..targets import DirichletPosterior, GaussianMeanPosterior, constants, lda_dual_pieces
from .config import PDMP_SAMPLERS, ConfigError, ExperimentConfig, build_barrier, build_target, load_config, resolve_constant

__all__ = ["SCHEMA_VERSION", "ExperimentResult", "run_experiment", "compare", "MismatchedTargetsError", "write_matrix_csv"]

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
REFERENCE_SEED_OFFSET = 10_000_019


class MismatchedTargetsError(ValueError):
    """Configs handed to :func:`compare` describe different targets."""


@dataclass
class ReplicateOutcome:
    index: int
    seed: int
    samples: np.ndarray | None = None
    costs: np.ndarray | None = None
    stats: dict = field(default_factory=dict)
    error: str | None = None
    error_payload: dict | None = None
    skeleton: object = None
    outside: int = 0


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    out_dir: Path | None
    outcomes: list
    metrics: dict
    manifest: dict

    @property
    def failed(self) -> list:
        return [o for o in self.outcomes if o.error is not None]

    def samples(self, index: int) -> np.ndarray:
        return self.outcomes[index].samples


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_matrix_csv(path, array, header) -> None:
    """17-significant-digit CSV with a header row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.atleast_2d(array):
            w.writerow([_fmt(v) for v in row])


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _dump(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, default=_json_default))


class _Setup:
    """Target, barrier, constants and sampler options resolved from a config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.target = build_target(cfg.target)
        sid = cfg.sampler_id
        self.sid = sid
        mirror = sid in ("mzzs", "mbps", "mzzss", "mlaa", "mlam", "smlaa", "smlam")
        self.barrier = build_barrier(cfg.barrier, self.target) if mirror else IdentityBarrier(self.target.dim)
        if sid in ("zzs", "bps", "zzss") and not np.all(np.isinf(self.target.domain.lower)) and self.target.domain.kind == "box":
            raise ConfigError(f"{sid} runs unconstrained; use its mirror version for a constrained target")
        try:
            self.constants = constants(self.target, self.barrier)
        except ValueError:
            self.constants = None
        self.is_lda = isinstance(self.target, DirichletPosterior)

    def initial_point(self) -> np.ndarray:
        init = self.cfg.initial
        if init == "center" or init is None:
            return self.target.center()
        if init == "mode" and self.is_lda:
            return self.barrier.inverse(lda_dual_pieces(self.target, self.barrier).mode)
        x = np.atleast_1d(np.asarray(init, dtype=float))
        if x.size != self.target.dim:
            raise ConfigError(f"initial point has {x.size} entries, target has dimension {self.target.dim}")
        if not np.all(self.target.contains(x)):
            raise ConfigError("initial point lies outside the target domain")
        return x

    def lipschitz(self) -> float:
        c = self.constants
        default = None if c is None else c.L_V
        return resolve_constant(self.cfg.sampler.get("lipschitz"), default, "lipschitz")

    def step_size(self) -> float:
        sid = self.sid
        c = self.constants
        eps = float(self.cfg.sampler.get("epsilon", 0.01))
        default = None
        if sid in ("mlaa", "smlaa") and c is not None:
            default = c.step_mlaa
        elif sid in ("mlam", "smlam") and c is not None:
            default = c.step_mlam
        elif sid in ("ula", "plmc", "myula"):
            L = c.L if c is not None and c.L else None
            if L is None and hasattr(self.target, "gradient_lipschitz"):
                L = self.target.gradient_lipschitz()
            if L:
                default = 1.0 / L if sid != "myula" else 1.0 / (L + 1.0 / eps)
        return resolve_constant(self.cfg.sampler.get("step_size"), default, "step_size")

    def refresh_rate(self) -> float:
        return float(self.cfg.sampler.get("refresh_rate", 1.0))

    def n_samples(self) -> int:
        if self.cfg.protocol == "final":
            return 1
        if self.cfg.samples is not None:
            return int(self.cfg.samples)
        return int(min(self.cfg.budget_value, 1_000_000))

    def pdmp_spec(self):
        sid = self.sid
        t, b = self.target, self.barrier
        if sid == "zzs":
            return ZigZagSpec(t.gradient, self.lipschitz(), t.dim)
        if sid == "bps":
            return BouncySpec(t.gradient, self.lipschitz(), t.dim, self.refresh_rate(), self._refresh_dist())
        if sid == "zzss":
            if not isinstance(t, GaussianMeanPosterior):
                raise ConfigError("zzss needs a target made of data terms")
            sg = t.subsampled_gradient()
            if self.cfg.sampler.get("lipschitz") not in (None, "from-appendix"):
                sg = SubsampledGradient(sg.term_gradient, sg.n_terms, sg.reference_point, sg.reference_gradient, sg.term_reference_gradients, float(self.cfg.sampler["lipschitz"]), sg.norm_order)
            return ZigZagSubsampledSpec(sg)
        dual_grad = None
        if self.is_lda:
            dual_grad = lda_dual_pieces(t, b).gradient
        pot = DualPotential(b, t, gradient=dual_grad)
        if sid == "mzzs":
            return ZigZagSpec(pot.gradient, self.lipschitz(), b.dim, space=Space.DUAL)
        if sid == "mbps":
            return BouncySpec(pot.gradient, self.lipschitz(), b.dim, self.refresh_rate(), self._refresh_dist(), space=Space.DUAL)
        if sid == "mzzss":
            if not self.is_lda:
                raise ConfigError("mzzss is available for the Dirichlet posterior")
            pieces = lda_dual_pieces(t, b)
            sg = pieces.subsampled_gradient(bool(self.cfg.sampler.get("control_variate", True)))
            L = resolve_constant(self.cfg.sampler.get("lipschitz"), pieces.lipschitz, "lipschitz")
            if L != sg.lipschitz:
                sg = SubsampledGradient(sg.term_gradient, sg.n_terms, sg.reference_point, sg.reference_gradient, sg.term_reference_gradients, L, sg.norm_order)
            return ZigZagSubsampledSpec(sg, space=Space.DUAL)
        raise ConfigError(f"{sid} is not a PDMP sampler")

    def _refresh_dist(self):
        return RefreshDistribution(self.cfg.sampler.get("refresh_dist", RefreshDistribution.UNIT_SPHERE.value))


def _pdmp_budget(cfg: ExperimentConfig) -> Budget:
    if cfg.budget_kind == "events":
        return Budget(events=int(cfg.budget_value))
    return Budget(gradient_evaluations=cfg.budget_value)


def _run_pdmp_chunk(cfg: ExperimentConfig, indices):
    setup = _Setup(cfg)
    spec = setup.pdmp_spec()
    seeds = [cfg.seeds()[i] for i in indices]
    x0 = setup.initial_point()
    mirror = setup.sid in ("mzzs", "mbps", "mzzss")
    bar = setup.barrier
    kind = "bouncy" if setup.sid in ("bps", "mbps") else "zigzag"
    Z, V = initial_dual_states(bar, x0, seeds, kind)
    results = simulate_batch(spec, Z, V, _pdmp_budget(cfg), seeds, on_error="record")
    n = setup.n_samples()
    burn = cfg.burn_in_fraction if cfg.protocol == "path" else 0.0
    out = []
    for i, s, res in zip(indices, seeds, results):
        if isinstance(res, Exception):
            payload = res.payload() if isinstance(res, BoundViolationError) else None
            out.append(ReplicateOutcome(i, s, error=f"{type(res).__name__}: {res}", error_payload=payload))
            continue
        pos = extract_samples(res, n, burn)
        x = bar.to_output(bar.inverse(pos)) if mirror else pos
        costs = sample_costs(res, n, burn)
        stats = res.stats.to_dict()
        stats["final_time"] = res.final_time
        stats["max_rate_ratio"] = res.max_rate_ratio
        out.append(ReplicateOutcome(i, s, samples=x, costs=costs, stats=stats, skeleton=res if cfg.write_skeletons else None))
    return out


def _run_sde_chunk(cfg: ExperimentConfig, indices):
    setup = _Setup(cfg)
    t, b = setup.target, setup.barrier
    sid = setup.sid
    seeds = [cfg.seeds()[i] for i in indices]
    x0 = setup.initial_point()
    sg = None
    dual_grad = None
    gradient = t.gradient
    if setup.is_lda:
        pieces = lda_dual_pieces(t, b)
        dual_grad = pieces.gradient
        if sid == "smlaa":
            sg = pieces.subsampled_gradient(bool(cfg.sampler.get("control_variate", True)))
        if sid == "smlam":
            sg = _primal_batches(t, b)
    elif sid in ("mlaa", "smlaa"):
        dual_grad = DualPotential(b, t).gradient
    if sid in ("smlaa", "smlam") and sg is None:
        raise ConfigError(f"{sid} needs a target made of data batches")
    step = setup.step_size()
    conf = StepConfig(step, float(cfg.sampler.get("epsilon", 0.01)), int(cfg.sampler.get("inner_steps", 10)), sg)
    cost = 1.0 / sg.n_terms if sg is not None else 1.0
    n_steps = int(math.floor(cfg.budget_value / cost + 1e-9))
    if cfg.protocol == "final":
        record_every = n_steps
    else:
        n = setup.n_samples()
        record_every = max(1, n_steps // n)
    res = run_chains(
        sid,
        x0,
        n_steps,
        seeds,
        conf,
        gradient=gradient,
        projection=t.domain.project,
        barrier=b if sid in ("mlaa", "mlam", "smlaa", "smlam") else None,
        dual_gradient=dual_grad,
        domain=t.domain,
        burn_in=cfg.burn_in_fraction if cfg.protocol == "path" else 0.0,
        record_every=record_every,
    )
    n_rec = res.samples.shape[0]
    skip = int(math.floor(cfg.burn_in_fraction * n_rec)) if cfg.protocol == "path" else 0
    out = []
    for k, (i, s) in enumerate(zip(indices, seeds)):
        x = res.samples[skip:, k, :]
        stats = {"gradient_evaluations": res.gradient_evaluations, "steps": n_steps, "step_size": step}
        out.append(ReplicateOutcome(i, s, samples=x, costs=res.costs[skip:], stats=stats, outside=int(res.outside[k])))
    return out


def _primal_batches(t: DirichletPosterior, b):
    """Per-batch primal gradients of the Dirichlet posterior with a control variate."""
    K = t.n_batches
    c = K * t.batches + t.alpha - 1.0

    def term(x, j):
        x = np.asarray(x, dtype=float)
        xd = 1.0 - np.sum(x, axis=-1, keepdims=True)
        cj = c[np.asarray(j)]
        return -cj[..., :-1] / x + cj[..., -1:] / xd

    ref = b.inverse(lda_dual_pieces(t, b).mode)
    return SubsampledGradient.from_terms(term, K, ref, math.inf, math.inf)


def _chunks(n: int, workers: int):
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    return [list(range(bounds[i], bounds[i + 1])) for i in range(workers) if bounds[i + 1] > bounds[i]]


def _execute(cfg: ExperimentConfig, threads: int):
    fn = _run_pdmp_chunk if cfg.sampler_id in PDMP_SAMPLERS else _run_sde_chunk
    chunks = _chunks(cfg.replicates, threads)
    if threads <= 1 or len(chunks) == 1:
        parts = [fn(cfg, c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(fn, [cfg] * len(chunks), chunks))
    outcomes = [o for p in parts for o in p]
    outcomes.sort(key=lambda o: o.index)
    return outcomes


def _reference(setup: _Setup, n: int, seed: int):
    t = setup.target
    return np.asarray(t.exact_sample(n, seed), dtype=float)


def run_experiment(config, threads: int = 1, out_dir=None, write: bool = True) -> ExperimentResult:
    """Run every replicate of ``config`` and write the result files.

    Output files (when ``write`` is true and an output directory is known):
    ``manifest.json``, ``metrics.json``, per-replicate ``samples_XXXX.csv``
    (path protocol) or ``final_samples.csv`` (final protocol), optional
    skeleton CSVs with JSON sidecars, histogram CSVs for the final
    protocol and ``running_std_XXXX.csv`` series when requested.
    """
    cfg = load_config(config)
    setup = _Setup(cfg)
    t0 = time.time()
    outcomes = _execute(cfg, threads)
    elapsed = time.time() - t0
    out = Path(out_dir or cfg.output) if (out_dir or cfg.output) else None
    if write and out is not None:
        out.mkdir(parents=True, exist_ok=True)
    metrics = _metrics(setup, outcomes, out if write else None)
    manifest = _manifest(cfg, setup, outcomes, elapsed, threads)
    if write and out is not None:
        _write_outputs(cfg, setup, outcomes, out)
        _dump(out / "metrics.json", metrics)
        _dump(out / "manifest.json", manifest)
    return ExperimentResult(cfg, out, outcomes, metrics, manifest)


def _labels(d):
    return [f"x_{i + 1}" for i in range(d)]


def _write_outputs(cfg, setup, outcomes, out: Path):
    ok = [o for o in outcomes if o.error is None]
    if cfg.protocol == "final":
        if ok:
            finals = np.concatenate([o.samples[-1:] for o in ok])
            write_matrix_csv(out / "final_samples.csv", finals, _labels(finals.shape[1]))
    elif cfg.write_samples:
        for o in ok:
            write_matrix_csv(out / f"samples_{o.index:04d}.csv", o.samples, _labels(o.samples.shape[1]))
    for o in ok:
        if o.skeleton is not None:
            write_skeleton(o.skeleton, out / f"skeleton_{o.index:04d}.csv")


def _histograms(x: np.ndarray, ref: np.ndarray, lo, hi, out: Path, bins: int = 50):
    for i in range(x.shape[1]):
        a = lo[i] if np.isfinite(lo[i]) else min(x[:, i].min(), ref[:, i].min())
        b = hi[i] if np.isfinite(hi[i]) else max(x[:, i].max(), ref[:, i].max())
        span = b - a
        edges = np.linspace(min(a, x[:, i].min()) if np.isfinite(span) else a, max(b, x[:, i].max()), bins + 1)
        h, _ = np.histogram(x[:, i], edges, density=True)
        hr, _ = np.histogram(ref[:, i], edges, density=True)
        rows = np.column_stack([edges[:-1], edges[1:], h, hr])
        write_matrix_csv(out / f"histogram_x_{i + 1}.csv", rows, ["bin_left", "bin_right", "density", "exact_density"])


def _metrics(setup: _Setup, outcomes, out: Path | None) -> dict:
    cfg = setup.cfg
    mcfg = cfg.metrics or {}
    ok = [o for o in outcomes if o.error is None]
    doc = {"replicates": len(outcomes), "failed": len(outcomes) - len(ok)}
    if not ok:
        return doc
    t = setup.target
    want_w1 = bool(mcfg.get("w1", hasattr(t, "exact_sample")))
    copies = int(mcfg.get("noise_floor_copies", 10))
    ref_seed = int(cfg.master_seed) + REFERENCE_SEED_OFFSET
    if cfg.protocol == "final":
        x = np.concatenate([o.samples[-1:] for o in ok])
        doc["outside_fraction"] = float(np.mean(~_inside(setup, x)))
        doc["mean"] = x.mean(axis=0).tolist()
        if want_w1:
            ref = _reference(setup, x.shape[0], ref_seed)
            rep = w1_multivariate_by_marginals(x, ref)
            floor = noise_floor(lambda n, s: _reference(setup, n, s), x.shape[0], copies, ref_seed + 1)
            floors = [noise_floor(lambda n, s: _reference(setup, n, s), x.shape[0], copies, ref_seed + 1, coordinate=i) for i in range(x.shape[1])]
            doc["w1"] = rep.to_dict()
            doc["noise_floor"] = {"total": {"mean": floor.mean, "std": floor.std}, "per_marginal": [{"mean": f.mean, "std": f.std} for f in floors]}
            if out is not None:
                lo, hi = _bounds(setup)
                _histograms(x, ref, lo, hi, out)
        return doc
    # path protocol: per-replicate metrics
    reps = []
    n = min(o.samples.shape[0] for o in ok)
    for o in ok:
        x = o.samples
        entry = {"index": o.index, "seed": o.seed, "n_samples": int(x.shape[0])}
        entry["mean"] = x.mean(axis=0).tolist()
        entry["std"] = x.std(axis=0).tolist()
        if x.shape[0] >= 50:
            entry["mean_se_batch_means"] = batch_means_se(x).tolist()
        entry["outside_fraction"] = float(np.mean(~_inside(setup, x)))
        reps.append(entry)
    if want_w1:
        ref = _reference(setup, n, ref_seed)
        floor = noise_floor(lambda m, s: _reference(setup, m, s), n, copies, ref_seed + 1)
        w1s = []
        for o, entry in zip(ok, reps):
            rep = w1_multivariate_by_marginals(o.samples[:n], ref, floor)
            entry["w1"] = rep.to_dict()
            w1s.append(rep.total_error)
        doc["w1_median"] = float(np.median(w1s))
        doc["noise_floor"] = {"mean": floor.mean, "std": floor.std, "n": n}
    rs = mcfg.get("running_std")
    if rs:
        coord = int(rs.get("coordinate", 0))
        true_std = rs.get("true_std")
        if true_std is None:
            if isinstance(t, DirichletPosterior):
                true_std = t.marginal_std(coord)
            else:
                true_std = float(np.std(_reference(setup, 10**6, ref_seed)[:, coord]))
        grid = np.linspace(0, cfg.budget_value, int(rs.get("checkpoints", 100)) + 1)[1:]
        finals = []
        for o, entry in zip(ok, reps):
            cp, err = running_relative_std_error(o.samples[:, coord], float(true_std), grid, o.costs)
            finals.append(float(err[-1]))
            entry["running_std_final"] = float(err[-1])
            if out is not None:
                write_matrix_csv(out / f"running_std_{o.index:04d}.csv", np.column_stack([cp, err]), ["epoch", "value"])
        doc["running_std"] = {"coordinate": coord, "true_std": float(true_std), "final_median": float(np.median(finals))}
    doc["per_replicate"] = reps
    doc["pooled_mean"] = np.mean([e["mean"] for e in reps], axis=0).tolist()
    if len(reps) > 1:
        doc["pooled_mean_se"] = (np.std([e["mean"] for e in reps], axis=0, ddof=1) / math.sqrt(len(reps))).tolist()
    return doc


def _inside(setup: _Setup, x):
    if setup.is_lda:
        x = x[:, :-1]
    return setup.target.domain.contains(x, closed=True)


def _bounds(setup):
    t = setup.target
    if setup.is_lda:
        d = t.categories
        return np.zeros(d), np.ones(d)
    return t.domain.lower, t.domain.upper


def _manifest(cfg, setup, outcomes, elapsed, threads) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "library": "mirror_pdmp",
        "library_version": __version__,
        "config": cfg.to_dict(),
        "threads": threads,
        "elapsed_seconds": elapsed,
        "constants": None if setup.constants is None else setup.constants.to_dict(),
        "replicates": [],
    }
    if cfg.sampler_id in ("bps", "mbps"):
        doc["refresh_rate"] = setup.refresh_rate()
    if cfg.sampler_id in PDMP_SAMPLERS and cfg.sampler_id != "zzss" and cfg.sampler_id != "mzzss":
        doc["lipschitz"] = setup.lipschitz()
    if cfg.sampler_id not in PDMP_SAMPLERS:
        doc["step_size"] = setup.step_size()
    for o in outcomes:
        entry = {"index": o.index, "seed": o.seed, "status": "ok" if o.error is None else "failed", "stats": o.stats}
        if o.error is not None:
            entry["error"] = o.error
            if o.error_payload is not None:
                entry["error_payload"] = o.error_payload
        doc["replicates"].append(entry)
    return doc


def _target_key(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.target, sort_keys=True, default=str)


def compare(configs, out_dir=None, threads: int = 1) -> list[dict]:
    """Run several configs on one target and tabulate their metrics.

    Rows are sorted by median W1 error (missing values last) and written
    to ``comparison.csv`` and ``comparison.json`` when ``out_dir`` is given.
    """
    cfgs = [load_config(c) for c in configs]
    if not cfgs:
        raise ValueError("compare needs at least one config")
    keys = {_target_key(c) for c in cfgs}
    if len(keys) > 1:
        raise MismatchedTargetsError("all configs must share a target")
    rows = []
    for c in cfgs:
        sub = None
        if out_dir is not None:
            sub = Path(out_dir) / c.name
        res = run_experiment(c, threads=threads, out_dir=sub, write=sub is not None)
        m = res.metrics
        evals = [o.stats.get("gradient_evaluations", math.nan) for o in res.outcomes if o.error is None]
        row = {
            "name": c.name,
            "sampler": c.sampler_id,
            "gradient_evaluations": float(np.mean(evals)) if evals else math.nan,
            "w1_median": m.get("w1_median", (m.get("w1") or {}).get("total_error", math.nan)),
            "noise_floor": (m.get("noise_floor") or {}).get("mean", (m.get("noise_floor") or {}).get("total", {}).get("mean", math.nan)),
            "failed": m.get("failed", 0),
        }
        mean = m.get("pooled_mean", m.get("mean"))
        if mean is not None:
            for i, v in enumerate(mean):
                row[f"mean_x_{i + 1}"] = v
        rows.append(row)
    rows.sort(key=lambda r: (math.isnan(r["w1_median"]), r["w1_median"]))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cols = []
        for r in rows:
            cols += [k for k in r if k not in cols]
        with open(out / "comparison.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for r in rows:
                w.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})
        _dump(out / "comparison.json", rows)
    return rows
