"""Experiment targets: potentials, constraint sets, exact samplers and constants."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .barriers import (
    Barrier,
    BoxBarrier,
    Domain,
    EntropicQuadraticBarrier,
    IdentityBarrier,
    PreconditionedBarrier,
    SeparableBarrier,
    SimplexEntropyBarrier,
)
from .samplers import SubsampledGradient

__all__ = [
    "RejectionAbortError",
    "GaussianTarget",
    "GaussianMeanPosterior",
    "TruncatedGaussian",
    "GammaProduct",
    "DirichletPosterior",
    "LDADualPieces",
    "Constants",
    "spectral_norm",
    "lda_dataset",
    "lda_dual_pieces",
    "constants",
    "separable_dual_lipschitz",
    "LDA_PROBABILITIES",
]

LDA_PROBABILITIES = (0.2401, 0.2669, 0.0374, 0.2692, 0.1864)
MIN_ACCEPTANCE = 1e-6


class RejectionAbortError(RuntimeError):
    """Rejection sampling would accept too rarely to be useful."""


def spectral_norm(matrix, tol: float = 1e-10, maxiter: int = 100_000) -> float:
    """Largest singular value by power iteration on ``A^T A``."""
    a = np.asarray(matrix, dtype=float)
    ata = a.T @ a
    v = np.ones(a.shape[1]) / math.sqrt(a.shape[1])
    # a deterministic but generic start avoids orthogonality to the top vector
    v = v + 1e-3 * np.sin(np.arange(1, a.shape[1] + 1))
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxiter):
        w = ata @ v
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    return math.sqrt(lam)


class _Target:
    dim: int
    domain: Domain

    def potential(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def potential_and_gradient(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(self.domain.contains(x)):
            raise ValueError("point outside the target domain")
        return self.potential(x), self.gradient(x)

    def contains(self, x):
        return self.domain.contains(x)

    def to_output(self, x):
        return np.asarray(x)

    def center(self) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianTarget(_Target):
    """Centred Gaussian ``U(x) = x^T P x / 2`` on the whole space."""

    precision: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.precision, dtype=float))
        object.__setattr__(self, "precision", p)
        object.__setattr__(self, "dim", p.shape[0])
        object.__setattr__(self, "domain", Domain.euclidean(p.shape[0]))

    @classmethod
    def standard(cls, dim: int) -> "GaussianTarget":
        return cls(np.eye(dim))

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum((x @ self.precision) * x, axis=-1)

    def gradient(self, x):
        return np.asarray(x, dtype=float) @ self.precision

    def center(self):
        return np.zeros(self.dim)

    def exact_sample(self, n: int, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        cov = np.linalg.inv(self.precision)
        return rng.multivariate_normal(np.zeros(self.dim), cov, size=n)

    def gradient_lipschitz(self) -> float:
        return spectral_norm(self.precision)


@dataclass(frozen=True)
class GaussianMeanPosterior(_Target):
    """``U(x) = (1/K) sum_j ||x - y_j||^2 / 2``, a sum of unit-curvature terms.

    The target is ``N(mean(y), I)``. Each term gradient ``x - y_j`` is
    1-Lipschitz coordinatewise in any norm, which makes this the smallest
    useful test bed for subsampled samplers.
    """

    data: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.data, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        object.__setattr__(self, "data", y)
        object.__setattr__(self, "dim", y.shape[1])
        object.__setattr__(self, "domain", Domain.euclidean(y.shape[1]))

    @property
    def n_terms(self) -> int:
        return self.data.shape[0]

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        diff = x[..., None, :] - self.data
        return 0.5 * np.mean(np.sum(diff * diff, axis=-1), axis=-1)

    def gradient(self, x):
        return np.asarray(x, dtype=float) - self.data.mean(axis=0)

    def term_gradient(self, x, j):
        return np.asarray(x, dtype=float) - self.data[np.asarray(j)]

    def center(self):
        return self.data.mean(axis=0)

    def gradient_lipschitz(self) -> float:
        return 1.0

    def subsampled_gradient(self, reference=None, norm_order=np.inf) -> SubsampledGradient:
        ref = self.center() if reference is None else np.asarray(reference, dtype=float)
        return SubsampledGradient.from_terms(self.term_gradient, self.n_terms, ref, 1.0, norm_order)

    def exact_sample(self, n: int, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.center() + rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class TruncatedGaussian(_Target):
    """Centred Gaussian with precision ``P`` restricted to an open box."""

    precision: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.precision, dtype=float))
        if p.shape[0] != p.shape[1] or np.any(np.abs(p - p.T) > 1e-12 * np.abs(p).max()):
            raise ValueError("precision must be a symmetric matrix")
        if np.linalg.eigvalsh(p).min() <= 0:
            raise ValueError("precision must be positive definite")
        dom = Domain.box(np.broadcast_to(self.lower, p.shape[0]), np.broadcast_to(self.upper, p.shape[0]))
        if not (np.all(np.isfinite(dom.lower)) and np.all(np.isfinite(dom.upper))):
            raise ValueError("truncation box must be bounded")
        object.__setattr__(self, "precision", p)
        object.__setattr__(self, "lower", dom.lower)
        object.__setattr__(self, "upper", dom.upper)
        object.__setattr__(self, "dim", p.shape[0])
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "_diag", bool(np.all(p == np.diag(np.diag(p)))))

    @classmethod
    def from_covariance(cls, covariance, lower, upper) -> "TruncatedGaussian":
        p = np.linalg.inv(np.asarray(covariance, dtype=float))
        return cls(0.5 * (p + p.T), lower, upper)

    @classmethod
    def anisotropic_2d(cls) -> "TruncatedGaussian":
        """``Sigma = diag(1, 0.01)`` on ``[-1, 1]^2``."""
        return cls(np.diag([1.0, 100.0]), -np.ones(2), np.ones(2))

    @classmethod
    def correlated_box(cls, dim: int = 10) -> "TruncatedGaussian":
        """``Sigma_ij = 1 / (1 + |i - j|)`` on ``(0, 5) x (0, 0.5)^(d-1)``."""
        i = np.arange(dim)
        cov = 1.0 / (1.0 + np.abs(i[:, None] - i[None, :]))
        lower = np.zeros(dim)
        upper = np.full(dim, 0.5)
        upper[0] = 5.0
        return cls.from_covariance(cov, lower, upper)

    @property
    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.precision)

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        if self._diag:
            return 0.5 * np.sum(np.diag(self.precision) * x * x, axis=-1)
        return 0.5 * np.sum((x @ self.precision) * x, axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self._diag:
            return x * np.diag(self.precision)
        return x @ self.precision

    def center(self):
        return 0.5 * (self.lower + self.upper)

    def gradient_lipschitz(self) -> float:
        return spectral_norm(self.precision)

    def _envelope(self):
        """Diagonal precision ``Q = c diag(P)`` with ``P - Q`` positive semidefinite."""
        dg = np.diag(self.precision)
        if self._diag:
            return dg
        s = 1.0 / np.sqrt(dg)
        c = np.linalg.eigvalsh(self.precision * s[:, None] * s[None, :]).min()
        return c * dg * (1.0 - 1e-12)

    def exact_sample(self, n: int, seed=None, method: str = "envelope", chunk: int = 200_000) -> np.ndarray:
        """Independent draws by rejection sampling.

        ``method="envelope"`` proposes from independent one-dimensional
        truncated normals with precisions ``Q = c diag(P)``, chosen so that
        ``P - Q`` is positive semidefinite, and accepts with probability
        ``exp(-x^T (P - Q) x / 2)``. ``method="gaussian"`` proposes from the
        unconstrained Gaussian and keeps the points inside the box. Either
        way, an estimated acceptance below ``1e-6`` aborts.
        """
        rng = np.random.default_rng(seed)
        out = []
        have = 0
        tried = 0
        if method == "gaussian":
            chol = np.linalg.cholesky(self.covariance)
        elif method == "envelope":
            q = self._envelope()
            sd = 1.0 / np.sqrt(q)
            lo, hi = self.lower / sd, self.upper / sd
            resid = self.precision - np.diag(q)
        else:
            raise ValueError(f"unknown method {method!r}")
        while have < n:
            if method == "gaussian":
                x = rng.standard_normal((chunk, self.dim)) @ chol.T
                keep = self.domain.contains(x)
            else:
                x = stats.truncnorm.rvs(lo, hi, size=(chunk, self.dim), random_state=rng) * sd
                logw = -0.5 * np.sum((x @ resid) * x, axis=1)
                keep = rng.random(chunk) < np.exp(np.minimum(logw, 0.0))
            tried += chunk
            out.append(x[keep])
            have += int(keep.sum())
            if tried >= 10 * chunk or have >= n:
                rate = have / tried
                if rate < MIN_ACCEPTANCE:
                    raise RejectionAbortError(
                        f"rejection acceptance {rate:.3g} is below {MIN_ACCEPTANCE:g}; "
                        "the box carries almost no Gaussian mass"
                    )
        return np.concatenate(out)[:n]

    def boundary_mass(self, coordinate: int, width: float) -> float:
        """Exact mass within ``width`` of either face in one coordinate (diagonal P only)."""
        if not self._diag:
            raise NotImplementedError("closed form needs a diagonal precision")
        sd = 1.0 / math.sqrt(self.precision[coordinate, coordinate])
        a, b = self.lower[coordinate], self.upper[coordinate]
        cdf = lambda t: stats.norm.cdf(t / sd)
        tot = cdf(b) - cdf(a)
        return float((cdf(a + width) - cdf(a) + cdf(b) - cdf(b - width)) / tot)


@dataclass(frozen=True)
class GammaProduct(_Target):
    """Independent Gamma(shape alpha_i, rate beta_i) coordinates."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a, b = np.broadcast_arrays(np.atleast_1d(np.asarray(self.alpha, float)), np.atleast_1d(np.asarray(self.beta, float)))
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValueError("shape and rate must be positive")
        object.__setattr__(self, "alpha", a.copy())
        object.__setattr__(self, "beta", b.copy())
        object.__setattr__(self, "dim", a.size)
        object.__setattr__(self, "domain", Domain.box(np.zeros(a.size), np.full(a.size, np.inf)))

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(self.beta * x - (self.alpha - 1.0) * np.log(x), axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return self.beta - (self.alpha - 1.0) / x

    def center(self):
        return self.alpha / self.beta

    def exact_sample(self, n: int, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.gamma(self.alpha, 1.0 / self.beta, size=(n, self.dim))


@dataclass(frozen=True)
class DirichletPosterior(_Target):
    """Dirichlet(counts + alpha) posterior written in the first ``d - 1`` coordinates.

    Attributes:
        counts: category counts ``n_i`` (length d).
        alpha: prior concentrations (length d).
        batches: ``(K, d)`` per-batch counts summing to ``counts``.
    """

    counts: np.ndarray
    alpha: np.ndarray
    batches: np.ndarray | None = None

    def __post_init__(self):
        n = np.asarray(self.counts, dtype=float)
        a = np.broadcast_to(np.asarray(self.alpha, dtype=float), n.shape).copy()
        if np.any(n < 0) or np.any(a <= 0):
            raise ValueError("counts must be nonnegative and alpha positive")
        m = np.asarray(self.batches if self.batches is not None else n[None], dtype=float)
        if m.ndim != 2 or m.shape[1] != n.size or np.any(np.abs(m.sum(axis=0) - n) > 0):
            raise ValueError("batches must partition the counts")
        if np.ptp(m.sum(axis=1)) > 0:
            raise ValueError("batches must have equal size")
        object.__setattr__(self, "counts", n)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "batches", m)
        object.__setattr__(self, "dim", n.size - 1)
        object.__setattr__(self, "domain", Domain.simplex(n.size - 1))

    @property
    def categories(self) -> int:
        return self.counts.size

    @property
    def n_batches(self) -> int:
        return self.batches.shape[0]

    @property
    def concentration(self) -> np.ndarray:
        return self.counts + self.alpha

    @property
    def total(self) -> float:
        """``N_d + Gamma_d``."""
        return float(self.counts.sum() + self.alpha.sum())

    def _full(self, x):
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, 1.0 - np.sum(x, axis=-1, keepdims=True)], axis=-1)

    def to_output(self, x):
        return self._full(x)

    def potential(self, x):
        return -np.sum((self.concentration - 1.0) * np.log(self._full(x)), axis=-1)

    def gradient(self, x):
        full = self._full(x)
        c = self.concentration - 1.0
        return -c[:-1] / full[..., :-1] + c[-1] / full[..., -1:]

    def center(self):
        return np.full(self.dim, 1.0 / self.categories)

    def exact_sample(self, n: int, seed=None) -> np.ndarray:
        """Full d-coordinate draws from Dirichlet(counts + alpha)."""
        rng = np.random.default_rng(seed)
        g = rng.standard_gamma(self.concentration, size=(n, self.categories))
        return g / g.sum(axis=1, keepdims=True)

    def marginal_std(self, i: int = 0) -> float:
        a = self.concentration
        a0 = a.sum()
        return math.sqrt(a[i] * (a0 - a[i]) / (a0 * a0 * (a0 + 1.0)))

    def to_json(self, path=None, p=None) -> str:
        doc = {
            "p": None if p is None else list(map(float, p)),
            "n": self.counts.astype(int).tolist(),
            "alpha": self.alpha.tolist(),
            "batches": self.batches.astype(int).tolist(),
        }
        text = json.dumps(doc, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source, alpha=None) -> "DirichletPosterior":
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") else str(source)
        doc = json.loads(text)
        a = alpha if alpha is not None else doc.get("alpha", 0.1)
        return cls(np.asarray(doc["n"], float), a, np.asarray(doc["batches"], float))


def lda_dataset(p=LDA_PROBABILITIES, n_draws: int = 10_000, n_batches: int = 50, seed=0, alpha=0.1) -> DirichletPosterior:
    """Multinomial data split into equal batches, wrapped as a Dirichlet posterior.

    The draws are generated one by one so that each batch holds the counts
    of a contiguous block of observations.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must be a probability vector")
    if n_draws % n_batches:
        raise ValueError(f"{n_batches} batches do not divide {n_draws} draws")
    rng = np.random.default_rng(seed)
    labels = rng.choice(p.size, size=n_draws, p=p / p.sum())
    per = labels.reshape(n_batches, -1)
    batches = np.stack([np.bincount(b, minlength=p.size) for b in per]).astype(float)
    return DirichletPosterior(batches.sum(axis=0), alpha, batches)


@dataclass(frozen=True)
class LDADualPieces:
    """Closed-form dual quantities for a Dirichlet posterior under the entropy barrier.

    With ``a = n + alpha`` and ``A = sum(a)`` the dual potential is
    ``V(z) = -a_{<d} . z + A log(1 + sum exp z)``; the batch pieces replace
    ``n`` by ``K m^j``.
    """

    posterior: DirichletPosterior
    barrier: SimplexEntropyBarrier
    mode: np.ndarray
    lipschitz: float

    def potential(self, z):
        a = self.posterior.concentration
        return -np.asarray(z) @ a[:-1] + self.posterior.total * self.barrier.conjugate(z)

    def gradient(self, z):
        a = self.posterior.concentration
        return -a[:-1] + self.posterior.total * self.barrier.inverse(z)

    def _term_offsets(self):
        post = self.posterior
        return (post.n_batches * post.batches + post.alpha)[:, :-1]

    def term_potential(self, z, j):
        off = self._term_offsets()[j]
        return -np.sum(np.asarray(z) * off, axis=-1) + self.posterior.total * self.barrier.conjugate(z)

    def term_gradient(self, z, j):
        return -self._term_offsets()[np.asarray(j)] + self.posterior.total * self.barrier.inverse(z)

    def subsampled_gradient(self, control_variate: bool = True) -> SubsampledGradient:
        """Single-batch dual gradient estimator anchored at the dual mode.

        Without the control variate the estimator is the plain batch
        gradient ``grad V^J``.
        """
        K = self.posterior.n_batches
        if control_variate:
            return SubsampledGradient.from_terms(self.term_gradient, K, self.mode, self.lipschitz, np.inf)
        d = self.mode.size
        zero = np.zeros((K, d))
        return SubsampledGradient(self.term_gradient, K, self.mode, np.zeros(d), zero, self.lipschitz, np.inf)


def lda_dual_pieces(posterior: DirichletPosterior, barrier: SimplexEntropyBarrier | None = None) -> LDADualPieces:
    barrier = barrier or SimplexEntropyBarrier(posterior.categories)
    if barrier.categories != posterior.categories:
        raise ValueError("barrier and posterior disagree on the number of categories")
    a = posterior.concentration
    mode = np.log(a[:-1]) - np.log(a[-1])
    return LDADualPieces(posterior, barrier, mode, posterior.total)


@dataclass
class Constants:
    """Smoothness constants and the step sizes derived from them.

    ``None`` marks a constant that does not exist for the pair.
    """

    L: float | None
    L_V: float | None
    L_V_S: float | None = None
    L_V_L: float | None = None
    M_psi: float | None = None
    notes: dict = field(default_factory=dict)

    @property
    def step_mlaa(self) -> float | None:
        return None if not self.L_V else 1.0 / self.L_V

    @property
    def step_mlam(self) -> float | None:
        if self.L_V_S is None or self.L_V_L is None or self.M_psi is None:
            return None
        return 1.0 / (self.L_V_S + 2.0 * self.M_psi * self.L_V_L)

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "L_V": self.L_V,
            "L_V_S": self.L_V_S,
            "L_V_L": self.L_V_L,
            "M_psi": self.M_psi,
            "step_mlaa": self.step_mlaa,
            "step_mlam": self.step_mlam,
            "notes": dict(self.notes),
        }


def _dual_curvature_terms(barrier: SeparableBarrier, x):
    """``g'``, ``g''`` and ``q''`` of the inverse map at primal points ``x``.

    Here ``g`` is the coordinate inverse map and ``q = log psi''`` viewed as a
    function of the dual coordinate, so that for a quadratic potential the
    dual Hessian is ``G P G + diag(g'' (P x) + q'')``.
    """
    h2, h3, h4 = barrier.d2(x), barrier.d3(x), barrier.d4(x)
    g1 = 1.0 / h2
    g2 = -h3 / h2**3
    q2 = h4 / h2**3 - 2.0 * h3 * h3 / h2**4
    return g1, g2, q2


def _dual_grid(barrier: SeparableBarrier, n: int = 20_001) -> np.ndarray:
    """Primal grid per coordinate, dense near the faces, shape ``(n, d)``."""
    s = np.concatenate([-np.logspace(8, -6, n // 2), [0.0], np.logspace(-6, 8, n // 2)])
    z = np.broadcast_to(s[:, None], (s.size, barrier.dim))
    return barrier.inverse(z)


def separable_dual_lipschitz(barrier: SeparableBarrier, target: TruncatedGaussian, safety: float = 1.01) -> float:
    """Upper bound on the spectral norm of the dual Hessian for a truncated Gaussian.

    Splits the Hessian into ``G P G`` and a diagonal remainder. The first
    part is bounded by the Perron root of ``Gmax |P| Gmax``; the second by a
    grid maximum over each coordinate with the off-diagonal contribution to
    ``(P x)_i`` ranging over its interval on the box. A diagonal ``P`` is
    handled exactly coordinate by coordinate. ``safety`` inflates the grid
    maximum.
    """
    P = target.precision
    x = _dual_grid(barrier)
    g1, g2, q2 = _dual_curvature_terms(barrier, x)
    if target._diag:
        p = np.diag(P)
        h = g1 * g1 * p + g2 * p * x + q2
        return safety * float(np.max(np.abs(h)))
    gmax = np.max(g1, axis=0)
    absP = np.abs(P)
    first = float(np.linalg.eigvalsh(gmax[:, None] * absP * gmax[None, :]).max())
    off = P - np.diag(np.diag(P))
    lo = np.sum(np.minimum(off * target.lower, off * target.upper), axis=1)
    hi = np.sum(np.maximum(off * target.lower, off * target.upper), axis=1)
    px = np.diag(P) * x
    second = np.maximum(np.abs(g2 * (px + lo) + q2), np.abs(g2 * (px + hi) + q2))
    return safety * (first + float(np.max(second)))


def _relative_constants(barrier: SeparableBarrier, target: TruncatedGaussian):
    """Relative smoothness and relative Lipschitz constants on a grid (diagonal P)."""
    if not target._diag:
        raise NotImplementedError("grid constants need a diagonal precision")
    p = np.diag(target.precision)
    x = _dual_grid(barrier)
    h2 = barrier.d2(x)
    smooth = float(np.max(p / h2))
    lip = math.sqrt(float(np.sum(np.max((p * x) ** 2 / h2, axis=0))))
    return smooth, lip


def constants(target, barrier: Barrier) -> Constants:
    """Constants for the supported (target, barrier) pairs."""
    if isinstance(barrier, IdentityBarrier):
        if isinstance(target, (GaussianTarget, GaussianMeanPosterior)):
            L = target.gradient_lipschitz()
            return Constants(L=L, L_V=L, L_V_S=L, L_V_L=None, M_psi=0.0)
        raise ValueError("the identity barrier only suits unconstrained targets")

    if isinstance(target, GammaProduct) and isinstance(barrier, EntropicQuadraticBarrier):
        a, b = target.alpha, target.beta
        L_V = 0.25 + float(np.max(a / 10.0 + b / 4.0))
        L_L = math.sqrt(float(np.sum(np.maximum(b * b, (a - 1.0) ** 2))))
        L_S = max(float(np.max(a - 1.0)), 0.0)
        return Constants(L=None, L_V=L_V, L_V_S=L_S, L_V_L=L_L, M_psi=1.0)

    if isinstance(target, TruncatedGaussian) and type(barrier) is BoxBarrier:
        if not (np.allclose(barrier.lower, target.lower) and np.allclose(barrier.upper, target.upper)):
            raise ValueError("barrier box differs from the target box")
        pn = target.gradient_lipschitz()
        w = target.upper - target.lower
        s = target.upper + target.lower
        L_L = pn * math.sqrt(target.dim) * math.sqrt(float(np.max(w * w * s * s)) / 32.0)
        L_S = pn * float(np.max(w)) ** 2 / 8.0
        L_V = separable_dual_lipschitz(barrier, target)
        return Constants(L=pn, L_V=L_V, L_V_S=L_S, L_V_L=L_L, M_psi=1.0, notes={"L_V": "grid bound"})

    if isinstance(target, TruncatedGaussian) and isinstance(barrier, (PreconditionedBarrier, BoxBarrier)):
        L_V = separable_dual_lipschitz(barrier, target)
        L_S, L_L = _relative_constants(barrier, target)
        # each log term carries weight w; self-concordance of -w log(u) is 1/sqrt(w)
        weight = 0.25 if isinstance(barrier, PreconditionedBarrier) else barrier.scale
        return Constants(
            L=target.gradient_lipschitz(),
            L_V=L_V,
            L_V_S=L_S,
            L_V_L=L_L,
            M_psi=1.0 / math.sqrt(weight),
            notes={"L_V": "grid bound", "L_V_S": "grid bound", "L_V_L": "grid bound"},
        )

    if isinstance(target, DirichletPosterior) and isinstance(barrier, SimplexEntropyBarrier):
        return Constants(L=None, L_V=target.total, L_V_S=None, L_V_L=None, M_psi=None)

    raise ValueError(f"no constants for {type(target).__name__} with {type(barrier).__name__}")
