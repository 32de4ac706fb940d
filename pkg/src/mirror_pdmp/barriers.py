"""Convex barriers (mirror maps) with forward and inverse gradient maps.

Every barrier works on batched inputs whose last axis is the coordinate
axis. Separable barriers are described by the first four derivatives of a
scalar function per coordinate; the simplex entropy is handled separately
because its Hessian is dense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NewtonDivergenceError",
    "Domain",
    "Barrier",
    "SeparableBarrier",
    "IdentityBarrier",
    "BoxBarrier",
    "HypercubeBarrier",
    "PreconditionedBarrier",
    "EntropicQuadraticBarrier",
    "SimplexEntropyBarrier",
    "project_simplex",
]

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 200


class NewtonDivergenceError(RuntimeError):
    """Inverse map failed to converge even with the bisection safeguard."""


@dataclass(frozen=True)
class Domain:
    """Open constraint set: a box (possibly unbounded) or the solid simplex.

    The simplex is written in its first ``d - 1`` coordinates,
    ``{x_i > 0, sum_i x_i < 1}``.
    """

    kind: str
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    @classmethod
    def box(cls, lower, upper) -> "Domain":
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo >= hi):
            raise ValueError("box needs lower < upper in every coordinate")
        return cls("box", lo.copy(), hi.copy())

    @classmethod
    def euclidean(cls, dim: int) -> "Domain":
        return cls.box(np.full(dim, -np.inf), np.full(dim, np.inf))

    @classmethod
    def simplex(cls, dim: int) -> "Domain":
        return cls("simplex", np.zeros(dim), None)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x, closed: bool = False) -> np.ndarray:
        """Interior test (closure test with ``closed``), batched over leading axes."""
        x = np.asarray(x, dtype=float)
        if closed:
            if self.kind == "box":
                return np.all((x >= self.lower) & (x <= self.upper), axis=-1)
            return np.all(x >= 0, axis=-1) & (np.sum(x, axis=-1) <= 1.0)
        if self.kind == "box":
            return np.all((x > self.lower) & (x < self.upper), axis=-1)
        return np.all(x > 0, axis=-1) & (np.sum(x, axis=-1) < 1.0)

    def project(self, x) -> np.ndarray:
        """Euclidean projection onto the closed set."""
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return np.clip(x, self.lower, self.upper)
        y = np.maximum(x, 0.0)
        over = np.sum(y, axis=-1) > 1.0
        if np.any(over):
            y = np.where(over[..., None], project_simplex(x), y)
        return y

    def boundary_distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return np.min(np.minimum(x - self.lower, self.upper - x), axis=-1)
        slack = (1.0 - np.sum(x, axis=-1)) / math.sqrt(x.shape[-1])
        return np.minimum(np.min(x, axis=-1), slack)


def project_simplex(x, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{y >= 0, sum y = radius}`` by sort and threshold."""
    x = np.asarray(x, dtype=float)
    u = -np.sort(-x, axis=-1)
    css = np.cumsum(u, axis=-1) - radius
    k = np.arange(1, x.shape[-1] + 1)
    cond = u - css / k > 0
    rho = x.shape[-1] - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1)
    return np.maximum(x - theta, 0.0)


class Barrier:
    """Interface shared by all mirror maps.

    Subclasses provide ``value``, ``forward`` (the gradient of psi),
    ``inverse`` (the gradient of the conjugate), Hessians, and the log
    determinant of the conjugate Hessian together with its gradient.
    """

    dim: int
    domain: Domain
    name: str = "barrier"
    separable: bool = True

    def value(self, x):
        raise NotImplementedError

    def forward(self, x):
        raise NotImplementedError

    def inverse(self, z):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def conjugate_hessian(self, z):
        raise NotImplementedError

    def log_det_conjugate_hessian(self, z):
        raise NotImplementedError

    def grad_log_det_conjugate_hessian(self, z):
        raise NotImplementedError

    def conjugate_hessian_matvec(self, z, g):
        """``hess psi*(z) @ g`` row by row."""
        raise NotImplementedError

    def diffusion_matvec(self, z, xi):
        """``[hess psi*(z)]^(-1/2) @ xi`` row by row."""
        raise NotImplementedError

    def contains(self, x):
        return self.domain.contains(x)

    def to_output(self, x):
        """Representation used for reported samples."""
        return np.asarray(x)

    def pullback(self, z, potential, gradient):
        """Dual potential ``U(x) - log det hess psi*(z)`` and its gradient at ``z``."""
        x = self.inverse(z)
        val = potential(x) - self.log_det_conjugate_hessian(z)
        grad = self.conjugate_hessian_matvec(z, gradient(x)) - self.grad_log_det_conjugate_hessian(z)
        return val, grad


class SeparableBarrier(Barrier):
    """``psi(x) = sum_i phi_i(x_i)`` with analytic derivatives of ``phi``.

    Subclasses implement ``d1`` .. ``d4`` (first to fourth derivative) and
    ``_phi``. The conjugate quantities come from
    ``hess psi*(z) = 1 / phi''(x)`` and
    ``d/dz_i log det hess psi*(z) = -phi'''(x_i) / phi''(x_i)^2``.
    """

    def _phi(self, x):
        raise NotImplementedError

    def d1(self, x):
        raise NotImplementedError

    def d2(self, x):
        raise NotImplementedError

    def d3(self, x):
        raise NotImplementedError

    def d4(self, x):
        raise NotImplementedError

    def value(self, x):
        return np.sum(self._phi(np.asarray(x, dtype=float)), axis=-1)

    def forward(self, x):
        return self.d1(np.asarray(x, dtype=float))

    def hessian(self, x):
        h = self.d2(np.asarray(x, dtype=float))
        return h[..., :, None] * np.eye(self.dim)

    def _inverse_parts(self, z):
        """Primal point and ``phi''``, ``phi'''`` at it."""
        x = self.inverse(z)
        return x, self.d2(x), self.d3(x)

    def conjugate_hessian_diag(self, z):
        _, h, _ = self._inverse_parts(np.asarray(z, dtype=float))
        return 1.0 / h

    def conjugate_hessian(self, z):
        return self.conjugate_hessian_diag(z)[..., :, None] * np.eye(self.dim)

    def log_det_conjugate_hessian(self, z):
        _, h, _ = self._inverse_parts(np.asarray(z, dtype=float))
        return -np.sum(np.log(h), axis=-1)

    def grad_log_det_conjugate_hessian(self, z):
        _, h, h3 = self._inverse_parts(np.asarray(z, dtype=float))
        return -h3 / (h * h)

    def conjugate_hessian_matvec(self, z, g):
        return np.asarray(g) * self.conjugate_hessian_diag(z)

    def diffusion_matvec(self, z, xi):
        _, h, _ = self._inverse_parts(np.asarray(z, dtype=float))
        if np.any(~(h > 0)):
            raise FloatingPointError("barrier Hessian is not positive definite")
        return np.sqrt(h) * xi

    def pullback(self, z, potential, gradient):
        z = np.asarray(z, dtype=float)
        x, h, h3 = self._inverse_parts(z)
        val = potential(x) + np.sum(np.log(h), axis=-1)
        grad = gradient(x) / h + h3 / (h * h)
        return val, grad

    def dual_gradient(self, z, gradient):
        """Gradient of the dual potential; skips the potential value."""
        x, h, h3 = self._inverse_parts(np.asarray(z, dtype=float))
        return gradient(x) / h + h3 / (h * h)


class IdentityBarrier(SeparableBarrier):
    """``psi(x) = ||x||^2 / 2`` on the whole space; the dual equals the primal."""

    name = "identity"

    def __init__(self, dim: int):
        self.dim = int(dim)
        self.domain = Domain.euclidean(self.dim)

    def _phi(self, x):
        return 0.5 * x * x

    def d1(self, x):
        return np.asarray(x, dtype=float).copy()

    def d2(self, x):
        return np.ones_like(x, dtype=float)

    def d3(self, x):
        return np.zeros_like(x, dtype=float)

    def d4(self, x):
        return np.zeros_like(x, dtype=float)

    def inverse(self, z):
        return np.asarray(z, dtype=float).copy()

    def dual_gradient(self, z, gradient):
        return np.asarray(gradient(np.asarray(z, dtype=float)), dtype=float)

    def pullback(self, z, potential, gradient):
        z = np.asarray(z, dtype=float)
        return potential(z), np.asarray(gradient(z), dtype=float)


class BoxBarrier(SeparableBarrier):
    """Log barrier ``-c sum_i [log(x_i - a_i) + log(b_i - x_i)]`` on a box.

    The inverse map is the root of a quadratic, evaluated through the two
    boundary gaps ``u = x - a`` and ``r = b - x`` so that points close to
    either face keep full relative precision.
    """

    name = "box"

    def __init__(self, lower, upper, scale: float = 1.0):
        self.domain = Domain.box(lower, upper)
        self.lower, self.upper = self.domain.lower, self.domain.upper
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("box barrier needs finite bounds")
        self.dim = self.lower.size
        self.width = self.upper - self.lower
        self.scale = float(scale)

    def _gaps(self, x):
        return x - self.lower, self.upper - x

    def _phi(self, x):
        u, r = self._gaps(x)
        return -self.scale * (np.log(u) + np.log(r))

    def d1(self, x):
        u, r = self._gaps(x)
        return self.scale * (1.0 / r - 1.0 / u)

    def d2(self, x):
        u, r = self._gaps(x)
        return self.scale * (1.0 / (u * u) + 1.0 / (r * r))

    def d3(self, x):
        u, r = self._gaps(x)
        return self.scale * 2.0 * (1.0 / r**3 - 1.0 / u**3)

    def d4(self, x):
        u, r = self._gaps(x)
        return self.scale * 6.0 * (1.0 / u**4 + 1.0 / r**4)

    def inverse_gaps(self, z):
        """Distances ``(x - a, b - x)`` of ``x = inverse(z)`` to the two faces.

        Solves ``c (1/r - 1/u) = z`` with ``u + r = w``; writing
        ``s = sqrt(4 + (z w / c)^2)`` gives ``u = 2w / (s - zw/c + 2)`` and
        ``r = 2w / (s + zw/c + 2)``. Only the smaller gap is taken from
        that formula (the other denominator cancels); the larger one is
        ``w`` minus it.
        """
        y = np.asarray(z, dtype=float) * self.width / self.scale
        s = np.sqrt(4.0 + y * y)
        small = 2.0 * self.width / (s + np.abs(y) + 2.0)
        big = self.width - small
        u = np.where(y < 0, small, big)
        r = np.where(y < 0, big, small)
        return u, r

    def inverse(self, z):
        u, r = self.inverse_gaps(z)
        z = np.asarray(z, dtype=float)
        return np.where(z <= 0, self.lower + u, self.upper - r)

    def _inverse_parts(self, z):
        z = np.asarray(z, dtype=float)
        u, r = self.inverse_gaps(z)
        x = np.where(z <= 0, self.lower + u, self.upper - r)
        c = self.scale
        h = c * (1.0 / (u * u) + 1.0 / (r * r))
        h3 = c * 2.0 * (1.0 / r**3 - 1.0 / u**3)
        return x, h, h3


class HypercubeBarrier(BoxBarrier):
    """``-(1/2) sum_i [log(1 + x_i) + log(1 - x_i)]`` on ``(-1, 1)^d``."""

    name = "hypercube"

    def __init__(self, dim: int):
        super().__init__(-np.ones(dim), np.ones(dim), scale=0.5)


class PreconditionedBarrier(SeparableBarrier):
    """Hypercube barrier plus a diagonal quadratic: ``psi_1 / 2 + x^T A x / 4``.

    With ``power=1`` the matrix is ``A = Sigma^{-1}``, with ``power=0.5`` it
    is ``Sigma^{-1/2}``. Only diagonal ``Sigma`` is supported because the
    inverse map is computed coordinate by coordinate with a safeguarded
    Newton iteration.

    Args:
        covariance: diagonal covariance as a vector, or a diagonal matrix.
        power: exponent applied to the precision.
    """

    name = "preconditioned"

    def __init__(self, covariance, power: float = 1.0):
        cov = np.asarray(covariance, dtype=float)
        if cov.ndim == 2:
            if np.any(np.abs(cov - np.diag(np.diag(cov))) > 0):
                raise ValueError("preconditioned barrier requires a diagonal covariance")
            cov = np.diag(cov)
        if np.any(cov <= 0):
            raise ValueError("covariance entries must be positive")
        self.dim = cov.size
        self.power = float(power)
        self.weights = cov ** (-self.power)
        self.domain = Domain.box(-np.ones(self.dim), np.ones(self.dim))
        self._cube = HypercubeBarrier(self.dim)

    def _phi(self, x):
        return 0.5 * self._cube._phi(x) + 0.25 * self.weights * x * x

    def d1(self, x):
        return 0.5 * self._cube.d1(x) + 0.5 * self.weights * x

    def d2(self, x):
        return 0.5 * self._cube.d2(x) + 0.5 * self.weights

    def d3(self, x):
        return 0.5 * self._cube.d3(x)

    def d4(self, x):
        return 0.5 * self._cube.d4(x)

    def inverse(self, z):
        return _monotone_inverse(self.d1, self.d2, np.asarray(z, dtype=float), -1.0, 1.0)


class EntropicQuadraticBarrier(SeparableBarrier):
    """``psi(x) = ||x||^2 / 2 - sum_i log x_i`` on the positive orthant."""

    name = "entropic-quadratic"

    def __init__(self, dim: int):
        self.dim = int(dim)
        self.domain = Domain.box(np.zeros(self.dim), np.full(self.dim, np.inf))

    def _phi(self, x):
        return 0.5 * x * x - np.log(x)

    def d1(self, x):
        return x - 1.0 / x

    def d2(self, x):
        return 1.0 + 1.0 / (x * x)

    def d3(self, x):
        return -2.0 / x**3

    def d4(self, x):
        return 6.0 / x**4

    def inverse(self, z):
        z = np.asarray(z, dtype=float)
        s = np.sqrt(z * z + 4.0)
        # the two forms avoid cancellation on either side of zero
        return np.where(z >= 0, 0.5 * (z + s), 2.0 / (s - z))


class SimplexEntropyBarrier(Barrier):
    """Negative entropy on the simplex in its first ``dim = d - 1`` coordinates.

    ``psi(x) = sum_{i<=d} x_i log x_i`` with ``x_d = 1 - sum_{i<d} x_i``.
    Its gradient is ``log x_i - log x_d``, the inverse map is a softmax with
    an implicit zero logit, and ``psi*(z) = log(1 + sum_i exp z_i)``.
    """

    name = "simplex-entropy"
    separable = False

    def __init__(self, categories: int):
        if categories < 2:
            raise ValueError("simplex needs at least two categories")
        self.categories = int(categories)
        self.dim = self.categories - 1
        self.domain = Domain.simplex(self.dim)

    @staticmethod
    def _last(x):
        return 1.0 - np.sum(x, axis=-1, keepdims=True)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        full = np.concatenate([x, self._last(x)], axis=-1)
        return np.sum(full * np.log(full), axis=-1)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        return np.log(x) - np.log(self._last(x))

    def _softmax(self, z):
        z = np.asarray(z, dtype=float)
        m = np.maximum(np.max(z, axis=-1, keepdims=True), 0.0)
        e = np.exp(z - m)
        e0 = np.exp(-m)
        tot = e0 + np.sum(e, axis=-1, keepdims=True)
        return e / tot, e0 / tot, m + np.log(tot)

    def inverse(self, z):
        return self._softmax(z)[0]

    def inverse_full(self, z):
        x, xd, _ = self._softmax(z)
        return np.concatenate([x, xd], axis=-1)

    def conjugate(self, z):
        """``psi*(z) = log(1 + sum exp z)``."""
        return self._softmax(z)[2][..., 0]

    def to_output(self, x):
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, self._last(x)], axis=-1)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        xd = self._last(x)
        return (1.0 / x)[..., :, None] * np.eye(self.dim) + (1.0 / xd)[..., None]

    def conjugate_hessian(self, z):
        x = self.inverse(z)
        return x[..., :, None] * np.eye(self.dim) - x[..., :, None] * x[..., None, :]

    def log_det_conjugate_hessian(self, z):
        # det(diag(x) - x x^T) = prod_i x_i * (1 - sum_i x_i)
        x, xd, _ = self._softmax(z)
        return np.sum(np.log(x), axis=-1) + np.log(xd[..., 0])

    def grad_log_det_conjugate_hessian(self, z):
        x = self.inverse(z)
        return 1.0 - self.categories * x

    def conjugate_hessian_matvec(self, z, g):
        x = self.inverse(z)
        g = np.asarray(g, dtype=float)
        return x * g - x * np.sum(x * g, axis=-1, keepdims=True)

    def diffusion_matvec(self, z, xi):
        w, q = np.linalg.eigh(self.conjugate_hessian(z))
        if np.any(~(w > 0)):
            raise FloatingPointError("conjugate Hessian is not positive definite")
        xi = np.asarray(xi, dtype=float)
        coef = np.einsum("...ji,...j->...i", q, xi) / np.sqrt(w)
        return np.einsum("...ij,...j->...i", q, coef)


def _monotone_inverse(f, df, z, lo, hi, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER):
    """Solve ``f(x) = z`` coordinatewise for increasing ``f`` on ``(lo, hi)``.

    Newton steps are taken from a bracketing interval that shrinks with the
    sign of the residual; a step that leaves the bracket is replaced by
    bisection. The iteration stops when the residual is below
    ``tol * (1 + |z|)`` or the bracket has collapsed to float resolution.
    """
    z = np.asarray(z, dtype=float)
    a = np.full_like(z, lo)
    b = np.full_like(z, hi)
    x = np.zeros_like(z)
    target = tol * (1.0 + np.abs(z))
    for _ in range(maxiter):
        res = f(x) - z
        if np.all(np.abs(res) <= target):
            return x
        a = np.where(res < 0, x, a)
        b = np.where(res > 0, x, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - res / df(x)
        inside = (step > a) & (step < b)
        nxt = np.where(inside, step, 0.5 * (a + b))
        collapsed = nxt == x
        x = np.where(np.abs(res) <= target, x, nxt)
        if np.all(collapsed | (np.abs(res) <= target)):
            return x
    res = f(x) - z
    if np.all(np.abs(res) <= target) or np.all(b - a <= 4 * np.finfo(float).eps * np.maximum(1, np.abs(x))):
        return x
    # plain bisection as the last resort
    for _ in range(200):
        m = 0.5 * (a + b)
        r = f(m) - z
        a = np.where(r < 0, m, a)
        b = np.where(r > 0, m, b)
        x = np.where(r == 0, m, 0.5 * (a + b))
        if np.all(b - a <= 4 * np.finfo(float).eps * np.maximum(1, np.abs(x))):
            return x
    raise NewtonDivergenceError("inverse map did not converge")
