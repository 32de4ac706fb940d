"""Small PDMP rate models and barrier catalogs used as oracles in the tests."""

import numpy as np

from mirror_pdmp.pdmp import PDMPSpec


class ConstantRateSpec(PDMPSpec):
    """One clock of constant rate ``c`` thinned under ``(a, b)``; jumps negate v."""

    def __init__(self, rate, intercept=None, slope=0.0, dim=1):
        self.dim = dim
        self.n_clocks = 1
        self.c = float(rate)
        self.a = float(rate if intercept is None else intercept)
        self.b = float(slope)

    def evaluate(self, x):
        return None

    def bounds(self, x, v, cache):
        n = x.shape[0]
        return np.full((n, 1), self.a), np.full((n, 1), self.b)

    def rate(self, x, v, cache, clock, aux):
        return np.full(x.shape[0], self.c)

    def jump(self, x, v, cache, clock, rngs):
        return -v


class LyingSpec(ConstantRateSpec):
    """True rate above its bound; must trigger a violation."""

    def rate(self, x, v, cache, clock, aux):
        return np.full(x.shape[0], self.a + 10.0)


def numeric_cumulative_bound(a, b, t, n=200_001):
    """Trapezoid integral of ``(a + b s)^+`` over ``[0, t]`` with the kink resolved."""
    pts = [0.0, t]
    if b < 0 and 0 < -a / b < t:
        pts.insert(1, -a / b)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        s = np.linspace(lo, hi, n)
        total += np.trapezoid(np.maximum(a + b * s, 0.0), s) if hasattr(np, "trapezoid") else np.trapz(np.maximum(a + b * s, 0.0), s)
    return total


def catalog_barriers():
    """One instance of every barrier in the catalog (both preconditioned powers)."""
    from mirror_pdmp.barriers import (
        BoxBarrier,
        EntropicQuadraticBarrier,
        HypercubeBarrier,
        IdentityBarrier,
        PreconditionedBarrier,
        SimplexEntropyBarrier,
    )

    return {
        "identity": IdentityBarrier(3),
        "hypercube": HypercubeBarrier(2),
        "preconditioned-psi2": PreconditionedBarrier(np.array([1.0, 0.01]), power=1.0),
        "preconditioned-psi3": PreconditionedBarrier(np.array([1.0, 0.01]), power=0.5),
        "box": BoxBarrier(np.zeros(4), np.array([5.0, 0.5, 0.5, 2.0])),
        "entropic-quadratic": EntropicQuadraticBarrier(3),
        "simplex-entropy": SimplexEntropyBarrier(5),
    }


def interior_points(barrier, n, rng):
    """Random points strictly inside the barrier's domain."""
    dom = barrier.domain
    d = barrier.dim
    if dom.kind == "simplex":
        return rng.dirichlet(np.ones(d + 1), n)[:, :d]
    lo, hi = dom.lower, dom.upper
    x = np.empty((n, d))
    for i in range(d):
        if np.isfinite(lo[i]) and np.isfinite(hi[i]):
            x[:, i] = lo[i] + (hi[i] - lo[i]) * rng.uniform(1e-3, 1 - 1e-3, n)
        elif np.isfinite(lo[i]):
            x[:, i] = lo[i] + np.exp(rng.normal(0, 1.5, n))
        else:
            x[:, i] = rng.normal(0, 3, n)
    return x


def in_scope_pairs():
    """``(name, barrier, target)`` for every barrier/target pairing the experiments use."""
    from mirror_pdmp.barriers import (
        BoxBarrier,
        EntropicQuadraticBarrier,
        HypercubeBarrier,
        IdentityBarrier,
        PreconditionedBarrier,
        SimplexEntropyBarrier,
    )
    from mirror_pdmp.targets import GammaProduct, GaussianTarget, TruncatedGaussian, lda_dataset

    tg2 = TruncatedGaussian.anisotropic_2d()
    tg10 = TruncatedGaussian.correlated_box(10)
    post = lda_dataset()
    cov = np.array([1.0, 0.01])
    return [
        ("identity-gaussian", IdentityBarrier(2), GaussianTarget.standard(2)),
        ("entropic-gamma", EntropicQuadraticBarrier(1), GammaProduct(np.array([3.0]), np.array([10.0]))),
        ("hypercube-tg2", HypercubeBarrier(2), tg2),
        ("psi2-tg2", PreconditionedBarrier(cov, power=1.0), tg2),
        ("psi3-tg2", PreconditionedBarrier(cov, power=0.5), tg2),
        ("box-tg10", BoxBarrier(tg10.lower, tg10.upper), tg10),
        ("simplex-lda", SimplexEntropyBarrier(post.categories), post),
    ]


def random_dual_points(barrier, n, rng):
    return barrier.forward(interior_points(barrier, n, rng))


def fd_gradient(f, z, h=1e-6):
    """Central differences of a batched scalar function at one point."""
    z = np.asarray(z, dtype=float)
    out = np.empty(z.size)
    for i in range(z.size):
        e = np.zeros(z.size)
        e[i] = h * max(1.0, abs(z[i]))
        out[i] = (f(z + e) - f(z - e)) / (2 * e[i])
    return out
