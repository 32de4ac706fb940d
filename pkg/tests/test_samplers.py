import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mirror_pdmp.metrics import batch_means_se
from mirror_pdmp.pdmp import AffineRateBound, Budget, PhaseState, extract_samples, simulate_batch
from mirror_pdmp.samplers import (
    BouncySpec,
    RefreshDistribution,
    SubsampledGradient,
    ZeroGradientError,
    ZigZagSpec,
    ZigZagSubsampledSpec,
    bps_reflect,
    run_bps,
    run_zzs,
    run_zzss,
    ss_estimated_rate,
    zz_bounds,
    zz_flip,
    zz_rate,
)
from mirror_pdmp.targets import GaussianMeanPosterior


def identity_grad(x):
    return np.asarray(x, dtype=float)


def zero_grad(x):
    return np.zeros_like(np.asarray(x, dtype=float))


# -- Zig-Zag pieces -------------------------------------------------------


def test_zz_rate_hand_values():
    spec = ZigZagSpec(identity_grad, 1.0, 2)
    lam, tot = zz_rate(spec, PhaseState([1.0, -2.0], [1.0, 1.0]))
    assert lam.tolist() == [1.0, 0.0] and tot == 1.0
    lam, tot = zz_rate(spec, PhaseState([1.0, -2.0], [-1.0, 1.0]))
    assert lam.tolist() == [0.0, 0.0] and tot == 0.0
    lam, _ = zz_rate(ZigZagSpec(zero_grad, 1.0, 2), PhaseState([3.0, 1.0], [1.0, 1.0]))
    assert lam.tolist() == [0.0, 0.0]


def test_zz_rate_rejects_nan_gradient():
    spec = ZigZagSpec(lambda x: np.full_like(x, np.nan), 1.0, 1)
    with pytest.raises(FloatingPointError):
        zz_rate(spec, PhaseState([0.0], [1.0]))


def test_zz_flip_examples():
    s = PhaseState([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    assert zz_flip(s, 1).velocity.tolist() == [1.0, -1.0, 1.0]
    assert zz_flip(PhaseState([0.0, 0.0], [-1.0, 1.0]), 0).velocity.tolist() == [1.0, 1.0]
    with pytest.raises(IndexError):
        zz_flip(s, 3)


@given(st.integers(1, 6), st.data())
def test_zz_flip_is_an_involution(d, data):
    v = np.array(data.draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=d, max_size=d)))
    i = data.draw(st.integers(0, d - 1))
    s = PhaseState(np.zeros(d), v)
    back = zz_flip(zz_flip(s, i), i)
    np.testing.assert_array_equal(back.velocity, v)
    np.testing.assert_array_equal(back.position, s.position)


def test_zz_bounds_examples():
    spec = ZigZagSpec(identity_grad, 1.0, 2)
    b = zz_bounds(spec, PhaseState([1.0, -2.0], [1.0, 1.0]))
    assert b == [AffineRateBound(1.0, math.sqrt(2)), AffineRateBound(0.0, math.sqrt(2))]
    b = zz_bounds(ZigZagSpec(identity_grad, 3.0, 1), PhaseState([-1.0], [1.0]))
    assert b == [AffineRateBound(0.0, 3.0)]
    b = zz_bounds(ZigZagSpec(lambda x: np.ones_like(x), 0.0, 2), PhaseState([0.0, 0.0], [1.0, -1.0]))
    assert all(bb.slope == 0.0 for bb in b)


def test_zz_spec_validation():
    with pytest.raises(ValueError):
        ZigZagSpec(identity_grad, -1.0, 1)
    spec = ZigZagSpec(identity_grad, 1.0, 1)
    with pytest.raises(ValueError):
        run_zzs(spec, PhaseState([0.0], [0.5]), 5, 0)


def test_zzs_one_event_budget():
    sk = run_zzs(ZigZagSpec(identity_grad, 1.0, 1), PhaseState([0.0], [1.0]), 1, 3)
    assert len(sk) == 2
    assert sk.velocities[1, 0] == -1.0


def test_zzs_with_linear_potential_accepts_everything():
    spec = ZigZagSpec(lambda x: np.ones_like(x), 0.0, 1)
    sk = run_zzs(spec, PhaseState([0.0], [1.0]), 1, 0)
    assert sk.stats.acceptances == sk.stats.proposals == 1
    assert sk.max_rate_ratio == pytest.approx(1.0)


def test_zzs_standard_gaussian_moments():
    # 10 lockstep replicates of 10^5 events: 10^6 events in total
    spec = ZigZagSpec(identity_grad, 1.0, 1)
    R = 10
    rng = np.random.default_rng(1)
    runs = simulate_batch(spec, np.zeros((R, 1)), rng.choice([-1.0, 1.0], (R, 1)), 100_000, list(range(R)))
    x = np.concatenate([extract_samples(sk, 100_000, 0.1)[:, 0] for sk in runs])
    se_mean = batch_means_se(x, 100)[0]
    se_var = batch_means_se((x - x.mean()) ** 2, 100)[0]
    assert abs(x.mean()) < 3 * se_mean
    assert abs(x.var() - 1.0) < 3 * se_var


def test_zzs_isotropic_2d_marginals_agree():
    spec = ZigZagSpec(identity_grad, 1.0, 2)
    runs = simulate_batch(spec, np.zeros((4, 2)), np.ones((4, 2)), 50_000, [0, 1, 2, 3])
    x = np.concatenate([extract_samples(sk, 50_000, 0.1) for sk in runs])
    se = batch_means_se((x - x.mean(0)) ** 2, 50)
    assert abs(x[:, 0].var() - x[:, 1].var()) < 3 * math.hypot(*se)


# -- Bouncy particle --------------------------------------------------------


def test_bps_reflect_examples():
    assert bps_reflect([1.0, 1.0], [1.0, 0.0]) == pytest.approx([0.0, -1.0])
    assert bps_reflect([1.0, 0.0], [0.0, 2.0]) == pytest.approx([0.0, 2.0])
    assert bps_reflect([2.0, 1.0], [4.0, 2.0]) == pytest.approx([-4.0, -2.0])
    with pytest.raises(ZeroGradientError):
        bps_reflect([0.0, 0.0], [1.0, 0.0])


finite = st.floats(-100, 100, allow_nan=False)


@given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite))
def test_bps_reflect_is_isometric_involution(g, v):
    if np.linalg.norm(g) < 1e-3:
        return
    r = bps_reflect(g, v)
    scale = max(1.0, np.linalg.norm(v))
    assert abs(np.linalg.norm(r) - np.linalg.norm(v)) <= 1e-12 * scale * 10
    np.testing.assert_allclose(bps_reflect(g, r), v, atol=1e-12 * scale * 10)


def test_bouncy_spec_rejects_nonpositive_refresh():
    with pytest.raises(ValueError):
        BouncySpec(identity_grad, 1.0, 2, refresh_rate=0.0)


def test_bps_unit_sphere_refresh_norms():
    spec = BouncySpec(identity_grad, 1.0, 3, refresh_rate=1000.0)
    sk = run_bps(spec, PhaseState(np.zeros(3), [1.0, 0.0, 0.0]), 2000, 5)
    norms = np.linalg.norm(sk.velocities, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


def test_bps_gaussian_refresh_distribution():
    spec = BouncySpec(identity_grad, 1.0, 2, refresh_rate=1000.0, refresh_dist=RefreshDistribution.STANDARD_GAUSSIAN)
    sk = run_bps(spec, PhaseState(np.zeros(2), [1.0, 0.0]), 5000, 5)
    v = sk.velocities[1:]
    # refresh dominates: velocities are nearly iid standard normal
    assert abs(v.mean()) < 0.05
    assert v.var() == pytest.approx(1.0, abs=0.08)


def test_bps_zero_gradient_forces_refresh():
    spec = BouncySpec(zero_grad, 0.0, 2, refresh_rate=1.0)
    sk = run_bps(spec, PhaseState(np.zeros(2), [1.0, 0.0]), 50, 2)
    assert sk.stats.acceptances == 50


def test_bps_2d_gaussian_covariance():
    spec = BouncySpec(identity_grad, 1.0, 2, refresh_rate=1.0)
    R = 10
    rng = np.random.default_rng(4)
    v0 = rng.standard_normal((R, 2))
    v0 /= np.linalg.norm(v0, axis=1, keepdims=True)
    runs = simulate_batch(spec, np.zeros((R, 2)), v0, 100_000, list(range(R)))
    x = np.concatenate([extract_samples(sk, 100_000, 0.1) for sk in runs])
    prods = np.column_stack([x[:, 0] ** 2, x[:, 1] ** 2, x[:, 0] * x[:, 1]])
    se = batch_means_se(prods, 100)
    est = prods.mean(axis=0)
    assert np.all(np.abs(est - [1.0, 1.0, 0.0]) < 3 * se)


# -- subsampling ----------------------------------------------------------


def _two_term_sg():
    # grad U^1 = 2, grad U^2 = 4 at x; 1 and 3 at x_hat; grad U(x_hat) = 2
    def term(x, j):
        j = np.asarray(j)
        base = np.where(j == 0, 1.0, 3.0)[:, None]
        shift = np.where(np.asarray(x) > 0.5, 1.0, 0.0)
        return base + shift

    return SubsampledGradient.from_terms(term, 2, np.array([0.0]), 1.0)


def test_ss_rate_hand_arithmetic():
    sg = _two_term_sg()
    assert sg.reference_gradient == pytest.approx([2.0])
    s = PhaseState([1.0], [1.0])
    e = [ss_estimated_rate(sg, s, 0, j) for j in range(2)]
    assert e == pytest.approx([3.0, 3.0])
    assert ss_estimated_rate(sg, PhaseState([1.0], [-1.0]), 0, 0) == 0.0
    with pytest.raises(IndexError):
        ss_estimated_rate(sg, s, 0, 2)


def test_ss_estimate_at_reference_is_full_gradient(rng):
    t = GaussianMeanPosterior(rng.normal(size=(20, 3)))
    sg = t.subsampled_gradient(reference=np.array([0.3, -0.2, 1.0]))
    for j in range(20):
        np.testing.assert_allclose(sg.estimate(sg.reference_point, j)[0], t.gradient(sg.reference_point), atol=1e-14)


def test_ss_average_is_unbiased(rng):
    t = GaussianMeanPosterior(rng.normal(size=(30, 2)))
    sg = t.subsampled_gradient()
    for _ in range(100):
        x = rng.normal(size=2) * 3
        xs = np.broadcast_to(x, (30, 2))
        avg = sg.estimate(xs, np.arange(30)).mean(axis=0)
        np.testing.assert_allclose(avg, t.gradient(x), atol=1e-10, rtol=0)


def test_zzss_bound_dominates_along_segments(rng):
    t = GaussianMeanPosterior(rng.normal(size=(25, 2)))
    sg = t.subsampled_gradient(norm_order=2)
    spec = ZigZagSubsampledSpec(sg)
    n = 10_000
    x = rng.normal(size=(n, 2)) * 2
    v = rng.choice([-1.0, 1.0], (n, 2))
    s = rng.uniform(0, 3, n)
    j = rng.integers(0, 25, n)
    a, b = spec.bounds(x, v, spec.evaluate(x))
    xs = x + s[:, None] * v
    est = sg.estimate(xs, j)
    rates = np.maximum(v * est, 0.0)
    assert np.all(rates <= a + b * s[:, None] + 1e-12)


def test_zzss_accounting_is_one_over_k():
    t = GaussianMeanPosterior(np.linspace(-1, 1, 50))
    sk = run_zzss(t.subsampled_gradient(), PhaseState([0.0], [1.0]), Budget(gradient_evaluations=20), 0)
    assert sk.stats.proposals == 1000
    assert sk.stats.gradient_evaluations == pytest.approx(20.0)
    assert ZigZagSubsampledSpec(t.subsampled_gradient()).evaluation_cost == Fraction(1, 50)


def test_zzss_gaussian_mean_posterior():
    y = np.random.default_rng(8).normal(1.5, 2.0, 50)
    t = GaussianMeanPosterior(y)
    spec = ZigZagSubsampledSpec(t.subsampled_gradient())
    R = 6
    runs = simulate_batch(spec, np.zeros((R, 1)), np.ones((R, 1)), 50_000, list(range(R)))
    x = np.concatenate([extract_samples(sk, 50_000, 0.1)[:, 0] for sk in runs])
    assert abs(x.mean() - y.mean()) < 3 * batch_means_se(x, 60)[0]


def test_zzss_with_one_term_matches_zzs_law():
    t = GaussianMeanPosterior(np.array([0.0]))
    spec = ZigZagSubsampledSpec(t.subsampled_gradient())
    runs = simulate_batch(spec, np.zeros((4, 1)), np.ones((4, 1)), 50_000, [0, 1, 2, 3])
    x = np.concatenate([extract_samples(sk, 50_000, 0.1)[:, 0] for sk in runs])
    se = batch_means_se(x, 50)[0]
    assert abs(x.mean()) < 3 * se
    assert abs(x.var() - 1.0) < 3 * batch_means_se((x - x.mean()) ** 2, 50)[0]
