import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import catalog_barriers, interior_points
from mirror_pdmp.barriers import (
    BoxBarrier,
    Domain,
    EntropicQuadraticBarrier,
    HypercubeBarrier,
    IdentityBarrier,
    PreconditionedBarrier,
    SimplexEntropyBarrier,
    project_simplex,
)

BARRIERS = catalog_barriers()


@pytest.fixture(params=sorted(BARRIERS))
def barrier(request):
    return BARRIERS[request.param]


def test_round_trip(barrier, rng):
    x = interior_points(barrier, 1000, rng)
    back = barrier.inverse(barrier.forward(x))
    assert np.max(np.abs(back - x)) < 1e-10


def test_conjugate_hessian_inverts_hessian(barrier, rng):
    x = interior_points(barrier, 1000, rng)
    z = barrier.forward(x)
    prod = barrier.conjugate_hessian(z) @ barrier.hessian(barrier.inverse(z))
    assert np.max(np.abs(prod - np.eye(barrier.dim))) < 1e-8


def test_forward_is_the_gradient_of_value(barrier, rng):
    x = interior_points(barrier, 50, rng)
    h = 1e-6
    for row in x:
        fd = np.empty(barrier.dim)
        for i in range(barrier.dim):
            e = np.zeros(barrier.dim)
            step = h * max(1e-3, barrier.domain.boundary_distance(row[None])[0]) if barrier.domain.kind != "box" or np.isfinite(barrier.domain.lower[i]) else h
            e[i] = step
            fd[i] = (barrier.value(row + e) - barrier.value(row - e)) / (2 * step)
        np.testing.assert_allclose(fd, barrier.forward(row), rtol=1e-5, atol=1e-6)


def test_log_det_gradient_matches_finite_differences(barrier, rng):
    z = barrier.forward(interior_points(barrier, 30, rng))
    h = 1e-5
    for row in z:
        fd = np.empty(barrier.dim)
        for i in range(barrier.dim):
            e = np.zeros(barrier.dim)
            e[i] = h * max(1.0, abs(row[i]))
            fd[i] = (barrier.log_det_conjugate_hessian(row + e) - barrier.log_det_conjugate_hessian(row - e)) / (2 * e[i])
        np.testing.assert_allclose(fd, barrier.grad_log_det_conjugate_hessian(row), rtol=1e-5, atol=1e-7)


def test_diffusion_squares_to_hessian(barrier, rng):
    z = barrier.forward(interior_points(barrier, 5, rng))
    eye = np.eye(barrier.dim)
    for row in z:
        m = np.column_stack([barrier.diffusion_matvec(row, e) for e in eye])
        np.testing.assert_allclose(m @ m.T, barrier.hessian(barrier.inverse(row)), rtol=1e-8)


def test_inverse_lands_inside(barrier, rng):
    # the simplex spread is kept moderate: beyond a logit gap of about 36
    # one coordinate rounds to 1 and the open check cannot hold in floats
    z = rng.normal(0, 5 if barrier.domain.kind == "simplex" else 50, (500, barrier.dim))
    assert np.all(barrier.contains(barrier.inverse(z)))


def test_forward_diverges_at_the_boundary(barrier):
    if isinstance(barrier, IdentityBarrier):
        pytest.skip("the whole space has no boundary")
    d = barrier.dim
    norms = []
    for k in range(2, 9):
        eps = 10.0**-k
        if barrier.domain.kind == "simplex":
            x = np.full(d, (1.0 - eps) / d)
        else:
            x = 0.5 * (barrier.domain.lower + np.where(np.isfinite(barrier.domain.upper), barrier.domain.upper, barrier.domain.lower + 2.0))
            x[0] = barrier.domain.lower[0] + eps
        norms.append(np.linalg.norm(barrier.forward(x)))
    assert np.all(np.diff(norms) > 0)


# -- closed forms ---------------------------------------------------------


def test_entropic_inverse_at_zero():
    b = EntropicQuadraticBarrier(1)
    assert b.inverse(np.array([0.0])) == pytest.approx([1.0])
    assert b.forward(np.array([1.0])) == pytest.approx([0.0])


def test_simplex_inverse_at_zero_is_centre():
    b = SimplexEntropyBarrier(5)
    np.testing.assert_allclose(b.inverse(np.zeros(4)), 0.2)
    np.testing.assert_allclose(b.to_output(b.inverse(np.zeros(4))), 0.2)


def test_hypercube_odd_map():
    b = HypercubeBarrier(1)
    assert b.inverse(np.array([0.0])) == pytest.approx([0.0])
    x = np.array([0.3])
    # psi_1' = x / (1 - x^2) with the factor 1/2 in front of both logs
    assert b.forward(x) == pytest.approx(x / (1 - x * x))


def test_box_precision_near_faces():
    b = BoxBarrier(np.array([0.0]), np.array([1.0]))
    for z in (1e8, -1e8, 1e15, -3.5, 0.0):
        x = b.inverse(np.array([z]))
        assert b.contains(x)
        # the gaps keep relative precision even where x itself cannot
        u, r = b.inverse_gaps(np.array([z]))
        assert (1 / r - 1 / u)[0] == pytest.approx(z, rel=1e-12, abs=1e-12)
        assert (u + r)[0] == pytest.approx(1.0, rel=1e-14)


def test_preconditioned_rejects_non_diagonal_covariance():
    with pytest.raises(ValueError):
        PreconditionedBarrier(np.array([[1.0, 0.2], [0.2, 1.0]]))


def test_preconditioned_residual_tolerance(rng):
    b = PreconditionedBarrier(np.array([1.0, 0.01]), power=1.0)
    z = rng.normal(0, 100, (1000, 2))
    res = np.abs(b.forward(b.inverse(z)) - z)
    assert np.all(res <= 1e-12 * (1 + np.abs(z)))


@given(st.floats(-1e6, 1e6), st.floats(1e-3, 1e3))
def test_preconditioned_inverse_property(z, var):
    b = PreconditionedBarrier(np.array([var]), power=0.5)
    x = b.inverse(np.array([z]))
    assert -1 < x[0] < 1
    # near the faces the residual is limited by the float spacing of x
    slack = abs(np.spacing(x[0])) * b.d2(x)[0]
    assert abs(b.forward(x)[0] - z) <= 1e-12 * (1 + abs(z)) + 4 * slack


def test_simplex_conjugate_is_log_sum_exp(rng):
    b = SimplexEntropyBarrier(4)
    z = rng.normal(size=(20, 3))
    np.testing.assert_allclose(b.conjugate(z), np.log1p(np.exp(z).sum(axis=1)))
    # gradient of psi* is the inverse map
    h = 1e-6
    for row in z[:5]:
        fd = [(b.conjugate(row + h * e) - b.conjugate(row - h * e)) / (2 * h) for e in np.eye(3)]
        np.testing.assert_allclose(fd, b.inverse(row), rtol=1e-7)


def test_simplex_softmax_is_stable_for_large_logits():
    b = SimplexEntropyBarrier(3)
    x = b.inverse(np.array([800.0, -800.0]))
    assert np.all(np.isfinite(x))
    assert x.sum() <= 1.0


# -- domains ----------------------------------------------------------------


def test_box_projection_is_a_clamp():
    dom = Domain.box(-np.ones(2), np.ones(2))
    np.testing.assert_array_equal(dom.project(np.array([-0.3, 2.1])), [-0.3, 1.0])


def test_orthant_projection():
    dom = Domain.box(np.zeros(2), np.full(2, np.inf))
    np.testing.assert_array_equal(dom.project(np.array([-1.0, 3.0])), [0.0, 3.0])


def test_simplex_projection_matches_brute_force(rng):
    from scipy.optimize import minimize

    for _ in range(10):
        y = rng.normal(0, 1, 3)
        p = project_simplex(y)
        assert p.sum() == pytest.approx(1.0)
        res = minimize(lambda q: np.sum((q - y) ** 2), np.full(3, 1 / 3), constraints=[{"type": "eq", "fun": lambda q: q.sum() - 1}], bounds=[(0, 1)] * 3)
        np.testing.assert_allclose(p, res.x, atol=1e-5)


def test_solid_simplex_projection_keeps_interior_points():
    dom = Domain.simplex(2)
    x = np.array([0.2, 0.3])
    np.testing.assert_array_equal(dom.project(x), x)
    assert dom.project(np.array([0.9, 0.9])).sum() == pytest.approx(1.0)


def test_closed_and_open_membership():
    dom = Domain.box(np.zeros(1), np.ones(1))
    assert not dom.contains(np.array([1.0]))
    assert dom.contains(np.array([1.0]), closed=True)
