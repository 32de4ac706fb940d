import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from helpers import ConstantRateSpec, LyingSpec, numeric_cumulative_bound
from mirror_pdmp.pdmp import (
    AffineRateBound,
    BoundViolationError,
    Budget,
    PhaseState,
    Skeleton,
    Space,
    ThinningStats,
    extract_samples,
    invert_affine_bound,
    read_skeleton,
    sample_costs,
    simulate_batch,
    simulate_skeleton,
    write_skeleton,
)


def _state(x=0.0, v=1.0):
    return PhaseState(np.atleast_1d(x), np.atleast_1d(v))


# -- types ----------------------------------------------------------------


def test_phase_state_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        PhaseState(np.zeros(2), np.ones(3))
    with pytest.raises(ValueError):
        PhaseState(np.zeros(0), np.zeros(0))


def test_phase_state_tag_is_coerced():
    assert PhaseState([0.0], [1.0], "dual").space is Space.DUAL


def test_affine_bound_rejects_negative_intercept_and_nan():
    with pytest.raises(ValueError):
        AffineRateBound(-1.0, 0.0)
    with pytest.raises(ValueError):
        AffineRateBound(float("nan"), 1.0)


def test_affine_bound_positive_part():
    b = AffineRateBound(1.0, -2.0)
    assert b(0.25) == pytest.approx(0.5)
    assert b(3.0) == 0.0
    assert b.total_mass() == pytest.approx(0.25)
    assert AffineRateBound(1.0, 0.0).total_mass() == math.inf


def test_budget_requires_a_limit():
    with pytest.raises(ValueError):
        Budget()
    with pytest.raises(ValueError):
        Budget(events=0)
    assert Budget.coerce(5).events == 5
    assert Budget.coerce({"gradient_evaluations": 10}).gradient_evaluations == 10


# -- invert_affine_bound --------------------------------------------------


def test_invert_constant_rate():
    assert invert_affine_bound(AffineRateBound(1.0, 0.0), 2.0) == pytest.approx(2.0)


def test_invert_quadratic_root_matches_integral():
    t = invert_affine_bound(AffineRateBound(1.0, 2.0), 4.0)
    assert t == pytest.approx((-1 + math.sqrt(17)) / 2, rel=1e-14)
    assert numeric_cumulative_bound(1.0, 2.0, t) == pytest.approx(4.0, rel=1e-9)


def test_invert_zero_rate_is_infinite():
    assert invert_affine_bound(AffineRateBound(0.0, 0.0), 1.0) == math.inf


def test_invert_negative_slope_finite_mass():
    # mass a^2 / (-2b) = 1 < 2
    assert invert_affine_bound(AffineRateBound(2.0, -2.0), 2.0) == math.inf
    t = invert_affine_bound(AffineRateBound(2.0, -2.0), 0.5)
    assert 2 * t - t * t == pytest.approx(0.5)


def test_invert_rejects_bad_draws():
    with pytest.raises(ValueError):
        invert_affine_bound(AffineRateBound(1.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        invert_affine_bound(AffineRateBound(1.0, 0.0), float("nan"))


def test_invert_is_exact_inverse_on_many_draws(rng):
    n = 10_000
    a = rng.uniform(0, 10, n)
    b = rng.uniform(-2, 10, n)
    e = rng.uniform(0, 20, n) + 1e-12
    worst = 0.0
    for ai, bi, ei in zip(a, b, e):
        t = invert_affine_bound(AffineRateBound(ai, bi), ei)
        if math.isinf(t):
            assert bi < 0 and ai * ai / (-2 * bi) < ei * (1 + 1e-12)
            continue
        # closed-form cumulative mass (t never passes the kink for finite t)
        mass = ai * t + 0.5 * bi * t * t
        worst = max(worst, abs(mass - ei) / ei)
    assert worst < 1e-10


@given(
    st.one_of(st.just(0.0), st.floats(1e-6, 10)),
    st.one_of(st.just(0.0), st.floats(-2, -1e-6), st.floats(1e-6, 10)),
    st.floats(1e-6, 20),
)
def test_invert_property_matches_quadrature(a, b, e):
    t = invert_affine_bound(AffineRateBound(a, b), e)
    if math.isinf(t):
        assert b <= 0 and (a == 0 or b < 0 and a * a / (-2 * b) <= e * (1 + 1e-9))
    else:
        assert t > 0
        assert numeric_cumulative_bound(a, b, t, n=20_001) == pytest.approx(e, rel=1e-6)


# -- simulation -------------------------------------------------------------


def test_constant_rate_exact_clock_accepts_everything():
    sk = simulate_skeleton(ConstantRateSpec(3.0), _state(), 2000, 4)
    assert sk.stats.acceptances == sk.stats.proposals == 2000
    gaps = np.diff(sk.times)
    assert stats.kstest(gaps, "expon", args=(0, 1 / 3.0)).pvalue > 0.001


def test_thinned_constant_rate_mean_and_ks():
    sk = simulate_skeleton(ConstantRateSpec(2.0, 2.0, 1.0), _state(), 100_000, 11)
    gaps = np.diff(sk.times)
    assert abs(gaps.mean() - 0.5) < 3 * 0.5 / math.sqrt(gaps.size)
    assert stats.kstest(gaps, "expon", args=(0, 0.5)).pvalue > 0.01
    assert sk.stats.acceptances < sk.stats.proposals


def test_zero_rate_with_horizon_keeps_only_initial_event():
    sk = simulate_skeleton(ConstantRateSpec(0.0, 0.0, 0.0), _state(), Budget(time=3.0), 0)
    assert len(sk) == 1
    assert sk.final_time == 3.0
    assert sk.final_position == pytest.approx([3.0])


def test_zero_rate_without_horizon_raises():
    with pytest.raises(RuntimeError):
        simulate_skeleton(ConstantRateSpec(0.0, 0.0, 0.0), _state(), 10, 0)


def test_budget_of_one_event_gives_two_entries():
    sk = simulate_skeleton(ConstantRateSpec(1.0), _state(), 1, 0)
    assert len(sk) == 2
    assert sk.velocities[1] == pytest.approx([-1.0])


def test_gradient_budget_counts_initial_evaluation():
    sk = simulate_skeleton(ConstantRateSpec(1.0, 1.0, 1.0), _state(), Budget(gradient_evaluations=100), 0)
    assert sk.stats.proposals == 99
    assert sk.stats.gradient_evaluations == 100


def test_bound_violation_is_raised_with_payload():
    with pytest.raises(BoundViolationError) as info:
        simulate_skeleton(LyingSpec(1.0), _state(), 10, 0)
    p = info.value.payload()
    assert p["rate"] > p["bound"]
    json.dumps(p)


def test_record_mode_keeps_other_replicates():
    out = simulate_batch(LyingSpec(1.0), np.zeros((2, 1)), np.ones((2, 1)), 5, [0, 1], on_error="record")
    assert all(isinstance(o, BoundViolationError) for o in out)
    ok = simulate_batch(ConstantRateSpec(1.0), np.zeros((2, 1)), np.ones((2, 1)), 5, [0, 1], on_error="record")
    assert all(isinstance(o, Skeleton) for o in ok)


def test_simulation_is_deterministic_and_batch_invariant():
    spec = ConstantRateSpec(2.0, 2.0, 1.0)
    a = simulate_skeleton(spec, _state(), 500, 42)
    b = simulate_skeleton(spec, _state(), 500, 42)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.positions, b.positions)
    batch = simulate_batch(spec, np.zeros((3, 1)), np.ones((3, 1)), 500, [7, 42, 9])
    np.testing.assert_array_equal(batch[1].times, a.times)


def test_skeleton_invariants(rng):
    sk = simulate_skeleton(ConstantRateSpec(1.5, 1.5, 0.5, dim=3), PhaseState(np.zeros(3), np.ones(3)), 300, 3)
    assert sk.times[0] == 0.0
    assert np.all(np.diff(sk.times) > 0)
    assert sk.final_time >= sk.times[-1]
    assert sk.path_consistency_error() < 1e-10
    st_ = sk.stats
    assert 0 <= st_.acceptances <= st_.proposals


# -- extraction -------------------------------------------------------------


def _hand_skeleton(times, xs, vs, final):
    return Skeleton(np.array(times, float), np.array(xs, float)[:, None], np.array(vs, float)[:, None], final, ThinningStats(), costs=np.arange(len(times), dtype=float), final_cost=len(times))


def test_extract_single_segment():
    sk = _hand_skeleton([0.0], [0.0], [1.0], 1.0)
    assert extract_samples(sk, 2)[:, 0] == pytest.approx([0.5, 1.0])
    assert extract_samples(sk, 1)[:, 0] == pytest.approx([1.0])


def test_extract_two_segments():
    sk = _hand_skeleton([0.0, 0.5], [0.0, 0.5], [1.0, -1.0], 1.0)
    assert extract_samples(sk, 2)[:, 0] == pytest.approx([0.5, 0.0])


def test_extract_rejects_bad_input():
    sk = _hand_skeleton([0.0], [0.0], [1.0], 1.0)
    with pytest.raises(ValueError):
        extract_samples(sk, 0)
    with pytest.raises(ValueError):
        extract_samples(_hand_skeleton([0.0], [0.0], [1.0], 0.0), 3)


def test_extract_burn_in_drops_leading_samples():
    sk = _hand_skeleton([0.0], [0.0], [1.0], 1.0)
    assert extract_samples(sk, 10, 0.1)[:, 0] == pytest.approx(np.arange(2, 11) / 10)


def test_sample_costs_charge_next_event():
    sk = _hand_skeleton([0.0, 0.5], [0.0, 0.5], [1.0, -1.0], 1.0)
    # a sample at 0.25 is fixed once the event at 0.5 (cost 1) is known
    assert sample_costs(sk, 4) == pytest.approx([1, 1, 2, 2])


def test_skeleton_round_trip(tmp_path):
    sk = simulate_skeleton(ConstantRateSpec(1.0, 1.0, 1.0, dim=2), PhaseState(np.zeros(2), np.ones(2)), 50, 1)
    path, side = write_skeleton(sk, tmp_path / "sk.csv")
    assert path.read_text().splitlines()[0] == "time,x_1,x_2,v_1,v_2"
    meta = json.loads(side.read_text())
    assert set(meta) >= {"proposals", "acceptances", "clock_draws", "gradient_evaluations"}
    back = read_skeleton(path)
    np.testing.assert_array_equal(back.times, sk.times)
    np.testing.assert_array_equal(back.positions, sk.positions)
    assert back.final_time == sk.final_time
