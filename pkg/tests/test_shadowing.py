from __future__ import annotations

import numpy as np
import pytest

from nonhyp.lyapunov import LyapunovPair, RegionSpec
from nonhyp.maps import Box, eval_forward
from nonhyp.shadowing import (
    EscapeError,
    PseudoTrajectory,
    find_shadow_point,
    generate_pseudotrajectory,
    measure_pseudotrajectory,
    orbit_deviation,
    shadowing_experiment,
)


def linear_shadow_oracle(points: np.ndarray, b: float = 2.0) -> np.ndarray:
    """Closed form for diag(a, b): the stable coordinate is p_0^s, the
    unstable one sums the noise backward, p_0^u + sum_k b^-(k+1) eta_k^u."""
    eta_u = points[1:, 1] - b * points[:-1, 1]
    k = np.arange(len(eta_u))
    return np.array([points[0, 0], points[0, 1] + np.sum(eta_u * b ** -(k + 1.0))])


# --------------------------------------------------------------------------
# pseudotrajectories


def test_zero_noise_is_exact_orbit(model):
    tr = generate_pseudotrajectory(model, [0.1, 0.001], 30, 0.0)
    assert tr.measured_gap == 0.0
    assert measure_pseudotrajectory(model, tr) == 0.0


def test_model_pseudotrajectory_gap(model):
    tr = generate_pseudotrajectory(model, [0.1, 0.001], 50, 1e-5, "uniform-box", seed=7)
    assert len(tr.points) == 51
    assert 0 < tr.measured_gap <= 1e-5


@pytest.mark.parametrize("noise", ["uniform-box", "gaussian-clipped", "adversarial-face"])
def test_noise_models_respect_d(model, noise):
    tr = generate_pseudotrajectory(model, [0.05, 0.01], 40, 1e-4, noise, seed=3)
    assert tr.measured_gap < 1e-4


def test_seed_determinism(model):
    a = generate_pseudotrajectory(model, [0.1, 0.001], 20, 1e-5, seed=11).points
    b = generate_pseudotrajectory(model, [0.1, 0.001], 20, 1e-5, seed=11).points
    c = generate_pseudotrajectory(model, [0.1, 0.001], 20, 1e-5, seed=12).points
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_start_outside_domain(model):
    with pytest.raises(EscapeError) as info:
        generate_pseudotrajectory(model, [0.5, 0.0], 10, 0.0)
    assert info.value.index == 0


def test_escape_names_first_index(model):
    # the unstable coordinate grows like z + z^3 and leaves [-0.2, 0.2]
    with pytest.raises(EscapeError) as info:
        generate_pseudotrajectory(model, [0.0, 0.15], 200, 0.0)
    assert info.value.index > 0


def test_invalid_arguments(model):
    with pytest.raises(ValueError):
        generate_pseudotrajectory(model, [0, 0], 10, -1.0)
    with pytest.raises(ValueError):
        generate_pseudotrajectory(model, [0, 0], 0, 0.0)
    with pytest.raises(ValueError, match="unknown noise model"):
        generate_pseudotrajectory(model, [0, 0], 5, 0.0, "pink")


def test_measure_hand_built(model):
    p0 = np.array([0.1, 0.02])
    p1 = eval_forward(model, p0) + [1e-4, 0.0]
    assert measure_pseudotrajectory(model, np.array([p0, p1])) == pytest.approx(1e-4, rel=1e-9)


def test_measure_concatenation(model):
    a = generate_pseudotrajectory(model, [0.1, 0.001], 10, 1e-5, seed=1).points
    b = generate_pseudotrajectory(model, [0.05, -0.002], 10, 2e-5, seed=2).points
    joined = np.vstack([a, b])
    junction = float(np.linalg.norm(b[0] - eval_forward(model, a[-1])))
    want = max(measure_pseudotrajectory(model, a), measure_pseudotrajectory(model, b), junction)
    assert measure_pseudotrajectory(model, joined) == want


def test_declared_d_is_enforced(model):
    p0 = np.array([0.1, 0.02])
    pts = np.array([p0, eval_forward(model, p0) + [1e-3, 0.0]])
    with pytest.raises(ValueError, match="exceeds declared"):
        PseudoTrajectory.from_points(model, pts, 1e-4)


# --------------------------------------------------------------------------
# shadow points


def test_exact_orbit_is_fixpoint(model):
    tr = generate_pseudotrajectory(model, [0.12, -0.003], 40, 0.0)
    res = find_shadow_point(model, tr, 1e-3)
    assert res.converged
    assert res.deviation <= 1e-12
    assert np.max(np.abs(res.shadow_point - tr.points[0])) <= 1e-12


def test_linear_closed_form(linear):
    # the expanding direction grows like 2^m, so the domain is left unbounded
    unbounded = Box.cube(1e12, 2)
    rng = np.random.default_rng(5)
    for trial in range(20):
        p0 = rng.uniform(-0.01, 0.01, 2)
        tr = generate_pseudotrajectory(linear, p0, 30, 1e-3, seed=trial, domain=unbounded)
        res = find_shadow_point(linear, tr, 1.0)
        want = linear_shadow_oracle(tr.points)
        np.testing.assert_allclose(res.shadow_point, want, rtol=0, atol=1e-10)


def test_model_map_shadowing(model):
    tr = generate_pseudotrajectory(model, [0.1, 0.001], 50, 1e-5, seed=7)
    res = find_shadow_point(model, tr, 1e-3)
    assert res.converged
    assert res.deviation <= 1e-3
    assert abs(orbit_deviation(model, res.shadow_point, tr.points) - res.deviation) <= 1e-14
    assert res.residual < 1e-10


def test_short_trajectory_rejected(model):
    with pytest.raises(ValueError):
        find_shadow_point(model, np.zeros((1, 2)), 1e-3)


def test_tight_epsilon_not_converged(model):
    tr = generate_pseudotrajectory(model, [0.1, 0.001], 50, 1e-5, seed=7)
    res = find_shadow_point(model, tr, 1e-9)
    assert not res.converged
    assert np.isfinite(res.deviation)


# --------------------------------------------------------------------------
# experiments


def test_experiment_success_and_honest_failure(model):
    region = RegionSpec(0.01)
    exp = shadowing_experiment(model, None, region, [1e-5, 0.05], [1e-3, 1e-2], trials=10, seed=0)
    rate = {(r.epsilon, r.d): r.success_rate for r in exp.rows}
    assert rate[(1e-2, 1e-5)] == 1.0
    assert rate[(1e-3, 0.05)] < 1.0
    assert exp.largest_d[1e-2] == 1e-5


def test_success_non_increasing_in_d(model):
    exp = shadowing_experiment(model, None, RegionSpec(0.01), [1e-5, 1e-4, 1e-3, 1e-2], [1e-3], trials=10, seed=1)
    rates = [r.success_rate for r in sorted(exp.rows, key=lambda r: r.d)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_experiment_zero_trials(model):
    exp = shadowing_experiment(model, None, RegionSpec(0.01), [1e-5], [1e-3], trials=0)
    assert exp.rows == []


def test_experiment_includes_condition_report(model):
    exp = shadowing_experiment(model, LyapunovPair.for_map(model), RegionSpec(0.01), [1e-5], [1e-3], trials=2,
                               condition_samples=200)
    assert exp.conditions is not None and exp.conditions.passed
    assert exp.to_dict()["conditions"]["pass"] is True


def test_experiment_worker_independent(model):
    kw = dict(d_grid=[1e-5], epsilon_grid=[1e-3], trials=8, seed=3)
    a = shadowing_experiment(model, None, RegionSpec(0.01), workers=1, **kw).to_dict()
    b = shadowing_experiment(model, None, RegionSpec(0.01), workers=4, **kw).to_dict()
    assert a == b
