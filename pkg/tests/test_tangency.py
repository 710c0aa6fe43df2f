from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.linalg import expm

from nonhyp.tangency import (
    BracketError,
    FlatteningError,
    MatrixLogError,
    PipelineError,
    apply_h,
    build_delta0,
    build_time_reparam,
    composed_center_map,
    conjugated_center_map,
    flatness_report,
    invert_h,
    quasitransverse_pipeline,
    real_matrix_log,
    tau,
)
from nonhyp.tangency.pipeline import delta_from_g, round_trip


@pytest.fixture(scope="module")
def flat():
    return build_delta0(lambda x: x)


@pytest.fixture(scope="module")
def treparam(flat):
    return build_time_reparam(flat)


@pytest.fixture(scope="module")
def gen2():
    return real_matrix_log(2.0)


# --------------------------------------------------------------------------
# flat minorant and time reparametrization


def test_delta0_upper_bound(flat):
    assert flat(0.1) <= 0.1 * math.exp(-10)
    assert 0.1 * math.exp(-10) == pytest.approx(4.54e-6, rel=1e-3)


def test_delta0_invariants(flat):
    rep = flat.check(10_000)
    assert rep["points"] == 10_000
    assert rep["minorant"] and rep["monotone"] and rep["positive"]
    assert all(rep["flat_orders"].values())
    assert rep["flat_drop6_log"] > math.log(1e3)


def test_delta0_from_samples():
    xs = np.geomspace(1e-12, 1.0, 400)
    f = build_delta0((xs, xs**2))
    assert f.check(2000)["minorant"]


@pytest.mark.parametrize(
    "delta, message",
    [(lambda x: 0 * x, "vanishes"), (lambda x: np.cos(x) + 2, "not monotone"), (lambda x: x / 0.0, "not finite")],
)
def test_delta0_rejects_bad_modulus(delta, message):
    with np.errstate(divide="ignore", invalid="ignore"):
        with pytest.raises(FlatteningError, match=message):
            build_delta0(delta)


def test_t_at_half(flat, treparam):
    assert treparam(0.5) == pytest.approx(1.0 / flat(0.5) + math.e**2, rel=1e-13)


def test_t_decreasing(treparam):
    assert treparam(0.2) > treparam(0.4)
    assert treparam.check()["decreasing"]


def test_xi2_t_diverges(treparam):
    x2t = treparam.log_xi2_t(np.array([1e-1, 1e-2, 1e-3]))
    assert np.all(np.diff(x2t) > 0)


def test_t_log_space_below_xi_min(treparam):
    assert 1e-3 < treparam.xi_min < 2e-3
    assert math.isinf(float(treparam(1e-3)))
    assert np.isfinite(treparam.log_t(1e-3))


@pytest.mark.parametrize("xi", [0.0, -0.1, 1.0, 2.0])
def test_t_domain(treparam, xi):
    with pytest.raises(ValueError):
        treparam.log_t(xi)


def test_t_derivative_matches_finite_difference(treparam):
    x, h = 0.4, 1e-6
    fd = (treparam.log_t(x + h) - treparam.log_t(x - h)) / (2 * h)
    assert treparam.dlog_t(x) == pytest.approx(fd, rel=1e-6)


# --------------------------------------------------------------------------
# matrix logarithm


def test_scalar_log(gen2):
    assert gen2.P[0, 0] == pytest.approx(math.log(2), rel=1e-15)
    assert gen2.K == pytest.approx(1.0)
    assert gen2.chi_sharp == pytest.approx(math.log(2), rel=1e-12)
    assert gen2.chi == pytest.approx(0.9 * math.log(2), rel=1e-12)


def test_diagonal_log():
    g = real_matrix_log(np.diag([2.0, 3.0]))
    np.testing.assert_allclose(g.P, np.diag([math.log(2), math.log(3)]), atol=1e-15)
    assert g.power == 1


def test_rotation_is_squared_twice():
    C = 2 * np.array([[0.0, -1.0], [1.0, 0.0]])
    g = real_matrix_log(C)
    assert g.power == 4
    np.testing.assert_allclose(expm(g.P), np.linalg.matrix_power(C, 4), atol=1e-10 * 16)
    assert np.all(np.linalg.eigvals(g.P).real > 0)


def test_exponential_bound(gen2):
    g = real_matrix_log(np.array([[2.0, 1.0], [0.0, 3.0]]))
    for s in np.linspace(0, 50, 201):
        assert np.linalg.norm(expm(-g.P * s), 2) <= g.K * math.exp(-g.chi * s) * (1 + 1e-9)


def test_unit_circle_rejected():
    with pytest.raises(MatrixLogError, match="unit circle"):
        real_matrix_log(np.eye(2))


# --------------------------------------------------------------------------
# h and its inverse


def test_h_at_zero(gen2, treparam):
    assert apply_h(gen2, treparam, np.array([0.0])).value[0] == 0.0


def test_h_scalar_formula(gen2, treparam):
    want = math.exp(math.log(0.7) - float(treparam(0.49)) * math.log(2))
    assert apply_h(gen2, treparam, np.array([0.7])).value[0] == pytest.approx(want, rel=1e-12)


def test_h_norm_monotone(gen2, treparam):
    rs = np.linspace(0.05, 0.9, 60)
    logs = [apply_h(gen2, treparam, np.array([r])).scaled.log_norm for r in rs]
    assert np.all(np.diff(logs) > 0)
    assert abs(apply_h(gen2, treparam, np.array([0.6])).value[0]) < abs(apply_h(gen2, treparam, np.array([0.7])).value[0])


def test_h_is_odd(gen2, treparam):
    a = apply_h(gen2, treparam, np.array([0.55])).value[0]
    b = apply_h(gen2, treparam, np.array([-0.55])).value[0]
    assert a == -b


def test_h_clamps_tiny_radii(gen2, treparam):
    res = apply_h(gen2, treparam, np.array([1e-3]))
    assert res.clamped and res.value[0] == 0.0


def test_h_working_radius(gen2, treparam):
    with pytest.raises(ValueError, match="working radius"):
        apply_h(gen2, treparam, np.array([0.95]))


def test_round_trip(gen2, treparam):
    rep = round_trip(gen2, treparam, 100, 0.3, 0.9)
    assert rep["max_error"] <= 1e-9


def test_invert_zero(gen2, treparam):
    assert invert_h(gen2, treparam, np.array([0.0])).zhat[0] == 0.0


def test_invert_outside_image(gen2, treparam):
    with pytest.raises(BracketError) as info:
        invert_h(gen2, treparam, np.array([0.95]))
    assert info.value.s_max == 0.0


def test_round_trip_2d():
    g = real_matrix_log(np.diag([2.0, 3.0]))
    t = build_time_reparam(build_delta0(lambda x: x))
    z = np.array([0.5, -0.4])
    back = invert_h(g, t, apply_h(g, t, z).value).zhat
    np.testing.assert_allclose(back, z, atol=1e-9)


# --------------------------------------------------------------------------
# conjugated center map


def test_tau_in_unit_interval_and_decreasing(gen2, treparam):
    taus = [tau(gen2, treparam, np.array([r])).tau for r in (0.5, 0.3, 0.1)]
    assert all(0 < x < 1 for x in taus)
    assert taus[0] > taus[1] > taus[2]


def test_tau_sampled(gen2, treparam):
    for r in np.linspace(0.05, 0.85, 17):
        assert 0 < tau(gen2, treparam, np.array([r])).tau < 1


def test_two_paths_agree(gen2, treparam):
    z = np.array([0.6])
    gap = np.abs(conjugated_center_map(gen2, treparam, z) - composed_center_map(gen2, treparam, z)).max()
    assert gap <= 1e-8


def test_flatness_sequence(gen2, treparam):
    rep = flatness_report(gen2, treparam, None, (0.3, 0.2, 0.1))
    gaps = [r["jac_gap"] for r in rep["rows"]]
    assert gaps[0] > gaps[1] > gaps[2]
    assert rep["jac_gap_decreasing"]


def test_ghat_bound_for_cubic_tangency(gen2, treparam):
    rep = flatness_report(gen2, treparam, np.cbrt)["ghat"]
    assert rep["bounded"]
    assert all(r["ratio"] <= 1 for r in rep["rows"] if r["radius"] <= rep["r0"])


def test_ghat_zero_function(gen2, treparam):
    rep = flatness_report(gen2, treparam, lambda x: 0 * x)["ghat"]
    assert all(r["ratio"] == 0.0 for r in rep["rows"])


def test_delta_from_cube_root():
    d = delta_from_g(np.cbrt)
    assert d(np.array([0.1]))[0] == pytest.approx(1e-3, rel=1e-3)


# --------------------------------------------------------------------------
# pipeline


def test_pipeline_cubic_tangency():
    system, rep = quasitransverse_pipeline(0.5, 2.0, "cbrt(x1)", delta="x1")
    assert rep["pass"]
    assert rep["transversality"]["transverse"] and rep["transversality"]["theta_min"] > 0
    assert rep["checks"]["two_path_gap"] <= 1e-8
    y, z = system.step([0.2], np.array([0.5]))
    assert y[0] == pytest.approx(0.1)
    assert z[0] > 0.5


def test_pipeline_linear_g():
    _, rep = quasitransverse_pipeline(0.5, 2.0, "0.5*x1", delta="x1")
    assert rep["flatness"]["ghat"]["dghat_at_0"] == 0.0
    assert rep["pass"]


def test_pipeline_stage_label():
    with pytest.raises(PipelineError) as info:
        quasitransverse_pipeline(0.5, 1.0, "cbrt(x1)", delta="x1")
    assert info.value.stage == "matrix-log"


def test_pipeline_rejects_expanding_b():
    with pytest.raises(PipelineError) as info:
        quasitransverse_pipeline(1.5, 2.0, "cbrt(x1)", delta="x1")
    assert info.value.stage == "normal-form"
