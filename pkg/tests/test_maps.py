from __future__ import annotations

import numpy as np
import pytest
import yaml

from nonhyp.expr import ExpressionError, derivative, parse_expression, to_source
from nonhyp.maps import (
    Box,
    DomainError,
    builtin_map,
    c1_distance,
    eval_forward,
    eval_inverse,
    eval_jacobian,
    load_map_file,
    map_from_config,
    parse_map,
)


# --------------------------------------------------------------------------
# parsing


def test_model_source_parses_to_2d_map():
    sys = parse_map("x1 - x1^3, x2 + x2^3")
    assert sys.dimension == 2
    np.testing.assert_allclose(eval_forward(sys, [0.1, 0.1]), [0.099, 0.101], rtol=0, atol=1e-16)


def test_identity_1d():
    sys = parse_map("x1")
    assert sys.dimension == 1
    assert eval_forward(sys, [0.37])[0] == 0.37


@pytest.mark.parametrize(
    "src, message, pos",
    [
        ("x1 - x1^m", "unknown identifier m", 8),
        ("x1 +", "unexpected", 4),
        ("sin(x1, x2)", "arity mismatch", 0),
        ("x1 $ 2", "unexpected character", 3),
        ("foo(x1)", "unknown function foo", 0),
    ],
)
def test_parse_errors_carry_position(src, message, pos):
    with pytest.raises(ExpressionError) as info:
        parse_map(src, {})
    assert message in str(info.value)
    assert info.value.position == pos


def test_print_parse_fixpoint():
    src = "x1 - x1^3 + 0.25*sin(x2)/(1 + exp(-x1)) - abs(x2)^2"
    once = to_source(parse_expression(src, 2))
    assert to_source(parse_expression(once, 2)) == once


def test_symbolic_derivative():
    node = parse_expression("x1^2 + sin(x2)*p", 2, {"p": 1.0})
    assert to_source(derivative(node, "x1")) == "2 * x1"


def test_parse_eval_matches_hand_coded():
    sys = parse_map("x1 - x1^3 + 0.1*sin(x2), x2 + x2^3 - 0.2*x1*x2")
    rng = np.random.default_rng(1)
    p = rng.uniform(-1, 1, (1000, 2))
    x, y = p[:, 0], p[:, 1]
    want = np.stack([x - x**3 + 0.1 * np.sin(y), y + y**3 - 0.2 * x * y], axis=-1)
    np.testing.assert_allclose(eval_forward(sys, p), want, rtol=1e-15, atol=1e-15)


# --------------------------------------------------------------------------
# evaluation


def test_model_fixed_point(model):
    np.testing.assert_array_equal(eval_forward(model, [0.0, 0.0]), [0.0, 0.0])


def test_linear_forward(linear):
    np.testing.assert_array_equal(eval_forward(linear, [1.0, 1.0]), [0.5, 2.0])


def test_nonfinite_input_is_domain_error(model):
    with pytest.raises(DomainError):
        eval_forward(model, [np.nan, 0.0])


def test_nonfinite_output_is_domain_error():
    sys = parse_map("log(x1)")
    with pytest.raises(DomainError):
        eval_forward(sys, [-1.0])


def test_model_jacobian_at_origin_is_identity(model):
    np.testing.assert_array_equal(eval_jacobian(model, [0.0, 0.0]), np.eye(2))


def test_model_jacobian_off_origin(model):
    np.testing.assert_allclose(eval_jacobian(model, [0.1, 0.0]), np.diag([0.97, 1.0]), atol=1e-16)


def test_fd_vs_symbolic_jacobian():
    sys = parse_map("x1 - x1^3 + 0.01*x2^2, x2 + x2^3")
    p = [0.05, 0.07]
    gap = np.abs(eval_jacobian(sys, p) - eval_jacobian(sys, p, method="fd")).max()
    assert gap <= 1e-8


def test_identity_inverse():
    np.testing.assert_array_equal(eval_inverse(builtin_map("identity"), [0.3, -0.2]), [0.3, -0.2])


def test_linear_inverse(linear):
    np.testing.assert_allclose(eval_inverse(linear, [0.5, 2.0]), [1.0, 1.0], rtol=0, atol=1e-15)


def test_model_round_trip(model):
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.2, 0.2, (100, 2))
    back = eval_forward(model, eval_inverse(model, pts))
    assert np.abs(back - pts).max() <= 1e-11


# --------------------------------------------------------------------------
# c1 distance


def test_c1_distance_reflexive(model):
    assert c1_distance(model, model, Box.cube(0.2, 2), 11) == 0.0


def test_c1_distance_constant_shift(model):
    shifted = parse_map("x1 - x1^3 + 0.001, x2 + x2^3")
    assert c1_distance(model, shifted, Box.cube(0.2, 2), 21) == pytest.approx(0.001, abs=1e-15)


def test_c1_distance_1d_calculus():
    f = parse_map("x1")
    g = parse_map("x1 + 0.01*x1^2")
    assert c1_distance(f, g, Box.from_intervals([[-1, 1]]), 101) == pytest.approx(0.03, abs=1e-14)


def test_c1_distance_dimension_mismatch(model):
    with pytest.raises(ValueError):
        c1_distance(model, parse_map("x1"), Box.cube(0.2, 2), 5)


# --------------------------------------------------------------------------
# boxes and map files


def test_box_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Box((1.0,), (0.0,))


def test_map_file_round_trip(tmp_path):
    path = tmp_path / "m.yaml"
    path.write_text(yaml.safe_dump({
        "dimension": 2,
        "forward": ["a*x1", "b*x2"],
        "inverse": ["x1/a", "x2/b"],
        "params": {"a": 0.5, "b": 2.0},
        "stable_split": 1,
        "domain": [[-1, 1], [-1, 1]],
    }), encoding="utf-8")
    sys = load_map_file(path)
    np.testing.assert_array_equal(eval_forward(sys, [1.0, 1.0]), [0.5, 2.0])
    assert sys.stable_split == 1


def test_map_file_unknown_key():
    with pytest.raises(ValueError, match="unknown map file key"):
        map_from_config({"forward": "x1", "colour": 1})


def test_map_file_dimension_mismatch():
    with pytest.raises(ValueError, match="declared dimension"):
        map_from_config({"forward": "x1, x2", "dimension": 3})
