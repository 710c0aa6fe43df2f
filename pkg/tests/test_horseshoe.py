from __future__ import annotations

import itertools

import numpy as np
import pytest

from nonhyp.horseshoe import (
    BranchTooThinError,
    SymbolWord,
    auto_tune_k,
    builtin_homoclinic_system,
    champernowne,
    coding_family,
    cover_check,
    cover_until,
    dist1,
    find_periodic_point,
    flat_disk,
    graph_transform,
    linear_toy_system,
    periodic_disk,
    primitive_words,
    random_admissible_disk,
    symbol_metric,
    track_inclination,
    verify_conjugacy,
    verify_contraction,
    word_disk,
)
from nonhyp.horseshoe.disks import AdmissibleDisk, AdmissibilityError, disk_from_function
from nonhyp.horseshoe.inclination import InclinationError
from nonhyp.horseshoe.system import Branch, load_system, perturbation_size
from nonhyp.maps import parse_map

WORDS5 = [str(w) for w in primitive_words(5)]


@pytest.fixture(scope="module")
def fixed_disks(homoclinic):
    return {w: periodic_disk(homoclinic, w).disk for w in WORDS5}


def first_difference(a: str, b: str) -> int:
    A, B = SymbolWord.parse(a), SymbolWord.parse(b)
    k = 0
    while A[k] == B[k]:
        k += 1
    return k


# --------------------------------------------------------------------------
# built-in system


def test_fixed_point_and_center_direction(homoclinic):
    np.testing.assert_array_equal(homoclinic.jacobian(0.0, 0.0), np.diag([0.5, 1.0]))
    y, z = homoclinic.step(0.0, 0.0)
    assert (float(y), float(z)) == (0.0, 0.0)


def test_conditionally_unstable_center(homoclinic):
    _, z = homoclinic.step(0.0, 0.1)
    assert float(z) == pytest.approx(0.101, abs=1e-16)
    assert abs(float(z)) >= 0.1


def test_transition_anchor(homoclinic):
    # the transition carries (0, z_star) on the center-unstable axis to the homoclinic point
    y, z = homoclinic.step(0.0, 0.2)
    assert (float(y), float(z)) == (0.3, 0.0)


def test_stable_slice_invariant(homoclinic):
    ys = np.linspace(-0.2, 0.2, 41)
    _, z = homoclinic.step(ys, np.zeros_like(ys))
    assert np.all(z == 0.0)


def test_invalid_parameters():
    with pytest.raises(ValueError, match="contractions"):
        builtin_homoclinic_system({"mu": 5.0})
    with pytest.raises(ValueError, match="unknown homoclinic system parameter"):
        builtin_homoclinic_system({"bogus": 1.0})


def test_system_file(tmp_path):
    path = tmp_path / "sys.yaml"
    path.write_text("params:\n  lam: 0.4\n", encoding="utf-8")
    assert load_system(path).params["lam"] == 0.4
    path.write_text("colour: red\n", encoding="utf-8")
    with pytest.raises(ValueError, match="unknown system file key"):
        load_system(path)


# --------------------------------------------------------------------------
# disks and graph transforms


def test_dist1_examples():
    z = np.linspace(-1, 1, 257)
    a = AdmissibleDisk(0, z, 0 * z)
    assert dist1(a, a) == 0.0
    assert dist1(a, AdmissibleDisk(0, z, 0 * z + 0.01)) == pytest.approx(0.01, abs=1e-15)
    assert dist1(a, AdmissibleDisk(0, z, 0.01 * z)) == pytest.approx(0.02, abs=1e-15)


def test_dist1_chart_mismatch():
    z = np.linspace(-1, 1, 5)
    with pytest.raises(ValueError):
        dist1(AdmissibleDisk(0, z, 0 * z), AdmissibleDisk(1, z, 0 * z))


def test_vertical_segment_through_homoclinic_point(homoclinic):
    d = disk_from_function(homoclinic, 1, lambda z: 0.3 + 0 * z)
    out = graph_transform(homoclinic, d, 0)
    assert out.chart == 0 and len(out.z) == 257
    assert np.abs(out.eta).max() <= homoclinic.charts[0].eps_y
    assert np.abs(out.deta).max() <= 1.0


def test_linear_toy_transform_exact():
    toy = linear_toy_system()
    out = graph_transform(toy, flat_disk(toy, 0, 0.4), 0)
    np.testing.assert_array_equal(out.eta, np.full_like(out.eta, 0.1))


def test_branch_too_thin(homoclinic):
    # a branch whose window lies outside the chart's z-range receives no points
    from dataclasses import replace

    br = homoclinic.branch(0, 0)
    thin = replace(homoclinic, branches={**homoclinic.branches, (0, 0): Branch(0, 0, br.fn, br.jac, (5.0, 6.0))})
    with pytest.raises(BranchTooThinError):
        graph_transform(thin, flat_disk(thin, 0), 0)


def test_admissibility_error(homoclinic):
    with pytest.raises(AdmissibilityError):
        disk_from_function(homoclinic, 0, lambda z: 2.0 * z)


def test_graph_transform_preserves_admissibility(homoclinic):
    rng = np.random.default_rng(2)
    for i, j in homoclinic.realizable:
        for _ in range(5):
            out = graph_transform(homoclinic, random_admissible_disk(homoclinic, i, rng), j)
            c = homoclinic.charts[j]
            assert np.abs(out.eta - c.y_center).max() <= c.eps_y + 1e-12
            assert np.abs(out.deta).max() <= 1.0 + 1e-12


# --------------------------------------------------------------------------
# contraction


def test_linear_toy_contraction():
    rep = verify_contraction(linear_toy_system(), trials=20, seed=0)
    assert rep.max_ratio <= 0.25 + 1e-12


def test_builtin_contraction(homoclinic):
    rep = verify_contraction(homoclinic, trials=20, seed=1)
    assert rep.passed
    assert set(rep.ratios) == set(homoclinic.realizable)


def test_auto_tune_keeps_passing_k(homoclinic):
    tuned, rep = auto_tune_k(homoclinic)
    assert rep.passed and tuned.k >= 1


def test_perturbed_system_retunes():
    bump = parse_map("0.001*x2^2, 0.001*x1*x2")
    base = builtin_homoclinic_system()
    assert 0 < perturbation_size(base, bump) < 1e-3
    tuned, rep = auto_tune_k(builtin_homoclinic_system(perturbation=bump))
    assert rep.passed
    pp = find_periodic_point(tuned, "01")
    assert pp.residual <= 1e-8 and pp.itinerary == [0, 1]


# --------------------------------------------------------------------------
# periodic disks, coding and periodic points


def test_word_zero_disk_is_center_slice(fixed_disks):
    assert np.abs(fixed_disks["0"].eta).max() == 0.0


def test_word_01_disk_distinct(fixed_disks):
    assert dist1(fixed_disks["01"], fixed_disks["0"]) > 0


def test_periodic_disk_history_decays(homoclinic):
    pd = periodic_disk(homoclinic, "0011")
    h = np.asarray(pd.history)
    assert h[-1] < 1e-10
    assert np.all(np.diff(h[h > 1e-13]) < 0)


def test_coding_constant_fitted_at_k1_serves_all_k(fixed_disks):
    pairs = [(a, b, first_difference(a, b)) for a, b in itertools.combinations(WORDS5, 2)]
    pairs = [(a, b, k) for a, b, k in pairs if k > 0]
    C = max(dist1(fixed_disks[a], fixed_disks[b]) * 2 for a, b, k in pairs if k == 1)
    for a, b, k in pairs:
        assert dist1(fixed_disks[a], fixed_disks[b]) <= C * 2.0**-k * (1 + 1e-9), (a, b, k)
    # 0011... and 0101... agree in their first letter only
    assert first_difference("0011", "01") == 1
    assert dist1(fixed_disks["0011"], fixed_disks["01"]) <= C / 2


@pytest.mark.parametrize("lead", [0, 1])
def test_coding_slope(homoclinic, lead):
    fam = coding_family(homoclinic, lead, 8)
    assert -1.2 <= fam["slope"] <= -0.8
    assert all(fam["bound_holds"])


def test_periodic_point_origin(homoclinic):
    pp = find_periodic_point(homoclinic, "0")
    np.testing.assert_array_equal(pp.point, [0.0, 0.0])
    assert pp.residual == 0.0


def test_periodic_points_01_001(homoclinic):
    a = find_periodic_point(homoclinic, "01")
    b = find_periodic_point(homoclinic, "001")
    assert a.residual <= 1e-8 and b.residual <= 1e-8
    assert a.itinerary == [0, 1] and b.itinerary == [0, 1, 0]
    assert a.minimal_period == 2 and b.minimal_period == 3
    assert np.linalg.norm(a.point - b.point) > 1e-6
    # independent residual
    x = homoclinic.iterate(a.point, 2 * homoclinic.k)
    assert np.linalg.norm(x - a.point) <= 1e-8


def test_conjugacy_examples(homoclinic):
    assert verify_conjugacy(homoclinic, "0", 0)["dist1"] == 0.0
    assert verify_conjugacy(homoclinic, "01", 1)["dist1"] <= 1e-8


def test_conjugacy_unrealizable():
    toy = linear_toy_system()
    with pytest.raises(KeyError):
        verify_conjugacy(toy, "0", 1)


# --------------------------------------------------------------------------
# symbols


def test_symbol_metric_examples():
    zero = SymbolWord.parse("0")
    assert symbol_metric(zero, zero) == 0.0
    assert symbol_metric(zero, SymbolWord.parse("1(0)")) == 1.0
    assert symbol_metric(SymbolWord.parse("01"), zero) == pytest.approx(2 / 3, abs=1e-16)


def test_canonical_forms():
    assert SymbolWord.parse("0101") == SymbolWord.parse("01")
    assert str(SymbolWord((0, 1), periodic=False)) == "01(0)"
    assert SymbolWord.parse("01").shift() == SymbolWord.parse("10")
    with pytest.raises(ValueError):
        SymbolWord.parse("012")
    with pytest.raises(ValueError):
        SymbolWord(())


def test_primitive_words_and_champernowne():
    assert [str(w) for w in primitive_words(3)] == ["0", "1", "01", "001", "011"]
    assert len(primitive_words(5)) == 14
    assert champernowne(10) == (0, 1, 0, 0, 0, 1, 1, 0, 1, 1)


# --------------------------------------------------------------------------
# inclination


def test_inclination_linear_equality():
    lin = parse_map("0.5*x1, 2*x2", stable_split=1)
    tr = track_inclination(lin, [0.1, 0.0], [0.7, 1.0], 30)
    assert tr.kappa == 0.0
    np.testing.assert_allclose(tr.lambdas, tr.bounds, rtol=1e-12, atol=0)
    np.testing.assert_allclose(tr.lambdas, 0.7 * 0.25 ** np.arange(31), rtol=1e-12)


def test_inclination_zero_initial(homoclinic):
    tr = track_inclination(homoclinic, (0.05, 0.0), (0.0, 1.0), 30)
    assert tr.lambdas.max() <= tr.kappa / (tr.b - tr.a) + 1e-300


def test_inclination_builtin(homoclinic):
    tr = track_inclination(homoclinic, (0.05, 0.0), (1.0, 1.0), 30)
    assert tr.passed
    assert tr.state.a4_holds


def test_inclination_perturbed():
    bump = parse_map("0.01*x2, 0.01*x1*x2")
    sys = builtin_homoclinic_system(perturbation=bump)
    tr = track_inclination(sys, (0.05, 0.0), (1.0, 1.0), 30)
    assert tr.kappa > 0 and tr.passed


def test_inclination_vertical_vector_error(homoclinic):
    with pytest.raises(InclinationError, match="step 0"):
        track_inclination(homoclinic, (0.05, 0.0), (1.0, 0.0), 5)


# --------------------------------------------------------------------------
# central-disk coverage


def test_cover_after_twenty_steps(homoclinic):
    rep = cover_check(homoclinic, flat_disk(homoclinic, 0, 0.1), 20)
    assert rep.covers and rep.passed
    assert max(rep.beta_max, rep.dbeta_max) < 1e-3


def test_cover_center_slice_is_exact(homoclinic):
    for m in range(6):
        rep = cover_check(homoclinic, flat_disk(homoclinic, 0, 0.0), m)
        assert rep.beta_max == 0.0 and rep.dbeta_max == 0.0


def test_cover_zero_steps_reports_failure(homoclinic):
    rep = cover_check(homoclinic, flat_disk(homoclinic, 0, 0.1), 0)
    assert not rep.passed and rep.reason


def test_cover_until_finds_smallest_m(homoclinic):
    disk = flat_disk(homoclinic, 0, 0.1)
    rep = cover_until(homoclinic, disk)
    assert rep.passed
    assert not cover_check(homoclinic, disk, rep.m - 1).passed


def test_conjugacy_eventually_periodic(homoclinic):
    assert verify_conjugacy(homoclinic, "1(0)", 1)["pass"]
    d = word_disk(homoclinic, "1(0)")
    assert d.chart == 1
    assert dist1(d, graph_transform(homoclinic, periodic_disk(homoclinic, "0").disk, 1)) == 0.0
