import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncsagree.agreement import (
    ContingencyTable,
    WeightMatrix,
    compare_pair,
    contingency,
    interpret_kappa,
    kappa_point,
    lin_ccc,
    lin_fisher_variance,
    pairwise_compare,
    percent_agreement,
    weighted_kappa,
)
from ncsagree.errors import DegeneracyError
from oracles import contingency_brute, kappa_direct, lin_direct, lin_fisher_variance_r_form, four_class_weights

FIXTURES = Path(__file__).parent / "fixtures"


# --- contingency ------------------------------------------------------------------


def test_identity_table():
    t = contingency([1, 2, 3, 4], [1, 2, 3, 4])
    assert np.array_equal(t.counts, np.eye(4, dtype=int))


def test_hand_tabulation():
    t = contingency([1, 1, 2, 3], [1, 2, 2, 4])
    expected = np.zeros((4, 4), int)
    expected[0, 0] = expected[0, 1] = expected[1, 1] = expected[2, 3] = 1
    assert np.array_equal(t.counts, expected)
    assert t.total == 4


@pytest.mark.parametrize("a, b", [([], []), ([1, 2], [1]), ([0, 1], [1, 1]), ([1, 5], [1, 1])])
def test_contingency_rejects_bad_input(a, b):
    with pytest.raises(ValueError):
        contingency(a, b)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4)), min_size=1, max_size=80))
def test_contingency_matches_brute_force(pairs):
    a, b = zip(*pairs)
    t = contingency(a, b)
    assert t.counts.tolist() == contingency_brute(a, b, 4)
    assert t.transpose().counts.tolist() == contingency_brute(b, a, 4)
    assert t.transpose().row_label == t.col_label


# --- percent agreement ---------------------------------------------------------------


def test_percent_agreement_values():
    assert percent_agreement(contingency([1, 2, 3, 4], [1, 2, 3, 4])) == 1.0
    assert percent_agreement(contingency([1, 1, 2, 3], [1, 2, 2, 4])) == 0.5
    assert percent_agreement(ContingencyTable(np.full((4, 4), 3))) == 0.25


def test_percent_agreement_empty_table():
    with pytest.raises(DegeneracyError):
        percent_agreement(ContingencyTable(np.zeros((4, 4), int)))


# --- weights and kappa --------------------------------------------------------------


def test_default_weights_for_four_classes():
    assert WeightMatrix.linear(4).values.tolist() == four_class_weights()


@pytest.mark.parametrize("seed", range(5))
def test_kappa_invariant_to_weight_rescaling(seed):
    counts = np.random.default_rng(seed).integers(0, 40, size=(4, 4)) + 1
    d = np.abs(np.subtract.outer(np.arange(4), np.arange(4)))
    cohen = WeightMatrix(1.0 - d / 3)
    t = ContingencyTable(counts)
    assert kappa_point(t, cohen) == pytest.approx(kappa_point(t), abs=1e-12)


@pytest.mark.parametrize(
    "values",
    [[[1, 0.5], [0.4, 1]], [[0.9, 0.5], [0.5, 1]], [[1, 1.5], [1.5, 1]], [[1, 0], [0, 1], [0, 0]]],
)
def test_weight_validation(values):
    with pytest.raises(ValueError):
        WeightMatrix(np.array(values, dtype=float))


def test_kappa_perfect_agreement():
    k = weighted_kappa(ContingencyTable(np.diag([25] * 4)), seed=1)
    assert k.value == 1.0
    assert k.ci == (1.0, 1.0)


def test_kappa_independence():
    # p_o = p_e = 11/16 for the uniform table
    k = weighted_kappa(ContingencyTable(np.full((4, 4), 10)), seed=1)
    assert abs(k.value) <= 1e-12
    assert k.ci_low < 0 < k.ci_high


def test_kappa_fixture_matches_direct_evaluation():
    fixture = json.loads((FIXTURES / "kappa_table.json").read_text())
    table = ContingencyTable(np.array(fixture["counts"]))
    assert abs(kappa_point(table) - float(fixture["kappa"])) <= 1e-12
    assert abs(kappa_point(table) - kappa_direct(fixture["counts"], four_class_weights())) <= 1e-12


@pytest.mark.parametrize("seed", range(25))
def test_kappa_random_tables(seed):
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 50, size=(4, 4))
    counts[0, 0] += 1
    assert abs(kappa_point(ContingencyTable(counts)) - kappa_direct(counts.tolist(), four_class_weights())) <= 1e-12


def test_kappa_all_mass_in_one_cell():
    counts = np.zeros((4, 4), int)
    counts[2, 2] = 9
    assert kappa_point(ContingencyTable(counts)) == 1.0


def test_kappa_degenerate_custom_weights():
    # all-ones weights force p_o = p_e = 1, which counts as full agreement
    w = WeightMatrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    table = ContingencyTable(np.array([[3, 1], [2, 4]]))
    assert kappa_point(table, w) == 1.0
    w3 = WeightMatrix(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    odd = ContingencyTable(np.array([[0, 5, 0], [0, 0, 0], [0, 0, 0]]))
    assert kappa_point(odd, w3) == 1.0
    with pytest.raises(DegeneracyError):
        kappa_point(ContingencyTable(np.zeros((3, 3), int)), w3)


def test_kappa_weight_size_mismatch():
    with pytest.raises(ValueError):
        kappa_point(ContingencyTable(np.eye(3, dtype=int)), WeightMatrix.linear(4))


def test_kappa_bootstrap_is_seeded():
    t = ContingencyTable(np.array([[30, 5, 1, 0], [6, 20, 4, 1], [1, 5, 12, 3], [0, 1, 3, 8]]))
    a = weighted_kappa(t, seed=7)
    b = weighted_kappa(t, seed=7)
    c = weighted_kappa(t, seed=8)
    assert a == b
    assert a.ci != c.ci
    assert a.ci_low <= a.value <= a.ci_high


def test_kappa_without_bootstrap():
    k = weighted_kappa(ContingencyTable(np.eye(4, dtype=int) * 3), n_boot=0)
    assert k.ci is None and k.method == "none"


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 30), min_size=16, max_size=16).filter(lambda c: sum(c) > 0))
def test_kappa_symmetric_under_transpose(cells):
    t = ContingencyTable(np.array(cells).reshape(4, 4))
    try:
        k = kappa_point(t)
    except DegeneracyError:
        return
    assert abs(k - kappa_point(t.transpose())) <= 1e-12
    assert -1.0 <= k <= 1.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=4, max_size=4), st.lists(st.integers(1, 20), min_size=4, max_size=4))
def test_kappa_zero_for_independent_margins(rows, cols):
    counts = np.outer(rows, cols)
    assert abs(kappa_point(ContingencyTable(counts))) <= 1e-12


# --- Lin's concordance ------------------------------------------------------------


def test_lin_reference_example():
    est = lin_ccc(np.arange(1, 11), np.arange(11, 21))
    assert abs(est.value - 0.142) <= 0.0005
    assert est.value == pytest.approx(16.5 / 116.5, rel=1e-12)
    assert est.ci_low < est.value < est.ci_high


def test_lin_identity():
    x = np.random.default_rng(0).normal(size=50)
    est = lin_ccc(x, x)
    assert est.value == 1.0
    assert est.ci == (1.0, 1.0)


def test_lin_two_points():
    assert lin_ccc([0, 1], [0, 2]).value == pytest.approx(2 / 3, rel=1e-15)


def test_lin_degenerate_and_mismatch():
    with pytest.raises(DegeneracyError):
        lin_ccc([1, 1, 1], [2, 2, 2])
    with pytest.raises(ValueError):
        lin_ccc([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        lin_ccc([1], [1])


def test_lin_one_constant_vector():
    est = lin_ccc([1.0, 2.0, 3.0, 4.0], [2.0, 2.0, 2.0, 2.0])
    assert est.value == 0.0
    assert est.ci_low <= 0.0 <= est.ci_high


@pytest.mark.parametrize("seed", range(20))
def test_lin_matches_exact_evaluation(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=30)
    y = 0.7 * x + rng.normal(0.3, 0.5, size=30)
    assert abs(lin_ccc(x, y).value - lin_direct(x.tolist(), y.tolist())) <= 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_fisher_variance_equals_textbook_form(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 200))
    x = rng.normal(size=n)
    y = rng.uniform(0.2, 1.5) * x + rng.normal(rng.uniform(-1, 1), rng.uniform(0.1, 2), size=n)
    mx, my = x.mean(), y.mean()
    sxx, syy = ((x - mx) ** 2).mean(), ((y - my) ** 2).mean()
    sxy = ((x - mx) * (y - my)).mean()
    lcc = 2 * sxy / (sxx + syy + (mx - my) ** 2)
    ours = lin_fisher_variance(lcc, sxx, syy, sxy, mx - my, n)
    assert ours == pytest.approx(lin_fisher_variance_r_form(x.tolist(), y.tolist()), rel=1e-9)


def test_lin_fisher_ci_coverage():
    # nominal 95% interval should cover the population value most of the time
    rng = np.random.default_rng(11)
    cov = np.array([[1.0, 0.8], [0.8, 1.0]])
    true = 2 * 0.8 / (1 + 1 + 0.5**2)
    hits = 0
    for _ in range(400):
        xy = rng.multivariate_normal([0, 0.5], cov, size=200)
        est = lin_ccc(xy[:, 0], xy[:, 1])
        hits += est.ci_low <= true <= est.ci_high
    assert 0.92 <= hits / 400 <= 0.98


def test_lin_bootstrap_ci():
    rng = np.random.default_rng(3)
    x = rng.normal(size=300)
    y = x + rng.normal(0.2, 0.5, size=300)
    a = lin_ccc(x, y, ci="bootstrap", n_boot=500, seed=5)
    b = lin_ccc(x, y, ci="bootstrap", n_boot=500, seed=5)
    fisher = lin_ccc(x, y)
    assert a == b
    assert a.ci_low <= a.value <= a.ci_high
    assert a.ci_low == pytest.approx(fisher.ci_low, abs=0.03)
    assert a.ci_high == pytest.approx(fisher.ci_high, abs=0.03)


vectors = st.lists(st.floats(-50, 50, allow_nan=False), min_size=3, max_size=40)


@settings(max_examples=100, deadline=None)
@given(vectors, st.floats(-2, 2), st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_lin_bounded_by_pearson_and_symmetric(x, slope, shift, seed):
    xa = np.array(x)
    ya = xa * slope + shift + np.random.default_rng(seed).normal(size=len(x))
    if np.ptp(xa) < 1e-6 or np.ptp(ya) < 1e-6:
        return
    lcc = lin_ccc(xa, ya, ci="none").value
    r = np.corrcoef(xa, ya)[0, 1]
    assert abs(lcc) <= abs(r) + 1e-12
    assert lin_ccc(ya, xa, ci="none").value == pytest.approx(lcc, abs=1e-12)


def test_lin_equals_pearson_when_location_and_scale_match():
    rng = np.random.default_rng(9)
    x = rng.normal(size=100)
    y = rng.normal(size=100)
    y = (y - y.mean()) / y.std() * x.std() + x.mean()
    assert lin_ccc(x, y).value == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


# --- bands ------------------------------------------------------------------------


@pytest.mark.parametrize(
    "value, band",
    [
        (0.66, "substantial"),
        (-0.1, "poor"),
        (0.20, "slight"),
        (0.0, "slight"),
        (0.10, "slight"),
        (0.201, "slight"),
        (0.205, "fair"),
        (0.30, "fair"),
        (0.40, "fair"),
        (0.50, "moderate"),
        (0.60, "moderate"),
        (0.70, "substantial"),
        (0.80, "substantial"),
        (0.90, "almost perfect"),
        (1.0, "almost perfect"),
        (-1.0, "poor"),
    ],
)
def test_landis_koch_bands(value, band):
    assert interpret_kappa(value) == band


def test_band_rejects_out_of_range():
    with pytest.raises(ValueError):
        interpret_kappa(1.5)
    with pytest.raises(ValueError):
        interpret_kappa(float("nan"))


# --- pairwise ---------------------------------------------------------------------


def fake_scores(systems, n=400, seed=0):
    rng = np.random.default_rng(seed)
    base = rng.lognormal(0, 1, n)
    keys = [f"p{i:04d}" for i in range(n)]
    return {s: dict(zip(keys, base * rng.lognormal(0, 0.3, n))) for s in systems}, keys


@pytest.mark.parametrize("m, expected", [(2, 1), (3, 3), (6, 15)])
def test_number_of_pairs(m, expected):
    systems = [f"S{i}" for i in range(m)]
    ncs, _ = fake_scores(systems)
    results = pairwise_compare(ncs, systems, n_boot=50, seed=1)
    assert len(results) == expected
    assert len({(r.system_a, r.system_b) for r in results}) == expected


def test_self_pair_is_perfect():
    ncs, _ = fake_scores(["A"])
    (r,) = pairwise_compare(ncs, ["A"], pairs=[("A", "A")], n_boot=100, seed=3)
    assert r.percent_agreement == 1.0 and r.kappa.value == 1.0 and r.lcc.value == 1.0


def test_pair_symmetry():
    ncs, keys = fake_scores(["A", "B"])
    sa = [ncs["A"][k] for k in keys]
    sb = [ncs["B"][k] for k in keys]
    ab = compare_pair("A", "B", sa, sb, n_boot=0)
    ba = compare_pair("B", "A", sb, sa, n_boot=0)
    assert ab.percent_agreement == ba.percent_agreement
    assert ab.kappa.value == pytest.approx(ba.kappa.value, abs=1e-12)
    assert ab.lcc.value == pytest.approx(ba.lcc.value, abs=1e-12)
    assert np.array_equal(ab.table.counts, ba.table.counts.T)


def test_pairwise_independent_of_workers():
    systems = ["A", "B", "C", "D"]
    ncs, _ = fake_scores(systems, seed=4)
    one = pairwise_compare(ncs, systems, n_boot=200, seed=9, workers=1)
    many = pairwise_compare(ncs, systems, n_boot=200, seed=9, workers=4)
    assert [(r.kappa, r.lcc, r.percent_agreement) for r in one] == [(r.kappa, r.lcc, r.percent_agreement) for r in many]


def test_pairwise_uses_shared_papers_by_default():
    ncs, keys = fake_scores(["A", "B"], n=100)
    del ncs["B"][keys[0]]
    (r,) = pairwise_compare(ncs, ["A", "B"], n_boot=0)
    assert r.n == 99


def test_pairwise_fixed_thresholds():
    ncs, keys = fake_scores(["A", "B"], n=100)
    from ncsagree.css import CssThresholds

    fixed = {"A": CssThresholds((1.0, 2.0, 3.0)), "B": CssThresholds((1.0, 2.0, 3.0))}
    (r,) = pairwise_compare(ncs, ["A", "B"], n_boot=0, fixed_thresholds=fixed)
    assert r.thresholds_a.means == (1.0, 2.0, 3.0)


def test_kappa_band_consistent():
    ncs, _ = fake_scores(["A", "B", "C"])
    for r in pairwise_compare(ncs, ["A", "B", "C"], n_boot=100, seed=2):
        assert r.kappa_band == interpret_kappa(r.kappa.value)
        assert r.kappa.ci_low <= r.kappa.value <= r.kappa.ci_high
        assert r.lcc.ci_low <= r.lcc.value <= r.lcc.ci_high
        assert math.isclose(r.percent_agreement, np.trace(r.table.counts) / r.n)
