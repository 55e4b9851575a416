import csv
from fractions import Fraction
import io
import json
import math

import numpy as np
import pytest

from sturmdim import bandtree, dimension, frequency
from sturmdim.errors import ConfigError, DepthUnavailable, NoRootInUnitInterval

GOLDEN = frequency.parse_cf("periodic:1")
SILVER = frequency.parse_cf("periodic:2")


def test_band_sum_basics(tree):
    t = tree("periodic:2", 24, 6)
    for k in range(t.depth + 1):
        assert dimension.band_sum(t, k, 0).value == len(t.level(k))
    for beta in (0.2, 0.7):
        # both roots have length 4
        assert dimension.band_sum(t, 0, beta).value == pytest.approx(2 * 4 ** beta)
    totals = [dimension.band_sum(t, k, 1).value for k in range(t.depth + 1)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(totals, totals[1:]))


def test_band_sum_enclosure_order(tree):
    t = tree("periodic:1", 24, 8)
    for k in range(1, 9):
        b = dimension.band_sum(t, k, 0.4)
        assert b.lower <= b.value <= b.upper


def test_root_two_equal_bands():
    L = 0.01
    s, clamped = dimension._root(np.log([L, L]), 1e-14)
    assert not clamped
    assert s == pytest.approx(math.log(2) / math.log(1 / L), abs=1e-12)


def test_root_single_band():
    assert dimension._root(np.log([0.3]), 1e-14) == (0.0, False)


def test_root_clamps_when_sum_exceeds_one():
    assert dimension._root(np.log([0.8, 0.8]), 1e-14) == (1.0, True)


def test_solve_sk_clamping(tree):
    t = tree("periodic:1", 24, 8)
    first = dimension.solve_sk(t, 1)
    assert first.clamped and first.s == 1.0
    with pytest.raises(NoRootInUnitInterval):
        dimension.solve_sk(t, 1, clamp=False)
    sk = dimension.solve_sk(t, 6)
    assert not sk.clamped
    assert sk.lo <= sk.s <= sk.hi
    assert dimension.band_sum(t, 6, sk.s).value == pytest.approx(1, abs=1e-10)


def test_solve_sk_errors(tree):
    t = tree("periodic:1", 24, 8)
    with pytest.raises(DepthUnavailable):
        dimension.solve_sk(t, 9)
    cut = bandtree.expand_tree(GOLDEN, 24, 2, eps=Fraction(1, 24))
    with pytest.raises(ConfigError):
        dimension.solve_sk(cut, 2, eps=Fraction(1, 100))


def test_tail_stats():
    assert dimension.tail_stats([5, 1, 2, 3, 4], window=3) == (2, 4)


def test_gap_sums(tree):
    t = tree("periodic:2", 24, 6)
    for k in range(t.depth):
        covered = dimension.band_sum(t, k, 1).value
        assert dimension.gap_sum(t, k, 1) <= covered
        assert dimension.gap_sum(t, k, 0.3) >= dimension.gap_sum(t, k, 0.6)
    with pytest.raises(DepthUnavailable):
        dimension.gap_sum(t, t.depth, 0.5)
    ps = dimension.gap_partial_sums(t, 0.5)
    assert len(ps) == t.depth and all(b >= a for a, b in zip(ps, ps[1:]))


def test_growth_product_vanishes_at_zero():
    gp = dimension.growth_product(GOLDEN, 0.0, 3)
    assert gp.log_norm == -math.inf
    assert not np.any(gp.matrix())


def test_golden_characteristic_polynomial():
    for x in (0.1, 0.4, 0.9):
        lam = np.linalg.eigvals(dimension.R_matrix(1, x))
        for v in lam:
            assert abs(v ** 3 - 2 * x * v - x * x) < 1e-12


def test_ledger_reconstructs_product():
    x = 0.37
    gp = dimension.growth_product(SILVER, x, 9)
    direct = np.linalg.multi_dot([dimension.R_matrix(2, x)] * 9)
    assert np.allclose(gp.matrix(), direct, rtol=1e-12)
    assert gp.log_norms()[-1] == pytest.approx(math.log(np.max(np.abs(direct))))


def test_golden_growth_at_critical_point():
    assert dimension.period_growth(GOLDEN, math.sqrt(2) - 1) == pytest.approx(1, abs=1e-12)


@pytest.mark.parametrize("x", [0.05, 0.2, 0.5, 0.9])
def test_growth_bracket(x):
    """For bounded digits, growth sits between (K/2 v 2^(1/3)) x and K sqrt(6x)."""
    for freq in (GOLDEN, SILVER, frequency.parse_cf("periodic:1,3")):
        K = freq.exact_K()[0]
        psi = dimension.period_growth(freq, x)
        assert max(K / 2, 2 ** (1 / 3)) * x <= psi * (1 + 1e-12)
        assert psi <= K * math.sqrt(6 * x) * (1 + 1e-12)


def test_growth_exceeds_pair_bound():
    # K sqrt(2x) is not an upper bound: golden at x = 0.05 already beats it
    assert dimension.period_growth(GOLDEN, 0.05) > math.sqrt(2 * 0.05)


def test_growth_estimators_converge():
    # silver's period matrix has growth exactly (1 + sqrt 2) x
    target = (1 + math.sqrt(2)) * 0.3
    ratio = dimension.psi_phi(SILVER, 0.3, 200)
    root = dimension.psi_phi(SILVER, 0.3, 200, estimator="root")
    assert ratio.exact == pytest.approx(target, rel=1e-12)
    assert abs(ratio.psi - target) < abs(root.psi - target)
    assert ratio.psi <= ratio.phi
    # golden solves l^3 = 2xl + x^2
    g = dimension.psi_phi(GOLDEN, 0.3, 200).exact
    assert g ** 3 == pytest.approx(0.6 * g + 0.09, rel=1e-12)
    with pytest.raises(ValueError):
        dimension.growth_estimates([0.0], "median")


def test_f_star_values():
    golden = dimension.f_star(GOLDEN, mode="exact")
    assert golden.value == pytest.approx(math.sqrt(2) - 1, abs=1e-10)
    lo, hi = golden.bracket
    assert lo <= golden.value <= hi
    assert golden.value < 1 / 2  # below 1/(2K^2) with K = 1
    # the a = 2 period matrix factors as -(l + x)(-l^2 + 2xl + x^2): growth (1 + sqrt 2) x
    silver = dimension.f_star(SILVER, mode="exact")
    assert silver.value == pytest.approx(math.sqrt(2) - 1, abs=1e-10)
    unbounded = dimension.f_star(frequency.parse_cf("formula:k"))
    assert unbounded.value == 0 and unbounded.mode == "unbounded"
    assert unbounded.neg_log == math.inf
    with pytest.raises(ConfigError):
        dimension.f_star(frequency.parse_cf("list:1,2,3"), mode="exact")


def test_f_bracket():
    assert dimension.f_bracket(1) == (1 / 6, 2 ** (-1 / 3))
    assert dimension.f_bracket(4) == (1 / 96, 0.5)


def test_matrix_bounds_at_level_zero():
    for g in (0.3, 0.8):
        assert dimension.matrix_bound_b(GOLDEN, 24, g, 0, "upper") == pytest.approx(2 * 4 ** g)
        assert dimension.matrix_bound_b(GOLDEN, 24, g, 0, "lower") == 2
    with pytest.raises(ValueError):
        dimension.matrix_bound_b(GOLDEN, 24, 0.5, 1, "middle")
    with pytest.raises(ValueError):
        dimension.Q_matrix(1, 24, 0.5, "bar")


def test_matrix_bounds_count_bands_at_gamma_zero(tree):
    for spec in ("periodic:1", "periodic:2", "eventually:3|1"):
        t = tree(spec, 24, 6)
        counts = bandtree.level_counts(t)
        for k in range(t.depth + 1):
            assert dimension.matrix_bound_b(t.freq, 24, 0, k, "lower") == pytest.approx(counts[k])
            assert dimension.matrix_bound_b(t.freq, 24, 0, k, "upper") == pytest.approx(counts[k])


def test_hat_lower_bound(tree):
    for spec in ("periodic:1", "periodic:2"):
        t = tree(spec, 24, 6)
        for k in range(1, 7):
            assert dimension.hat_lower_bound(t.freq, 24, 0.5, k) <= dimension.band_sum_hat(t, k, 0.5)


def test_bulb_sandwich_refuses_truncated_tree():
    cut = bandtree.expand_tree(GOLDEN, 24, 1, eps=Fraction(1, 24))
    with pytest.raises(ConfigError):
        dimension.bulb_sandwich(cut, 0.5)


def test_dim_bracket():
    br = dimension.dim_bracket(GOLDEN, 24)
    assert br.lower[0] < br.lower[1]
    assert br.lower[1] == pytest.approx(0.881374 / math.log(16 / 3), abs=1e-5)
    assert dimension.dim_bracket(frequency.parse_cf("formula:k"), 24).lower == (1.0, 1.0)


def test_unbounded_lower_bound_grows():
    freq = frequency.parse_cf("formula:k")
    vals = [dimension.unbounded_lower_bound(freq, 24, k) for k in (5, 50, 500)]
    assert vals[0] < vals[1] < vals[2] < 1


def test_asymptotic_prediction():
    pred = dimension.asymptotic_prediction(GOLDEN, 24, {8: 0.3})
    assert pred.neg_log_f_lower == pytest.approx(0.881374, abs=1e-6)
    assert pred.ratios[8] == pytest.approx(0.3 * math.log(24) / pred.neg_log_f_lower)


def test_lipschitz_probe():
    same = dimension.lipschitz_probe(GOLDEN, 24, 24, 4)
    assert same.quotient == 0
    probe = dimension.lipschitz_probe(GOLDEN, 24, 24.5, 4)
    assert 0 < probe.quotient < 1
    assert probe.s1 > probe.s2


def test_report_outputs(tree):
    t = tree("periodic:1", 24, 6)
    rep = dimension.dimension_report(t, extra_eps=Fraction(1, 24))
    rows = list(csv.DictReader(io.StringIO(dimension.report_csv(rep))))
    assert list(rows[0]) == dimension.REPORT_COLUMNS + ["s_k_eps"]
    assert len(rows) == 6 and rows[-1]["gap_sum"] == ""
    doc = json.loads(dimension.report_json(rep))
    assert doc["freq"] == "periodic:1" and len(doc["rows"]) == 6
    assert doc["prediction"]["neg_log_f_lower"] == pytest.approx(0.881374, abs=1e-6)
