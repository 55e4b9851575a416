import csv
from fractions import Fraction
import io
import json
import math

import pytest

from sturmdim import bandtree, dimension, frequency, gibbs
from sturmdim.bandtree import E12
from sturmdim.errors import DepthUnavailable, NoWitness


def test_index_range():
    assert list(gibbs.index_range(5, 0)) == [1, 2, 3, 4, 5]
    assert list(gibbs.index_range(5, Fraction(1, 6))) == [2, 3, 4]


@pytest.mark.parametrize("beta", [0.2, 0.5, 0.9])
def test_A_small_n(beta):
    assert gibbs.A_n_beta(0, beta) == 0
    # one index, sin(pi/2) = 1
    assert gibbs.A_n_beta(1, beta) == pytest.approx(2 ** -beta)


def test_A_at_beta_one_half():
    # sum_j sin(j pi/(n+1)) = cot(pi/(2(n+1)))
    n = 9
    expected = math.cos(math.pi / 20) / math.sin(math.pi / 20) / math.sqrt(n + 1)
    assert gibbs.A_n_beta(n, 0.5) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("beta", [0.1, 0.5, 0.8])
def test_I_beta_closed_form(beta):
    assert gibbs.I_beta(beta) == pytest.approx(gibbs.I_beta_closed(beta), rel=1e-12)
    assert gibbs.I_beta_closed(0.5) == pytest.approx(2 / math.pi)


def test_order_zero_measure(tree):
    t = tree("periodic:1", 24, 8)
    mu = gibbs.finite_gibbs(t, 0.5, m=0)
    assert [mu.mass(n) for n in t.roots()] == [Fraction(1, 2), Fraction(1, 2)]


@pytest.mark.parametrize("spec", ["periodic:1", "periodic:2", "eventually:3|1"])
def test_masses_exact_and_additive(tree, spec):
    t = tree(spec, 24, 6)
    mu = gibbs.finite_gibbs(t, 0.4, m=6)
    for j in range(7):
        assert mu.total(j) == 1
    for j in range(6):
        for node in mu.levels[j]:
            assert mu.mass(node) == sum((mu.mass(c) for c in node.children), Fraction(0))


def test_alias_children_carry_parent_mass(tree):
    t = tree("periodic:1", 24, 8)
    mu = gibbs.finite_gibbs(t, 0.3, m=5)
    for node in mu.levels[3]:
        if node.band_type == "I":
            (child,) = node.children
            assert mu.mass(child) == mu.mass(node)


def test_truncated_measure_skips_dropped_words():
    freq = frequency.parse_cf("list:1,12,12")
    t = bandtree.expand_tree(freq, 24, 3)
    mu = gibbs.finite_gibbs(t, 0.5, Fraction(1, 13), m=3)
    assert mu.total() == 1
    kept = dimension.level_nodes(t, 3, Fraction(1, 13))
    assert set(mu.levels[3]) == set(kept) and len(kept) < len(t.level(3))
    frac = gibbs.retained_fraction(t, 0.5, 3, Fraction(1, 13))
    assert 0 < frac < 1


def test_measure_needs_depth(tree):
    with pytest.raises(DepthUnavailable):
        gibbs.finite_gibbs(tree("periodic:1", 24, 8), 0.5, m=9)


def test_type_decomposition_is_exact(tree):
    t = tree("periodic:2", 24, 6)
    parts = gibbs.b_type_decomposition(t, 5, 0.5)
    mu = gibbs.finite_gibbs(t, 0.5, m=5)
    assert sum(parts.values()) == mu.b
    assert float(mu.b) == pytest.approx(dimension.band_sum(t, 5, 0.5).value, rel=1e-14)


def test_zeta(tree):
    golden = tree("periodic:1", 24, 8)
    assert gibbs.zeta_n(golden, 1) == 1
    with pytest.raises(NoWitness):
        gibbs.zeta_n(golden, 2)
    silver = tree("periodic:2", 24, 8)
    z, eta = gibbs.zeta_eta(silver, 2)
    assert 0 < z < 1 and eta >= 1
    node, r = gibbs.zeta_witnesses(silver, 2)[0]
    assert node.band_type == "I" and r == z


def test_covariation(tree):
    t = tree("periodic:1", 24, 10)
    type1 = [n for n in t.level(4) if n.band_type == "I"]
    w, w_t = type1[0].word, type1[1].word
    u = [(E12, 1, 1)]
    assert gibbs.covariation_probe(t, w, w, u) == 1
    # the e12 child of a type-I band with next digit 1 is the band itself
    assert gibbs.covariation_probe(t, w, w_t, u) == pytest.approx(1)
    eta, pairs = gibbs.covariation_sweep(t, 2)
    assert eta >= 1 and pairs > 0


def test_ratio_report(tree):
    t = tree("periodic:2", 24, 8)
    mu = gibbs.finite_gibbs(t, 0.5, m=6)
    with pytest.raises(DepthUnavailable):
        gibbs.gibbs_ratio_report(mu, t, 4)
    d = gibbs.gibbs_ratio_report(mu, t, 3)
    assert set(d.types) <= set(gibbs.TYPES)
    for r in d.types.values():
        assert 0 < r.min_A <= r.max_A and r.spread >= 1 and r.spread_a >= 1
    rows = list(csv.reader(io.StringIO(gibbs.diagnostics_csv([d]))))
    assert rows[0] == gibbs.DIAG_COLUMNS and len(rows) == 1 + len(d.types)


def test_level_ratio_diagnostic_is_bounded(tree):
    t = tree("periodic:2", 24, 8)
    ratios = gibbs.level_ratio_diagnostic(t, 0.5)
    assert len(ratios) == 8 and all(0 < r < 100 for r in ratios)


def test_measure_json(tree):
    t = tree("periodic:1", 24, 8)
    mu = gibbs.finite_gibbs(t, 0.5, m=3)
    doc = json.loads(gibbs.measure_json(mu, levels=[3], header={"tool": "x"}))
    assert doc["header"] == {"tool": "x"} and doc["m"] == 3
    assert len(doc["entries"]) == len(t.level(3))
    total = sum(Fraction(e["mass"]) for e in doc["entries"])
    assert abs(total - 1) < Fraction(1, 10 ** 35)
    assert {e["root"] for e in doc["entries"]} == {"I", "III"}
