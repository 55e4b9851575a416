"""Finite-order Gibbs-like measures on the band tree and their diagnostics.

``mu_{beta,eps,m}`` gives every retained level-``m`` band the mass
``|B_w|^beta / b_{m,beta}(eps)`` and coarser bands the sum over their
descendants. Masses are exact rationals built from the (double precision)
powers ``|B_w|^beta``, so normalization and additivity hold exactly.
"""

from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
import csv
import io
import json
import math

import mpmath
import numpy as np

from .bandtree import E12, check_epsilon
from .dimension import band_sum, level_nodes, word_kept
from .errors import DepthUnavailable, NoWitness, format_word

TYPES = ("I", "II", "III")


# ---------------------------------------------------------------------------
# A_{n,beta}

def index_range(n, eps):
    """Integers ``j`` with ``(n+1)eps < j < (n+1)(1-eps)``, as ``range``."""
    N = n + 1
    lo = math.floor(N * eps) + 1
    hi = math.ceil(N * (1 - eps)) - 1
    return range(lo, hi + 1)


def A_n_beta(n, beta, eps=0):
    """``sum_j (n+1)^(-beta) sin^(2 beta)(j pi/(n+1))`` over the retained indices."""
    eps = check_epsilon(eps)
    if n == 0:
        return 0.0
    N = n + 1
    r = index_range(n, eps)
    js = np.arange(r.start, r.stop, dtype=float)
    return N ** (-beta) * math.fsum(np.sin(js * (math.pi / N)) ** (2 * beta))


def I_beta(beta):
    """``(1/pi) * integral_0^pi sin^(2 beta) x dx`` by quadrature."""
    return float(mpmath.quad(lambda x: mpmath.sin(x) ** (2 * beta), [0, mpmath.pi]) / mpmath.pi)


def I_beta_closed(beta):
    return math.gamma(beta + 0.5) / (math.sqrt(math.pi) * math.gamma(beta + 1))


# ---------------------------------------------------------------------------
# measures

def _power(node, beta):
    """``|B|^beta`` as an exact rational (the double value, converted exactly)."""
    return Fraction(math.exp(beta * math.log(float(node.length))))


@dataclass
class GibbsApprox:
    m: int
    beta: float
    eps: Fraction
    masses: dict
    b: Fraction
    levels: list = field(default_factory=list)

    def mass(self, node):
        return self.masses.get(node, Fraction(0))

    def total(self, level=None):
        level = self.m if level is None else level
        return sum((self.masses[n] for n in self.levels[level]), Fraction(0))


def finite_gibbs(tree, beta, eps=None, m=None):
    """``mu_{beta,eps,m}`` on the bands of orders ``0..m``."""
    m = tree.depth if m is None else m
    if m > tree.depth:
        raise DepthUnavailable(f"measure of order {m} needs depth {m}, tree has {tree.depth}")
    beta = float(beta)
    leaves = level_nodes(tree, m, eps)
    eps = tree.epsilon if eps is None else Fraction(eps)
    weights = [_power(n, beta) for n in leaves]
    b = sum(weights, Fraction(0))
    masses = {n: w / b for n, w in zip(leaves, weights)}
    levels = [[] for _ in range(m + 1)]
    levels[m] = leaves
    for j in range(m, 0, -1):
        seen = {}
        for node in levels[j]:
            parent = node.parent
            if parent in seen:
                masses[parent] += masses[node]
            else:
                seen[parent] = True
                masses[parent] = masses[node]
        levels[j - 1] = sorted(seen, key=lambda p: p.index)
    return GibbsApprox(m, beta, eps, masses, b, levels)


def b_type_decomposition(tree, k, beta, eps=None):
    """Exact split of ``b_{k,beta}`` by the type of the level-``k`` band."""
    parts = {t: Fraction(0) for t in TYPES}
    for node in level_nodes(tree, k, eps):
        parts[node.band_type] += _power(node, float(beta))
    return parts


def retained_fraction(tree, beta, m, eps):
    """Mass that the untruncated measure puts on the ``eps``-retained level-``m`` words."""
    if tree.epsilon != 0:
        raise ValueError("retained fraction needs an untruncated tree")
    mu = finite_gibbs(tree, beta, 0, m)
    eps = check_epsilon(eps)
    return sum((mu.masses[n] for n in mu.levels[m] if word_kept(n.word, eps)), Fraction(0))


# ---------------------------------------------------------------------------
# zeta_n and covariation

def _e12_child(node):
    for c in node.children:
        if c.word[-1].edge == E12:
            return c
    return None


def zeta_witnesses(tree, n):
    """``(node, |B_wu|/|B_w|)`` for every type-I band whose next digit is ``n``, u = (e12,1,1).

    Ordered shallowest first, then left to right.
    """
    out = []
    for j in range(tree.depth):
        if tree.freq.digit(j + 1) != n:
            continue
        for node in tree.levels[j]:
            if node.band_type != "I":
                continue
            child = _e12_child(node)
            if child is not None:
                out.append((node, float(child.length / node.length)))
    return out


def zeta_n(tree, n):
    """``zeta_n`` from the canonical (shallowest, then leftmost) witness."""
    ws = zeta_witnesses(tree, n)
    if not ws:
        raise NoWitness(f"no type-I band with next digit {n} in a depth-{tree.depth} tree")
    return ws[0][1]


def zeta_eta(tree, n):
    """``(zeta_n, eta)``: every witness ratio lies in ``[zeta_n/eta, eta*zeta_n]``."""
    ws = zeta_witnesses(tree, n)
    if not ws:
        raise NoWitness(f"no type-I band with next digit {n}")
    z = ws[0][1]
    rs = [r for _, r in ws]
    return z, max(max(rs) / z, z / min(rs))


def covariation_probe(tree, w, w_t, u):
    """``(|B_wu|/|B_w|) / (|B_w~u|/|B_w~|)``."""
    bw, bwt = tree.find(w), tree.find(w_t)
    bwu, bwtu = tree.find(tuple(w) + tuple(u)), tree.find(tuple(w_t) + tuple(u))
    return float((bwu.length / bw.length) / (bwtu.length / bwt.length))


def covariation_sweep(tree, u_len):
    """Largest covariation ratio over all pairs ``(w, w~)`` sharing a suffix of length ``u_len``.

    Returns ``(eta, pairs)``; ``pairs`` counts the (w, u) combinations seen.
    """
    by_suffix = defaultdict(lambda: [math.inf, 0.0])
    seen = 0
    for j in range(1, tree.depth - u_len + 1):
        for node in tree.levels[j]:
            frontier = [node]
            for _ in range(u_len):
                frontier = [c for f in frontier for c in f.children]
            for d in frontier:
                r = float(d.length / node.length)
                box = by_suffix[d.word[j:]]
                box[0] = min(box[0], r)
                box[1] = max(box[1], r)
                seen += 1
    eta = max((hi / lo for lo, hi in by_suffix.values()), default=1.0)
    return eta, seen


# ---------------------------------------------------------------------------
# ratio diagnostics

@dataclass(frozen=True)
class TypeRatios:
    band_type: str
    k: int
    count: int
    min_A: float
    max_A: float
    min_a: float
    max_a: float

    @property
    def spread(self):
        return self.max_A / self.min_A

    @property
    def spread_a(self):
        return self.max_a / self.min_a


@dataclass
class GibbsDiagnostics:
    k: int
    m: int
    beta: float
    eps: Fraction
    types: dict
    zetas: dict


def _references(tree, node, k, beta, eps, zetas):
    """Reference factors (A-form, a-form) multiplying ``|B|^beta / b_k``."""
    if node.band_type == "II":
        return 1.0, 1.0
    a_next = tree.freq.digit(k + 1)
    if node.band_type == "III":
        if a_next > 1:
            return 1.0, 1.0
        n = tree.freq.digit(k + 2)
    else:
        n = a_next
    if n not in zetas:
        zetas[n] = zeta_n(tree, n)
    z = zetas[n] ** beta
    return z / A_n_beta(n, beta, eps), z / n ** (1 - beta)


def gibbs_ratio_report(measure, tree, k):
    """Per type, min/max of ``mu(B_w)`` over its reference quantity at level ``k``."""
    if k > measure.m - 3:
        raise DepthUnavailable(f"level {k} diagnostics need a measure of order >= {k + 3}")
    beta = measure.beta
    b_k = band_sum(tree, k, beta, measure.eps).value
    acc = {t: [] for t in TYPES}
    zetas = {}
    for node in measure.levels[k]:
        base = math.exp(beta * math.log(float(node.length))) / b_k
        ref_A, ref_a = _references(tree, node, k, beta, measure.eps, zetas)
        mu = float(measure.masses[node])
        acc[node.band_type].append((mu / (ref_A * base), mu / (ref_a * base)))
    types = {}
    for t, vals in acc.items():
        if not vals:
            continue
        rA = [v[0] for v in vals]
        ra = [v[1] for v in vals]
        types[t] = TypeRatios(t, k, len(vals), min(rA), max(rA), min(ra), max(ra))
    return GibbsDiagnostics(k, measure.m, beta, measure.eps, types, zetas)


def level_ratio_diagnostic(tree, beta, eps=None):
    """``b_k / b_{k-1} / A_{a_k,beta}(eps)`` for k = 1..depth."""
    out = []
    eps_r = tree.epsilon if eps is None else eps
    prev = band_sum(tree, 0, beta, eps).value
    for k in range(1, tree.depth + 1):
        cur = band_sum(tree, k, beta, eps).value
        A = A_n_beta(tree.freq.digit(k), beta, eps_r)
        out.append(cur / prev / A)
        prev = cur
    return out


# ---------------------------------------------------------------------------
# output

def _decimal(q, digits=40):
    with localcontext() as ctx:
        ctx.prec = digits
        return str(Decimal(q.numerator) / Decimal(q.denominator))


def _root_name(node):
    while node.parent is not None:
        node = node.parent
    return node.band_type


def measure_entries(measure, levels=None):
    levels = range(measure.m + 1) if levels is None else levels
    rows = []
    for j in levels:
        for node in measure.levels[j]:
            rows.append({"word": format_word(node.word), "root": _root_name(node),
                         "order": j, "type": node.band_type,
                         "mass": _decimal(measure.masses[node])})
    return rows


def measure_json(measure, levels=None, header=None):
    doc = {"beta": measure.beta, "epsilon": str(measure.eps), "m": measure.m, "b": _decimal(measure.b),
           "entries": measure_entries(measure, levels)}
    if header:
        doc["header"] = header
    return json.dumps(doc, indent=2)


DIAG_COLUMNS = ["type", "k", "count", "min_ratio", "max_ratio", "min_ratio_a", "max_ratio_a"]


def diagnostics_csv(diags):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIAG_COLUMNS)
    for d in diags:
        for t in TYPES:
            if t in d.types:
                r = d.types[t]
                w.writerow([t, d.k, r.count, repr(r.min_A), repr(r.max_A),
                            repr(r.min_a), repr(r.max_a)])
    return buf.getvalue()
