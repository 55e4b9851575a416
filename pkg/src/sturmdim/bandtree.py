"""Typed band tree: code words, certified band endpoints, ladders and probes.

Generating polynomials of bands of order ``k`` (parent digit ``a = a_{k+1}``):

* a type-I band carries ``t_(k,1)``;
* type-II/III bands carry ``t_(k+1,0) = tr M_k``.

Children of an order-``k`` parent are bands of ``t_(k,a+1)`` (type I) and of
``t_(k,a)`` (types II and III), so one level-``k`` trace row evaluates parent
and children at once.

Root isolation rests on a simple fact: inside a parent every child band is a
monotone branch of the child polynomial onto ``[-2, 2]``, and between two
consecutive child bands ``|t| > 2``. Hence the child polynomial has exactly one
simple zero per child band, and consecutive gaps alternate in sign. Sign
changes on a grid (refined until their number equals the known child count)
isolate the bands, and each endpoint is solved on a bracket where ``t -+ 2``
changes sign.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
import csv
import io
import json
import warnings

import gmpy2
from gmpy2 import mpfr

from . import frequency
from .errors import (BandError, BoundViolated, CountMismatch, EpsilonOutOfRange,
                     PrecisionExhausted, TangencySuspected, WordsNotInTree,
                     format_word)
from .tracecalc import PrecisionPolicy, chebyshev_S, trace_row, z_branch

E12, E21, E23, E31, E33 = "e12", "e21", "e23", "e31", "e33"
EDGES = {E12: ("I", "II"), E21: ("II", "I"), E23: ("II", "III"),
         E31: ("III", "I"), E33: ("III", "III")}
EDGE_OF = {ends: e for e, ends in EDGES.items()}
TYPES = ("I", "II", "III")

V_REFUSE = 20
V_WARN = 24
EPS_MAX = Fraction(1, 12)
GRID_DOUBLINGS = 20
INTERIOR_SAMPLES = 33
# endpoint enclosures are narrower than 2^-ENCLOSURE_BITS times the band length
ENCLOSURE_BITS = 60


def tau(e, n):
    """Number of symbols ``tau_e(n)`` carried by edge ``e`` at digit ``n``."""
    if n < 1:
        raise ValueError("digit must be >= 1")
    return {E12: 1, E21: n + 1, E23: n, E31: n, E33: n - 1}[e]


@dataclass(frozen=True)
class Symbol:
    edge: str
    tau: int
    l: int

    def __post_init__(self):
        if self.edge not in EDGES:
            raise ValueError(f"unknown edge {self.edge!r}")
        if not 1 <= self.l <= self.tau:
            raise ValueError(f"index l={self.l} outside 1..{self.tau}")

    @property
    def target(self):
        return EDGES[self.edge][1]

    def as_list(self):
        return [self.edge, self.tau, self.l]


def children_spec(band_type, a_next):
    """``[(child_type, count, poly_rule)]`` for a parent of order ``k``.

    ``poly_rule`` names the child polynomial relative to the parent order:
    ``"t(k+1,1)"`` or ``"t(k+2,0)"``.
    """
    if a_next < 1:
        raise ValueError("digit must be >= 1")
    if band_type == "I":
        return [("II", 1, "t(k+2,0)")]
    if band_type == "II":
        return [("I", a_next + 1, "t(k+1,1)"), ("III", a_next, "t(k+2,0)")]
    if band_type == "III":
        return [("I", a_next, "t(k+1,1)"), ("III", a_next - 1, "t(k+2,0)")]
    raise ValueError(f"unknown band type {band_type!r}")


def check_epsilon(eps):
    eps = Fraction(eps)
    if not 0 <= eps < EPS_MAX:
        raise EpsilonOutOfRange(f"epsilon {eps} outside [0, 1/12)")
    return eps


def parse_epsilon(text):
    """Exact rational from strings like ``"1/24"`` or ``"0.01"``."""
    try:
        value = Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise EpsilonOutOfRange(f"cannot parse epsilon {text!r}") from None
    return check_epsilon(value)


def truncate_filter(symbol, eps):
    """Keep ``e12`` always; other symbols iff ``(tau+1)eps < l < (tau+1)(1-eps)``."""
    eps = check_epsilon(eps)
    if symbol.edge == E12:
        return True
    n1 = symbol.tau + 1
    return n1 * eps < symbol.l < n1 * (1 - eps)


def _operand_context(*values):
    """Context at the operands' own precision, so results do not depend on the caller's."""
    bits = max(v.precision if isinstance(v, type(mpfr(0))) else 53 for v in values)
    return gmpy2.context(gmpy2.get_context(), precision=bits + 2)


@dataclass(frozen=True)
class Enclosure:
    """Endpoint bracket ``[a, b]``; ``t - target`` has opposite signs at a and b."""

    a: object
    b: object

    @property
    def mid(self):
        with _operand_context(self.a, self.b):
            return (self.a + self.b) / 2

    @property
    def width(self):
        with _operand_context(self.a, self.b):
            return self.b - self.a


@dataclass(eq=False)
class BandNode:
    """One spectral generating band ``B_w``.

    ``poly_id`` is the trace name ``(k, p)`` of the generating
    polynomial; ``eval_at`` is ``(level, p)`` inside a level row, where
    ``p = None`` means the row multiplier ``u_level``.
    """

    word: tuple
    order: int
    band_type: str
    poly_id: tuple
    eval_at: tuple
    lo: Enclosure
    hi: Enclosure
    orientation: int
    parent: "BandNode" = None
    alias: bool = False
    children: list = field(default_factory=list)
    index: int = 0

    @property
    def outer(self):
        with _operand_context(self.hi.b, self.lo.a):
            return self.hi.b - self.lo.a

    @property
    def inner(self):
        with _operand_context(self.hi.a, self.lo.b):
            return self.hi.a - self.lo.b

    @property
    def length(self):
        lo, hi = self.lo.mid, self.hi.mid
        with _operand_context(lo, hi):
            return hi - lo

    def word_list(self):
        return [s.as_list() for s in self.word]

    def __repr__(self):
        return (f"BandNode({format_word(self.word)}, order={self.order}, "
                f"type={self.band_type}, [{float(self.lo.mid):.6g}, {float(self.hi.mid):.6g}])")


@dataclass
class BandTree:
    freq: object
    V: object
    epsilon: Fraction
    prec: int
    digits: tuple
    levels: list
    threads: int = 1

    @property
    def depth(self):
        return len(self.levels) - 1

    def level(self, n):
        return self.levels[n]

    def roots(self):
        return self.levels[0]

    def find(self, word):
        """Node with the given word (a sequence of Symbols or ``[e, tau, l]`` lists)."""
        word = tuple(s if isinstance(s, Symbol) else Symbol(*s) for s in word)
        if not word:
            raise WordsNotInTree("empty word names no band")
        if len(word) > self.depth:
            raise WordsNotInTree(f"word {format_word(word)} deeper than the tree")
        first = word[0]
        node = self.levels[0][0 if first.edge == E12 else 1]
        for sym in word:
            match = [c for c in node.children if c.word[-1] == sym]
            if not match:
                raise WordsNotInTree(f"word {format_word(word)} not in tree")
            node = match[0]
        return node

    def context(self):
        return gmpy2.context(gmpy2.get_context(), precision=self.prec)

    def poly(self, node, x, deriv=False):
        """Generating polynomial of ``node`` (and its derivative) at ``x``."""
        return eval_node_poly(self.digits, self.V, node.eval_at, x, deriv)


def eval_node_poly(ds, V, eval_at, x, deriv=False):
    level, p = eval_at
    p_max = 1 if p is None else max(p, 1)
    if deriv:
        row, drow, u, du = trace_row(ds, V, x, level, p_max=p_max, deriv=True)
        if p is None:
            return u, du
        return row[p + 1], drow[p + 1]
    row, u = trace_row(ds, V, x, level, p_max=p_max)
    return u if p is None else row[p + 1]


# ---------------------------------------------------------------------------
# root isolation

def _sign(v):
    return -1 if v < 0 else 1


class _Sampler:
    """Cached evaluations of one polynomial on the parent interval."""

    def __init__(self, ds, V, eval_at):
        self.ds, self.V, self.eval_at = ds, V, eval_at
        self.cache = {}

    def __call__(self, x):
        key = x
        if key not in self.cache:
            self.cache[key] = eval_node_poly(self.ds, self.V, self.eval_at, x)
        return self.cache[key]

    def with_derivative(self, x):
        return eval_node_poly(self.ds, self.V, self.eval_at, x, deriv=True)


def _solve_level(f, target, a, b, tol, start=None, max_iter=2000):
    """Bracket of width <= tol around the crossing ``f(x) = target`` in [a, b].

    Safeguarded Newton: a Newton step is taken when it stays inside the
    bracket and shrinks fast enough, otherwise the bracket is bisected. Once
    Newton steps fall below ``tol`` a probe on the far side closes the bracket.
    """
    sa = _sign(f(a) - target)
    if sa == _sign(f(b) - target):
        raise TangencySuspected(f"no sign change of t - ({target}) on bracket")
    x = start if start is not None and a < start < b else (a + b) / 2
    dx_old = b - a
    for _ in range(max_iter):
        if b - a <= tol:
            return Enclosure(a, b)
        v, d = f.with_derivative(x)
        v -= target
        if v == 0:
            return Enclosure(max(a, x - tol / 4), min(b, x + tol / 4))
        if _sign(v) == sa:
            a = x
        else:
            b = x
        xn = x - v / d if d != 0 else None
        if xn is not None and a < xn < b and abs(2 * v) <= abs(dx_old * d):
            dx_old = xn - x
            if abs(dx_old) < tol / 2:
                # converged from one side: step across the root to close the bracket
                xn = xn + tol / 4 if dx_old > 0 else xn - tol / 4
                if not a < xn < b:
                    xn = (a + b) / 2
            x = xn
        else:
            dx_old = (b - a) / 2
            x = (a + b) / 2
    raise PrecisionExhausted("endpoint solve did not converge")


def root_bands(ds, V, parent_lo, parent_hi, eval_at, expected, tol, word=None):
    """``expected`` maximal sub-intervals of the parent where ``|t| <= 2``.

    Returns a left-to-right list of ``(lo, hi, orientation)`` with endpoint
    enclosures. ``parent_lo``/``parent_hi`` bound the scan.
    """
    if expected == 0:
        return []
    f = _Sampler(ds, V, eval_at)
    lo, hi = parent_lo, parent_hi
    n = 8 * (expected + 1)
    xs = [lo + (hi - lo) * i / n for i in range(n + 1)]
    for _ in range(GRID_DOUBLINGS + 1):
        vals = [f(x) for x in xs]
        signs = [_sign(v) for v in vals]
        changes = [i for i in range(n) if signs[i] != signs[i + 1]]
        if len(changes) == expected and _separated(vals, changes):
            return [_refine_band(f, xs, vals, changes, j, tol) for j in range(expected)]
        if len(changes) > expected:
            raise CountMismatch(
                f"{len(changes)} sign changes for {expected} expected child bands", word)
        xs = [v for i in range(n) for v in (xs[i], (xs[i] + xs[i + 1]) / 2)] + [xs[-1]]
        n *= 2
    if len(changes) == expected:
        raise TangencySuspected("child bands not separated by |t| > 2 samples", word)
    raise CountMismatch(
        f"found {len(changes)} of {expected} child bands after grid refinement", word)


def _separated(vals, changes):
    """Every zero bracket has ``|t| > 2`` samples on both sides before the next one."""
    bounds = [-1] + changes + [len(vals) - 1]
    for j in range(len(changes)):
        left = range(bounds[j] + 1, changes[j] + 1)
        right = range(changes[j] + 1, bounds[j + 2] + 1)
        if not any(abs(vals[i]) > 2 for i in left):
            return False
        if not any(abs(vals[i]) > 2 for i in right):
            return False
    return True


def _refine_band(f, xs, vals, changes, j, tol):
    c = changes[j]
    i = c
    while abs(vals[i]) <= 2:
        i -= 1
    L = xs[i]
    i = c + 1
    while abs(vals[i]) <= 2:
        i += 1
    R = xs[i]
    s_left = _sign(vals[c])
    # t runs from 2*s_left down through 0 to -2*s_left; locate the zero first,
    # then start each endpoint solve from the linear estimate around it
    zero = _solve_level(f, 0, xs[c], xs[c + 1], (xs[c + 1] - xs[c]) / 2 ** 40)
    x0 = zero.mid
    _, d0 = f.with_derivative(x0)
    reach = abs(2 / d0)
    tol = max(tol, 2 * reach / 2 ** ENCLOSURE_BITS)
    left = _solve_level(f, 2 * s_left, L, zero.b, tol, start=x0 - reach)
    right = _solve_level(f, -2 * s_left, zero.a, R, tol, start=x0 + reach)
    return left, right, -s_left


# ---------------------------------------------------------------------------
# tree expansion

def _tolerance(ctx_bits, scale):
    return mpfr(2) ** (-(ctx_bits - 24)) * max(mpfr(1), abs(scale))


def _expand_node(tree_ds, V, bits, eps, node):
    """Children of ``node`` as a list of BandNodes (parent links set, indices not)."""
    k = node.order
    a = tree_ds[k]
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        if node.band_type == "I" and a == 1:
            sym = Symbol(E12, 1, 1)
            return [BandNode(word=node.word + (sym,), order=k + 1, band_type="II",
                             poly_id=(k + 2, 0), eval_at=node.eval_at, lo=node.lo,
                             hi=node.hi, orientation=node.orientation, parent=node,
                             alias=True)]
        scan_lo, scan_hi = node.lo.b, node.hi.a
        tol = _tolerance(bits, max(abs(node.lo.a), abs(node.hi.b)))
        found = []
        for child_type, count, rule in children_spec(node.band_type, a):
            if count == 0:
                continue
            edge = EDGE_OF[(node.band_type, child_type)]
            t_e = tau(edge, a)
            p_eval = a + 1 if rule == "t(k+1,1)" else a
            poly_id = (k + 1, 1) if rule == "t(k+1,1)" else (k + 2, 0)
            if child_type == "I":
                child_eval = (k + 1, 1)
            else:
                child_eval = (k + 1, None)
            bands = root_bands(tree_ds, V, scan_lo, scan_hi, (k, p_eval), count, tol,
                               word=node.word)
            for l, (lo, hi, orient) in enumerate(bands, start=1):
                sym = Symbol(edge, t_e, l)
                if k >= 1 and not truncate_filter(sym, eps):
                    continue
                found.append(BandNode(word=node.word + (sym,), order=k + 1,
                                      band_type=child_type, poly_id=poly_id,
                                      eval_at=child_eval, lo=lo, hi=hi,
                                      orientation=orient, parent=node))
        found.sort(key=lambda c: c.lo.a)
        for left, right in zip(found, found[1:]):
            if not left.hi.b < right.lo.a:
                raise BandError("sibling bands overlap", node.word)
        return found


def root_nodes(V, bits):
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        Vv = mpfr(V)
        b_one = BandNode(word=(), order=0, band_type="I", poly_id=(0, 1), eval_at=(0, 1),
                         lo=Enclosure(Vv - 2, Vv - 2), hi=Enclosure(Vv + 2, Vv + 2),
                         orientation=1)
        b_three = BandNode(word=(), order=0, band_type="III", poly_id=(1, 0),
                           eval_at=(0, None), lo=Enclosure(mpfr(-2), mpfr(-2)),
                           hi=Enclosure(mpfr(2), mpfr(2)), orientation=1, index=1)
    return [b_one, b_three]


def check_coupling(V):
    if V < V_REFUSE:
        raise BandError(f"coupling V={V} below {V_REFUSE} is not supported")
    if V < V_WARN:
        warnings.warn(f"coupling V={V} below {V_WARN}: some inequalities need V >= 24")


def expand_tree(freq, V, depth, eps=0, prec=PrecisionPolicy(), threads=1):
    """Band tree down to order ``depth`` (truncated by ``eps`` from order 2 on)."""
    check_coupling(V)
    if depth < 0:
        raise ValueError("depth must be >= 0")
    eps = check_epsilon(eps)
    # order-n bands only involve a_1..a_n
    ds = tuple(frequency.digits(freq, depth)) if depth else ()
    bits = prec.effective_bits(ds, V)
    V_exact = Fraction(str(V)) if not isinstance(V, Fraction) else V
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        V_num = mpfr(V_exact.numerator) / V_exact.denominator
    levels = [root_nodes(V_num, bits)]
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for n in range(depth):
            parents = levels[-1]
            job = lambda node: _expand_node(ds, V_num, bits, eps, node)
            if pool is not None:
                results = list(pool.map(job, parents))
            else:
                results = [job(node) for node in parents]
            nxt = []
            for node, kids in zip(parents, results):
                node.children = kids
                nxt.extend(kids)
            for i, node in enumerate(nxt):
                node.index = i
            levels.append(nxt)
    finally:
        if pool is not None:
            pool.shutdown()
    return BandTree(freq=freq, V=V_num, epsilon=eps, prec=bits, digits=ds, levels=levels,
                    threads=threads)


# ---------------------------------------------------------------------------
# structural checks

def level_counts(tree):
    return [len(level) for level in tree.levels]


def type_counts(tree, n):
    counts = {t: 0 for t in TYPES}
    for node in tree.levels[n]:
        counts[node.band_type] += 1
    return counts


def check_structure(tree):
    """Exact child counts (when untruncated), nesting and sibling order.

    Returns a list of problem strings (empty when everything holds).
    """
    problems = []
    for n in range(tree.depth):
        a = tree.digits[n]
        for node in tree.levels[n]:
            if tree.epsilon == 0 or n == 0:
                for child_type, count, _ in children_spec(node.band_type, a):
                    got = sum(1 for c in node.children if c.band_type == child_type)
                    if got != count:
                        problems.append(f"{format_word(node.word)}: {got} {child_type} "
                                        f"children, expected {count}")
            for c in node.children:
                if c.alias:
                    continue
                if not (node.lo.a <= c.lo.a and c.hi.b <= node.hi.b):
                    problems.append(f"{format_word(c.word)} not inside parent")
                if not c.lo.b < c.hi.a:
                    problems.append(f"{format_word(c.word)} has empty inner interval")
            for left, right in zip(node.children, node.children[1:]):
                if not left.hi.b < right.lo.a:
                    problems.append(f"{format_word(right.word)} overlaps its left sibling")
    for n, level in enumerate(tree.levels):
        ordered = sorted(level, key=lambda node: node.lo.a)
        for left, right in zip(ordered, ordered[1:]):
            if not left.hi.b < right.lo.a:
                problems.append(f"level {n}: {format_word(left.word)} and "
                                f"{format_word(right.word)} overlap")
    return problems


def check_endpoints(tree, node, samples=INTERIOR_SAMPLES):
    """Endpoint values near -+2 and strict monotonicity on interior samples."""
    with tree.context():
        lo_val = tree.poly(node, node.lo.mid)
        hi_val = tree.poly(node, node.hi.mid)
        expect_lo, expect_hi = -2 * node.orientation, 2 * node.orientation
        end_ok = abs(lo_val - expect_lo) < 1e-6 and abs(hi_val - expect_hi) < 1e-6
        xs = [node.lo.mid + node.length * j / (samples + 1) for j in range(1, samples + 1)]
        vals = [tree.poly(node, x) for x in xs]
        diffs = [v2 - v1 for v1, v2 in zip(vals, vals[1:])]
        mono = all(d * node.orientation > 0 for d in diffs)
        inside = all(abs(v) < 2 for v in vals)
    return end_ok and mono and inside


# ---------------------------------------------------------------------------
# length and derivative bounds

def band_bounds(tree, node):
    """``(lower, upper)`` length bounds for ``node`` from its word."""
    V = tree.V
    t1 = (V - 8) / 3
    t2 = 2 * (V + 5)
    lower, upper = mpfr(1), mpfr(4)
    for i, sym in enumerate(node.word, start=1):
        a = tree.digits[i - 1]
        if sym.edge == E12:
            lower /= t2 ** (a - 1)
            upper /= t1 ** (a - 1)
        else:
            lower /= t2 * a ** 3
            upper /= t1 * a
    if not node.word:
        lower = mpfr(4)
    return lower, upper


@dataclass
class BoundRecord:
    word: tuple
    order: int
    length: float
    lower: float
    upper: float
    decay: float
    ok_basic: bool
    ok_decay: bool


def verify_band_bounds(tree, strict=False):
    """Check every band against the word bounds and ``|B| <= 4^(1-n/2)``.

    Returns a list of BoundRecords; with ``strict`` the first violation raises
    BoundViolated.
    """
    if tree.V < V_REFUSE:
        raise BandError("band bounds need V >= 20")
    records = []
    with tree.context():
        for n, level in enumerate(tree.levels):
            decay = mpfr(4) ** (1 - mpfr(n) / 2)
            for node in level:
                lower, upper = band_bounds(tree, node)
                ok_basic = lower <= node.inner and node.outer <= upper
                ok_decay = node.inner <= decay
                rec = BoundRecord(node.word, n, float(node.length), float(lower),
                                  float(upper), float(decay), ok_basic, ok_decay)
                records.append(rec)
                if strict and not (ok_basic and ok_decay):
                    raise BoundViolated(
                        f"length {float(node.length):.6g} outside "
                        f"[{float(lower):.6g}, {float(min(upper, decay)):.6g}]", node.word)
    return records


def ratio_bounds(V, sym, a):
    """Two-sided bound on ``|h_child' / h_parent'|`` for the child symbol."""
    V = mpfr(V)
    if sym.edge == E12:
        return (2 * (V - 8) / 3) ** (a - 1), (2 * (V + 5)) ** (a - 1)
    p, l = sym.tau, sym.l
    csc2 = 1 / gmpy2.sin(l * gmpy2.const_pi() / (p + 1)) ** 2
    return (V - 8) / 3 * (p + 1) * csc2, (V + 5) * (p + 1) * csc2


@dataclass
class RatioRecord:
    word: tuple
    lo_obs: float
    hi_obs: float
    lo_bound: float
    hi_bound: float

    @property
    def ok(self):
        # relative slack for the exact-equality alias case
        return (self.lo_bound * (1 - 1e-12) <= self.lo_obs
                and self.hi_obs <= self.hi_bound * (1 + 1e-12))


def verify_derivative_ratio(tree, parent, child, samples=9, strict=False):
    """Observed range of ``|h_child'/h_parent'|`` on ``samples`` interior points."""
    if child.parent is not parent:
        raise WordsNotInTree(f"{format_word(child.word)} is not a child of "
                             f"{format_word(parent.word)}")
    sym = child.word[-1]
    a = tree.digits[parent.order]
    with tree.context():
        lo_b, hi_b = ratio_bounds(tree.V, sym, a)
        ratios = []
        for j in range(1, samples + 1):
            x = child.lo.mid + child.length * j / (samples + 1)
            _, dc = tree.poly(child, x, deriv=True)
            _, dp = tree.poly(parent, x, deriv=True)
            ratios.append(abs(dc / dp))
        rec = RatioRecord(child.word, float(min(ratios)), float(max(ratios)),
                          float(lo_b), float(hi_b))
    if strict and not rec.ok:
        raise BoundViolated(f"derivative ratio [{rec.lo_obs:.6g}, {rec.hi_obs:.6g}] outside "
                            f"[{rec.lo_bound:.6g}, {rec.hi_bound:.6g}]", child.word)
    return rec


def derivative_spread(tree, node, samples=INTERIOR_SAMPLES):
    """``max |h'| / min |h'|`` over interior samples of one band."""
    with tree.context():
        ds = []
        for j in range(1, samples + 1):
            x = node.lo.mid + node.length * j / (samples + 1)
            ds.append(abs(tree.poly(node, x, deriv=True)[1]))
        return float(max(ds) / min(ds))


# ---------------------------------------------------------------------------
# modified ladders

@dataclass
class Rung:
    lo: object
    hi: object
    eval_at: tuple
    order: int
    orientation: int = 1
    inserted: bool = False
    node: BandNode = None


@dataclass
class ModifiedLadder:
    rungs: list
    p_seq: list
    l_seq: list
    n: int
    k: int = 0
    deleted: int = 0
    inserted: int = 0
    digit_sum: int = 0

    @property
    def m(self):
        return len(self.rungs) - 1

    def bounds_ok(self):
        """``(n-k)/2 <= m <= a_{k+1} + ... + a_n`` as printed."""
        return (self.n - self.k) / 2 <= self.m <= self.digit_sum

    def bounds_ok_floor(self):
        """The same with the lower bound rounded down, ``floor((n-k)/2) <= m``."""
        return (self.n - self.k) // 2 <= self.m <= self.digit_sum


def _node_rung(node):
    return Rung(node.lo.mid, node.hi.mid, node.eval_at, node.order, node.orientation,
                node=node)


def build_modified_ladder(tree, word):
    """Modified ladder from the order-0 ancestor down to ``B_w``."""
    target = tree.find(word)
    chain = []
    node = target
    while node is not None:
        chain.append(node)
        node = node.parent
    chain.reverse()
    n = len(chain) - 1
    rungs = [_node_rung(chain[0])]
    p_seq, l_seq = [], []
    deleted = inserted = 0
    with tree.context():
        for i in range(n):
            cur, nxt = chain[i], chain[i + 1]
            a = tree.digits[i]
            sym = nxt.word[-1]
            if cur.band_type == "I" and a == 1:
                # B_{i+1} = B_i: the surviving rung stands for both
                deleted += 1
                continue
            if cur.band_type == "I" and a > 2:
                tol = _tolerance(tree.prec, max(abs(cur.lo.a), abs(cur.hi.b)))
                for p in range(2, a):
                    (lo, hi, orient), = root_bands(tree.digits, tree.V, cur.lo.b, cur.hi.a,
                                                   (i, p), 1, tol, word=cur.word)
                    p_seq.append(1)
                    l_seq.append(1)
                    rungs.append(Rung(lo.mid, hi.mid, (i, p), i, orient, inserted=True))
                    inserted += 1
                p_seq.append(1)
                l_seq.append(1)
            else:
                p_seq.append(sym.tau)
                l_seq.append(sym.l)
            rungs.append(_node_rung(nxt))
    return ModifiedLadder(rungs, p_seq, l_seq, n, 0, deleted, inserted,
                          sum(tree.digits[:n]))


@dataclass
class LadderCheck:
    image_ok: bool
    ratio_ok: bool
    identity_ok: bool
    branches: list
    worst_identity: float


def _rung_eval(tree, rung, x, deriv=False):
    return eval_node_poly(tree.digits, tree.V, rung.eval_at, x, deriv)


def verify_ladder(tree, ladder, samples=5):
    """Window membership, derivative ratios and the z-branch ladder identity.

    For ``x`` sampled in rung ``i+1``: ``h_i(x)`` must lie in ``I_{p_i,l_i}``
    (windows count ``l`` from ``h = 2`` downward, so for an increasing ``h_i``
    the position index ``l`` maps to ``p_i + 1 - l``);
    ``|h_{i+1}'/h_i'|`` must obey the csc-squared bound; and
    ``h_{i+1} = z(h_i, h_{i-1}) S_{p+1}(h_i) - h_{i-1} S_p(h_i)`` must hold for
    one of the two z branches (``h_{-1}`` is the constant 2). The matching
    branch is recorded per rung.
    """
    image_ok = ratio_ok = identity_ok = True
    branches = []
    worst = 0.0
    V = tree.V
    with tree.context():
        pi = gmpy2.const_pi()
        for i in range(ladder.m):
            p, l = ladder.p_seq[i], ladder.l_seq[i]
            q = p + 1
            if ladder.rungs[i].orientation > 0:
                l = q - l
            w_lo = 2 * gmpy2.cos((l + mpfr(1) / 10) * pi / q)
            w_hi = 2 * gmpy2.cos((l - mpfr(1) / 10) * pi / q)
            csc2 = 1 / gmpy2.sin(l * pi / q) ** 2
            r_lo, r_hi = (V - 8) / 3 * q * csc2, (V + 5) * q * csc2
            nxt, cur = ladder.rungs[i + 1], ladder.rungs[i]
            prev = ladder.rungs[i - 1] if i > 0 else None
            rung_branch = None
            for j in range(1, samples + 1):
                x = nxt.lo + (nxt.hi - nxt.lo) * j / (samples + 1)
                h, dh = _rung_eval(tree, cur, x, True)
                h1, dh1 = _rung_eval(tree, nxt, x, True)
                hm = _rung_eval(tree, prev, x) if prev is not None else mpfr(2)
                if not (w_lo <= h <= w_hi and abs(chebyshev_S(q, h)) <= mpfr(1) / 4):
                    image_ok = False
                ratio = abs(dh1 / dh)
                if not r_lo <= ratio <= r_hi:
                    ratio_ok = False
                s_q, s_p = chebyshev_S(q, h), chebyshev_S(p, h)
                errs = {}
                for sign in (1, -1):
                    z = z_branch(h, hm, V, sign)
                    errs[sign] = abs(z * s_q - hm * s_p - h1)
                sign = min(errs, key=lambda s: errs[s])
                err = float(errs[sign] / (1 + abs(h1)))
                worst = max(worst, err)
                if err > 1e-20:
                    identity_ok = False
                if rung_branch is None:
                    rung_branch = sign
                elif rung_branch != sign:
                    identity_ok = False
            branches.append(rung_branch)
    return LadderCheck(image_ok, ratio_ok, identity_ok, branches, worst)


# ---------------------------------------------------------------------------
# gaps and dumps

def gaps(tree, n):
    """Gaps of order ``n``: open intervals between consecutive children of a level-n band."""
    if n >= tree.depth:
        from .errors import DepthUnavailable
        raise DepthUnavailable(f"gaps of order {n} need depth {n + 1}, tree has {tree.depth}")
    out = []
    for node in tree.levels[n]:
        for left, right in zip(node.children, node.children[1:]):
            out.append((node, left, right))
    return out


def _fmt(v, bits):
    return f"{v:.{int(bits * 0.30103) + 2}g}"


def band_rows(tree, n):
    with tree.context():
        return [{"word": node.word_list(), "order": node.order, "type": node.band_type,
                 "lo": _fmt(node.lo.mid, tree.prec), "hi": _fmt(node.hi.mid, tree.prec),
                 "len": _fmt(node.length, tree.prec)} for node in tree.levels[n]]


def gap_rows(tree, n):
    with tree.context():
        rows = []
        for parent, left, right in gaps(tree, n):
            rows.append({"word": parent.word_list(), "order": n, "type": parent.band_type,
                         "lo": _fmt(left.hi.mid, tree.prec), "hi": _fmt(right.lo.mid, tree.prec),
                         "len": _fmt(right.lo.mid - left.hi.mid, tree.prec)})
        return rows


def dump_json(rows, precision, extra=None):
    data = {"precision": precision, "bands": rows}
    if extra:
        data.update(extra)
    return json.dumps(data, indent=1)


CSV_COLUMNS = ["word", "order", "type", "lo", "hi", "len"]


def dump_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        row = dict(row)
        row["word"] = format_word([tuple(s) for s in row["word"]])
        writer.writerow(row)
    return buf.getvalue()
