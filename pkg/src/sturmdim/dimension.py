"""Pre-dimensions, gap sums and the R_n / Q_k matrix functionals.

Band sums work on logarithms of band lengths, so power sums stay accurate
however small the bands get. Three length sets are kept per level: midpoint lengths, inner
lengths (from the inner endpoint enclosures) and outer lengths. Roots of
``beta -> b_{k,beta}`` computed from the inner and outer sets bracket the
root for the true bands.

Matrix products are carried with a scale ledger: after each factor the
running product is divided by its largest entry and the log of that entry
is recorded, so ``log ||S_n||`` is the sum of the ledger.
"""

from dataclasses import dataclass, field
from fractions import Fraction
import csv
import io
import json
import math

import gmpy2
import numpy as np

from . import frequency
from .bandtree import E12, check_epsilon, expand_tree, gaps
from .errors import ConfigError, DepthUnavailable, NoRootInUnitInterval
from .tracecalc import PrecisionPolicy

DEFAULT_TOL = 1e-13
DEFAULT_WINDOW = 4
DEFAULT_N_MAX = 200
EPS_HAT = Fraction(1, 4)


# ---------------------------------------------------------------------------
# level data

def word_kept(word, eps):
    """Whether ``word`` survives truncation at ``eps`` (first symbol exempt)."""
    if eps == 0:
        return True
    for sym in word[1:]:
        if sym.edge == E12:
            continue
        n1 = sym.tau + 1
        if not n1 * eps < sym.l < n1 * (1 - eps):
            return False
    return True


def _resolve_eps(tree, eps, checked=True):
    if eps is None:
        return tree.epsilon
    eps = check_epsilon(eps) if checked else Fraction(eps)
    if eps < tree.epsilon:
        raise ConfigError(f"tree was truncated at epsilon={tree.epsilon}; "
                          f"cannot recover epsilon={eps}")
    return eps


def level_nodes(tree, k, eps=None, checked=True):
    """Level-``k`` bands of ``tree`` lying in the ``eps``-truncated coding."""
    if k < 0 or k > tree.depth:
        raise DepthUnavailable(f"level {k} requested, tree has depth {tree.depth}")
    eps = _resolve_eps(tree, eps, checked)
    nodes = tree.levels[k]
    if eps == tree.epsilon:
        return list(nodes)
    return [n for n in nodes if word_kept(n.word, eps)]


@dataclass(frozen=True)
class LevelLogs:
    mid: np.ndarray
    inner: np.ndarray
    outer: np.ndarray


def level_logs(tree, k, eps=None, checked=True):
    """Natural logs of mid/inner/outer lengths of the level-``k`` bands (cached)."""
    eps_r = _resolve_eps(tree, eps, checked)
    cache = tree.__dict__.setdefault("_log_cache", {})
    key = (k, eps_r)
    if key not in cache:
        nodes = level_nodes(tree, k, eps_r, checked=False)
        with tree.context():
            mid = [float(gmpy2.log(n.length)) for n in nodes]
            inner = [float(gmpy2.log(n.inner)) for n in nodes]
            outer = [float(gmpy2.log(n.outer)) for n in nodes]
        cache[key] = LevelLogs(np.array(mid), np.array(inner), np.array(outer))
    return cache[key]


def _power_sum(logs, beta):
    if len(logs) == 0:
        return 0.0
    return math.fsum(np.exp(beta * logs))


@dataclass(frozen=True)
class BandSum:
    """``b_{k,beta}`` from midpoint lengths, with inner/outer enclosure sums."""

    k: int
    beta: float
    value: float
    lower: float
    upper: float


def band_sum(tree, k, beta, eps=None):
    """``b_{k,beta}(eps) = sum of |B_w|^beta`` over the level-``k`` bands."""
    logs = level_logs(tree, k, eps)
    beta = float(beta)
    return BandSum(k, beta, _power_sum(logs.mid, beta), _power_sum(logs.inner, beta),
                   _power_sum(logs.outer, beta))


# ---------------------------------------------------------------------------
# pre-dimensions

def _root(logs, tol):
    """Root in [0, 1] of ``sum exp(beta*logs) = 1``; ``(s, clamped)``."""
    n = len(logs)
    if n == 0:
        raise DepthUnavailable("no bands at this level")
    if n == 1 and logs[0] <= 0:
        return 0.0, False
    if _power_sum(logs, 1.0) > 1:
        return 1.0, True
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _power_sum(logs, mid) > 1:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False


@dataclass(frozen=True)
class PreDimension:
    """``s_k`` and the roots obtained from inner (``lo``) and outer (``hi``) lengths."""

    k: int
    s: float
    lo: float
    hi: float
    clamped: bool
    eps: Fraction


def solve_sk(tree, k, eps=None, tol=DEFAULT_TOL, clamp=True):
    """Pre-dimension ``s_k``: the root of ``b_{k,s} = 1`` in [0, 1].

    When ``b_{k,1} > 1`` the root lies above 1; it is clamped to 1 (and
    flagged) or, with ``clamp=False``, NoRootInUnitInterval is raised.
    """
    logs = level_logs(tree, k, eps)
    s, clamped = _root(logs.mid, tol)
    if clamped and not clamp:
        raise NoRootInUnitInterval(f"b_{{{k},1}} > 1: root exceeds 1")
    lo, _ = _root(logs.inner, tol)
    hi, _ = _root(logs.outer, tol)
    return PreDimension(k, s, lo, hi, clamped, _resolve_eps(tree, eps))


def predimensions(tree, eps=None, tol=DEFAULT_TOL, start=1):
    return [solve_sk(tree, k, eps, tol) for k in range(start, tree.depth + 1)]


def tail_stats(values, window=DEFAULT_WINDOW):
    """Running min/max over the last ``window`` values (stand-ins for liminf/limsup)."""
    tail = list(values)[-window:]
    return min(tail), max(tail)


# ---------------------------------------------------------------------------
# gaps

def gap_logs(tree, k, eps=None):
    eps_r = _resolve_eps(tree, eps)
    cache = tree.__dict__.setdefault("_gap_cache", {})
    key = (k, eps_r)
    if key not in cache:
        out = []
        with tree.context():
            for parent, left, right in gaps(tree, k):
                if not (word_kept(left.word, eps_r) and word_kept(right.word, eps_r)):
                    continue
                if not word_kept(parent.word, eps_r):
                    continue
                out.append(float(gmpy2.log(right.lo.mid - left.hi.mid)))
        cache[key] = np.array(out)
    return cache[key]


def gap_sum(tree, k, s, eps=None):
    """Sum of ``|J|^s`` over the order-``k`` gaps (between siblings of level k+1)."""
    if k + 1 > tree.depth:
        raise DepthUnavailable(f"gap sum of order {k} needs depth {k + 1}")
    return _power_sum(gap_logs(tree, k, eps), float(s))


def gap_partial_sums(tree, s, K=None, eps=None):
    """Cumulative sums ``sum_{k<=K} sum_{P_k} |J|^s`` for K = 0..K."""
    if K is None:
        K = tree.depth - 1
    out, total = [], 0.0
    for k in range(K + 1):
        total += gap_sum(tree, k, s, eps)
        out.append(total)
    return out


# ---------------------------------------------------------------------------
# growth matrices

def t_constants(V):
    V = float(V)
    return (V - 8) / 3, 2 * (V + 5)


def R_matrix(a, x):
    x = float(x)
    return np.array([[0.0, x ** (a - 1), 0.0],
                     [(a + 1) * x, 0.0, a * x],
                     [a * x, 0.0, (a - 1) * x]])


def Q_matrix(a, V, gamma, kind="Q"):
    """``Q_k`` (``kind='Q'``), ``Q~_k`` (``'tilde'``) or ``Q^_k`` (``'hat'``) for digit ``a``."""
    t1, t2 = t_constants(V)
    g = float(gamma)
    if kind == "Q":
        top, w = t1 ** (-g * (a - 1)), (t1 * a) ** (-g)
        return np.array([[0.0, top, 0.0],
                         [(a + 1) * w, 0.0, a * w],
                         [a * w, 0.0, (a - 1) * w]])
    if kind == "tilde":
        top, w = t2 ** (-g * (a - 1)), (t2 * a ** 3) ** (-g)
        return np.array([[0.0, top, 0.0],
                         [(a + 1) * w, 0.0, a * w],
                         [a * w, 0.0, (a - 1) * w]])
    if kind == "hat":
        top, w = t2 ** (-g * (a - 1)), a / 4 * (t2 * a / 4) ** (-g)
        return np.array([[0.0, top, 0.0],
                         [w, 0.0, w],
                         [w, 0.0, w]])
    raise ValueError(f"unknown matrix kind {kind!r}")


def matrix_norm(m):
    return float(np.max(np.abs(m)))


@dataclass
class GrowthProduct:
    """``S_n = R_1 ... R_n`` as ``scaled * exp(sum(ledger))``."""

    x: float
    n: int
    scaled: np.ndarray
    ledger: list = field(default_factory=list)

    @property
    def log_norm(self):
        if any(v == -math.inf for v in self.ledger):
            return -math.inf
        return math.fsum(self.ledger)

    @property
    def norm_root(self):
        return math.exp(self.log_norm / self.n) if self.n else 1.0

    def matrix(self):
        return self.scaled * math.exp(self.log_norm)

    def log_norms(self):
        """``log ||S_j||`` for j = 1..n."""
        out, acc = [], 0.0
        for v in self.ledger:
            acc = -math.inf if v == -math.inf or acc == -math.inf else acc + v
            out.append(acc)
        return out


def _ledger_product(mats):
    prod = np.eye(3)
    ledger = []
    for m in mats:
        prod = prod @ m
        top = matrix_norm(prod)
        if top == 0:
            ledger.append(-math.inf)
        else:
            prod = prod / top
            ledger.append(math.log(top))
    return prod, ledger


def growth_product(freq, x, n, start=1):
    """``R_start ... R_{start+n-1}`` at ``x`` with the scale ledger."""
    ds = [freq.digit(i) for i in range(start, start + n)]
    prod, ledger = _ledger_product(R_matrix(a, x) for a in ds)
    return GrowthProduct(float(x), n, prod, ledger)


def spectral_radius(m):
    return float(max(abs(np.linalg.eigvals(m))))


def period_growth(freq, x):
    """Growth rate ``rho(R_{period})^(1/L)`` of the periodic tail at ``x``."""
    period = freq.period
    prod, ledger = _ledger_product(R_matrix(a, x) for a in period)
    if any(v == -math.inf for v in ledger):
        return 0.0
    rho = spectral_radius(prod)
    if rho == 0:
        return 0.0
    return math.exp((math.log(rho) + math.fsum(ledger)) / len(period))


@dataclass(frozen=True)
class PsiPhi:
    psi: float
    phi: float
    exact: float = None
    n_max: int = 0
    estimator: str = "ratio"


def growth_estimates(log_norms, estimator="ratio"):
    """Per-n growth estimates from ``log ||S_j||``, j = 1..n.

    ``root`` is ``||S_n||^(1/n)``; ``ratio`` is ``(||S_n|| / ||S_{n/2}||)^(1/(n-n/2))``,
    which cancels the constant prefactor in ``||S_n|| ~ c rho^n``.
    """
    out = []
    for j, ln in enumerate(log_norms, start=1):
        if ln == -math.inf:
            out.append(0.0)
            continue
        if estimator == "root":
            out.append(math.exp(ln / j))
        elif estimator == "ratio":
            h = j // 2
            ln_h = log_norms[h - 1] if h else 0.0
            out.append(math.exp((ln - ln_h) / (j - h)))
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
    return out


def psi_phi(freq, x, n_max=DEFAULT_N_MAX, window=None, estimator="ratio"):
    """Finite-horizon ``psi`` / ``phi`` (tail min / max) and, for periodic tails, the exact value."""
    if freq.length is not None:
        n_max = min(n_max, freq.length)
    if window is None:
        window = max(1, n_max // 4)
    gp = growth_product(freq, x, n_max)
    est = growth_estimates(gp.log_norms(), estimator)[-window:]
    exact = period_growth(freq, x) if freq.is_periodic_tail() else None
    return PsiPhi(min(est), max(est), exact, n_max, estimator)


def _K_values(freq, n_digits=DEFAULT_N_MAX):
    exact = freq.exact_K()
    if exact is not None:
        return exact
    n = n_digits if freq.length is None else min(n_digits, freq.length)
    stats = frequency.digit_stats(frequency.digits(freq, n), spec=freq)
    return float(stats.K_lo), float(stats.K_hi)


def f_bracket(K):
    """Interval ``[1/(6K^2), min(2/K, 2^(-1/3))]`` containing f for finite K.

    The lower end comes from ``psi(x) <= K sqrt(6x)``: pair products are
    below ``2x a_n a_{n+1} J`` and ``J^2 = 3J``, so the pair bound alone
    (without the factor 3) does not control the growth rate.
    """
    return 1 / (6 * K * K), min(2 / K, 2 ** (-1 / 3))


@dataclass(frozen=True)
class FStar:
    value: float
    which: str
    mode: str
    K: float
    bracket: tuple

    @property
    def neg_log(self):
        return math.inf if self.value == 0 else -math.log(self.value)


def f_star(freq, which="lower", tol=1e-12, mode="auto", n_max=DEFAULT_N_MAX,
           estimator="ratio"):
    """``f_*`` (``which='lower'``, from psi) or ``f^*`` (``'upper'``, from phi).

    ``mode='exact'`` uses the period spectral radius (periodic tails only),
    ``'finite'`` the tail estimates at ``n_max``; ``'auto'`` picks exact when
    available. Unbounded digit means give 0.
    """
    if which not in ("lower", "upper"):
        raise ValueError("which must be 'lower' or 'upper'")
    K_lo, K_hi = _K_values(freq, n_max)
    K = K_lo if which == "lower" else K_hi
    if math.isinf(K):
        return FStar(0.0, which, "unbounded", K, (0.0, 0.0))
    if mode == "auto":
        mode = "exact" if freq.is_periodic_tail() else "finite"
    if mode == "exact" and not freq.is_periodic_tail():
        raise ConfigError("exact mode needs a periodic tail")
    br = f_bracket(K)

    def growth(x):
        if mode == "exact":
            return period_growth(freq, x)
        pp = psi_phi(freq, x, n_max, estimator=estimator)
        return pp.psi if which == "lower" else pp.phi

    # widen the analytic bracket a little: finite estimates are not exact
    lo, hi = br[0] / 2, min(1.0, br[1] * 1.5)
    while growth(lo) >= 1 and lo > 1e-300:
        lo /= 2
    while growth(hi) < 1 and hi < 1:
        hi = min(1.0, hi * 1.5)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if growth(mid) >= 1:
            hi = mid
        else:
            lo = mid
    return FStar(0.5 * (lo + hi), which, mode, K, br)


# ---------------------------------------------------------------------------
# matrix bounds on b_{k,gamma}

def _bracket_product(ds, V, gamma, kind):
    vec = np.array([1.0, 0.0, 1.0])
    log_scale = 0.0
    for a in ds:
        vec = vec @ Q_matrix(a, V, gamma, kind)
        top = float(np.max(vec))
        if top == 0:
            return 0.0
        vec = vec / top
        log_scale += math.log(top)
    return float(vec.sum()) * math.exp(log_scale)


def matrix_bound_b(freq, V, gamma, k, side="upper"):
    """Upper ``4^g (1,0,1) Q_1..Q_k (1,1,1)^t`` or lower ``(1,0,1) Q~_1..Q~_k (1,1,1)^t``."""
    ds = frequency.digits(freq, k) if k else []
    if side == "upper":
        return 4 ** float(gamma) * _bracket_product(ds, V, gamma, "Q")
    if side == "lower":
        return _bracket_product(ds, V, gamma, "tilde")
    raise ValueError("side must be 'upper' or 'lower'")


@dataclass(frozen=True)
class Sandwich:
    k: int
    gamma: float
    lower: float
    value: float
    upper: float

    @property
    def ok(self):
        return self.lower <= self.value <= self.upper


def bulb_sandwich(tree, gamma, ks=None):
    """Matrix lower bound, ``b_{k,gamma}(0)`` and matrix upper bound per level."""
    if tree.epsilon != 0:
        raise ConfigError("the matrix sandwich is stated for the untruncated tree")
    ks = range(tree.depth + 1) if ks is None else ks
    out = []
    for k in ks:
        b = band_sum(tree, k, gamma)
        out.append(Sandwich(k, float(gamma), matrix_bound_b(tree.freq, tree.V, gamma, k, "lower"),
                            b.value, matrix_bound_b(tree.freq, tree.V, gamma, k, "upper")))
    return out


def hat_lower_bound(freq, V, gamma, k):
    """``(1,0,1) Q^_1..Q^_k (1,1,1)^t``, a lower bound for ``b_{k,gamma}(1/4)``."""
    ds = frequency.digits(freq, k) if k else []
    return _bracket_product(ds, V, gamma, "hat")


def band_sum_hat(tree, k, gamma):
    """``b_{k,gamma}(1/4)`` from an untruncated tree (outside the tree-building range)."""
    return _power_sum(level_logs(tree, k, EPS_HAT, checked=False).mid, float(gamma))


def unbounded_lower_bound(freq, V, k):
    """``(ln delta_k - ln 8) / (ln delta_k + ln(t_2/4))``."""
    _, t2 = t_constants(V)
    ln_delta = math.fsum(math.log(a) for a in frequency.digits(freq, k)) / k
    return (ln_delta - math.log(8)) / (ln_delta + math.log(t2 / 4))


# ---------------------------------------------------------------------------
# dimension brackets and predictions

@dataclass(frozen=True)
class DimBracket:
    lower: tuple
    upper: tuple
    f_lower: float
    f_upper: float
    K: tuple
    cap: float = None


def dim_bracket(freq, V, n_max=DEFAULT_N_MAX):
    """Intervals for the liminf (``lower``) and limsup (``upper``) of ``s_k``."""
    t1, t2 = t_constants(V)
    fl = f_star(freq, "lower", n_max=n_max)
    fu = f_star(freq, "upper", n_max=n_max)
    K_lo, K_hi = fl.K, fu.K
    if math.isinf(K_lo):
        lower = (1.0, 1.0)
    else:
        num = fl.neg_log
        lower = (num / (6 * math.log(4 * K_lo ** 2) + math.log(t2)), num / math.log(t1))
    if math.isinf(K_hi):
        upper, cap = (1.0, 1.0), None
    else:
        num = fu.neg_log
        cap = (math.log(K_hi) + math.log(math.sqrt(2))) / (math.log(K_hi) + math.log(t1))
        upper = (num / (6 * math.log(2 * K_hi) + math.log(t2)), min(num / math.log(t1), cap))
    return DimBracket(lower, upper, fl.value, fu.value, (K_lo, K_hi), cap)


@dataclass(frozen=True)
class Prediction:
    neg_log_f_lower: float
    neg_log_f_upper: float
    ratios: dict = field(default_factory=dict)


def asymptotic_prediction(freq, V=None, s_values=None, n_max=DEFAULT_N_MAX):
    """``-ln f_*`` and ``-ln f^*``; with ``s_values`` also ``s_k ln V / (-ln f_*)``."""
    lo = f_star(freq, "lower", n_max=n_max).neg_log
    hi = f_star(freq, "upper", n_max=n_max).neg_log
    ratios = {}
    if s_values and V is not None:
        lnV = math.log(float(V))
        for k, s in s_values.items():
            ratios[k] = s * lnV / lo if math.isfinite(lo) else 0.0
    return Prediction(lo, hi, ratios)


@dataclass(frozen=True)
class LipschitzProbe:
    quotient: float
    s1: float
    s2: float
    constant: float


def lipschitz_probe(freq, V1, V2, k, eps=0, prec=PrecisionPolicy(), tol=DEFAULT_TOL):
    """``|s_k(V1) - s_k(V2)| / |V1 - V2|``; ``constant`` is that quotient over ``max(V)``."""
    if Fraction(str(V1)) == Fraction(str(V2)):
        s = solve_sk(expand_tree(freq, V1, k, eps, prec), k, tol=tol).s
        return LipschitzProbe(0.0, s, s, 0.0)
    s1 = solve_sk(expand_tree(freq, V1, k, eps, prec), k, tol=tol).s
    s2 = solve_sk(expand_tree(freq, V2, k, eps, prec), k, tol=tol).s
    q = abs(s1 - s2) / abs(float(V1) - float(V2))
    return LipschitzProbe(q, s1, s2, q / max(float(V1), float(V2)))


# ---------------------------------------------------------------------------
# report

@dataclass
class DimensionReport:
    freq: str
    V: str
    epsilon: Fraction
    rows: list
    tail: tuple
    bracket: DimBracket = None
    prediction: Prediction = None

    def to_dict(self):
        d = {"freq": self.freq, "V": self.V, "epsilon": str(self.epsilon),
             "rows": self.rows, "tail_min": self.tail[0], "tail_max": self.tail[1]}
        if self.bracket is not None:
            d["bracket"] = {"lower": list(self.bracket.lower), "upper": list(self.bracket.upper),
                            "f_lower": self.bracket.f_lower, "f_upper": self.bracket.f_upper}
        if self.prediction is not None:
            d["prediction"] = {"neg_log_f_lower": self.prediction.neg_log_f_lower,
                               "neg_log_f_upper": self.prediction.neg_log_f_upper}
        return d


REPORT_COLUMNS = ["k", "epsilon", "beta", "b", "s_k", "gap_sum", "bracket_lo", "bracket_hi"]


def dimension_report(tree, betas=(), window=DEFAULT_WINDOW, tol=DEFAULT_TOL, bracket=True,
                     extra_eps=None):
    """Per-level ``b``, ``s_k`` and gap sums; optionally the bracket and an ``s_k(eps)`` column."""
    rows, ss = [], []
    for k in range(1, tree.depth + 1):
        sk = solve_sk(tree, k, tol=tol)
        ss.append(sk.s)
        g = gap_sum(tree, k, sk.s) if k < tree.depth else None
        extra = solve_sk(tree, k, extra_eps, tol).s if extra_eps is not None else None
        for beta in (betas or (None,)):
            b = band_sum(tree, k, sk.s if beta is None else beta).value
            row = {"k": k, "epsilon": str(tree.epsilon), "beta": "" if beta is None else beta,
                   "b": b, "s_k": sk.s, "gap_sum": "" if g is None else g,
                   "bracket_lo": sk.lo, "bracket_hi": sk.hi, "clamped": sk.clamped}
            if extra_eps is not None:
                row["s_k_eps"] = extra
            rows.append(row)
    br = dim_bracket(tree.freq, tree.V) if bracket and float(tree.V) >= 24 else None
    pred = asymptotic_prediction(tree.freq) if bracket else None
    return DimensionReport(str(tree.freq), str(float(tree.V)), tree.epsilon, rows,
                           tail_stats(ss, window) if ss else (None, None), br, pred)


def report_csv(report):
    cols = list(REPORT_COLUMNS)
    if report.rows and "s_k_eps" in report.rows[0]:
        cols.append("s_k_eps")
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in report.rows:
        w.writerow({c: (repr(v) if isinstance(v, float) else v) for c, v in row.items()})
    return buf.getvalue()


def report_json(report):
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)
