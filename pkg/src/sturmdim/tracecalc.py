"""Trace polynomials ``t_(k,p)(x) = tr M_{k-1} M_k^p`` via the renormalisation recursion.

Level ``k`` of a table stores ``t_(k,p)`` for ``p = -1 .. a_{k+1}+1``. Inside a
level the Cayley-Hamilton recursion ``t_(k,p+1) = u_k t_(k,p) - t_(k,p-1)``
holds with ``u_k = tr M_k``; levels are glued by

    t_(k+1,-1) = t_(k,a_{k+1}-1),  t_(k+1,0) = u_k,  u_{k+1} = t_(k,a_{k+1}).

Seeds from ``M_{-1} = [[1,-V],[0,1]]`` and ``M_0 = [[x,-1],[1,0]]``:
``t_(0,-1) = x+V``, ``t_(0,0) = 2``, ``u_0 = x``.

All arithmetic is gmpy2 ``mpfr`` in a local context of the requested precision.
"""

from dataclasses import dataclass
import json
import math

import gmpy2
import mpmath
from gmpy2 import mpfr

from . import frequency
from .errors import (ConfigError, DepthTooLarge, IndexOutOfTable, NegativeDiscriminant,
                     PrecisionExhausted)

MIN_BITS = 64
ORACLE_MAX_SITES = 10 ** 6


@dataclass(frozen=True)
class PrecisionPolicy:
    """Working precision: a fixed bit count, or ``bits=None`` for the auto rule.

    The auto rule grows with the smallest band length reachable at order ``n``:
    ``base + sum_{i<=n} (a_i log2 t2 + 3 log2 a_i + 2)`` with ``t2 = 2(V+5)``.
    """

    bits: int = None
    base: int = 64
    per_order: int = 2

    def __post_init__(self):
        if self.bits is not None and self.bits < MIN_BITS:
            raise ValueError(f"precision must be at least {MIN_BITS} bits")

    @classmethod
    def fixed(cls, bits):
        return cls(bits=int(bits))

    @classmethod
    def auto(cls):
        return cls()

    @property
    def is_auto(self):
        return self.bits is None

    def effective_bits(self, ds, V):
        if self.bits is not None:
            return self.bits
        log_t2 = math.log2(2 * (float(V) + 5))
        total = self.base
        for a in ds:
            total += a * log_t2 + 3 * math.log2(a) + self.per_order
        return max(MIN_BITS, int(math.ceil(total)))

    def __str__(self):
        return "auto" if self.bits is None else str(self.bits)


def parse_precision(text):
    text = str(text).strip().lower()
    if text == "auto":
        return PrecisionPolicy.auto()
    try:
        return PrecisionPolicy.fixed(int(text))
    except ValueError as exc:
        raise ConfigError(f"bad precision {text!r}: {exc}") from None


def _check_finite(value):
    if not gmpy2.is_finite(value):
        raise PrecisionExhausted("non-finite value in trace recursion")


def trace_row(ds, V, x, k, p_max=None, deriv=False):
    """Level-``k`` row ``[t_(k,-1), ..., t_(k,p_max)]`` and ``u_k`` at ``x``.

    ``ds`` must hold at least ``a_1..a_k`` (and ``a_{k+1}`` when ``p_max`` is
    left at its default ``a_{k+1}+1``). Runs in the caller's mpfr context.
    With ``deriv`` the return is ``(row, drow, u, du)``.
    """
    if p_max is None:
        p_max = ds[k] + 1
    x = mpfr(x)
    V = mpfr(V)
    tm, t0, u = x + V, mpfr(2), x
    dtm, dt0, du = mpfr(1), mpfr(0), mpfr(1)
    for j in range(k):
        a = ds[j]
        prev, cur = tm, t0
        if deriv:
            dprev, dcur = dtm, dt0
        # row j up to p = a, keeping p = a-1 and p = a
        for _ in range(a):
            nxt = u * cur - prev
            if deriv:
                dnxt = du * cur + u * dcur - dprev
                dprev, dcur = dcur, dnxt
            prev, cur = cur, nxt
        tm, t0, u = prev, u, cur
        if deriv:
            dtm, dt0, du = dprev, du, dcur
    row = [tm, t0]
    drow = [dtm, dt0] if deriv else None
    for p in range(1, p_max + 1):
        row.append(u * row[-1] - row[-2])
        if deriv:
            drow.append(du * row[-2] + u * drow[-1] - drow[-2])
    _check_finite(row[-1])
    if deriv:
        return row, drow, u, du
    return row, u


@dataclass(frozen=True)
class TraceLevelTable:
    """Per-level trace arrays at one point ``x``; ``rows[k][p+1] = t_(k,p)``."""

    x: object
    V: object
    prec: int
    digits: tuple
    rows: tuple
    us: tuple
    drows: tuple = None
    dus: tuple = None

    @property
    def k_max(self):
        return len(self.rows) - 1

    def p_range(self, k):
        return range(-1, len(self.rows[k]) - 1)

    def _check(self, k, p):
        if not (0 <= k <= self.k_max) or not (-1 <= p < len(self.rows[k]) - 1):
            raise IndexOutOfTable(f"t_({k},{p}) not stored in table")

    def t(self, k, p):
        self._check(k, p)
        return self.rows[k][p + 1]

    def dt(self, k, p):
        if self.drows is None:
            raise IndexOutOfTable("table has no derivative channel")
        self._check(k, p)
        return self.drows[k][p + 1]

    def u(self, k):
        """``tr M_k = t_(k+1,0)``."""
        if not 0 <= k <= self.k_max:
            raise IndexOutOfTable(f"u_{k} not stored in table")
        return self.us[k]

    def to_json(self):
        with gmpy2.context(gmpy2.get_context(), precision=self.prec):
            digits10 = int(self.prec * 0.30103) + 2
            fmt = lambda v: f"{v:.{digits10}g}"
            data = {
                "precision": self.prec,
                "x": fmt(self.x),
                "V": fmt(self.V),
                "digits": list(self.digits),
                "levels": [
                    {"k": k, "u": fmt(self.us[k]),
                     "t": {str(p): fmt(self.rows[k][p + 1]) for p in self.p_range(k)}}
                    for k in range(len(self.rows))
                ],
            }
            if self.drows is not None:
                for k, level in enumerate(data["levels"]):
                    level["dt"] = {str(p): fmt(self.drows[k][p + 1]) for p in self.p_range(k)}
        return json.dumps(data, indent=1)


def eval_traces(freq, V, x, k_max, want_derivative=False, prec=PrecisionPolicy()):
    """Table of ``t_(k,p)(x)`` for ``k = 0..k_max``, ``p = -1..a_{k+1}+1``."""
    if V <= 0:
        raise ValueError("coupling V must be positive")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    ds = tuple(frequency.digits(freq, k_max + 1))
    bits = prec.effective_bits(ds, V)
    rows, drows, us, dus = [], [], [], []
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        xv, Vv = mpfr(x), mpfr(V)
        tm, t0, u = xv + Vv, mpfr(2), xv
        dtm, dt0, du = mpfr(1), mpfr(0), mpfr(1)
        for k in range(k_max + 1):
            a = ds[k]
            row, drow = [tm, t0], [dtm, dt0]
            for _ in range(a + 1):
                row.append(u * row[-1] - row[-2])
                drow.append(du * row[-2] + u * drow[-1] - drow[-2])
            _check_finite(row[-1])
            rows.append(tuple(row))
            drows.append(tuple(drow))
            us.append(u)
            dus.append(du)
            # p = a-1 and p = a live at indices a and a+1
            tm, t0, u = row[a], u, row[a + 1]
            dtm, dt0, du = drow[a], du, drow[a + 1]
    return TraceLevelTable(
        x=xv, V=Vv, prec=bits, digits=ds, rows=tuple(rows), us=tuple(us),
        drows=tuple(drows) if want_derivative else None,
        dus=tuple(dus) if want_derivative else None)


def fricke(x, y, z):
    """``x^2 + y^2 + z^2 - xyz - 4`` grouped as ``x^2+y^2-4 + z(z-xy)``."""
    return x * x + y * y - 4 + z * (z - x * y)


def fricke_residual(table, k, p):
    """``|Lambda(t_(k+1,0), t_(k,p), t_(k,p+1)) - V^2|``."""
    with gmpy2.context(gmpy2.get_context(), precision=table.prec):
        y, z = table.t(k, p), table.t(k, p + 1)
        return abs(fricke(table.u(k), y, z) - table.V * table.V)


def chebyshev_S(p, t, derivative=False):
    """``S_p(t)`` from ``S_0 = 0``, ``S_1 = 1``, ``S_{p+1} = t S_p - S_{p-1}``.

    With ``derivative`` returns ``(S_p(t), S_p'(t))``. Works for floats,
    mpmath and mpfr values alike.
    """
    if p < 0:
        raise ValueError("Chebyshev index must be >= 0")
    s_prev, s = 0 * t, 0 * t + 1
    d_prev, d = 0 * t, 0 * t
    if p == 0:
        return (s_prev, d_prev) if derivative else s_prev
    for _ in range(p - 1):
        s_prev, s, d_prev, d = s, t * s - s_prev, d, s + t * d - d_prev
    return (s, d) if derivative else s


def z_branch(x, y, V, sign):
    """``xy/2 +- sqrt(4V^2 + (4-x^2)(4-y^2))/2``; both solve ``Lambda(x,y,z) = V^2``."""
    disc = 4 * V * V + (4 - x * x) * (4 - y * y)
    if disc < 0:
        raise NegativeDiscriminant(f"discriminant {disc} < 0 at x={x}, y={y}")
    if isinstance(disc, (int, float)):
        root = math.sqrt(disc)
    elif isinstance(disc, type(mpfr(0))):
        root = gmpy2.sqrt(disc)
    else:
        root = mpmath.sqrt(disc)
    return x * y / 2 + (root / 2 if sign > 0 else -root / 2)


def _mpf_to_mpfr(value):
    man, exp = value.man_exp
    return gmpy2.mul_2exp(mpfr(int(man)), int(exp))


def oracle_traces(freq, V, x, k_max, prec_bits=256, max_sites=ORACLE_MAX_SITES):
    """``[tr M_0, ..., tr M_k_max]`` from the explicit ordered site product.

    ``M_k`` for ``k >= 1`` is the product of ``[[x - v_n, -1], [1, 0]]`` over
    ``n = q_k, ..., 1`` (leftmost factor ``n = q_k``) with
    ``v_n = V`` iff ``frac(n alpha)`` lies in ``[1-alpha, 1)``. ``M_0`` is the
    convention matrix with trace ``x``. One pass over ``q_{k_max}`` sites.
    """
    ds = frequency.digits(freq, max(k_max, 1))
    conv = frequency.convergents(ds)
    q_max = conv.q(k_max) if k_max >= 1 else 1
    if q_max > max_sites:
        raise DepthTooLarge(f"q_{k_max} = {q_max} exceeds the {max_sites}-site cap")
    need = max(prec_bits, 2 * q_max.bit_length() + 64)
    a_mp = frequency.alpha(freq, need + 64)
    targets = {conv.q(k): k for k in range(1, k_max + 1)}
    traces = {0: None}
    with gmpy2.context(gmpy2.get_context(), precision=need + 64):
        al = _mpf_to_mpfr(a_mp)
        threshold = 1 - al
        frac = mpfr(0)
    with gmpy2.context(gmpy2.get_context(), precision=prec_bits):
        xv, Vv = mpfr(x), mpfr(V)
        x0, xV = xv, xv - Vv
        traces[0] = xv
        # product P = [[a, b], [c, d]]; left-multiplying by [[e,-1],[1,0]]
        pa, pb, pc, pd = mpfr(1), mpfr(0), mpfr(0), mpfr(1)
        for n in range(1, q_max + 1):
            with gmpy2.context(gmpy2.get_context(), precision=need + 64):
                frac = frac + al
                if frac >= 1:
                    frac -= 1
                hit = frac >= threshold
            e = xV if hit else x0
            pa, pb, pc, pd = e * pa - pc, e * pb - pd, pa, pb
            if n in targets:
                traces[targets[n]] = pa + pd
    return [traces[k] for k in range(k_max + 1)]


def matrix_oracle(freq, V, x, k, prec_bits=256, max_sites=ORACLE_MAX_SITES):
    """Trace of ``M_k(x)`` by brute force (``k = -1`` gives 2, ``k = 0`` gives ``x``)."""
    if k == -1:
        return mpfr(2)
    if k == 0:
        with gmpy2.context(gmpy2.get_context(), precision=prec_bits):
            return mpfr(x)
    return oracle_traces(freq, V, x, k, prec_bits, max_sites)[k]
