"""Continued-fraction digits of the frequency, convergents and digit statistics.

A frequency is described by a rule producing the digits ``a_1, a_2, ...`` of
``alpha = [0; a_1, a_2, ...]``. Everything downstream consumes digits; the
real number ``alpha`` is only materialised on request.
"""

from dataclasses import dataclass, field
from math import gcd
import math

import mpmath

from .errors import CFParseError, ListExhausted

PERIODIC = "periodic"
EVENTUALLY = "eventually"
LIST = "list"
FORMULA = "formula"

# formula id -> a_k as a function of k (1-based)
FORMULAS = {
    "k": lambda k: k,
}


@dataclass(frozen=True)
class FrequencySpec:
    kind: str
    prefix: tuple = ()
    period: tuple = ()
    formula: str = ""

    def __post_init__(self):
        if self.kind not in (PERIODIC, EVENTUALLY, LIST, FORMULA):
            raise CFParseError(f"unknown frequency kind {self.kind!r}")
        for a in self.prefix + self.period:
            if not isinstance(a, int) or a < 1:
                raise CFParseError(f"digit {a!r} is not a positive integer")
        if self.kind in (PERIODIC, EVENTUALLY) and not self.period:
            raise CFParseError(f"{self.kind} spec needs a non-empty period")
        if self.kind == EVENTUALLY and not self.prefix:
            raise CFParseError("eventually-periodic spec needs a non-empty prefix")
        if self.kind == LIST and not self.prefix:
            raise CFParseError("explicit list is empty")
        if self.kind == FORMULA and self.formula not in FORMULAS:
            raise CFParseError(f"unknown formula {self.formula!r}")

    @classmethod
    def periodic(cls, *period):
        return cls(PERIODIC, period=tuple(period))

    @classmethod
    def eventually(cls, prefix, period):
        return cls(EVENTUALLY, prefix=tuple(prefix), period=tuple(period))

    @classmethod
    def explicit(cls, digits):
        return cls(LIST, prefix=tuple(digits))

    @classmethod
    def from_formula(cls, name):
        return cls(FORMULA, formula=name)

    @property
    def length(self):
        """Number of available digits (``None`` when unbounded)."""
        return len(self.prefix) if self.kind == LIST else None

    def digit(self, k):
        """The digit ``a_k`` (``k >= 1``)."""
        if k < 1:
            raise ValueError("digits are indexed from 1")
        if self.kind == FORMULA:
            return FORMULAS[self.formula](k)
        if self.kind == LIST:
            if k > len(self.prefix):
                raise ListExhausted(
                    f"explicit list has {len(self.prefix)} digits, a_{k} requested")
            return self.prefix[k - 1]
        if k <= len(self.prefix):
            return self.prefix[k - 1]
        j = k - len(self.prefix) - 1
        return self.period[j % len(self.period)]

    def __str__(self):
        join = lambda ds: ",".join(map(str, ds))
        if self.kind == PERIODIC:
            return f"periodic:{join(self.period)}"
        if self.kind == EVENTUALLY:
            return f"eventually:{join(self.prefix)}|{join(self.period)}"
        if self.kind == LIST:
            return f"list:{join(self.prefix)}"
        return f"formula:{self.formula}"

    # closed-form liminf / limsup of the geometric means, when known
    def exact_K(self):
        """``(K_lower, K_upper)`` in closed form, or ``None`` if unknown.

        Periodic and eventually periodic rules have both limits equal to the
        geometric mean of the period; ``a_k = k`` has both infinite.
        """
        if self.kind in (PERIODIC, EVENTUALLY):
            g = geometric_mean(self.period)
            return g, g
        if self.kind == FORMULA:
            return math.inf, math.inf
        return None

    def is_periodic_tail(self):
        return self.kind in (PERIODIC, EVENTUALLY)


def geometric_mean(ds):
    return math.exp(sum(math.log(a) for a in ds) / len(ds))


def _parse_digits(text, token):
    if not text:
        raise CFParseError(f"empty digit list in {token!r}")
    out = []
    for piece in text.split(","):
        piece = piece.strip()
        try:
            value = int(piece)
        except ValueError:
            raise CFParseError(f"bad digit {piece!r} in {token!r}") from None
        if value < 1:
            raise CFParseError(f"digit {piece!r} in {token!r} must be >= 1")
        out.append(value)
    return tuple(out)


def parse_cf(text):
    """Parse ``periodic:1,2`` / ``eventually:2,3|1`` / ``list:1,2,3`` / ``formula:k``."""
    kind, sep, body = text.strip().partition(":")
    if not sep:
        raise CFParseError(f"missing ':' in frequency spec {text!r}")
    if kind == PERIODIC:
        return FrequencySpec.periodic(*_parse_digits(body, text))
    if kind == EVENTUALLY:
        pre, bar, per = body.partition("|")
        if not bar:
            raise CFParseError(f"missing '|' between prefix and period in {text!r}")
        return FrequencySpec.eventually(_parse_digits(pre, pre), _parse_digits(per, per))
    if kind == LIST:
        return FrequencySpec.explicit(_parse_digits(body, text))
    if kind == FORMULA:
        if body not in FORMULAS:
            raise CFParseError(f"unknown formula {body!r}")
        return FrequencySpec.from_formula(body)
    raise CFParseError(f"unknown frequency kind {kind!r}")


def digits(spec, k):
    """First ``k`` digits ``[a_1, ..., a_k]``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return [spec.digit(i) for i in range(1, k + 1)]


@dataclass(frozen=True)
class Convergents:
    """Numerators/denominators ``p_i, q_i`` for ``i = -1..k`` (stored shifted by one)."""

    ps: tuple
    qs: tuple

    @property
    def k(self):
        return len(self.qs) - 2

    def p(self, i):
        return self.ps[i + 1]

    def q(self, i):
        return self.qs[i + 1]


def convergents(ds):
    ps, qs = [1, 0], [0, 1]
    for a in ds:
        ps.append(a * ps[-1] + ps[-2])
        qs.append(a * qs[-1] + qs[-2])
    return Convergents(tuple(ps), tuple(qs))


@dataclass(frozen=True)
class DigitStats:
    """Geometric means ``delta_k = (a_1...a_k)^(1/k)`` and tail extremes.

    ``K_lo``/``K_hi`` are the min/max of ``delta_k`` over the last ``window``
    computed indices; they stand in for the liminf/limsup.
    """

    deltas: tuple
    K_lo: object
    K_hi: object
    window: int
    exact: tuple = field(default=None)

    def delta(self, k):
        return self.deltas[k - 1]


def digit_stats(ds, window=None, spec=None, dps=40):
    """``delta_k`` for every prefix of ``ds`` at ``dps`` decimal digits."""
    if not ds:
        raise ValueError("digit list is empty")
    if window is None:
        window = max(1, len(ds) // 2)
    window = min(window, len(ds))
    with mpmath.workdps(dps):
        logs = mpmath.mpf(0)
        deltas = []
        for k, a in enumerate(ds, start=1):
            logs += mpmath.log(a)
            deltas.append(+mpmath.exp(logs / k))
        tail = deltas[-window:]
        stats = DigitStats(tuple(deltas), min(tail), max(tail), window,
                           spec.exact_K() if spec is not None else None)
    return stats


def alpha(spec, prec_bits=256, n_digits=None):
    """``alpha`` to about ``prec_bits`` bits, as an mpmath number.

    Uses digits until ``q_n^2`` exceeds ``2^prec_bits`` (or all digits of an
    explicit list) and closes the expansion with the golden tail
    ``[1; 1, 1, ...]`` so the result is irrational with the prescribed prefix.
    """
    if n_digits is None:
        n_digits = 0
        q_prev, q = 0, 1
        limit = 2 ** (prec_bits // 2 + 8)
        while q < limit:
            if spec.length is not None and n_digits >= spec.length:
                break
            n_digits += 1
            q_prev, q = q, spec.digit(n_digits) * q + q_prev
    ds = digits(spec, n_digits) if n_digits else []
    with mpmath.workprec(prec_bits + 32):
        tail = (1 + mpmath.sqrt(5)) / 2
        x = tail
        for a in reversed(ds):
            x = a + 1 / x
        result = 1 / x
    return result


def check_coprime(conv):
    return all(gcd(conv.p(i), conv.q(i)) == 1 for i in range(1, conv.k + 1))
