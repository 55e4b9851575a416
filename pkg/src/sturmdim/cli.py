"""Command-line front end: ``sturmdim {spectrum,predim,fstar,verify,gibbs}``.

Every output starts with a header echoing the configuration verbatim, the
precision in use and the tool version, so runs can be reproduced.
"""

import argparse
from dataclasses import dataclass
from fractions import Fraction
import json
import math
import os
import sys
import traceback

from . import __version__
from . import bandtree, dimension, frequency, gibbs
from .errors import BoundViolated, ConfigError, SturmError, format_word
from .tracecalc import parse_precision

PRECISION_ENV = "STURMDIM_PRECISION"
SUITES = ("structure", "bounds", "ratio", "ladder", "bulb", "gibbs")


# ---------------------------------------------------------------------------
# configuration

def parse_V(text):
    try:
        value = Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse V {text!r}") from None
    return value


def parse_floats(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse number list {text!r}") from None


def _config(args):
    skip = {"func", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def header(args, bits=None):
    return {"tool": "sturmdim", "version": __version__, "command": args.command,
            "config": _config(args), "precision": args.precision,
            "precision_bits": bits}


def _csv_header(h):
    lines = [f"# tool: sturmdim {h['version']}", f"# command: {h['command']}"]
    for k, v in h["config"].items():
        lines.append(f"# {k}: {v}")
    if h["precision_bits"] is not None:
        lines.append(f"# precision_bits: {h['precision_bits']}")
    return "\n".join(lines) + "\n"


def emit(args, text, summary=None):
    """Write the main output to ``--out`` (or stdout) and the summary line to the other stream."""
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        if summary:
            print(summary)
    else:
        sys.stdout.write(text)
        if summary:
            print(summary, file=sys.stderr)


def _tree(args, depth=None):
    freq = frequency.parse_cf(args.cf)
    eps = bandtree.parse_epsilon(args.epsilon)
    prec = parse_precision(args.precision)
    V = parse_V(args.V)
    depth = args.depth if depth is None else depth
    return bandtree.expand_tree(freq, V, depth, eps, prec, threads=args.threads)


# ---------------------------------------------------------------------------
# commands

def cmd_spectrum(args):
    tree = _tree(args)
    level = tree.depth if args.level is None else args.level
    if not 0 <= level <= tree.depth:
        raise ConfigError(f"level {level} outside 0..{tree.depth}")
    rows = bandtree.band_rows(tree, level)
    gap_rows = bandtree.gap_rows(tree, level) if args.gaps and level < tree.depth else None
    h = header(args, tree.prec)
    counts = bandtree.level_counts(tree)
    if args.format == "json":
        extra = {"header": h, "level": level, "level_counts": counts}
        if gap_rows is not None:
            extra["gaps"] = gap_rows
        text = bandtree.dump_json(rows, tree.prec, extra) + "\n"
    else:
        text = _csv_header(h) + bandtree.dump_csv(rows)
        if gap_rows is not None:
            text += "# gaps\n" + bandtree.dump_csv(gap_rows)
    emit(args, text, "level sizes: " + ", ".join(map(str, counts)))
    return 0


def cmd_predim(args):
    if args.depth < 1:
        raise ConfigError("predim needs depth >= 1")
    if args.depth == 1:
        print("warning: s_1 may be clamped to 1 (order-1 bands can have length >= 1)",
              file=sys.stderr)
    betas = tuple(parse_floats(args.beta)) if args.beta else ()
    eps = bandtree.parse_epsilon(args.epsilon)
    # s_k(eps) is read off the untruncated tree, next to s_k(0)
    freq = frequency.parse_cf(args.cf)
    tree = bandtree.expand_tree(freq, parse_V(args.V), args.depth, 0,
                                parse_precision(args.precision), threads=args.threads)
    rep = dimension.dimension_report(tree, betas, window=args.window, tol=args.tol,
                                     extra_eps=eps if eps else None)
    h = header(args, tree.prec)
    if args.format == "json":
        doc = rep.to_dict()
        doc["header"] = h
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        text = _csv_header(h)
        if rep.bracket is not None:
            text += (f"# s_lower bracket: {rep.bracket.lower[0]!r} {rep.bracket.lower[1]!r}\n"
                     f"# s_upper bracket: {rep.bracket.upper[0]!r} {rep.bracket.upper[1]!r}\n")
        text += dimension.report_csv(rep)
    last = rep.rows[-1]
    emit(args, text, f"s_{last['k']} = {last['s_k']:.10f}; tail min/max "
                     f"{rep.tail[0]:.10f} {rep.tail[1]:.10f}")
    return 0


def cmd_fstar(args):
    freq = frequency.parse_cf(args.cf)
    lo = dimension.f_star(freq, "lower", tol=args.tol, mode=args.mode, n_max=args.n_max)
    hi = dimension.f_star(freq, "upper", tol=args.tol, mode=args.mode, n_max=args.n_max)
    h = header(args)
    doc = {"f_lower": lo.value, "f_upper": hi.value, "neg_log_f_lower": lo.neg_log,
           "neg_log_f_upper": hi.neg_log, "mode": lo.mode, "K_lower": lo.K, "K_upper": hi.K,
           "K_infinite": math.isinf(lo.K)}
    if args.format == "json":
        text = json.dumps({"header": h, **doc}, indent=2, sort_keys=True) + "\n"
    else:
        cols = sorted(doc)
        text = _csv_header(h) + ",".join(cols) + "\n" + ",".join(repr(doc[c]) for c in cols) + "\n"
    emit(args, text, f"f_* = {lo.value:.12g}  f^* = {hi.value:.12g}  "
                     f"-ln f_* = {lo.neg_log:.8g}")
    return 0


@dataclass
class Check:
    name: str
    ok: bool
    detail: str
    word: tuple = None


def _sample(seq, count):
    if len(seq) <= count:
        return list(seq)
    step = len(seq) / count
    return [seq[int(i * step)] for i in range(count)]


def run_suite(tree, suites=SUITES, gammas=(0.3, 0.5, 0.8), beta=0.5, ladders=40):
    """Inequality checks on ``tree``; one Check per family."""
    out = []
    if "structure" in suites:
        problems = bandtree.check_structure(tree)
        bad_ends = [n for level in tree.levels for n in level
                    if not bandtree.check_endpoints(tree, n, samples=9)]
        out.append(Check("structure", not problems, f"{len(problems)} problems"
                         + (f", first: {problems[0]}" if problems else "")))
        out.append(Check("endpoints", not bad_ends, f"{len(bad_ends)} bands fail",
                         bad_ends[0].word if bad_ends else None))
    if "bounds" in suites:
        recs = bandtree.verify_band_bounds(tree)
        basic = [r for r in recs if not r.ok_basic]
        decay = [r for r in recs if not r.ok_decay]
        out.append(Check("length-bounds", not basic, f"{len(basic)} of {len(recs)} bands outside",
                         basic[0].word if basic else None))
        detail = f"{len(decay)} of {len(recs)} bands exceed 4^(1-n/2)"
        if decay:
            detail += f"; first length {decay[0].length:.6g} > {decay[0].decay:.6g}"
        out.append(Check("length-decay", not decay, detail, decay[0].word if decay else None))
    if "ratio" in suites:
        recs = [bandtree.verify_derivative_ratio(tree, p, c)
                for level in tree.levels[:-1] for p in level for c in p.children]
        bad = [r for r in recs if not r.ok]
        worst = max((r.hi_obs / r.hi_bound for r in recs), default=0.0)
        out.append(Check("derivative-ratio", not bad,
                         f"{len(bad)} of {len(recs)} pairs fail; max observed/upper {worst:.4g}",
                         bad[0].word if bad else None))
    if "ladder" in suites and tree.depth >= 1:
        words = [n.word for n in _sample(tree.levels[-1], ladders)]
        bad, bad_count, worst = [], 0, 0.0
        for w in words:
            lad = bandtree.build_modified_ladder(tree, w)
            chk = bandtree.verify_ladder(tree, lad)
            worst = max(worst, chk.worst_identity)
            if not (chk.image_ok and chk.ratio_ok and chk.identity_ok):
                bad.append(w)
            if not lad.bounds_ok():
                bad_count += 1
        out.append(Check("ladder", not bad, f"{len(bad)} of {len(words)} ladders fail; "
                         f"worst identity residual {worst:.3g}", bad[0] if bad else None))
        out.append(Check("ladder-length", bad_count == 0,
                         f"{bad_count} of {len(words)} outside (n-k)/2 <= m <= sum a_i"))
    if "bulb" in suites and tree.epsilon == 0:
        for g in gammas:
            rows = dimension.bulb_sandwich(tree, g)
            bad = [r for r in rows if not r.ok]
            margins = " ".join(f"k={r.k}:{r.value / r.lower:.3g}/{r.upper / r.value:.3g}"
                               for r in rows)
            out.append(Check(f"bulb gamma={g}", not bad, f"margins b/lower, upper/b {margins}"))
    if "gibbs" in suites and tree.depth >= 3:
        mu = gibbs.finite_gibbs(tree, beta)
        exact = mu.total() == 1 and all(mu.total(j) == 1 for j in range(mu.m + 1))
        k = tree.depth - 3
        d = gibbs.gibbs_ratio_report(mu, tree, k)
        spreads = " ".join(f"{t}:{r.spread:.4g}" for t, r in d.types.items())
        out.append(Check("gibbs", exact, f"normalization exact={exact}; level {k} "
                         f"spreads {spreads}; zeta {d.zetas}"))
    return out


def cmd_verify(args):
    if args.suite == "all":
        suites = SUITES
    else:
        suites = tuple(s.strip() for s in args.suite.split(","))
        unknown = [s for s in suites if s not in SUITES]
        if unknown:
            raise ConfigError(f"unknown suite {unknown[0]!r}; choose from {', '.join(SUITES)}")
    tree = _tree(args)
    gammas = tuple(parse_floats(args.gamma)) if args.gamma else (0.3, 0.5, 0.8)
    checks = run_suite(tree, suites, gammas)
    h = header(args, tree.prec)
    if args.format == "json":
        text = json.dumps({"header": h, "checks": [
            {"name": c.name, "ok": c.ok, "detail": c.detail,
             "word": format_word(c.word) if c.word else None} for c in checks]},
            indent=2) + "\n"
    else:
        text = _csv_header(h) + "".join(
            f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.detail}"
            + (f" [word {format_word(c.word)}]" if c.word else "") + "\n" for c in checks)
    failed = [c for c in checks if not c.ok]
    emit(args, text, f"{len(checks) - len(failed)} of {len(checks)} checks pass")
    if failed:
        raise BoundViolated(f"check {failed[0].name} failed", failed[0].word)
    return 0


def cmd_gibbs(args):
    m = args.depth if args.m is None else args.m
    tree = _tree(args, depth=max(args.depth, m))
    beta = float(args.beta)
    mu = gibbs.finite_gibbs(tree, beta, m=m)
    k = args.level if args.level is not None else (m - 3 if m >= 3 else None)
    diags = [gibbs.gibbs_ratio_report(mu, tree, k)] if k is not None else []
    h = header(args, tree.prec)
    if args.format == "json":
        doc = json.loads(gibbs.measure_json(mu, header=h))
        doc["diagnostics"] = [{"type": t, "k": d.k, "count": r.count, "min_ratio": r.min_A,
                               "max_ratio": r.max_A, "min_ratio_a": r.min_a,
                               "max_ratio_a": r.max_a} for d in diags
                              for t, r in d.types.items()]
        text = json.dumps(doc, indent=2) + "\n"
    else:
        text = _csv_header(h) + gibbs.diagnostics_csv(diags)
    emit(args, text, f"order {m} measure: {len(mu.levels[m])} bands, total mass "
                     f"{mu.total()}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser():
    parser = argparse.ArgumentParser(prog="sturmdim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sturmdim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, depth, tree=True):
        p.add_argument("--cf", required=True, help="frequency, e.g. periodic:1 or list:1,2,3")
        p.add_argument("--format", choices=("json", "csv"), default="csv")
        p.add_argument("--out", help="output file (default stdout)")
        if tree:
            p.add_argument("--V", default="24", help="coupling (exact decimal or rational)")
            p.add_argument("--depth", type=int, default=depth)
            p.add_argument("--epsilon", default="0", help="truncation, e.g. 1/24")
            p.add_argument("--threads", type=int, default=1)
        p.add_argument("--precision", default=os.environ.get(PRECISION_ENV, "auto"),
                       help=f"bits or 'auto' (default from ${PRECISION_ENV})")

    p = sub.add_parser("spectrum", help="expand the band tree and dump a level")
    common(p, 3)
    p.add_argument("--level", type=int)
    p.add_argument("--gaps", action="store_true")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("predim", help="pre-dimensions s_k and brackets")
    common(p, 8)
    p.add_argument("--beta", help="comma-separated beta grid for b_{k,beta}")
    p.add_argument("--window", type=int, default=dimension.DEFAULT_WINDOW)
    p.add_argument("--tol", type=float, default=dimension.DEFAULT_TOL)
    p.set_defaults(func=cmd_predim)

    p = sub.add_parser("fstar", help="f_* and f^* from the growth matrices")
    common(p, 0, tree=False)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--n-max", type=int, default=dimension.DEFAULT_N_MAX)
    p.add_argument("--mode", choices=("auto", "exact", "finite"), default="auto")
    p.set_defaults(func=cmd_fstar)

    p = sub.add_parser("verify", help="run the inequality suite")
    common(p, 8)
    p.add_argument("--suite", default="all", help="all or a comma list of " + ",".join(SUITES))
    p.add_argument("--gamma", help="gamma grid for the matrix sandwich")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gibbs", help="finite-order Gibbs-like measure")
    common(p, 6)
    p.add_argument("--beta", default="0.5")
    p.add_argument("--m", type=int, help="measure order (default: depth)")
    p.add_argument("--level", type=int, help="diagnostics level (default m-3)")
    p.set_defaults(func=cmd_gibbs)
    return parser


def _origin(exc):
    tb = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(tb):
        name = os.path.splitext(os.path.basename(frame.filename))[0]
        if name in ("frequency", "tracecalc", "bandtree", "dimension", "gibbs", "cli"):
            return name
    return "sturmdim"


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SturmError as exc:
        print(f"error [{_origin(exc)}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error [{_origin(exc)}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
