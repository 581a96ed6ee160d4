"""Command-line entry point; each subcommand wraps one library module."""
from __future__ import annotations

import argparse
import csv
import io
import math
import re
import secrets
import sys
from typing import Optional, Sequence

import numpy as np

from .errors import AccuracyError, InvalidArgumentError, ParseError, RetryExhaustedError, TranscriptError
from .estimation import (
    BLOCK_AXES,
    METHOD_2D,
    METHOD_A,
    METHODS,
    CorrelationStat,
    correlation,
    estimate_2d,
    estimate_method_a,
    estimate_method_b,
    fidelity,
)
from .fidelity import DEFAULT_N_PHI, DEFAULT_N_THETA, TABLE_COLUMNS, fidelity_exact, fidelity_monte_carlo
from .protocol import AttackConfig, PartyRole, Scenario, SessionConfig, run_session
from .quantum import OutcomeRecord

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_IO = 3
EXIT_ACCURACY = 4
EXIT_RETRY = 5
EXIT_INADMISSIBLE = 6
EXIT_DEGENERATE = 7

EPILOG = """\
exit codes:
  0  success
  2  bad flags or malformed input (parse error)
  3  input/output error (unreadable input, unwritable output)
  4  quadrature refinement disagreed beyond tolerance
  5  retry cap exhausted (method b stayed inadmissible)
  6  estimate inadmissible (method b correlations outside the unit disc)
  7  estimate degenerate (method a with all correlations zero)
"""

_ATTACKS = {"none": Scenario.HONEST, "ghz": Scenario.GHZ_ATTACK, "intercept": Scenario.INTERCEPT_RESEND}
_AXIS_NAMES = {0: "x", 1: "y", 2: "z"}


def parse_range(text: str) -> list[int]:
    """``N``, ``lo..hi`` or ``lo..hi:step`` (inclusive) as a list of positive ints."""
    m = re.fullmatch(r"\s*(\d+)\s*(?:\.\.\s*(\d+)\s*(?::\s*(\d+)\s*)?)?", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected N, lo..hi or lo..hi:step, got {text!r}")
    lo = int(m.group(1))
    hi = int(m.group(2)) if m.group(2) else lo
    step = int(m.group(3)) if m.group(3) else 1
    if lo < 1 or hi < lo or step < 1:
        raise argparse.ArgumentTypeError(f"range {text!r} must satisfy 1 <= lo <= hi and step >= 1")
    return list(range(lo, hi + 1, step))


def parse_axis(text: str) -> tuple:
    try:
        vec = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"axis must be three comma-separated numbers, got {text!r}") from None
    norm = float(np.linalg.norm(vec)) if vec.shape == (3,) else 0.0
    if vec.shape != (3,) or not math.isfinite(norm) or norm == 0.0:
        raise argparse.ArgumentTypeError(f"axis must be a nonzero 3-vector, got {text!r}")
    return tuple(float(v) for v in vec / norm)


def _fmt(value) -> str:
    # repr of a float is locale-free and round-trips exactly
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _resolve_seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(32)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _emit(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# benchmark


def benchmark_rows(method, ns, trials=0, seed=0, n_theta=DEFAULT_N_THETA, n_phi=DEFAULT_N_PHI, hemisphere=1):
    """Exact row per N, followed by a Monte Carlo row when ``trials`` > 0."""
    rows = []
    for n in ns:
        rows.append(fidelity_exact(method, n, n_theta, n_phi, hemisphere=hemisphere).as_row())
        if trials > 0:
            ss = np.random.SeedSequence([seed, n])
            rows.append(fidelity_monte_carlo(method, n, trials, ss, hemisphere=hemisphere).as_row())
    return rows


def render_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for row in rows:
        writer.writerow([row["method"]] + [_fmt(row[c]) for c in TABLE_COLUMNS[1:]])
    return buf.getvalue()


def cmd_benchmark(args) -> int:
    if args.trials < 0:
        raise InvalidArgumentError("--trials must be >= 0")
    seed = _resolve_seed(args) if args.trials > 0 else (args.seed or 0)
    rows = benchmark_rows(args.method, args.n, args.trials, seed, args.quad_theta, args.quad_phi, args.hemisphere)
    _emit(render_csv(rows), args.out)
    return EXIT_OK


# estimate

_TOKEN = re.compile(r"[^\s,]+")
_VALUES = {"+1": 1, "1": 1, "+": 1, "-1": -1, "-": -1}


def parse_records(text: str) -> list[tuple[int, np.ndarray]]:
    """Split text into +/-1 sequences, one per non-empty line; '#' starts a comment."""
    seqs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        values = []
        for tok in _TOKEN.finditer(body):
            if tok.group() not in _VALUES:
                raise ParseError(f"bad token {tok.group()!r} (expected +1, -1, + or -)", lineno, tok.start() + 1)
            values.append(_VALUES[tok.group()])
        if values:
            seqs.append((lineno, np.array(values, dtype=np.int8)))
    if not seqs:
        raise ParseError("no outcome sequences in input")
    return seqs


def _stats_from_lines(seqs, method) -> list[CorrelationStat]:
    blocks = len(BLOCK_AXES[method])
    if len(seqs) != 2 * blocks:
        raise ParseError(
            f"method {method} needs {2 * blocks} sequences (Alice then Bob for each of {blocks} axes), got {len(seqs)}"
        )
    stats = []
    for i in range(blocks):
        (la, a), (lb, b) = seqs[2 * i], seqs[2 * i + 1]
        if a.size != b.size:
            raise ParseError(f"sequence has {b.size} outcomes but line {la} has {a.size}", lb)
        stats.append(correlation(OutcomeRecord(a, b)))
    return stats


def estimate_report(stats, method, hemisphere=1):
    """(text, exit code) for the estimate derived from per-axis statistics."""
    if method == METHOD_2D:
        est = estimate_2d(stats[0])
    elif method == METHOD_A:
        est = estimate_method_a(*stats)
    else:
        est = estimate_method_b(*stats, hemisphere=hemisphere)
    lines = [f"method: {method}"]
    for i, s in enumerate(stats):
        name = _AXIS_NAMES[BLOCK_AXES[method][i]]
        lines.append(f"axis {name}: N={s.n} N_d={s.n_d} N_s={s.n_s} q={_fmt(s.q)} cos_e={_fmt(est.cos_theta_e[i])}")
    code = EXIT_OK
    if est.degenerate:
        lines.append("estimate: degenerate (all correlations zero)")
        code = EXIT_DEGENERATE
    elif not est.admissible:
        lines.append("estimate: inadmissible (correlations outside the unit disc)")
        code = EXIT_INADMISSIBLE
    else:
        m = est.m_e
        lines.append(f"m_e: {_fmt(m.x)} {_fmt(m.y)} {_fmt(m.z)}")
        lines.append("estimate: admissible")
    return "\n".join(lines) + "\n", code


def cmd_estimate(args) -> int:
    try:
        if args.input == "-":
            text = sys.stdin.read()
        else:
            with open(args.input, encoding="utf-8") as fh:
                text = fh.read()
    except OSError as exc:
        print(f"error: cannot read {args.input}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    stats = _stats_from_lines(parse_records(text), args.method)
    report, code = estimate_report(stats, args.method, args.hemisphere)
    _emit(report, args.out)
    return code


# protocol


def default_axis(method: str, seed: int, hemisphere: int = 1) -> tuple:
    """The announcer's axis when none is given: uniform over the method's domain, drawn from ``seed``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA715]))
    if method == METHOD_2D:
        phi = rng.uniform(0.0, 2 * math.pi)
        return (math.cos(phi), math.sin(phi), 0.0)
    v = rng.standard_normal(3)
    v /= np.linalg.norm(v)
    if method != METHOD_A and np.sign(v[2]) != hemisphere:
        v[2] = -v[2]
    return tuple(float(c) for c in v)


def protocol_summary(transcript) -> str:
    cfg = transcript.config
    lines = [
        f"session: {transcript.session_id}",
        f"method: {cfg.method} N={cfg.n} scenario={cfg.scenario.value} fraction={_fmt(cfg.attack.fraction)}",
        f"rounds: {transcript.rounds}",
    ]
    world = transcript.estimate_world
    if world is None:
        lines.append("estimate: none")
    else:
        lines.append(f"m_e: {_fmt(world[0])} {_fmt(world[1])} {_fmt(world[2])}")
        lines.append(f"fidelity: {_fmt(fidelity(cfg.axis, world / np.linalg.norm(world)))}")
    verdict = transcript.verdict.value
    if transcript.p_value is not None:
        verdict += f" (p={_fmt(transcript.p_value)})"
    lines.append(f"verdict: {verdict}")
    eve = transcript.eve_estimate
    if eve is not None and eve.m_e is not None:
        eve_world = np.asarray(cfg.attack.eve_frame).T @ eve.m_e.vector
        lines.append(f"eve fidelity: {_fmt(fidelity(cfg.axis, eve_world / np.linalg.norm(eve_world)))}")
    return "\n".join(lines) + "\n"


def cmd_protocol(args) -> int:
    seed = _resolve_seed(args)
    if len(args.n) != 1:
        raise InvalidArgumentError("protocol takes a single --n")
    axis = args.axis if args.axis is not None else default_axis(args.method, seed, args.hemisphere)
    config = SessionConfig(
        method=args.method,
        n=args.n[0],
        axis=axis,
        seed=seed,
        announcer=PartyRole(args.announcer.capitalize()),
        hemisphere=args.hemisphere,
        retries=args.retries,
        k_test=args.k_test,
        alpha=args.alpha,
        attack=AttackConfig(_ATTACKS[args.attack], args.fraction),
    )
    try:
        transcript = run_session(config)
        code = EXIT_OK
    except RetryExhaustedError as exc:
        transcript = exc.transcript
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_RETRY
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(transcript.serialize())
    sys.stdout.write(protocol_summary(transcript))
    return code


# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="secalign",
        description="Align reference frames from shared singlet pairs.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--method", choices=METHODS, default=METHOD_2D, help="estimation method (default 2d)")
    common.add_argument("--seed", type=int, default=None, help="RNG seed; generated and printed to stderr if omitted")
    common.add_argument("--hemisphere", type=int, choices=(1, -1), default=1, help="method b hemisphere sign")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(
            name, parents=[common], help=help_text, epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter
        )

    bench = add("benchmark", "average-fidelity table as CSV")
    bench.add_argument("--n", type=parse_range, default=[1], help="pairs per axis: N, lo..hi or lo..hi:step")
    bench.add_argument("--trials", type=int, default=0, help="Monte Carlo trials per N (0: exact only)")
    bench.add_argument("--quad-theta", type=int, default=DEFAULT_N_THETA, help="polar quadrature nodes")
    bench.add_argument("--quad-phi", type=int, default=DEFAULT_N_PHI, help="azimuthal quadrature nodes")
    bench.add_argument("--out", default=None, help="CSV path (default stdout)")
    bench.set_defaults(func=cmd_benchmark)

    est = add("estimate", "estimate a direction from recorded outcomes")
    est.add_argument("input", nargs="?", default="-", help="record file; '-' or omitted reads stdin")
    est.add_argument("--out", default=None, help="report path (default stdout)")
    est.set_defaults(func=cmd_estimate)

    proto = add("protocol", "run one protocol session and write its transcript")
    proto.add_argument("--n", type=parse_range, default=[100], help="pairs per axis")
    proto.add_argument("--axis", type=parse_axis, default=None, help="announcer axis x,y,z (default drawn from the seed)")
    proto.add_argument("--announcer", choices=("alice", "bob"), default="alice")
    proto.add_argument("--attack", choices=tuple(_ATTACKS), default="none")
    proto.add_argument("--fraction", type=float, default=1.0, help="fraction of pairs attacked")
    proto.add_argument("--retries", type=int, default=16, help="retry cap for inadmissible rounds")
    proto.add_argument("--k-test", type=int, default=200, help="test pairs for eavesdropper detection (0 disables)")
    proto.add_argument("--alpha", type=float, default=0.01, help="detection significance level")
    proto.add_argument("--out", default="transcript.txt", help="transcript path")
    proto.set_defaults(func=cmd_protocol)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, InvalidArgumentError, TranscriptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except AccuracyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    except RetryExhaustedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RETRY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
