"""Command-line surface.

Exit codes: 0 success, 1 a verified claim failed, 2 usage error.
Every flag can also be set through an environment variable prefixed with
``TMATRIX_`` (e.g. ``TMATRIX_SEGMENT_SIZE``, ``TMATRIX_VERIFY_JOBS``).
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from fractions import Fraction
from itertools import islice

import click

from . import legendre, matrix, primes
from .errors import TMatrixError

ENV_PREFIX = "TMATRIX"
DEFAULT_MAX_M = 50_000
# keeps (m+1)^4 and the critical products p(k1) * p below 2**128
WIDTH_SAFE_M = (1 << 32) - 2
FORMATS = ("table", "json", "csv")


@dataclass
class RunConfig:
    segment_size: int = primes.DEFAULT_SEGMENT_SIZE
    max_m: int = DEFAULT_MAX_M
    jobs: int = 1
    fmt: str = "table"
    cache_path: str | None = None

    def __post_init__(self):
        if self.jobs < 1:
            raise click.UsageError(f"--jobs must be >= 1, got {self.jobs}")
        if not 3 <= self.max_m <= WIDTH_SAFE_M:
            raise click.UsageError(f"--max-m must lie in [3, {WIDTH_SAFE_M}]")
        if self.fmt not in FORMATS:
            raise click.UsageError(f"--format must be one of {', '.join(FORMATS)}")

    @property
    def sieve_limit(self) -> int:
        return max(primes.DEFAULT_LIMIT, (self.max_m + 2) ** 2 + legendre.WINDOW_MARGIN)


def dump_json(obj) -> str:
    """Canonical JSON: insertion-ordered keys, integers only, two-space indent."""
    return json.dumps(obj, indent=2, ensure_ascii=False)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().rstrip("\n")


def _record_dict(r: matrix.ElementRecord) -> dict:
    return {"k": r.k, "n": r.n, "value": r.value, "defining": r.is_defining, "leading": r.is_leading}


def render_elements(records, fmt: str) -> str:
    records = list(records)
    if fmt == "json":
        return dump_json([_record_dict(r) for r in records])
    if fmt == "csv":
        return _csv(["k", "n", "value", "defining", "leading"],
                    [[r.k, r.n, r.value, int(r.is_defining), int(r.is_leading)] for r in records])
    lines = []
    for r in records:
        c = matrix.Classification(r.is_defining, r.is_leading)
        lines.append(f"a({r.k};{r.n}) = {r.value}  {c}")
    return "\n".join(lines)


def _fmt_list(values) -> str:
    return "[" + ",".join(str(v) for v in values) + "]"


def render_active_sets(records, fmt: str) -> str:
    records = list(records)
    if fmt == "json":
        return dump_json([r.to_dict() for r in records])
    if fmt == "csv":
        return _csv(["m", "k1", "q", "H", "C", "k1_next"],
                    [[r.m, r.k1, r.q, ";".join(map(str, r.H)), r.C, r.k1_next] for r in records])
    return "\n".join(f"m={r.m} k1={r.k1} q={r.q} H={_fmt_list(r.H)} C={r.C} k1_next={r.k1_next}"
                     for r in records)


def render_trace(rec, trace, fmt: str) -> str:
    if fmt == "json":
        return dump_json({"record": rec.to_dict(),
                          "steps": [s._asdict() for s in trace.steps],
                          "terminal_leading": trace.terminal_leading})
    if fmt == "csv":
        return _csv(["from_row", "to_row", "value", "label"], [list(s) for s in trace.steps])
    lines = [render_active_sets([rec], "table"), f"start p^2(k1) = {trace.start_leading}"]
    lines += [f"{s.from_row:>6} -> {s.to_row:<6} {s.value:>24}  {s.label}" for s in trace.steps]
    lines.append(f"terminal leading {trace.terminal_leading}")
    return "\n".join(lines)


def render_report(report: legendre.VerificationReport, fmt: str) -> str:
    d = report.to_dict()
    if fmt == "json":
        return dump_json(d)
    if fmt == "csv":
        return _csv(["claim", "status"], list(d["claims"].items()))
    lines = [f"range {report.m_from}..{report.m_to}  ({report.elapsed_ms} ms)"]
    lines += [f"  {name:<30} {status}" for name, status in report.claims.items()]
    lines.append(f"  degenerate q_m = 1: {report.degenerate_q1 or 'none'}")
    v = report.first_violation
    lines.append(f"  first violation: m={v.m} {v.claim} expected={v.expected} actual={v.actual}"
                 if v else "  first violation: none")
    return "\n".join(lines)


def _parse_real(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise click.BadParameter(f"{text!r} is not a number") from None


def _as_number(x: Fraction):
    return x.numerator if x.denominator == 1 else x


format_option = click.option("--format", "fmt", type=click.Choice(FORMATS), default=None,
                             help="Output format (defaults to the group setting).")


class _Ctx:
    def __init__(self, config: RunConfig):
        self.config = config

    def fmt(self, override):
        return override or self.config.fmt

    def check_m(self, m: int):
        if m < 3:
            raise click.UsageError(f"m must be >= 3, got {m}")
        if m > self.config.max_m:
            raise click.UsageError(f"m={m} exceeds the --max-m guard {self.config.max_m}")


def _run(fn):
    """Translate library errors into usage errors (exit 2)."""
    try:
        return fn()
    except TMatrixError as e:
        raise click.UsageError(str(e)) from None


@click.group(context_settings={"auto_envvar_prefix": ENV_PREFIX,
                               "help_option_names": ["-h", "--help"]})
@click.option("--segment-size", type=int, default=primes.DEFAULT_SEGMENT_SIZE, show_default=True,
              help="Odd slots per sieve segment.")
@click.option("--max-m", type=int, default=DEFAULT_MAX_M, show_default=True,
              help="Largest m any command accepts.")
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="table", show_default=True,
              envvar=f"{ENV_PREFIX}_FORMAT")
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), default=None,
              envvar=f"{ENV_PREFIX}_CACHE",
              help="Load/store the prime cache at this path.")
@click.pass_context
def main(ctx, segment_size, max_m, fmt, cache_path):
    """T-matrix elements, active sets and range verification."""
    config = RunConfig(segment_size=segment_size, max_m=max_m, fmt=fmt, cache_path=cache_path)
    if cache_path and os.path.exists(cache_path):
        cache = _run(lambda: primes.PrimeCache.load(cache_path, config.sieve_limit))
        primes.set_default_cache(cache)
    else:
        _run(lambda: primes.configure(segment_size, config.sieve_limit))
    ctx.obj = _Ctx(config)
    if cache_path:
        ctx.call_on_close(lambda: primes.default_cache().save(cache_path))


@main.command()
@click.argument("k", type=int)
@click.argument("n", type=int)
@format_option
@click.pass_obj
def element(obj, k, n, fmt):
    """Value and classification of a(K;N)."""
    click.echo(render_elements([_run(lambda: matrix.record(k, n))], obj.fmt(fmt)))


@main.command()
@click.argument("k", type=int)
@click.argument("n", type=int)
@format_option
@click.pass_obj
def classify(obj, k, n, fmt):
    """Defining / leading flags of a(K;N)."""
    click.echo(render_elements([_run(lambda: matrix.record(k, n))], obj.fmt(fmt)))


@main.command()
@click.argument("k", type=int)
@click.option("--from", "from_value", default="0", help="Only values above this.")
@click.option("--count", type=click.IntRange(min=0), default=10, show_default=True)
@format_option
@click.pass_obj
def row(obj, k, from_value, count, fmt):
    """Defining elements of row K in ascending order."""
    start = _as_number(_parse_real(from_value))
    records = _run(lambda: list(islice(matrix.row_defining_iter(k, start), count)))
    click.echo(render_elements(records, obj.fmt(fmt)))


@main.command("upper-defining")
@click.argument("b")
@format_option
@click.pass_obj
def upper_defining(obj, b, fmt):
    """Upper defining element D(B) for B >= 49."""
    k1, value = _run(lambda: matrix.upper_defining(_as_number(_parse_real(b))))
    fmt = obj.fmt(fmt)
    if fmt == "json":
        click.echo(dump_json({"b": b, "k1": k1, "value": value}))
    elif fmt == "csv":
        click.echo(_csv(["b", "k1", "value"], [[b, k1, value]]))
    else:
        click.echo(f"D({b}) = {value}  (row k1={k1})")


@main.command("active-set")
@click.argument("m", type=int)
@format_option
@click.pass_obj
def active_set(obj, m, fmt):
    """Active set, critical element and row indices for M^4."""
    obj.check_m(m)
    rec, _ = _run(lambda: legendre.scheme1(m))
    click.echo(render_active_sets([rec], obj.fmt(fmt)))


@main.command()
@click.argument("m", type=int)
@format_option
@click.pass_obj
def critical(obj, m, fmt):
    """Critical element for M^4."""
    obj.check_m(m)
    value = _run(lambda: legendre.critical_element(m))
    fmt = obj.fmt(fmt)
    if fmt == "json":
        click.echo(dump_json({"m": m, "C": value}))
    elif fmt == "csv":
        click.echo(_csv(["m", "C"], [[m, value]]))
    else:
        click.echo(f"C = {value}")


@main.command()
@click.argument("m", type=int)
@click.option("--trace", is_flag=True, help="Print every move of the walk.")
@format_option
@click.pass_obj
def scheme(obj, m, trace, fmt):
    """Run the row walk for M^4."""
    obj.check_m(m)
    rec, tr = _run(lambda: legendre.scheme1(m))
    fmt = obj.fmt(fmt)
    if trace:
        click.echo(render_trace(rec, tr, fmt))
    else:
        click.echo(render_active_sets([rec], fmt))
        if fmt == "table":
            click.echo(f"terminal leading {tr.terminal_leading}")


@main.command("pi")
@click.argument("x")
@click.pass_obj
def pi_cmd(obj, x):
    """Number of primes <= X."""
    click.echo(_run(lambda: primes.pi(_parse_real(x))))


def _range_args(obj, m_from, m_to, jobs):
    if m_from < 3:
        raise click.UsageError(f"--from must be >= 3, got {m_from}")
    if m_from > m_to:
        raise click.UsageError(f"empty range: --from {m_from} > --to {m_to}")
    if m_to > obj.config.max_m:
        raise click.UsageError(f"--to {m_to} exceeds the --max-m guard {obj.config.max_m}")
    if jobs < 1:
        raise click.UsageError(f"--jobs must be >= 1, got {jobs}")


range_options = [
    click.option("--from", "m_from", type=int, required=True),
    click.option("--to", "m_to", type=int, required=True),
    click.option("--jobs", type=int, default=1, show_default=True),
    format_option,
]


def with_range(fn):
    for opt in reversed(range_options):
        fn = opt(fn)
    return fn


@main.command()
@with_range
@click.pass_obj
def verify(obj, m_from, m_to, jobs, fmt):
    """Check every identity for each m in [--from, --to]."""
    _range_args(obj, m_from, m_to, jobs)
    cfg = obj.config
    report = _run(lambda: legendre.verify_range(m_from, m_to, jobs, segment_size=cfg.segment_size,
                                                limit=cfg.sieve_limit))
    click.echo(render_report(report, obj.fmt(fmt)))
    if not report.ok:
        m = report.first_violation.m
        rec, tr = legendre.scheme1(m)
        click.echo(dump_json({"certificate": rec.to_dict(),
                              "steps": [s._asdict() for s in tr.steps],
                              "terminal_leading": tr.terminal_leading}), err=True)
        sys.exit(1)


@main.command()
@with_range
@click.pass_obj
def export(obj, m_from, m_to, jobs, fmt):
    """Write the active-set certificate of every m in [--from, --to]."""
    _range_args(obj, m_from, m_to, jobs)
    cfg = obj.config
    fmt = obj.fmt(fmt)
    blocks = legendre.run_blocks(m_from, m_to, jobs, segment_size=cfg.segment_size,
                                 limit=cfg.sieve_limit, keep_records=True)
    if fmt == "json":
        records = _run(lambda: [r for b in blocks for r in b.records])
        click.echo(render_active_sets(records, "json"))
        return
    _run(lambda: _stream_records(blocks, fmt))


def _stream_records(blocks, fmt: str) -> None:
    for i, b in enumerate(blocks):
        text = render_active_sets(b.records, fmt)
        if fmt == "csv" and i:
            text = text.partition("\n")[2]  # header only once
        if text:
            click.echo(text)


if __name__ == "__main__":
    main()
