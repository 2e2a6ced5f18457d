"""Command line entry point: ``shrinklab <verb> [options]``.

Exit status is 0 iff every verdict of the run passes, 1 if any verdict
fails, and 2 for configuration or usage errors.
"""

from __future__ import annotations

import sys
from fractions import Fraction
from pathlib import Path

import click
from pydantic import ValidationError

from .cantor import BaseSequence, expand
from .config import default_config, load_config
from .reports import emit_report
from .runner import run


def _common(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="TOML experiment config."),
        click.option("--seed", type=int, help="Master seed."),
        click.option("--samples", type=int, help="Number of samples."),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--threads", type=int, help="Worker threads for sample-level parallelism."),
        click.option("--precision-bits", type=int, help="Override the orbit precision budget."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _execute(kind: str, config_path, seed, samples, out, threads, precision_bits):
    try:
        cfg = load_config(config_path) if config_path else default_config(kind)
        if cfg.kind != kind:
            raise click.UsageError(f"config describes a {cfg.kind!r} experiment, not {kind!r}")
        cfg = cfg.with_overrides(seed=seed, samples=samples, out=out, threads=threads,
                                 precision_bits=precision_bits)
    except (ValidationError, ValueError) as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(2)
    rec = run(cfg)
    out_dir = Path(cfg.out or f"runs/{kind}")
    paths = emit_report(rec, out_dir)
    for name, v in rec.verdicts.items():
        click.echo(f"{'PASS' if v['pass'] else 'FAIL'}  {name}")
    click.echo(f"wrote {len(paths)} files to {out_dir}")
    sys.exit(0 if rec.passed else 1)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Shrinking targets, recurrence and mixing for non-autonomous circle maps."""


@main.command()
@_common
def shrink(**kw):
    """Hit counts against Phi(N) for a shrinking-target schedule."""
    _execute("shrink", **kw)


@main.command()
@_common
def recur(**kw):
    """Recurrence events d(T_n x, x) < r_n."""
    _execute("recur", **kw)


@main.group(invoke_without_command=True)
@_common
@click.pass_context
def cantor(ctx, **kw):
    """Cantor-series digit-pattern counts; ``cantor expand`` prints digits."""
    if ctx.invoked_subcommand is None:
        _execute("cantor", **kw)


@cantor.command("expand")
@click.argument("x")
@click.option("--bases", default="2", show_default=True, help="Comma-separated bases, repeated periodically.")
@click.option("--digits", "count", default=16, show_default=True, type=int)
def cantor_expand(x, bases, count):
    """Print the first digits of the rational X in a periodic base sequence."""
    try:
        value = Fraction(x)
        bs = BaseSequence.periodic([int(b) for b in bases.split(",")])
        digits = expand(value, bs, count)
    except (ValueError, ZeroDivisionError) as e:
        raise click.BadParameter(str(e)) from e
    click.echo(" ".join(str(d) for d in digits))


@main.command()
@_common
def markov(**kw):
    """Markov partition and distortion certificate."""
    _execute("markov", **kw)


@main.command()
@_common
def mixing(**kw):
    """Mixing deviations and exponential-decay fit."""
    _execute("mixing", **kw)


@main.command("converge-demo")
@_common
def converge_demo(**kw):
    """Converging Blaschke compositions versus a mixing contrast family."""
    _execute("converge-demo", **kw)


if __name__ == "__main__":  # pragma: no cover
    main()
