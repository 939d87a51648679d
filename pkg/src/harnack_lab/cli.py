"""Command line entry point ``harnack-lab``.

Exit codes: 0 all checks pass, 1 some check fails, 2 usage or config error,
3 numeric failure.
"""
from __future__ import annotations

import json
import sys

import click
import numpy as np

from .exceptions import ConfigError, HarnackLabError
from .oracles import ORACLE_KINDS, oracle_csv


def _floats(text: str, what: str):
    try:
        return [float(v) for v in text.replace(":", ",").split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"{what} must be comma separated numbers") from None


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Experiments on nonlocal parabolic equations."""


@main.command("run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", default=None, help="Override the config's output directory.")
def run_cmd(config, output_dir):
    """Run the experiment described by a JSON CONFIG file."""
    from .experiments import run, validate_config

    with open(config) as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        click.echo(f"error: invalid JSON: {exc}", err=True)
        sys.exit(2)
    if output_dir is not None and isinstance(doc, dict):
        doc["output_dir"] = output_dir
    try:
        cfg = validate_config(doc)
    except ConfigError as exc:
        for path, msg in exc.errors:
            click.echo(f"error: {path or '<root>'}: {msg}", err=True)
        sys.exit(2)
    result = run(cfg)
    rep = result.report
    if "error" in rep:
        click.echo(f"numeric failure: {rep['error']}", err=True)
    for name, r in sorted(rep.get("reports", {}).items()):
        if isinstance(r, dict) and "pass" in r:
            click.echo(f"{name}: pass={r['pass']} max_c={r.get('max_c', '')}")
    for name, c in sorted(rep.get("checks", {}).items()):
        if c.get("pass") is not None:
            click.echo(f"{name}: pass={c['pass']} value={c['value']} {c['op']} {c['threshold']}")
    click.echo(f"overall: {'PASS' if result.status == 0 else 'FAIL'} -> {result.output_dir}")
    sys.exit(result.status)


@main.command("verify-lemmas")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--count", default=100_000, show_default=True, type=click.IntRange(min=1))
def verify_lemmas(seed, count):
    """Randomized lemma checks; JSON keyed by lemma id on stdout."""
    from .lemmas import run_lemma_suite

    try:
        out = run_lemma_suite(seed, count)
    except HarnackLabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(json.dumps(out, sort_keys=True, indent=2))
    ok = all(v.get("pass", True) for v in out.values())
    sys.exit(0 if ok else 1)


@main.command("oracle-dump")
@click.option("--kind", type=click.Choice(ORACLE_KINDS), default="poisson_half",
              show_default=True)
@click.option("--t", "ts", required=True, help="Time(s), comma separated, e.g. 0.5,1.")
@click.option("--range", "xrange", required=True, help="Space interval lo,hi, e.g. --range=-5,5.")
@click.option("--points", default=101, show_default=True, type=click.IntRange(min=2))
@click.option("--s", "s", default=0.5, show_default=True, type=float)
def oracle_dump(kind, ts, xrange, points, s):
    """Write oracle values as CSV (t, x, value) to stdout."""
    times = _floats(ts, "--t")
    bounds = _floats(xrange, "--range")
    if len(bounds) != 2 or not bounds[0] < bounds[1]:
        raise click.BadParameter("--range needs lo,hi with lo < hi")
    try:
        text = oracle_csv(kind, times, np.linspace(bounds[0], bounds[1], points), s)
    except HarnackLabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(text, nl=False)


if __name__ == "__main__":
    main()
