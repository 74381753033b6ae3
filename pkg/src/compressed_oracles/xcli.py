"""``coracle`` command-line runner.

Exit codes: 0 pass, 1 assertion or fixture failure, 2 usage error, 3 budget
exceeded. Configuration precedence is flags, then the ``--config`` INI file,
then registry defaults.
"""

from __future__ import annotations

import configparser
import csv
import json
import sys
from pathlib import Path
from typing import Any

import click

from .experiments import REGISTRY, BudgetExceeded, run_entry
from .reporting import FixtureError, FixtureStore, fixture_key

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3
DEFAULT_FIXTURES = Path("tests") / "fixtures" / "frozen.json"

# Experiment parameters exposed as flags. Every default is None so the
# registry default applies unless a flag or config value is given.
PARAM_OPTIONS: list[tuple[str, type, str]] = [
    ("M", int, "domain size"),
    ("N", int, "range size, or permutation size"),
    ("n", int, "half-block bit length"),
    ("q", int, "query count"),
    ("l", int, "reported pairs"),
    ("t", int, "database size"),
    ("rounds", int, "Feistel rounds"),
    ("dist", click.Choice(["uniform", "feistel2-pair"]), "twirl distribution"),
    ("predicate", str, "predicate name"),
    ("kind", click.Choice(["function", "injective"]), "database kind"),
    ("I", str, "database as x:y pairs, comma separated"),
    ("x", int, "query input"),
    ("r", int, "sponge rate bits"),
    ("c", int, "sponge capacity bits"),
    ("w", int, "sponge target digest"),
    ("samples", int, "sampled databases"),
    ("budget", int, "sample budget"),
    ("seed", int, "RNG seed"),
]


def _param_options(fn):
    for name, typ, help_ in reversed(PARAM_OPTIONS):
        fn = click.option(f"--{name}", name, type=typ, default=None, help=help_)(fn)
    return fn


def _run_options(fn):
    opts = [
        click.option("--out", type=click.Path(dir_okay=False), help="write the JSON result here"),
        click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="write CSV rows here"),
        click.option("--fixtures", type=click.Choice(["record", "assert", "off"]), default="off", show_default=True),
        click.option("--fixture-file", type=click.Path(dir_okay=False), default=str(DEFAULT_FIXTURES), show_default=True),
        click.option("--json", "as_json", is_flag=True, help="print the result as JSON"),
        click.option("--timing", is_flag=True, help="include runtime in results"),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def load_config(path: str) -> dict[str, dict[str, str]]:
    """INI file to a click ``default_map``. ``[defaults]`` applies to every
    subcommand; a section named after a subcommand overrides it."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep M and N distinct from m and n
    parser.read(path)
    base = dict(parser["defaults"]) if parser.has_section("defaults") else {}
    out: dict[str, dict[str, str]] = {}
    for cmd in ("verify", "experiment", "enumerate", "cromulence", "distinguish"):
        sec = dict(parser[cmd]) if parser.has_section(cmd) else {}
        out[cmd] = {k.replace("-", "_"): v for k, v in {**base, **sec}.items()}
    return out


def _explicit(ctx: click.Context, params: dict[str, Any]) -> dict[str, Any]:
    keep = {}
    for k, v in params.items():
        src = ctx.get_parameter_source(k)
        if v is not None and src is not None and src.name != "DEFAULT":
            keep[k] = v
    return keep


def _fail(msg: str, code: int) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _execute(ctx: click.Context, command: str, name: str, params: dict[str, Any], opts: dict[str, Any]) -> None:
    entry = REGISTRY.get(name)
    if entry is None or entry.kind != command:
        names = sorted(e.name for e in REGISTRY.values() if e.kind == command)
        _fail(f"unknown {command} {name!r}; choose from {', '.join(names)}", EXIT_USAGE)
    given = _explicit(ctx, params)
    extra = set(given) - set(entry.params)
    if extra:
        _fail(f"{name} does not take {', '.join('--' + k for k in sorted(extra))}", EXIT_USAGE)
    try:
        outcome, report = run_entry(name, **given)
    except BudgetExceeded as exc:
        _fail(str(exc), EXIT_BUDGET)
    except (ValueError, KeyError) as exc:
        _fail(str(exc), EXIT_USAGE)

    full = {**entry.params, **given}
    code = EXIT_PASS if outcome.passed in (None, True) else EXIT_FAIL
    fixture_msgs: list[str] = []
    if opts["fixtures"] != "off" and outcome.frozen:
        try:
            store = FixtureStore(opts["fixture_file"])
            key = fixture_key(name, **full)
            for k in outcome.frozen:
                sub = f"{key}:{k}"
                if opts["fixtures"] == "record":
                    changed = store.record(sub, outcome.values[k])
                    fixture_msgs.append(f"{'recorded' if changed else 'unchanged'} {sub}")
                else:
                    store.check(sub, outcome.values[k])
                    fixture_msgs.append(f"matches {sub}")
            if opts["fixtures"] == "record":
                store.save()
        except FixtureError as exc:
            fixture_msgs.append(f"fixture failure: {exc}")
            code = EXIT_FAIL

    if opts["out"]:
        Path(opts["out"]).write_text(report.dumps(opts["timing"]))
    if opts["csv_path"] and outcome.rows is not None:
        with open(opts["csv_path"], "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(outcome.header)
            writer.writerows(outcome.rows)

    if opts["as_json"]:
        click.echo(report.dumps(opts["timing"]), nl=False)
    else:
        status = {None: "DONE", True: "PASS", False: "FAIL"}[outcome.passed]
        click.echo(f"{name}: {status}")
        for k, v in report.to_json_dict(False)["values"].items():
            click.echo(f"  {k} = {v}")
        for k, v in outcome.ci.items():
            click.echo(f"  {k} 95% CI = {list(v)}")
        if outcome.rows is not None and not opts["csv_path"]:
            w = csv.writer(sys.stdout, lineterminator="\n")
            w.writerow(outcome.header)
            w.writerows(outcome.rows)
    for msg in fixture_msgs:
        click.echo(msg, err=True)
    sys.exit(code)


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="INI file of default flag values")
@click.pass_context
def main(ctx: click.Context, config: str | None) -> None:
    """Compressed-oracle experiment runner."""
    if config:
        try:
            ctx.default_map = load_config(config)
        except configparser.Error as exc:
            raise click.UsageError(f"bad config: {exc}") from exc


@main.command("list")
@click.option("--json", "as_json", is_flag=True)
@click.option("--kind", type=click.Choice(["verify", "experiment", "enumerate", "cromulence", "distinguish"]))
def list_cmd(as_json: bool, kind: str | None) -> None:
    """Print every registered experiment."""
    rows = [e.catalog_row() for e in REGISTRY.values() if kind is None or e.kind == kind]
    if as_json:
        click.echo(json.dumps(rows, indent=2, sort_keys=True))
        return
    width = max(len(r["name"]) for r in rows)
    for r in rows:
        click.echo(f"{r['name']:<{width}}  {r['kind']:<11}  {r['operation']}  -- {r['anchor']}")


def _named_command(command: str, help_: str):
    @main.command(command, help=help_)
    @click.argument("name")
    @_param_options
    @_run_options
    @click.pass_context
    def cmd(ctx, name, out, csv_path, fixtures, fixture_file, as_json, timing, **params):
        opts = dict(out=out, csv_path=csv_path, fixtures=fixtures, fixture_file=fixture_file, as_json=as_json, timing=timing)
        _execute(ctx, command, name, params, opts)

    return cmd


def _fixed_command(command: str, help_: str):
    @main.command(command, help=help_)
    @_param_options
    @_run_options
    @click.pass_context
    def cmd(ctx, out, csv_path, fixtures, fixture_file, as_json, timing, **params):
        opts = dict(out=out, csv_path=csv_path, fixtures=fixtures, fixture_file=fixture_file, as_json=as_json, timing=timing)
        _execute(ctx, command, command, params, opts)

    return cmd


verify = _named_command("verify", "Run an assertion suite; exit 1 on failure.")
experiment = _named_command("experiment", "Measure a quantity, optionally against frozen fixtures.")
enumerate_ = _named_command("enumerate", "Dump a combinatorial enumeration.")
cromulence = _fixed_command("cromulence", "Estimate the cromulence conditions of a twirl.")
distinguish = _fixed_command("distinguish", "Run the XOR-statistic distinguisher.")


if __name__ == "__main__":
    main()
