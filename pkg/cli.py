"""qkdlab command line.

    python cli.py protocols list
    python cli.py ir-sweep --protocol umbrella --points 101 --out umbrella_ir.csv
    python cli.py critical --protocol qutrit-4mub --preprocessing
    python cli.py simulate --protocol bb84 --n 100000 --channel intercept:1.0 --seed 7
"""
from __future__ import annotations

import functools
import json
import logging
from typing import Literal, Optional

import click
import numpy as np
from click.core import ParameterSource
from pydantic import BaseModel, ConfigDict, Field, ValidationError

import geometry_suite
import intercept_resend
import keyrate
import results_manager
import session_sim
import settings
from errors import (
    ChannelSpecError,
    DimensionMismatchError,
    InfeasibleErrorRateError,
    NoCrossingError,
    PreprocessingRangeError,
    QkdLabError,
    SettingsError,
    UnknownProtocolError,
    UnsupportedProtocolError,
)
from protocols import KEYRATE_PROTOCOLS, PROTOCOL_NAMES, get_protocol, unbiasedness_matrix
from state_geometry import classify_state

logger = logging.getLogger("qkdlab")

EXIT_SUITE_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3
# solver or other numerical failure inside the library
EXIT_SOLVER = 4

USAGE_ERRORS = (
    UnknownProtocolError,
    UnsupportedProtocolError,
    ChannelSpecError,
    PreprocessingRangeError,
    InfeasibleErrorRateError,
    DimensionMismatchError,
    NoCrossingError,
    ValidationError,
)


class RunConfig(BaseModel):
    """Values a --config JSON file may set. Flags given explicitly win."""

    model_config = ConfigDict(extra="forbid")

    protocol: Optional[str] = None
    points: Optional[int] = Field(None, ge=2)
    qmin: float = Field(0.0, ge=0.0, lt=1.0)
    qmax: float = Field(0.25, gt=0.0, lt=1.0)
    preprocessing: bool = False
    n: int = Field(10_000, ge=1)
    channel: str = "ideal"
    seed: int = Field(0, ge=0, lt=2 ** 64)
    reveal: float = Field(0.1, gt=0.0, lt=1.0)
    pairs: int = Field(10_000, ge=1)
    out: Optional[str] = None
    format: Literal["csv", "json"] = "csv"


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    raise SystemExit(code)


def handle_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except USAGE_ERRORS as exc:
            _fail(str(exc), EXIT_USAGE)
        except OSError as exc:
            _fail(f"could not write output: {exc}", EXIT_IO)
        except QkdLabError as exc:
            _fail(str(exc), EXIT_SOLVER)

    return wrapper


def resolve(ctx: click.Context) -> RunConfig:
    """Merge the --config file with this command's flags."""
    from_file = ctx.find_root().obj.get("config", {})
    merged = dict(from_file)
    for name, value in ctx.params.items():
        source = ctx.get_parameter_source(name)
        if source is not ParameterSource.DEFAULT or name not in from_file:
            merged[name] = value
    return RunConfig(**merged)


def _require_protocol(cfg: RunConfig) -> str:
    if not cfg.protocol:
        raise click.UsageError("--protocol is required (flag or config file)")
    return cfg.protocol


def _emit(text: str, out: Optional[str]):
    results_manager.write_text(text, out)
    if out is None:
        click.echo(text, nl=False)


@click.group()
@click.version_option(settings.VERSION, prog_name="qkdlab")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON file with default values.")
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING (default from QKDLAB_LOG_LEVEL).")
@click.pass_context
def cli(ctx, config_path, log_level):
    """Biphoton qutrit QKD analysis: geometry, attacks, key rates and sessions."""
    try:
        settings.check_environment()
        settings.configure_logging(log_level)
    except SettingsError as exc:
        _fail(str(exc), EXIT_USAGE)
    ctx.ensure_object(dict)
    ctx.obj["config"] = {}
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            _fail(f"cannot read config {config_path}: {exc}", EXIT_IO)
        except json.JSONDecodeError as exc:
            _fail(f"config {config_path} is not valid JSON: {exc}", EXIT_USAGE)
        if not isinstance(data, dict):
            _fail("config file must hold a JSON object", EXIT_USAGE)
        try:
            RunConfig(**data)
        except ValidationError as exc:
            _fail(f"bad config {config_path}: {exc}", EXIT_USAGE)
        ctx.obj["config"] = data


@cli.group()
def protocols():
    """Registered basis sets."""


@protocols.command("list")
def protocols_list():
    for name in PROTOCOL_NAMES:
        click.echo(name)


def _describe(name: str) -> dict:
    protocol = get_protocol(name)
    bases = []
    for basis in protocol.bases:
        vectors = []
        for v in basis:
            entry = {"amplitudes": [[round(a.real, 12), round(a.imag, 12)] for a in v.amplitudes]}
            if protocol.dimension == 3:
                c = classify_state(v)
                entry["subset"] = c.manifold.value
                if c.direction is not None:
                    entry["theta"] = round(c.direction.theta, 9)
                    entry["phi"] = round(c.direction.phi, 9)
            vectors.append(entry)
        bases.append({"name": basis.name, "vectors": vectors})
    cross = []
    for i in range(protocol.n_bases):
        for j in range(i + 1, protocol.n_bases):
            m = unbiasedness_matrix(protocol.bases[i], protocol.bases[j])
            cross.append({
                "bases": [protocol.bases[i].name, protocol.bases[j].name],
                "overlap2": np.round(m, 6).tolist(),
            })
    return {"name": protocol.name, "dimension": protocol.dimension, "bases": bases, "unbiasedness": cross}


@protocols.command("show")
@click.argument("name")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@handle_errors
def protocols_show(name, fmt):
    info = _describe(name)
    if fmt == "json":
        click.echo(json.dumps(info, sort_keys=True, indent=2))
        return
    click.echo(f"{info['name']} (d={info['dimension']}, {len(info['bases'])} bases)")
    for basis in info["bases"]:
        click.echo(f"  basis {basis['name']}")
        for v in basis["vectors"]:
            amps = "  ".join(f"{re:+.6f}{im:+.6f}j" for re, im in v["amplitudes"])
            where = v.get("subset", "")
            if "theta" in v:
                where += f" theta={v['theta']:.6f} phi={v['phi']:.6f}"
            click.echo(f"    ({amps})  {where}".rstrip())
    for block in info["unbiasedness"]:
        click.echo(f"  |<{block['bases'][0]}|{block['bases'][1]}>|^2")
        for row in block["overlap2"]:
            click.echo("    " + "  ".join(f"{x:.6f}" for x in row))


@cli.command("geometry-check")
@click.option("--pairs", type=int, default=10_000, show_default=True, help="Random direction pairs per law.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@handle_errors
def geometry_check(ctx, pairs, out):
    """Run the geometry invariant suite; exit 1 on any failure."""
    cfg = resolve(ctx)
    results = geometry_suite.run_suite(n_pairs=cfg.pairs)
    report = geometry_suite.summary(results)
    for r in results:
        if not r.passed:
            logger.error("%s failed: residual %.3e > %.0e", r.name, r.residual, r.tolerance)
    _emit(json.dumps(report, sort_keys=True, indent=2) + "\n", cfg.out)
    if not report["passed"]:
        raise SystemExit(EXIT_SUITE_FAILED)


def _frame_out(df, cfg: RunConfig):
    if cfg.format == "json":
        _emit(json.dumps(results_manager.frame_json(df), indent=2) + "\n", cfg.out)
    else:
        _emit(results_manager.csv_text(df), cfg.out)


@cli.command("ir-sweep")
@click.option("--protocol", default=None)
@click.option("--points", type=int, default=101, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "format", type=click.Choice(["csv", "json"]), default="csv")
@click.pass_context
@handle_errors
def ir_sweep(ctx, protocol, points, out, format):
    """Intercept-resend information curves over the intercepted fraction."""
    cfg = resolve(ctx)
    sweep = intercept_resend.ir_sweep(get_protocol(_require_protocol(cfg)), cfg.points or 101)
    _frame_out(results_manager.ir_frame(sweep), cfg)


@cli.command("ir-crossing")
@click.option("--protocol", default=None)
@click.pass_context
@handle_errors
def ir_crossing(ctx, protocol):
    """Error rate (percent) where Eve's information reaches Bob's."""
    cfg = resolve(ctx)
    q = intercept_resend.ir_crossing(get_protocol(_require_protocol(cfg)))
    click.echo(f"{100 * q:.2f}")


def _keyrate_protocol(cfg: RunConfig):
    name = _require_protocol(cfg)
    protocol = get_protocol(name)
    if name not in KEYRATE_PROTOCOLS:
        raise UnsupportedProtocolError(
            f"{name} is not covered by the coherent-attack security model; "
            f"use one of {', '.join(KEYRATE_PROTOCOLS)}"
        )
    return protocol


@cli.command("keyrate")
@click.option("--protocol", default=None)
@click.option("--qmin", type=float, default=0.0, show_default=True)
@click.option("--qmax", type=float, default=0.25, show_default=True)
@click.option("--points", type=int, default=26, show_default=True)
@click.option("--preprocessing/--no-preprocessing", default=False)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "format", type=click.Choice(["csv", "json"]), default="csv")
@click.pass_context
@handle_errors
def keyrate_curve(ctx, protocol, qmin, qmax, points, preprocessing, out, format):
    """Secret key rate against the error rate Q."""
    cfg = resolve(ctx)
    if cfg.qmax <= cfg.qmin:
        raise click.UsageError("--qmax must exceed --qmin")
    grid = np.linspace(cfg.qmin, cfg.qmax, cfg.points or 26)
    curve = keyrate.rate_curve(_keyrate_protocol(cfg), grid, cfg.preprocessing)
    _frame_out(results_manager.keyrate_frame(curve), cfg)


@cli.command("critical")
@click.option("--protocol", default=None)
@click.option("--preprocessing/--no-preprocessing", default=False)
@click.pass_context
@handle_errors
def critical(ctx, protocol, preprocessing):
    """Critical error rate in percent, two decimals."""
    cfg = resolve(ctx)
    q = keyrate.critical_error_rate(_keyrate_protocol(cfg), cfg.preprocessing)
    click.echo(f"{100 * q:.2f}")


@cli.command("simulate")
@click.option("--protocol", default=None)
@click.option("--n", "n", type=int, default=10_000, show_default=True, help="Symbols sent.")
@click.option("--channel", default="ideal", show_default=True, help="ideal | depolarizing:<f> | intercept:<p>")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--reveal", type=float, default=0.1, show_default=True, help="Fraction of sifted symbols revealed.")
@click.option("--preprocessing/--no-preprocessing", default=False)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@handle_errors
def simulate(ctx, protocol, n, channel, seed, reveal, preprocessing, out):
    """Monte-Carlo QKD session, JSON report."""
    cfg = resolve(ctx)
    config = session_sim.SessionConfig(
        protocol=_require_protocol(cfg),
        n_symbols=cfg.n,
        channel=session_sim.parse_channel(cfg.channel),
        reveal_fraction=cfg.reveal,
        seed=cfg.seed,
        preprocessing=cfg.preprocessing,
    )
    report = session_sim.run_session(config)
    _emit(session_sim.report_json(report, config), cfg.out)


main = cli

if __name__ == "__main__":
    cli()
