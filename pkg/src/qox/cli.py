"""``qox`` command line.

Exit codes: 0 success, 1 validation error, 2 I/O error. Every option can
also be supplied through a ``QOX_``-prefixed environment variable.
"""

from __future__ import annotations

import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import click

from .model import QoxError, to_json

log = logging.getLogger("qox")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _floats(ctx, param, value):
    if value is None:
        return None
    try:
        return tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}") from None


@click.group()
@click.option("-v", "--verbose", is_flag=True, envvar="QOX_VERBOSE")
def cli(verbose):
    """Quality exchange toolkit: simulations, interpreter runs and the exchange server."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.group()
def sim():
    """Run the deterministic marketplace simulations."""


@sim.command()
@click.option("--qualities", default="0.2,0.4,0.6,0.8", envvar="QOX_QUALITIES", callback=_floats,
              show_default=True)
@click.option("--consumers", default=100, type=int, envvar="QOX_CONSUMERS", show_default=True)
@click.option("--rounds", default=100, type=int, envvar="QOX_ROUNDS", show_default=True)
@click.option("--seed", default=42, type=int, envvar="QOX_SEED", show_default=True)
@click.option("--price", default=1, type=int, envvar="QOX_PRICE", show_default=True)
@click.option("--rank-probabilities", default="0.85,0.10,0.05", envvar="QOX_RANK_PROBABILITIES",
              callback=_floats, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), envvar="QOX_OUT")
def market(qualities, consumers, rounds, seed, price, rank_probabilities, out):
    """Providers of fixed quality competing for rating-ranked consumers."""
    from .report import write_report
    from .simulator import MarketParams, run_market

    params = MarketParams(
        provider_qualities=qualities, consumers=consumers, rounds=rounds, seed=seed,
        price_per_selection=price, rank_probabilities=rank_probabilities,
    )
    outcome = run_market(params)
    for p in write_report(outcome, out):
        click.echo(str(p))


@sim.command()
@click.option("--honest", default=3, type=int, envvar="QOX_HONEST", show_default=True)
@click.option("--honest-value", default=0.2, type=float, envvar="QOX_HONEST_VALUE", show_default=True)
@click.option("--fakes", default=5, type=int, envvar="QOX_FAKES", show_default=True)
@click.option("--fake-value", default=1.0, type=float, envvar="QOX_FAKE_VALUE", show_default=True)
@click.option("--vouching", default="on", type=click.Choice(["on", "off"]), envvar="QOX_VOUCHING",
              show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), envvar="QOX_OUT")
def sybil(honest, honest_value, fakes, fake_value, vouching, out):
    """Fake identities trying to inflate one provider's rating."""
    from .report import write_report
    from .simulator import SybilParams, run_sybil

    outcome = run_sybil(SybilParams(
        honest_raters=honest, honest_value=honest_value, fake_identities=fakes,
        fake_value=fake_value, vouching_enabled=vouching == "on",
    ))
    for p in write_report(outcome, out):
        click.echo(str(p))


@cli.command()
@click.option("--state", required=True, type=click.Path(dir_okay=False), envvar="QOX_STATE")
@click.option("--host", default="127.0.0.1", envvar="QOX_HOST", show_default=True)
@click.option("--port", default=7878, type=int, envvar="QOX_PORT", show_default=True)
@click.option("--min-packets", default=1, type=int, envvar="QOX_MIN_PACKETS", show_default=True)
def serve(state, host, port, min_packets):
    """Serve the exchange and vouching authority over TCP (JSON lines)."""
    from .api import build_stack, serve_tcp

    _, _, endpoint = build_stack(state_path=state, min_packets=min_packets)
    server = serve_tcp(endpoint, host, port)
    click.echo(f"listening on {server.server_address[0]}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def interpret_alerts(config, lines, now=None) -> dict:
    """Batch interpreter run: alert lines in, one rating per subject plus directives out."""
    from .adapters import parse_alert_line, subject_for
    from .interpreter import apply_mapping, compute_rating, map_rating_to_actions
    from .model import ParseError

    alerts = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            alerts.append(parse_alert_line(line))
        except ParseError as e:
            raise ParseError(f"line {n}: {e}", e.offset) from None

    events = defaultdict(list)
    for alert in alerts:
        subject = subject_for(alert, config.address_table)
        if subject == config.observer:
            continue
        events[subject].append(apply_mapping(
            alert, config.feedback_rules, config.observer, subject,
            default_score=config.default_score, default_weight=config.default_weight,
        ))
    if now is None:
        now = max((a.timestamp for a in alerts), default=0)

    ratings, actions = [], []
    for subject in sorted(events):
        rating = compute_rating(events[subject], now, config)
        ratings.append(to_json(rating))
        actions.extend(to_json(d) for d in map_rating_to_actions(rating, config.action_rules))
    return {"now": now, "ratings": ratings, "actions": actions}


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
              envvar="QOX_CONFIG")
@click.option("--alerts", "alerts_path", required=True, type=click.Path(dir_okay=False),
              envvar="QOX_ALERTS")
@click.option("--out", required=True, type=click.Path(dir_okay=False), envvar="QOX_OUT")
@click.option("--now", type=int, default=None, envvar="QOX_NOW",
              help="Logical time of the rating; defaults to the latest alert.")
def interpret(config_path, alerts_path, out, now):
    """Rate every alert source in a fast-alert file."""
    from .interpreter import load_config

    config = load_config(Path(config_path).read_text(encoding="utf-8"))
    lines = Path(alerts_path).read_text(encoding="utf-8").splitlines()
    result = interpret_alerts(config, lines, now)
    Path(out).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(out)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="qox", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_INVALID
    except click.ClickException as e:
        e.show()
        return EXIT_INVALID
    except (QoxError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_INVALID
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
