"""Report writers: a JSON document, a CSV table and a PNG figure per outcome."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .model import to_json  # noqa: E402
from .simulator import MarketOutcome, SybilOutcome  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 100,
    # fixed hash salt keeps SVG/PNG element ids stable across runs
    "svg.hashsalt": "qox",
}


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def market_rows(outcome: MarketOutcome) -> list[dict]:
    return [
        {
            "provider": p,
            "quality": outcome.qualities.get(p, ""),
            "selections": outcome.selections.get(p, 0),
            "revenue": outcome.revenue.get(p, 0),
        }
        for p in sorted(set(outcome.revenue) | set(outcome.selections))
    ]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _save(fig, path):
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def plot_market(outcome: MarketOutcome, path):
    rows = sorted(market_rows(outcome), key=lambda r: (r["quality"] if r["quality"] != "" else -1, r["provider"]))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        labels = [f"{r['quality']:.1f}" if r["quality"] != "" else r["provider"] for r in rows]
        ax.bar(range(len(rows)), [r["revenue"] for r in rows], color="#4c72b0")
        ax.set_xticks(range(len(rows)), labels)
        ax.set_xlabel("provider quality")
        ax.set_ylabel("revenue (units)")
        ax.set_title(f"revenue after {outcome.rounds_run} rounds")
        fig.tight_layout()
        _save(fig, path)


def plot_sybil(outcome: SybilOutcome, path):
    p = outcome.params
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        values = [p.honest_value, p.fake_value, outcome.aggregate_mean]
        ax.bar(range(3), values, color=["#55a868", "#c44e52", "#4c72b0"])
        ax.set_xticks(range(3), ["honest", "sybil", "aggregate"])
        ax.set_ylim(0, 1)
        ax.set_ylabel("rating")
        state = "on" if p.vouching_enabled else "off"
        ax.set_title(f"vouching {state}: {outcome.accepted} accepted, {outcome.rejected} rejected")
        fig.tight_layout()
        _save(fig, path)


def write_report(outcome, path) -> list[Path]:
    """Write ``path`` (JSON) plus ``.csv`` and ``.png`` siblings; return all three paths."""
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    png_path = path.with_suffix(".png")
    if isinstance(outcome, MarketOutcome):
        doc = {"kind": "market", **to_json(outcome)}
        table = _csv(["provider", "quality", "selections", "revenue"], market_rows(outcome))
        plot = plot_market
    elif isinstance(outcome, SybilOutcome):
        doc = {"kind": "sybil", **to_json(outcome)}
        table = _csv(["aggregate_mean", "accepted", "rejected"], [
            {"aggregate_mean": outcome.aggregate_mean, "accepted": outcome.accepted,
             "rejected": outcome.rejected}])
        plot = plot_sybil
    else:
        raise TypeError(f"cannot report on {type(outcome).__name__}")
    path.write_text(_dump_json(doc), encoding="utf-8")
    csv_path.write_text(table, encoding="utf-8")
    plot(outcome, png_path)
    return [path, csv_path, png_path]
