"""Shims between infrastructure components and the QoX fabric.

Outbound: parse IDS fast-alert lines into ``NormalizedAlert`` values.
Inbound: turn ratings into load-balancer pools, flow rules and ordered
broker catalogs.

Fast-alert line grammar::

    MM/DD-HH:MM:SS.ffffff [**] [GID:SID:REV] MESSAGE [**] [Classification: TEXT] [Priority: N] {PROTO} SRC -> DST

The classification group is optional. Integers are canonical decimals (no
leading zeros). SRC and DST are dotted quads with an optional ``:PORT``.
Timestamps carry no year, so they map to seconds since 01/01 00:00:00 on a
366-day calendar (02/29 is accepted); windows that cross a year boundary
are not supported.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .model import ConfigError, InvalidValue, ParseError, rank_by_mean

UNKNOWN_IDENTITY = "unknown"

_MONTH_DAYS = (31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
_MONTH_START = [sum(_MONTH_DAYS[:i]) for i in range(12)]
_SEP = " [**] "


@dataclass(frozen=True)
class NormalizedAlert:
    sig_id: int
    message: str
    priority: int
    proto: str
    src: str
    dst: str
    timestamp: int
    gid: int = 1
    rev: int = 0
    classification: str | None = None
    usec: int = 0

    def __post_init__(self):
        if not self.src or not self.dst:
            raise InvalidValue("src and dst must be non-empty", field="src")
        if self.priority < 0:
            raise InvalidValue("priority must be >= 0", field="priority")


class _Cursor:
    def __init__(self, line):
        self.line = line
        self.pos = 0

    def fail(self, what, pos=None):
        pos = self.pos if pos is None else pos
        raise ParseError(f"expected {what}", len(self.line[:pos].encode("utf-8")))

    def literal(self, text):
        for i, ch in enumerate(text):
            j = self.pos + i
            if j >= len(self.line) or self.line[j] != ch:
                self.fail(repr(text), j)
        self.pos += len(text)

    def fixed_digits(self, n, what):
        chunk = self.line[self.pos:self.pos + n]
        for i in range(n):
            if i >= len(chunk) or not chunk[i].isdigit() or not chunk[i].isascii():
                self.fail(what, self.pos + i)
        self.pos += n
        return int(chunk)

    def integer(self, what, limit=None):
        start = self.pos
        end = start
        while end < len(self.line) and self.line[end].isascii() and self.line[end].isdigit():
            end += 1
        if end == start:
            self.fail(what)
        if self.line[start] == "0" and end - start > 1:
            self.fail(f"{what} without leading zeros", start + 1)
        value = int(self.line[start:end])
        if limit is not None and value > limit:
            self.fail(f"{what} <= {limit}", start)
        self.pos = end
        return value

    def until(self, terminator, what):
        end = self.line.find(terminator, self.pos)
        if end < 0:
            self.fail(f"{terminator!r} after {what}", len(self.line))
        if end == self.pos:
            self.fail(what)
        text = self.line[self.pos:end]
        self.pos = end
        return text

    def address(self, what):
        start = self.pos
        for i in range(4):
            if i:
                self.literal(".")
            self.integer(f"{what} octet", 255)
        if self.pos < len(self.line) and self.line[self.pos] == ":":
            self.pos += 1
            self.integer(f"{what} port", 65535)
        return self.line[start:self.pos]


def _check_range(cur, value, lo, hi, what, at):
    if not lo <= value <= hi:
        cur.fail(f"{what} in {lo}..{hi}", at)


def parse_alert_line(line: str) -> NormalizedAlert:
    line = line.rstrip("\r\n")
    cur = _Cursor(line)

    at = cur.pos
    month = cur.fixed_digits(2, "month")
    _check_range(cur, month, 1, 12, "month", at)
    cur.literal("/")
    at = cur.pos
    day = cur.fixed_digits(2, "day")
    _check_range(cur, day, 1, _MONTH_DAYS[month - 1], "day", at)
    cur.literal("-")
    at = cur.pos
    hour = cur.fixed_digits(2, "hour")
    _check_range(cur, hour, 0, 23, "hour", at)
    cur.literal(":")
    at = cur.pos
    minute = cur.fixed_digits(2, "minute")
    _check_range(cur, minute, 0, 59, "minute", at)
    cur.literal(":")
    at = cur.pos
    second = cur.fixed_digits(2, "second")
    _check_range(cur, second, 0, 59, "second", at)
    cur.literal(".")
    usec = cur.fixed_digits(6, "microseconds")

    cur.literal(" [**] [")
    gid = cur.integer("generator id")
    cur.literal(":")
    sid = cur.integer("signature id")
    cur.literal(":")
    rev = cur.integer("revision")
    cur.literal("] ")
    message = cur.until(_SEP, "message")
    cur.literal(_SEP)

    classification = None
    if line.startswith("[Classification: ", cur.pos):
        cur.literal("[Classification: ")
        classification = cur.until("]", "classification")
        cur.literal("] ")
    cur.literal("[Priority: ")
    priority = cur.integer("priority")
    cur.literal("] {")
    proto = cur.until("}", "protocol")
    cur.literal("} ")
    src = cur.address("source address")
    cur.literal(" -> ")
    dst = cur.address("destination address")
    if cur.pos != len(line):
        cur.fail("end of line")

    days = _MONTH_START[month - 1] + day - 1
    timestamp = days * 86400 + hour * 3600 + minute * 60 + second
    return NormalizedAlert(
        sig_id=sid, message=message, priority=priority, proto=proto, src=src, dst=dst,
        timestamp=timestamp, gid=gid, rev=rev, classification=classification, usec=usec,
    )


def format_alert(alert: NormalizedAlert) -> str:
    days, rem = divmod(alert.timestamp, 86400)
    month = max(i for i in range(12) if _MONTH_START[i] <= days)
    day = days - _MONTH_START[month] + 1
    hour, rem = divmod(rem, 3600)
    minute, second = divmod(rem, 60)
    head = (f"{month + 1:02d}/{day:02d}-{hour:02d}:{minute:02d}:{second:02d}.{alert.usec:06d}"
            f" [**] [{alert.gid}:{alert.sig_id}:{alert.rev}] {alert.message} [**] ")
    if alert.classification is not None:
        head += f"[Classification: {alert.classification}] "
    return head + f"[Priority: {alert.priority}] {{{alert.proto}}} {alert.src} -> {alert.dst}"


def host_of(address: str) -> str:
    return address.split(":", 1)[0]


def subject_for(alert: NormalizedAlert, address_table: Mapping[str, str]) -> str:
    """Identity behind the alert's source address, or the designated unknown identity."""
    return address_table.get(alert.src) or address_table.get(host_of(alert.src)) or UNKNOWN_IDENTITY


# inbound executors

def assign_pool(rating_value: float, boundaries, base: str) -> str:
    """Pool label of the highest threshold not above ``rating_value``."""
    thresholds = [b["threshold"] for b in boundaries]
    if thresholds != sorted(thresholds):
        raise ConfigError("boundaries must be sorted by threshold", field="boundaries")
    labels = [b["label"] for b in boundaries] + [base]
    if len(set(labels)) != len(labels):
        raise ConfigError("pool labels must be distinct", field="boundaries")
    label = base
    for b in boundaries:
        if rating_value >= b["threshold"]:
            label = b["label"]
    return label


@dataclass(frozen=True)
class PoolAssignment:
    client: str
    pool: str


@dataclass(frozen=True)
class FlowRule:
    match_src: str
    action: str
    redirect_target: str | None = None
    priority: int = 0

    def __post_init__(self):
        if self.action not in ("allow", "block", "redirect"):
            raise InvalidValue(f"unknown flow action {self.action!r}", field="action")
        if (self.redirect_target is not None) != (self.action == "redirect"):
            raise InvalidValue("redirect_target is required exactly for redirect", field="redirect_target")


def emit_lb_config(assignments, pools: Mapping[str, list]) -> str:
    for a in assignments:
        if a.pool not in pools:
            raise ConfigError(f"unknown pool label {a.pool!r}", field="pool")
    out = []
    for label in sorted(pools):
        out.append(f"pool {label}\n")
        out.extend(f"  server {backend}\n" for backend in pools[label])
    for a in sorted(assignments, key=lambda a: a.client):
        out.append(f"client {a.client} -> {a.pool}\n")
    return "".join(out)


def emit_flow_rules(ratings: Mapping[str, float], policy) -> list[FlowRule]:
    block_below = policy["block_below"]
    redirect_below = policy["redirect_below"]
    if block_below > redirect_below:
        raise ConfigError("block_below must not exceed redirect_below", field="policy")
    rules = []
    for client in sorted(ratings):
        value = ratings[client]
        if value < block_below:
            rules.append(FlowRule(client, "block", priority=100))
        elif value < redirect_below:
            rules.append(FlowRule(client, "redirect", policy["redirect_pool"], priority=50))
    return rules


def filter_sort_catalog(services, aggregates, min_rating: float) -> list[dict]:
    """Broker search results filtered and ordered by the provider's aggregate rating."""
    def mean_of(entry):
        agg = aggregates.get(entry["provider"])
        return None if agg is None else agg.mean

    return rank_by_mean(
        list(services), mean_of, min_rating,
        lambda e: (e["provider"], e.get("service_name", ""), e.get("version", "")),
    )
