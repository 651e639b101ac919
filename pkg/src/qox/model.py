"""Domain types shared by every part of the QoX fabric.

All types are frozen dataclasses. Each serializes to a JSON object whose
keys are the field names and whose enums are lowercase strings; identity
references inside other types are carried as the bare id token.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any, Mapping


class QoxError(Exception):
    """Base error. ``code`` is the wire-level error string."""

    code = "error"


class InvalidValue(QoxError, ValueError):
    code = "invalid_value"

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ConfigError(InvalidValue):
    code = "config_error"


class ParseError(InvalidValue):
    code = "parse_error"

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnknownIdentity(QoxError, LookupError):
    code = "unknown_identity"


class NotVouched(QoxError):
    code = "not_vouched"


class StaleTimestamp(QoxError):
    code = "stale_timestamp"


class EmptyCredential(InvalidValue):
    code = "empty_credential"


class SelfInteraction(InvalidValue):
    code = "self_interaction"


class InvalidPattern(InvalidValue):
    code = "invalid_pattern"


class Side(str, enum.Enum):
    QOS = "qos"
    QOC = "qoc"


class Dimension(str, enum.Enum):
    PERFORMANCE = "performance"
    DEPENDABILITY = "dependability"
    COST = "cost"
    PURCHASE_POWER = "purchase_power"
    CODE_EFFICIENCY = "code_efficiency"
    THREAT = "threat"


DIMENSIONS_BY_SIDE = {
    Side.QOS: frozenset({Dimension.PERFORMANCE, Dimension.DEPENDABILITY, Dimension.COST}),
    Side.QOC: frozenset({Dimension.PURCHASE_POWER, Dimension.CODE_EFFICIENCY, Dimension.THREAT}),
}


class IdentityKind(str, enum.Enum):
    PROVIDER = "provider"
    CONSUMER = "consumer"


class RecordKind(str, enum.Enum):
    TRAFFIC_BURST = "traffic_burst"
    CRASH = "crash"
    PACKET_SENT = "packet_sent"
    PORT_SCAN = "port_scan"
    DOS_ALERT = "dos_alert"


class Verification(str, enum.Enum):
    UNCHECKED = "unchecked"
    VERIFIED = "verified"
    UNVERIFIABLE = "unverifiable"


def clamp_rating(x: float) -> float:
    if not math.isfinite(x):
        raise InvalidValue(f"rating must be finite, got {x!r}")
    return min(1.0, max(0.0, float(x)))


def validate_dimension(side, dimension) -> bool:
    try:
        side = Side(side)
        dimension = Dimension(dimension)
    except ValueError:
        return False
    return dimension in DIMENSIONS_BY_SIDE[side]


def _unit(name, value):
    if type(value) is float and 0.0 <= value <= 1.0:
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidValue(f"{name} must be a number", field=name)
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise InvalidValue(f"{name} must lie in [0, 1], got {value!r}", field=name)
    return float(value)


def _time(name, value):
    if type(value) is not int or value < 0:
        raise InvalidValue(f"{name} must be a non-negative integer, got {value!r}", field=name)
    return value


def _ident(name, value):
    if type(value) is not str or not value:
        raise InvalidValue(f"{name} must be a non-empty identity token", field=name)
    return value


@dataclass(frozen=True)
class IdentityId:
    id: str
    kind: IdentityKind

    def __post_init__(self):
        _ident("id", self.id)
        object.__setattr__(self, "kind", IdentityKind(self.kind))

    def __str__(self):
        return self.id

    @classmethod
    def from_dict(cls, d):
        return cls(d["id"], IdentityKind(d["kind"]))


@dataclass(frozen=True)
class QualityDimension:
    side: Side
    dimension: Dimension
    metric: str = ""

    def __post_init__(self):
        try:
            object.__setattr__(self, "side", Side(self.side))
            object.__setattr__(self, "dimension", Dimension(self.dimension))
        except ValueError as e:
            raise InvalidValue(str(e), field="dimension") from None
        if not validate_dimension(self.side, self.dimension):
            raise InvalidValue(
                f"dimension {self.dimension.value!r} does not belong to side {self.side.value!r}",
                field="dimension",
            )

    @classmethod
    def from_dict(cls, d):
        return cls(d["side"], d["dimension"], d.get("metric", ""))


@dataclass(frozen=True)
class FeedbackEvent:
    observer: str
    subject: str
    dimension: QualityDimension
    score: float
    weight: float
    timestamp: int
    note: str = ""

    def __post_init__(self):
        _ident("observer", self.observer)
        _ident("subject", self.subject)
        if self.observer == self.subject:
            raise InvalidValue("observer and subject must differ", field="subject")
        object.__setattr__(self, "score", _unit("score", self.score))
        w = _unit("weight", self.weight)
        if w == 0.0:
            raise InvalidValue("weight must be in (0, 1]", field="weight")
        object.__setattr__(self, "weight", w)
        _time("timestamp", self.timestamp)

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["observer"], d["subject"], QualityDimension.from_dict(d["dimension"]),
            d["score"], d["weight"], d["timestamp"], d.get("note", ""),
        )


@dataclass(frozen=True)
class ReviewText:
    text: str = ""
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(sorted(set(self.tags))))

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("text", ""), tuple(d.get("tags", ())))


@dataclass(frozen=True)
class Rating:
    rater: str
    ratee: str
    value: float
    timestamp: int
    review: ReviewText = field(default_factory=ReviewText)

    def __post_init__(self):
        _ident("rater", self.rater)
        _ident("ratee", self.ratee)
        if self.rater == self.ratee:
            raise InvalidValue("rater and ratee must differ", field="ratee")
        object.__setattr__(self, "value", _unit("value", self.value))
        _time("timestamp", self.timestamp)

    def __json__(self):
        return {"rater": self.rater, "ratee": self.ratee, "value": self.value,
                "timestamp": self.timestamp,
                "review": {"text": self.review.text, "tags": list(self.review.tags)}}

    @classmethod
    def from_dict(cls, d):
        review = d.get("review")
        return cls(
            d["rater"], d["ratee"], d["value"], d["timestamp"],
            ReviewText.from_dict(review) if review else ReviewText(),
        )


@dataclass(frozen=True)
class AggregateRating:
    ratee: str
    mean: float | None
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise InvalidValue("count must be non-negative", field="count")
        if (self.mean is None) != (self.count == 0):
            raise InvalidValue("mean is absent exactly when count is 0", field="mean")
        if self.mean is not None:
            object.__setattr__(self, "mean", _unit("mean", self.mean))

    @classmethod
    def from_dict(cls, d):
        return cls(d["ratee"], d.get("mean"), d["count"])


@dataclass(frozen=True)
class InteractionRecord:
    a: str
    b: str
    packets: int
    timestamp: int

    def __post_init__(self):
        _ident("a", self.a)
        _ident("b", self.b)
        if self.a == self.b:
            raise SelfInteraction("an identity cannot interact with itself", field="b")
        if isinstance(self.packets, bool) or not isinstance(self.packets, int) or self.packets < 1:
            raise InvalidValue("packets must be a positive integer", field="packets")
        _time("timestamp", self.timestamp)

    @property
    def pair(self) -> frozenset:
        return frozenset((self.a, self.b))

    @classmethod
    def from_dict(cls, d):
        return cls(d["a"], d["b"], d["packets"], d["timestamp"])


@dataclass(frozen=True)
class SpecificRecord:
    reporter: str
    subject: str
    kind: RecordKind
    detail: Mapping[str, Any]
    timestamp: int
    verified: Verification = Verification.UNCHECKED

    def __post_init__(self):
        _ident("reporter", self.reporter)
        _ident("subject", self.subject)
        object.__setattr__(self, "kind", RecordKind(self.kind))
        object.__setattr__(self, "verified", Verification(self.verified))
        object.__setattr__(self, "detail", dict(self.detail))
        _time("timestamp", self.timestamp)

    def with_status(self, status) -> "SpecificRecord":
        status = Verification(status)
        if self.verified is not Verification.UNCHECKED:
            raise InvalidValue(f"record already {self.verified.value}", field="verified")
        return SpecificRecord(self.reporter, self.subject, self.kind, self.detail, self.timestamp, status)

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["reporter"], d["subject"], d["kind"], d.get("detail", {}), d["timestamp"],
            d.get("verified", "unchecked"),
        )


@dataclass(frozen=True)
class EvidencePattern:
    owner: str
    kind: RecordKind
    params: Mapping[str, Any]

    def __post_init__(self):
        _ident("owner", self.owner)
        try:
            object.__setattr__(self, "kind", RecordKind(self.kind))
        except ValueError as e:
            raise InvalidPattern(str(e), field="kind") from None
        params = dict(self.params)
        min_count = params.get("min_count", 1)
        window = params.get("window")
        if isinstance(min_count, bool) or not isinstance(min_count, int) or min_count < 1:
            raise InvalidPattern("min_count must be an integer >= 1", field="min_count")
        if isinstance(window, bool) or not isinstance(window, int) or window <= 0:
            raise InvalidPattern("window must be a positive integer span", field="window")
        params["min_count"] = min_count
        params.setdefault("src", "*")
        params.setdefault("dst", "*")
        object.__setattr__(self, "params", params)

    @property
    def min_count(self) -> int:
        return self.params["min_count"]

    @property
    def window(self) -> int:
        return self.params["window"]

    @classmethod
    def from_dict(cls, d):
        return cls(d["owner"], d["kind"], d.get("params", {}))


_PLAIN = (str, int, float, bool, type(None))


def to_json(obj):
    """Canonical JSON-compatible form of any domain value."""
    if type(obj) in _PLAIN:
        return obj
    if isinstance(obj, enum.Enum):
        return obj.value
    hook = getattr(obj, "__json__", None)
    if hook is not None:
        return hook()
    if isinstance(obj, dict):
        return {str(k): to_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_json(v) for v in obj]
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_json(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, Mapping):
        return {str(k): to_json(v) for k, v in obj.items()}
    return obj


def rank_by_mean(items, mean_of, min_rating, sort_key):
    """Filter ``items`` to those whose mean clears ``min_rating`` and order them.

    Best mean first, ties broken by ``sort_key``. Items without a mean are
    dropped when ``min_rating > 0`` and appended last when it is 0.
    """
    min_rating = _unit("min_rating", min_rating)
    rated, unrated = [], []
    for item in items:
        mean = mean_of(item)
        if mean is None:
            if min_rating == 0.0:
                unrated.append(item)
        elif mean >= min_rating:
            rated.append((mean, item))
    rated.sort(key=lambda p: (-p[0], sort_key(p[1])))
    unrated.sort(key=sort_key)
    return [item for _, item in rated] + unrated
