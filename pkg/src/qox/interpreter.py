"""Quality Interpreter: configuration, feedback mapping, rating and review."""

from __future__ import annotations

import json
import math
import operator
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from .model import (
    ConfigError,
    Dimension,
    FeedbackEvent,
    InvalidValue,
    ParseError,
    QualityDimension,
    Rating,
    ReviewText,
    Side,
    clamp_rating,
)

COMPONENT_KINDS = ("service", "executor", "sensor")
ACTION_KINDS = ("assign_pool", "block", "redirect", "alert_admin")
REQUIRED_ACTION_PARAMS = {"assign_pool": ("pool",), "redirect": ("target",)}

DEFAULT_HALF_LIFE = 3600
DEFAULT_PRIOR_VALUE = 0.5
DEFAULT_PRIOR_WEIGHT = 1.0
DEFAULT_SCORE = 0.25
DEFAULT_WEIGHT = 0.5

# alerts from an IDS are evidence about the consumer's threat level
ALERT_DIMENSION = QualityDimension(Side.QOC, Dimension.THREAT, "ids_alert")

_COMPARATORS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
}


@dataclass(frozen=True)
class MetricSample:
    """A single measured value, already placed on a quality dimension."""

    dimension: QualityDimension
    value: float
    timestamp: int
    message: str = ""


@dataclass(frozen=True)
class Component:
    name: str
    address: str
    kind: str
    description: str = ""
    tasks: tuple[str, ...] = ()


@dataclass(frozen=True)
class MappingRule:
    """One row of the mapping table.

    ``match`` keys are combined with AND; an empty match matches anything.
    Supported keys: ``sig_id`` (int), ``dimension`` (dimension name),
    ``metric`` (metric label), and the comparators ``priority`` and
    ``rating``, each given as ``{"op": "<=", "value": 2}``.
    """

    match: Mapping[str, Any]
    score: float = DEFAULT_SCORE
    weight: float = DEFAULT_WEIGHT
    action: str | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.match, Mapping):
            raise ConfigError("match must be an object", field="match")
        for key, cond in self.match.items():
            if key in ("priority", "rating"):
                if not isinstance(cond, Mapping) or cond.get("op") not in _COMPARATORS:
                    raise ConfigError(f"{key} needs an op in {sorted(_COMPARATORS)}", field=f"match.{key}")
                if not isinstance(cond.get("value"), (int, float)):
                    raise ConfigError(f"{key} comparator needs a numeric value", field=f"match.{key}")
            elif key == "sig_id":
                if isinstance(cond, bool) or not isinstance(cond, int):
                    raise ConfigError("sig_id must be an integer", field="match.sig_id")
            elif key == "dimension":
                try:
                    Dimension(cond)
                except ValueError:
                    raise ConfigError(f"unknown dimension {cond!r}", field="match.dimension") from None
            elif key != "metric":
                raise ConfigError(f"unknown match key {key!r}", field=f"match.{key}")
        for name in ("score", "weight"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} out of range [0, 1]: {v!r}", field=name)
        if self.weight == 0:
            raise ConfigError("weight must be in (0, 1]", field="weight")
        if self.action is not None:
            if self.action not in ACTION_KINDS:
                raise ConfigError(f"unknown action {self.action!r}", field="action")
            for p in REQUIRED_ACTION_PARAMS.get(self.action, ()):
                if p not in self.params:
                    raise ConfigError(f"action {self.action} requires param {p!r}", field=f"params.{p}")

    def matches(self, raw) -> bool:
        for key, cond in self.match.items():
            if key == "sig_id":
                if getattr(raw, "sig_id", None) != cond:
                    return False
            elif key == "priority":
                prio = getattr(raw, "priority", None)
                if prio is None or not _COMPARATORS[cond["op"]](prio, cond["value"]):
                    return False
            elif key == "dimension":
                dim = _dimension_of(raw)
                if dim is None or dim.dimension.value != cond:
                    return False
            elif key == "metric":
                dim = _dimension_of(raw)
                if dim is None or dim.metric != cond:
                    return False
            elif key == "rating":
                value = getattr(raw, "value", None)
                if value is None or not _COMPARATORS[cond["op"]](value, cond["value"]):
                    return False
        return True

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, Mapping):
            raise ConfigError("mapping rule must be an object", field="mapping")
        return cls(
            match=dict(d.get("match", {})),
            score=d.get("score", DEFAULT_SCORE),
            weight=d.get("weight", DEFAULT_WEIGHT),
            action=d.get("action"),
            params=dict(d.get("params", {})),
        )


@dataclass(frozen=True)
class ActionDirective:
    kind: str
    subject: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise InvalidValue(f"unknown action kind {self.kind!r}", field="kind")
        for p in REQUIRED_ACTION_PARAMS.get(self.kind, ()):
            if p not in self.params:
                raise InvalidValue(f"{self.kind} requires param {p!r}", field=p)


@dataclass(frozen=True)
class InterpreterConfig:
    components: tuple[Component, ...] = ()
    mapping: tuple[MappingRule, ...] = ()
    decay_half_life: float = DEFAULT_HALF_LIFE
    prior_value: float = DEFAULT_PRIOR_VALUE
    prior_weight: float = DEFAULT_PRIOR_WEIGHT
    default_score: float = DEFAULT_SCORE
    default_weight: float = DEFAULT_WEIGHT
    observer: str = "self"
    address_table: Mapping[str, str] = field(default_factory=dict)

    @property
    def feedback_rules(self) -> list[MappingRule]:
        return [r for r in self.mapping if r.action is None]

    @property
    def action_rules(self) -> list[MappingRule]:
        return [r for r in self.mapping if r.action is not None]


def _number(doc, name, default, *, lo=None, hi=None, positive=False):
    v = doc.get(name, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{name} must be a finite number", field=name)
    if positive and v <= 0:
        raise ConfigError(f"{name} must be positive", field=name)
    if lo is not None and not lo <= v <= hi:
        raise ConfigError(f"{name} out of range [{lo}, {hi}]", field=name)
    return v


def load_config(document: str) -> InterpreterConfig:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e.msg}", e.pos) from None
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")

    components = []
    seen = set()
    for c in doc.get("components", []):
        if not isinstance(c, dict) or "name" not in c:
            raise ConfigError("component needs a name", field="components")
        name = c["name"]
        if name in seen:
            raise ConfigError(f"duplicate component name {name!r}", field="components.name")
        seen.add(name)
        kind = c.get("kind")
        if kind not in COMPONENT_KINDS:
            raise ConfigError(f"unknown component kind {kind!r}", field="components.kind")
        components.append(Component(
            name=name,
            address=c.get("address", ""),
            kind=kind,
            description=c.get("description", ""),
            tasks=tuple(c.get("tasks", ())),
        ))

    mapping = tuple(MappingRule.from_dict(r) for r in doc.get("mapping", []))
    default_weight = _number(doc, "default_weight", DEFAULT_WEIGHT, lo=0.0, hi=1.0)
    if default_weight == 0:
        raise ConfigError("default_weight must be in (0, 1]", field="default_weight")
    table = doc.get("address_table", {})
    if not isinstance(table, dict):
        raise ConfigError("address_table must be an object", field="address_table")

    return InterpreterConfig(
        components=tuple(components),
        mapping=mapping,
        decay_half_life=_number(doc, "decay_half_life", DEFAULT_HALF_LIFE, positive=True),
        prior_value=_number(doc, "prior_value", DEFAULT_PRIOR_VALUE, lo=0.0, hi=1.0),
        prior_weight=_number(doc, "prior_weight", DEFAULT_PRIOR_WEIGHT, positive=True),
        default_score=_number(doc, "default_score", DEFAULT_SCORE, lo=0.0, hi=1.0),
        default_weight=default_weight,
        observer=doc.get("observer", "self"),
        address_table=dict(table),
    )


def _dimension_of(raw):
    if isinstance(raw, MetricSample):
        return raw.dimension
    if hasattr(raw, "sig_id"):
        return ALERT_DIMENSION
    return None


def apply_mapping(raw, rules, observer, subject, *,
                  default_score=DEFAULT_SCORE, default_weight=DEFAULT_WEIGHT) -> FeedbackEvent:
    """Turn one alert or metric sample into a FeedbackEvent; first matching rule wins."""
    for rule in rules:
        if rule.action is None and rule.matches(raw):
            score, weight = rule.score, rule.weight
            break
    else:
        score, weight = default_score, default_weight
    return FeedbackEvent(
        observer=observer,
        subject=subject,
        dimension=_dimension_of(raw),
        score=score,
        weight=weight,
        timestamp=raw.timestamp,
        note=raw.message,
    )


_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if len(t) >= 3]


def generate_review(events, rating_value: float) -> ReviewText:
    ordered = sorted(events, key=lambda e: (e.timestamp, e.note))
    notes = []
    for e in ordered:
        if e.note and e.note not in notes:
            notes.append(e.note)
    text = f"rating={rating_value:.2f} events={len(ordered)}; " + "; ".join(notes)
    tags = {t for note in notes for t in tokenize(note)}
    return ReviewText(text, tuple(tags))


def compute_rating(events, now: int, config: InterpreterConfig, *, rater=None, ratee=None) -> Rating:
    """Prior-smoothed, exponentially decayed weighted mean of event scores.

    ``rater``/``ratee`` are only needed when ``events`` is empty.
    """
    events = list(events)
    if events:
        rater = rater or events[0].observer
        ratee = ratee or events[0].subject
    if rater is None or ratee is None:
        raise InvalidValue("rater and ratee are required when there are no events")
    for e in events:
        if e.subject != ratee or e.observer != rater:
            raise InvalidValue("all events must share one observer and subject", field="events")
        if e.timestamp > now:
            raise InvalidValue(f"event at t={e.timestamp} is later than now={now}", field="timestamp")

    h = config.decay_half_life
    num = [config.prior_value * config.prior_weight]
    den = [config.prior_weight]
    # sorted so the floating-point sum does not depend on input order
    for e in sorted(events, key=lambda e: (e.timestamp, e.score, e.weight)):
        w = e.weight * 2.0 ** (-(now - e.timestamp) / h)
        num.append(e.score * w)
        den.append(w)
    value = clamp_rating(math.fsum(num) / math.fsum(den))
    return Rating(rater, ratee, value, now, generate_review(events, value))


def map_rating_to_actions(rating: Rating, rules) -> list[ActionDirective]:
    return [
        ActionDirective(rule.action, rating.ratee, dict(rule.params))
        for rule in rules
        if rule.action is not None and rule.matches(rating)
    ]
