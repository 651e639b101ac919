import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import weighted_mean_oracle
from qox.adapters import parse_alert_line
from qox.interpreter import (
    InterpreterConfig,
    MappingRule,
    MetricSample,
    apply_mapping,
    compute_rating,
    generate_review,
    load_config,
    map_rating_to_actions,
)
from qox.model import ConfigError, FeedbackEvent, InvalidValue, ParseError, QualityDimension, Rating

THREAT = QualityDimension("qoc", "threat", "ids_alert")
PERF = QualityDimension("qos", "performance", "response_time_ms")
ALERT = parse_alert_line(
    "01/01-00:00:01.000000 [**] [1:1000001:0] ICMP flood [**] [Priority: 2] {ICMP} 10.0.0.5 -> 10.0.0.9")


def ev(score=1.0, weight=1.0, t=0, note="", obs="me", sub="them"):
    return FeedbackEvent(obs, sub, THREAT, score, weight, t, note)


def test_load_config_defaults():
    cfg = load_config(json.dumps({
        "components": [{"name": "ids", "address": "10.0.0.2", "kind": "sensor"}],
        "mapping": [],
    }))
    assert cfg.decay_half_life == 3600
    assert cfg.prior_value == 0.5
    assert cfg.prior_weight == 1.0
    assert cfg.components[0].name == "ids"


def test_load_config_duplicate_name():
    doc = {"components": [{"name": "ids", "kind": "sensor"}, {"name": "ids", "kind": "service"}]}
    with pytest.raises(ConfigError, match="duplicate component name") as exc:
        load_config(json.dumps(doc))
    assert exc.value.field == "components.name"


def test_load_config_unknown_kind():
    with pytest.raises(ConfigError, match="unknown component kind"):
        load_config(json.dumps({"components": [{"name": "nagios", "kind": "monitor"}]}))


def test_load_config_bad_score_names_field():
    with pytest.raises(ConfigError) as exc:
        load_config(json.dumps({"mapping": [{"match": {"sig_id": 1}, "score": 1.5}]}))
    assert exc.value.field == "score"


def test_load_config_malformed_json():
    with pytest.raises(ParseError) as exc:
        load_config('{"components": [}')
    assert exc.value.offset == 16


@pytest.mark.parametrize("field, value", [
    ("decay_half_life", 0), ("prior_weight", -1), ("prior_value", 2.0)])
def test_load_config_ranges(field, value):
    with pytest.raises(ConfigError) as exc:
        load_config(json.dumps({field: value}))
    assert exc.value.field == field


def test_apply_mapping_signature_rule():
    rules = [MappingRule({"sig_id": 1000001}, score=0.0, weight=1.0)]
    e = apply_mapping(ALERT, rules, "me", "them")
    assert (e.score, e.weight) == (0.0, 1.0)
    assert e.note == "ICMP flood"
    assert e.dimension.dimension.value == "threat"
    assert e.timestamp == 1


def test_apply_mapping_metric_rule():
    sample = MetricSample(PERF, 120.0, 5, "slow response")
    rules = [MappingRule({"dimension": "performance"}, score=0.9, weight=0.5)]
    e = apply_mapping(sample, rules, "me", "them")
    assert (e.score, e.weight) == (0.9, 0.5)


def test_apply_mapping_default_rule():
    # an empty rule list leaves only the catch-all
    e = apply_mapping(ALERT, [], "me", "them")
    assert (e.score, e.weight) == (0.25, 0.5)


def test_apply_mapping_first_match_wins_and_priority():
    rules = [
        MappingRule({"priority": {"op": "<=", "value": 1}}, score=0.0, weight=1.0),
        MappingRule({"priority": {"op": "<=", "value": 3}}, score=0.3, weight=0.8),
        MappingRule({}, score=0.9, weight=0.1),
    ]
    e = apply_mapping(ALERT, rules, "me", "them")
    assert (e.score, e.weight) == (0.3, 0.8)


def test_compute_rating_examples():
    cfg = InterpreterConfig()
    assert compute_rating([], 10, cfg, rater="me", ratee="them").value == 0.5
    # (0.5*1 + 3*1) / (1 + 3)
    assert compute_rating([ev(t=10)] * 3, 10, cfg).value == pytest.approx(0.875, abs=1e-15)
    # (0.5*1 + 0) / (1 + 1)
    assert compute_rating([ev(score=0.0, t=10)], 10, cfg).value == pytest.approx(0.25, abs=1e-15)


def test_compute_rating_half_life():
    cfg = InterpreterConfig()
    # one half-life old: weight halves -> (0.5 + 0.5) / (1 + 0.5)
    r = compute_rating([ev(t=0)], 3600, cfg)
    assert r.value == pytest.approx(2 / 3, abs=1e-15)


def test_compute_rating_rejects_mixed_subjects():
    with pytest.raises(InvalidValue):
        compute_rating([ev(sub="x"), ev(sub="y")], 10, InterpreterConfig())
    with pytest.raises(InvalidValue):
        compute_rating([ev(t=11)], 10, InterpreterConfig())


events_st = st.lists(
    st.builds(ev,
              score=st.floats(0, 1),
              weight=st.floats(0.001, 1),
              t=st.integers(0, 20000),
              note=st.sampled_from(["", "dos alert", "slow response", "port scan"])),
    max_size=10,
)


@given(events_st, st.floats(0, 1), st.floats(0.01, 10), st.integers(1, 10000))
def test_compute_rating_matches_oracle(events, prior, prior_weight, half_life):
    cfg = InterpreterConfig(decay_half_life=half_life, prior_value=prior, prior_weight=prior_weight)
    r = compute_rating(events, 20000, cfg, rater="me", ratee="them")
    expected = weighted_mean_oracle(events, 20000, half_life, prior, prior_weight)
    assert abs(r.value - expected) <= 1e-12
    assert 0.0 <= r.value <= 1.0


@given(events_st, st.randoms(use_true_random=False))
def test_compute_rating_order_independent(events, rnd):
    cfg = InterpreterConfig()
    shuffled = list(events)
    rnd.shuffle(shuffled)
    a = compute_rating(events, 20000, cfg, rater="me", ratee="them")
    b = compute_rating(shuffled, 20000, cfg, rater="me", ratee="them")
    assert a == b


@given(st.integers(0, 50000), st.integers(0, 50000))
def test_decay_monotonicity(t1, t2):
    if t1 == t2:
        return
    older, newer = sorted((t1, t2))
    cfg = InterpreterConfig()
    now = 50000
    v_old = compute_rating([ev(t=older)], now, cfg).value
    v_new = compute_rating([ev(t=newer)], now, cfg).value
    assert abs(v_old - cfg.prior_value) < abs(v_new - cfg.prior_value)


def test_generate_review_examples():
    r = generate_review([], 0.5)
    assert (r.text, r.tags) == ("rating=0.50 events=0; ", ())
    r = generate_review([ev(note="dos alert")], 0.25)
    assert (r.text, r.tags) == ("rating=0.25 events=1; dos alert", ("alert", "dos"))
    r = generate_review([ev(note="slow response", t=1), ev(note="slow response", t=2)], 0.4)
    assert r.text.count("slow response") == 1
    assert r.tags == ("response", "slow")


def test_generate_review_orders_notes_by_time_and_drops_short_tokens():
    r = generate_review([ev(note="b is late", t=5), ev(note="a DoS-alert", t=1)], 0.3)
    assert r.text == "rating=0.30 events=2; a DoS-alert; b is late"
    assert r.tags == ("alert", "dos", "late")


ACTION_RULES = {
    "trusted": MappingRule({"rating": {"op": ">=", "value": 0.5}}, action="assign_pool",
                           params={"pool": "trusted"}),
    "untrusted": MappingRule({"rating": {"op": "<", "value": 0.5}}, action="assign_pool",
                             params={"pool": "untrusted"}),
    "block": MappingRule({"rating": {"op": "<", "value": 0.2}}, action="block"),
}


def _rating(v):
    return Rating("me", "them", v, 0)


def test_map_rating_to_actions_examples():
    out = map_rating_to_actions(_rating(0.8), [ACTION_RULES["trusted"]])
    assert [(d.kind, d.params.get("pool")) for d in out] == [("assign_pool", "trusted")]
    out = map_rating_to_actions(_rating(0.3), [ACTION_RULES["trusted"], ACTION_RULES["untrusted"]])
    assert [(d.kind, d.params.get("pool")) for d in out] == [("assign_pool", "untrusted")]
    out = map_rating_to_actions(_rating(0.1), [ACTION_RULES["untrusted"], ACTION_RULES["block"]])
    assert [d.kind for d in out] == ["assign_pool", "block"]
    assert all(d.subject == "them" for d in out)


def test_action_rules_require_params():
    with pytest.raises(ConfigError):
        MappingRule({}, action="redirect")
    with pytest.raises(ConfigError):
        MappingRule({}, action="reboot")


def test_map_rating_to_actions_deterministic():
    rules = list(ACTION_RULES.values())
    rng = random.Random(3)
    for _ in range(200):
        r = _rating(rng.random())
        assert map_rating_to_actions(r, rules) == map_rating_to_actions(r, rules)


@settings(max_examples=300)
@given(events_st)
def test_compute_rating_bounded(events):
    r = compute_rating(events, 20000, InterpreterConfig(), rater="me", ratee="them")
    assert 0.0 <= r.value <= 1.0
