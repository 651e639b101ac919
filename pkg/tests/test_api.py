import json
import threading

import pytest

from qox.api import (
    Endpoint,
    ExchangeClient,
    LoopbackTransport,
    SocketTransport,
    VouchingClient,
    build_stack,
    serve_tcp,
)
from qox.model import (
    EvidencePattern,
    NotVouched,
    Rating,
    SpecificRecord,
    StaleTimestamp,
    UnknownIdentity,
    Verification,
)


@pytest.fixture
def endpoint():
    return build_stack(encode=True)[2]


def call(endpoint, **request):
    return json.loads(endpoint.handle_text(json.dumps(request)))


def test_error_codes_on_the_wire(endpoint):
    a = call(endpoint, op="register", credential="cc-a", kind="consumer")["identity"]["id"]
    p = call(endpoint, op="register", credential="cc-p", kind="provider")["identity"]["id"]
    rating = {"rater": a, "ratee": p, "value": 0.8, "timestamp": 2}

    resp = call(endpoint, op="submit_rating", rating=rating)
    assert resp == {"op": "submit_rating", "error": "not_vouched", "message": resp["message"]}

    assert call(endpoint, op="record_interaction", a=a, b=p, packets=1, timestamp=0)["ack"]
    assert call(endpoint, op="submit_rating", rating=rating) == {"op": "submit_rating", "ack": True}

    stale = dict(rating, timestamp=1)
    assert call(endpoint, op="submit_rating", rating=stale)["error"] == "stale_timestamp"

    assert call(endpoint, op="get_aggregate", ratee="ghost")["error"] == "unknown_identity"
    agg = call(endpoint, op="get_aggregate", ratee=p)
    assert agg == {"op": "get_aggregate", "aggregate": {"ratee": p, "mean": 0.8, "count": 1}}


def test_malformed_requests(endpoint):
    assert call(endpoint, op="nope")["error"] == "unknown_op"
    assert call(endpoint, op="submit_rating")["error"] == "invalid_request"
    assert json.loads(endpoint.handle_text("{not json"))["error"] == "invalid_request"
    bad = call(endpoint, op="register", credential="", kind="consumer")
    assert bad["error"] == "empty_credential"


def test_vouching_operation_names(endpoint):
    ops = set(endpoint.handlers)
    assert {"register", "record_interaction", "has_interacted", "register_pattern",
            "verify_record"} <= ops
    assert {"submit_rating", "get_aggregate", "list_reviews", "extract_common_tags",
            "submit_record", "query_records", "discover", "watch_rating"} <= ops


def _exercise(transport):
    vouching = VouchingClient(transport)
    exchange = ExchangeClient(transport)
    c = vouching.register("cc-c", "consumer").id
    p = vouching.register("cc-p", "provider").id
    with pytest.raises(NotVouched):
        exchange.submit_rating(Rating(c, p, 0.7, 1))
    vouching.record_interaction(c, p, 200, 5)
    assert vouching.has_interacted(p, c, 200)
    exchange.submit_rating(Rating(c, p, 0.7, 1))
    with pytest.raises(StaleTimestamp):
        exchange.submit_rating(Rating(c, p, 0.1, 0))
    with pytest.raises(UnknownIdentity):
        exchange.get_aggregate("ghost")
    assert exchange.get_aggregate(p).mean == 0.7
    assert [r.value for r in exchange.list_reviews(p)] == [0.7]
    assert exchange.extract_common_tags(p) == []
    assert exchange.discover([p], 0.5) == [p]
    vouching.register_evidence_pattern(p, EvidencePattern(p, "traffic_burst", {"min_count": 100, "window": 10}))
    rec = SpecificRecord(p, c, "traffic_burst", {"src": "10.0.0.3"}, 9)
    assert vouching.verify_record(rec) is Verification.VERIFIED
    assert exchange.submit_record(rec) is Verification.VERIFIED
    assert exchange.query_records(kind="traffic_burst")[0].verified is Verification.VERIFIED
    exchange.watch_rating(p, 0.2)
    assert exchange.alerts(p) == []


def test_loopback_clients():
    _exercise(LoopbackTransport(build_stack()[2], encode=True))


def test_socket_binding(tmp_path):
    _, _, endpoint = build_stack(state_path=tmp_path / "state.jsonl")
    server = serve_tcp(endpoint, "127.0.0.1", 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        transport = SocketTransport(*server.server_address[:2])
        _exercise(transport)
        transport.close()
    finally:
        server.shutdown()
        server.server_close()
    # the write-ahead log survives the server
    _, exchange, _ = build_stack(state_path=tmp_path / "state.jsonl")
    assert exchange.query_records()[0].kind.value == "traffic_burst"


def test_endpoint_merge():
    a = Endpoint({"x": lambda r: {"v": 1}})
    b = Endpoint({"y": lambda r: {"v": 2}})
    merged = a.merge(b)
    assert merged.handle({"op": "x"}) == {"op": "x", "v": 1}
    assert merged.handle({"op": "y"}) == {"op": "y", "v": 2}
