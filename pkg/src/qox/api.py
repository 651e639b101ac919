"""JSON request/response envelope for the exchange and vouching services.

A request is a JSON object with an ``op`` field plus the operation's
arguments in canonical form. A response echoes ``op`` and carries either the
result fields or an ``error`` code with a human-readable ``message``.

Two bindings are provided: ``LoopbackTransport`` calls an endpoint
in-process, and ``SocketTransport``/``serve_tcp`` speak newline-delimited
JSON over TCP.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import socketserver
import threading
from pathlib import Path

from . import model
from .model import (
    AggregateRating,
    EvidencePattern,
    IdentityId,
    QoxError,
    Rating,
    SpecificRecord,
    Verification,
    to_json,
)

log = logging.getLogger(__name__)

ERRORS = {
    cls.code: cls
    for cls in (
        model.InvalidValue, model.ConfigError, model.UnknownIdentity, model.NotVouched,
        model.StaleTimestamp, model.EmptyCredential, model.SelfInteraction, model.InvalidPattern,
    )
}


class RemoteError(QoxError):
    """An error code the client does not map to a local exception class."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class EventLog:
    """Write-ahead JSON-lines log shared by the services of one process."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.touch(exist_ok=True)

    def append(self, service, entry):
        line = json.dumps({"service": service, **entry}, sort_keys=True, separators=(",", ":"))
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def replay(self, service):
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                entry = json.loads(line)
                if entry.pop("service", None) == service:
                    yield entry


class Endpoint:
    """Dispatches envelope requests to handler functions."""

    def __init__(self, handlers=None):
        self.handlers = dict(handlers or {})

    def merge(self, other: "Endpoint") -> "Endpoint":
        return Endpoint({**self.handlers, **other.handlers})

    def handle(self, request: dict) -> dict:
        op = request.get("op") if isinstance(request, dict) else None
        handler = self.handlers.get(op)
        if handler is None:
            return {"op": op, "error": "unknown_op", "message": f"unknown operation {op!r}"}
        try:
            result = handler(request)
        except QoxError as e:
            return {"op": op, "error": e.code, "message": str(e)}
        except (KeyError, TypeError, ValueError) as e:
            return {"op": op, "error": "invalid_request", "message": f"{type(e).__name__}: {e}"}
        # handlers always return a fresh dict, so it can be stamped in place
        result["op"] = op
        return result

    def handle_text(self, text: str) -> str:
        try:
            request = json.loads(text)
        except json.JSONDecodeError as e:
            response = {"op": None, "error": "invalid_request", "message": str(e)}
        else:
            response = self.handle(request)
        return json.dumps(response, sort_keys=True, separators=(",", ":"))


def vouching_endpoint(authority) -> Endpoint:
    def register(req):
        return {"identity": to_json(authority.register(req["credential"], req["kind"]))}

    def record_interaction(req):
        authority.record_interaction(req["a"], req["b"], req["packets"], req["timestamp"])
        return {"ack": True}

    def has_interacted(req):
        return {"result": authority.has_interacted(req["a"], req["b"], req.get("min_packets", 1))}

    def is_registered(req):
        return {"result": authority.is_registered(req["id"])}

    def register_pattern(req):
        pattern = EvidencePattern.from_dict(req["pattern"])
        return {"pattern_id": authority.register_evidence_pattern(req["owner"], pattern)}

    def verify_record(req):
        return {"verified": authority.verify_record(SpecificRecord.from_dict(req["record"])).value}

    return Endpoint({
        "register": register,
        "record_interaction": record_interaction,
        "has_interacted": has_interacted,
        "is_registered": is_registered,
        "register_pattern": register_pattern,
        "verify_record": verify_record,
    })


def exchange_endpoint(exchange) -> Endpoint:
    def submit_rating(req):
        exchange.submit_rating(Rating.from_dict(req["rating"]))
        return {"ack": True}

    def get_aggregate(req):
        return {"aggregate": to_json(exchange.get_aggregate(req["ratee"]))}

    def list_reviews(req):
        return {"reviews": to_json(exchange.list_reviews(req["ratee"]))}

    def extract_common_tags(req):
        return {"tags": exchange.extract_common_tags(req["ratee"], req.get("min_support", 1))}

    def submit_record(req):
        return {"ack": True,
                "verified": exchange.submit_record(SpecificRecord.from_dict(req["record"])).value}

    def query_records(req):
        records = exchange.query_records(
            subject=req.get("subject"), kind=req.get("kind"), since=req.get("since"),
            include_unverified=req.get("include_unverified", False))
        return {"records": to_json(records)}

    def discover(req):
        return {"providers": exchange.discover(req["catalog"], req.get("min_rating", 0.0))}

    def watch_rating(req):
        exchange.watch_rating(req["subject"], req["threshold_drop"])
        return {"ack": True}

    def alerts(req):
        return {"alerts": to_json(exchange.alerts_for(req.get("subject")))}

    return Endpoint({
        "submit_rating": submit_rating,
        "get_aggregate": get_aggregate,
        "list_reviews": list_reviews,
        "extract_common_tags": extract_common_tags,
        "submit_record": submit_record,
        "query_records": query_records,
        "discover": discover,
        "watch_rating": watch_rating,
        "alerts": alerts,
    })


class LoopbackTransport:
    """In-process binding. ``encode=True`` forces a round trip through JSON text."""

    def __init__(self, endpoint: Endpoint, encode=False):
        self.endpoint = endpoint
        self.encode = encode

    def __call__(self, request: dict) -> dict:
        if self.encode:
            return json.loads(self.endpoint.handle_text(json.dumps(request)))
        return self.endpoint.handle(request)


class SocketTransport:
    """Newline-delimited JSON over one persistent TCP connection."""

    def __init__(self, host, port, timeout=10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rwb")
        self._lock = threading.Lock()

    def __call__(self, request: dict) -> dict:
        data = json.dumps(request, separators=(",", ":")).encode() + b"\n"
        with self._lock:
            self._file.write(data)
            self._file.flush()
            line = self._file.readline()
        if not line:
            raise ConnectionError("server closed the connection")
        return json.loads(line)

    def close(self):
        self._file.close()
        self._sock.close()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for line in self.rfile:
            if not line.strip():
                continue
            reply = self.server.endpoint.handle_text(line.decode("utf-8"))
            self.wfile.write(reply.encode() + b"\n")
            self.wfile.flush()


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def serve_tcp(endpoint: Endpoint, host="127.0.0.1", port=0):
    """Bind a threaded TCP server; call ``serve_forever`` on the result."""
    server = _Server((host, port), _Handler)
    server.endpoint = endpoint
    log.info("listening on %s:%d", *server.server_address[:2])
    return server


class _Client:
    def __init__(self, transport):
        self.transport = transport

    def _call(self, op, **args):
        response = self.transport({"op": op, **args})
        code = response.get("error")
        if code is not None:
            raise ERRORS.get(code, lambda m: RemoteError(code, m))(response.get("message", code))
        return response


class VouchingClient(_Client):
    def register(self, credential, kind) -> IdentityId:
        kind = getattr(kind, "value", kind)
        return IdentityId.from_dict(self._call("register", credential=credential, kind=kind)["identity"])

    def record_interaction(self, a, b, packets, t):
        self._call("record_interaction", a=a, b=b, packets=packets, timestamp=t)

    def has_interacted(self, a, b, min_packets=1) -> bool:
        return self._call("has_interacted", a=a, b=b, min_packets=min_packets)["result"]

    def is_registered(self, identity) -> bool:
        return self._call("is_registered", id=identity)["result"]

    def register_evidence_pattern(self, owner, pattern: EvidencePattern) -> str:
        return self._call("register_pattern", owner=owner, pattern=to_json(pattern))["pattern_id"]

    def verify_record(self, record: SpecificRecord) -> Verification:
        return Verification(self._call("verify_record", record=to_json(record))["verified"])


class ExchangeClient(_Client):
    def submit_rating(self, rating: Rating):
        self._call("submit_rating", rating=to_json(rating))

    def get_aggregate(self, ratee) -> AggregateRating:
        return AggregateRating.from_dict(self._call("get_aggregate", ratee=ratee)["aggregate"])

    def list_reviews(self, ratee) -> list[Rating]:
        return [Rating.from_dict(r) for r in self._call("list_reviews", ratee=ratee)["reviews"]]

    def extract_common_tags(self, ratee, min_support=1) -> list[str]:
        return self._call("extract_common_tags", ratee=ratee, min_support=min_support)["tags"]

    def submit_record(self, record: SpecificRecord) -> Verification:
        return Verification(self._call("submit_record", record=to_json(record))["verified"])

    def query_records(self, subject=None, kind=None, since=None, include_unverified=False):
        args = {"include_unverified": include_unverified}
        if subject is not None:
            args["subject"] = subject
        if kind is not None:
            args["kind"] = getattr(kind, "value", kind)
        if since is not None:
            args["since"] = since
        return [SpecificRecord.from_dict(r) for r in self._call("query_records", **args)["records"]]

    def discover(self, catalog, min_rating=0.0) -> list[str]:
        return self._call("discover", catalog=list(catalog), min_rating=min_rating)["providers"]

    def watch_rating(self, subject, threshold_drop):
        self._call("watch_rating", subject=subject, threshold_drop=threshold_drop)

    def alerts(self, subject=None) -> list[dict]:
        args = {} if subject is None else {"subject": subject}
        return self._call("alerts", **args)["alerts"]


def build_stack(*, state_path=None, vouching_enabled=True, min_packets=1, encode=False):
    """Wire a vouching authority and an exchange together over loopback bindings.

    Returns ``(authority, exchange, endpoint)`` where ``endpoint`` serves the
    operations of both services.
    """
    from .exchange import Exchange
    from .vouching import VouchingAuthority

    event_log = EventLog(state_path) if state_path is not None else None
    authority = VouchingAuthority(log=event_log)
    v_endpoint = vouching_endpoint(authority)
    exchange = Exchange(
        VouchingClient(LoopbackTransport(v_endpoint, encode=encode)),
        min_packets=min_packets, vouching_enabled=vouching_enabled, log=event_log,
    )
    return authority, exchange, v_endpoint.merge(exchange_endpoint(exchange))
