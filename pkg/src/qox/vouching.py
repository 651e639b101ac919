"""Vouching authority: identity registry, interaction ledger, evidence checks."""

from __future__ import annotations

import threading
from bisect import bisect_left, bisect_right
from collections import defaultdict

from .model import (
    EmptyCredential,
    EvidencePattern,
    IdentityId,
    IdentityKind,
    InteractionRecord,
    InvalidValue,
    SpecificRecord,
    UnknownIdentity,
    Verification,
)

WILDCARD = "*"


class Ledger:
    """Append-only interaction list with a per-pair cumulative index."""

    def __init__(self):
        self.interactions: list[InteractionRecord] = []
        self.index: dict[frozenset, int] = defaultdict(int)
        # per pair: timestamps and packet counts in timestamp order, for window sums
        self._by_pair: dict[frozenset, list[tuple[int, int]]] = defaultdict(list)

    def append(self, rec: InteractionRecord):
        self.interactions.append(rec)
        self.index[rec.pair] += rec.packets
        entries = self._by_pair[rec.pair]
        pos = bisect_right(entries, (rec.timestamp, float("inf")))
        entries.insert(pos, (rec.timestamp, rec.packets))

    def cumulative(self, a, b) -> int:
        return self.index.get(frozenset((a, b)), 0)

    def packets_between(self, a, b, start, end) -> int:
        """Packets exchanged by a and b with start <= t <= end."""
        entries = self._by_pair.get(frozenset((a, b)))
        if not entries:
            return 0
        lo = bisect_left(entries, (start, -1))
        hi = bisect_right(entries, (end, float("inf")))
        return sum(p for _, p in entries[lo:hi])

    def recount(self) -> dict[frozenset, int]:
        totals = defaultdict(int)
        for rec in self.interactions:
            totals[rec.pair] += rec.packets
        return dict(totals)


def _field_matches(constraint, value) -> bool:
    return constraint in (None, WILDCARD) or str(constraint) == str(value)


class VouchingAuthority:
    def __init__(self, log=None):
        self._lock = threading.RLock()
        self._ids_by_credential: dict[str, IdentityId] = {}
        self._identities: dict[str, IdentityId] = {}
        self.ledger = Ledger()
        self._patterns: dict[str, EvidencePattern] = {}
        self._patterns_by_owner: dict[str, list[str]] = defaultdict(list)
        self._log = log
        if log is not None:
            for entry in log.replay("vouching"):
                self._apply(entry)

    # internal state transitions, shared by live calls and log replay

    def _apply(self, entry, obj=None):
        ev = entry["event"]
        if ev == "register":
            ident = IdentityId(entry["id"], entry["kind"])
            self._ids_by_credential[entry["credential"]] = ident
            self._identities[ident.id] = ident
        elif ev == "record_interaction":
            self.ledger.append(obj or InteractionRecord.from_dict(entry["record"]))
        elif ev == "register_pattern":
            pattern = EvidencePattern.from_dict(entry["pattern"])
            self._patterns[entry["pattern_id"]] = pattern
            self._patterns_by_owner[pattern.owner].append(entry["pattern_id"])

    def _commit(self, entry, obj=None):
        if self._log is not None:
            self._log.append("vouching", entry)
        self._apply(entry, obj)

    def _require(self, *ids):
        for i in ids:
            if i not in self._identities:
                raise UnknownIdentity(f"unknown identity {i!r}")

    def register(self, credential: str, kind) -> IdentityId:
        if not isinstance(credential, str) or not credential:
            raise EmptyCredential("credential must be a non-empty string", field="credential")
        kind = IdentityKind(kind)
        with self._lock:
            existing = self._ids_by_credential.get(credential)
            if existing is not None:
                if existing.kind is not kind:
                    raise InvalidValue(
                        f"credential already registered as {existing.kind.value}", field="kind")
                return existing
            new_id = f"id-{len(self._identities) + 1:06d}"
            self._commit({"event": "register", "credential": credential,
                          "id": new_id, "kind": kind.value})
            return self._identities[new_id]

    def is_registered(self, identity: str) -> bool:
        return identity in self._identities

    def identity(self, identity: str) -> IdentityId:
        with self._lock:
            self._require(identity)
            return self._identities[identity]

    def record_interaction(self, a: str, b: str, packets: int, t: int) -> InteractionRecord:
        rec = InteractionRecord(a, b, packets, t)
        with self._lock:
            self._require(a, b)
            self._commit({"event": "record_interaction", "record": {
                "a": a, "b": b, "packets": packets, "timestamp": t}}, rec)
        return rec

    def cumulative(self, a: str, b: str) -> int:
        with self._lock:
            self._require(a, b)
            return self.ledger.cumulative(a, b)

    def has_interacted(self, a: str, b: str, min_packets: int = 1) -> bool:
        if isinstance(min_packets, bool) or not isinstance(min_packets, int) or min_packets < 1:
            raise InvalidValue("min_packets must be a positive integer", field="min_packets")
        return self.cumulative(a, b) >= min_packets

    def register_evidence_pattern(self, owner: str, pattern: EvidencePattern) -> str:
        if pattern.owner != owner:
            pattern = EvidencePattern(owner, pattern.kind, pattern.params)
        with self._lock:
            self._require(owner)
            pid = f"pat-{len(self._patterns) + 1:06d}"
            self._commit({"event": "register_pattern", "pattern_id": pid, "pattern": {
                "owner": owner, "kind": pattern.kind.value, "params": dict(pattern.params)}})
            return pid

    def patterns_for(self, owner: str) -> list[EvidencePattern]:
        with self._lock:
            return [self._patterns[pid] for pid in self._patterns_by_owner.get(owner, ())]

    def verify_record(self, record: SpecificRecord) -> Verification:
        """Check a shared record against the reporter's evidence patterns and the ledger.

        A pattern certifies the record when its kind and src/dst constraints
        match, and the subject exchanged at least ``min_count`` packets inside
        the closed window ``[t - window, t]`` with either the reporter or the
        pattern's dst target.
        """
        with self._lock:
            self._require(record.reporter)
            t = record.timestamp
            for pattern in self.patterns_for(record.reporter):
                if pattern.kind is not record.kind:
                    continue
                if not (_field_matches(pattern.params.get("src"), record.detail.get("src"))
                        and _field_matches(pattern.params.get("dst"), record.detail.get("dst"))):
                    continue
                counterparts = [record.reporter]
                dst = pattern.params.get("dst")
                if dst not in (None, WILDCARD) and dst != record.reporter:
                    counterparts.append(dst)
                for other in counterparts:
                    if other == record.subject:
                        continue
                    total = self.ledger.packets_between(record.subject, other, t - pattern.window, t)
                    if total >= pattern.min_count:
                        return Verification.VERIFIED
            return Verification.UNVERIFIABLE
