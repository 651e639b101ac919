"""The information exchange: ratings, reviews, shared records, discovery, watches."""

from __future__ import annotations

import dataclasses
import functools
import threading
from collections import Counter, defaultdict
from dataclasses import dataclass

from .model import (
    AggregateRating,
    InvalidValue,
    NotVouched,
    Rating,
    RecordKind,
    SpecificRecord,
    StaleTimestamp,
    UnknownIdentity,
    Verification,
    rank_by_mean,
    to_json,
)


class ExactSum:
    """Running sum of floats kept as an exact integer multiple of 2**-1074.

    Every double is such a multiple, so additions and removals never round
    and ``mean`` is the correctly rounded arithmetic mean.
    """

    SCALE = 1074

    def __init__(self):
        self.total = 0
        self.count = 0

    @staticmethod
    @functools.lru_cache(maxsize=4096)
    def _scaled(x: float) -> int:
        num, den = float(x).as_integer_ratio()
        return num << (ExactSum.SCALE - den.bit_length() + 1)

    def add(self, x: float):
        self.total += self._scaled(x)
        self.count += 1

    def remove(self, x: float):
        self.total -= self._scaled(x)
        self.count -= 1

    def mean(self) -> float:
        return self.total / (self.count << self.SCALE)


@dataclass
class Watch:
    subject: str
    threshold: float
    last_seen_mean: float | None


@dataclass(frozen=True)
class WatchAlert:
    subject: str
    old_mean: float
    new_mean: float
    timestamp: int


class Exchange:
    """Shared rating and record store.

    ``vouching`` is anything exposing ``has_interacted``, ``verify_record``
    and ``is_registered`` (normally a ``VouchingClient`` over some
    transport). With ``vouching_enabled=False`` both the identity and the
    interaction checks are skipped and every well-formed rating is kept.
    """

    def __init__(self, vouching, *, min_packets=1, vouching_enabled=True, log=None):
        if isinstance(min_packets, bool) or not isinstance(min_packets, int) or min_packets < 1:
            raise InvalidValue("min_packets must be a positive integer", field="min_packets")
        self.vouching = vouching
        self.min_packets = min_packets
        self.vouching_enabled = vouching_enabled
        self._lock = threading.RLock()
        self._ratings: dict[str, dict[str, Rating]] = defaultdict(dict)
        self._sums: dict[str, ExactSum] = defaultdict(ExactSum)
        # bumped whenever any aggregate mean changes; guards the discovery cache
        self._version = 0
        self._rankings: dict[tuple, tuple[int, list[str]]] = {}
        self._records: list[SpecificRecord] = []
        self._watches: dict[str, list[Watch]] = defaultdict(list)
        self.alerts: list[WatchAlert] = []
        self._listeners = []
        self._log = None
        if log is not None:
            for entry in log.replay("exchange"):
                self._apply(entry)
            self._log = log

    def _apply(self, entry, obj=None):
        ev = entry["event"]
        if ev == "rating":
            rating = obj or Rating.from_dict(entry["rating"])
            before = self._mean(rating.ratee)
            live = self._ratings[rating.ratee]
            old = live.get(rating.rater)
            if old is not None:
                self._sums[rating.ratee].remove(old.value)
            live[rating.rater] = rating
            self._sums[rating.ratee].add(rating.value)
            if self._mean(rating.ratee) != before:
                self._version += 1
            self._check_watches(rating.ratee, rating.timestamp)
        elif ev == "record":
            self._records.append(obj or SpecificRecord.from_dict(entry["record"]))
        elif ev == "watch":
            self._watches[entry["subject"]].append(
                Watch(entry["subject"], entry["threshold"], self._mean(entry["subject"])))

    def _commit(self, entry, obj=None):
        if self._log is not None:
            self._log.append("exchange", entry)
        self._apply(entry, obj)

    def _require(self, identity):
        if self.vouching_enabled and not self.vouching.is_registered(identity):
            raise UnknownIdentity(f"unknown identity {identity!r}")

    def _mean(self, ratee):
        total = self._sums.get(ratee)
        return None if total is None or not total.count else total.mean()

    # ratings

    def submit_rating(self, rating: Rating) -> None:
        if self.vouching_enabled:
            # raises UnknownIdentity for unregistered rater or ratee
            if not self.vouching.has_interacted(rating.rater, rating.ratee, self.min_packets):
                raise NotVouched(f"{rating.rater} has no recorded interaction with {rating.ratee}")
        with self._lock:
            old = self._ratings.get(rating.ratee, {}).get(rating.rater)
            if old is not None and rating.timestamp < old.timestamp:
                raise StaleTimestamp(
                    f"rating at t={rating.timestamp} is older than stored t={old.timestamp}")
            # the serialized form is only needed when there is a log to write
            entry = {"event": "rating"}
            if self._log is not None:
                entry["rating"] = rating.__json__()
            self._commit(entry, rating)

    def get_aggregate(self, ratee: str) -> AggregateRating:
        self._require(ratee)
        with self._lock:
            return AggregateRating(ratee, self._mean(ratee), len(self._ratings.get(ratee, ())))

    def live_ratings(self) -> list[Rating]:
        with self._lock:
            return [r for by_rater in self._ratings.values() for r in by_rater.values()]

    def list_reviews(self, ratee: str) -> list[Rating]:
        self._require(ratee)
        with self._lock:
            live = list(self._ratings.get(ratee, {}).values())
        live.sort(key=lambda r: r.rater)
        live.sort(key=lambda r: r.timestamp, reverse=True)
        return live

    def extract_common_tags(self, ratee: str, min_support: int) -> list[str]:
        if isinstance(min_support, bool) or not isinstance(min_support, int) or min_support < 1:
            raise InvalidValue("min_support must be a positive integer", field="min_support")
        counts = Counter()
        for r in self.list_reviews(ratee):
            counts.update(set(r.review.tags))
        common = [(tag, n) for tag, n in counts.items() if n >= min_support]
        common.sort(key=lambda p: (-p[1], p[0]))
        return [tag for tag, _ in common]

    def discover(self, catalog, min_rating: float) -> list[str]:
        key = (tuple(catalog), min_rating)
        with self._lock:
            cached = self._rankings.get(key)
            if cached is not None and cached[0] == self._version:
                return list(cached[1])
            means = {p: self._mean(p) for p in catalog}
            ranked = rank_by_mean(list(dict.fromkeys(catalog)), means.get, min_rating, lambda p: p)
            if len(self._rankings) > 256:
                self._rankings.clear()
            self._rankings[key] = (self._version, ranked)
            return list(ranked)

    # specific records

    def submit_record(self, record: SpecificRecord) -> Verification:
        fresh = dataclasses.replace(record, verified=Verification.UNCHECKED)
        if self.vouching_enabled:
            status = self.vouching.verify_record(fresh)
            fresh = fresh.with_status(status)
        with self._lock:
            self._commit({"event": "record", "record": to_json(fresh)}, fresh)
        return fresh.verified

    def query_records(self, subject=None, kind=None, since=None, include_unverified=False):
        kind = RecordKind(kind) if kind is not None else None
        with self._lock:
            records = list(self._records)
        out = [
            r for r in records
            if (include_unverified or r.verified is Verification.VERIFIED)
            and (subject is None or r.subject == subject)
            and (kind is None or r.kind is kind)
            and (since is None or r.timestamp >= since)
        ]
        out.sort(key=lambda r: r.timestamp)
        return out

    # sentiment watches

    def watch_rating(self, subject: str, threshold_drop: float) -> None:
        if isinstance(threshold_drop, bool) or not isinstance(threshold_drop, (int, float)) \
                or not 0.0 < threshold_drop <= 1.0:
            raise InvalidValue("threshold_drop must lie in (0, 1]", field="threshold_drop")
        self._require(subject)
        with self._lock:
            self._commit({"event": "watch", "subject": subject, "threshold": float(threshold_drop)})

    def add_listener(self, fn):
        self._listeners.append(fn)

    def alerts_for(self, subject=None) -> list[WatchAlert]:
        with self._lock:
            return [a for a in self.alerts if subject is None or a.subject == subject]

    def _check_watches(self, subject, timestamp):
        watches = self._watches.get(subject)
        if not watches:
            return
        mean = self._mean(subject)
        for w in watches:
            if w.last_seen_mean is None or mean > w.last_seen_mean:
                # track the peak since the last alert so a rise followed by a fall still fires
                w.last_seen_mean = mean
            elif w.last_seen_mean - mean >= w.threshold - 1e-12:
                alert = WatchAlert(subject, w.last_seen_mean, mean, timestamp)
                w.last_seen_mean = mean
                self.alerts.append(alert)
                for fn in self._listeners:
                    fn(alert)
