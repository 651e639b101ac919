"""Deterministic marketplace and sybil-attack simulations.

Both simulations drive the vouching authority and the exchange only through
their request/response clients over loopback bindings, the same surface a
remote consumer would use.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import accumulate

import numpy as np

from .api import ExchangeClient, LoopbackTransport, VouchingClient, build_stack
from .interpreter import generate_review
from .model import IdentityKind, InvalidValue, NotVouched, Rating

RNG_ALGORITHM = "numpy.random.PCG64"
DEFAULT_QUALITIES = (0.2, 0.4, 0.6, 0.8)
DEFAULT_RANK_PROBABILITIES = (0.85, 0.10, 0.05)


def _check_unit(name, v):
    if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
        raise InvalidValue(f"{name} must lie in [0, 1], got {v!r}", field=name)


def _check_positive_int(name, v, allow_zero=False):
    if isinstance(v, bool) or not isinstance(v, int) or v < (0 if allow_zero else 1):
        raise InvalidValue(f"{name} must be a {'non-negative' if allow_zero else 'positive'} integer",
                           field=name)


@dataclass(frozen=True)
class MarketParams:
    provider_qualities: tuple[float, ...] = DEFAULT_QUALITIES
    consumers: int = 100
    rounds: int = 100
    seed: int = 0
    price_per_selection: int = 1
    rank_probabilities: tuple[float, ...] = DEFAULT_RANK_PROBABILITIES

    def __post_init__(self):
        object.__setattr__(self, "provider_qualities", tuple(self.provider_qualities))
        object.__setattr__(self, "rank_probabilities", tuple(self.rank_probabilities))
        if not self.provider_qualities:
            raise InvalidValue("at least one provider quality is required", field="provider_qualities")
        for q in self.provider_qualities:
            _check_unit("provider_qualities", q)
        _check_positive_int("consumers", self.consumers)
        _check_positive_int("rounds", self.rounds)
        _check_positive_int("price_per_selection", self.price_per_selection)
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise InvalidValue("seed must be an unsigned 64-bit integer", field="seed")
        if not self.rank_probabilities or any(
                not math.isfinite(p) or p < 0 for p in self.rank_probabilities):
            raise InvalidValue("rank_probabilities must be non-negative", field="rank_probabilities")
        if math.fsum(self.rank_probabilities) > 1.0 + 1e-9 or self.rank_probabilities[0] <= 0:
            raise InvalidValue("rank_probabilities must sum to at most 1 with a positive first entry",
                               field="rank_probabilities")


@dataclass(frozen=True)
class MarketOutcome:
    revenue: dict = field(default_factory=dict)
    selections: dict = field(default_factory=dict)
    rounds_run: int = 0
    qualities: dict = field(default_factory=dict)
    seed: int | None = None
    rng: str = RNG_ALGORITHM


@dataclass(frozen=True)
class SybilParams:
    honest_raters: int = 3
    honest_value: float = 0.2
    fake_identities: int = 5
    fake_value: float = 1.0
    vouching_enabled: bool = True

    def __post_init__(self):
        _check_positive_int("honest_raters", self.honest_raters)
        _check_positive_int("fake_identities", self.fake_identities, allow_zero=True)
        _check_unit("honest_value", self.honest_value)
        _check_unit("fake_value", self.fake_value)


@dataclass(frozen=True)
class SybilOutcome:
    aggregate_mean: float
    accepted: int
    rejected: int
    params: SybilParams


def selection_distribution(ranked_count: int, rank_probabilities=DEFAULT_RANK_PROBABILITIES) -> list[float]:
    """Probability of choosing each position of a ranked result list.

    Positions past the supplied probabilities get zero mass; the kept
    entries are renormalized to sum to 1.
    """
    _check_positive_int("ranked_count", ranked_count)
    base = list(rank_probabilities[:ranked_count])
    base += [0.0] * (ranked_count - len(base))
    total = math.fsum(base)
    if total <= 0:
        raise InvalidValue("no probability mass on the ranked positions", field="rank_probabilities")
    return [p / total for p in base]


class _Sampler:
    def __init__(self, probabilities):
        cdf = list(accumulate(probabilities))
        cdf[-1] = 1.0
        # never land on a zero-mass tail position
        last = max(i for i, p in enumerate(probabilities) if p > 0)
        self.cdf = cdf[:last + 1]

    def __call__(self, u: float) -> int:
        return min(bisect_right(self.cdf, u), len(self.cdf) - 1)


def run_market(params: MarketParams) -> MarketOutcome:
    _, _, endpoint = build_stack()
    transport = LoopbackTransport(endpoint)
    vouching = VouchingClient(transport)
    exchange = ExchangeClient(transport)
    rng = np.random.Generator(np.random.PCG64(params.seed))

    providers = []
    quality = {}
    for i, q in enumerate(params.provider_qualities):
        pid = vouching.register(f"provider-{i}", IdentityKind.PROVIDER).id
        providers.append(pid)
        quality[pid] = float(q)
    consumers = [vouching.register(f"consumer-{j}", IdentityKind.CONSUMER).id
                 for j in range(params.consumers)]

    reviews = {p: generate_review([], quality[p]) for p in providers}
    for i, p in enumerate(providers):
        boot = vouching.register(f"bootstrap-{i}", IdentityKind.CONSUMER).id
        vouching.record_interaction(boot, p, 1, 0)
        exchange.submit_rating(Rating(boot, p, quality[p], 0, reviews[p]))

    samplers = {}
    selections = dict.fromkeys(providers, 0)
    for t in range(1, params.rounds + 1):
        draws = rng.random(params.consumers)
        for c, u in zip(consumers, draws.tolist()):
            ranked = exchange.discover(providers, 0.0)
            n = len(ranked)
            if n not in samplers:
                samplers[n] = _Sampler(selection_distribution(n, params.rank_probabilities))
            chosen = ranked[samplers[n](u)]
            vouching.record_interaction(c, chosen, 1, t)
            selections[chosen] += 1
            exchange.submit_rating(Rating(c, chosen, quality[chosen], t, reviews[chosen]))

    return MarketOutcome(
        revenue={p: n * params.price_per_selection for p, n in selections.items()},
        selections=selections,
        rounds_run=params.rounds,
        qualities=quality,
        seed=params.seed,
    )


def run_sybil(params: SybilParams) -> SybilOutcome:
    _, _, endpoint = build_stack(vouching_enabled=params.vouching_enabled)
    transport = LoopbackTransport(endpoint)
    vouching = VouchingClient(transport)
    exchange = ExchangeClient(transport)

    target = vouching.register("target-provider", IdentityKind.PROVIDER).id
    accepted = rejected = 0
    for i in range(params.honest_raters):
        rater = vouching.register(f"honest-{i}", IdentityKind.CONSUMER).id
        vouching.record_interaction(rater, target, 1, 0)
        exchange.submit_rating(Rating(rater, target, params.honest_value, 1))
        accepted += 1

    for k in range(params.fake_identities):
        if params.vouching_enabled:
            # one credit card buys one identity, however many accounts are attempted
            fake = vouching.register("sybil-card", IdentityKind.CONSUMER).id
        else:
            fake = f"sybil-{k:06d}"
        try:
            exchange.submit_rating(Rating(fake, target, params.fake_value, 1))
        except NotVouched:
            rejected += 1
        else:
            accepted += 1

    mean = exchange.get_aggregate(target).mean
    return SybilOutcome(aggregate_mean=mean, accepted=accepted, rejected=rejected, params=params)
