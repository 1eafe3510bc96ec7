"""Characterizing confirmed activities: volume, timing, shape and who keeps coming back."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

from .config import CDF_STEP, DAY_S
from .detect import WashTradeEvent
from .errors import MissingPrice
from .graph import SccCandidate
from .models import OFF_MARKET, Address, LabelRegistry, NftId, PriceTable, TransferEvent


class Pattern(str, Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"
    P5 = "P5"
    P6 = "P6"
    P7 = "P7"
    P8 = "P8"
    P9 = "P9"
    P10 = "P10"
    OTHER = "Other"


# Shapes over nodes 0..n-1, parallel trades collapsed. Circular ones: P2, P5, P10.
PATTERN_EDGES: dict[Pattern, list[tuple[int, int]]] = {
    Pattern.P1: [(0, 1), (1, 0)],                                   # round trip
    Pattern.P2: [(0, 1), (1, 2), (2, 0)],                           # 3-cycle
    Pattern.P3: [(0, 1), (1, 0), (1, 2), (2, 0)],                   # round trip plus spur
    Pattern.P4: [(0, 1), (1, 0), (1, 2), (2, 1)],                   # double round trip
    Pattern.P5: [(0, 1), (1, 2), (2, 3), (3, 0)],                   # 4-cycle
    Pattern.P6: [(0, 1), (1, 0), (0, 2), (2, 0), (0, 3), (3, 0)],   # hub with three round trips
    Pattern.P7: [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)],   # chain of round trips
    Pattern.P8: [(0, 1), (1, 2), (2, 0), (2, 3), (3, 2)],           # 3-cycle with a round-trip spur
    Pattern.P9: [(0, 1), (1, 2), (2, 3), (3, 0), (1, 0)],           # 4-cycle with one trade back
    Pattern.P10: [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)],          # 5-cycle
}


def _pattern_graph(edges) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_edges_from(edges)
    return g


PATTERN_GRAPHS = {p: _pattern_graph(e) for p, e in PATTERN_EDGES.items()}


@dataclass(frozen=True)
class PatternId:
    id: Pattern
    node_count: int


@dataclass(frozen=True)
class ActivityReport:
    nft: NftId
    members: tuple[Address, ...]
    usd_volume: Decimal
    lifetime_seconds: int
    acquisition_latency_seconds: int | None
    pattern: PatternId
    marketplaces: dict[str, Decimal] = field(default_factory=dict)

    @property
    def collection(self) -> Address:
        return self.nft.contract


def _candidate(e) -> SccCandidate:
    return e.candidate if isinstance(e, WashTradeEvent) else e


def usd_volume(e, prices: PriceTable) -> Decimal:
    """Sum of internal payments priced on the UTC day of each trade."""
    return sum((prices.usd_value(edge.payment, edge.timestamp) for edge in _candidate(e).internal_edges),
               Decimal(0))


def lifetime(e) -> int:
    edges = _candidate(e).internal_edges
    return edges[-1].timestamp - edges[0].timestamp


def acquisition_latency(e, full_history: Iterable[TransferEvent]) -> int | None:
    """Seconds between the members' last purchase of the NFT and their first internal trade."""
    latest = acquiring_transfer(e, full_history)
    if latest is None or latest.seller.is_null:
        return None
    return _candidate(e).internal_edges[0].timestamp - latest.timestamp


def classify_pattern(e) -> PatternId:
    c = _candidate(e)
    support = nx.DiGraph()
    support.add_nodes_from(c.members)
    support.add_edges_from((edge.seller, edge.buyer) for edge in c.internal_edges)
    n = support.number_of_nodes()
    if nx.number_of_selfloops(support) == 0:
        for pattern, shape in PATTERN_GRAPHS.items():
            if (shape.number_of_nodes() == n and shape.number_of_edges() == support.number_of_edges()
                    and nx.is_isomorphic(support, shape)):
                return PatternId(pattern, n)
    return PatternId(Pattern.OTHER, n)


def _edge_marketplaces(c: SccCandidate, registry: LabelRegistry, prices: PriceTable) -> dict[str, Decimal]:
    volumes: dict[str, Decimal] = defaultdict(Decimal)
    for edge in c.internal_edges:
        volumes[registry.marketplace_of(edge.contract)] += prices.usd_value(edge.payment, edge.timestamp)
    return dict(sorted(volumes.items()))


def characterize(e: WashTradeEvent, history: Sequence[TransferEvent], registry: LabelRegistry,
                 prices: PriceTable) -> ActivityReport:
    return ActivityReport(
        nft=e.nft,
        members=tuple(sorted(e.members)),
        usd_volume=usd_volume(e, prices),
        lifetime_seconds=lifetime(e),
        acquisition_latency_seconds=acquisition_latency(e, history),
        pattern=classify_pattern(e),
        marketplaces=_edge_marketplaces(e.candidate, registry, prices),
    )


def marketplace_breakdown(events: Iterable[WashTradeEvent], registry: LabelRegistry, prices: PriceTable,
                          totals: Mapping[str, Decimal] | None = None) -> dict[str, dict]:
    """Per marketplace: events touching it, their USD volume there, share of its total volume.

    Edges through unlabeled contracts land in "off-market".
    """
    totals = totals or {}
    counts: Counter = Counter()
    volumes: dict[str, Decimal] = defaultdict(Decimal)
    for e in events:
        for name, usd in _edge_marketplaces(e.candidate, registry, prices).items():
            counts[name] += 1
            volumes[name] += usd
    table = {}
    for name in sorted(counts):
        total = totals.get(name)
        table[name] = {
            "events": counts[name],
            "usd_volume": volumes[name],
            "share": volumes[name] / total if total else None,
        }
    return table


def collection_breakdown(events: Iterable[WashTradeEvent], prices: PriceTable) -> dict[Address, dict]:
    counts: Counter = Counter()
    volumes: dict[Address, Decimal] = defaultdict(Decimal)
    for e in events:
        counts[e.nft.contract] += 1
        volumes[e.nft.contract] += usd_volume(e, prices)
    return {c: {"events": counts[c], "usd_volume": volumes[c]} for c in sorted(counts)}


def account_count_distribution(events: Iterable[WashTradeEvent]) -> dict[int, int]:
    return dict(sorted(Counter(len(e.members) for e in events).items()))


def pattern_histogram(events: Iterable[WashTradeEvent]) -> dict[str, int]:
    counts = Counter(classify_pattern(e).id for e in events)
    return {p.value: counts.get(p, 0) for p in Pattern}


def lifetime_cdf(values: Sequence[int]) -> dict:
    """Empirical CDF every CDF_STEP percent plus the one-day and ten-day marks."""
    if not len(values):
        return {"points": [], "within_1_day": None, "within_10_days": None}
    arr = np.sort(np.asarray(values, dtype=np.int64))
    levels = np.arange(0, 100 + CDF_STEP, CDF_STEP)
    quantiles = np.quantile(arr, levels / 100, method="inverted_cdf")
    return {
        "points": [{"percent": int(p), "seconds": int(q)} for p, q in zip(levels, quantiles)],
        "within_1_day": float(np.mean(arr <= DAY_S)),
        "within_10_days": float(np.mean(arr <= 10 * DAY_S)),
    }


def acquisition_summary(latencies: Sequence[int | None]) -> dict:
    known = np.asarray([x for x in latencies if x is not None], dtype=np.int64)
    return {
        "purchased": int(known.size),
        "minted_or_unknown": len(latencies) - int(known.size),
        "within_1_day": float(np.mean(known < DAY_S)) if known.size else None,
        "within_14_days": float(np.mean(known < 14 * DAY_S)) if known.size else None,
    }


@dataclass(frozen=True)
class SerialReport:
    activity_counts: dict[Address, int]
    serials: frozenset[Address]
    serial_only: frozenset[Address]
    events_by_serials_only: int
    events_with_serial: int
    most_active: tuple[Address, int] | None
    same_collection_serials: frozenset[Address]
    per_collection_repeats: dict[Address, int]
    top_serial_pair: tuple[Address, Address, int] | None

    @property
    def mean_activities_per_serial(self) -> Decimal | None:
        if not self.serials:
            return None
        return Decimal(sum(self.activity_counts[a] for a in self.serials)) / len(self.serials)


def serial_stats(events: Sequence[WashTradeEvent]) -> SerialReport:
    counts: Counter = Counter()
    per_collection: dict[Address, Counter] = defaultdict(Counter)
    for e in events:
        for a in e.members:
            counts[a] += 1
            per_collection[e.nft.contract][a] += 1
    serials = frozenset(a for a, n in counts.items() if n >= 2)

    serial_events = [e for e in events if e.members <= serials]
    mixed = {a for e in events if not e.members <= serials for a in e.members}
    serial_only = frozenset(serials - mixed)

    repeats = {c: sum(1 for a, n in cnt.items() if n >= 2 and a in serials) for c, cnt in per_collection.items()}
    same_collection = frozenset(a for cnt in per_collection.values() for a, n in cnt.items() if n >= 2)

    pairs: Counter = Counter()
    for e in events:
        for a, b in combinations(sorted(e.members & serials), 2):
            pairs[(a, b)] += 1
    top_pair = None
    if pairs:
        (a, b), n = min(pairs.items(), key=lambda kv: (-kv[1], kv[0]))
        top_pair = (a, b, n)

    most_active = None
    if serials:
        account = min(serials, key=lambda a: (-counts[a], a))
        most_active = (account, counts[account])

    return SerialReport(
        activity_counts=dict(sorted(counts.items())),
        serials=serials,
        serial_only=serial_only,
        events_by_serials_only=len(serial_events),
        events_with_serial=sum(1 for e in events if e.members & serials),
        most_active=most_active,
        same_collection_serials=same_collection,
        per_collection_repeats={c: n for c, n in sorted(repeats.items()) if n},
        top_serial_pair=top_pair,
    )


def legit_volume(histories: Mapping[NftId, Sequence[TransferEvent]], washed: set[NftId],
                 prices: PriceTable) -> dict:
    """USD of paid transfers on NFTs without any confirmed activity (the reference curve)."""
    total, trades, unpriced = Decimal(0), 0, 0
    for nft, history in histories.items():
        if nft in washed:
            continue
        for t in history:
            if not t.payment.is_paid:
                continue
            try:
                total += prices.usd_value(t.payment, t.timestamp)
                trades += 1
            except MissingPrice:
                unpriced += 1
    return {"usd_volume": total, "trades": trades, "unpriced_trades": unpriced}


def off_market_share(table: Mapping[str, dict]) -> Decimal | None:
    total = sum((row["usd_volume"] for row in table.values()), Decimal(0))
    if not total:
        return None
    return table.get(OFF_MARKET, {}).get("usd_volume", Decimal(0)) / total


def acquiring_transfer(e, full_history: Iterable[TransferEvent]) -> TransferEvent | None:
    """The latest transfer handing the NFT to a member before the first internal trade."""
    c = _candidate(e)
    deliveries = [t for t in full_history
                  if t.buyer in c.members and t.seller not in c.members and t.chain_pos < c.first_move]
    return max(deliveries, key=lambda t: t.sort_key) if deliveries else None
