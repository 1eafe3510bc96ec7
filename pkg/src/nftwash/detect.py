"""Confirming suspicious components as wash trading.

Five independent signals: zero-risk position, common funder, common exit,
self-trade, and re-use of an already confirmed account set.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Iterable, Sequence

from .config import EPSILON_ABS, EPSILON_REL
from .graph import SccCandidate
from .models import (Address, ChainPos, CodePresenceOracle, LabelRegistry, StaticCodeOracle,
                     TransactionRecord)

logger = logging.getLogger(__name__)


class EvidenceKind(str, Enum):
    ZERO_RISK = "zero_risk"
    COMMON_FUNDER_INTERNAL = "common_funder_internal"
    COMMON_FUNDER_EXTERNAL = "common_funder_external"
    COMMON_EXIT_INTERNAL = "common_exit_internal"
    COMMON_EXIT_EXTERNAL = "common_exit_external"
    SELF_TRADE = "self_trade"
    PROPAGATED = "propagated"

    @property
    def family(self) -> str:
        return self.value.removesuffix("_internal").removesuffix("_external")

    @property
    def has_witness(self) -> bool:
        return self.family in ("common_funder", "common_exit")


KIND_ORDER = {kind: i for i, kind in enumerate(EvidenceKind)}
FAMILIES = ("zero_risk", "common_funder", "common_exit", "self_trade", "propagated")


@dataclass(frozen=True)
class Evidence:
    kind: EvidenceKind
    witness: Address | None = None
    supporting_txs: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind.has_witness != (self.witness is not None):
            raise ValueError(f"{self.kind.value}: witness must be set iff the kind names an account")
        if self.kind is not EvidenceKind.PROPAGATED and not self.supporting_txs:
            raise ValueError(f"{self.kind.value}: supporting transactions required")


@dataclass(frozen=True)
class ZeroRiskTolerance:
    absolute: Decimal = EPSILON_ABS
    relative: Decimal = EPSILON_REL

    def allows(self, net: Decimal, turnover: Decimal) -> bool:
        return abs(net) <= max(self.absolute, self.relative * turnover)


class TransactionIndex:
    """Value transfers and calls, chain-ordered per account and grouped by hash."""

    def __init__(self, records: Iterable[TransactionRecord] = ()):
        records = sorted(records, key=lambda r: r.sort_key)
        by_account = defaultdict(list)
        by_hash = defaultdict(list)
        for r in records:
            by_account[r.sender].append(r)
            if r.recipient != r.sender:
                by_account[r.recipient].append(r)
            by_hash[r.tx_hash].append(r)
        self._by_account = {k: tuple(v) for k, v in by_account.items()}
        self._by_hash = {k: tuple(v) for k, v in by_hash.items()}
        self.size = len(records)

    def involving(self, account: Address) -> tuple[TransactionRecord, ...]:
        return self._by_account.get(account, ())

    def by_hash(self, tx_hash: str) -> tuple[TransactionRecord, ...]:
        return self._by_hash.get(tx_hash, ())

    def gas_fee(self, tx_hash: str) -> Decimal:
        # one fee per transaction, however many transfer records it produced
        return max((r.gas_fee for r in self.by_hash(tx_hash)), default=Decimal(0))

    def timestamp(self, tx_hash: str) -> int | None:
        records = self.by_hash(tx_hash)
        return records[0].timestamp if records else None

    def subset(self, accounts: Iterable[Address] = (), hashes: Iterable[str] = ()) -> "TransactionIndex":
        chosen = {}
        for account in accounts:
            for r in self.involving(account):
                chosen[id(r)] = r
        for h in hashes:
            for r in self.by_hash(h):
                chosen[id(r)] = r
        return TransactionIndex(chosen.values())

    def __len__(self):
        return self.size


def _member_records(c: SccCandidate, index: TransactionIndex) -> list[TransactionRecord]:
    seen, out = set(), []
    for member in sorted(c.members):
        for r in index.involving(member):
            if id(r) not in seen:
                seen.add(id(r))
                out.append(r)
    out.sort(key=lambda r: r.sort_key)
    return out


def _is_value_move(r: TransactionRecord) -> bool:
    return r.kind.is_plain_transfer and r.payment.amount > 0 and r.sender != r.recipient


def check_zero_risk(c: SccCandidate, index: TransactionIndex,
                    tolerance: ZeroRiskTolerance = ZeroRiskTolerance()) -> Evidence | None:
    """Every member's per-asset balance over the group's own flows nets to ~0.

    Flows are the NFT payments (buyer -> seller) plus plain transfers between two
    distinct members inside the episode window. Gas never enters the balance.
    """
    edge_hashes = {e.tx_hash for e in c.internal_edges}
    flows = [(e.buyer, e.seller, str(e.payment.asset), e.payment.amount, e.tx_hash)
             for e in c.internal_edges if e.payment.amount > 0 and not e.is_self_loop]
    for r in _member_records(c, index):
        if (r.sender in c.members and r.recipient in c.members and _is_value_move(r)
                and c.first_move <= r.chain_pos <= c.last_move and r.tx_hash not in edge_hashes):
            flows.append((r.sender, r.recipient, str(r.payment.asset), r.payment.amount, r.tx_hash))
    if not flows:
        return None

    net: dict[tuple, Decimal] = defaultdict(Decimal)
    turnover: dict[tuple, Decimal] = defaultdict(Decimal)
    for payer, payee, asset, amount, _ in flows:
        net[(payer, asset)] -= amount
        net[(payee, asset)] += amount
        turnover[(payer, asset)] += amount
        turnover[(payee, asset)] += amount
    if all(tolerance.allows(value, turnover[key]) for key, value in net.items()):
        return Evidence(EvidenceKind.ZERO_RISK, None, tuple(sorted({f[4] for f in flows})))
    return None


def _funding_sources(c: SccCandidate, index: TransactionIndex, first_move: ChainPos):
    """source -> {member: [tx_hash]} for plain transfers into members before the window."""
    sources: dict[Address, dict[Address, list[str]]] = defaultdict(lambda: defaultdict(list))
    for r in _member_records(c, index):
        if r.recipient in c.members and _is_value_move(r) and r.chain_pos < first_move:
            sources[r.sender][r.recipient].append(r.tx_hash)
    return sources


def _exit_sinks(c: SccCandidate, index: TransactionIndex, last_move: ChainPos):
    """sink -> {member: [tx_hash]} for plain transfers out of members after the window."""
    sinks: dict[Address, dict[Address, list[str]]] = defaultdict(lambda: defaultdict(list))
    for r in _member_records(c, index):
        if r.sender in c.members and _is_value_move(r) and r.chain_pos > last_move:
            sinks[r.recipient][r.sender].append(r.tx_hash)
    return sinks


def _pick(peers: dict, internal_kind, external_kind, c, registry, oracle) -> list[Evidence]:
    internal, external = [], []
    for account, linked in peers.items():
        others = {m: hashes for m, hashes in linked.items() if m != account}
        if account in c.members:
            if others:
                internal.append((account, others))
        elif (len(others) >= 2 and not registry.is_infrastructure(account)
              and not oracle.has_code(account)):
            external.append((account, others))

    found = []
    for kind, pool in ((internal_kind, internal), (external_kind, external)):
        if pool:
            # the account tied to the most members wins; ties go to the lowest address
            account, linked = min(pool, key=lambda p: (-len(p[1]), p[0]))
            hashes = tuple(sorted({h for hs in linked.values() for h in hs}))
            found.append(Evidence(kind, account, hashes))
    return found


def find_common_funders(c: SccCandidate, index: TransactionIndex, registry: LabelRegistry,
                        oracle: CodePresenceOracle = StaticCodeOracle()) -> list[Evidence]:
    return _pick(_funding_sources(c, index, c.first_move),
                 EvidenceKind.COMMON_FUNDER_INTERNAL, EvidenceKind.COMMON_FUNDER_EXTERNAL,
                 c, registry, oracle)


def find_common_funder(c: SccCandidate, index: TransactionIndex, registry: LabelRegistry,
                       oracle: CodePresenceOracle = StaticCodeOracle()) -> Evidence | None:
    """Internal funder if any member funds another member, else an external funder of >= 2."""
    found = find_common_funders(c, index, registry, oracle)
    return found[0] if found else None


def find_common_exits(c: SccCandidate, index: TransactionIndex, registry: LabelRegistry,
                      oracle: CodePresenceOracle = StaticCodeOracle()) -> list[Evidence]:
    return _pick(_exit_sinks(c, index, c.last_move),
                 EvidenceKind.COMMON_EXIT_INTERNAL, EvidenceKind.COMMON_EXIT_EXTERNAL,
                 c, registry, oracle)


def find_common_exit(c: SccCandidate, index: TransactionIndex, registry: LabelRegistry,
                     oracle: CodePresenceOracle = StaticCodeOracle()) -> Evidence | None:
    found = find_common_exits(c, index, registry, oracle)
    return found[0] if found else None


def check_self_trade(c: SccCandidate) -> Evidence | None:
    hashes = tuple(sorted({e.tx_hash for e in c.internal_edges if e.is_self_loop}))
    return Evidence(EvidenceKind.SELF_TRADE, None, hashes) if hashes else None


def exchange_funders(c: SccCandidate, index: TransactionIndex, registry: LabelRegistry) -> tuple[Address, ...]:
    """Service accounts that funded >= 2 members; reported, never used as evidence."""
    sources = _funding_sources(c, index, c.first_move)
    return tuple(sorted(a for a, linked in sources.items()
                        if registry.is_service(a) and len(linked) >= 2))


@dataclass(frozen=True)
class Assessment:
    candidate: SccCandidate
    evidence: tuple[Evidence, ...] = ()
    exchange_funders: tuple[Address, ...] = ()


def assess(c: SccCandidate, index: TransactionIndex, registry: LabelRegistry,
           oracle: CodePresenceOracle = StaticCodeOracle(),
           tolerance: ZeroRiskTolerance = ZeroRiskTolerance()) -> Assessment:
    """Run the four direct checks on one candidate."""
    evidence = [check_zero_risk(c, index, tolerance), check_self_trade(c)]
    evidence += find_common_funders(c, index, registry, oracle)
    evidence += find_common_exits(c, index, registry, oracle)
    found = tuple(sorted((e for e in evidence if e is not None), key=lambda e: KIND_ORDER[e.kind]))
    return Assessment(c, found, exchange_funders(c, index, registry))


def propagate_confirmed(assessments: Sequence[Assessment], confirmed: set[frozenset[Address]]) -> list[Assessment]:
    """Unconfirmed candidates over exactly a confirmed account set inherit the verdict.

    Single pass: propagated verdicts never seed further propagation.
    """
    out = []
    for a in assessments:
        if not a.evidence and a.candidate.members in confirmed:
            a = Assessment(a.candidate, (Evidence(EvidenceKind.PROPAGATED),), a.exchange_funders)
        out.append(a)
    return out


@dataclass(frozen=True)
class WashTradeEvent:
    candidate: SccCandidate
    evidence: tuple[Evidence, ...]
    volume_native: dict[str, Decimal] = field(default_factory=dict)

    def __post_init__(self):
        if not self.evidence:
            raise ValueError("a wash trade event needs evidence")

    @classmethod
    def from_assessment(cls, a: Assessment) -> "WashTradeEvent":
        volume: dict[str, Decimal] = defaultdict(Decimal)
        for e in a.candidate.internal_edges:
            volume[str(e.payment.asset)] += e.payment.amount
        return cls(a.candidate, a.evidence, dict(sorted(volume.items())))

    @property
    def nft(self):
        return self.candidate.nft

    @property
    def members(self) -> frozenset[Address]:
        return self.candidate.members

    @property
    def window(self) -> tuple[ChainPos, ChainPos]:
        return (self.candidate.first_move, self.candidate.last_move)

    @property
    def kinds(self) -> tuple[EvidenceKind, ...]:
        return tuple(e.kind for e in self.evidence)

    @property
    def families(self) -> frozenset[str]:
        return frozenset(k.family for k in self.kinds)

    @property
    def key(self):
        return self.candidate.key


@dataclass(frozen=True)
class DetectionResult:
    events: list[WashTradeEvent]
    unconfirmed: list[SccCandidate]
    overlap: dict[str, int]
    kind_counts: dict[str, int]
    exchange_funded_unconfirmed: dict[str, dict[str, int]]

    @property
    def confirmed_count(self) -> int:
        return len(self.events)


def overlap_cell(families: Iterable[str]) -> str:
    return "+".join(f for f in FAMILIES if f in set(families))


def _kind_counts(events: Sequence[WashTradeEvent]) -> dict[str, int]:
    counts = Counter()
    for event in events:
        kinds = set(event.kinds)
        for family in ("common_funder", "common_exit"):
            internal = EvidenceKind(f"{family}_internal")
            external = EvidenceKind(f"{family}_external")
            # internal wins when both were found
            if internal in kinds:
                counts[internal.value] += 1
            elif external in kinds:
                counts[external.value] += 1
        for kind in (EvidenceKind.ZERO_RISK, EvidenceKind.SELF_TRADE, EvidenceKind.PROPAGATED):
            if kind in kinds:
                counts[kind.value] += 1
    return {k.value: counts.get(k.value, 0) for k in EvidenceKind}


def summarize(assessments: Sequence[Assessment], registry: LabelRegistry) -> DetectionResult:
    """Propagate, build events and the overlap tables. Deterministic in any input order."""
    assessments = sorted(assessments, key=lambda a: a.candidate.key)
    confirmed = {a.candidate.members for a in assessments if a.evidence}
    assessments = propagate_confirmed(assessments, confirmed)

    events = [WashTradeEvent.from_assessment(a) for a in assessments if a.evidence]
    unconfirmed = [a.candidate for a in assessments if not a.evidence]

    overlap = Counter(overlap_cell(e.families) for e in events)
    exchange = defaultdict(lambda: {"candidates": 0, "confirmed": 0})
    for a in assessments:
        for funder in {registry.service_name(f) for f in a.exchange_funders}:
            exchange[funder]["candidates"] += 1
            exchange[funder]["confirmed"] += bool(a.evidence)

    logger.info("confirmed %d of %d candidates", len(events), len(assessments))
    return DetectionResult(
        events=events,
        unconfirmed=unconfirmed,
        overlap=dict(sorted(overlap.items())),
        kind_counts=_kind_counts(events),
        exchange_funded_unconfirmed={k: exchange[k] for k in sorted(exchange)},
    )


def confirm_all(candidates: Iterable[SccCandidate], index: TransactionIndex, registry: LabelRegistry,
                oracle: CodePresenceOracle = StaticCodeOracle(),
                tolerance: ZeroRiskTolerance = ZeroRiskTolerance()) -> DetectionResult:
    return summarize([assess(c, index, registry, oracle, tolerance) for c in candidates], registry)
