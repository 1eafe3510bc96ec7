"""What the colluders got out of it: reward tokens, or a resale to a real buyer."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from typing import Collection, Iterable, Sequence

from .analytics import acquiring_transfer
from .config import DAY_S
from .detect import TransactionIndex, WashTradeEvent
from .errors import InvariantViolation, ZeroMarketVolume
from .models import (Address, Asset, ChainPos, PriceTable, TransactionRecord, TransferEvent,
                     utc_day)

logger = logging.getLogger(__name__)


# ------------------- reward share -------------------

@dataclass(frozen=True)
class RewardQuery:
    a: Decimal   # the user's daily volume
    b: Decimal   # the marketplace's daily volume
    c: Decimal   # tokens emitted that day

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or self.c < 0:
            raise ValueError("reward query values must be >= 0")
        if self.b and self.a > self.b:
            raise ValueError(f"user volume {self.a} exceeds market volume {self.b}")


def reward_share(q: RewardQuery) -> Fraction:
    """a / b * c, exact. Shares of users whose volumes sum to b add up to c."""
    if q.b == 0:
        raise ZeroMarketVolume("marketplace volume for the day is zero")
    return Fraction(q.a) / Fraction(q.b) * Fraction(q.c)


# ------------------- claims -------------------

@dataclass(frozen=True)
class ClaimRecord:
    account: Address
    distributor: Address
    tokens: Decimal
    claim_timestamp: int
    claim_gas_fee: Decimal
    asset: Asset
    tx_hash: str
    chain_pos: ChainPos

    def __post_init__(self):
        if self.tokens < 0:
            raise ValueError("claimed tokens must be >= 0")

    @classmethod
    def from_record(cls, r: TransactionRecord) -> "ClaimRecord":
        return cls(r.sender, r.recipient, r.payment.amount, r.timestamp, r.gas_fee,
                   r.payment.asset, r.tx_hash, r.chain_pos)


def extract_claims(e: WashTradeEvent, index: TransactionIndex,
                   distributors: Collection[Address]) -> list[ClaimRecord]:
    """Each member's first call to a reward distributor after the last internal trade."""
    claims = []
    last_move = e.candidate.last_move
    for member in sorted(e.members):
        first = next((r for r in index.involving(member)
                      if r.sender == member and r.recipient in distributors and r.chain_pos > last_move),
                     None)
        if first is not None:
            claims.append(ClaimRecord.from_record(first))
    return claims


# ------------------- reward balance -------------------

class Verdict(str, Enum):
    SUCCESSFUL = "successful"
    FAILED = "failed"
    NO_CLAIM = "no_claim"


@dataclass(frozen=True)
class ProfitLedger:
    rewards_usd: Decimal
    nftm_fees_usd: Decimal
    transaction_fees_usd: Decimal
    balance_usd: Decimal
    verdict: Verdict
    marketplace: str = ""
    claims: tuple[ClaimRecord, ...] = ()
    volume_native: Decimal = Decimal(0)
    shared_claimants: frozenset[Address] = frozenset()

    def __post_init__(self):
        if self.balance_usd != self.rewards_usd - (self.nftm_fees_usd + self.transaction_fees_usd):
            raise InvariantViolation("ledger balance does not match rewards minus costs")
        expected = (Verdict.NO_CLAIM if not self.claims
                    else Verdict.SUCCESSFUL if self.balance_usd > 0 else Verdict.FAILED)
        if self.verdict is not expected:
            raise InvariantViolation(f"verdict {self.verdict.value} for balance {self.balance_usd}")

    @classmethod
    def build(cls, rewards_usd: Decimal, nftm_fees_usd: Decimal, transaction_fees_usd: Decimal,
              claims: Sequence[ClaimRecord] = (), **extra) -> "ProfitLedger":
        balance = rewards_usd - (nftm_fees_usd + transaction_fees_usd)
        if not claims:
            verdict = Verdict.NO_CLAIM
        else:
            # zero is not a gain
            verdict = Verdict.SUCCESSFUL if balance > 0 else Verdict.FAILED
        return cls(rewards_usd, nftm_fees_usd, transaction_fees_usd, balance, verdict,
                   claims=tuple(claims), **extra)


def _records_for(e: WashTradeEvent, index: TransactionIndex, hashes: Iterable[str]) -> list[TransactionRecord]:
    chosen = {}
    for member in sorted(e.members):
        for r in index.involving(member):
            chosen[id(r)] = r
    for h in hashes:
        for r in index.by_hash(h):
            chosen[id(r)] = r
    return sorted(chosen.values(), key=lambda r: r.sort_key)


def _treasury_payments(e: WashTradeEvent, index: TransactionIndex, treasuries: Collection[Address],
                       hashes: set[str], until: ChainPos) -> list[TransactionRecord]:
    """Fees paid into treasuries by members (or inside the given txs) from first_move to `until`."""
    return [r for r in _records_for(e, index, hashes)
            if r.recipient in treasuries and r.payment.amount > 0
            and e.candidate.first_move <= r.chain_pos <= until
            and (r.sender in e.members or r.tx_hash in hashes)]


def _edge_times(e: WashTradeEvent) -> dict[str, int]:
    return {edge.tx_hash: edge.timestamp for edge in e.candidate.internal_edges}


def reward_balance(e: WashTradeEvent, claims: Sequence[ClaimRecord], index: TransactionIndex,
                   treasuries: Collection[Address], prices: PriceTable, marketplace: str = "",
                   shared_claimants: Collection[Address] = ()) -> ProfitLedger:
    """Rewards claimed minus marketplace fees and gas, all in USD of the day they happened."""
    rewards = sum((prices.usd(c.asset, utc_day(c.claim_timestamp)) * c.tokens
                   for c in claims if c.tokens), Decimal(0))

    gas = Decimal(0)
    for tx_hash, ts in sorted(_edge_times(e).items()):
        gas += prices.native_usd(index.gas_fee(tx_hash), ts)
    for c in claims:
        gas += prices.native_usd(c.claim_gas_fee, c.claim_timestamp)

    edge_hashes = set(_edge_times(e))
    fees = sum((prices.usd_value(r.payment, r.timestamp)
                for r in _treasury_payments(e, index, treasuries, edge_hashes, e.candidate.last_move)),
               Decimal(0))
    logger.debug("%s: rewards %s, fees %s, gas %s", e.nft, rewards, fees, gas)

    return ProfitLedger.build(
        rewards, fees, gas, claims,
        marketplace=marketplace,
        volume_native=sum(e.volume_native.values(), Decimal(0)),
        shared_claimants=frozenset(shared_claimants),
    )


# ------------------- resale -------------------

@dataclass(frozen=True)
class ResaleLedger:
    buy_native: Decimal
    resell_native: Decimal
    fees_native: Decimal
    balance_native: Decimal
    resale_tx_hash: str
    latency_seconds: int
    minted: bool = False
    buy_usd: Decimal | None = None
    resell_usd: Decimal | None = None
    fees_usd: Decimal | None = None
    balance_usd: Decimal | None = None

    def __post_init__(self):
        if self.balance_native != self.resell_native - (self.buy_native + self.fees_native):
            raise InvariantViolation("resale balance does not match resell minus buy and fees")
        if self.balance_usd is not None and \
                self.balance_usd != self.resell_usd - (self.buy_usd + self.fees_usd):
            raise InvariantViolation("USD resale balance does not match its parts")

    @property
    def gross_native(self) -> Decimal:
        return self.resell_native - self.buy_native

    @property
    def gross_usd(self) -> Decimal | None:
        if self.resell_usd is None:
            return None
        return self.resell_usd - self.buy_usd


def find_resale(e: WashTradeEvent, history: Iterable[TransferEvent]) -> TransferEvent | None:
    """First paid transfer from a member to an outsider after the episode."""
    c = e.candidate
    return next((t for t in history
                 if t.chain_pos > c.last_move and t.seller in c.members
                 and t.buyer not in c.members and t.payment.is_paid), None)


def resale_balance(e: WashTradeEvent, history: Sequence[TransferEvent], index: TransactionIndex,
                   treasuries: Collection[Address], prices: PriceTable | None = None) -> ResaleLedger | None:
    """Resale price minus purchase price and every fee paid on the way.

    Without a price table only the native figures are filled in.
    """
    history = sorted(history, key=lambda t: t.sort_key)
    resale = find_resale(e, history)
    if resale is None:
        return None

    acquired = acquiring_transfer(e, history)
    minted = acquired is None or acquired.seller.is_null
    buy = Decimal(0) if minted else acquired.payment.amount

    times = _edge_times(e)
    times[resale.tx_hash] = resale.timestamp
    gas = {h: index.gas_fee(h) for h in sorted(times)}
    treasury = _treasury_payments(e, index, treasuries, set(times), resale.chain_pos)
    fees = sum(gas.values(), Decimal(0)) + sum((r.payment.amount for r in treasury), Decimal(0))

    usd = {}
    if prices is not None:
        buy_usd = Decimal(0) if minted else prices.usd_value(acquired.payment, acquired.timestamp)
        resell_usd = prices.usd_value(resale.payment, resale.timestamp)
        fees_usd = (sum((prices.native_usd(g, times[h]) for h, g in gas.items()), Decimal(0))
                    + sum((prices.usd_value(r.payment, r.timestamp) for r in treasury), Decimal(0)))
        usd = dict(buy_usd=buy_usd, resell_usd=resell_usd, fees_usd=fees_usd,
                   balance_usd=resell_usd - (buy_usd + fees_usd))

    return ResaleLedger(
        buy_native=buy,
        resell_native=resale.payment.amount,
        fees_native=fees,
        balance_native=resale.payment.amount - (buy + fees),
        resale_tx_hash=resale.tx_hash,
        latency_seconds=resale.timestamp - e.candidate.internal_edges[-1].timestamp,
        minted=minted,
        **usd,
    )


# ------------------- attribution -------------------

def _day_span(e: WashTradeEvent) -> tuple:
    edges = e.candidate.internal_edges
    return utc_day(edges[0].timestamp), utc_day(edges[-1].timestamp)


def flag_shared_claimants(events: Sequence[WashTradeEvent]) -> dict:
    """Event key -> members also active in another event on an overlapping UTC day."""
    by_member = defaultdict(list)
    for i, e in enumerate(events):
        for m in e.members:
            by_member[m].append(i)

    spans = [_day_span(e) for e in events]
    flagged = defaultdict(set)
    for member, idxs in by_member.items():
        for i in idxs:
            lo, hi = spans[i]
            if any(j != i and spans[j][0] <= hi and lo <= spans[j][1] for j in idxs):
                flagged[i].add(member)
    return {events[i].key: frozenset(members) for i, members in flagged.items()}


# ------------------- tables -------------------

def _stats(values: Sequence[Decimal]) -> dict:
    if not values:
        return {"min": None, "max": None, "mean": None, "total": Decimal(0)}
    total = sum(values, Decimal(0))
    return {"min": min(values), "max": max(values), "mean": total / len(values), "total": total}


def profit_tables(ledgers: Iterable[ProfitLedger], resales: Iterable[ResaleLedger | None]) -> dict:
    """Reward outcomes per marketplace and verdict, plus the resale summary."""
    grouped: dict[str, dict[Verdict, list[ProfitLedger]]] = defaultdict(lambda: defaultdict(list))
    for ledger in ledgers:
        grouped[ledger.marketplace][ledger.verdict].append(ledger)

    rewards = {}
    for marketplace in sorted(grouped):
        rewards[marketplace] = {}
        for verdict in Verdict:
            rows = grouped[marketplace][verdict]
            volume = _stats([r.volume_native for r in rows])
            balance = _stats([r.balance_usd for r in rows])
            rewards[marketplace][verdict.value] = {
                "count": len(rows),
                "volume_native": {k: volume[k] for k in ("min", "max", "mean")},
                "balance_usd": {k: balance[k] for k in ("min", "max", "mean", "total")},
                "shared_claimant_events": sum(1 for r in rows if r.shared_claimants),
            }

    resales = list(resales)
    sold = [r for r in resales if r is not None]
    resale = {
        "events": len(resales),
        "resold": len(sold),
        "not_resold": len(resales) - len(sold),
        "same_day": sum(1 for r in sold if r.latency_seconds < DAY_S),
    }
    for name, attr in (("gross_native", "gross_native"), ("net_native", "balance_native"),
                       ("gross_usd", "gross_usd"), ("net_usd", "balance_usd")):
        values = [getattr(r, attr) for r in sold if getattr(r, attr) is not None]
        gains = [v for v in values if v > 0]
        losses = [v for v in values if v <= 0]
        resale[name] = {
            "successful": len(gains),
            "failed": len(losses),
            "mean_gain": _stats(gains)["mean"],
            "mean_loss": _stats(losses)["mean"],
            "total": sum(values, Decimal(0)),
        }
    return {"rewards": rewards, "resale": resale}
