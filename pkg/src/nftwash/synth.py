"""Seeded synthetic chains with planted wash trades and known ground truth.

Every scenario gets fresh accounts, so scenarios never interfere with each
other; shared infrastructure (marketplaces, the exchange, the escrow) is
labeled and filtered out by the pipeline.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import timedelta
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .config import DAY_S, SYNTH_FILES
from .detect import EvidenceKind, overlap_cell
from .ingest import dump_transaction, dump_transfer
from .models import (NATIVE, NULL_ADDRESS, ZERO_PAYMENT, Address, Asset, NftId, Payment,
                     TransactionRecord, TransferEvent, TxKind, utc_day)

logger = logging.getLogger(__name__)

# ------------------- CONFIG -------------------
GENESIS_TS = 1_640_995_200          # 2022-01-01 00:00 UTC
BASE_BLOCK = 13_916_166
BLOCK_S = 12
BLOCKS_PER_DAY = DAY_S // BLOCK_S
HORIZON_DAYS = 120                  # scenarios start somewhere in this range
N_COLLECTIONS = 6
TREASURY_FEE = Decimal("0.02")
RESALE_ODDS = 0.5
CLAIM_ODDS = 0.8
EXCHANGE_FUNDING_ODDS = 0.5
# ----------------------------------------------


class ScenarioKind(str, Enum):
    ROUND_TRIP = "round_trip"
    CYCLE_N = "cycle_n"
    SELF_TRADE = "self_trade"
    FUNDED_EXTERNAL = "funded_external"
    FUNDED_INTERNAL = "funded_internal"
    EXIT_EXTERNAL = "exit_external"
    EXIT_INTERNAL = "exit_internal"
    ZERO_RISK = "zero_risk"
    NOISE_LEGIT = "noise_legit"
    NOISE_ZERO_VOLUME = "noise_zero_volume"

    @property
    def is_wash(self) -> bool:
        return not self.value.startswith("noise_")


WASH_KINDS = tuple(k for k in ScenarioKind if k.is_wash)
DEFAULT_MIX = {**{k: 5 for k in WASH_KINDS}, ScenarioKind.NOISE_LEGIT: 50, ScenarioKind.NOISE_ZERO_VOLUME: 20}

EXPECTED_EVIDENCE = {
    ScenarioKind.ROUND_TRIP: EvidenceKind.ZERO_RISK,
    ScenarioKind.CYCLE_N: EvidenceKind.ZERO_RISK,
    ScenarioKind.SELF_TRADE: EvidenceKind.SELF_TRADE,
    ScenarioKind.FUNDED_EXTERNAL: EvidenceKind.COMMON_FUNDER_EXTERNAL,
    ScenarioKind.FUNDED_INTERNAL: EvidenceKind.COMMON_FUNDER_INTERNAL,
    ScenarioKind.EXIT_EXTERNAL: EvidenceKind.COMMON_EXIT_EXTERNAL,
    ScenarioKind.EXIT_INTERNAL: EvidenceKind.COMMON_EXIT_INTERNAL,
    ScenarioKind.ZERO_RISK: EvidenceKind.ZERO_RISK,
}
CYCLE_PATTERNS = {3: "P2", 4: "P5", 5: "P10"}


def parse_mix(text: str) -> dict[ScenarioKind, int]:
    """'round_trip=5,noise_legit=50' -> counts; kinds not named get 0."""
    mix = {k: 0 for k in ScenarioKind}
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, sep, count = part.partition("=")
        if not sep:
            raise ValueError(f"expected kind=count, got {part!r}")
        try:
            kind = ScenarioKind(name.strip())
        except ValueError:
            raise ValueError(f"unknown scenario kind {name.strip()!r}") from None
        n = int(count)
        if n < 0:
            raise ValueError(f"{kind.value}: count must be >= 0")
        mix[kind] = n
    return mix


@dataclass(frozen=True)
class Market:
    name: str
    contract: Address
    distributor: Address | None = None
    treasury: Address | None = None


@dataclass
class SynthScenario:
    kind: ScenarioKind
    nft: NftId
    members: tuple[Address, ...] = ()
    marketplace: str | None = None
    pattern: str | None = None
    params: dict = field(default_factory=dict)

    @property
    def evidence(self) -> tuple[str, ...]:
        kind = EXPECTED_EVIDENCE.get(self.kind)
        return (kind.value,) if kind else ()

    def truth(self) -> dict:
        row = {"kind": self.kind.value, "contract": str(self.nft.contract), "token_id": str(self.nft.token_id),
               **self.params}
        if self.kind.is_wash:
            row.update(members=sorted(str(m) for m in self.members), marketplace=self.marketplace,
                       pattern=self.pattern, evidence=list(self.evidence))
        return row


class SynthChain:
    """Mutable recorder of synthetic transfers and transactions."""

    def __init__(self, seed: int, extras: bool = True):
        self.rng = np.random.default_rng(seed)
        self.extras = extras
        self.transfers: list[TransferEvent] = []
        self.transactions: list[TransactionRecord] = []
        self._next_index: dict[int, int] = defaultdict(int)
        self._token_ids: dict[Address, int] = defaultdict(int)
        self.last_block = BASE_BLOCK

        self.opensea = Market("OpenSea", self.address())
        self.looksrare = Market("LooksRare", self.address(), self.address(), self.address())
        self.reward_token = Asset(self.address())
        self.exchange = self.address()
        self.escrow = self.address()
        self.collections = sorted(self.address() for _ in range(N_COLLECTIONS))
        self.pools: list[Address] = []

    # -- randomness --

    def address(self) -> Address:
        return Address(self.rng.bytes(20))

    def tx_hash(self) -> str:
        return "0x" + self.rng.bytes(32).hex()

    def price(self) -> Decimal:
        return Decimal(int(self.rng.integers(5, 5_000))).scaleb(-2)

    def skewed(self, price: Decimal) -> Decimal:
        """`price` moved up by 10 to 50 percent."""
        return price * (100 + int(self.rng.integers(10, 51))) / 100

    def gas(self) -> Decimal:
        return Decimal(int(self.rng.integers(1_000, 50_000))).scaleb(-6)

    def market(self) -> Market:
        return self.looksrare if self.rng.random() < 0.5 else self.opensea

    def new_nft(self) -> NftId:
        contract = self.collections[int(self.rng.integers(len(self.collections)))]
        self._token_ids[contract] += 1
        return NftId(contract, self._token_ids[contract])

    def start(self) -> int:
        return BASE_BLOCK + int(self.rng.integers(0, HORIZON_DAYS * BLOCKS_PER_DAY))

    def step(self, block: int) -> int:
        if self.rng.random() < 0.8:
            return block + int(self.rng.integers(1, BLOCKS_PER_DAY))
        return block + int(self.rng.integers(BLOCKS_PER_DAY, 30 * BLOCKS_PER_DAY))

    # -- records --

    def _position(self, block: int) -> tuple[int, int, int]:
        index = self._next_index[block]
        self._next_index[block] += 1
        self.last_block = max(self.last_block, block)
        return block, index, GENESIS_TS + (block - BASE_BLOCK) * BLOCK_S

    def _tx(self, h, pos, sender, recipient, payment, gas, kind):
        block, index, ts = pos
        self.transactions.append(TransactionRecord(h, block, index, ts, sender, recipient, payment, gas, kind))

    def sale(self, block: int, nft: NftId, seller: Address, buyer: Address, amount: Decimal,
             market: Market) -> int:
        """One marketplace transaction: the buyer pays through the market contract, the seller pays its fee."""
        pos, h, gas = self._position(block), self.tx_hash(), self.gas()
        payment = Payment(NATIVE, amount)
        self.transfers.append(TransferEvent(nft, seller, buyer, pos[0], h, pos[1], pos[2],
                                            market.contract, payment))
        self._tx(h, pos, buyer, market.contract, payment, gas, TxKind.CONTRACT_CALL)
        if market.treasury is not None:
            self._tx(h, pos, seller, market.treasury, Payment(NATIVE, amount * TREASURY_FEE), gas,
                     TxKind.VALUE_TRANSFER)
        return self.step(block)

    def move(self, block: int, nft: NftId, seller: Address, buyer: Address) -> int:
        """Unpaid transfer straight through the collection contract."""
        pos, h = self._position(block), self.tx_hash()
        self.transfers.append(TransferEvent(nft, seller, buyer, pos[0], h, pos[1], pos[2],
                                            nft.contract, ZERO_PAYMENT))
        caller = buyer if seller.is_null else seller
        self._tx(h, pos, caller, nft.contract, ZERO_PAYMENT, self.gas(), TxKind.CONTRACT_CALL)
        return self.step(block)

    def mint(self, block: int, nft: NftId, to: Address) -> int:
        return self.move(block, nft, NULL_ADDRESS, to)

    def send(self, block: int, sender: Address, recipient: Address, amount: Decimal) -> int:
        pos = self._position(block)
        self._tx(self.tx_hash(), pos, sender, recipient, Payment(NATIVE, amount), self.gas(),
                 TxKind.VALUE_TRANSFER)
        return self.step(block)

    def claim(self, block: int, member: Address, market: Market) -> tuple[int, Decimal]:
        tokens = Decimal(int(self.rng.integers(10_000, 10_000_000))).scaleb(-2)
        pos = self._position(block)
        self._tx(self.tx_hash(), pos, member, market.distributor, Payment(self.reward_token, tokens),
                 self.gas(), TxKind.CONTRACT_CALL)
        return self.step(block), tokens

    # -- scenario scaffolding --

    def acquire(self, block: int, nft: NftId, holder: Address, market: Market) -> tuple[int, dict]:
        if not self.extras:
            return block, {}
        if self.rng.random() < 0.5:
            return self.mint(block, nft, holder), {"acquired": "mint"}
        seller = self.address()
        block = self.mint(block, nft, seller)
        return self.sale(block, nft, seller, holder, self.price(), market), {"acquired": "purchase"}

    def aftermath(self, block: int, sc: SynthScenario, holder: Address, market: Market,
                  last_price: Decimal) -> int:
        """Optional resale to a fresh buyer, then reward claims on reward marketplaces."""
        if not self.extras:
            return block
        sc.params["resold"] = bool(self.rng.random() < RESALE_ODDS)
        if sc.params["resold"]:
            block = self.sale(block, sc.nft, holder, self.address(), self.skewed(last_price), market)
        claims = 0
        if market.distributor is not None:
            for member in sc.members:
                if self.rng.random() < CLAIM_ODDS:
                    block, _ = self.claim(block, member, market)
                    claims += 1
        sc.params["claims"] = claims
        return block


# ------------------- scenario builders -------------------

def _two_party(chain: SynthChain, kind: ScenarioKind, before=None, after=None) -> SynthScenario:
    """A and B trade the NFT back and forth at unbalanced prices."""
    nft, market = chain.new_nft(), chain.market()
    a, b = chain.address(), chain.address()
    sc = SynthScenario(kind, nft, (a, b), market.name, "P1")
    block, info = chain.acquire(chain.start(), nft, a, market)
    sc.params.update(info)
    if before:
        block = before(chain, block, a, b)
    price = chain.price()
    back = chain.skewed(price)
    block = chain.sale(block, nft, a, b, price, market)
    block = chain.sale(block, nft, b, a, back, market)
    if after:
        block = after(chain, block, a, b)
    chain.aftermath(block, sc, a, market, back)
    return sc


def _round_trip(chain: SynthChain) -> SynthScenario:
    nft, market = chain.new_nft(), chain.market()
    a, b = chain.address(), chain.address()
    sc = SynthScenario(ScenarioKind.ROUND_TRIP, nft, (a, b), market.name, "P1")
    block, info = chain.acquire(chain.start(), nft, a, market)
    sc.params.update(info)
    price = chain.price()
    block = chain.sale(block, nft, a, b, price, market)
    block = chain.sale(block, nft, b, a, price, market)
    chain.aftermath(block, sc, a, market, price)
    return sc


def _cycle(chain: SynthChain) -> SynthScenario:
    n = int(chain.rng.integers(3, 6))
    nft, market = chain.new_nft(), chain.market()
    members = tuple(chain.address() for _ in range(n))
    sc = SynthScenario(ScenarioKind.CYCLE_N, nft, members, market.name, CYCLE_PATTERNS[n], {"n": n})
    block, info = chain.acquire(chain.start(), nft, members[0], market)
    sc.params.update(info)
    price = chain.price()
    for i in range(n):
        block = chain.sale(block, nft, members[i], members[(i + 1) % n], price, market)
    chain.aftermath(block, sc, members[0], market, price)
    return sc


def _self_trade(chain: SynthChain) -> SynthScenario:
    nft, market = chain.new_nft(), chain.market()
    a = chain.address()
    sc = SynthScenario(ScenarioKind.SELF_TRADE, nft, (a,), market.name, "Other")
    block, info = chain.acquire(chain.start(), nft, a, market)
    sc.params.update(info)
    price = chain.price()
    block = chain.sale(block, nft, a, a, price, market)
    chain.aftermath(block, sc, a, market, price)
    return sc


def _funded_external(chain: SynthChain) -> SynthScenario:
    funder = chain.address()

    def fund(ch, block, a, b):
        block = ch.send(block, funder, a, ch.price())
        return ch.send(block, funder, b, ch.price())

    return _two_party(chain, ScenarioKind.FUNDED_EXTERNAL, before=fund)


def _funded_internal(chain: SynthChain) -> SynthScenario:
    return _two_party(chain, ScenarioKind.FUNDED_INTERNAL,
                      before=lambda ch, block, a, b: ch.send(block, a, b, ch.price()))


def _exit_external(chain: SynthChain) -> SynthScenario:
    sink = chain.address()

    def leave(ch, block, a, b):
        block = ch.send(block, a, sink, ch.price())
        return ch.send(block, b, sink, ch.price())

    return _two_party(chain, ScenarioKind.EXIT_EXTERNAL, after=leave)


def _exit_internal(chain: SynthChain) -> SynthScenario:
    return _two_party(chain, ScenarioKind.EXIT_INTERNAL,
                      after=lambda ch, block, a, b: ch.send(block, b, a, ch.price()))


def _zero_risk(chain: SynthChain) -> SynthScenario:
    nft, market = chain.new_nft(), chain.market()
    a, b = chain.address(), chain.address()
    sc = SynthScenario(ScenarioKind.ZERO_RISK, nft, (a, b), market.name, "P1")
    block, info = chain.acquire(chain.start(), nft, a, market)
    sc.params.update(info)
    if chain.extras:
        sc.params["exchange_funded"] = bool(chain.rng.random() < EXCHANGE_FUNDING_ODDS)
        if sc.params["exchange_funded"]:
            block = chain.send(block, chain.exchange, a, chain.price())
            block = chain.send(block, chain.exchange, b, chain.price())
    price = chain.price()
    for seller, buyer, amount in ((a, b, price), (b, a, 2 * price), (a, b, 2 * price), (b, a, price)):
        block = chain.sale(block, nft, seller, buyer, amount, market)
    chain.aftermath(block, sc, a, market, price)
    return sc


def _noise_legit(chain: SynthChain) -> SynthScenario:
    nft, market = chain.new_nft(), chain.market()
    s1, s2, s3 = chain.address(), chain.address(), chain.address()
    block = chain.mint(chain.start(), nft, s1)
    variant = str(chain.rng.choice(["chain", "chain", "chain", "escrow", "pool"]))
    if variant == "chain":
        block = chain.sale(block, nft, s1, s2, chain.price(), market)
        chain.sale(block, nft, s2, s3, chain.price(), market)
    elif variant == "escrow":
        # only closes a cycle through the escrow service
        price = chain.price()
        block = chain.sale(block, nft, s1, chain.escrow, price, market)
        block = chain.sale(block, nft, chain.escrow, s2, price, market)
        chain.sale(block, nft, s2, s1, chain.price(), market)
    else:
        pool = chain.address()
        chain.pools.append(pool)
        block = chain.sale(block, nft, s1, pool, chain.price(), Market("pool", pool))
        chain.sale(block, nft, pool, s1, chain.price(), Market("pool", pool))
    return SynthScenario(ScenarioKind.NOISE_LEGIT, nft, params={"variant": variant})


def _noise_zero_volume(chain: SynthChain) -> SynthScenario:
    nft = chain.new_nft()
    a, b = chain.address(), chain.address()
    block = chain.mint(chain.start(), nft, a)
    block = chain.move(block, nft, a, b)
    chain.move(block, nft, b, a)
    return SynthScenario(ScenarioKind.NOISE_ZERO_VOLUME, nft)


BUILDERS = {
    ScenarioKind.ROUND_TRIP: _round_trip,
    ScenarioKind.CYCLE_N: _cycle,
    ScenarioKind.SELF_TRADE: _self_trade,
    ScenarioKind.FUNDED_EXTERNAL: _funded_external,
    ScenarioKind.FUNDED_INTERNAL: _funded_internal,
    ScenarioKind.EXIT_EXTERNAL: _exit_external,
    ScenarioKind.EXIT_INTERNAL: _exit_internal,
    ScenarioKind.ZERO_RISK: _zero_risk,
    ScenarioKind.NOISE_LEGIT: _noise_legit,
    ScenarioKind.NOISE_ZERO_VOLUME: _noise_zero_volume,
}


# ------------------- dataset -------------------

@dataclass
class SynthDataset:
    seed: int
    scenarios: list[SynthScenario]
    transfers: list[TransferEvent]
    transactions: list[TransactionRecord]
    labels: pd.DataFrame
    prices: pd.DataFrame
    marketplace_totals: pd.DataFrame
    contracts: list[Address]
    compliance: pd.DataFrame

    @property
    def wash(self) -> list[SynthScenario]:
        return [s for s in self.scenarios if s.kind.is_wash]

    def expected(self) -> dict:
        """What a correct pipeline run over this dataset must report."""
        wash = self.wash
        variants = Counter(s.params.get("variant") for s in self.scenarios if s.kind is ScenarioKind.NOISE_LEGIT)
        zero_volume = sum(1 for s in self.scenarios if s.kind is ScenarioKind.NOISE_ZERO_VOLUME)
        raw = len(wash) + variants["escrow"] + variants["pool"] + zero_volume
        evidence = Counter(s.evidence[0] for s in wash)
        patterns = Counter(s.pattern for s in wash)
        funded = sum(1 for s in wash if s.params.get("exchange_funded"))
        # one component per suspicious NFT, by construction
        stages = {
            "raw": raw,
            "after_service_removal": raw - variants["escrow"],
            "after_contract_removal": raw - variants["escrow"] - variants["pool"],
            "after_zero_volume_drop": len(wash),
        }
        return {
            "confirmed": len(wash),
            "cleaning": {stage: {"nfts": n, "components": n} for stage, n in stages.items()},
            "overlap": dict(sorted(Counter(overlap_cell([EvidenceKind(s.evidence[0]).family])
                                           for s in wash).items())),
            "kind_counts": {k.value: evidence.get(k.value, 0) for k in EvidenceKind},
            "patterns": dict(sorted(patterns.items())),
            "exchange_funded": {"Binance": {"candidates": funded, "confirmed": funded}} if funded else {},
        }

    def ground_truth(self) -> dict:
        return {
            "seed": self.seed,
            "events": [s.truth() for s in self.scenarios if s.kind.is_wash],
            "noise": [s.truth() for s in self.scenarios if not s.kind.is_wash],
            "expected": self.expected(),
        }

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {key: out / name for key, name in SYNTH_FILES.items()}

        _write_jsonl(paths["transfers"], (dump_transfer(t) for t in self.transfers))
        _write_jsonl(paths["transactions"], (dump_transaction(r) for r in self.transactions))
        for key in ("labels", "prices", "marketplace_totals", "compliance"):
            getattr(self, key).to_csv(paths[key], index=False, lineterminator="\n")
        paths["contracts"].write_text("address\n" + "".join(f"{c}\n" for c in self.contracts),
                                      encoding="utf-8")
        paths["ground_truth"].write_text(json.dumps(self.ground_truth(), sort_keys=True, indent=2) + "\n",
                                         encoding="utf-8")
        return paths


def _write_jsonl(path: Path, rows) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _price_walk(rng, start: float, days: int, sigma: float) -> list[Decimal]:
    steps = np.exp(rng.normal(0.0, sigma, size=days))
    path = start * np.cumprod(steps)
    return [Decimal(f"{max(p, 0.01):.2f}") for p in path]


def _price_frame(chain: SynthChain) -> pd.DataFrame:
    first = utc_day(GENESIS_TS)
    last = utc_day(GENESIS_TS + (chain.last_block - BASE_BLOCK) * BLOCK_S)
    days = (last - first).days + 1
    rows = []
    for asset, start, sigma in (("ETH", 3000.0, 0.03), (str(chain.reward_token), 3.0, 0.05)):
        for i, usd in enumerate(_price_walk(chain.rng, start, days, sigma)):
            rows.append({"asset": asset, "date": (first + timedelta(days=i)).isoformat(), "usd": str(usd)})
    return pd.DataFrame(rows, columns=["asset", "date", "usd"])


def _totals_frame(chain: SynthChain, prices: pd.DataFrame) -> pd.DataFrame:
    eth = {row.date: Decimal(row.usd) for row in prices.itertuples() if row.asset == "ETH"}
    volume = defaultdict(Decimal)
    for market in (chain.opensea, chain.looksrare):
        for t in chain.transfers:
            if t.interacted_contract == market.contract and t.payment.is_paid:
                volume[market.name] += t.payment.amount * eth[utc_day(t.timestamp).isoformat()]
    rows = []
    for name in sorted(volume):
        # the rest of the market trades far more than the planted activity
        total = (volume[name] * int(chain.rng.integers(3, 9))).quantize(Decimal("0.01"))
        rows.append({"marketplace": name, "total_usd_volume": str(total)})
    return pd.DataFrame(rows, columns=["marketplace", "total_usd_volume"])


def _label_frame(chain: SynthChain) -> pd.DataFrame:
    rows = [
        (NULL_ADDRESS, "service", "null"),
        (chain.exchange, "service", "Binance"),
        (chain.escrow, "service", "Escrow"),
        (chain.opensea.contract, "marketplace", chain.opensea.name),
        (chain.looksrare.contract, "marketplace", chain.looksrare.name),
        (chain.looksrare.distributor, "reward_distributor", chain.looksrare.name),
        (chain.looksrare.treasury, "treasury", chain.looksrare.name),
    ]
    return pd.DataFrame([{"address": str(a), "category": c, "name": n} for a, c, n in rows],
                        columns=["address", "category", "name"])


def generate(seed: int, mix: Mapping[ScenarioKind, int] | None = None, extras: bool = True) -> SynthDataset:
    """Build a dataset; the same seed and mix always give the same records.

    `extras` adds acquisitions, resales, reward claims and exchange funding
    around the planted trades; without it each scenario holds only its core.
    """
    mix = DEFAULT_MIX if mix is None else mix
    chain = SynthChain(seed, extras)
    scenarios = []
    for kind in ScenarioKind:
        for _ in range(int(mix.get(kind, 0))):
            scenarios.append(BUILDERS[kind](chain))

    prices = _price_frame(chain)
    contracts = sorted({*chain.collections, chain.opensea.contract, chain.looksrare.contract,
                        chain.looksrare.distributor, chain.reward_token.token, *chain.pools})
    compliance = pd.DataFrame([{"contract": str(c), "supports_erc721": "true"} for c in chain.collections],
                              columns=["contract", "supports_erc721"])
    dataset = SynthDataset(
        seed=seed,
        scenarios=scenarios,
        transfers=sorted(chain.transfers, key=lambda t: t.sort_key),
        transactions=sorted(chain.transactions, key=lambda r: r.sort_key),
        labels=_label_frame(chain),
        prices=prices,
        marketplace_totals=_totals_frame(chain, prices),
        contracts=contracts,
        compliance=compliance,
    )
    logger.info("generated %d scenarios, %d transfers, %d transactions",
                len(scenarios), len(dataset.transfers), len(dataset.transactions))
    return dataset
