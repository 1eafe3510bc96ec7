"""End-to-end run: load, clean, confirm, characterize, price, write one JSON report."""

from __future__ import annotations

import json
import logging
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import date
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from tqdm import tqdm

from .analytics import (account_count_distribution, acquisition_summary, characterize,
                        collection_breakdown, legit_volume, lifetime_cdf, marketplace_breakdown,
                        off_market_share, pattern_histogram, serial_stats)
from .client import InterfaceClient, NodeCodeOracle, RpcClient
from .config import CHUNK_SIZE, RunConfig
from .detect import (Assessment, DetectionResult, TransactionIndex, WashTradeEvent, ZeroRiskTolerance,
                     assess, summarize)
from .errors import ClientUnavailable, ConfigError, InvariantViolation
from .filters import drop_zero_volume_candidates, remove_contract_accounts, remove_service_accounts
from .graph import build_graph, find_sccs, group_by_nft
from .ingest import (check_erc721_compliance, decode_logs, load_code_oracle, load_compliance_fixtures,
                     load_labels, load_marketplace_totals, load_prices, load_raw_logs, load_transactions,
                     load_transfers)
from .models import (Address, Asset, CodePresenceOracle, LabelRegistry, NftId, PriceTable, StaticCodeOracle,
                     TransferEvent)
from .profit import (extract_claims, flag_shared_claimants, profit_tables, resale_balance,
                     reward_balance)

logger = logging.getLogger(__name__)

STAGES = ("raw", "after_service_removal", "after_contract_removal", "after_zero_volume_drop")


# ------------------- per-NFT work -------------------

@dataclass(frozen=True)
class NftOutcome:
    nft: NftId
    components: tuple[int, ...]                  # per stage
    accounts: tuple[frozenset[Address], ...]     # per stage
    assessments: tuple[Assessment, ...]


def analyze_nft(nft: NftId, history: Sequence[TransferEvent], index: TransactionIndex,
                registry: LabelRegistry, oracle: CodePresenceOracle,
                tolerance: ZeroRiskTolerance) -> NftOutcome:
    """Graph, the three cleaning steps with a component count after each, then the checks."""
    graph = build_graph(nft, history)
    raw = find_sccs(graph)
    without_services = remove_service_accounts(graph, registry)
    step1 = find_sccs(without_services)
    step2 = find_sccs(remove_contract_accounts(without_services, oracle))
    step3 = drop_zero_volume_candidates(step2)
    stages = (raw, step1, step2, step3)
    return NftOutcome(
        nft=nft,
        components=tuple(len(s) for s in stages),
        accounts=tuple(frozenset().union(*(c.members for c in s)) for s in stages),
        assessments=tuple(assess(c, index, registry, oracle, tolerance) for c in step3),
    )


_shared: dict = {}


def _init_worker(registry, oracle, tolerance):
    _shared.update(registry=registry, oracle=oracle, tolerance=tolerance)


def _run_task(task) -> NftOutcome:
    nft, history, index = task
    return analyze_nft(nft, history, index, _shared["registry"], _shared["oracle"], _shared["tolerance"])


def _tasks(histories, index: TransactionIndex, registry: LabelRegistry):
    for nft, history in histories.items():
        accounts = {a for t in history for a in (t.seller, t.buyer) if not registry.is_service(a)}
        yield nft, history, index.subset(accounts=sorted(accounts), hashes=sorted({t.tx_hash for t in history}))


def analyze_all(histories: dict[NftId, list[TransferEvent]], index: TransactionIndex,
                registry: LabelRegistry, oracle: CodePresenceOracle, tolerance: ZeroRiskTolerance,
                jobs: int = 1, progress: bool = False) -> list[NftOutcome]:
    """Fan the per-NFT work out over `jobs` processes. Results come back in NFT order."""
    tasks = _tasks(histories, index, registry)
    bar = dict(total=len(histories), desc="NFTs", unit="nft", file=sys.stderr, disable=not progress)
    if jobs <= 1:
        _init_worker(registry, oracle, tolerance)
        return list(tqdm(map(_run_task, tasks), **bar))
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(registry, oracle, tolerance)) as executor:
        return list(tqdm(executor.map(_run_task, tasks, chunksize=CHUNK_SIZE), **bar))


def cleaning_counts(outcomes: Sequence[NftOutcome]) -> dict:
    """NFTs still holding a component, the components, and their distinct accounts, per stage."""
    counts = {}
    for i, stage in enumerate(STAGES):
        counts[stage] = {
            "nfts": sum(1 for o in outcomes if o.components[i]),
            "components": sum(o.components[i] for o in outcomes),
            "accounts": len(frozenset().union(*(o.accounts[i] for o in outcomes))),
        }
    return counts


# ------------------- inputs -------------------

def _interface_client(config: RunConfig) -> InterfaceClient | None:
    if config.compliance:
        return load_compliance_fixtures(config.compliance)
    if config.rpc_url:
        return RpcClient(config.rpc_url)
    return None


def compliant_collections(collections: Sequence[Address], client: InterfaceClient | None,
                          require: bool = False) -> set[Address]:
    """Collections passing the ERC-721 interface check.

    Without a reachable source the check is skipped (all kept) unless `require` is set.
    """
    if client is None:
        if require:
            raise ConfigError("compliance checking is required but no source is configured")
        logger.warning("no compliance source configured; keeping every collection")
        return set(collections)
    try:
        return {c for c in collections if check_erc721_compliance(c, client)}
    except ClientUnavailable:
        if require:
            raise
        logger.warning("compliance source unavailable; keeping every collection")
        return set(collections)


def _code_oracle(config: RunConfig) -> CodePresenceOracle:
    if config.contracts:
        return load_code_oracle(config.contracts)
    if config.rpc_url:
        return NodeCodeOracle(RpcClient(config.rpc_url))
    logger.warning("no contract list or node configured; no account counts as a contract")
    return StaticCodeOracle()


@dataclass
class Inputs:
    transfers: list[TransferEvent]
    index: TransactionIndex
    registry: LabelRegistry
    prices: PriceTable
    totals: dict[str, Decimal]
    oracle: CodePresenceOracle
    excluded: list[Address]


def load_inputs(config: RunConfig) -> Inputs:
    config.check_files()
    transfers = load_transfers(config.transfers)
    index = TransactionIndex(load_transactions(config.transactions) if config.transactions else ())
    registry = load_labels(config.labels) if config.labels else LabelRegistry()
    prices = load_prices(config.prices) if config.prices else PriceTable()
    totals = load_marketplace_totals(config.marketplace_totals) if config.marketplace_totals else {}

    collections = sorted({t.nft.contract for t in transfers})
    kept = compliant_collections(collections, _interface_client(config), config.require_compliance)
    excluded = [c for c in collections if c not in kept]
    if excluded:
        logger.info("dropping %d non-compliant collections", len(excluded))
        transfers = [t for t in transfers if t.nft.contract in kept]
    return Inputs(transfers, index, registry, prices, totals, _code_oracle(config), excluded)


def check_inputs(config: RunConfig, logs=None) -> dict:
    """Load every configured file and summarize; schema problems raise."""
    config.check_files()
    summary = {"transfers": len(load_transfers(config.transfers))}
    if config.transactions:
        summary["transactions"] = len(load_transactions(config.transactions))
    if config.labels:
        registry = load_labels(config.labels)
        summary["labels"] = {
            "service": len(registry.service_accounts),
            "marketplace": len(registry.marketplaces),
            "reward_distributor": len(registry.reward_distributors),
            "treasury": len(registry.treasuries),
        }
    if config.prices:
        summary["prices"] = len(load_prices(config.prices).entries)
    if config.marketplace_totals:
        summary["marketplace_totals"] = len(load_marketplace_totals(config.marketplace_totals))
    if config.compliance:
        summary["compliance"] = len(load_compliance_fixtures(config.compliance).answers)
    if config.contracts:
        summary["contracts"] = len(load_code_oracle(config.contracts).contracts)
    if logs:
        rejected = Counter()
        decoded = 0
        for _, result in decode_logs(load_raw_logs(logs)):
            if isinstance(result, TransferEvent):
                decoded += 1
            else:
                rejected[result.reason] += 1
        summary["logs"] = {"decoded": decoded, "rejected": dict(sorted(rejected.items()))}
    return summary


# ------------------- report -------------------

def jsonable(value):
    """Report-safe form: decimals and fractions as strings, sets sorted, enums by value."""
    if isinstance(value, dict):
        return {str(jsonable(k)): jsonable(v) for k, v in value.items()}
    if isinstance(value, (frozenset, set)):
        return sorted(jsonable(v) for v in value)
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (Decimal, Fraction, Address, NftId, Asset)):
        return str(value)
    if isinstance(value, date):
        return value.isoformat()
    return value


def _reward_marketplace(e: WashTradeEvent, registry: LabelRegistry) -> str | None:
    counts = Counter(registry.marketplace_of(edge.contract) for edge in e.candidate.internal_edges)
    rewarded = [(n, name) for name, n in counts.items() if name in registry.reward_marketplaces]
    if not rewarded:
        return None
    return min(rewarded, key=lambda p: (-p[0], p[1]))[1]


def _names(mapping, marketplace: str) -> set[Address]:
    return {a for a, name in mapping.items() if name == marketplace}


def _event_row(e: WashTradeEvent, activity, ledger, resale) -> dict:
    return {
        "nft": {"contract": e.nft.contract, "token_id": str(e.nft.token_id)},
        "members": sorted(e.members),
        "window": {"first": list(e.window[0]), "last": list(e.window[1])},
        "evidence": [{"kind": ev.kind, "witness": ev.witness, "supporting_txs": ev.supporting_txs}
                     for ev in e.evidence],
        "volume_native": e.volume_native,
        "usd_volume": activity.usd_volume,
        "lifetime_seconds": activity.lifetime_seconds,
        "acquisition_latency_seconds": activity.acquisition_latency_seconds,
        "pattern": {"id": activity.pattern.id, "node_count": activity.pattern.node_count},
        "marketplaces": activity.marketplaces,
        "reward": None if ledger is None else {
            "marketplace": ledger.marketplace,
            "verdict": ledger.verdict,
            "rewards_usd": ledger.rewards_usd,
            "nftm_fees_usd": ledger.nftm_fees_usd,
            "transaction_fees_usd": ledger.transaction_fees_usd,
            "balance_usd": ledger.balance_usd,
            "claims": [{"account": c.account, "tokens": c.tokens, "asset": c.asset, "tx_hash": c.tx_hash}
                       for c in ledger.claims],
            "shared_claimants": ledger.shared_claimants,
        },
        "resale": None if resale is None else {
            "tx_hash": resale.resale_tx_hash,
            "buy_native": resale.buy_native,
            "resell_native": resale.resell_native,
            "fees_native": resale.fees_native,
            "balance_native": resale.balance_native,
            "gross_native": resale.gross_native,
            "balance_usd": resale.balance_usd,
            "gross_usd": resale.gross_usd,
            "latency_seconds": resale.latency_seconds,
        },
    }


def build_report(inputs: Inputs, histories: dict, outcomes: Sequence[NftOutcome],
                 detection: DetectionResult) -> dict:
    events = detection.events
    registry, prices, index = inputs.registry, inputs.prices, inputs.index

    activities = [characterize(e, histories[e.nft], registry, prices) for e in events]
    shared = flag_shared_claimants(events)
    ledgers, resales = [], []
    for e in events:
        marketplace = _reward_marketplace(e, registry)
        ledger = None
        if marketplace is not None:
            claims = extract_claims(e, index, _names(registry.reward_distributors, marketplace))
            ledger = reward_balance(e, claims, index, _names(registry.treasuries, marketplace), prices,
                                    marketplace, shared.get(e.key, ()))
        ledgers.append(ledger)
        resales.append(resale_balance(e, histories[e.nft], index, set(registry.treasuries), prices))

    markets = marketplace_breakdown(events, registry, prices, inputs.totals)
    report = {
        "inputs": {
            "transfers": len(inputs.transfers),
            "transactions": len(index),
            "nfts": len(histories),
            "excluded_collections": inputs.excluded,
        },
        "cleaning": cleaning_counts(outcomes),
        "detection": {
            "confirmed": detection.confirmed_count,
            "unconfirmed": len(detection.unconfirmed),
            "overlap": detection.overlap,
            "kind_counts": detection.kind_counts,
            "exchange_funded_unconfirmed": detection.exchange_funded_unconfirmed,
        },
        "marketplaces": markets,
        "off_market_share": off_market_share(markets),
        "collections": collection_breakdown(events, prices),
        "accounts_per_event": account_count_distribution(events),
        "lifetime_cdf": lifetime_cdf([a.lifetime_seconds for a in activities]),
        "acquisition": acquisition_summary([a.acquisition_latency_seconds for a in activities]),
        "patterns": pattern_histogram(events),
        "serials": _serial_row(serial_stats(events)),
        "legit_volume": legit_volume(histories, {e.nft for e in events}, prices),
        "profit": profit_tables([l for l in ledgers if l is not None], resales),
        "events": [_event_row(*row) for row in zip(events, activities, ledgers, resales)],
    }
    check_report(report, reward_events=sum(1 for l in ledgers if l is not None))
    return jsonable(report)


def _serial_row(s) -> dict:
    return {
        "serials": len(s.serials),
        "serial_only": len(s.serial_only),
        "events_by_serials_only": s.events_by_serials_only,
        "events_with_serial": s.events_with_serial,
        "mean_activities_per_serial": s.mean_activities_per_serial,
        "most_active": None if s.most_active is None else
        {"account": s.most_active[0], "events": s.most_active[1]},
        "same_collection_serials": len(s.same_collection_serials),
        "per_collection_repeats": s.per_collection_repeats,
        "top_serial_pair": None if s.top_serial_pair is None else
        {"accounts": list(s.top_serial_pair[:2]), "events": s.top_serial_pair[2]},
    }


def check_report(report: dict, reward_events: int) -> None:
    """Internal consistency; any failure is a bug, not bad input."""
    cleaning = report["cleaning"]
    for key in ("nfts", "components"):
        values = [cleaning[s][key] for s in STAGES]
        if any(b > a for a, b in zip(values, values[1:])):
            raise InvariantViolation(f"cleaning {key} grew between stages: {values}")
    confirmed = report["detection"]["confirmed"]
    if sum(report["patterns"].values()) != confirmed:
        raise InvariantViolation("pattern histogram does not sum to the confirmed count")
    if sum(report["detection"]["overlap"].values()) != confirmed:
        raise InvariantViolation("overlap table does not sum to the confirmed count")
    verdicts = sum(row["count"] for table in report["profit"]["rewards"].values() for row in table.values())
    if verdicts != reward_events:
        raise InvariantViolation(f"{verdicts} verdicts for {reward_events} reward-marketplace events")


def render_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def run_pipeline(config: RunConfig) -> dict:
    """Execute every stage and write the report to `config.out`. Returns the report."""
    inputs = load_inputs(config)
    histories = group_by_nft(inputs.transfers)
    logger.info("analyzing %d NFTs with %d job(s)", len(histories), config.jobs)

    tolerance = ZeroRiskTolerance(config.epsilon_abs, config.epsilon_rel)
    outcomes = analyze_all(histories, inputs.index, inputs.registry, inputs.oracle, tolerance,
                           jobs=config.jobs, progress=config.progress)
    detection = summarize([a for o in outcomes for a in o.assessments], inputs.registry)
    report = build_report(inputs, histories, outcomes, detection)

    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_json(report), encoding="utf-8")
    logger.info("report written to %s", out)
    return report
