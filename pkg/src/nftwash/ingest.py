"""Decode export files into domain objects and load the lookup registries."""

from __future__ import annotations

import io
import json
import logging
import re
import warnings
from datetime import date
from decimal import Decimal, InvalidOperation
from operator import attrgetter
from pathlib import Path
from typing import Callable, Iterable, Iterator

import pandas as pd
from web3 import Web3

from .client import FixtureInterfaceClient, InterfaceClient
from .config import ERC721_INTERFACE_ID, TRANSFER_EVENT_ABI
from .errors import (ContractReverted, DuplicatePriceEntry, Erc20Shape, LogRejected,
                     MalformedTopics, SchemaError, UnsortedInput, WrongSignature)
from .models import (Address, Asset, LabelRegistry, NftId, Payment, PriceTable, RawLogRecord,
                     StaticCodeOracle, TransactionRecord, TransferEvent, TxKind, UINT256_LIMIT,
                     ZERO_PAYMENT, normalize_hash, parse_amount)

logger = logging.getLogger(__name__)

TRANSFER_SIGNATURE = "0x" + bytes(Web3.keccak(text=TRANSFER_EVENT_ABI)).hex()

TRANSFER_KEYS = ("contract", "token_id", "from", "to", "block", "tx_hash", "tx_index",
                 "timestamp", "interacted_contract", "payment_asset", "payment_amount")
TRANSACTION_KEYS = ("tx_hash", "block", "tx_index", "timestamp", "from", "to", "asset",
                    "amount", "gas_fee", "kind")
RAW_LOG_KEYS = ("address", "topics", "block", "tx_hash", "tx_index", "timestamp")
LABEL_CATEGORIES = ("service", "marketplace", "reward_distributor", "treasury")


# ------------------- raw log decoding -------------------

def _word(topic) -> str:
    text = str(topic).strip().lower()
    return text if text.startswith("0x") else "0x" + text


def parse_transfer_log(record: RawLogRecord) -> TransferEvent:
    """Decode an ERC-721 Transfer log or raise a `LogRejected` subclass."""
    topics = record.topics
    if not topics:
        raise MalformedTopics("log has no topics")
    if _word(topics[0]) != TRANSFER_SIGNATURE:
        raise WrongSignature(f"topic0 {topics[0]} is not the Transfer signature")
    if len(topics) == 3:
        # ERC-20 keeps the value in data, so only from/to are indexed
        raise Erc20Shape("Transfer with 3 topics is a fungible transfer")
    if len(topics) != 4:
        raise MalformedTopics(f"Transfer with {len(topics)} topics")

    try:
        seller = Address.from_word(topics[1])
        buyer = Address.from_word(topics[2])
        token_word = _word(topics[3])
        if len(token_word) != 66:
            raise ValueError(f"token id topic must be 32 bytes: {topics[3]!r}")
        token_id = int(token_word, 16)
    except ValueError as e:
        raise MalformedTopics(str(e)) from None

    return TransferEvent(
        nft=NftId(record.contract, token_id),
        seller=seller,
        buyer=buyer,
        block_number=record.block_number,
        tx_hash=record.tx_hash,
        tx_index=record.tx_index,
        timestamp=record.timestamp,
        interacted_contract=record.interacted_contract or record.contract,
        payment=record.payment or ZERO_PAYMENT,
        log_index=record.log_index,
    )


def decode_logs(records: Iterable[RawLogRecord]) -> Iterator[tuple[RawLogRecord, TransferEvent | LogRejected]]:
    """Every record comes back paired with either its event or the rejection."""
    for record in records:
        try:
            yield record, parse_transfer_log(record)
        except LogRejected as rejection:
            yield record, rejection


def check_erc721_compliance(contract: Address, client: InterfaceClient) -> bool:
    """True iff `contract` reports ERC-721 support. Reverts count as no.

    `ClientUnavailable` propagates: the caller decides what unverified means.
    """
    try:
        return bool(client.supports_interface(contract, ERC721_INTERFACE_ID))
    except ContractReverted as e:
        logger.debug("supportsInterface reverted on %s: %s", contract, e)
        return False


# ------------------- line-delimited JSON -------------------

def _uint(row: dict, key: str) -> int:
    value = row[key]
    if isinstance(value, bool):
        raise ValueError(f"{key} must be an unsigned integer")
    if isinstance(value, str):
        text = value.strip().lower()
        value = int(text, 16) if text.startswith("0x") else int(text)
    if not isinstance(value, int) or not 0 <= value < UINT256_LIMIT:
        raise ValueError(f"{key} must be an unsigned 256-bit integer, got {row[key]!r}")
    return value


def read_text(path) -> str:
    """Whole file as UTF-8; a bad byte is reported with its line number."""
    path = Path(path)
    raw = path.read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise SchemaError(path, raw[:e.start].count(b"\n") + 1, f"not UTF-8: {e.reason}") from None


def _text_lines(path: Path) -> Iterator[tuple[int, str]]:
    with path.open("rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                yield lineno, raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise SchemaError(path, lineno, f"not UTF-8: {e.reason}") from None


def _read_jsonl(path, required: tuple[str, ...], parse_row: Callable[[dict], object]) -> list:
    path = Path(path)
    items = []
    for lineno, line in _text_lines(path):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(path, lineno, f"invalid JSON: {e.msg}") from None
        if not isinstance(row, dict):
            raise SchemaError(path, lineno, "expected a JSON object")
        missing = [k for k in required if k not in row]
        if missing:
            raise SchemaError(path, lineno, f"missing keys: {', '.join(missing)}")
        try:
            items.append(parse_row(row))
        except (ValueError, TypeError, InvalidOperation) as e:
            raise SchemaError(path, lineno, str(e)) from None
    return items


def _chain_ordered(items: list, path) -> list:
    ordered = sorted(items, key=attrgetter("sort_key"))
    if ordered != items:
        message = f"{path} is not in chain order; re-sorted {len(items)} records"
        logger.warning(message)
        warnings.warn(message, UnsortedInput, stacklevel=3)
    return ordered


def parse_transfer_row(row: dict) -> TransferEvent:
    return TransferEvent(
        nft=NftId(Address(row["contract"]), _uint(row, "token_id")),
        seller=Address(row["from"]),
        buyer=Address(row["to"]),
        block_number=_uint(row, "block"),
        tx_hash=normalize_hash(row["tx_hash"]),
        tx_index=_uint(row, "tx_index"),
        timestamp=_uint(row, "timestamp"),
        interacted_contract=Address(row["interacted_contract"]),
        payment=Payment.parse(row["payment_asset"], row["payment_amount"]),
        log_index=_uint(row, "log_index") if "log_index" in row else 0,
    )


def parse_transaction_row(row: dict) -> TransactionRecord:
    try:
        kind = TxKind(str(row["kind"]).strip().lower())
    except ValueError:
        raise ValueError(f"unknown transaction kind {row['kind']!r}") from None
    return TransactionRecord(
        tx_hash=normalize_hash(row["tx_hash"]),
        block_number=_uint(row, "block"),
        tx_index=_uint(row, "tx_index"),
        timestamp=_uint(row, "timestamp"),
        sender=Address(row["from"]),
        recipient=Address(row["to"]),
        payment=Payment.parse(row["asset"], row["amount"]),
        gas_fee=parse_amount(row["gas_fee"]),
        kind=kind,
    )


def parse_raw_log_row(row: dict) -> RawLogRecord:
    topics = row["topics"]
    if not isinstance(topics, list):
        raise ValueError("topics must be a list")
    payment = None
    if row.get("payment_amount") is not None:
        payment = Payment.parse(row.get("payment_asset"), row["payment_amount"])
    interacted = row.get("interacted_contract")
    return RawLogRecord(
        contract=Address(row["address"]),
        topics=tuple(str(t) for t in topics),
        block_number=_uint(row, "block"),
        tx_hash=normalize_hash(row["tx_hash"]),
        tx_index=_uint(row, "tx_index"),
        timestamp=_uint(row, "timestamp"),
        log_index=_uint(row, "log_index") if "log_index" in row else 0,
        interacted_contract=Address(interacted) if interacted else None,
        payment=payment,
    )


def load_transfers(path) -> list[TransferEvent]:
    events = _read_jsonl(path, TRANSFER_KEYS, parse_transfer_row)
    logger.info("loaded %d transfers from %s", len(events), path)
    return _chain_ordered(events, path)


def load_transactions(path) -> list[TransactionRecord]:
    records = _read_jsonl(path, TRANSACTION_KEYS, parse_transaction_row)
    logger.info("loaded %d transactions from %s", len(records), path)
    return _chain_ordered(records, path)


def load_raw_logs(path) -> list[RawLogRecord]:
    records = _read_jsonl(path, RAW_LOG_KEYS, parse_raw_log_row)
    return sorted(records, key=lambda r: (r.block_number, r.tx_index, r.log_index, r.contract, r.topics))


def dump_transfer(event: TransferEvent) -> dict:
    return {
        "contract": str(event.nft.contract),
        "token_id": str(event.nft.token_id),
        "from": str(event.seller),
        "to": str(event.buyer),
        "block": event.block_number,
        "tx_hash": event.tx_hash,
        "tx_index": event.tx_index,
        "log_index": event.log_index,
        "timestamp": event.timestamp,
        "interacted_contract": str(event.interacted_contract),
        "payment_asset": str(event.payment.asset),
        "payment_amount": str(event.payment.amount),
    }


def dump_transaction(record: TransactionRecord) -> dict:
    return {
        "tx_hash": record.tx_hash,
        "block": record.block_number,
        "tx_index": record.tx_index,
        "timestamp": record.timestamp,
        "from": str(record.sender),
        "to": str(record.recipient),
        "asset": str(record.payment.asset),
        "amount": str(record.payment.amount),
        "gas_fee": str(record.gas_fee),
        "kind": record.kind.value,
    }


# ------------------- CSV registries -------------------

def _read_csv(path, columns: tuple[str, ...]) -> pd.DataFrame:
    path = Path(path)
    try:
        df = pd.read_csv(io.StringIO(read_text(path)), dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=list(columns))
    except pd.errors.ParserError as e:
        found = re.search(r"line (\d+)", str(e))
        raise SchemaError(path, int(found.group(1)) if found else 1, f"malformed CSV: {e}") from None
    df.columns = [c.strip().lower() for c in df.columns]
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise SchemaError(path, 1, f"missing columns: {', '.join(missing)}")
    return df


def _rows(df: pd.DataFrame):
    # header is line 1
    for i, row in enumerate(df.itertuples(index=False), start=2):
        yield i, row


def load_labels(path) -> LabelRegistry:
    df = _read_csv(path, ("address", "category", "name"))
    services, service_names = set(), {}
    maps = {"marketplace": {}, "reward_distributor": {}, "treasury": {}}
    for line, row in _rows(df):
        try:
            address = Address(row.address)
        except ValueError as e:
            raise SchemaError(path, line, str(e)) from None
        category = row.category.strip().lower()
        name = row.name.strip()
        if category not in LABEL_CATEGORIES:
            raise SchemaError(path, line, f"unknown category {row.category!r}")
        if category == "service":
            services.add(address)
            if name:
                service_names[address] = name
        elif not name:
            raise SchemaError(path, line, f"{category} label needs a marketplace name")
        else:
            maps[category][address] = name

    registry = LabelRegistry(
        service_accounts=frozenset(services),
        marketplaces=maps["marketplace"],
        reward_distributors=maps["reward_distributor"],
        treasuries=maps["treasury"],
        service_names=service_names,
    )
    logger.info("loaded labels: %d service, %d marketplace, %d distributor, %d treasury",
                len(registry.service_accounts), len(registry.marketplaces),
                len(registry.reward_distributors), len(registry.treasuries))
    return registry


def _positive_decimal(text: str) -> Decimal:
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise ValueError(f"not a decimal: {text!r}") from None
    if not value.is_finite() or value <= 0:
        raise ValueError(f"expected a positive decimal, got {text!r}")
    return value


def load_prices(path) -> PriceTable:
    df = _read_csv(path, ("asset", "date", "usd"))
    entries: dict[tuple[str, date], Decimal] = {}
    for line, row in _rows(df):
        try:
            asset = str(Asset.parse(row.asset))
            day = date.fromisoformat(row.date.strip())
            price = _positive_decimal(row.usd)
        except ValueError as e:
            raise SchemaError(path, line, str(e)) from None
        if (asset, day) in entries:
            raise DuplicatePriceEntry(asset, day, line)
        entries[(asset, day)] = price
    logger.info("loaded %d prices from %s", len(entries), path)
    return PriceTable(entries)


def load_marketplace_totals(path) -> dict[str, Decimal]:
    df = _read_csv(path, ("marketplace", "total_usd_volume"))
    totals = {}
    for line, row in _rows(df):
        try:
            totals[row.marketplace.strip()] = _positive_decimal(row.total_usd_volume)
        except ValueError as e:
            raise SchemaError(path, line, str(e)) from None
    return totals


def load_compliance_fixtures(path) -> FixtureInterfaceClient:
    df = _read_csv(path, ("contract", "supports_erc721"))
    flags = {}
    for line, row in _rows(df):
        flag = row.supports_erc721.strip().lower()
        if flag not in ("true", "false"):
            raise SchemaError(path, line, f"supports_erc721 must be true/false, got {row.supports_erc721!r}")
        try:
            flags[Address(row.contract)] = flag == "true"
        except ValueError as e:
            raise SchemaError(path, line, str(e)) from None
    return FixtureInterfaceClient.from_flags(flags, ERC721_INTERFACE_ID)


def load_code_oracle(path) -> StaticCodeOracle:
    """One contract address per line; blank lines, '#' comments and an 'address' header are skipped."""
    path = Path(path)
    contracts = set()
    for lineno, line in _text_lines(path):
        text = line.split("#", 1)[0].split(",", 1)[0].strip()
        if not text or text.lower() == "address":
            continue
        try:
            contracts.add(Address(text))
        except ValueError as e:
            raise SchemaError(path, lineno, str(e)) from None
    return StaticCodeOracle(frozenset(contracts))
