"""Domain types shared by every stage of the pipeline.

Everything here is immutable once built so it can be handed to worker
processes and shared read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Mapping, Protocol

from .errors import MissingPrice

WEI_PER_UNIT = Decimal(10) ** 18
OFF_MARKET = "off-market"

# (block_number, tx_index): the chain order used for every before/after test
ChainPos = tuple[int, int]


class Address(str):
    """20-byte account identifier, always rendered as 0x + 40 lowercase hex chars."""

    __slots__ = ()

    def __new__(cls, value):
        if isinstance(value, Address):
            return value
        if isinstance(value, (bytes, bytearray)):
            if len(value) != 20:
                raise ValueError(f"address must be 20 bytes, got {len(value)}")
            return super().__new__(cls, "0x" + bytes(value).hex())
        text = str(value).strip().lower()
        if len(text) != 42 or not text.startswith("0x"):
            raise ValueError(f"not a 42-character hex address: {value!r}")
        try:
            bytes.fromhex(text[2:])
        except ValueError:
            raise ValueError(f"not a hex address: {value!r}") from None
        return super().__new__(cls, text)

    @classmethod
    def from_word(cls, word: str) -> "Address":
        """Low 20 bytes of a 32-byte topic word."""
        text = str(word).lower().removeprefix("0x")
        if len(text) != 64:
            raise ValueError(f"topic word must be 32 bytes: {word!r}")
        if text[:24].strip("0"):
            raise ValueError(f"topic word has non-zero high bytes: {word!r}")
        return cls("0x" + text[-40:])

    @property
    def raw(self) -> bytes:
        return bytes.fromhex(self[2:])

    @property
    def is_null(self) -> bool:
        return self == NULL_ADDRESS_TEXT

    def __repr__(self):
        return f"Address({str.__repr__(self)})"


UINT256_LIMIT = 1 << 256

NULL_ADDRESS_TEXT = "0x" + "00" * 20
NULL_ADDRESS = Address(NULL_ADDRESS_TEXT)


def normalize_hash(value) -> str:
    text = str(value).strip().lower()
    if not text.startswith("0x"):
        text = "0x" + text
    if len(text) != 66:
        raise ValueError(f"tx hash must be 32 bytes: {value!r}")
    bytes.fromhex(text[2:])
    return text


def utc_day(timestamp: int) -> date:
    return datetime.fromtimestamp(int(timestamp), tz=timezone.utc).date()


@dataclass(frozen=True, order=True, slots=True)
class NftId:
    contract: Address
    token_id: int

    def __str__(self):
        return f"{self.contract}:{self.token_id}"


@dataclass(frozen=True, slots=True)
class Asset:
    """Native ether when `token` is None, otherwise an ERC-20 contract."""

    token: Address | None = None

    @classmethod
    def parse(cls, text) -> "Asset":
        raw = "" if text is None else str(text).strip()
        if raw.upper() in ("", "ETH", "NATIVE"):
            return NATIVE
        return cls(Address(raw))

    @property
    def is_native(self) -> bool:
        return self.token is None

    def __str__(self):
        return "ETH" if self.token is None else str(self.token)


NATIVE = Asset()


def parse_amount(text) -> Decimal:
    try:
        amount = Decimal(str(text).strip())
    except InvalidOperation:
        raise ValueError(f"not a decimal amount: {text!r}") from None
    if not amount.is_finite() or amount < 0:
        raise ValueError(f"amount must be a finite non-negative decimal: {text!r}")
    if (amount * WEI_PER_UNIT) % 1 != 0:
        raise ValueError(f"amount has more than 18 fractional digits: {text!r}")
    return amount


@dataclass(frozen=True, slots=True)
class Payment:
    asset: Asset
    amount: Decimal

    def __post_init__(self):
        if not isinstance(self.amount, Decimal):
            raise TypeError("payment amounts must be Decimal")
        if self.amount < 0:
            raise ValueError("payment amount must be >= 0")

    @classmethod
    def parse(cls, asset, amount) -> "Payment":
        return cls(Asset.parse(asset), parse_amount(amount))

    @classmethod
    def native(cls, amount="0") -> "Payment":
        return cls(NATIVE, parse_amount(amount))

    @property
    def is_paid(self) -> bool:
        return self.amount > 0


ZERO_PAYMENT = Payment(NATIVE, Decimal(0))


@dataclass(frozen=True, slots=True)
class RawLogRecord:
    contract: Address
    topics: tuple[str, ...]
    block_number: int
    tx_hash: str
    tx_index: int
    timestamp: int
    log_index: int = 0
    interacted_contract: Address | None = None
    payment: Payment | None = None


@dataclass(frozen=True, slots=True)
class TransferEvent:
    nft: NftId
    seller: Address
    buyer: Address
    block_number: int
    tx_hash: str
    tx_index: int
    timestamp: int
    interacted_contract: Address
    payment: Payment
    log_index: int = 0

    @property
    def chain_pos(self) -> ChainPos:
        return (self.block_number, self.tx_index)

    @property
    def sort_key(self):
        return (self.block_number, self.tx_index, self.log_index,
                self.nft.contract, self.nft.token_id, self.seller, self.buyer, self.tx_hash)


class TxKind(str, Enum):
    VALUE_TRANSFER = "value_transfer"
    TOKEN_TRANSFER = "token_transfer"
    CONTRACT_CALL = "contract_call"

    @property
    def is_plain_transfer(self) -> bool:
        return self is not TxKind.CONTRACT_CALL


@dataclass(frozen=True, slots=True)
class TransactionRecord:
    tx_hash: str
    block_number: int
    tx_index: int
    timestamp: int
    sender: Address
    recipient: Address
    payment: Payment
    gas_fee: Decimal
    kind: TxKind

    def __post_init__(self):
        if self.gas_fee < 0:
            raise ValueError("gas fee must be >= 0")

    @property
    def chain_pos(self) -> ChainPos:
        return (self.block_number, self.tx_index)

    @property
    def sort_key(self):
        return (self.block_number, self.tx_index, self.kind.value, self.sender, self.recipient,
                str(self.payment.asset), self.payment.amount, self.tx_hash)


@dataclass(frozen=True)
class LabelRegistry:
    """Address labels. The null address is always a service account."""

    service_accounts: frozenset[Address] = frozenset()
    marketplaces: Mapping[Address, str] = field(default_factory=dict)
    reward_distributors: Mapping[Address, str] = field(default_factory=dict)
    treasuries: Mapping[Address, str] = field(default_factory=dict)
    service_names: Mapping[Address, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "service_accounts",
                           frozenset(self.service_accounts) | {NULL_ADDRESS})

    def is_service(self, address: Address) -> bool:
        return address in self.service_accounts

    def is_infrastructure(self, address: Address) -> bool:
        return (address in self.service_accounts or address in self.marketplaces
                or address in self.reward_distributors or address in self.treasuries)

    def marketplace_of(self, contract: Address) -> str:
        return self.marketplaces.get(contract, OFF_MARKET)

    def service_name(self, address: Address) -> str:
        return self.service_names.get(address, str(address))

    @property
    def reward_marketplaces(self) -> frozenset[str]:
        return frozenset(self.reward_distributors.values())


@dataclass(frozen=True)
class PriceTable:
    """USD price per whole unit, keyed by (asset key, UTC day). Exact lookup only."""

    entries: Mapping[tuple[str, date], Decimal] = field(default_factory=dict)

    def __post_init__(self):
        for key, price in self.entries.items():
            if price <= 0:
                raise ValueError(f"price for {key} must be > 0")

    def usd(self, asset, day: date) -> Decimal:
        try:
            return self.entries[(str(asset), day)]
        except KeyError:
            raise MissingPrice(asset, day) from None

    def usd_value(self, payment: Payment, timestamp: int) -> Decimal:
        if payment.amount == 0:
            return Decimal(0)
        return payment.amount * self.usd(payment.asset, utc_day(timestamp))

    def native_usd(self, amount: Decimal, timestamp: int) -> Decimal:
        return self.usd_value(Payment(NATIVE, amount), timestamp)


class CodePresenceOracle(Protocol):
    def has_code(self, address: Address) -> bool:
        ...


@dataclass(frozen=True)
class StaticCodeOracle:
    """Bytecode presence from a fixed set of known contract addresses."""

    contracts: frozenset[Address] = frozenset()

    def has_code(self, address: Address) -> bool:
        return address in self.contracts
