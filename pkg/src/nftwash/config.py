"""Run configuration: CONFIG defaults, key=value config files, flag overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields
from decimal import Decimal, InvalidOperation
from pathlib import Path

from dotenv import dotenv_values

from .errors import ConfigError

# ------------------- CONFIG -------------------
ERC721_INTERFACE_ID = "0x80ac58cd"
ERC165_INTERFACE_ID = "0x01ffc9a7"
SUPPORTS_INTERFACE_SELECTOR = "0x01ffc9a7"   # supportsInterface(bytes4)
TRANSFER_EVENT_ABI = "Transfer(address,address,uint256)"
EPSILON_ABS = Decimal("0.000001")            # native units
EPSILON_REL = Decimal("0.001")               # share of the member's internal turnover
DEFAULT_JOBS = 1
RPC_TIMEOUT_S = 10
CHUNK_SIZE = 64                              # NFTs per worker task
CDF_STEP = 5                                 # percent between lifetime CDF points
DAY_S = 86_400
REPORT_NAME = "report.json"
SYNTH_FILES = {
    "transfers": "transfers.jsonl",
    "transactions": "transactions.jsonl",
    "labels": "labels.csv",
    "prices": "prices.csv",
    "marketplace_totals": "marketplace_totals.csv",
    "contracts": "contracts.txt",
    "compliance": "compliance.csv",
    "ground_truth": "ground_truth.json",
}
# ----------------------------------------------

_PATH_KEYS = ("transfers", "transactions", "labels", "prices", "marketplace_totals",
              "compliance", "contracts")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


@dataclass(frozen=True)
class RunConfig:
    transfers: Path
    transactions: Path | None = None
    labels: Path | None = None
    prices: Path | None = None
    marketplace_totals: Path | None = None
    compliance: Path | None = None
    contracts: Path | None = None
    rpc_url: str | None = None
    require_compliance: bool = False
    epsilon_abs: Decimal = EPSILON_ABS
    epsilon_rel: Decimal = EPSILON_REL
    out: Path = Path(REPORT_NAME)
    jobs: int = DEFAULT_JOBS
    progress: bool = False

    def __post_init__(self):
        if not (self.epsilon_abs.is_finite() and self.epsilon_rel.is_finite()):
            raise ConfigError("epsilon values must be finite")
        if self.epsilon_abs < 0 or self.epsilon_rel < 0:
            raise ConfigError("epsilon values must be >= 0")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def check_files(self) -> None:
        for key in _PATH_KEYS:
            path = getattr(self, key)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{key} file not found: {path}")


def _coerce(key: str, value):
    if value is None:
        return None
    if key in _PATH_KEYS or key == "out":
        return Path(value)
    if key in ("require_compliance", "progress"):
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if key in ("epsilon_abs", "epsilon_rel"):
        try:
            number = Decimal(str(value))
        except InvalidOperation:
            raise ConfigError(f"{key}: expected a decimal, got {value!r}") from None
        if not number.is_finite():
            raise ConfigError(f"{key}: expected a finite decimal, got {value!r}")
        return number
    if key == "jobs":
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"jobs: expected an integer, got {value!r}") from None
    return str(value)


def read_config_file(path) -> dict:
    """Parse a KEY=value file; keys may use '-' or '_' and any case."""
    if not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    known = {f.name for f in fields(RunConfig)}
    values = {}
    try:
        entries = dotenv_values(path, encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path}: not UTF-8: {e.reason}") from None
    for key, value in entries.items():
        name = key.strip().lower().replace("-", "_")
        if name not in known:
            raise ConfigError(f"{path}: unknown key {key!r}")
        values[name] = value
    return values


def build_config(overrides: dict, config_file=None) -> RunConfig:
    """CONFIG defaults < config file < explicit flags (None means 'not given')."""
    merged = read_config_file(config_file) if config_file else {}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if not merged.get("transfers"):
        raise ConfigError("a transfers file is required")
    kwargs = {k: _coerce(k, v) for k, v in merged.items()}
    return RunConfig(**{k: v for k, v in kwargs.items() if v is not None})
