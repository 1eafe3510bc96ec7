from datetime import date, timedelta
from decimal import Decimal

import pytest

from builders import DISTRIBUTOR, EXCHANGE, LOOKS, MARKET, REWARD_MARKET, TREASURY
from nftwash.models import LabelRegistry, PriceTable


@pytest.fixture
def registry() -> LabelRegistry:
    return LabelRegistry(
        service_accounts=frozenset({EXCHANGE}),
        marketplaces={MARKET: "OpenSea", REWARD_MARKET: "LooksRare"},
        reward_distributors={DISTRIBUTOR: "LooksRare"},
        treasuries={TREASURY: "LooksRare"},
        service_names={EXCHANGE: "Binance"},
    )


@pytest.fixture
def prices() -> PriceTable:
    """ETH at $3,000 and the reward token at $4 every day of Q1 2022."""
    entries = {}
    day = date(2022, 1, 1)
    while day < date(2022, 4, 1):
        entries[("ETH", day)] = Decimal(3000)
        entries[(str(LOOKS), day)] = Decimal(4)
        day += timedelta(days=1)
    return PriceTable(entries)


@pytest.fixture
def write_lines(tmp_path):
    def write(name: str, lines) -> str:
        path = tmp_path / name
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
        return str(path)
    return write
