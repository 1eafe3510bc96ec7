"""Exception hierarchy for the wash-trading pipeline.

Input problems (bad files, missing prices, unreachable node) map to exit code 1,
internal consistency failures to exit code 2.
"""

from __future__ import annotations


class WashTradeError(Exception):
    """Base class for every error raised by nftwash."""


class InputError(WashTradeError):
    """Something wrong with the data or configuration we were handed."""


class SchemaError(InputError):
    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        self.message = message
        super().__init__(f"{self.path}:{line}: {message}")


class DuplicatePriceEntry(InputError):
    def __init__(self, asset: str, day, line: int | None = None):
        self.asset = asset
        self.day = day
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate price for {asset} on {day}{where}")


class ConfigError(InputError):
    pass


class ClientUnavailable(InputError):
    """The interface/code query source could not be reached."""


class MissingPrice(InputError):
    def __init__(self, asset, day):
        self.asset = str(asset)
        self.day = day
        super().__init__(f"no USD price for {self.asset} on {day}")


class MixedNft(InputError):
    def __init__(self, expected, found):
        self.expected = expected
        self.found = found
        super().__init__(f"event for {found} in the history of {expected}")


class ZeroMarketVolume(InputError):
    pass


class ContractReverted(WashTradeError):
    """A contract call reverted or returned garbage."""


class InvariantViolation(WashTradeError):
    pass


class LogRejected(ValueError):
    """A raw log that is not an ERC-721 Transfer. `reason` names the rule it broke."""

    reason = "rejected"

    def __init__(self, message: str = ""):
        super().__init__(message or self.reason)


class WrongSignature(LogRejected):
    reason = "wrong_signature"


class Erc20Shape(LogRejected):
    reason = "erc20_shape"


class MalformedTopics(LogRejected):
    reason = "malformed_topics"


class UnsortedInput(UserWarning):
    """Input file was not in chain order; the loader re-sorted it."""
