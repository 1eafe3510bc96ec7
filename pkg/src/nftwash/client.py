"""Query sources for ERC-165 interface support and bytecode presence.

Either a recorded fixture (no network) or a JSON-RPC node reached over requests.
"""

from __future__ import annotations

import itertools
import logging
from typing import Mapping, Protocol

import requests

from .config import ERC165_INTERFACE_ID, RPC_TIMEOUT_S, SUPPORTS_INTERFACE_SELECTOR
from .errors import ClientUnavailable, ContractReverted
from .models import Address

logger = logging.getLogger(__name__)


class InterfaceClient(Protocol):
    def supports_interface(self, contract: Address, interface_id: str) -> bool:
        ...


class FixtureInterfaceClient:
    """Answers from a recorded table: contract -> supported interface ids.

    A contract mapped to None behaves like one whose call reverts; an unknown
    contract behaves the same way.
    """

    def __init__(self, answers: Mapping[Address, frozenset[str] | None]):
        self.answers = {Address(k): (None if v is None else frozenset(i.lower() for i in v))
                        for k, v in answers.items()}

    def supports_interface(self, contract: Address, interface_id: str) -> bool:
        ids = self.answers.get(Address(contract))
        if ids is None:
            raise ContractReverted(f"{contract} has no recorded supportsInterface answer")
        return interface_id.lower() in ids

    @classmethod
    def from_flags(cls, flags: Mapping[Address, bool], interface_id: str) -> "FixtureInterfaceClient":
        """Every fixture contract speaks ERC-165; flagged ones also `interface_id`."""
        answers = {}
        for contract, supported in flags.items():
            ids = {ERC165_INTERFACE_ID}
            if supported:
                ids.add(interface_id)
            answers[contract] = frozenset(ids)
        return cls(answers)


class RpcClient:
    """Minimal Ethereum JSON-RPC client."""

    def __init__(self, url: str, timeout: float = RPC_TIMEOUT_S, session: requests.Session | None = None):
        self.url = url
        self.timeout = timeout
        self.session = session or requests.Session()
        self._ids = itertools.count(1)

    def call(self, method: str, params: list):
        payload = {"jsonrpc": "2.0", "method": method, "params": params, "id": next(self._ids)}
        try:
            r = self.session.post(self.url, json=payload, timeout=self.timeout)
        except requests.RequestException as e:
            raise ClientUnavailable(f"cannot reach node at {self.url}: {e}") from e

        if r.status_code != 200:
            raise ClientUnavailable(f"node at {self.url} answered HTTP {r.status_code}")
        try:
            body = r.json()
        except ValueError:
            raise ClientUnavailable(f"node at {self.url} returned non-JSON") from None

        if body.get("error"):
            raise ContractReverted(str(body["error"].get("message", body["error"])))
        return body.get("result")

    def supports_interface(self, contract: Address, interface_id: str) -> bool:
        # supportsInterface(bytes4): bytes4 is left-aligned in its 32-byte slot
        data = SUPPORTS_INTERFACE_SELECTOR + interface_id.lower().removeprefix("0x").ljust(64, "0")
        result = self.call("eth_call", [{"to": str(contract), "data": data}, "latest"])
        if not result or result == "0x":
            raise ContractReverted(f"{contract} returned no data for supportsInterface")
        # the bool comes back ABI-encoded: one 32-byte word, 0 or 1
        return int(result[:66], 16) == 1

    def get_code(self, address: Address) -> str:
        return self.call("eth_getCode", [str(address), "latest"]) or "0x"


class NodeCodeOracle:
    """Bytecode presence answered by a node, memoized for the run."""

    def __init__(self, client: RpcClient):
        self.client = client
        self._cache: dict[Address, bool] = {}

    def has_code(self, address: Address) -> bool:
        if address not in self._cache:
            code = self.client.get_code(address)
            self._cache[address] = code not in ("0x", "0x0", "")
            logger.debug("code at %s: %s", address, self._cache[address])
        return self._cache[address]
