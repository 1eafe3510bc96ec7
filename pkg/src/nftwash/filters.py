"""The three cleaning steps applied before confirming anything."""

from __future__ import annotations

from typing import Iterable

from .graph import SccCandidate, TransactionGraph
from .models import CodePresenceOracle, LabelRegistry


def remove_service_accounts(graph: TransactionGraph, registry: LabelRegistry) -> TransactionGraph:
    """Step 1: exchanges, CeFi, games, escrow EOAs and the null address."""
    return graph.without(n for n in graph.nodes if registry.is_service(n))


def remove_contract_accounts(graph: TransactionGraph, oracle: CodePresenceOracle) -> TransactionGraph:
    """Step 2: every account holding bytecode."""
    return graph.without(n for n in graph.nodes if oracle.has_code(n))


def drop_zero_volume_candidates(candidates: Iterable[SccCandidate]) -> list[SccCandidate]:
    """Step 3: components whose NFT moved without any payment at all.

    Unpaid edges inside a paid component stay; they still tie the accounts together.
    """
    return [c for c in candidates if any(e.payment.amount > 0 for e in c.internal_edges)]
