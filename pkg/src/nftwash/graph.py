"""Per-NFT transaction multigraphs and their strongly connected components."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import networkx as nx

from .errors import MixedNft
from .models import Address, ChainPos, NftId, Payment, TransferEvent


@dataclass(frozen=True, slots=True)
class TransferEdge:
    seller: Address
    buyer: Address
    timestamp: int          # t
    tx_hash: str            # h
    contract: Address       # s, the contract the transaction called
    payment: Payment        # p
    block_number: int
    tx_index: int
    log_index: int = 0

    @classmethod
    def from_event(cls, event: TransferEvent) -> "TransferEdge":
        return cls(event.seller, event.buyer, event.timestamp, event.tx_hash,
                   event.interacted_contract, event.payment,
                   event.block_number, event.tx_index, event.log_index)

    @property
    def chain_pos(self) -> ChainPos:
        return (self.block_number, self.tx_index)

    @property
    def is_self_loop(self) -> bool:
        return self.seller == self.buyer


@dataclass(frozen=True)
class TransactionGraph:
    nft: NftId
    nodes: frozenset[Address]
    edges: tuple[TransferEdge, ...]

    def to_networkx(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        g.add_nodes_from(sorted(self.nodes))
        for i, edge in enumerate(self.edges):
            g.add_edge(edge.seller, edge.buyer, key=i)
        return g

    def without(self, removed) -> "TransactionGraph":
        """Drop `removed` nodes and every edge touching them."""
        removed = frozenset(removed) & self.nodes
        if not removed:
            return self
        edges = tuple(e for e in self.edges if e.seller not in removed and e.buyer not in removed)
        return TransactionGraph(self.nft, self.nodes - removed, edges)


@dataclass(frozen=True)
class SccCandidate:
    nft: NftId
    members: frozenset[Address]
    internal_edges: tuple[TransferEdge, ...]

    def __post_init__(self):
        if not self.internal_edges:
            raise ValueError("a candidate needs at least one internal edge")

    @property
    def first_move(self) -> ChainPos:
        return self.internal_edges[0].chain_pos

    @property
    def last_move(self) -> ChainPos:
        return self.internal_edges[-1].chain_pos

    @property
    def key(self):
        return (self.nft, self.first_move, tuple(sorted(self.members)))

    @property
    def is_self_loop_singleton(self) -> bool:
        return len(self.members) == 1


def build_graph(nft: NftId, events: Iterable[TransferEvent]) -> TransactionGraph:
    nodes: set[Address] = set()
    edges = []
    for event in events:
        if event.nft != nft:
            raise MixedNft(nft, event.nft)
        nodes.add(event.seller)
        nodes.add(event.buyer)
        edges.append(TransferEdge.from_event(event))
    return TransactionGraph(nft, frozenset(nodes), tuple(edges))


def find_sccs(graph: TransactionGraph) -> list[SccCandidate]:
    """Strongly connected components with >= 2 nodes, plus self-looping single nodes.

    networkx implements Tarjan's algorithm with Nuutila's modifications; the
    single-node components it returns are kept only when they carry a self-loop.
    """
    if not graph.edges:
        return []
    looped = {e.seller for e in graph.edges if e.is_self_loop}
    component_of: dict[Address, int] = {}
    for i, component in enumerate(nx.strongly_connected_components(graph.to_networkx())):
        if len(component) >= 2 or (component & looped):
            for node in component:
                component_of[node] = i

    internal = defaultdict(list)
    for edge in graph.edges:
        c = component_of.get(edge.seller)
        if c is not None and component_of.get(edge.buyer) == c:
            internal[c].append(edge)

    candidates = [
        SccCandidate(graph.nft, frozenset(n for n, c in component_of.items() if c == i), tuple(edges))
        for i, edges in internal.items()
    ]
    return sorted(candidates, key=lambda c: (c.first_move, sorted(c.members)))


def group_by_nft(events: Iterable[TransferEvent]) -> dict[NftId, list[TransferEvent]]:
    """Histories per NFT in (contract, token_id) order, each in chain order."""
    histories: dict[NftId, list[TransferEvent]] = defaultdict(list)
    for event in events:
        histories[event.nft].append(event)
    return {nft: histories[nft] for nft in sorted(histories)}
