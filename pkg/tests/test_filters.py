from dataclasses import replace

import numpy as np

from builders import A, B, C, D, EXCHANGE, NFT, addr, candidate, edge_candidate, mint, transfer
from nftwash.filters import drop_zero_volume_candidates, remove_contract_accounts, remove_service_accounts
from nftwash.graph import TransferEdge, build_graph
from nftwash.models import NULL_ADDRESS, LabelRegistry, Payment, StaticCodeOracle


def test_service_account_and_its_edges_go(registry):
    g = build_graph(NFT, [transfer(A, EXCHANGE, 1), transfer(EXCHANGE, B, 2), transfer(A, B, 3),
                          transfer(B, A, 4)])
    cleaned = remove_service_accounts(g, registry)
    assert cleaned.nodes == {A, B}
    assert [e.block_number for e in cleaned.edges] == [3, 4]


def test_null_address_is_always_removed():
    g = build_graph(NFT, [mint(A, 1), transfer(A, B, 2)])
    cleaned = remove_service_accounts(g, LabelRegistry())
    assert NULL_ADDRESS not in cleaned.nodes
    assert len(cleaned.edges) == 1


def test_empty_registry_leaves_graph_alone():
    g = build_graph(NFT, [transfer(A, B, 1), transfer(B, A, 2)])
    assert remove_service_accounts(g, LabelRegistry()) == g


def test_contract_accounts():
    g = build_graph(NFT, [transfer(A, D, 1), transfer(D, A, 2), transfer(A, B, 3)])
    cleaned = remove_contract_accounts(g, StaticCodeOracle(frozenset({D})))
    assert cleaned.nodes == {A, B}
    assert remove_contract_accounts(g, StaticCodeOracle()) == g


def test_zero_volume_candidates():
    unpaid = edge_candidate({A, B}, [(A, B), (B, A)], price="0")
    paid = edge_candidate({A, B}, [(A, B), (B, A)], price="1")
    half = candidate(transfer(A, C, 1), transfer(C, A, 2, "1"))
    kept = drop_zero_volume_candidates([unpaid, paid, half])
    assert kept == [paid, half]
    assert kept[1].internal_edges[0].payment.amount == 0
    assert drop_zero_volume_candidates([]) == []


def test_token_payment_counts_as_volume():
    c = edge_candidate({A, B}, [(A, B), (B, A)], price="0")
    paid = TransferEdge.from_event(transfer(A, B, 9, "5", asset=str(addr(0x70C))))
    c = replace(c, internal_edges=c.internal_edges + (paid,))
    assert drop_zero_volume_candidates([c]) == [c]


def random_graph(rng, nodes):
    pairs = [(nodes[int(rng.integers(len(nodes)))], nodes[int(rng.integers(len(nodes)))])
             for _ in range(int(rng.integers(0, 15)))]
    return build_graph(NFT, [transfer(s, b, i + 1) for i, (s, b) in enumerate(pairs)])


def test_filters_are_idempotent_monotone_and_commute():
    rng = np.random.default_rng(3)
    nodes = [NULL_ADDRESS, EXCHANGE] + [addr(0x200 + i) for i in range(6)]
    for _ in range(200):
        g = random_graph(rng, nodes)
        services = LabelRegistry(service_accounts=frozenset(
            n for n in nodes[2:] if rng.random() < 0.2) | {EXCHANGE})
        oracle = StaticCodeOracle(frozenset(n for n in nodes if rng.random() < 0.3))

        s = remove_service_accounts(g, services)
        k = remove_contract_accounts(g, oracle)
        assert remove_service_accounts(s, services) == s
        assert remove_contract_accounts(k, oracle) == k
        assert s.nodes <= g.nodes and set(s.edges) <= set(g.edges)
        assert k.nodes <= g.nodes and set(k.edges) <= set(g.edges)
        assert remove_contract_accounts(s, oracle) == remove_service_accounts(k, services)


def test_dropped_have_zero_total_and_kept_positive():
    rng = np.random.default_rng(5)
    base = edge_candidate({A, B}, [(A, B), (B, A), (A, B)], price="0")
    candidates = []
    for _ in range(100):
        amounts = rng.integers(0, 2, size=3) * 5
        edges = tuple(replace(e, payment=Payment.native(f"0.{a}")) for e, a in zip(base.internal_edges, amounts))
        candidates.append(replace(base, internal_edges=edges))
    kept = drop_zero_volume_candidates(candidates)
    assert len(kept) < len(candidates)
    for c in candidates:
        total = sum(e.payment.amount for e in c.internal_edges)
        assert (c in kept) == (total > 0)
