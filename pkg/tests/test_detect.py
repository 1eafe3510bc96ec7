import random
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import (A, B, C, D, EXCHANGE, NFT, TREASURY, X, Y, addr, candidate, mint, record,
                      transfer, tx_hash)
from nftwash.detect import (KIND_ORDER, Assessment, Evidence, EvidenceKind, TransactionIndex,
                            WashTradeEvent, ZeroRiskTolerance, assess, check_self_trade, check_zero_risk,
                            confirm_all, exchange_funders, find_common_exit, find_common_funder,
                            find_common_funders, overlap_cell, propagate_confirmed, summarize)
from nftwash.models import NftId, StaticCodeOracle, TxKind

NFT2 = NftId(NFT.contract, 2)


def lopsided(nft=NFT, members=(A, B), start=10):
    """A round trip that does not net to zero, so it carries no evidence of its own."""
    first, second = members
    return candidate(transfer(first, second, start, "1", nft=nft), transfer(second, first, start + 1, "2", nft=nft))


def index(*records):
    return TransactionIndex(records)


class TestZeroRisk:
    def test_symmetric_round_trip(self):
        c = candidate(transfer(A, B, 10, "1"), transfer(B, A, 11, "1"))
        evidence = check_zero_risk(c, index())
        assert evidence.kind is EvidenceKind.ZERO_RISK
        assert evidence.witness is None
        assert set(evidence.supporting_txs) == {tx_hash(10), tx_hash(11)}

    def test_asymmetric_round_trip(self):
        assert check_zero_risk(lopsided(), index()) is None

    def test_gas_is_factored_out(self):
        c = candidate(transfer(A, B, 10, "1"), transfer(B, A, 11, "1"))
        calls = index(record(B, addr(0x3A11), 10, kind=TxKind.CONTRACT_CALL, gas="0.01"),
                      record(A, addr(0x3A11), 11, kind=TxKind.CONTRACT_CALL, gas="0.01"))
        assert check_zero_risk(c, calls, ZeroRiskTolerance(Decimal(0), Decimal(0))) is not None

    def test_side_payment_between_members_balances(self):
        c = lopsided()
        # B paid 1 and was paid 2, and hands the difference back
        refund = index(record(B, A, 10, "1", tx_index=1))
        evidence = check_zero_risk(c, refund)
        assert evidence is not None
        assert tx_hash(10, 1) in evidence.supporting_txs

    def test_side_payment_outside_the_window_is_ignored(self):
        assert check_zero_risk(lopsided(), index(record(A, B, 30, "1"))) is None

    def test_three_party_cycle(self):
        c = candidate(transfer(A, B, 10, "5"), transfer(B, C, 11, "5"), transfer(C, A, 12, "5"))
        assert check_zero_risk(c, index()) is not None

    def test_assets_net_separately(self):
        token = str(addr(0x70C))
        c = candidate(transfer(A, B, 10, "1"), transfer(B, A, 11, "1", asset=token))
        assert check_zero_risk(c, index()) is None

    def test_unpaid_candidate_has_no_flows(self):
        c = candidate(transfer(A, B, 10), transfer(B, A, 11))
        assert check_zero_risk(c, index()) is None

    def test_tolerance(self):
        t = ZeroRiskTolerance()
        assert t.allows(Decimal("0.000001"), Decimal(0))
        assert not t.allows(Decimal("0.0000011"), Decimal(0))
        assert t.allows(Decimal("0.2"), Decimal(200))
        assert not t.allows(Decimal("0.21"), Decimal(200))

    def test_dust_within_relative_tolerance(self):
        c = candidate(transfer(A, B, 10, "100"), transfer(B, A, 11, "100.05"))
        assert check_zero_risk(c, index()) is not None
        c = candidate(transfer(A, B, 10, "100"), transfer(B, A, 11, "101"))
        assert check_zero_risk(c, index()) is None

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(1, 5), min_size=3, max_size=3), st.integers(1, 1000))
    def test_scale_invariant(self, prices, scale):
        def cycle(k):
            return candidate(*(transfer(s, b, 10 + i, str(p * k))
                               for i, ((s, b), p) in enumerate(zip([(A, B), (B, C), (C, A)], prices))))
        plain = check_zero_risk(cycle(1), index()) is not None
        assert plain == (len(set(prices)) == 1)
        assert (check_zero_risk(cycle(scale), index()) is not None) == plain


class TestCommonFunder:
    def test_external_funder_of_two(self, registry):
        funded = index(record(X, A, 5, "1"), record(X, B, 6, "1"))
        evidence = find_common_funder(lopsided(), funded, registry)
        assert evidence.kind is EvidenceKind.COMMON_FUNDER_EXTERNAL
        assert evidence.witness == X
        assert evidence.supporting_txs == (tx_hash(5), tx_hash(6))

    def test_external_funder_of_one_is_not_enough(self, registry):
        assert find_common_funder(lopsided(), index(record(X, A, 5, "1")), registry) is None

    def test_internal_funder(self, registry):
        evidence = find_common_funder(lopsided(), index(record(A, B, 5, "1")), registry)
        assert evidence.kind is EvidenceKind.COMMON_FUNDER_INTERNAL
        assert evidence.witness == A

    def test_exchange_is_not_a_funder(self, registry):
        funded = index(record(EXCHANGE, A, 5, "1"), record(EXCHANGE, B, 6, "1"))
        c = lopsided()
        assert find_common_funder(c, funded, registry) is None
        assert exchange_funders(c, funded, registry) == (EXCHANGE,)

    def test_infrastructure_and_contracts_are_not_funders(self, registry):
        c = lopsided()
        treasury = index(record(TREASURY, A, 5, "1"), record(TREASURY, B, 6, "1"))
        assert find_common_funder(c, treasury, registry) is None
        funded = index(record(X, A, 5, "1"), record(X, B, 6, "1"))
        assert find_common_funder(c, funded, registry, StaticCodeOracle(frozenset({X}))) is None

    def test_contract_calls_do_not_fund(self, registry):
        calls = index(record(X, A, 5, "1", kind=TxKind.CONTRACT_CALL), record(X, B, 6, "1", kind=TxKind.CONTRACT_CALL))
        assert find_common_funder(lopsided(), calls, registry) is None

    def test_funding_must_precede_the_first_move(self, registry):
        # same transaction position as the first move is settlement
        same = index(record(X, A, 10, "1"), record(X, B, 6, "1"))
        assert find_common_funder(lopsided(), same, registry) is None
        earlier = index(record(X, A, 9, "1", tx_index=7), record(X, B, 6, "1"))
        assert find_common_funder(lopsided(), earlier, registry) is not None

    def test_both_kinds_are_kept_internal_first(self, registry):
        funded = index(record(A, B, 4, "1"), record(X, A, 5, "1"), record(X, B, 6, "1"))
        kinds = [e.kind for e in find_common_funders(lopsided(), funded, registry)]
        assert kinds == [EvidenceKind.COMMON_FUNDER_INTERNAL, EvidenceKind.COMMON_FUNDER_EXTERNAL]
        assert find_common_funder(lopsided(), funded, registry).kind is EvidenceKind.COMMON_FUNDER_INTERNAL

    def test_widest_funder_wins(self, registry):
        c = candidate(transfer(A, B, 10, "1"), transfer(B, C, 11, "1"), transfer(C, A, 12, "3"))
        funded = index(record(Y, A, 3, "1"), record(Y, B, 3, "1", tx_index=1),
                       record(X, A, 4, "1"), record(X, B, 4, "1", tx_index=1), record(X, C, 4, "1", tx_index=2))
        assert find_common_funder(c, funded, registry).witness == X


class TestCommonExit:
    def test_external_exit(self, registry):
        drained = index(record(A, Y, 20, "1"), record(B, Y, 21, "1"))
        evidence = find_common_exit(lopsided(), drained, registry)
        assert evidence.kind is EvidenceKind.COMMON_EXIT_EXTERNAL
        assert evidence.witness == Y

    def test_internal_exit(self, registry):
        evidence = find_common_exit(lopsided(), index(record(B, A, 20, "1")), registry)
        assert evidence.kind is EvidenceKind.COMMON_EXIT_INTERNAL
        assert evidence.witness == A

    def test_exchange_exit_is_discarded(self, registry):
        drained = index(record(A, EXCHANGE, 20, "1"), record(B, EXCHANGE, 21, "1"))
        assert find_common_exit(lopsided(), drained, registry) is None

    def test_exit_must_follow_the_last_move(self, registry):
        drained = index(record(A, Y, 11, "1"), record(B, Y, 21, "1"))
        assert find_common_exit(lopsided(), drained, registry) is None

    def test_funder_and_exit_are_mirrors(self, registry):
        funding = [record(X, A, 5, "1"), record(X, B, 6, "1")]
        mirrored = [record(r.recipient, r.sender, 40 - r.block_number, "1") for r in funding]
        c = lopsided(start=19)
        funder = find_common_funder(c, index(*funding), registry)
        exit_ = find_common_exit(c, index(*mirrored), registry)
        assert (funder.kind.family, exit_.kind.family) == ("common_funder", "common_exit")
        assert funder.witness == exit_.witness == X


class TestSelfTrade:
    def test_self_loop_edge(self):
        c = candidate(transfer(A, B, 10, "1"), transfer(B, B, 11, "1"), transfer(B, A, 12, "2"))
        assert check_self_trade(c).supporting_txs == (tx_hash(11),)

    def test_round_trip_has_none(self):
        assert check_self_trade(lopsided()) is None

    def test_self_loop_singleton(self):
        c = candidate(transfer(A, A, 10, "1"))
        assert check_self_trade(c).kind is EvidenceKind.SELF_TRADE
        assert check_zero_risk(c, index()) is None


class TestPropagation:
    def confirmed_and_second(self, second_members=(A, B)):
        first = candidate(transfer(A, B, 10, "1"), transfer(B, A, 11, "1"))
        members = second_members
        events = [transfer(members[i], members[(i + 1) % len(members)], 20 + i, str(i + 1), nft=NFT2)
                  for i in range(len(members))]
        return first, candidate(*events)

    def test_same_members_on_another_nft(self, registry):
        first, second = self.confirmed_and_second()
        result = confirm_all([first, second], index(), registry)
        assert result.confirmed_count == 2
        (propagated,) = [e for e in result.events if e.nft == NFT2]
        assert propagated.kinds == (EvidenceKind.PROPAGATED,)
        assert result.kind_counts["propagated"] == 1

    def test_superset_is_not_propagated(self, registry):
        first, second = self.confirmed_and_second((A, B, C))
        result = confirm_all([first, second], index(), registry)
        assert result.confirmed_count == 1
        assert result.unconfirmed == [second]

    def test_nothing_confirmed(self):
        a = Assessment(lopsided())
        assert propagate_confirmed([a], set()) == [a]


class TestConfirmAll:
    def test_funder_and_exit_counted_once(self, registry):
        txs = index(record(X, A, 5, "1"), record(X, B, 6, "1"), record(A, X, 20, "1"), record(B, X, 21, "1"))
        result = confirm_all([lopsided()], txs, registry)
        (event,) = result.events
        assert event.kinds == (EvidenceKind.COMMON_FUNDER_EXTERNAL, EvidenceKind.COMMON_EXIT_EXTERNAL)
        assert result.overlap == {"common_funder+common_exit": 1}
        assert event.volume_native == {"ETH": Decimal(3)}

    def test_candidate_without_evidence_is_excluded(self, registry):
        result = confirm_all([lopsided()], index(), registry)
        assert result.events == []
        assert result.confirmed_count == 0
        assert result.overlap == {}

    def test_one_planted_case_per_kind(self, registry):
        nfts = [NftId(NFT.contract, i) for i in range(10, 16)]
        pairs = [(addr(0x500 + 2 * i), addr(0x501 + 2 * i)) for i in range(6)]
        cands = [lopsided(nft, members, start=100 * (i + 1)) for i, (nft, members) in enumerate(zip(nfts, pairs))]
        cands[0] = candidate(transfer(*pairs[0], 100, "1", nft=nfts[0]),
                             transfer(pairs[0][1], pairs[0][0], 101, "1", nft=nfts[0]))
        cands[5] = candidate(transfer(pairs[5][0], pairs[5][0], 600, "1", nft=nfts[5]))
        txs = index(
            record(pairs[1][0], pairs[1][1], 150, "1"),                          # internal funder
            record(X, pairs[2][0], 250, "1"), record(X, pairs[2][1], 251, "1"),  # external funder
            record(pairs[3][1], pairs[3][0], 450, "1"),                          # internal exit
            record(pairs[4][0], Y, 550, "1"), record(pairs[4][1], Y, 551, "1"),  # external exit
        )
        result = confirm_all(cands, txs, registry)
        assert result.confirmed_count == 6
        assert result.overlap == {"zero_risk": 1, "common_funder": 2, "common_exit": 2, "self_trade": 1}
        assert sum(result.overlap.values()) == result.confirmed_count
        assert result.kind_counts == {
            "zero_risk": 1, "common_funder_internal": 1, "common_funder_external": 1,
            "common_exit_internal": 1, "common_exit_external": 1, "self_trade": 1, "propagated": 0,
        }

    def test_exchange_funded_candidates_are_reported(self, registry):
        txs = index(record(EXCHANGE, A, 5, "1"), record(EXCHANGE, B, 6, "1"))
        result = confirm_all([lopsided()], txs, registry)
        assert result.exchange_funded_unconfirmed == {"Binance": {"candidates": 1, "confirmed": 0}}

    def test_order_independent(self, registry):
        cands = [lopsided(NftId(NFT.contract, i), (addr(0x600 + i), addr(0x700 + i)), start=10 * i)
                 for i in range(1, 8)]
        cands.append(candidate(transfer(C, D, 200, "1"), transfer(D, C, 201, "1")))
        txs = index(record(X, addr(0x601), 1, "1"), record(X, addr(0x701), 2, "1"))
        expected = confirm_all(cands, txs, registry)
        shuffled = cands[:]
        random.Random(1).shuffle(shuffled)
        again = confirm_all(shuffled, txs, registry)
        assert [e.key for e in again.events] == [e.key for e in expected.events]
        assert again.overlap == expected.overlap

    def test_unrelated_transactions_change_nothing(self, registry):
        c = lopsided()
        txs = [record(X, A, 5, "1"), record(X, B, 6, "1")]
        noise = [record(C, D, 7, "3"), record(D, X, 8, "1"), record(Y, C, 50, "2")]
        before = assess(c, index(*txs), registry)
        after = assess(c, index(*txs, *noise), registry)
        assert before.evidence == after.evidence

    def test_supporting_txs_are_real(self, registry):
        txs = index(record(X, A, 5, "1"), record(X, B, 6, "1"), record(A, B, 10, "1", tx_index=1))
        c = lopsided()
        known = {e.tx_hash for e in c.internal_edges} | {tx_hash(5), tx_hash(6), tx_hash(10, 1)}
        for evidence in assess(c, txs, registry).evidence:
            assert set(evidence.supporting_txs) <= known

    def test_evidence_rederives_from_its_own_txs(self, registry):
        # the plain B -> A payment at (10, 1) squares the lopsided round trip
        txs = index(record(X, A, 5, "1"), record(X, B, 6, "1"), record(B, A, 10, "1", tx_index=1),
                    record(A, Y, 20, "3"), record(B, Y, 21, "3"),
                    record(C, D, 7, "3"), record(D, X, 8, "1"), record(Y, C, 50, "2"))
        c = lopsided()
        found = assess(c, txs, registry).evidence
        assert [e.kind for e in found] == sorted(
            [EvidenceKind.ZERO_RISK, EvidenceKind.COMMON_FUNDER_EXTERNAL, EvidenceKind.COMMON_EXIT_EXTERNAL],
            key=KIND_ORDER.__getitem__)
        for evidence in found:
            alone = txs.subset(hashes=evidence.supporting_txs)
            assert len(alone) < len(txs)
            assert evidence in assess(c, alone, registry).evidence


class TestEvidenceShape:
    def test_witness_required_iff_account_kind(self):
        with pytest.raises(ValueError):
            Evidence(EvidenceKind.COMMON_EXIT_EXTERNAL, None, ("0x1",))
        with pytest.raises(ValueError):
            Evidence(EvidenceKind.ZERO_RISK, A, ("0x1",))

    def test_txs_required_unless_propagated(self):
        with pytest.raises(ValueError):
            Evidence(EvidenceKind.SELF_TRADE)
        assert Evidence(EvidenceKind.PROPAGATED).supporting_txs == ()

    def test_event_needs_evidence(self):
        with pytest.raises(ValueError):
            WashTradeEvent(lopsided(), ())

    def test_overlap_cell_order(self):
        assert overlap_cell({"common_exit", "zero_risk"}) == "zero_risk+common_exit"
        assert EvidenceKind.COMMON_EXIT_INTERNAL.family == "common_exit"


def test_summarize_matches_confirm_all(registry):
    c = candidate(mint(A, 1), transfer(A, B, 10, "1"), transfer(B, A, 11, "1"))
    assessments = [assess(c, index(), registry)]
    assert summarize(assessments, registry).events == confirm_all([c], index(), registry).events
