from math import comb

import pytest
from hypothesis import given, strategies as st

from d2dcache.combinatorics import (
    AllocationError,
    DomainError,
    Fragment,
    IncompleteDemandError,
    ModeAllocation,
    SystemParams,
    build_ledger,
    cache_contents,
    coded_message,
    d2d_exchange,
    enumerate_subsets,
    fragment_size,
    placement,
    serving_groups,
    worst_case_demands,
)


def labels(frags):
    return [str(f) for f in frags]


class TestEnumerateSubsets:
    def test_pairs_of_three(self):
        assert enumerate_subsets({1, 2, 3}, 2) == [(1, 2), (1, 3), (2, 3)]

    def test_triples_of_four(self):
        assert enumerate_subsets({1, 2, 3, 4}, 3) == [(1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4)]

    def test_pairs_of_ten(self):
        assert len(enumerate_subsets(range(1, 11), 2)) == 45

    def test_too_large(self):
        with pytest.raises(DomainError):
            enumerate_subsets({1, 2}, 3)

    @given(st.integers(1, 9), st.data())
    def test_count_and_order(self, n, data):
        size = data.draw(st.integers(0, n))
        subs = enumerate_subsets(range(1, n + 1), size)
        assert len(subs) == comb(n, size)
        assert len(set(subs)) == len(subs)
        assert subs == sorted(subs)
        assert all(list(s) == sorted(set(s)) for s in subs)


class TestPlacement:
    def test_three_users(self):
        assert labels(placement(3, 1, "A")) == ["A_{1}", "A_{2}", "A_{3}"]

    def test_four_users_t2(self):
        assert labels(placement(4, 2, "A")) == ["A_{1,2}", "A_{1,3}", "A_{1,4}", "A_{2,3}", "A_{2,4}", "A_{3,4}"]

    def test_two_users(self):
        assert labels(placement(2, 1, "A")) == ["A_{1}", "A_{2}"]

    def test_bad_t(self):
        with pytest.raises(DomainError):
            placement(3, 3, "A")


class TestCodedMessage:
    def test_pair(self):
        assert labels(coded_message((1, 3), {1: "A", 3: "C"})) == ["A_{3}", "C_{1}"]

    def test_triple(self):
        msg = coded_message((1, 2, 4), {1: "A", 2: "B", 4: "D"})
        assert labels(msg) == ["A_{2,4}", "B_{1,4}", "D_{1,2}"]

    def test_two_user_system(self):
        assert labels(coded_message((1, 2), {1: "A", 2: "B"})) == ["A_{2}", "B_{1}"]

    def test_missing_demand(self):
        with pytest.raises(IncompleteDemandError):
            coded_message((1, 2), {1: "A"})

    @given(st.integers(2, 6), st.data())
    def test_decodable(self, K, data):
        t = data.draw(st.integers(1, K - 1))
        demands = worst_case_demands(range(1, K + 1))
        files = sorted(set(demands.values()))
        for T in enumerate_subsets(range(1, K + 1), t + 1):
            msg = coded_message(T, demands)
            for k in T:
                cache = set(cache_contents(k, K, t, files))
                unknown = [f for f in msg if f not in cache]
                assert unknown == [Fragment(demands[k], tuple(j for j in T if j != k))]


class TestD2DExchange:
    def test_pair_sends_whole_fragments(self):
        out = d2d_exchange((1, 2), {1: "A", 2: "B"})
        assert labels(out[1]) == ["B^1_{1}"]
        assert labels(out[2]) == ["A^1_{2}"]

    def test_triple_sub_packets(self):
        out = d2d_exchange((1, 2, 3), {1: "A", 2: "B", 3: "C"})
        assert labels(out[1]) == ["B^1_{1,3}", "C^1_{1,2}"]
        assert labels(out[3]) == ["A^2_{2,3}", "B^2_{1,3}"]

    @given(st.integers(1, 4))
    def test_every_part_delivered_once(self, t):
        T = tuple(range(1, t + 2))
        demands = worst_case_demands(T)
        sent = [f for payload in d2d_exchange(T, demands).values() for f in payload]
        assert len(sent) == len(set(sent)) == (t + 1) * t
        for k in T:
            parts = sorted(f.part for f in sent if f.file == demands[k])
            assert parts == list(range(1, t + 1))


class TestFragmentSize:
    def test_example_one(self):
        assert fragment_size(3, 1, 2, 1.0) == pytest.approx(1 / 3)

    def test_example_two(self):
        assert fragment_size(4, 2, 2, 1.0) == pytest.approx(1 / 6)
        assert fragment_size(4, 2, 2, 1.0) / 2 == pytest.approx(1 / 12)

    def test_packetization(self):
        # C(5,1) * C(3,1)
        assert fragment_size(5, 1, 2, 30.0) == pytest.approx(2.0)

    def test_invalid(self):
        with pytest.raises(DomainError):
            fragment_size(4, 1, 4, 1.0)
        with pytest.raises(DomainError):
            fragment_size(3, 3, 1, 1.0)


class TestLedger:
    def test_no_d2d(self):
        led = build_ledger(1, 2, ModeAllocation((), (1, 2, 3)))
        assert led.needed == {1: 2, 2: 2, 3: 2}
        assert led.m_total == 3
        assert led.n_fragments == 6

    def test_example_one(self):
        led = build_ledger(1, 2, ModeAllocation(((1, 2),), (1, 2, 3)))
        assert led.needed == {1: 1, 2: 1, 3: 2}
        assert led.m_total == 2
        assert led.remaining == ((1, 3), (2, 3))
        assert led.needed_by(3) == ((1, 3), (2, 3))

    def test_example_two(self):
        led = build_ledger(2, 2, ModeAllocation(((1, 2, 3),), (1, 2, 3, 4)))
        assert led.needed == {1: 2, 2: 2, 3: 2, 4: 3}
        assert led.m_total == 3

    def test_full_allocation(self):
        group = (1, 2, 3, 4)
        led = build_ledger(1, 3, ModeAllocation(tuple(enumerate_subsets(group, 2)), group))
        assert led.m_total == 0
        assert set(led.needed.values()) == {0}

    def test_wrong_subset_size(self):
        with pytest.raises(AllocationError):
            build_ledger(2, 2, ModeAllocation(((1, 2),), (1, 2, 3, 4)))

    @given(st.integers(1, 3), st.integers(1, 3), st.data())
    def test_conservation(self, t, L, data):
        group = tuple(range(1, t + L + 1))
        subsets = enumerate_subsets(group, t + 1)
        chosen = data.draw(st.lists(st.sampled_from(subsets), unique=True))
        led = build_ledger(t, L, ModeAllocation(tuple(chosen), group))
        assert sum(led.needed.values()) == (t + 1) * led.m_total
        assert all(0 <= w <= comb(t + L - 1, t) for w in led.needed.values())
        assert led.m_total == comb(t + L, t + 1) - len(chosen)


class TestAllocation:
    def test_duplicates_rejected(self):
        with pytest.raises(AllocationError):
            ModeAllocation(((1, 2), (2, 1)), (1, 2, 3))

    def test_outside_group(self):
        with pytest.raises(AllocationError):
            ModeAllocation(((1, 4),), (1, 2, 3))

    def test_key_ignores_slot_order(self):
        a = ModeAllocation(((1, 3), (1, 2)), (1, 2, 3))
        b = ModeAllocation(((1, 2), (1, 3)), (1, 2, 3))
        assert a != b and a.key == b.key


class TestSystemParams:
    def test_defaults(self):
        p = SystemParams(K=3, L=2, t=1)
        assert p.group_size == 3
        assert p.n_subsets == 3

    def test_invalid(self):
        with pytest.raises(DomainError):
            SystemParams(K=3, L=2, t=3)
        with pytest.raises(DomainError):
            SystemParams(K=3, L=2, t=1, cluster_radius_m=200.0)

    def test_serving_groups(self):
        assert serving_groups(3, 1, 2) == [(1, 2, 3)]
        assert len(serving_groups(5, 1, 2)) == comb(5, 3)
