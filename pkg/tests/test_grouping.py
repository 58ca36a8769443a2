from collections import Counter

from hypothesis import given, settings
from hypothesis import strategies as st

from hierpim.grouping import (
    CPU_FALLBACK,
    average_frequency,
    canonical_groups,
    count_pairs,
    form_groups,
    group_frequency,
    kind_group_map,
    sorted_pairs,
)
from hierpim.isa import COMPUTE_KINDS, BlockAddr, Instruction, InstructionPair, OpKind, Trace

P = InstructionPair


def chain(*kinds):
    """Straight-line trace where each instruction consumes the previous result."""
    instrs = []
    for i, k in enumerate(kinds):
        src = BlockAddr(i * 64, 16)
        instrs.append(Instruction(i, k, (src, BlockAddr(4096, 16)), BlockAddr((i + 1) * 64, 16), 16))
    return Trace.build(instrs)


def test_count_pairs_is_additive():
    a = chain(OpKind.ADD, OpKind.MULT, OpKind.ADD, OpKind.MULT)
    ca = count_pairs([a])
    assert ca[P(OpKind.ADD, OpKind.MULT)] == 2
    assert count_pairs([a, a])[P(OpKind.ADD, OpKind.MULT)] == 4
    assert count_pairs([]) == Counter()


def test_desk_top_pair_is_add_or_compare(desk_traces):
    top = sorted_pairs(count_pairs(desk_traces.values()))[0]
    assert {OpKind.ADD, OpKind.CMP_EQ, OpKind.CMP_GT, OpKind.CMP_LT} & set(top)


def test_round_robin_example():
    groups = form_groups({P(OpKind.ADD, OpKind.MULT): 2, P(OpKind.ADD, OpKind.CMP_GT): 1}, 2)
    assert groups[0].members == {OpKind.ADD, OpKind.MULT}
    assert groups[1].members == {OpKind.ADD, OpKind.CMP_GT}
    # a kind shared by two groups is hosted by the group owning its most frequent pair
    assert kind_group_map(groups)[OpKind.ADD] == 0


def test_single_pair_three_groups():
    groups = form_groups({P(OpKind.XOR, OpKind.ADD): 5}, 3)
    assert [len(g.pairs) for g in groups] == [1, 0, 0]
    assert groups[1].members == frozenset() and groups[2].members == frozenset()


def test_tie_break_is_lexicographic():
    counts = {P(OpKind.SUB, OpKind.ADD): 3, P(OpKind.ADD, OpKind.SUB): 3, P(OpKind.AND, OpKind.OR): 3}
    assert sorted_pairs(counts) == [P(OpKind.ADD, OpKind.SUB), P(OpKind.AND, OpKind.OR), P(OpKind.SUB, OpKind.ADD)]


def test_desk_groups(desk_traces):
    groups = form_groups(count_pairs(desk_traces.values()), 3)
    hosted = {g.name: set(g.hosted) for g in groups}
    assert hosted == {
        "add-comp": {OpKind.ADD, OpKind.CMP_EQ, OpKind.CMP_GT},
        "mult-shift": {OpKind.MULT, OpKind.SHIFT},
        "log-sub": {OpKind.XOR, OpKind.SUB},
    }


def test_frequency_of_pure_xor_workload():
    groups = canonical_groups()
    t = Trace.build([Instruction(0, OpKind.XOR, (BlockAddr(0), BlockAddr(64)), BlockAddr(128))])
    row = group_frequency([t], groups)[0]
    assert row["log-sub"] == 1.0 and row["add-comp"] == 0.0 and row[CPU_FALLBACK] == 0.0


def test_frequency_of_empty_workload():
    row = group_frequency([Trace.build([])], canonical_groups())[0]
    assert set(row.values()) == {0.0}


def test_uncovered_kinds_fall_back_to_cpu():
    groups = form_groups({P(OpKind.ADD, OpKind.ADD): 1}, 1)
    row = group_frequency([chain(OpKind.ADD, OpKind.XOR)], groups)[0]
    assert row[groups[0].name] == 0.5 and row[CPU_FALLBACK] == 0.5


def test_desk_frequency_order(desk_traces):
    groups = form_groups(count_pairs(desk_traces.values()), 3)
    rows = group_frequency(list(desk_traces.values()), groups)
    for row in rows:
        assert abs(sum(row.values()) - 1) < 1e-9
    avg = average_frequency(rows)
    assert avg["add-comp"] > avg["mult-shift"] > avg["log-sub"]


# -- properties ----------------------------------------------------------------------

KINDS = sorted(COMPUTE_KINDS, key=lambda k: k.value)
pair_counts = st.dictionaries(
    st.builds(P, st.sampled_from(KINDS), st.sampled_from(KINDS)), st.integers(1, 20), max_size=6
)


def brute_force_groups(counts, m):
    order = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0][0].value, kv[0][1].value))
    out = [[] for _ in range(m)]
    for k, (pair, _) in enumerate(order):
        out[k % m].append(pair)
    return out


@settings(max_examples=200, deadline=None)
@given(pair_counts, st.integers(1, 4))
def test_form_groups_matches_oracle(counts, m):
    groups = form_groups(counts, m)
    assert [g.pairs for g in groups] == brute_force_groups(counts, m)
    # partition: every pair lands in exactly one group
    assert sorted(p for g in groups for p in g.pairs) == sorted(counts)


@settings(max_examples=100, deadline=None)
@given(pair_counts, st.integers(1, 4), st.integers(2, 9))
def test_form_groups_scale_invariant(counts, m, c):
    scaled = {p: n * c for p, n in counts.items()}
    a, b = form_groups(counts, m), form_groups(scaled, m)
    assert [(g.pairs, g.hosted, g.name) for g in a] == [(g.pairs, g.hosted, g.name) for g in b]
