from collections import Counter

from hypothesis import given, settings
from hypothesis import strategies as st

from hierpim.isa import (
    BlockAddr,
    Instruction,
    InstructionPair,
    OpKind,
    Trace,
    concat,
    dependence_edges,
    dumps_json,
    extract_instruction_pairs,
    format_trace,
    parse_trace,
    trace_from_dict,
    trace_to_dict,
    validate_trace,
)
from hierpim.workloads import KernelId, KernelSpec, generate


def blk(i, bits=16):
    return BlockAddr(i * 64, bits)


def build(*specs):
    """specs: (kind, srcs, dest[, width]) with blocks given as small ints."""
    instrs = []
    for i, s in enumerate(specs):
        kind, srcs, dest = s[:3]
        width = s[3] if len(s) > 3 else 32
        instrs.append(Instruction(i, kind, tuple(blk(x) for x in srcs), blk(dest), width))
    return Trace.build(instrs)


def test_mult_width_violation():
    t = Trace.build([Instruction(0, OpKind.MULT, (blk(0, 32), blk(1, 32)), blk(2), 32)])
    assert [v.rule for v in validate_trace(t)] == ["mult-width"]
    assert validate_trace(t)[0].id == 0


def test_empty_trace_is_valid():
    assert validate_trace(Trace.build([])) == []


def test_add_chain_is_valid():
    t = build((OpKind.ADD, (0, 1), 2), (OpKind.ADD, (2, 1), 3), (OpKind.ADD, (3, 1), 4))
    assert validate_trace(t) == []


def test_validate_flags_bad_blocks_and_deps():
    t = Trace.build([Instruction(0, OpKind.ADD, (BlockAddr(3, 32), blk(1)), BlockAddr(0, 1024))])
    rules = {v.rule for v in validate_trace(t)}
    assert rules == {"alignment", "block-size"}
    good = build((OpKind.ADD, (0, 1), 2), (OpKind.ADD, (2, 1), 3))
    assert {v.rule for v in validate_trace(Trace(good.instructions, frozenset()))} == {"dep-missing"}
    assert {v.rule for v in validate_trace(Trace(good.instructions, frozenset({(1, 0)})))} == {
        "dep-forward", "dep-missing"}


def test_single_def_use_edge():
    t = build((OpKind.ADD, (0, 1), 2), (OpKind.MULT, (2, 3), 4, 16))
    assert dependence_edges(t) == {(0, 1)}


def test_latest_producer_wins():
    t = build((OpKind.ADD, (0, 1), 2), (OpKind.ADD, (0, 1), 2), (OpKind.SUB, (2, 1), 3))
    assert dependence_edges(t) == {(1, 2)}


def test_mat_add_has_no_edges():
    t = generate(KernelSpec(KernelId.MAT_ADD, 2))
    assert len(t) == 4 and dependence_edges(t) == set()


def test_pairs_of_chain():
    t = build((OpKind.ADD, (0, 1), 2), (OpKind.MULT, (2, 3), 4, 16), (OpKind.SHIFT, (4,), 5))
    assert extract_instruction_pairs(t) == Counter({
        InstructionPair(OpKind.ADD, OpKind.MULT): 1,
        InstructionPair(OpKind.MULT, OpKind.SHIFT): 1,
    })


def test_independent_adds_have_no_pairs():
    assert extract_instruction_pairs(build((OpKind.ADD, (0, 1), 2), (OpKind.ADD, (0, 1), 3))) == Counter()


def test_mac_pairs():
    pairs = extract_instruction_pairs(generate(KernelSpec(KernelId.MAC, 8)))
    assert pairs == Counter({
        InstructionPair(OpKind.MULT, OpKind.ADD): 8,
        InstructionPair(OpKind.ADD, OpKind.ADD): 7,
    })


def test_cpu_op_excluded_from_pairs():
    t = Trace.build([
        Instruction(0, OpKind.ADD, (blk(0), blk(1)), blk(2)),
        Instruction(1, OpKind.CPU_OP, (blk(2),), blk(3)),
    ])
    assert dependence_edges(t) == {(0, 1)}
    assert extract_instruction_pairs(t) == Counter()


def test_text_and_json_round_trip():
    t = generate(KernelSpec(KernelId.RMSE, 5))
    back = parse_trace(format_trace(t))
    assert back.instructions == t.instructions and back.deps == t.deps and back.name == t.name
    assert trace_from_dict(trace_to_dict(t)) == t
    assert dumps_json(t) == dumps_json(trace_from_dict(trace_to_dict(t)))


def test_move_round_trip():
    t = Trace.build([Instruction(0, OpKind.MOVE, (blk(0),), None, 32, "L2")])
    assert validate_trace(t) == []
    assert parse_trace(format_trace(t)).instructions == t.instructions


# -- properties ----------------------------------------------------------------------

KINDS = [OpKind.ADD, OpKind.SUB, OpKind.XOR, OpKind.AND, OpKind.MULT, OpKind.SHIFT, OpKind.CMP_LT]


@st.composite
def traces(draw, max_len=12):
    n = draw(st.integers(0, max_len))
    specs = []
    for i in range(n):
        kind = draw(st.sampled_from(KINDS))
        arity = 1 if kind is OpKind.SHIFT else 2
        srcs = tuple(draw(st.integers(0, 8)) for _ in range(arity))
        specs.append((kind, srcs, draw(st.integers(0, 8)), 16 if kind is OpKind.MULT else 32))
    return build(*specs)


@settings(max_examples=100, deadline=None)
@given(traces())
def test_pairs_bounded_by_edges(t):
    assert sum(extract_instruction_pairs(t).values()) <= len(t.deps)
    assert validate_trace(t) == []


@settings(max_examples=100, deadline=None)
@given(traces(), st.permutations(range(9)))
def test_pairs_invariant_under_renaming(t, perm):
    ren = Trace.build([
        ins._replace(
            srcs=tuple(BlockAddr(perm[s.address // 64] * 64, s.size_bits) for s in ins.srcs),
            dest=BlockAddr(perm[ins.dest.address // 64] * 64, ins.dest.size_bits),
        )
        for ins in t.instructions
    ])
    assert extract_instruction_pairs(ren) == extract_instruction_pairs(t)


@settings(max_examples=100, deadline=None)
@given(traces(max_len=6), traces(max_len=6))
def test_concat_of_independent_traces_unions_pairs(a, b):
    # shift b into a disjoint address range so the two share no blocks
    far = Trace.build([
        ins._replace(
            srcs=tuple(BlockAddr(s.address + 4096, s.size_bits) for s in ins.srcs),
            dest=BlockAddr(ins.dest.address + 4096, ins.dest.size_bits),
        )
        for ins in b.instructions
    ])
    joined = concat(a, far)
    assert extract_instruction_pairs(joined) == extract_instruction_pairs(a) + extract_instruction_pairs(far)
