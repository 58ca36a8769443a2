from collections import Counter

import pytest

from hierpim.isa import (
    InstructionPair,
    OpKind,
    dumps_json,
    extract_instruction_pairs,
    format_trace,
    validate_trace,
)
from hierpim.workloads import (
    DESK_SIZES,
    KernelId,
    KernelSpec,
    WorkloadSizeError,
    generate,
    op_counts,
)


def test_mat_add_n2():
    t = generate(KernelSpec(KernelId.MAT_ADD, 2))
    assert [ins.kind for ins in t.instructions] == [OpKind.ADD] * 4
    assert t.deps == frozenset()


def test_mac_n3_edges():
    t = generate(KernelSpec(KernelId.MAC, 3))
    kinds = Counter(ins.kind for ins in t.instructions)
    assert kinds == Counter({OpKind.MULT: 3, OpKind.ADD: 3})
    mults = [ins.id for ins in t.instructions if ins.kind is OpKind.MULT]
    adds = [ins.id for ins in t.instructions if ins.kind is OpKind.ADD]
    expected = set(zip(mults, adds)) | {(adds[i], adds[i + 1]) for i in range(2)}
    assert set(t.deps) == expected


def test_bnn_n4_is_xor_add():
    pairs = extract_instruction_pairs(generate(KernelSpec(KernelId.BNN, 4)))
    assert pairs.most_common(1)[0][0] == InstructionPair(OpKind.XOR, OpKind.ADD)
    assert not any(p.producer_kind is OpKind.MULT or p.consumer_kind is OpKind.MULT for p in pairs)


@pytest.mark.parametrize("kid", list(KernelId))
@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_generated_traces_are_valid_and_match_counts(kid, n):
    t = generate(KernelSpec(kid, n))
    assert validate_trace(t) == []
    assert Counter(ins.kind for ins in t.instructions) == op_counts(KernelSpec(kid, n))


def test_desk_traces_valid_and_counted(desk_traces):
    for kid, t in desk_traces.items():
        assert len(t) == sum(op_counts(KernelSpec.desk(kid)).values())
        assert t.name == f"{kid.value}-{DESK_SIZES[kid]}"


def test_generate_is_deterministic():
    for kid in KernelId:
        a = generate(KernelSpec(kid, 4))
        b = generate(KernelSpec(kid, 4))
        assert format_trace(a) == format_trace(b)
        assert dumps_json(a) == dumps_json(b)


def test_grayscale_has_no_mult():
    kinds = {ins.kind for ins in generate(KernelSpec(KernelId.IMG_GRAYSCALE, 4)).instructions}
    assert kinds == {OpKind.SHIFT, OpKind.ADD}


def test_rmse_divide_and_sqrt_go_to_cpu():
    t = generate(KernelSpec(KernelId.RMSE, 8))
    assert [ins.kind for ins in t.instructions[-2:]] == [OpKind.CPU_OP, OpKind.CPU_OP]


@pytest.mark.parametrize("kid", [KernelId.MAT_ADD, KernelId.IMG_GRAYSCALE, KernelId.IMG_THRESHOLDING])
def test_elementwise_matrix_kernels_scale_quadratically(kid):
    a = sum(op_counts(KernelSpec(kid, 32)).values())
    b = sum(op_counts(KernelSpec(kid, 64)).values())
    assert b == 4 * a


@pytest.mark.parametrize("kid", [KernelId.RMSE, KernelId.WORDCOUNT, KernelId.MAC])
def test_vector_kernels_scale_linearly(kid):
    a = sum(op_counts(KernelSpec(kid, 1000)).values())
    b = sum(op_counts(KernelSpec(kid, 2000)).values())
    assert abs(b / a - 2) < 0.01


def test_oversized_kernel_rejected():
    with pytest.raises(WorkloadSizeError):
        generate(KernelSpec(KernelId.MAT_ADD, 64), capacity_bytes=1024)


def test_bad_spec_rejected():
    with pytest.raises(ValueError):
        KernelSpec(KernelId.MAC, 0)
    with pytest.raises(ValueError):
        KernelId.parse("fft")


def test_kernel_id_parse_aliases():
    assert KernelId.parse("MAT-ADD") is KernelId.MAT_ADD
    assert KernelId.parse("img_grayscale") is KernelId.IMG_GRAYSCALE
