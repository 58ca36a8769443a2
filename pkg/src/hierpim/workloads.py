"""Trace generators for the eight target kernels.

Traces describe structure only: operand blocks, widths and def-use order.
No data values are computed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .isa import LINE_BYTES, BlockAddr, Instruction, OpKind, Trace, paused_gc

MEM_CAPACITY_BYTES = 8 * 1024**3


class KernelId(str, Enum):
    BNN = "bnn"
    IMG_GRAYSCALE = "img_grayscale"
    IMG_THRESHOLDING = "img_thresholding"
    MAC = "mac"
    MAT_ADD = "mat_add"
    MAT_MULT = "mat_mult"
    RMSE = "rmse"
    WORDCOUNT = "wordcount"

    @classmethod
    def parse(cls, text: str) -> "KernelId":
        key = text.strip().lower().replace("-", "_")
        for k in cls:
            if key in (k.value, k.name.lower()):
                return k
        raise ValueError(f"unknown kernel id: {text!r}")


# n is a matrix dimension for these, an element count otherwise
MATRIX_KERNELS = frozenset({
    KernelId.BNN, KernelId.IMG_GRAYSCALE, KernelId.IMG_THRESHOLDING,
    KernelId.MAT_ADD, KernelId.MAT_MULT,
})

LARGE_SIZES = {
    KernelId.BNN: 1024,
    KernelId.IMG_GRAYSCALE: 1024,
    KernelId.IMG_THRESHOLDING: 1024,
    KernelId.MAC: 1024 * 1024,
    KernelId.MAT_ADD: 1024,
    KernelId.MAT_MULT: 1024,
    KernelId.RMSE: 100_000,
    KernelId.WORDCOUNT: 20_000,
}

DESK_MATRIX_N = 64
DESK_VECTOR_N = 4096
DESK_SIZES = {k: (DESK_MATRIX_N if k in MATRIX_KERNELS else DESK_VECTOR_N) for k in KernelId}


class WorkloadSizeError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    id: KernelId
    n: int
    width_bits: int = 32

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("kernel size n must be >= 1")
        if not 1 <= self.width_bits <= 32:
            raise ValueError("width_bits must be in 1..32")

    @classmethod
    def desk(cls, kid: KernelId) -> "KernelSpec":
        return cls(kid, DESK_SIZES[kid])

    @classmethod
    def large(cls, kid: KernelId) -> "KernelSpec":
        return cls(kid, LARGE_SIZES[kid])


MULT_WIDTH = 16

# bypass the NamedTuple constructors in the hot loops below
_tuple_new = tuple.__new__


class _Builder:
    """Bump allocator plus instruction emitter."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.top = 0
        self.instrs: list[Instruction] = []

    def array(self, count: int, bits: int = 32) -> list[BlockAddr]:
        nbytes = bits // 8
        base = self.top
        self.top = base + -(-count * nbytes // LINE_BYTES) * LINE_BYTES
        if self.top > self.capacity:
            raise WorkloadSizeError(
                f"kernel needs {self.top} bytes, hierarchy holds {self.capacity}"
            )
        return [_tuple_new(BlockAddr, (a, bits)) for a in range(base, base + count * nbytes, nbytes)]

    def scalar(self, bits: int = 32) -> BlockAddr:
        return self.array(1, bits)[0]

    def emit(self, kind: OpKind, srcs, dest, width: int = 32) -> BlockAddr:
        instrs = self.instrs
        instrs.append(_tuple_new(Instruction, (len(instrs), kind, tuple(srcs), dest, width, None)))
        return dest

    def reduce_trees(self, forests: list[list[BlockAddr]], width: int = 32,
                     roots: Optional[list[BlockAddr]] = None) -> list[BlockAddr]:
        """Pairwise ADD reduction of several operand lists, emitted one tree level at a time
        across all lists so independent additions sit next to each other in program order.
        With ``roots``, the final addition of list i writes roots[i]."""
        levels = [list(f) for f in forests]
        while any(len(lv) > 1 for lv in levels):
            nxt_all = []
            for t, lv in enumerate(levels):
                if len(lv) == 1:
                    nxt_all.append(lv)
                    continue
                tmp = self.array(len(lv) // 2, width)
                if roots is not None and len(lv) == 2:
                    tmp = [roots[t]]
                nxt = [self.emit(OpKind.ADD, (lv[i], lv[i + 1]), tmp[i // 2], width)
                       for i in range(0, len(lv) - 1, 2)]
                if len(lv) % 2:
                    nxt.append(lv[-1])
                nxt_all.append(nxt)
            levels = nxt_all
        return [lv[0] for lv in levels]

    def reduce_tree(self, leaves: list[BlockAddr], width: int = 32) -> BlockAddr:
        return self.reduce_trees([leaves], width)[0]


# Generators mostly emit each kernel stage as one loop over all elements (loop fission), the
# order a compiler targeting in-order compute units would choose: consumers of a stage follow
# it rather than interleaving with it on the same level.

def _bnn(b: _Builder, n: int, w: int) -> None:
    # n x n packed binary input, n output neurons: xor, popcount-reduce, threshold
    inp = b.array(n * n, w)
    theta = b.array(n, w)
    out = b.array(n, w)
    forests = []
    for j in range(n):
        weights = b.array(n * n, w)
        xs = b.array(n * n, w)
        forests.append([b.emit(OpKind.XOR, (inp[k], weights[k]), xs[k], w) for k in range(n * n)])
    totals = b.reduce_trees(forests, w)
    for j in range(n):
        b.emit(OpKind.CMP_GT, (totals[j], theta[j]), out[j], w)


def _grayscale(b: _Builder, n: int, w: int) -> None:
    # y = r/4 + g/2 + b/4 as shift-and-add
    px = n * n
    r, g, bl = b.array(px, w), b.array(px, w), b.array(px, w)
    tr, tg, tb, s = b.array(px, w), b.array(px, w), b.array(px, w), b.array(px, w)
    y = b.array(px, w)
    for src, dst in ((r, tr), (g, tg), (bl, tb)):
        for i in range(px):
            b.emit(OpKind.SHIFT, (src[i],), dst[i], w)
    for i in range(px):
        b.emit(OpKind.ADD, (tr[i], tg[i]), s[i], w)
    for i in range(px):
        b.emit(OpKind.ADD, (s[i], tb[i]), y[i], w)


def _thresholding(b: _Builder, n: int, w: int) -> None:
    px = n * n
    img = b.array(px, w)
    level = b.scalar(w)
    out = b.array(px, w)
    for i in range(px):
        b.emit(OpKind.CMP_GT, (img[i], level), out[i], w)


def _mac(b: _Builder, n: int, w: int) -> None:
    a, x = b.array(n, MULT_WIDTH), b.array(n, MULT_WIDTH)
    prod = b.array(n, 32)
    acc = b.scalar(w)
    # a single accumulate loop: products and the add chain live on different levels,
    # so interleaving them blocks nothing
    for i in range(n):
        b.emit(OpKind.MULT, (a[i], x[i]), prod[i], MULT_WIDTH)
        b.emit(OpKind.ADD, (acc, prod[i]), acc, w)


def _mat_add(b: _Builder, n: int, w: int) -> None:
    a, c, out = b.array(n * n, w), b.array(n * n, w), b.array(n * n, w)
    for i in range(n * n):
        b.emit(OpKind.ADD, (a[i], c[i]), out[i], w)


def _mat_mult(b: _Builder, n: int, w: int) -> None:
    a = b.array(n * n, MULT_WIDTH)
    bt = b.array(n * n, MULT_WIDTH)  # B stored transposed: row j holds column j
    out = b.array(n * n, w)
    for i in range(n):
        # one output row per block: its n^2 products, then the n reduction trees
        forests = []
        for j in range(n):
            prod = b.array(n, 32)
            forests.append([
                b.emit(OpKind.MULT, (a[i * n + k], bt[j * n + k]), prod[k], MULT_WIDTH)
                for k in range(n)
            ])
        if n == 1:
            b.emit(OpKind.ADD, (forests[0][0], forests[0][0]), out[i], w)
        else:
            b.reduce_trees(forests, w, roots=out[i * n:(i + 1) * n])


def _rmse(b: _Builder, n: int, w: int) -> None:
    pred, target = b.array(n, MULT_WIDTH), b.array(n, MULT_WIDTH)
    diff = b.array(n, MULT_WIDTH)
    sq = b.array(n, 32)
    count = b.scalar(w)
    mean, root = b.scalar(w), b.scalar(w)
    for i in range(n):
        b.emit(OpKind.SUB, (pred[i], target[i]), diff[i], MULT_WIDTH)
    for i in range(n):
        b.emit(OpKind.MULT, (diff[i], diff[i]), sq[i], MULT_WIDTH)
    total = b.reduce_tree(sq, w)
    b.emit(OpKind.CPU_OP, (total, count), mean, w)  # divide
    b.emit(OpKind.CPU_OP, (mean,), root, w)  # square root


def _wordcount(b: _Builder, n: int, w: int) -> None:
    text = b.array(n, w)
    space, tab, newline = b.scalar(w), b.scalar(w), b.scalar(w)
    f0, f1, f2 = b.array(n, w), b.array(n, w), b.array(n, w)
    hit, ws = b.array(n, w), b.array(n, w)
    count = b.scalar(w)
    for delim, flag in ((space, f0), (tab, f1), (newline, f2)):
        for i in range(n):
            b.emit(OpKind.CMP_EQ, (text[i], delim), flag[i], w)
    for i in range(n):
        b.emit(OpKind.ADD, (f0[i], f1[i]), hit[i], w)
    for i in range(n):
        b.emit(OpKind.ADD, (hit[i], f2[i]), ws[i], w)
    for i in range(n):
        b.emit(OpKind.ADD, (count, ws[i]), count, w)


_GENERATORS: dict[KernelId, Callable[[_Builder, int, int], None]] = {
    KernelId.BNN: _bnn,
    KernelId.IMG_GRAYSCALE: _grayscale,
    KernelId.IMG_THRESHOLDING: _thresholding,
    KernelId.MAC: _mac,
    KernelId.MAT_ADD: _mat_add,
    KernelId.MAT_MULT: _mat_mult,
    KernelId.RMSE: _rmse,
    KernelId.WORDCOUNT: _wordcount,
}


def generate(spec: KernelSpec, capacity_bytes: int = MEM_CAPACITY_BYTES) -> Trace:
    b = _Builder(capacity_bytes)
    with paused_gc():
        _GENERATORS[spec.id](b, spec.n, spec.width_bits)
    return Trace.build(b.instrs, f"{spec.id.value}-{spec.n}")


def op_counts(spec: KernelSpec) -> Counter[OpKind]:
    """Closed-form instruction mix of ``generate(spec)``; usable at sizes too large to build."""
    n = spec.n
    k = spec.id
    if k is KernelId.BNN:
        return Counter({OpKind.XOR: n**3, OpKind.ADD: n * (n * n - 1), OpKind.CMP_GT: n})
    if k is KernelId.IMG_GRAYSCALE:
        return Counter({OpKind.SHIFT: 3 * n * n, OpKind.ADD: 2 * n * n})
    if k is KernelId.IMG_THRESHOLDING:
        return Counter({OpKind.CMP_GT: n * n})
    if k is KernelId.MAC:
        return Counter({OpKind.MULT: n, OpKind.ADD: n})
    if k is KernelId.MAT_ADD:
        return Counter({OpKind.ADD: n * n})
    if k is KernelId.MAT_MULT:
        return Counter({OpKind.MULT: n**3, OpKind.ADD: n * n * max(n - 1, 1)})
    if k is KernelId.RMSE:
        return Counter({OpKind.SUB: n, OpKind.MULT: n, OpKind.ADD: n - 1, OpKind.CPU_OP: 2})
    if k is KernelId.WORDCOUNT:
        return Counter({OpKind.CMP_EQ: 3 * n, OpKind.ADD: 3 * n})
    raise ValueError(k)


def generate_all(sizes: Optional[dict[KernelId, int]] = None) -> dict[KernelId, Trace]:
    sizes = sizes or DESK_SIZES
    return {k: generate(KernelSpec(k, sizes[k])) for k in KernelId}
