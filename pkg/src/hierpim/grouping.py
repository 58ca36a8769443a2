"""Pair counting and round-robin compute-group formation."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .isa import (
    COMPARE_KINDS,
    LOGICAL_KINDS,
    RIPPLE_KINDS,
    SHIFT_KINDS,
    InstructionPair,
    OpKind,
    Trace,
    extract_instruction_pairs,
)

PairCount = Counter  # InstructionPair -> int

CPU_FALLBACK = "cpu"

GROUP_NAMES = ("log-sub", "add-comp", "mult-shift")


@dataclass
class ComputeGroup:
    group_id: int
    members: frozenset = frozenset()
    pairs: list = field(default_factory=list)
    name: str = ""
    # kinds this group physically executes; see kind_hosts
    hosted: frozenset = frozenset()

    def __hash__(self):
        return hash((self.group_id, self.members, self.name))

    def __eq__(self, other):
        if not isinstance(other, ComputeGroup):
            return NotImplemented
        return (self.group_id, self.members, self.name) == (other.group_id, other.members, other.name)

    def has_ripple_member(self) -> bool:
        return any(k in RIPPLE_KINDS for k in self.hosted or self.members)

    def to_dict(self) -> dict:
        return {
            "group_id": self.group_id,
            "name": self.name,
            "members": sorted(k.value for k in self.members),
            "hosted": sorted(k.value for k in self.hosted),
            "pairs": [[p.producer_kind.value, p.consumer_kind.value] for p in self.pairs],
        }


def count_pairs(workloads: Iterable[Trace]) -> Counter:
    counts: Counter = Counter()
    for t in workloads:
        counts.update(extract_instruction_pairs(t))
    return counts


def sorted_pairs(counts: Mapping[InstructionPair, int]) -> list[InstructionPair]:
    """Descending by count; equal counts ordered by (producer, consumer) kind name."""
    return sorted(counts, key=lambda p: (-counts[p], p.sort_key()))


def label_group(members) -> str:
    """Name a group after its characteristic kinds, e.g. ``log-sub``."""
    ms = set(members)
    if not ms:
        return "empty"
    if OpKind.MULT in ms or ms & SHIFT_KINDS:
        return "mult-shift"
    if OpKind.ADD in ms or ms & COMPARE_KINDS:
        return "add-comp"
    if OpKind.SUB in ms or ms & LOGICAL_KINDS:
        return "log-sub"
    return "-".join(sorted(k.value.lower() for k in ms))


def form_groups(counts: Mapping[InstructionPair, int], m: int) -> list[ComputeGroup]:
    if m < 1:
        raise ValueError("m must be >= 1")
    groups = [ComputeGroup(g) for g in range(m)]
    for k, pair in enumerate(sorted_pairs(counts)):
        groups[k % m].pairs.append(pair)
    hosted = hosted_kinds(groups, counts)
    seen = set()
    for g in groups:
        g.members = frozenset(k for p in g.pairs for k in p)
        g.hosted = hosted[g.group_id]
        name = label_group(g.hosted)
        g.name = name if name not in seen else f"{name}#{g.group_id}"
        seen.add(g.name)
    return groups


def kind_hosts(groups: Sequence[ComputeGroup], counts: Optional[Mapping] = None) -> dict[OpKind, int]:
    """Map each kind to the group owning its highest-count pair (earliest sorted pair on ties)."""
    best: dict[OpKind, tuple] = {}
    for g in groups:
        for p in g.pairs:
            c = counts[p] if counts is not None else 0
            for kind in p:
                key = (-c, p.sort_key(), g.group_id)
                if kind not in best or key < best[kind][0]:
                    best[kind] = (key, g.group_id)
    return {k: v[1] for k, v in best.items()}


def hosted_kinds(groups: Sequence[ComputeGroup], counts: Optional[Mapping] = None) -> dict[int, frozenset]:
    hosts = kind_hosts(groups, counts)
    out = {g.group_id: set() for g in groups}
    for k, gid in hosts.items():
        out[gid].add(k)
    return {gid: frozenset(ks) for gid, ks in out.items()}


def canonical_groups() -> list[ComputeGroup]:
    """The three reference groups, used when no workload statistics are at hand."""
    members = [
        LOGICAL_KINDS | {OpKind.SUB},
        frozenset({OpKind.ADD}) | COMPARE_KINDS,
        frozenset({OpKind.MULT}) | SHIFT_KINDS,
    ]
    return [ComputeGroup(i, frozenset(ms), [], GROUP_NAMES[i], frozenset(ms)) for i, ms in enumerate(members)]


def kind_group_map(groups: Sequence[ComputeGroup]) -> dict[OpKind, int]:
    """Kind -> id of the group hosting it."""
    out = {}
    for g in groups:
        for k in g.hosted or g.members:
            out.setdefault(k, g.group_id)
    return out


def group_frequency(workloads: Sequence[Trace], groups: Sequence[ComputeGroup]) -> list[dict[str, float]]:
    """Per workload: fraction of compute instructions per group name plus ``cpu`` fallback."""
    hosts = kind_group_map(groups)
    names = {g.group_id: g.name for g in groups}
    out = []
    for t in workloads:
        kinds = Counter(ins.kind for ins in t.instructions if ins.kind.is_compute)
        out.append(frequency_from_kinds(kinds, hosts, names))
    return out


def frequency_from_kinds(kinds: Mapping[OpKind, int], hosts, names) -> dict[str, float]:
    row = {name: 0.0 for name in names.values()}
    row[CPU_FALLBACK] = 0.0
    total = sum(c for k, c in kinds.items() if k.is_compute)
    if total == 0:
        return row
    for k, c in kinds.items():
        if not k.is_compute:
            continue
        gid = hosts.get(k)
        row[names[gid] if gid is not None else CPU_FALLBACK] += c / total
    return row


def average_frequency(rows: Sequence[Mapping[str, float]]) -> dict[str, float]:
    if not rows:
        return {}
    keys = rows[0].keys()
    return {k: sum(r[k] for r in rows) / len(rows) for k in keys}
