"""Group-to-level mapping: latency/throughput models and the three placement strategies."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

from .grouping import ComputeGroup
from .hierarchy import MemoryLevel, _exact
from .isa import OpKind


@dataclass
class TechParams:
    cpu_clock_ghz: float = 2.0
    group_critical_path_ps: dict = field(
        default_factory=lambda: {"log-sub": 294.0, "add-comp": 265.0, "mult-shift": 452.0}
    )
    # cycles per bit of ripple-carry propagation
    carry_delay_cycles: dict = field(
        default_factory=lambda: {OpKind.ADD: 1, OpKind.SUB: 2, OpKind.MULT: 2}
    )
    mult_width_bits: int = 16
    # used for groups whose name has no entry above
    default_critical_path_ps: float = 452.0
    # single combined unit of the single-level baselines
    combined_critical_path_ps: float = 692.0
    combined_access_penalty: dict = field(default_factory=lambda: {"L2": 1.58, "MEM": 1.53})
    # words a group processes side by side in one row-wide bit-line operation;
    # the combined baseline unit serializes its subarray instead
    group_lanes: int = 16

    def __post_init__(self):
        self.carry_delay_cycles = {OpKind(k): v for k, v in self.carry_delay_cycles.items()}
        if self.cpu_clock_ghz <= 0:
            raise ValueError("clock must be positive")
        if self.group_lanes < 1:
            raise ValueError("group_lanes must be >= 1")
        if any(v <= 0 for v in self.carry_delay_cycles.values()):
            raise ValueError("carry delays must be positive")
        if any(v < 0 for v in self.group_critical_path_ps.values()):
            raise ValueError("critical paths must be non-negative")

    def critical_path_ps(self, group: ComputeGroup) -> float:
        return self.group_critical_path_ps.get(group.name, self.default_critical_path_ps)

    def to_dict(self) -> dict:
        return {
            "cpu_clock_ghz": self.cpu_clock_ghz,
            "group_critical_path_ps": dict(self.group_critical_path_ps),
            "carry_delay_cycles": {k.value: v for k, v in self.carry_delay_cycles.items()},
            "mult_width_bits": self.mult_width_bits,
            "default_critical_path_ps": self.default_critical_path_ps,
            "combined_critical_path_ps": self.combined_critical_path_ps,
            "combined_access_penalty": dict(self.combined_access_penalty),
            "group_lanes": self.group_lanes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TechParams":
        return cls(**d)


def ps_to_cycles(ps: float, clock_ghz: float) -> int:
    """Round a delay up to whole clock cycles; zero stays zero."""
    if ps <= 0:
        return 0
    return max(1, math.ceil(_exact(ps) * _exact(clock_ghz) / 1000))


def _hosted(group: ComputeGroup):
    return group.hosted or group.members


def latency_total(group: ComputeGroup, level: MemoryLevel, tech: Optional[TechParams] = None) -> int:
    tech = tech or TechParams()
    cp = ps_to_cycles(tech.critical_path_ps(group), tech.cpu_clock_ghz)
    return cp + level.subarray_read_lat + level.subarray_write_lat


def latency_total_exact(group: ComputeGroup, level: MemoryLevel, tech: Optional[TechParams] = None) -> Fraction:
    """Same as latency_total without rounding the critical path to whole cycles."""
    tech = tech or TechParams()
    cp = _exact(tech.critical_path_ps(group)) * _exact(tech.cpu_clock_ghz) / 1000
    return cp + level.subarray_read_lat + level.subarray_write_lat


def _units(level: MemoryLevel) -> int:
    if level.units <= 0:
        raise ValueError(f"level {level.name} has no compute units")
    return level.units


def throughput(group: ComputeGroup, level: MemoryLevel, tech: Optional[TechParams] = None) -> Fraction:
    return Fraction(_units(level), latency_total(group, level, tech))


def carry_delay(kind: OpKind, tech: Optional[TechParams] = None) -> int:
    tech = tech or TechParams()
    return tech.carry_delay_cycles.get(kind, 0)


def effective_width(kind: OpKind, width_bits: int, tech: TechParams) -> int:
    # the multiplier consumes at most mult_width_bits-wide inputs
    return min(width_bits, tech.mult_width_bits) if kind is OpKind.MULT else width_bits


def op_carry_cycles(kind: OpKind, width_bits: int, tech: TechParams) -> int:
    return carry_delay(kind, tech) * effective_width(kind, width_bits, tech)


def group_carry_cycles(group: ComputeGroup, width_bits: int, tech: TechParams) -> int:
    return max((op_carry_cycles(k, width_bits, tech) for k in _hosted(group)), default=0)


def latency_ripple_carry(
    group: ComputeGroup, level: MemoryLevel, width_bits: int, tech: Optional[TechParams] = None
) -> int:
    if width_bits < 1:
        raise ValueError("width_bits must be >= 1")
    tech = tech or TechParams()
    return group_carry_cycles(group, width_bits, tech) + latency_total(group, level, tech)


def throughput_ripple_carry(
    group: ComputeGroup, level: MemoryLevel, width_bits: int, tech: Optional[TechParams] = None
) -> Fraction:
    return Fraction(_units(level), latency_ripple_carry(group, level, width_bits, tech))


def combined_unit_latency(level: MemoryLevel, kind: OpKind, width_bits: int, tech: Optional[TechParams] = None) -> int:
    """Occupancy of the single all-operation unit used by the single-level baselines."""
    tech = tech or TechParams()
    cp = ps_to_cycles(tech.combined_critical_path_ps, tech.cpu_clock_ghz)
    pen = _exact(tech.combined_access_penalty.get(level.name, 1.0))
    access = math.ceil((level.subarray_read_lat + level.subarray_write_lat) * pen)
    return cp + access + op_carry_cycles(kind, width_bits, tech)


# -- strategies ------------------------------------------------------------------

class Strategy(str, Enum):
    UNITS = "units"
    THROUGHPUT = "throughput"
    RC = "rc"

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        key = text.strip().lower()
        aliases = {"rc-throughput": "rc", "rc_throughput": "rc", "unit_count": "units", "unit-count": "units"}
        return cls(aliases.get(key, key))


STRATEGY_LABELS = {
    Strategy.UNITS: "Number of compute units",
    Strategy.THROUGHPUT: "Throughput",
    Strategy.RC: "Ripple-carry-aware throughput",
}


@dataclass
class MappingAssignment:
    strategy: str
    placement: dict  # group_id -> level name
    groups: list = field(default_factory=list)

    def level_of(self, group) -> str:
        gid = group.group_id if isinstance(group, ComputeGroup) else group
        return self.placement[gid]

    def by_level(self) -> dict[str, list[ComputeGroup]]:
        out: dict[str, list] = {}
        for g in self.groups:
            out.setdefault(self.placement[g.group_id], []).append(g)
        return out

    def names_by_level(self) -> dict[str, str]:
        return {lv: "+".join(g.name for g in gs) for lv, gs in self.by_level().items()}

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "placement": {g.name: self.placement[g.group_id] for g in self.groups},
        }


def _freq(freqs: Optional[Mapping], g: ComputeGroup) -> float:
    if not freqs:
        return 0.0
    if g.name in freqs:
        return freqs[g.name]
    return freqs.get(g.group_id, 0.0)


def strategy_keys(
    strategy: Strategy,
    groups: Sequence[ComputeGroup],
    freqs: Optional[Mapping],
    levels: Sequence[MemoryLevel],
    width_bits: int = 32,
    tech: Optional[TechParams] = None,
) -> dict[tuple[int, int], tuple]:
    """Objective key for placing group i on level j; larger is better. Keys are pairwise distinct."""
    tech = tech or TechParams()
    keys = {}
    for i, g in enumerate(groups):
        f = Fraction(_exact(_freq(freqs, g)))
        for j, lv in enumerate(levels):
            tie = (f, -latency_total(g, lv, tech), -g.group_id, -j)
            if strategy is Strategy.UNITS:
                slots = lv.num_subarrays
                keys[i, j] = (f * slots, f, slots, -g.group_id, -j)
                continue
            exact_lat = latency_total_exact(g, lv, tech)
            if strategy is Strategy.THROUGHPUT:
                coarse = throughput(g, lv, tech)
                fine = Fraction(_units(lv)) / exact_lat
            else:
                carry = group_carry_cycles(g, width_bits, tech)
                coarse = throughput_ripple_carry(g, lv, width_bits, tech)
                fine = Fraction(_units(lv)) / (exact_lat + carry)
            keys[i, j] = (coarse, fine) + tie
    return keys


def _greedy(keys: Mapping[tuple[int, int], tuple], m: int, n: int) -> dict[int, int]:
    """Repeatedly take the best remaining (group, level) cell; levels are reused only once all are taken."""
    out: dict[int, int] = {}
    free = set(range(n))
    while len(out) < m:
        if not free:
            free = set(range(n))
        i, j = max(((i, j) for i in range(m) if i not in out for j in free), key=lambda c: keys[c])
        out[i] = j
        free.discard(j)
    return out


def assign(
    strategy: Strategy,
    groups: Sequence[ComputeGroup],
    freqs: Optional[Mapping],
    levels: Sequence[MemoryLevel],
    width_bits: int = 32,
    tech: Optional[TechParams] = None,
) -> MappingAssignment:
    strategy = Strategy(strategy)
    if not levels:
        raise ValueError("no memory levels")
    keys = strategy_keys(strategy, groups, freqs, levels, width_bits, tech)
    chosen = _greedy(keys, len(groups), len(levels))
    placement = {groups[i].group_id: levels[j].name for i, j in chosen.items()}
    return MappingAssignment(strategy.value, placement, list(groups))


def map_by_unit_count(groups, freqs, levels, tech=None) -> MappingAssignment:
    return assign(Strategy.UNITS, groups, freqs, levels, tech=tech)


def map_by_throughput(groups, freqs, levels, tech=None) -> MappingAssignment:
    return assign(Strategy.THROUGHPUT, groups, freqs, levels, tech=tech)


def map_by_rc_throughput(groups, freqs, levels, width_bits: int = 32, tech=None) -> MappingAssignment:
    return assign(Strategy.RC, groups, freqs, levels, width_bits, tech)


def exhaustive_assign(
    strategy: Strategy,
    groups: Sequence[ComputeGroup],
    freqs: Optional[Mapping],
    levels: Sequence[MemoryLevel],
    width_bits: int = 32,
    tech: Optional[TechParams] = None,
) -> MappingAssignment:
    """Reference search over every injective placement: maximize the descending-sorted key list."""
    strategy = Strategy(strategy)
    m, n = len(groups), len(levels)
    if m > n:
        raise ValueError("exhaustive search needs at least as many levels as groups")
    keys = strategy_keys(strategy, groups, freqs, levels, width_bits, tech)
    best, best_val = None, None
    for perm in itertools.permutations(range(n), m):
        val = sorted((keys[i, perm[i]] for i in range(m)), reverse=True)
        if best_val is None or val > best_val:
            best, best_val = perm, val
    placement = {groups[i].group_id: levels[best[i]].name for i in range(m)}
    return MappingAssignment(strategy.value, placement, list(groups))


STRATEGY_FUNCS: dict[Strategy, Callable] = {
    Strategy.UNITS: map_by_unit_count,
    Strategy.THROUGHPUT: map_by_throughput,
    Strategy.RC: map_by_rc_throughput,
}


def mapping_table(
    groups: Sequence[ComputeGroup],
    freqs: Optional[Mapping],
    levels: Sequence[MemoryLevel],
    width_bits: int = 32,
    tech: Optional[TechParams] = None,
    strategies: Sequence[Strategy] = tuple(Strategy),
) -> dict[Strategy, MappingAssignment]:
    return {s: assign(s, groups, freqs, levels, width_bits, tech) for s in strategies}


def format_mapping_table(table: Mapping[Strategy, MappingAssignment], level_names: Sequence[str]) -> str:
    rows = [["Strategy"] + list(level_names)]
    for s, a in table.items():
        names = a.names_by_level()
        rows.append([STRATEGY_LABELS.get(Strategy(s), str(s))] + [names.get(lv, "-") for lv in level_names])
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
