"""Memory levels, retention counters and access/transfer cost model."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Optional, Sequence

from .isa import BlockAddr

CPU_CLOCK_GHZ = 2.0
LEVEL_NAMES = ("L1", "L2", "MEM")

# report-only area figures
COUNTER_AREA_OVERHEAD = 0.0075
GROUP_AREA_OVERHEAD = {"log-sub": 0.147, "add-comp": 0.1712, "mult-shift": 0.1745}

_YEAR_S = 365 * 24 * 3600


def _exact(x) -> Fraction:
    # decimal literal semantics: 75e-6 means exactly 75/10^6
    return Fraction(repr(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class MemoryLevel:
    name: str
    capacity_bytes: int
    block_bytes: int = 64
    associativity: int = 1
    retention_s: float = math.inf
    total_read_lat: int = 1
    total_write_lat: int = 1
    subarray_read_lat: int = 1
    subarray_write_lat: int = 1
    read_energy_pj_bit: float = 0.0
    write_energy_pj_bit: float = 0.0
    leakage_mw: float = 0.0
    subarray_rows: int = 512
    subarray_cols: int = 512
    # caches carry retention counters; main memory is treated as non-volatile
    retention_counter: bool = True
    # compute units available to bit-line operations at this level; None means one per subarray
    num_compute_units: Optional[int] = None

    def __post_init__(self):
        if self.subarray_read_lat > self.total_read_lat or self.subarray_write_lat > self.total_write_lat:
            raise ValueError(f"{self.name}: subarray latency exceeds total latency")
        if self.capacity_bytes <= 0 or self.block_bytes <= 0:
            raise ValueError(f"{self.name}: capacity and block size must be positive")
        if self.num_compute_units is not None and self.num_compute_units < 0:
            raise ValueError(f"{self.name}: negative compute unit count")

    @property
    def num_subarrays(self) -> int:
        return max(1, self.capacity_bytes * 8 // (self.subarray_rows * self.subarray_cols))

    @property
    def units(self) -> int:
        return self.num_subarrays if self.num_compute_units is None else self.num_compute_units

    @property
    def volatile(self) -> bool:
        return self.retention_counter and math.isfinite(self.retention_s)

    def retention_cycles(self, clock_ghz: float = CPU_CLOCK_GHZ) -> Fraction:
        if not self.volatile:
            return Fraction(10**30)
        return _exact(self.retention_s) * _exact(clock_ghz) * 10**9

    def to_dict(self) -> dict:
        d = asdict(self)
        if not math.isfinite(self.retention_s):
            d["retention_s"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MemoryLevel":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown memory level fields: {sorted(unknown)}")
        d = dict(d)
        if isinstance(d.get("retention_s"), str):
            d["retention_s"] = float(d["retention_s"])
        return cls(**d)


def default_levels() -> list[MemoryLevel]:
    """STT-RAM L1 / L2 / main memory with relaxed cache retention."""
    # main memory compute is limited to a few enabled subarrays
    return [
        MemoryLevel("L1", 32 * 1024, 64, 4, 75e-6, 1, 2, 1, 2, 0.26, 3.30, 15.93),
        MemoryLevel("L2", 1024 * 1024, 64, 8, 10e-3, 2, 4, 2, 4, 0.88, 6.13, 281.63),
        MemoryLevel("MEM", 8 * 1024**3, 64, 1, 5 * _YEAR_S, 154, 110, 4, 5, 25.59, 6.42, 808.07,
                    retention_counter=False, num_compute_units=16),
    ]


class Hierarchy:
    """Ordered levels, nearest to the CPU first."""

    def __init__(self, levels: Optional[Sequence[MemoryLevel]] = None):
        self.levels = list(levels) if levels is not None else default_levels()
        self.index = {lv.name: i for i, lv in enumerate(self.levels)}
        if len(self.index) != len(self.levels):
            raise ValueError("duplicate level names")

    def __getitem__(self, name: str) -> MemoryLevel:
        return self.levels[self.index[name]]

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)

    @property
    def names(self) -> list[str]:
        return [lv.name for lv in self.levels]

    @property
    def bottom(self) -> MemoryLevel:
        return self.levels[-1]

    def lower(self, name: str) -> Optional[MemoryLevel]:
        i = self.index[name]
        return self.levels[i + 1] if i + 1 < len(self.levels) else None

    def path(self, src: str, dst: str) -> list[tuple[str, str]]:
        i, j = self.index[src], self.index[dst]
        step = 1 if j > i else -1
        return [(self.levels[k].name, self.levels[k + step].name) for k in range(i, j, step)]

    def to_list(self) -> list[dict]:
        return [lv.to_dict() for lv in self.levels]


# -- costs -----------------------------------------------------------------------

def access_cost(level: MemoryLevel, kind: str, bits: int, compute_cycles: Optional[int] = None) -> tuple[int, float]:
    """(cycles, energy_pj) of one access. Latency does not depend on ``bits``; energy is linear."""
    if kind == "read":
        return level.total_read_lat, bits * level.read_energy_pj_bit
    if kind == "write":
        return level.total_write_lat, bits * level.write_energy_pj_bit
    if kind == "compute":
        if compute_cycles is None:
            raise ValueError("compute access needs its latency from the mapping model")
        return compute_cycles, bits * (level.read_energy_pj_bit + level.write_energy_pj_bit)
    raise ValueError(f"unknown access kind {kind!r}")


def hop_cost(bits: int, src: MemoryLevel, dst: MemoryLevel) -> tuple[int, float]:
    rc, re = access_cost(src, "read", bits)
    wc, we = access_cost(dst, "write", bits)
    return rc + wc, re + we


def transfer_cost(bits: int, src: str, dst: str, hier: Optional[Hierarchy] = None) -> tuple[int, float]:
    """Read at the source plus write at the destination, summed over adjacent hops."""
    hier = hier or Hierarchy()
    cycles, energy = 0, 0.0
    for a, b in hier.path(src, dst):
        c, e = hop_cost(bits, hier[a], hier[b])
        cycles += c
        energy += e
    return cycles, energy


# -- retention ---------------------------------------------------------------------

@dataclass
class RetentionCounter:
    """N-bit counter clocked at retention / 2^N; the block expires when it wraps."""

    retention_s: float
    bits: int = 2
    state: int = 0
    # time since the last tick boundary, in seconds
    phase_s: Fraction = field(default=Fraction(0))

    @property
    def tick_s(self) -> Fraction:
        return _exact(self.retention_s) / (2 ** self.bits)

    def reset(self) -> None:
        self.state = 0
        self.phase_s = Fraction(0)

    def elapsed_s(self) -> Fraction:
        return self.state * self.tick_s + self.phase_s

    def advance(self, dt_s) -> Optional[Fraction]:
        """Advance by ``dt_s``; return the offset into the interval at which the block expired, if it did."""
        dt = _exact(dt_s)
        left = _exact(self.retention_s) - self.elapsed_s()
        if dt >= left:
            self.reset()
            return left
        total = self.elapsed_s() + dt
        self.state = int(total // self.tick_s)
        self.phase_s = total - self.state * self.tick_s
        return None


@dataclass
class BlockState:
    addr: BlockAddr
    level: str
    dirty: bool = False
    counter: Optional[RetentionCounter] = None
    valid: bool = True

    def write(self) -> None:
        self.dirty = True
        if self.counter is not None:
            self.counter.reset()


def new_block_state(addr: BlockAddr, level: MemoryLevel, dirty: bool = False, bits: int = 2) -> BlockState:
    counter = RetentionCounter(level.retention_s, bits) if level.volatile else None
    return BlockState(addr, level.name, dirty, counter)


@dataclass(frozen=True)
class ExpiryEvent:
    addr: BlockAddr
    level: str
    time_s: Fraction
    writeback_to: Optional[str]

    @property
    def time_cycles(self) -> Fraction:
        return self.time_s * _exact(CPU_CLOCK_GHZ) * 10**9


def tick_counters(
    states: Sequence[BlockState],
    elapsed_cycles,
    hier: Optional[Hierarchy] = None,
    start_cycle=0,
    clock_ghz: float = CPU_CLOCK_GHZ,
) -> list[ExpiryEvent]:
    """Advance every valid block's counter; expired blocks are invalidated, dirty ones written back."""
    hier = hier or Hierarchy()
    hz = _exact(clock_ghz) * 10**9
    t0 = _exact(start_cycle) / hz
    dt = _exact(elapsed_cycles) / hz
    events = []
    for st in states:
        if not st.valid or st.counter is None:
            continue
        off = st.counter.advance(dt)
        if off is None:
            continue
        lower = hier.lower(st.level)
        wb = lower.name if (st.dirty and lower is not None) else None
        events.append(ExpiryEvent(st.addr, st.level, t0 + off, wb))
        st.valid = False
        st.dirty = False
    events.sort(key=lambda e: (e.time_s, e.level, e.addr))
    return events


# -- config files ----------------------------------------------------------------

def levels_from_json(text: str) -> list[MemoryLevel]:
    data = json.loads(text)
    if isinstance(data, dict):
        data = data["levels"]
    return [MemoryLevel.from_dict(d) for d in data]


def levels_to_json(levels: Sequence[MemoryLevel]) -> str:
    return json.dumps({"levels": [lv.to_dict() for lv in levels]}, indent=2)
