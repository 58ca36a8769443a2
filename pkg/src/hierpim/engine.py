"""Cross-level execution model: pipelined in-order scheduling, data residence and energy accounting.

Every compute instruction runs on a unit at the level hosting its kind. A level issues its
instructions in program order; levels run concurrently. Operands live in per-value validity
windows (a level plus a time interval bounded by retention). A consumer pulls its operand from
whichever window gives the earliest arrival, with the transfer issued just in time, so
transfers overlap unrelated compute. Results stream to consumers as soon as they complete.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from .grouping import ComputeGroup, canonical_groups, kind_group_map
from .hierarchy import Hierarchy, hop_cost
from .isa import LINE_BYTES, OpKind, Trace
from .mapping import (
    MappingAssignment,
    Strategy,
    TechParams,
    assign,
    combined_unit_latency,
    latency_total,
    op_carry_cycles,
)

CPU = "CPU"
LINE_BITS = LINE_BYTES * 8
INF = math.inf


class Mode(str, Enum):
    CHIME = "CHIME"
    STT_CIM_L2 = "STT_CIM_L2"
    STT_CIM_MEM = "STT_CIM_MEM"
    CPU = "CPU"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        key = text.strip().upper().replace("-", "_")
        aliases = {"STT_CIM_L2": "STT_CIM_L2", "STTCIM_L2": "STT_CIM_L2", "STTCIM_MEM": "STT_CIM_MEM"}
        return cls(aliases.get(key, key))

    @property
    def single_level(self) -> Optional[str]:
        return {Mode.STT_CIM_L2: "L2", Mode.STT_CIM_MEM: "MEM"}.get(self)


class SimulationError(RuntimeError):
    pass


def _default_cpu_cycles() -> dict:
    d = {k: 1 for k in OpKind}
    d[OpKind.MULT] = 3
    d[OpKind.CPU_OP] = 20
    return d


def _default_cpu_energy() -> dict:
    d = {k: 30.0 for k in OpKind}
    d[OpKind.MULT] = 90.0
    d[OpKind.CPU_OP] = 600.0
    return d


@dataclass
class CpuParams:
    """Abstract in-order core: cycles and energy (pJ) per operation, excluding memory accesses."""

    cost_cycles: dict = field(default_factory=_default_cpu_cycles)
    energy_pj: dict = field(default_factory=_default_cpu_energy)

    def __post_init__(self):
        base_c, base_e = _default_cpu_cycles(), _default_cpu_energy()
        base_c.update({OpKind(k): v for k, v in self.cost_cycles.items()})
        base_e.update({OpKind(k): v for k, v in self.energy_pj.items()})
        self.cost_cycles, self.energy_pj = base_c, base_e

    def to_dict(self) -> dict:
        return {
            "cost_cycles": {k.value: v for k, v in self.cost_cycles.items()},
            "energy_pj": {k.value: v for k, v in self.energy_pj.items()},
        }


@dataclass
class MachineConfig:
    hierarchy: Hierarchy = field(default_factory=Hierarchy)
    groups: list = field(default_factory=canonical_groups)
    assignment: Optional[MappingAssignment] = None
    mode: Mode = Mode.CHIME
    tech: TechParams = field(default_factory=TechParams)
    cpu: CpuParams = field(default_factory=CpuParams)
    # where program inputs reside before execution
    initial_level: str = "MEM"

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.mode is Mode.CHIME and self.assignment is None:
            raise ValueError("CHIME mode needs a group-to-level assignment")
        lvl = self.mode.single_level
        if lvl is not None and lvl not in self.hierarchy.index:
            raise ValueError(f"mode {self.mode.value} needs a {lvl} level")
        if self.initial_level not in self.hierarchy.index:
            raise ValueError(f"unknown initial level {self.initial_level!r}")

    @property
    def strategy(self) -> str:
        return self.assignment.strategy if (self.assignment and self.mode is Mode.CHIME) else ""

    def host(self, kind: OpKind) -> str:
        """Level (or ``CPU``) executing ``kind``."""
        if not kind.is_compute:
            return CPU
        if self.mode is Mode.CPU:
            return CPU
        lvl = self.mode.single_level
        if lvl is not None:
            return lvl
        gid = kind_group_map(self.groups).get(kind)
        if gid is None:
            return CPU
        return self.assignment.level_of(gid)

    def occupancy(self, kind: OpKind, width_bits: int) -> int:
        """Unit occupancy in cycles: own carry chain plus the host group's array latency."""
        host = self.host(kind)
        if host == CPU:
            return self.cpu.cost_cycles[kind]
        level = self.hierarchy[host]
        if self.mode.single_level is not None:
            return combined_unit_latency(level, kind, width_bits, self.tech)
        gid = kind_group_map(self.groups)[kind]
        group = next(g for g in self.groups if g.group_id == gid)
        return op_carry_cycles(kind, width_bits, self.tech) + latency_total(group, level, self.tech)

    def units(self, host: str) -> int:
        if host == CPU:
            return 1
        n = self.hierarchy[host].units
        if self.mode is Mode.CHIME:
            n *= self.tech.group_lanes
        if n <= 0:
            raise SimulationError(f"level {host} hosts operations but has no compute units")
        return n


def build_machine(
    mode: Mode | str,
    strategy: Strategy | str = Strategy.RC,
    groups: Optional[Sequence[ComputeGroup]] = None,
    freqs=None,
    hierarchy: Optional[Hierarchy] = None,
    tech: Optional[TechParams] = None,
    cpu: Optional[CpuParams] = None,
    width_bits: int = 32,
    **kw,
) -> MachineConfig:
    hierarchy = hierarchy or Hierarchy()
    tech = tech or TechParams()
    groups = list(groups) if groups is not None else canonical_groups()
    mode = Mode(mode)
    assignment = None
    if mode is Mode.CHIME:
        assignment = assign(Strategy(strategy), groups, freqs, hierarchy.levels, width_bits, tech)
    return MachineConfig(hierarchy, groups, assignment, mode, tech, cpu or CpuParams(), **kw)


@dataclass
class SimResult:
    makespan_cycles: float = 0
    energy_pj: dict = field(default_factory=lambda: {"compute": 0.0, "static": 0.0, "transfer": 0.0, "cpu": 0.0})
    level_busy: dict = field(default_factory=dict)
    stalls: dict = field(default_factory=lambda: {"unit-busy": 0, "operand-transfer": 0, "dependence": 0})
    instructions: int = 0
    transfers: int = 0
    mode: str = ""
    strategy: str = ""
    name: str = ""
    schedule: Optional[list] = None

    @property
    def energy_total_pj(self) -> float:
        return math.fsum(self.energy_pj.values())

    def breakdown_pct(self) -> dict:
        tot = self.energy_total_pj
        if tot == 0:
            return {k: 0.0 for k in self.energy_pj}
        return {k: 100.0 * v / tot for k, v in self.energy_pj.items()}

    def utilization(self, machine: MachineConfig) -> dict:
        out = {}
        for host, busy in self.level_busy.items():
            cap = machine.units(host) * self.makespan_cycles
            out[host] = busy / cap if cap else 0.0
        return out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "strategy": self.strategy,
            "makespan_cycles": self.makespan_cycles,
            "energy_pj": dict(self.energy_pj),
            "energy_total_pj": self.energy_total_pj,
            "level_busy": dict(self.level_busy),
            "stalls": dict(self.stalls),
            "instructions": self.instructions,
            "transfers": self.transfers,
        }


def static_energy_pj(hier: Hierarchy, cycles: float, clock_ghz: float) -> float:
    # mW * ns = pJ
    ns = cycles / clock_ghz
    return math.fsum(lv.leakage_mw for lv in hier) * ns


# -- data residence ---------------------------------------------------------------

class _Residence:
    """Validity windows per value: [level index, valid_from, expires].

    Values are program inputs (keyed by 64-byte line) or instruction results (keyed by
    producer id). Results are versioned, so later writes to a block never disturb readers
    of an earlier version.
    """

    def __init__(self, machine: MachineConfig):
        hier = machine.hierarchy
        self.hier = hier
        self.n = len(hier)
        # the CPU reads and writes through the level nearest to it
        self.cpu_level = 0
        clock = machine.tech.cpu_clock_ghz
        self.ret = [float(lv.retention_cycles(clock)) if lv.volatile else INF for lv in hier]
        self.lat = [[0] * self.n for _ in range(self.n)]
        self.en = [[0.0] * self.n for _ in range(self.n)]
        for a in range(self.n):
            for b in range(self.n):
                if a == b:
                    continue
                step = 1 if b > a else -1
                for k in range(a, b, step):
                    c, e = hop_cost(LINE_BITS, hier.levels[k], hier.levels[k + step])
                    self.lat[a][b] += c
                    self.en[a][b] += e
        self.windows: dict = {}
        self.init_level = hier.index[machine.initial_level]
        self.transfer_energy = 0.0
        self.transfers = 0
        # (line, from, to) -> (issue, arrival) of the latest line transfer
        self.ships: dict = {}
        # (block, level) -> [write time, expiry, superseded] of the newest dirty version
        self.dirty: dict = {}
        self.writebacks: list = []
        # write-back windows relative to the write time, per level
        self.chain = []
        for x in range(self.n):
            out, lv, exp = [], x, self.ret[x]
            while exp < INF and lv + 1 < self.n:
                arr = exp + self.lat[lv][lv + 1]
                lv += 1
                out.append((lv, arr, arr + self.ret[lv]))
                exp = arr + self.ret[lv]
            self.chain.append(out)

    def input_windows(self, line: int) -> list:
        w = self.windows.get(("in", line))
        if w is None:
            i = self.init_level
            w = [[i, 0.0, self.ret[i], line]]
            # a copy below the initial level always exists
            if i != self.n - 1:
                w.append([self.n - 1, 0.0, INF, line])
            self.windows[("in", line)] = w
        return w

    def ready(self, wins: list, x: int, t: float, floor: float = 0.0) -> tuple:
        """Earliest time >= t at which the value can be at level ``x``; new transfers issue no earlier than ``floor``.

        Returns (time, window, arrival, shipped) where ``arrival`` is None when the value is
        already at ``x`` and ``shipped`` marks a ride on an earlier transfer of the same line.
        """
        best = None
        for win in wins:
            lv, vf, ve, line = win
            if lv == x:
                if t < vf:
                    cand = vf
                elif t <= ve:
                    cand = t
                else:
                    continue
                key, arr, shipped = (cand, 0, 0), None, False
            else:
                T = self.lat[lv][x]
                ship = self.ships.get((line, lv, x))
                if ship is not None and max(vf, floor) <= ship[0] <= ve and ship[1] + self.ret[x] >= t:
                    # the line already left the source after this value was written there
                    arr = ship[1]
                    cand = max(t, arr)
                    key, shipped = (cand, 0, 1), True
                else:
                    if floor > ve:
                        continue
                    e, late = max(vf, floor) + T, ve + T
                    arr = min(max(t, e), late)
                    if arr + self.ret[x] < t:
                        continue
                    cand = max(t, arr)
                    key, shipped = (cand, 1, T), False
            if best is None or key < best[0]:
                best = (key, win, arr, shipped)
        if best is None:
            raise SimulationError("operand has no valid copy anywhere in the hierarchy")
        return best[0][0], best[1], best[2], best[3]

    def commit(self, wins: list, x: int, t: float, floor: float = 0.0) -> float:
        return self.apply(wins, x, self.ready(wins, x, t, floor))

    def apply(self, wins: list, x: int, result: tuple) -> float:
        """Record the transfer (if any) behind a ``ready`` result."""
        when, win, arr, shipped = result
        if arr is not None:
            if not shipped:
                src = win[0]
                self.transfer_energy += self.en[src][x]
                self.transfers += 1
                self.ships[(win[3], src, x)] = (arr - self.lat[src][x], arr)
            wins.append([x, arr, arr + self.ret[x], win[3]])
        return when

    def produce(self, pid: int, block, x: int, f: float) -> None:
        line = block.address // LINE_BYTES
        r = self.ret[x]
        if r == INF:
            self.windows[pid] = [[x, f, INF, line]]
            return
        # a dirty copy is written back one level down each time its retention runs out
        wins = [[x, f, f + r, line]]
        wins.extend([lv, f + a, f + b, line] for lv, a, b in self.chain[x])
        self.windows[pid] = wins
        key = (block, x)
        prev = self.dirty.get(key)
        if prev is not None and f <= prev[1]:
            prev[2] = True
        rec = [f, f + r, False, x, wins]
        self.dirty[key] = rec
        self.writebacks.append(rec)

    def writeback_energy(self, horizon: float) -> float:
        total = 0.0
        for f, exp, superseded, x, wins in self.writebacks:
            if superseded:
                continue
            for a, b in zip(wins, wins[1:]):
                if a[2] < horizon:
                    total += self.en[a[0]][b[0]]
                    self.transfers += 1
        return total


# -- scheduler ----------------------------------------------------------------------

def _check_forward(trace: Trace) -> None:
    for p, c in trace.deps:
        if p >= c:
            raise SimulationError(f"dependence {p}->{c} points backwards; cyclic residence requirement")


def simulate(trace: Trace, machine: MachineConfig, pipelined: bool = True, record: bool = False) -> SimResult:
    """Run ``trace`` on ``machine``.

    With ``pipelined=False`` each run of same-level instructions (a stage) drains, transfers
    included, before the next stage starts. With ``record`` the result carries the per-instruction
    schedule as (id, host, start, end) tuples.
    """
    if machine.mode is Mode.CPU:
        return simulate_cpu(trace, machine)
    _check_forward(trace)
    hier = machine.hierarchy
    res = _Residence(machine)
    hosts = hier.names + [CPU]
    host_idx = {h: i for i, h in enumerate(hosts)}
    cpu_i = host_idx[CPU]
    # data for CPU_OPs is staged at the level nearest the core
    data_level = list(range(len(hier))) + [res.cpu_level]

    # unit free times per host, created on first use
    heaps: list = [None] * len(hosts)
    last_start = [0.0] * len(hosts)
    busy = [0.0] * len(hosts)
    stalls = {"unit-busy": 0.0, "operand-transfer": 0.0, "dependence": 0.0}
    compute_e = 0.0
    cpu_e = 0.0
    finish: dict = {}
    last_writer: dict = {}
    makespan = 0.0
    schedule = [] if record else None

    # nonpipelined: barrier = completion of every earlier run on a different level
    barrier = 0.0
    run_host = None
    run_end = 0.0

    info: dict = {}
    levels = hier.levels
    for ins in trace.instructions:
        kind, width = ins.kind, ins.width_bits
        key = (kind, width)
        meta = info.get(key)
        if meta is None:
            h = machine.host(kind)
            hi = host_idx[h]
            occ = machine.occupancy(kind, width) if kind.is_compute or kind is OpKind.CPU_OP else 0
            if hi == cpu_i:
                e = machine.cpu.energy_pj[kind]
                lv0 = levels[res.cpu_level]
                occ += len(ins.srcs) * lv0.total_read_lat + lv0.total_write_lat
            else:
                lv = levels[hi]
                e = width * (lv.read_energy_pj_bit + lv.write_energy_pj_bit)
            meta = info[key] = (hi, occ, e)
        hi, occ, e = meta

        if kind is OpKind.INVALIDATE or kind is OpKind.MOVE:
            _data_op(ins, res, last_writer, hier)
            continue

        if kind is OpKind.COPY:
            # copies execute where the source lives; treat as a zero-carry array op at the initial level
            hi = res.init_level if ins.srcs[0] not in last_writer else finish[last_writer[ins.srcs[0]]][1]
            lv = levels[hi]
            occ = lv.subarray_read_lat + lv.subarray_write_lat
            e = ins.srcs[0].size_bits * (lv.read_energy_pj_bit + lv.write_energy_pj_bit)

        if not pipelined and hi != run_host:
            barrier = max(barrier, run_end)
            run_host, run_end = hi, 0.0

        x = data_level[hi]
        heap = heaps[hi]
        if heap is None:
            heap = heaps[hi] = [0.0] * machine.units(hosts[hi])
        base = max(last_start[hi], barrier)
        dep = base
        wins_list = []
        for s in ins.srcs:
            p = last_writer.get(s)
            if p is None:
                w = res.input_windows(s.address // LINE_BYTES)
            else:
                w = res.windows[p]
                if finish[p][0] > dep:
                    dep = finish[p][0]
            # both operands may be the same value, e.g. two blocks of one input line
            if not wins_list or w is not wins_list[0]:
                wins_list.append(w)
        ready = res.ready
        operand = dep
        for w in wins_list:
            rt = ready(w, x, dep, barrier)[0]
            if rt > operand:
                operand = rt
        t = max(operand, heap[0])
        while True:
            r = t
            results = [ready(w, x, t, barrier) for w in wins_list]
            for rr in results:
                if rr[0] > r:
                    r = rr[0]
            if r == t:
                break
            t = r
        if len(wins_list) == 1:
            res.apply(wins_list[0], x, results[0])
        else:
            # re-evaluate: the first transfer may carry the line the second operand needs
            for w in wins_list:
                res.commit(w, x, t, barrier)
        # attribute the wait to the binding constraint, in precedence order
        stalls["dependence"] += dep - base
        stalls["operand-transfer"] += operand - dep
        stalls["unit-busy"] += t - operand
        start = t
        end = start + occ
        heapq.heapreplace(heap, end)
        last_start[hi] = start
        busy[hi] += occ
        if hi == cpu_i:
            cpu_e += e + _cpu_access_energy(ins, levels[res.cpu_level])
        else:
            compute_e += e
        if ins.dest is not None:
            finish[ins.id] = (end, x)
            res.produce(ins.id, ins.dest, x, end)
            last_writer[ins.dest] = ins.id
        if record:
            schedule.append((ins.id, hosts[hi], start, end))
        if end > makespan:
            makespan = end
        if end > run_end:
            run_end = end

    out = SimResult(name=trace.name, mode=machine.mode.value, strategy=machine.strategy)
    out.makespan_cycles = makespan
    out.instructions = len(trace.instructions)
    out.level_busy = {hosts[i]: busy[i] for i in range(len(hosts)) if busy[i]}
    out.stalls = stalls
    out.energy_pj["compute"] = compute_e
    out.energy_pj["cpu"] = cpu_e
    out.energy_pj["transfer"] = res.transfer_energy + res.writeback_energy(makespan)
    out.energy_pj["static"] = static_energy_pj(hier, makespan, machine.tech.cpu_clock_ghz)
    out.transfers = res.transfers
    out.schedule = schedule
    return out


def _cpu_access_energy(ins, lv) -> float:
    e = sum(s.size_bits for s in ins.srcs) * lv.read_energy_pj_bit
    if ins.dest is not None:
        e += ins.dest.size_bits * lv.write_energy_pj_bit
    return e


def _data_op(ins, res: _Residence, last_writer: dict, hier: Hierarchy) -> None:
    """MOVE and INVALIDATE only retag residence; their latency is absorbed by the next consumer."""
    s = ins.srcs[0]
    p = last_writer.get(s)
    wins = res.input_windows(s.address // LINE_BYTES) if p is None else res.windows[p]
    if ins.kind is OpKind.INVALIDATE:
        keep = [w for w in wins if w[2] == INF]
        if keep:
            wins[:] = keep
        return
    x = hier.index[ins.level]
    res.commit(wins, x, 0.0)


def simulate_nonpipelined(trace: Trace, machine: MachineConfig) -> SimResult:
    return simulate(trace, machine, pipelined=False)


# -- CPU baseline -------------------------------------------------------------------

def simulate_cpu(trace: Trace, machine: MachineConfig) -> SimResult:
    """Serial in-order core with blocking misses through the cache levels."""
    hier = machine.hierarchy
    n = len(hier)
    levels = hier.levels
    clock = machine.tech.cpu_clock_ghz
    ret = [float(lv.retention_cycles(clock)) if lv.volatile else INF for lv in levels]
    # per level: line -> [valid_from, expires, dirty]
    res: list[dict] = [dict() for _ in range(n)]
    init = hier.index[machine.initial_level]
    hop = [hop_cost(LINE_BITS, levels[i + 1], levels[i]) for i in range(n - 1)]  # fill i+1 -> i
    wb = [hop_cost(LINE_BITS, levels[i], levels[i + 1]) for i in range(n - 1)]  # write-back i -> i+1
    l0 = levels[0]
    cost = machine.cpu.cost_cycles
    op_e = machine.cpu.energy_pj
    t = 0.0
    e_cpu = 0.0
    e_xfer = 0.0
    xfers = 0

    evicted: list[set] = [set() for _ in range(n)]

    def valid(i, line, now):
        # True when level i holds the line at ``now``; an expired dirty line is written back
        nonlocal e_xfer, xfers
        if i == n - 1:
            return True
        ent = res[i].get(line)
        if ent is None:
            if i != init or line in evicted[i]:
                return False
            ent = res[i][line] = [0.0, ret[i], False]
        if now <= ent[1]:
            return True
        del res[i][line]
        evicted[i].add(line)
        if ent[2]:
            e_xfer += wb[i][1]
            xfers += 1
            arr = ent[1] + wb[i][0]
            res[i + 1][line] = [arr, arr + ret[i + 1], True]
        return False

    def ensure_l1(line, now):
        nonlocal e_xfer, xfers
        if valid(0, line, now):
            return now
        j = 1
        while not valid(j, line, now):
            j += 1
        for k in range(j, 0, -1):
            now += hop[k - 1][0]
            e_xfer += hop[k - 1][1]
            xfers += 1
            res[k - 1][line] = [now, now + ret[k - 1], False]
        return now

    for ins in trace.instructions:
        k = ins.kind
        for s in ins.srcs:
            t = ensure_l1(s.line, t)
            t += l0.total_read_lat
            e_cpu += s.size_bits * l0.read_energy_pj_bit
        t += cost[k]
        e_cpu += op_e[k]
        if ins.dest is not None:
            line = ins.dest.line
            t = ensure_l1(line, t)
            t += l0.total_write_lat
            e_cpu += ins.dest.size_bits * l0.write_energy_pj_bit
            res[0][line] = [t, t + ret[0], True]
    # dirty lines whose retention ran out before the end were written back
    for i in range(n - 1):
        for line in list(res[i]):
            ent = res[i].get(line)
            if ent is not None and ent[2] and ent[1] < t:
                valid(i, line, t)

    out = SimResult(name=trace.name, mode=Mode.CPU.value)
    out.makespan_cycles = t
    out.instructions = len(trace.instructions)
    out.level_busy = {CPU: t} if t else {}
    out.energy_pj["cpu"] = e_cpu
    out.energy_pj["transfer"] = e_xfer
    out.energy_pj["static"] = static_energy_pj(hier, t, clock)
    out.transfers = xfers
    return out


def run(trace: Trace, machine: MachineConfig) -> SimResult:
    if machine.mode is Mode.CPU:
        return simulate_cpu(trace, machine)
    return simulate(trace, machine)


# -- reporting ----------------------------------------------------------------------

@dataclass
class Comparison:
    name: str
    mode: str
    strategy: str
    speedup: float
    energy_ratio: float
    breakdown_pct: dict


def report(results: Iterable[SimResult], baseline_mode: str = Mode.CPU.value) -> list[Comparison]:
    """Speedup and energy ratio of each result against the baseline run of the same workload."""
    results = list(results)
    base = {r.name: r for r in results if r.mode == baseline_mode}
    out = []
    for r in results:
        b = base.get(r.name)
        if b is None:
            continue
        sp = b.makespan_cycles / r.makespan_cycles if r.makespan_cycles else 1.0
        er = b.energy_total_pj / r.energy_total_pj if r.energy_total_pj else 1.0
        out.append(Comparison(r.name, r.mode, r.strategy, sp, er, r.breakdown_pct()))
    return out
