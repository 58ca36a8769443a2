"""Trace-driven simulator for compute units spread across a cache/memory hierarchy."""

from .engine import MachineConfig, Mode, SimResult, SimulationError, build_machine, simulate, simulate_cpu
from .grouping import ComputeGroup, canonical_groups, count_pairs, form_groups
from .hierarchy import Hierarchy, MemoryLevel, default_levels
from .isa import BlockAddr, Instruction, OpKind, Trace
from .mapping import MappingAssignment, Strategy, TechParams, assign
from .workloads import KernelId, KernelSpec, generate

__all__ = [
    "BlockAddr", "ComputeGroup", "Hierarchy", "Instruction", "KernelId", "KernelSpec",
    "MachineConfig", "MappingAssignment", "MemoryLevel", "Mode", "OpKind", "SimResult",
    "SimulationError", "Strategy", "TechParams", "Trace", "assign", "build_machine",
    "canonical_groups", "count_pairs", "default_levels", "form_groups", "generate",
    "simulate", "simulate_cpu",
]
__version__ = "0.1.0"
