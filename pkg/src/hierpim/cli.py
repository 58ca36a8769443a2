"""Command-line experiment driver: trace generation, grouping, mapping, simulation and sweeps."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .engine import CpuParams, Mode, SimResult, SimulationError, build_machine, simulate
from .grouping import (
    average_frequency,
    count_pairs,
    form_groups,
    group_frequency,
)
from .hierarchy import Hierarchy, MemoryLevel, default_levels
from .isa import Trace, dumps_json, format_trace, parse_trace, trace_from_dict, validate_trace
from .mapping import Strategy, TechParams, format_mapping_table, mapping_table
from .workloads import DESK_SIZES, KernelId, KernelSpec, generate

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_SIM = 0, 1, 2, 3

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = [
    "schema_version",
    "workload",
    "n",
    "mode",
    "strategy",
    "status",
    "makespan_cycles",
    "energy_total_pj",
    "energy_compute_pj",
    "energy_transfer_pj",
    "energy_static_pj",
    "energy_cpu_pj",
    "stall_unit_busy",
    "stall_operand_transfer",
    "stall_dependence",
    "instructions",
    "transfers",
    "error",
]
GROUP_COUNT = 3


class ConfigError(Exception):
    pass


class UsageError(Exception):
    pass


# -- configuration ----------------------------------------------------------------

@dataclass
class Config:
    levels: list = field(default_factory=default_levels)
    tech: TechParams = field(default_factory=TechParams)
    cpu: CpuParams = field(default_factory=CpuParams)
    initial_level: str = "MEM"
    width_bits: int = 32

    def hierarchy(self) -> Hierarchy:
        return Hierarchy(self.levels)

    def to_dict(self) -> dict:
        return {
            "levels": [lv.to_dict() for lv in self.levels],
            "tech": self.tech.to_dict(),
            "cpu": self.cpu.to_dict(),
            "initial_level": self.initial_level,
            "width_bits": self.width_bits,
        }


CONFIG_KEYS = {"levels", "tech", "cpu", "initial_level", "width_bits"}


def load_config(path: Optional[str]) -> Config:
    """Read a JSON config; any section left out keeps its default."""
    if path is None:
        return Config()
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    cfg = Config()
    try:
        if "levels" in data:
            cfg.levels = [MemoryLevel.from_dict(d) for d in data["levels"]]
            Hierarchy(cfg.levels)
        if "tech" in data:
            cfg.tech = TechParams.from_dict(data["tech"])
        if "cpu" in data:
            cfg.cpu = CpuParams(**data["cpu"])
        cfg.initial_level = data.get("initial_level", cfg.initial_level)
        cfg.width_bits = int(data.get("width_bits", cfg.width_bits))
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(f"invalid config {path}: {e}") from e
    if cfg.initial_level not in {lv.name for lv in cfg.levels}:
        raise ConfigError(f"initial_level {cfg.initial_level!r} is not a configured level")
    return cfg


# -- experiment plan --------------------------------------------------------------

@dataclass
class ExperimentPlan:
    kernels: list = field(default_factory=lambda: list(KernelId))
    sizes: dict = field(default_factory=dict)
    strategies: list = field(default_factory=lambda: list(Strategy))
    modes: list = field(default_factory=lambda: list(Mode))
    config_path: Optional[str] = None
    out_dir: Optional[str] = None
    seed: int = 0
    write_traces: bool = False

    def size_of(self, k: KernelId) -> int:
        return self.sizes.get(k, DESK_SIZES[k])


@dataclass
class SweepOutput:
    rows: list
    results: list
    groups: list
    freqs: dict
    table: dict
    errors: list


def derive_groups(traces: Sequence[Trace], m: int = GROUP_COUNT):
    """Groups and average per-group usage from a set of workloads."""
    groups = form_groups(count_pairs(traces), m)
    freqs = average_frequency(group_frequency(traces, groups))
    return groups, freqs


def design_groups(known: Optional[dict] = None, cfg: Optional[Config] = None):
    """Groups fixed at design time from the whole bundled corpus at desk scale, whatever subset is simulated."""
    cfg = cfg or Config()
    known = known or {}
    corpus = []
    for k in KernelId:
        tr = known.get(k)
        if tr is None or tr.name != f"{k.value}-{DESK_SIZES[k]}":
            tr = generate(KernelSpec(k, DESK_SIZES[k], cfg.width_bits))
        corpus.append(tr)
    return derive_groups(corpus)


def result_row(workload: str, n, mode: str, strategy: str, r: Optional[SimResult], error: str = "") -> dict:
    row = {c: "" for c in CSV_COLUMNS}
    row.update(schema_version=CSV_SCHEMA_VERSION, workload=workload, n=n, mode=mode, strategy=strategy)
    if r is None:
        row.update(status="error", error=error)
        return row
    e = r.energy_pj
    row.update(
        status="ok",
        makespan_cycles=_num(r.makespan_cycles),
        energy_total_pj=_num(r.energy_total_pj),
        energy_compute_pj=_num(e["compute"]),
        energy_transfer_pj=_num(e["transfer"]),
        energy_static_pj=_num(e["static"]),
        energy_cpu_pj=_num(e["cpu"]),
        stall_unit_busy=_num(r.stalls["unit-busy"]),
        stall_operand_transfer=_num(r.stalls["operand-transfer"]),
        stall_dependence=_num(r.stalls["dependence"]),
        instructions=r.instructions,
        transfers=r.transfers,
    )
    return row


def _num(x) -> str:
    # repr round-trips floats exactly, which keeps CSVs byte-stable
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def run_sweep(plan: ExperimentPlan, cfg: Optional[Config] = None, log=None) -> SweepOutput:
    """Simulate every kernel x strategy x mode; a failing kernel yields error rows, not an abort."""
    cfg = cfg or load_config(plan.config_path)
    hier = cfg.hierarchy()
    specs = [KernelSpec(k, plan.size_of(k), cfg.width_bits) for k in plan.kernels]
    traces, errors = {}, []
    for spec in specs:
        try:
            traces[spec.id] = generate(spec, hier.bottom.capacity_bytes)
        except ValueError as e:
            errors.append(f"{spec.id.value}: {e}")
    groups, freqs = design_groups(traces, cfg)
    table = mapping_table(groups, freqs, hier.levels, cfg.width_bits, cfg.tech, plan.strategies)
    rows, results = [], []
    for spec in specs:
        tr = traces.get(spec.id)
        # modes other than CHIME ignore the strategy, so their result is shared across it
        shared: dict = {}
        for strategy in plan.strategies:
            for mode in plan.modes:
                mode, strategy = Mode(mode), Strategy(strategy)
                if tr is None:
                    rows.append(result_row(spec.id.value, spec.n, mode.value, strategy.value, None, "trace generation failed"))
                    continue
                key = (mode, strategy if mode is Mode.CHIME else None)
                r, err = shared.get(key, (None, ""))
                if key not in shared:
                    try:
                        m = build_machine(mode, strategy, groups, freqs, hier, cfg.tech, cfg.cpu,
                                          cfg.width_bits, initial_level=cfg.initial_level)
                        r = simulate(tr, m)
                        r.strategy = strategy.value
                    except (SimulationError, ValueError) as e:
                        err = str(e)
                        errors.append(f"{spec.id.value}/{mode.value}/{strategy.value}: {e}")
                    shared[key] = (r, err)
                    if log and r is not None:
                        log(f"{spec.id.value:17s} {mode.value:12s} {strategy.value:10s} {r.makespan_cycles:>12.0f} cycles")
                if r is not None:
                    r = _relabel(r, strategy.value)
                    results.append(r)
                rows.append(result_row(spec.id.value, spec.n, mode.value, strategy.value, r, err))
    return SweepOutput(rows, results, groups, freqs, table, errors)


def _relabel(r: SimResult, strategy: str) -> SimResult:
    if r.strategy == strategy:
        return r
    out = SimResult(**{**r.__dict__, "energy_pj": dict(r.energy_pj), "stalls": dict(r.stalls)})
    out.strategy = strategy
    return out


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def summarize(rows: Sequence[dict]) -> dict:
    """Speedup and energy savings vs the CPU row of the same workload and strategy."""
    ok = [r for r in rows if r["status"] == "ok"]
    base = {(r["workload"], r["strategy"]): r for r in ok if r["mode"] == Mode.CPU.value}
    out: dict = {"schema_version": CSV_SCHEMA_VERSION, "vs_cpu": [], "strategies": {}, "modes": {}}
    for r in ok:
        b = base.get((r["workload"], r["strategy"]))
        if b is None or r["mode"] == Mode.CPU.value:
            continue
        sp = float(b["makespan_cycles"]) / float(r["makespan_cycles"])
        es = 1.0 - float(r["energy_total_pj"]) / float(b["energy_total_pj"])
        out["vs_cpu"].append({
            "workload": r["workload"], "mode": r["mode"], "strategy": r["strategy"],
            "speedup": round(sp, 6), "energy_savings": round(es, 6),
        })
    # strategy comparison on CHIME, mode comparison on each mode's rc row
    for e in out["vs_cpu"]:
        if e["mode"] == Mode.CHIME.value:
            out["strategies"].setdefault(e["strategy"], {})[e["workload"]] = e["speedup"]
        if e["strategy"] == Strategy.RC.value:
            out["modes"].setdefault(e["mode"], {})[e["workload"]] = {
                "speedup": e["speedup"], "energy_savings": e["energy_savings"],
            }
    return out


def read_csv_rows(path: str) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if rows and rows[0].get("schema_version") != str(CSV_SCHEMA_VERSION):
        raise ConfigError(f"{path}: unsupported CSV schema {rows[0].get('schema_version')!r}")
    return rows


# -- subcommands ------------------------------------------------------------------

def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_kernel(text: str) -> KernelId:
    try:
        return KernelId.parse(text)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _read_trace(path: Path) -> Trace:
    text = path.read_text()
    if path.suffix == ".json":
        return trace_from_dict(json.loads(text))
    tr = parse_trace(text)
    return tr if tr.name else Trace(tr.instructions, tr.deps, path.stem)


def _load_traces(args) -> list[Trace]:
    if args.traces:
        d = Path(args.traces)
        if not d.is_dir():
            raise UsageError(f"trace directory {d} does not exist")
        files = sorted(p for p in d.iterdir() if p.suffix in (".trace", ".json"))
        if not files:
            raise UsageError(f"no .trace or .json files in {d}")
        return [_read_trace(p) for p in files]
    return [generate(KernelSpec.desk(k)) for k in KernelId]


def cmd_gen(args, cfg: Config) -> int:
    kid = _parse_kernel(args.kernel)
    n = args.n if args.n is not None else DESK_SIZES[kid]
    try:
        tr = generate(KernelSpec(kid, n, cfg.width_bits), cfg.hierarchy().bottom.capacity_bytes)
    except ValueError as e:
        raise UsageError(str(e)) from e
    text = dumps_json(tr) if args.format == "json" else format_trace(tr)
    _write(text, args.out)
    return EXIT_OK


def cmd_group(args, cfg: Config) -> int:
    traces = _load_traces(args)
    groups, freqs = derive_groups(traces, args.m)
    per = group_frequency(traces, groups)
    doc = {
        "m": args.m,
        "groups": [g.to_dict() for g in groups],
        "average_frequency": freqs,
        "frequency": {t.name: row for t, row in zip(traces, per)},
    }
    _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_map(args, cfg: Config) -> int:
    groups, freqs = derive_groups(_load_traces(args), GROUP_COUNT)
    strategies = list(Strategy) if args.strategy == "all" else [Strategy.parse(args.strategy)]
    table = mapping_table(groups, freqs, cfg.levels, cfg.width_bits, cfg.tech, strategies)
    _write(format_mapping_table(table, [lv.name for lv in cfg.levels]), args.out)
    return EXIT_OK


def cmd_sim(args, cfg: Config) -> int:
    if args.trace:
        try:
            tr = _read_trace(Path(args.trace))
        except (OSError, ValueError, KeyError) as e:
            raise UsageError(f"cannot read trace {args.trace}: {e}") from e
        workload, n = tr.name, ""
    else:
        kid = _parse_kernel(args.kernel or "")
        spec = KernelSpec(kid, args.n if args.n is not None else DESK_SIZES[kid], cfg.width_bits)
        tr = generate(spec, cfg.hierarchy().bottom.capacity_bytes)
        workload, n = kid.value, spec.n
    bad = validate_trace(tr)
    if bad:
        raise UsageError(f"invalid trace: {bad[0]}")
    groups, freqs = design_groups(cfg=cfg)
    mode, strategy = Mode.parse(args.mode), Strategy.parse(args.strategy)
    machine = build_machine(mode, strategy, groups, freqs, cfg.hierarchy(), cfg.tech, cfg.cpu,
                            cfg.width_bits, initial_level=cfg.initial_level)
    r = simulate(tr, machine, pipelined=not args.nonpipelined)
    if args.out and args.out.endswith(".csv"):
        _write(rows_to_csv([result_row(workload, n, mode.value, r.strategy, r)]), args.out)
    else:
        _write(json.dumps(r.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_sweep(args, cfg: Config) -> int:
    plan = ExperimentPlan(config_path=args.config, out_dir=args.out, seed=args.seed,
                          write_traces=args.write_traces)
    if args.kernels:
        plan.kernels = [_parse_kernel(k) for k in args.kernels.split(",")]
    if args.strategies:
        plan.strategies = [Strategy.parse(s) for s in args.strategies.split(",")]
    if args.modes:
        plan.modes = [Mode.parse(m) for m in args.modes.split(",")]
    if args.n is not None:
        plan.sizes = {k: args.n for k in plan.kernels}
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    out = run_sweep(plan, cfg, log)
    csv_text = rows_to_csv(out.rows)
    summary = summarize(out.rows)
    summary["groups"] = [g.to_dict() for g in out.groups]
    summary["average_frequency"] = out.freqs
    summary["mapping"] = {s.value: a.to_dict()["placement"] for s, a in out.table.items()}
    summary["seed"] = plan.seed
    summary["errors"] = out.errors
    if plan.out_dir:
        d = Path(plan.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "results.csv").write_text(csv_text)
        (d / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (d / "groups.json").write_text(json.dumps(summary["groups"], indent=2) + "\n")
        (d / "mapping.txt").write_text(format_mapping_table(out.table, [lv.name for lv in cfg.levels]))
        if plan.write_traces:
            td = d / "traces"
            td.mkdir(exist_ok=True)
            for k in plan.kernels:
                spec = KernelSpec(k, plan.size_of(k), cfg.width_bits)
                (td / f"{k.value}.trace").write_text(format_trace(generate(spec)))
    else:
        sys.stdout.write(csv_text)
    for e in out.errors:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_SIM if out.errors else EXIT_OK


def cmd_report(args, cfg: Config) -> int:
    path = Path(args.results)
    if path.is_dir():
        path = path / "results.csv"
    if not path.exists():
        raise UsageError(f"no results at {path}")
    rows = read_csv_rows(str(path))
    s = summarize(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["workload", "mode", "strategy", "speedup_vs_cpu", "energy_savings_vs_cpu"])
    for e in s["vs_cpu"]:
        w.writerow([e["workload"], e["mode"], e["strategy"], _num(e["speedup"]), _num(e["energy_savings"])])
    _write(buf.getvalue(), args.out)
    return EXIT_OK


# -- entry point --------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON hierarchy/technology config (defaults built in)")
    common.add_argument("--out", help="output file, or directory for sweep")
    common.add_argument("--seed", type=int, default=0)

    p = _Parser(prog="hierpim", description="Hierarchical processing-in-memory simulator")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen", parents=[common], help="write a kernel trace")
    g.add_argument("--kernel", required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--format", choices=["text", "json"], default="text")
    g.set_defaults(func=cmd_gen)

    g = sub.add_parser("group", parents=[common], help="form compute groups from traces")
    g.add_argument("--traces", help="directory of .trace/.json files (default: bundled kernels)")
    g.add_argument("--m", type=int, default=GROUP_COUNT)
    g.set_defaults(func=cmd_group)

    g = sub.add_parser("map", parents=[common], help="print the group-to-level mapping table")
    g.add_argument("--strategy", default="all", choices=["all"] + [s.value for s in Strategy])
    g.add_argument("--traces")
    g.set_defaults(func=cmd_map)

    g = sub.add_parser("sim", parents=[common], help="simulate one trace")
    g.add_argument("--kernel")
    g.add_argument("--trace")
    g.add_argument("--n", type=int)
    g.add_argument("--mode", default="CHIME", choices=[m.value for m in Mode])
    g.add_argument("--strategy", default="rc", choices=[s.value for s in Strategy])
    g.add_argument("--nonpipelined", action="store_true")
    g.set_defaults(func=cmd_sim)

    g = sub.add_parser("sweep", parents=[common], help="run kernels x strategies x modes")
    g.add_argument("--kernels", help="comma-separated kernel ids (default: all)")
    g.add_argument("--strategies", help="comma-separated strategies (default: all)")
    g.add_argument("--modes", help="comma-separated modes (default: all)")
    g.add_argument("--n", type=int, help="override every kernel's size")
    g.add_argument("--write-traces", action="store_true")
    g.add_argument("-v", "--verbose", action="store_true")
    g.set_defaults(func=cmd_sweep)

    g = sub.add_parser("report", parents=[common], help="speedup/energy tables from a results CSV")
    g.add_argument("--results", required=True, help="results.csv or a sweep output directory")
    g.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "sim" and not (args.kernel or args.trace):
        print("hierpim sim: error: one of --kernel or --trace is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
