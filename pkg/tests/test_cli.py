import json

import pytest

from hierpim.cli import (
    CSV_COLUMNS,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SIM,
    EXIT_USAGE,
    ExperimentPlan,
    load_config,
    main,
    read_csv_rows,
    rows_to_csv,
    run_sweep,
)
from hierpim.engine import Mode
from hierpim.isa import parse_trace, validate_trace
from hierpim.mapping import Strategy
from hierpim.workloads import KernelId


def test_gen_writes_trace(tmp_path):
    out = tmp_path / "mac.trace"
    assert main(["gen", "--kernel", "mac", "--n", "8", "--out", str(out)]) == EXIT_OK
    t = parse_trace(out.read_text())
    assert len(t) == 16 and validate_trace(t) == []
    js = tmp_path / "mac.json"
    assert main(["gen", "--kernel", "mac", "--n", "8", "--format", "json", "--out", str(js)]) == EXIT_OK
    assert json.loads(js.read_text())["name"] == "mac-8"


def test_group_over_trace_dir(tmp_path):
    for k in ("mac", "rmse"):
        main(["gen", "--kernel", k, "--n", "16", "--out", str(tmp_path / f"{k}.trace")])
    out = tmp_path / "groups.json"
    assert main(["group", "--traces", str(tmp_path), "--m", "2", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert len(doc["groups"]) == 2 and set(doc["frequency"]) == {"mac-16", "rmse-16"}


def test_map_prints_table(capsys):
    assert main(["map", "--strategy", "rc"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "Ripple-carry-aware throughput" in out and "mult-shift" in out


def test_sim_json_and_csv(tmp_path):
    out = tmp_path / "r.json"
    assert main(["sim", "--kernel", "mat_add", "--n", "8", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["mode"] == "CHIME"
    csv_out = tmp_path / "r.csv"
    assert main(["sim", "--kernel", "mat_add", "--n", "8", "--mode", "CPU", "--out", str(csv_out)]) == EXIT_OK
    assert read_csv_rows(str(csv_out))[0]["mode"] == "CPU"


def test_sim_from_trace_file(tmp_path):
    tr = tmp_path / "x.trace"
    main(["gen", "--kernel", "rmse", "--n", "8", "--out", str(tr)])
    out = tmp_path / "r.json"
    assert main(["sim", "--trace", str(tr), "--nonpipelined", "--out", str(out)]) == EXIT_OK


def test_minimal_plan_rows_and_summary(tmp_path):
    rc = main(["sweep", "--kernels", "mat_add", "--strategies", "rc", "--modes", "CHIME,CPU",
               "--n", "16", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    rows = read_csv_rows(str(tmp_path / "results.csv"))
    assert len(rows) == 2 and list(rows[0]) == CSV_COLUMNS
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["vs_cpu"][0]["speedup"] > 1
    assert (tmp_path / "mapping.txt").exists() and (tmp_path / "groups.json").exists()
    assert main(["report", "--results", str(tmp_path), "--out", str(tmp_path / "rep.csv")]) == EXIT_OK
    assert "speedup_vs_cpu" in (tmp_path / "rep.csv").read_text()


def test_sweep_shares_strategy_free_results():
    plan = ExperimentPlan(kernels=[KernelId.MAC], sizes={KernelId.MAC: 64},
                          strategies=list(Strategy), modes=[Mode.CPU, Mode.CHIME])
    out = run_sweep(plan)
    cpu = [r for r in out.rows if r["mode"] == "CPU"]
    assert len(cpu) == 3 and len({r["makespan_cycles"] for r in cpu}) == 1
    assert [r["strategy"] for r in cpu] == ["units", "throughput", "rc"]


def test_sweep_isolates_failing_kernel(tmp_path):
    cfg = tmp_path / "c.json"
    # a main memory too small for mat_mult at n=64 but fine for mat_add
    levels = json.loads(json.dumps(load_config(None).to_dict()["levels"]))
    levels[2]["capacity_bytes"] = 100_000
    cfg.write_text(json.dumps({"levels": levels}))
    rc = main(["sweep", "--config", str(cfg), "--kernels", "mat_add,mat_mult", "--strategies", "rc",
               "--modes", "CHIME", "--out", str(tmp_path / "o")])
    assert rc == EXIT_SIM
    rows = read_csv_rows(str(tmp_path / "o" / "results.csv"))
    assert {r["workload"]: r["status"] for r in rows} == {"mat_add": "ok", "mat_mult": "error"}


def test_same_seed_same_bytes(tmp_path):
    args = ["sweep", "--kernels", "rmse,wordcount", "--n", "64", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    for f in ("results.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_usage_errors():
    assert main(["gen", "--kernel", "fft"]) == EXIT_USAGE
    assert main(["sim"]) == EXIT_USAGE
    assert main(["report", "--results", "/nonexistent"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == EXIT_USAGE


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["map", "--config", str(bad)]) == EXIT_CONFIG
    bad.write_text(json.dumps({"tech": {"no_such_field": 1}}))
    assert main(["map", "--config", str(bad)]) == EXIT_CONFIG
    bad.write_text(json.dumps({"colour": 1}))
    assert main(["map", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["map", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_shipped_config_matches_defaults():
    from pathlib import Path

    shipped = Path(__file__).resolve().parents[1] / "configs" / "default.json"
    assert load_config(str(shipped)).to_dict() == load_config(None).to_dict()


def test_csv_is_plain_text():
    text = rows_to_csv([])
    assert text.strip() == ",".join(CSV_COLUMNS)
