import copy
import csv

import pytest
import yaml

from gaia.controller import ControllerConfig
from gaia.modes import ExecutionMode
from gaia.scenario import (
    MANIFEST,
    OUTPUT_FILES,
    RESPONSE_COLUMNS,
    RUNS_DIR,
    ScenarioError,
    load_scenario,
    parse_scenario,
    plan_deployments,
    preset_names,
    read_cost_total,
    read_label,
    run_scenario,
    write_outputs,
)

SOURCE = "import torch\n\ndef handler(x):\n    a = torch.rand(4, 4)\n    return a @ x\n"


def base(tmp_path):
    (tmp_path / "fn.py").write_text(SOURCE)
    return {
        "name": "tiny",
        "seed": 3,
        "repetitions": 2,
        "nodes": [
            {"node_id": "n1", "vcpus": 8, "ram_gb": 16},
            {"node_id": "n2", "vcpus": 8, "ram_gb": 16, "gpu": {"model": "G", "vram_gb": 24}},
        ],
        "workloads": {
            "w": {
                "jitter_pct": 5,
                "cpu": {"service_ms": [800], "cpu_cores": 2, "ram_gb": 1, "concurrency": 2},
                "gpu": {"service_ms": [60], "cpu_cores": 1, "ram_gb": 1, "gpu_util_pct": 40},
            }
        },
        "functions": [
            {"function_id": "f", "source": "fn.py", "workload": "w",
             "trace": {"kind": "constant-rate", "rate_per_s": 2, "duration_s": 60}},
        ],
        "prices": {"cpu_rate": 1e-5, "ram_rate": 1e-6, "gpu_rate": 1e-4},
    }


def broken(tmp_path, edit):
    data = base(tmp_path)
    edit(data)
    with pytest.raises(ScenarioError) as info:
        parse_scenario(data, tmp_path)
    return info.value


# validation

@pytest.mark.parametrize("edit, path", [
    (lambda d: d.pop("nodes"), "<root>"),
    (lambda d: d["nodes"][0].update(vcpus=0), "nodes[0].vcpus"),
    (lambda d: d["nodes"][1]["gpu"].pop("vram_gb"), "nodes[1].gpu"),
    (lambda d: d["workloads"]["w"]["cpu"].update(service_ms=[]), "workloads.w.cpu.service_ms"),
    (lambda d: d["functions"][0].update(workload="nope"), "functions[0].workload"),
    (lambda d: d["functions"][0].update(source="missing.py"), "functions[0].source"),
    (lambda d: d["functions"][0]["trace"].update(kind="poisson"), "functions[0].trace.kind"),
    (lambda d: d["functions"][0]["trace"].pop("rate_per_s"), "functions[0].trace"),
    (lambda d: d["functions"][0].update(deployment_mode="tpu"), "functions[0].deployment_mode"),
    (lambda d: d.update(controller={"latency_threshold_ms": -1}), "controller"),
    (lambda d: d.update(prices={"cpu_rate": 1e-4, "ram_rate": 0, "gpu_rate": 1e-5}), "prices.gpu_rate"),
    (lambda d: d.update(bogus=1), "<root>"),
])
def test_validation_names_the_field(tmp_path, edit, path):
    err = broken(tmp_path, edit)
    assert err.path == path, str(err)


def test_duplicate_ids(tmp_path):
    assert broken(tmp_path, lambda d: d["nodes"].append(dict(d["nodes"][0]))).path == "nodes"
    assert broken(tmp_path, lambda d: d["functions"].append(dict(d["functions"][0]))).path == "functions[1].function_id"


def test_not_a_mapping():
    with pytest.raises(ScenarioError):
        parse_scenario([1, 2])


def test_invalid_yaml(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("name: [unclosed\n")
    with pytest.raises(ScenarioError):
        load_scenario(p)


def test_defaults_are_filled_in(tmp_path):
    spec = parse_scenario(base(tmp_path), tmp_path)
    r = spec.resolved()
    assert r["controller"] == ControllerConfig().to_dict()
    assert r["telemetry"]["window_ms"] == 60_000 and r["telemetry"]["aggregate"] == "p50"
    assert r["functions"][0]["deployment_mode"] == "auto"
    assert r["functions"][0]["source"] == str(tmp_path.resolve() / "fn.py")
    cpu = r["workloads"]["w"]["cpu"]
    assert cpu["cold_start_ms"] == 500 and r["workloads"]["w"]["gpu"]["cold_start_ms"] == 4000


def test_free_price_sheet_is_allowed(tmp_path):
    data = base(tmp_path)
    data.pop("prices")
    spec = parse_scenario(data, tmp_path)
    assert spec.prices.cpu_rate == spec.prices.gpu_rate == 0
    assert parse_scenario(spec.resolved(), tmp_path).prices == spec.prices


@pytest.mark.parametrize("name", ["llm", "idle", "image", "matrix"])
def test_presets_load(name):
    assert name in preset_names()
    spec = load_scenario(name)
    assert spec.name == name and spec.prices.has_gpu_premium
    assert all(f.source.is_file() for f in spec.functions)


# deployment planning

def test_auto_runs_the_analyzer(tmp_path):
    spec = parse_scenario(base(tmp_path), tmp_path)
    (plan,) = plan_deployments(spec)
    assert plan.target is ExecutionMode.CPU_PREFERRED and plan.report.reason == "small tensor ops"


@pytest.mark.parametrize("mode, target", [("cpu", ExecutionMode.CPU), ("gpu", ExecutionMode.GPU)])
def test_pinned_modes_skip_the_analyzer(tmp_path, mode, target):
    spec = parse_scenario(base(tmp_path), tmp_path)
    (plan,) = plan_deployments(spec, mode)
    assert plan.target is target and plan.report is None
    run = run_scenario(spec, mode, repetitions=1)
    assert run.label == mode.upper()
    assert run.results[0].events == [] and run.results[0].final_modes == {"f": mode}


def test_unknown_override(tmp_path):
    with pytest.raises(ValueError):
        plan_deployments(parse_scenario(base(tmp_path), tmp_path), "tpu")


def test_seeds_follow_the_base_seed(tmp_path):
    spec = parse_scenario(base(tmp_path), tmp_path)
    assert run_scenario(spec).seeds == [3, 4]
    assert run_scenario(spec, seed=10, repetitions=3).seeds == [10, 11, 12]
    with pytest.raises(ValueError):
        run_scenario(spec, repetitions=0)


# outputs

def _files(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_output_directory_is_complete(tmp_path):
    spec = parse_scenario(base(tmp_path), tmp_path)
    run = run_scenario(spec)
    out = write_outputs(run, tmp_path / "out")
    top = sorted(p.name for p in out.iterdir())
    assert top == sorted(list(OUTPUT_FILES) + [MANIFEST, RUNS_DIR])
    runs = sorted(p.name for p in (out / RUNS_DIR).iterdir())
    assert runs == ["run-1-seed-3", "run-2-seed-4"]
    for r in runs:
        assert sorted(p.name for p in (out / RUNS_DIR / r).iterdir()) == sorted(OUTPUT_FILES)
    with open(out / "response_time.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == RESPONSE_COLUMNS and len(rows) == 1 + 120
    assert read_label(out) == "AUTO"
    assert read_cost_total(out) == pytest.approx(sum(r.cost.total for r in run.results) / 2, rel=1e-6)


def test_manifest_reproduces_the_run(tmp_path):
    spec = parse_scenario(base(tmp_path), tmp_path)
    first = write_outputs(run_scenario(spec), tmp_path / "a")
    manifest = yaml.safe_load((first / MANIFEST).read_text())
    assert manifest["deployments"][0]["mode"] == "cpu_preferred"
    assert manifest["deployments"][0]["annotations"].startswith("gaia.mode=cpu_preferred")
    again = write_outputs(run_scenario(load_scenario(first)), tmp_path / "b")
    assert _files(first) == _files(again)


def test_rewriting_an_earlier_run_is_allowed(tmp_path):
    spec = parse_scenario(base(tmp_path), tmp_path)
    out = write_outputs(run_scenario(spec, repetitions=1), tmp_path / "out")
    write_outputs(run_scenario(spec, "gpu", repetitions=1), out)
    assert read_label(out) == "GPU"
    assert [p.name for p in (out / RUNS_DIR).iterdir()] == ["run-1-seed-3"]


def test_refuses_to_overwrite_unrelated_directory(tmp_path):
    target = tmp_path / "precious"
    target.mkdir()
    (target / "notes.txt").write_text("keep me")
    spec = parse_scenario(base(tmp_path), tmp_path)
    with pytest.raises(FileExistsError):
        write_outputs(run_scenario(spec, repetitions=1), target)
    assert [p.name for p in target.iterdir()] == ["notes.txt"]


def test_failure_leaves_nothing_behind(tmp_path, monkeypatch):
    import gaia.plots

    def boom(_):
        raise RuntimeError("plotting failed")

    monkeypatch.setattr(gaia.plots, "plot_run", boom)
    spec = parse_scenario(base(tmp_path), tmp_path)
    before = set(tmp_path.iterdir())
    with pytest.raises(RuntimeError):
        write_outputs(run_scenario(spec, repetitions=1), tmp_path / "out", plot=True)
    assert set(tmp_path.iterdir()) == before


def test_plot_writes_figures(tmp_path):
    spec = parse_scenario(base(tmp_path), tmp_path)
    out = write_outputs(run_scenario(spec, repetitions=1), tmp_path / "out", plot=True)
    pngs = sorted(p.name for p in (out / "figures").iterdir())
    assert pngs == ["cost.png", "response_time.png", "utilization.png"]
    assert all((out / "figures" / p).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for p in pngs)


def test_events_concatenate_runs(tmp_path):
    data = base(tmp_path)
    data["workloads"]["w"]["cpu"]["service_ms"] = [1400]
    spec = parse_scenario(data, tmp_path)
    out = write_outputs(run_scenario(spec), tmp_path / "out")
    with open(out / "events.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["run"] for r in rows] == ["run-1-seed-3", "run-2-seed-4"]
    assert {r["verdict"] for r in rows} == {"switch_to_gpu"}


def test_base_is_not_mutated(tmp_path):
    data = base(tmp_path)
    snapshot = copy.deepcopy(data)
    parse_scenario(data, tmp_path)
    assert data == snapshot
