import json

import pytest

from meshvne import cli, des, scenario
from meshvne.cli import main, parse_seeds
from meshvne.model import Allocation, Outcome
from meshvne.paths import SubstratePath


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.json"
    assert main(["generate", "--devices", "4", "--duration-h", "0.5", "--seed", "2", "--out", str(path)]) == 0
    return path


def test_generate_defaults_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["generate", "--seed", "7", "--out", str(a)]) == 0
    assert main(["generate", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    out = capsys.readouterr().out
    assert "nodes=20" in out and "apps=" in out
    data = json.loads(a.read_text())
    assert data["workload_spec"] == {"arrival_rate": 120.0, "mean_lifetime_s": 2700.0, "duration_h": 4.0}
    assert data["app_spec"]["components"] == [1, 5]


def test_generate_desk_scale(small):
    sc = scenario.load_scenario(small)
    assert sc.substrate.n_nodes == 4 and sc.workload_spec.duration_h == 0.5


def test_seed_lists():
    assert parse_seeds("1..5") == [1, 2, 3, 4, 5]
    assert parse_seeds("2,4..5") == [2, 4, 5]
    with pytest.raises(cli.UsageError):
        parse_seeds("a..b")


def test_usage_errors_exit_2(small, capsys):
    assert main(["generate"]) == 2
    assert main(["run", "--scenario", str(small), "--allocators", "magic"]) == 2
    assert main(["run", "--scenario", str(small), "--override", "nonsense"]) == 2
    assert main(["run", "--scenario", str(small), "--override", "bogus_key=1"]) == 2
    assert main(["run", "--scenario", "missing.json"]) == 2
    assert main(["generate", "--devices", "0", "--out", "x.json"]) == 2
    assert main(["frobnicate"]) == 2


def test_generation_failure_exits_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise scenario.GenerationFailed("no luck")

    monkeypatch.setattr(cli, "generate_scenario", boom)
    assert main(["generate", "--out", str(tmp_path / "x.json")]) == 3


def test_audit_failure_exits_4(small, tmp_path, monkeypatch):
    class Liar:
        def __call__(self, pending, residual, now, rng):
            out = []
            for r in pending:
                nodes = {c.id: 0 for c in r.components}
                paths = {li: SubstratePath(0, 0, (0, 1), (0,), 10.0) for li in range(len(r.links))}
                out.append(Outcome(r.id, Allocation(r.id, nodes, paths) if r.links else None))
            return out, {}

    monkeypatch.setattr(des, "make_allocator", lambda *a: Liar())
    assert main(["run", "--scenario", str(small), "--allocators", "greedy", "--jobs", "1",
                 "--out", str(tmp_path / "r")]) == 4


def test_run_writes_every_artifact_and_reruns_identically(small, tmp_path):
    out1, out2, out3 = (tmp_path / n for n in ("r1", "r2", "r3"))
    args = ["run", "--scenario", str(small), "--allocators", "greedy,ilp,nsga2", "--seeds", "1..2",
            "--override", "generations=5"]
    assert main(args + ["--jobs", "1", "--out", str(out1)]) == 0
    assert main(["run", "--manifest", str(out1 / "manifest.json"), "--jobs", "1", "--out", str(out2)]) == 0
    assert main(args + ["--jobs", "3", "--out", str(out3)]) == 0
    traces = sorted(p.name for p in (out1 / "traces").glob("*.jsonl"))
    assert len(traces) == 6
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["seeds"] == [1, 2] and manifest["overrides"] == {"generations": "5"}
    for other in (out2, out3):
        for sub in ("traces", "metrics"):
            for f in sorted((out1 / sub).iterdir()):
                assert f.read_bytes() == (other / sub / f.name).read_bytes(), f.name
        assert (out1 / "summary.json").read_bytes() == (other / "summary.json").read_bytes()
    summary = json.loads((out1 / "summary.json").read_text())
    assert set(summary["steady_state"]) == {"greedy", "ilp", "nsga2"}


def test_config_file_is_overridden_by_flags(small, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"simulation.generations": 2, "max_retries": 1}))
    out = tmp_path / "r"
    assert main(["run", "--scenario", str(small), "--allocators", "nsga2", "--config", str(cfg),
                 "--override", "max_retries=4", "--out", str(out)]) == 0
    meta = json.loads((out / "traces" / "nsga2_seed1.meta.json").read_text())
    assert meta["config"]["generations"] == 2 and meta["config"]["max_retries"] == 4


def test_ilp_on_oracle_sized_scenario_is_always_proven_optimal(small, tmp_path):
    out = tmp_path / "r"
    assert main(["run", "--scenario", str(small), "--allocators", "ilp", "--seeds", "2", "--out", str(out)]) == 0
    meta = json.loads((out / "traces" / "ilp_seed2.meta.json").read_text())
    assert meta["batches"] and all(b["status"] == "proven-optimal" for b in meta["batches"])


def _summary(path, steady):
    path.write_text(json.dumps({"steady_state": steady}))
    return str(path)


def test_compare_table_and_strict(tmp_path, capsys):
    good = {"ilp": {"acceptance_ratio": 62, "average_latency": 4, "bandwidth_utilization": 5, "max_resource_use": 80},
            "nsga2": {"acceptance_ratio": 58, "average_latency": 1, "bandwidth_utilization": 2.5, "max_resource_use": 73},
            "greedy": {"acceptance_ratio": 53, "average_latency": 8.5, "bandwidth_utilization": 8.5,
                       "max_resource_use": 65}}
    a = _summary(tmp_path / "a.json", {"ilp": good["ilp"]})
    b = _summary(tmp_path / "b.json", {k: good[k] for k in ("nsga2", "greedy")})
    assert main(["compare", "--strict", a, b]) == 0
    out = capsys.readouterr().out
    for row in ("acceptance_ratio", "average_latency", "bandwidth_utilization", "max_resource_use"):
        assert row in out
    assert "FAIL" not in out and out.count("PASS") == 8
    bad = dict(good, greedy=dict(good["greedy"], acceptance_ratio=70))
    c = _summary(tmp_path / "c.json", bad)
    assert main(["compare", c]) == 0
    assert main(["compare", "--strict", c]) == 5
