import filecmp

import pytest
import yaml

from immunids.cli import main, parse_seeds, parse_windows
from immunids.netsim import ConfigError
from immunids.reports import read_report

SCENARIO = dict(node_count=60, area=[450, 450], connections=3, connection_hops=4, sim_duration=300,
                delta=100, misbehaving_nodes=10, wormholes=1, wormhole_separation=5, seed=3)
SCENARIO["lambda"] = 50
EXPERIMENT = dict(scenario=SCENARIO, window_sizes=[50, 100], monitor_count=4, seeds=[1, 2],
                  n_folds=3, selection_folds=2)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "experiment.yaml"
    cfg.write_text(yaml.safe_dump(EXPERIMENT))
    for run in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(root / run / "traces")]) == 0
        assert main(["extract", str(root / run / "traces"), "--config", str(cfg),
                     "--out", str(root / run / "datasets")]) == 0
    return root, cfg


def test_parse_helpers():
    assert parse_seeds("1-3,9") == (1, 2, 3, 9)
    assert parse_windows("50,100") == (50.0, 100.0)
    with pytest.raises(ConfigError):
        parse_seeds("3-1")


def test_simulate_writes_trace_and_plan_per_run(workdir):
    root, _ = workdir
    names = sorted(p.name for p in (root / "a" / "traces").iterdir())
    assert len(names) == 16
    assert "dropping_seed2.trace" in names and "wormhole_seed1.plan.json" in names


def test_simulate_and_extract_rerun_identically(workdir):
    root, _ = workdir
    for stage in ("traces", "datasets"):
        a, b = root / "a" / stage, root / "b" / stage
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
        assert not mismatch and not errors
    assert sorted(p.name for p in (root / "a" / "datasets").iterdir()) == ["dataset_w100.tsv",
                                                                          "dataset_w50.tsv"]


def test_train_and_cascade_reports(workdir):
    root, cfg = workdir
    out = root / "reports"
    assert main(["train", str(root / "a" / "datasets"), "--config", str(cfg), "--mode", "f0",
                 "--window", "100", "--out", str(out / "f0.tsv")]) == 0
    comments, sections = read_report(out / "f0.tsv")
    assert any(c.startswith("# seeds 1,2") for c in comments)
    assert {r["window_size"] for r in sections["rates"]} == {"100"}
    assert main(["cascade", str(root / "a" / "datasets"), "--config", str(cfg),
                 "--out", str(out / "cascade.tsv")]) == 0
    _, sections = read_report(out / "cascade.tsv")
    assert [r["window_size"] for r in sections["invocation"]] == ["50", "100"]

    energy = root / "energy"
    assert main(["energy", "--mode", "measured", "--report", str(out / "cascade.tsv"),
                 "--out", str(energy)]) == 0
    table = (energy / "energy_table.tsv").read_text()
    assert table.startswith("# config ") and "# seeds 1,2" in table


def test_energy_reference_mode(tmp_path, capsys):
    assert main(["energy", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "n=3.431, window=6.86 s" in out
    assert {p.name for p in tmp_path.iterdir()} == {"energy_table.tsv", "energy_accumulated.tsv",
                                                    "energy_vs_fp.tsv"}


def test_exit_codes(tmp_path, capsys):
    assert main(["energy", "--mode", "measured", "--out", str(tmp_path)]) == 2
    assert main(["energy", "--mode", "nonsense", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario:\n  node_cnt: 5\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "t")]) == 1
    assert main(["extract", str(tmp_path / "missing"), "--out", str(tmp_path / "d")]) == 2
    assert main(["train", "--mode", "F9", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err
