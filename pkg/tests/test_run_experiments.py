import csv
import math
import sys
from pathlib import Path

import pytest

import run_experiments
from core_model import duplicate_count_exact
from experiment_presets import ExperimentPresetManager
from run_experiments import (
    COLUMNS,
    ExperimentConfig,
    baseline_bits,
    build_workload,
    collect_rows,
    parse_eps_pows,
    run_accuracy_vs_eps,
    run_comm_vs_eps,
    run_histograms,
)

REPO_CONFIG = Path(__file__).resolve().parent.parent / "config" / "experiment_presets.yaml"

SMALL_PLANTED = {"kind": "planted", "n": 10 ** 5, "alpha": 4, "f0": 2000, "collisions": 100}


def make_config(tmp_path, **kwargs):
    params = dict(
        protocol="alg1",
        eps_list=parse_eps_pows("2..3"),
        seeds=3,
        workload=dict(SMALL_PLANTED),
        out=str(tmp_path / "out.csv"),
        quiet=True,
    )
    params.update(kwargs)
    return ExperimentConfig(**params)


def read_rows(path):
    with open(path, encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def test_parse_eps_pows():
    assert parse_eps_pows("0..2") == [1.0, 0.5, 0.25]
    assert parse_eps_pows("4") == [1 / 16]
    with pytest.raises(ValueError):
        parse_eps_pows("3..1")
    with pytest.raises(ValueError):
        parse_eps_pows("a..b")


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        make_config(tmp_path, protocol="alg9")
    with pytest.raises(ValueError):
        make_config(tmp_path, eps_list=[1.5])
    with pytest.raises(ValueError):
        make_config(tmp_path, seeds=0)


def test_comm_rows_and_schema(tmp_path):
    cfg = make_config(tmp_path, eps_list=parse_eps_pows("0..9"), seeds=5)
    path = run_comm_vs_eps(cfg)
    text = path.read_text(encoding="utf-8").splitlines()
    assert text[0].startswith("# schema=comm-v")
    rows = read_rows(path)
    assert len(rows) == 50
    assert list(rows[0]) == COLUMNS + ["baseline_bits"]
    eps_seed = [(float(r["eps"]), int(r["seed"])) for r in rows]
    assert eps_seed == sorted(eps_seed)


def test_baseline_column(tmp_path):
    cfg = make_config(tmp_path)
    rows = read_rows(run_comm_vs_eps(cfg))
    for row in rows:
        expected = baseline_bits(4, float(row["eps"]), 10 ** 5)
        assert float(row["baseline_bits"]) == pytest.approx(expected, rel=1e-9)


def test_alg1_bits_cross_baseline_only_at_small_eps(tmp_path):
    # C = 0 时第 0 层发送全部 F1 个 id，bits 几乎不随 ε 变化，基线随 1/ε² 增长
    workload = {"kind": "planted", "n": 10 ** 6, "alpha": 8, "f0": 10 ** 4, "collisions": 0}
    cfg = make_config(tmp_path, eps_list=parse_eps_pows("5..11"), seeds=1, workload=workload)
    ratio = {
        round(-math.log2(r["eps"])): r["bits"] / baseline_bits(8, r["eps"], 10 ** 6)
        for r in collect_rows(cfg)
    }
    assert ratio[5] > 20
    assert ratio[7] > 1 > ratio[8]
    assert ratio[9] > 0.05
    assert ratio[11] < 0.1
    steps = [ratio[k] for k in range(5, 12)]
    assert all(a > b for a, b in zip(steps, steps[1:]))


def test_output_is_byte_identical(tmp_path):
    a = run_comm_vs_eps(make_config(tmp_path, out=str(tmp_path / "a.csv")))
    b = run_comm_vs_eps(make_config(tmp_path, out=str(tmp_path / "b.csv"), workers=4))
    assert a.read_bytes() == b.read_bytes()


def test_accuracy_exact_regime(tmp_path):
    # X ≤ 4·F0 远小于 oversample/ε²，协议停在第 0 层
    path = run_accuracy_vs_eps(make_config(tmp_path, eps_list=parse_eps_pows("3..4")))
    rows = read_rows(path)
    assert len(rows) == 6 + 2
    assert all(float(r["rel_err"]) == 0 for r in rows)
    assert [r["seed"] for r in rows[-2:]] == ["median", "median"]


def test_dup_reports_duplicate_count(tmp_path):
    cfg = make_config(tmp_path, protocol="dup", eps_list=[0.25], seeds=2)
    work = build_workload(cfg)
    rows = collect_rows(cfg, work)
    assert all(r["f0_true"] == duplicate_count_exact(work.dataset) for r in rows)


@pytest.mark.parametrize("protocol,rounds", [("stream1p", 1), ("stream2p", 2), ("stream2ps", 2)])
def test_streaming_rows(tmp_path, protocol, rounds):
    desk = ExperimentPresetManager(str(REPO_CONFIG)).get_constants("desk")
    cfg = make_config(tmp_path, protocol=protocol, eps_list=[0.25], seeds=2, constants=desk)
    rows = collect_rows(cfg)
    assert len(rows) == 2
    assert all(r["rounds"] == rounds for r in rows)
    assert all(r["f0_true"] == 2000 for r in rows)
    assert all(r["bits"] > 0 for r in rows)


def test_histograms_mode(tmp_path, edge_file):
    cfg = make_config(
        tmp_path,
        workload={"kind": "file", "path": str(edge_file)},
        out=str(tmp_path / "hist" / "histograms.csv"),
    )
    rows = read_rows(run_histograms(cfg))
    assert [r["histogram"] for r in rows] == ["senders_per_receiver", "sender_activity"]
    assert all(Path(r["file"]).exists() for r in rows)


def test_histograms_needs_edge_file(tmp_path):
    with pytest.raises(ValueError):
        run_histograms(make_config(tmp_path))


def test_main_writes_csv(tmp_path, monkeypatch):
    out = tmp_path / "main.csv"
    argv = [
        "run_experiments.py",
        "--mode", "comm",
        "--protocol", "alg2",
        "--eps-pows", "1..2",
        "--seeds", "2",
        "--n", "100000",
        "--alpha", "4",
        "--f0", "1000",
        "--collisions", "50",
        "--config", str(REPO_CONFIG),
        "--out", str(out),
        "--quiet",
    ]
    monkeypatch.setattr(sys, "argv", argv)
    run_experiments.main()
    assert len(read_rows(out)) == 4


def test_main_bad_args_exit_code(tmp_path, monkeypatch, capsys):
    argv = ["run_experiments.py", "--eps-pows", "3..1", "--config", str(REPO_CONFIG)]
    monkeypatch.setattr(sys, "argv", argv)
    with pytest.raises(SystemExit) as info:
        run_experiments.main()
    assert info.value.code == 1
    assert "[ERROR]" in capsys.readouterr().out
