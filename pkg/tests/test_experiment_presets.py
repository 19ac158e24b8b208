from pathlib import Path

import pytest

from experiment_presets import ExperimentPresetManager, ProtocolConstants

REPO_CONFIG = Path(__file__).resolve().parent.parent / "config" / "experiment_presets.yaml"


def test_repo_presets_load():
    manager = ExperimentPresetManager(str(REPO_CONFIG))
    assert manager.get_constants("default") == ProtocolConstants()
    desk = manager.get_constants("desk")
    assert desk.oversample == 10
    assert desk.dup_p_constant == 4
    assert "workloads/edges" in manager.list_presets()


def test_partial_preset_fills_defaults():
    manager = ExperimentPresetManager(str(REPO_CONFIG))
    literal = manager.get_constants("literal")
    assert literal.level_rule == "literal"
    assert literal.oversample == ProtocolConstants().oversample


def test_lookup_ignores_case():
    manager = ExperimentPresetManager(str(REPO_CONFIG))
    assert manager.get_constants("DESK").oversample == 10
    assert manager.get_workload("Planted")["f0"] == 10 ** 4


def test_missing_file_uses_defaults(tmp_path, capsys):
    manager = ExperimentPresetManager(str(tmp_path / "none.yaml"))
    assert "[WARN]" in capsys.readouterr().out
    assert manager.get_constants() == ProtocolConstants()
    assert manager.get_workload("zipf")["kind"] == "zipf"


def test_unknown_preset_falls_back(tmp_path, capsys):
    manager = ExperimentPresetManager(str(tmp_path / "none.yaml"))
    capsys.readouterr()
    assert manager.get_constants("nope") == ProtocolConstants()
    assert "nope" in capsys.readouterr().out


def test_unknown_keys_are_ignored(capsys):
    c = ProtocolConstants.from_dict({"oversample": 5, "bogus": 1})
    assert c.oversample == 5
    assert "bogus" in capsys.readouterr().out


def test_broken_yaml_uses_defaults(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("protocols: [unclosed\n", encoding="utf-8")
    manager = ExperimentPresetManager(str(path))
    assert manager.get_constants() == ProtocolConstants()


def test_save_and_reload(tmp_path):
    path = tmp_path / "sub" / "presets.yaml"
    manager = ExperimentPresetManager(str(path))
    manager.protocols["fast"] = ProtocolConstants(oversample=3.0).to_dict()
    manager.save_presets()

    reloaded = ExperimentPresetManager(str(path))
    assert reloaded.get_constants("fast").oversample == pytest.approx(3.0)
    assert reloaded.get_workload("planted") == manager.get_workload("planted")
