import json

import pytest

from app.cli import build_parser, main
from app.experiments.graph import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK


@pytest.fixture
def orbits_file(tmp_path):
    path = tmp_path / "orbits.json"
    assert main(["qpd", "orbits", "--chi", "0", "--starts", "100", "-o", str(path)]) == EXIT_OK
    return path


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["tfim"],
    ["qpd", "orbits"],
    ["qpd", "orbits", "--chi", "0.9"],
    ["tfim", "correlators", "--seed", "-1"],
    ["tfim", "correlators", "--g", "-1"],
    ["nash", "check"],
    ["variety", "sample", "--starts", "abc"],
    ["haar", "ubiquity", "--n", "40"],
])
def test_bad_arguments_exit_with_config_code(argv):
    assert main(argv) == EXIT_CONFIG


def test_parser_collects_repeatable_flags():
    args = build_parser().parse_args(["tfim", "correlators", "--g", "0.5", "--g", "1.5", "--n", "6"])
    assert args.g_values == [0.5, 1.5]
    assert args.n_sites == [6]
    assert args.real_symmetric is None


def test_qpd_orbits_command(orbits_file, capsys):
    report = json.loads(orbits_file.read_text(encoding="utf-8"))
    assert report["n_nash_max"] == 2
    assert {point["chart"] for point in report["points"]} <= {"north", "south"}
    assert "qpd orbits" in capsys.readouterr().out


def test_audit_command(orbits_file):
    assert main(["audit", str(orbits_file)]) == EXIT_OK

    report = json.loads(orbits_file.read_text(encoding="utf-8"))
    report["points"][0]["residual"] = 1.0
    orbits_file.write_text(json.dumps(report), encoding="utf-8")
    assert main(["audit", str(orbits_file)]) == EXIT_INVARIANT


def test_audit_missing_file(tmp_path):
    assert main(["audit", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    other = tmp_path / "notes.txt"
    other.write_text("residual 0", encoding="utf-8")
    assert main(["audit", str(other)]) == EXIT_CONFIG
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert main(["audit", str(broken)]) == EXIT_CONFIG


def test_yaml_config_with_cli_override(tmp_path):
    config = tmp_path / "run.yaml"
    config.write_text("chi: 0.5\nn_starts: 60\nseed: 3\n", encoding="utf-8")
    output = tmp_path / "orbits.json"
    assert main(["qpd", "orbits", "--config", str(config), "--seed", "4", "-o", str(output)]) == EXIT_OK
    metadata = json.loads(output.read_text(encoding="utf-8"))["metadata"]
    assert metadata["seed"] == 4
    assert metadata["config"]["n_starts"] == 60
    assert metadata["config"]["chi"] == 0.5


def test_yaml_config_rejects_unknown_keys(tmp_path):
    config = tmp_path / "run.yaml"
    config.write_text("chi: 0.5\nunknown: 1\n", encoding="utf-8")
    assert main(["qpd", "orbits", "--config", str(config)]) == EXIT_CONFIG
