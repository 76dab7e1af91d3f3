import pytest
import yaml

from multitax.src.exceptions import BundleError, ConvergenceError, MultitaxError
from multitax.src.main import build_parser, exit_code, main


@pytest.fixture
def config_file(tmp_path, small_config):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(small_config().model_dump(mode="json")))
    return str(path)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: exit codes
# ─────────────────────────────────────────────────────────────
def test_export_lp_succeeds(tmp_path, config_file, capsys):
    assert main(["export-lp", "--config", config_file, "--out", str(tmp_path / "lp")]) == 0
    assert "✅" in capsys.readouterr().out
    assert (tmp_path / "lp" / "planner.mps").exists()


def test_output_root_from_settings(config_file, mock_output_dir):
    assert main(["export-lp", "--config", config_file]) == 0
    assert (mock_output_dir / "small" / "planner.mps").exists()


def test_grid_override_on_command_line(tmp_path, config_file):
    assert main(["export-lp", "--config", config_file, "--grid", "2x2", "--no-ic", "--out", str(tmp_path)]) == 0


@pytest.mark.parametrize("argv", [
    ["solve", "--config", "no-such-config"],
    ["export-lp", "--grid", "3by3"],
])
def test_config_errors_exit_2(argv):
    assert main(argv) == 2


def test_missing_bundle_exits_4(tmp_path, config_file):
    assert main(["analyze", "--config", config_file, "--bundle", str(tmp_path / "absent"),
                 "--out", str(tmp_path)]) == 4


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["optimize"])


@pytest.mark.parametrize("error,code", [
    (ConvergenceError("stalled", history=[]), 3),
    (BundleError("missing"), 4),
    (MultitaxError("generic"), 3),
    (FileNotFoundError("x"), 4),
    (ZeroDivisionError(), 3),
    (KeyError("k"), 1),
])
def test_exit_code_mapping(error, code):
    assert exit_code(error) == code
