import json

import numpy as np
import pandas as pd
import pytest

from multitax.src.commands import analyze, benchmark, solve
from multitax.src.exceptions import BundleError
from multitax.src.services.io_service import load_bundle
from multitax.src.services.optimality_service import el_residual
from multitax.src.services.planner_service import solve_fixed_assignment


@pytest.fixture
def solved_bundle(tmp_path, small_config):
    out = tmp_path / "bundle"
    solve.run(small_config(), str(out))
    return out


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: diagnostics report
# ─────────────────────────────────────────────────────────────
def test_analyze_writes_report(tmp_path, small_config, solved_bundle):
    out = tmp_path / "report"
    response = analyze.run(small_config(), str(out), bundle=str(solved_bundle))

    assert response["status"] == "success"
    report = pd.read_csv(out / "report.csv")
    assert len(report) == 9
    for column in ("tau_c", "tau_m", "bunched", "class_id", "class_label", "el_residual"):
        assert column in report.columns

    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_nodes"] == 9
    assert summary["euler_lagrange"]["computed"] is True
    assert 0.0 <= summary["shares"]["bunched"] <= 1.0
    assert summary["shares"]["blunt"] + summary["shares"]["targeted"] == pytest.approx(summary["shares"]["bunched"])
    assert "abc_1d" not in summary


def test_analyze_defaults_to_out_dir(small_config, solved_bundle):
    response = analyze.run(small_config(), str(solved_bundle))
    assert response["report"].startswith(str(solved_bundle))


def test_analyze_benchmark_bundle_has_no_wedges(tmp_path, small_config):
    benchmark.run(small_config(), str(tmp_path))
    analyze.run(small_config(), str(tmp_path))
    report = pd.read_csv(tmp_path / "report.csv")
    assert report["tau_c"].abs().max() < 0.1
    assert report["tau_m"].abs().max() < 0.1


def test_analyze_line_adds_abc(tmp_path, small_config):
    config = small_config(grid={"n_c": 5, "n_m": 1, "alpha_m": [1.5, 1.5]})
    solve.run(config, str(tmp_path))
    analyze.run(config, str(tmp_path))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["abc_1d"]["axis"] == "c"


def test_analyze_skips_el_on_small_grid(tmp_path, small_config):
    config = small_config(grid={"n_c": 2, "n_m": 2})
    solve.run(config, str(tmp_path))
    analyze.run(config, str(tmp_path))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["euler_lagrange"] == {"computed": False}
    assert pd.read_csv(tmp_path / "report.csv")["el_residual"].isna().all()


def test_analyze_default_threshold_from_benchmark_residuals(tmp_path, small_config, solved_bundle):
    config = small_config()
    assert config.analysis.el_threshold.policy == "benchmark"
    analyze.run(config, str(tmp_path), bundle=str(solved_bundle))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["euler_lagrange"]["policy"] == "benchmark"

    grid, alloc, solution = load_bundle(str(solved_bundle), config.params)
    params = config.params.with_welfare(solution["promised_welfare"])
    bench = solve_fixed_assignment(grid, alloc.z, params, config.solver.model_copy(update={"ic": False}))
    residual = np.abs(el_residual(bench.alloc, grid, bench.lam, params))
    expected = max(5.0 * float(np.percentile(residual[np.isfinite(residual)], 95.0)), 1e-8)
    assert summary["euler_lagrange"]["threshold"] == pytest.approx(expected, rel=1e-9)


def test_analyze_relative_threshold_policy(tmp_path, small_config, solved_bundle):
    config = small_config(analysis={"el_threshold": {"policy": "relative", "value": 0.05}})
    analyze.run(config, str(tmp_path), bundle=str(solved_bundle))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["euler_lagrange"]["policy"] == "relative"
    assert summary["euler_lagrange"]["threshold"] == pytest.approx(
        max(0.05 * summary["euler_lagrange"]["residual"]["max_abs"], 1e-8))


def test_analyze_missing_bundle(tmp_path, small_config):
    with pytest.raises(BundleError):
        analyze.run(small_config(), str(tmp_path), bundle=str(tmp_path / "absent"))
