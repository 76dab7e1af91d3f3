import json

import pytest

from multitax.src.commands import benchmark


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: closed-form comparison
# ─────────────────────────────────────────────────────────────
def test_benchmark_matches_closed_form(tmp_path, small_config):
    response = benchmark.run(small_config(), str(tmp_path))

    assert response["status"] == "success"
    assert response["objective_gap"] <= response["error_bound"] + 1e-9
    assert response["lam"] == pytest.approx(response["closed_form_lam"], rel=1e-6)
    assert (tmp_path / "benchmark.json").exists()
    assert json.loads((tmp_path / "solution.json").read_text())["ic"] is False


def test_benchmark_drops_incentive_rows_even_when_configured(tmp_path, small_config):
    benchmark.run(small_config(solver={"ic": True}), str(tmp_path))
    assert "ic: false" in (tmp_path / "resolved_config.yaml").read_text()


def test_benchmark_task_ratio_on_a_line(tmp_path, small_config):
    # uniform mass, one firm: the physical cognitive task ratio is (α_max/α_min)^(ρ/(ρ−2))
    config = small_config(grid={"n_c": 5, "n_m": 1, "alpha_m": [1.5, 1.5]})
    response = benchmark.run(config, str(tmp_path))
    assert response["closed_form_task_ratio_c"] == pytest.approx(2 ** (2.8 / 0.8), rel=1e-9)
