import os

os.environ.setdefault("OPIK_TRACK_DISABLE", "true")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from multitax.src.config_loader import ConfigLoader  # noqa: E402
from multitax.src.models.params import ModelParams  # noqa: E402
from multitax.src.models.run_config import SolverSpec  # noqa: E402
from multitax.src.services.grid_service import build_grid  # noqa: E402


@pytest.fixture(autouse=True)
def disable_tracing(monkeypatch):
    """Keep @opik.track a pass-through during tests."""
    monkeypatch.setenv("OPIK_TRACK_DISABLE", "true")
    yield


@pytest.fixture(autouse=True)
def reset_config_cache():
    """Each test loads its own configs."""
    ConfigLoader.reset()
    yield
    ConfigLoader.reset()


@pytest.fixture
def mock_output_dir(tmp_path, monkeypatch):
    """Output root routed to a temporary directory."""
    out = tmp_path / "outputs"
    monkeypatch.setenv("MULTITAX_OUTPUT_DIR", str(out))
    monkeypatch.setattr("multitax.src.config.settings.multitax_output_dir", str(out))
    return out


@pytest.fixture
def params():
    """Calibrated constants: rho 2.8, kappa 1/(2 rho), eta 1.1, tau 0.3."""
    return ModelParams()


@pytest.fixture
def welfare_params(params):
    return params.with_welfare(0.0)


@pytest.fixture
def grid_3x3(params):
    """3x3 lattice uniform in p with uniform mass."""
    return build_grid(3, 3, (1.0, 2.0), (1.0, 2.0), params, spacing="uniform-p")


@pytest.fixture
def grid_4x4(params):
    return build_grid(4, 4, (1.0, 2.0), (1.0, 2.0), params, spacing="uniform-p")


@pytest.fixture
def line_grid(params):
    """One-dimensional lattice along cognitive skill."""
    return build_grid(8, 1, (1.0, 2.0), (1.5, 1.5), params, spacing="uniform-p")


@pytest.fixture
def fast_solver():
    """Loose refinement so small planner solves stay quick."""
    return SolverSpec(target_eps=1e-4, initial_eps=1e-2, shrink=0.5, max_iterations=60)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    """3x3 run with one firm and zero promised welfare; tweak sections via keyword overrides."""
    def build(**sections):
        raw = {
            "name": "small",
            "grid": {"n_c": 3, "n_m": 3, "alpha_c": [1.0, 2.0], "alpha_m": [1.0, 2.0], "spacing": "uniform-p"},
            "density": {"kind": "uniform"},
            "solver": {"target_eps": 1e-4, "initial_eps": 1e-2, "max_iterations": 60},
            "assignment": {"firms": {"kind": "degenerate", "value": 1.0}},
            "welfare": {"kind": "explicit", "value": 0.0},
        }
        for key, value in sections.items():
            raw[key] = {**raw.get(key, {}), **value} if isinstance(value, dict) else value
        return ConfigLoader.from_dict(raw, source="test")
    return build
