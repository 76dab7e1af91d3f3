"""
Shared setup for the pipeline commands: CLI overrides, lattice and promised welfare.
"""
import logging
from typing import Optional, Tuple

from multitax.src.config_loader import ConfigLoader
from multitax.src.exceptions import ConfigError
from multitax.src.models.fields import SkillGrid
from multitax.src.models.params import ModelParams
from multitax.src.models.run_config import RunConfig
from multitax.src.services import io_service
from multitax.src.services.grid_service import build_grid, synthetic_density, with_density
from multitax.src.services.positive_service import positive_welfare

logger = logging.getLogger(__name__)


def parse_grid_size(text: str) -> Tuple[int, int]:
    """Parses ``NxM`` into (n_c, n_m)."""
    try:
        n_c, n_m = (int(part) for part in text.lower().split("x"))
    except ValueError as e:
        raise ConfigError(f"❌ --grid expects NxM, got '{text}'") from e
    if n_c < 1 or n_m < 1:
        raise ConfigError(f"❌ --grid sizes must be positive, got '{text}'")
    return n_c, n_m


def apply_overrides(
    config: RunConfig,
    seed: Optional[int] = None,
    no_ic: bool = False,
    eta: Optional[float] = None,
    grid: Optional[str] = None,
) -> RunConfig:
    """Returns a re-validated copy of ``config`` with command-line flags applied."""
    raw = config.model_dump(mode="json")
    if seed is not None:
        print(f"⚙️ Overriding seed → {seed}")
        raw["seed"] = seed
    if no_ic:
        print("⚙️ Benchmark mode: incentive rows off")
        raw["solver"]["ic"] = False
    if eta is not None:
        print(f"⚙️ Overriding eta → {eta}")
        raw["params"]["eta"] = eta
    if grid is not None:
        n_c, n_m = parse_grid_size(grid)
        print(f"⚙️ Overriding grid → {n_c}x{n_m}")
        raw["grid"]["n_c"], raw["grid"]["n_m"] = n_c, n_m
    return ConfigLoader.from_dict(raw, source="command line")


def run_grid(config: RunConfig) -> SkillGrid:
    """Lattice with masses from the density section (synthetic or an ``identify`` CSV)."""
    params = config.params
    if config.density.source == "file":
        if not config.density.path:
            raise ConfigError("❌ density.source is 'file' but density.path is not set")
        grid = io_service.read_density(config.density.path, params)
        logger.info(f"📂 Density grid {grid.n_c}x{grid.n_m} loaded from {config.density.path}")
        return grid
    spec = config.grid
    grid = build_grid(spec.n_c, spec.n_m, spec.alpha_c, spec.alpha_m, params, spacing=spec.spacing)
    mass = synthetic_density(grid, config.density.kind, config.density.spread, config.density.correlation)
    return with_density(grid, mass)


def resolve_params(config: RunConfig, grid: SkillGrid) -> ModelParams:
    """Model parameters with promised welfare filled in from the welfare section."""
    params = config.params
    if config.welfare.kind == "explicit":
        return params.with_welfare(config.welfare.value)
    if params.promised_welfare is not None:
        return params
    return params.with_welfare(positive_welfare(grid, params))
