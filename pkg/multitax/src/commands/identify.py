import logging
import os
from typing import Optional

import numpy as np
import pandas as pd

from multitax.src.config_loader import ConfigLoader
from multitax.src.exceptions import MultitaxError
from multitax.src.models.run_config import RunConfig
from multitax.src.services import io_service
from multitax.src.services.calibration_service import kde_smooth, winsorize
from multitax.src.services.grid_service import build_grid, with_density
from multitax.src.services.positive_service import identify_batch

logger = logging.getLogger(__name__)


def run(config: RunConfig, out_dir: str, records: Optional[str] = None) -> dict:
    """
    Identifies skills from worker records and smooths them onto the run lattice.

    Order: records are read, every valid record is inverted exactly into
    tasks and skills, the identified skills α are winsorized per axis within
    the configured percentile band, and the clipped skills are smoothed onto
    the ``grid`` lattice with the reflected Gaussian kernel. Wages and
    intensities are never clipped, and ``identified.csv`` keeps the unclipped
    skills.

    Args:
        config (RunConfig): Run configuration.
        out_dir (str): Directory receiving ``identified.csv`` and ``density.csv``.
        records (str, optional): Record file; falls back to ``io.records``.

    Returns:
        dict: Status, message, output paths and the number of skipped lines.
    """
    path = records or config.io.records
    if not path:
        raise MultitaxError("❌ No record file given (use --records or io.records)")
    spec = config.identification
    params = config.params.model_copy(update={"zeta": spec.zeta})
    try:
        print(f"🧪 Identifying workers from {path}")
        table, bad_lines = io_service.read_records(path, delimiter=spec.delimiter)
        ident = identify_batch(table["wage"].to_numpy(), table["rel_intensity"].to_numpy(), params)

        identified = pd.DataFrame({
            "wage": table["wage"],
            "rel_intensity": table["rel_intensity"],
            "weight": table["weight"],
            "x_c": ident["x_c"],
            "x_m": ident["x_m"],
            "alpha_c": ident["alpha_c"],
            "alpha_m": ident["alpha_m"],
            "alpha_c_rho": ident["alpha_c"] ** params.rho,
            "alpha_m_rho": ident["alpha_m"] ** params.rho,
            "ell_c": ident["ell_c"],
            "ell_m": ident["ell_m"],
            "z": ident["z"],
        })

        lower, upper = spec.winsorize
        points = np.column_stack([
            winsorize(ident["alpha_c"], lower, upper),
            winsorize(ident["alpha_m"], lower, upper),
        ])
        g = config.grid
        grid = build_grid(g.n_c, g.n_m, g.alpha_c, g.alpha_m, params, spacing=g.spacing)
        grid = with_density(grid, kde_smooth(points, grid, table["weight"].to_numpy(), spec.bandwidth))

        identified_path = io_service.write_csv(identified, os.path.join(out_dir, "identified.csv"))
        density_path = io_service.write_csv(io_service.grid_frame(grid), os.path.join(out_dir, "density.csv"))
        ConfigLoader.dump_resolved(config, os.path.join(out_dir, "resolved_config.yaml"))
    except (MultitaxError, OSError):
        raise
    except Exception as e:
        raise MultitaxError(f"❌ Identification failed: {e}") from e

    logger.info(f"✅ Identified {len(identified)} workers, density on {grid.n_c}x{grid.n_m} nodes")
    return {
        "status": "success",
        "message": f"Identified {len(identified)} workers ({len(bad_lines)} lines skipped).",
        "identified": identified_path,
        "density": density_path,
        "skipped_lines": bad_lines,
    }
