import logging
import os

from multitax.src.exceptions import MultitaxError
from multitax.src.models.run_config import RunConfig
from multitax.src.services.lp_export import lp_export
from multitax.src.services.planner_service import (
    assemble_planner_lp,
    enumerate_irreducible,
    firm_distribution,
    initial_assignment,
    initial_state,
    node_tangents,
)
from multitax.src.utils.run_setup import resolve_params, run_grid

logger = logging.getLogger(__name__)


def run(config: RunConfig, out_dir: str) -> dict:
    """
    Writes the first planner LP of a run (initial boxes and precisions) to disk.

    The format follows ``io.lp_format``: fixed MPS (``planner.mps``) or the
    LP-text subset (``planner.lp``).
    """
    try:
        grid = run_grid(config)
        params = resolve_params(config, grid)
        firms = firm_distribution(config.assignment.firms, grid, params)
        z = initial_assignment(grid, firms, params, config.assignment.initial, config.seed)
        state = initial_state(grid, z, params, config.solver)
        pairs = enumerate_irreducible(grid, config.solver.max_offset) if config.solver.ic else None
        tangents = node_tangents(state, params, config.solver.max_tangents)
        lp = assemble_planner_lp(grid, z, tangents, pairs, params, state=state, include_ic=config.solver.ic)

        fmt = config.io.lp_format
        path = os.path.join(out_dir, "planner.mps" if fmt == "mps" else "planner.lp")
        os.makedirs(out_dir, exist_ok=True)
        with open(path, "wb") as file:
            file.write(lp_export(lp, fmt))
    except (MultitaxError, OSError):
        raise
    except Exception as e:
        raise MultitaxError(f"❌ LP export failed: {e}") from e

    print(f"💾 {lp.n_vars} columns, {lp.n_rows} rows → {path}")
    return {"status": "success", "message": f"Exported planner LP to {path}.", "path": path,
            "n_vars": lp.n_vars, "n_rows": lp.n_rows}
