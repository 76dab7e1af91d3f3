import logging
import os

import numpy as np

from multitax.src.config_loader import ConfigLoader
from multitax.src.exceptions import MultitaxError
from multitax.src.models.run_config import RunConfig
from multitax.src.services import io_service
from multitax.src.services.grid_service import util_to_physical
from multitax.src.services.planner_service import (
    benchmark_closed_form,
    firm_distribution,
    initial_assignment,
    solve_fixed_assignment,
    true_objective,
)
from multitax.src.utils.run_setup import resolve_params, run_grid

logger = logging.getLogger(__name__)


def run(config: RunConfig, out_dir: str) -> dict:
    """
    Solves without incentive rows and compares with the closed-form optimum.

    Incentive and outside-option rows are always dropped here. The LP
    allocation is written as a regular bundle, and ``benchmark.json`` reports
    the objective gap (bounded by the refinement error bound), the largest
    relative task deviation and the physical task spread across the lattice.

    Returns:
        dict: Status, message and the comparison figures.
    """
    config = ConfigLoader.from_dict(
        {**config.model_dump(mode="json"),
         "solver": {**config.solver.model_dump(mode="json"), "ic": False}},
        source="benchmark")
    try:
        grid = run_grid(config)
        params = resolve_params(config, grid)
        firms = firm_distribution(config.assignment.firms, grid, params)
        z = initial_assignment(grid, firms, params, config.assignment.initial, config.seed)

        result = solve_fixed_assignment(grid, z, params, config.solver)
        closed, closed_lam = benchmark_closed_form(grid, z, params)
        closed_objective = true_objective(closed, grid, params)

        task_gap = max(
            float(np.max(np.abs(result.alloc.x_c - closed.x_c) / closed.x_c)),
            float(np.max(np.abs(result.alloc.x_m - closed.x_m) / closed.x_m)),
        )
        phys_c = util_to_physical(result.alloc.x_c, params)
        comparison = {
            "lam": result.lam,
            "closed_form_lam": closed_lam,
            "lp_objective": result.lp_objective,
            "true_objective": result.true_objective,
            "closed_form_objective": closed_objective,
            "objective_gap": result.true_objective - closed_objective,
            "error_bound": result.error_bound,
            "max_relative_task_gap": task_gap,
            "task_ratio_c": float(phys_c.max() / phys_c.min()),
            "closed_form_task_ratio_c": float(util_to_physical(closed.x_c, params).max()
                                              / util_to_physical(closed.x_c, params).min()),
        }
        summary = {
            "name": config.name, "spacing": grid.spacing, "shape": [grid.n_c, grid.n_m],
            "lam": result.lam, "lp_objective": result.lp_objective, "true_objective": result.true_objective,
            "error_bound": result.error_bound, "proper": result.proper,
            "promised_welfare": params.promised_welfare, "ic": False,
        }
        io_service.write_bundle(out_dir, grid, result.alloc, summary)
        io_service.write_json(comparison, os.path.join(out_dir, "benchmark.json"))
        ConfigLoader.dump_resolved(config, os.path.join(out_dir, "resolved_config.yaml"))
    except (MultitaxError, OSError):
        raise
    except Exception as e:
        raise MultitaxError(f"❌ Benchmark failed: {e}") from e

    logger.info(f"✅ Benchmark gap {comparison['objective_gap']:.3e} (bound {result.error_bound:.3e})")
    return {"status": "success", "message": "Benchmark solved and compared with the closed form.", **comparison}
