import logging
import os
from dataclasses import asdict

from multitax.src.config_loader import ConfigLoader
from multitax.src.exceptions import MultitaxError
from multitax.src.models.run_config import RunConfig
from multitax.src.services import io_service
from multitax.src.services.optimality_service import implementability_residual
from multitax.src.services.planner_service import (
    AssignmentResult,
    all_pairs_ic_violation,
    assignment_iterate,
    firm_distribution,
)
from multitax.src.utils.run_setup import resolve_params, run_grid

logger = logging.getLogger(__name__)


def solution_summary(config: RunConfig, outcome: AssignmentResult, grid, params) -> dict:
    """JSON-ready description of a solved run, stored as ``solution.json``."""
    result = outcome.result
    summary = {
        "name": config.name,
        "spacing": grid.spacing,
        "shape": [grid.n_c, grid.n_m],
        "lam": result.lam,
        "lp_objective": result.lp_objective,
        "true_objective": result.true_objective,
        "error_bound": result.error_bound,
        "proper": result.proper,
        "eps": {"c": result.state.eps_c, "x_c": result.state.eps_xc, "x_m": result.state.eps_xm},
        "promised_welfare": params.promised_welfare,
        "ic": config.solver.ic,
        "outer_iterations": outcome.outer_iterations,
        "z_changes": list(outcome.z_changes),
        "objectives": list(outcome.objectives),
        "refinement": [asdict(r) for r in result.state.history],
        "implementability_residual": implementability_residual(result, grid, params).residual,
    }
    if config.solver.ic:
        summary["max_pairwise_ic_violation"] = all_pairs_ic_violation(result.alloc, grid)
    return summary


def run(config: RunConfig, out_dir: str, resume: bool = False) -> dict:
    """
    Solves the planner problem with assignment iteration and writes the bundle.

    One checkpoint per outer iteration is kept under ``checkpoints/`` (also
    when the solve fails); ``resume`` restarts from the latest one. With
    ``io.dump_lp`` every assembled LP is written under ``lp/``.

    Args:
        config (RunConfig): Run configuration.
        out_dir (str): Bundle directory.
        resume (bool): Continue from the latest checkpoint in ``out_dir``.

    Returns:
        dict: Status, message, bundle path, λ and objective.
    """
    try:
        grid = run_grid(config)
        params = resolve_params(config, grid)
        print(f"⚙️ Promised welfare → {params.promised_welfare:.10g}")
        firms = firm_distribution(config.assignment.firms, grid, params)

        on_iteration = None
        if config.io.dump_lp:
            lp_dir = os.path.join(out_dir, "lp")
            counter = {"n": 0}

            def on_iteration(_iteration, lp):
                io_service.write_lp_dump(lp, lp_dir, counter["n"], config.io.lp_format)
                counter["n"] += 1

        checkpoint_dir = os.path.join(out_dir, "checkpoints") if config.io.checkpoints else None
        outcome = assignment_iterate(
            grid, firms, params, config.solver, config.assignment,
            checkpoint_dir=checkpoint_dir, resume=resume, seed=config.seed, on_iteration=on_iteration,
        )
        summary = solution_summary(config, outcome, grid, params)
        io_service.write_bundle(out_dir, grid, outcome.alloc, summary)
        ConfigLoader.dump_resolved(config, os.path.join(out_dir, "resolved_config.yaml"))
    except (MultitaxError, OSError):
        raise
    except Exception as e:
        raise MultitaxError(f"❌ Solve failed: {e}") from e

    return {
        "status": "success",
        "message": f"Solved {grid.n_c}x{grid.n_m} lattice in {outcome.outer_iterations} outer iteration(s).",
        "bundle": out_dir,
        "lam": outcome.lam,
        "objective": outcome.result.true_objective,
    }
