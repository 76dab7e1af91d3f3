import logging
import os
from typing import Optional

import numpy as np

from multitax.src.config_loader import ConfigLoader
from multitax.src.exceptions import ArgumentError, MultitaxError
from multitax.src.models.run_config import RunConfig
from multitax.src.services import io_service
from multitax.src.services.bunching_service import (
    classify_bunching,
    detect_bunching,
    wedge_strip_profile,
    wedges,
)
from multitax.src.services.grid_service import indirect_utility_field
from multitax.src.services.optimality_service import (
    bunched_via_el,
    el_residual,
    el_threshold,
    general_abc_check_1d,
)
from multitax.src.services.planner_service import benchmark_closed_form, solve_fixed_assignment

logger = logging.getLogger(__name__)


def _finite_stats(values: np.ndarray) -> dict:
    finite = np.abs(values[np.isfinite(values)])
    if not finite.size:
        return {"count": 0, "max_abs": None, "median_abs": None}
    return {"count": int(finite.size), "max_abs": float(finite.max()), "median_abs": float(np.median(finite))}


def _benchmark_residual(config: RunConfig, grid, z, params) -> np.ndarray:
    """Residuals of the benchmark-mode LP (no incentive rows) on the same lattice and refinement target."""
    if params.promised_welfare is None:
        bench, bench_lam = benchmark_closed_form(grid, z, params)
        return el_residual(bench, grid, bench_lam, params)
    print("⚙️ Solving the benchmark-mode LP for the residual threshold")
    result = solve_fixed_assignment(grid, z, params, config.solver.model_copy(update={"ic": False}))
    return el_residual(result.alloc, grid, result.lam, params)


def run(config: RunConfig, out_dir: str, bundle: Optional[str] = None) -> dict:
    """
    Bunching, wedge and optimality diagnostics of a solution bundle.

    Writes ``report.csv`` (one row per node) and ``summary.json`` (shares, λ,
    objective, residual statistics). Euler–Lagrange residuals are skipped
    with a warning on lattices too small for central differences; the
    dominance form of the ABC condition is added on one-dimensional lattices.

    Args:
        config (RunConfig): Run configuration (model params and analysis options).
        out_dir (str): Report directory.
        bundle (str, optional): Bundle directory; falls back to ``io.bundle``, then ``out_dir``.

    Returns:
        dict: Status, message, report paths and the bunched share.
    """
    bundle = bundle or config.io.bundle or out_dir
    spec = config.analysis
    print(f"🧪 Analyzing bundle {bundle}")
    grid, alloc, solution = io_service.load_bundle(bundle, config.params)
    lam = float(solution["lam"])
    params = config.params
    if solution.get("promised_welfare") is not None:
        params = params.with_welfare(solution["promised_welfare"])

    try:
        report = classify_bunching(detect_bunching(alloc, grid, spec.rel_tol, spec.exact_pair_limit), grid)
        field = wedges(alloc, grid, params)

        residual = np.full(grid.n_nodes, np.nan)
        el_summary = {"computed": False}
        try:
            residual = el_residual(alloc, grid, lam, params)
        except ArgumentError as e:
            logger.warning(f"⚠️ Euler–Lagrange residual skipped: {e}")
        else:
            benchmark = None
            if spec.el_threshold.policy == "benchmark":
                benchmark = _benchmark_residual(config, grid, alloc.z, params)
            threshold = el_threshold(spec.el_threshold, residual, benchmark)
            flags = bunched_via_el(residual, threshold, report.flags)
            el_summary = {
                "computed": True, "threshold": threshold, "policy": spec.el_threshold.policy,
                "confusion": flags.confusion, "agreement": flags.agreement,
                "residual": _finite_stats(residual),
            }

        summary = {
            "name": config.name,
            "lam": lam,
            "objective": solution.get("true_objective"),
            "n_nodes": grid.n_nodes,
            "n_bunched": report.n_bunched,
            "n_classes": len(report.classes),
            "shares": report.shares,
            "class_labels": {label: report.labels.count(label) for label in ("blunt", "targeted")},
            "classification": "class-based: blunt when a class spans both comparative-advantage sides",
            "edge_law_violations": report.edge_law_violations,
            "wedge_strips": wedge_strip_profile(field, grid, spec.strip_fraction),
            "euler_lagrange": el_summary,
        }
        if grid.n_c == 1 or grid.n_m == 1:
            if grid.n_nodes >= 2:
                abc = general_abc_check_1d(alloc, grid, lam, params)
                summary["abc_1d"] = {"holds": abc.holds, "margin": abc.margin, "axis": abc.axis}

        frame = io_service.grid_frame(grid)
        frame["c"], frame["x_c"], frame["x_m"], frame["z"] = alloc.c, alloc.x_c, alloc.x_m, alloc.z
        frame["u"] = indirect_utility_field(alloc, grid)
        frame["tau_c"], frame["tau_m"] = field.tau_c, field.tau_m
        frame["bunched"] = report.flags.astype(int)
        frame["class_id"] = report.class_id
        frame["class_label"] = report.node_labels()
        frame["el_residual"] = residual

        report_path = io_service.write_csv(frame, os.path.join(out_dir, "report.csv"))
        summary_path = io_service.write_json(summary, os.path.join(out_dir, "summary.json"))
        ConfigLoader.dump_resolved(config, os.path.join(out_dir, "resolved_config.yaml"))
    except (MultitaxError, OSError):
        raise
    except Exception as e:
        raise MultitaxError(f"❌ Analysis failed: {e}") from e

    logger.info(f"✅ Analysis done: {report.n_bunched} bunched nodes, shares {report.shares}")
    return {
        "status": "success",
        "message": f"Analyzed {grid.n_nodes} nodes, {report.n_bunched} bunched.",
        "report": report_path,
        "summary": summary_path,
        "bunched_share": report.shares.get("bunched", 0.0),
    }
