"""Bunching detection and classification, and tax wedges of a solved allocation."""
import logging
from typing import Dict

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from multitax.src.exceptions import ArgumentError, NumericError
from multitax.src.models.fields import AllocationField, BunchingReport, SkillGrid, WedgeField
from multitax.src.models.params import ModelParams
from multitax.src.services.costs import consumption_cost

logger = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-4
WEDGE_AGREEMENT_TOL = 1e-8


# ─────────────────────────────────────────────────────────────
# 🧲 BUNCHING
# ─────────────────────────────────────────────────────────────
def _flagged_pairs(tasks: np.ndarray, types: np.ndarray, rel_tol: float, exact_limit: int) -> np.ndarray:
    n = tasks.shape[0]
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    if n <= exact_limit:
        d_task, d_type = pdist(tasks), pdist(types)
        i, j = np.triu_indices(n, k=1)
        hit = d_task < rel_tol * d_type
        return np.column_stack([i[hit], j[hit]]).astype(np.int64)
    # ‖Δx‖ < rel_tol·‖Δp‖ ≤ rel_tol·diam(p)
    spread = np.ptp(types, axis=0)
    radius = rel_tol * float(np.hypot(*spread))
    candidates = cKDTree(tasks).query_pairs(radius, output_type="ndarray")
    if candidates.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    candidates = np.sort(candidates, axis=1)
    d_task = np.linalg.norm(tasks[candidates[:, 0]] - tasks[candidates[:, 1]], axis=1)
    d_type = np.linalg.norm(types[candidates[:, 0]] - types[candidates[:, 1]], axis=1)
    kept = candidates[d_task < rel_tol * d_type]
    return kept[np.lexsort((kept[:, 1], kept[:, 0]))].astype(np.int64)


def detect_bunching(
    alloc: AllocationField,
    grid: SkillGrid,
    rel_tol: float = DEFAULT_REL_TOL,
    exact_limit: int = 2500,
) -> BunchingReport:
    """
    Flags node pairs whose task allocations are closer than ``rel_tol`` times their type distance.

    Task distance is measured on (x_c, x_m), type distance in p-coordinates.
    Up to ``exact_limit`` nodes every pair is compared; above that, candidate
    pairs come from a k-d tree over the allocations. Bunching classes are the
    connected components of the flagged pairs with at least two nodes.

    Returns:
        BunchingReport: Flags, class ids (−1 when separated), classes and edges.
    """
    if alloc.n_nodes != grid.n_nodes:
        raise ArgumentError("allocation and grid sizes differ")
    tasks = np.column_stack([alloc.x_c, alloc.x_m])
    types = np.column_stack([grid.node_p_c, grid.node_p_m])
    edges = _flagged_pairs(tasks, types, rel_tol, exact_limit)

    n = grid.n_nodes
    adjacency = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    _, labels = connected_components(adjacency, directed=False)
    sizes = np.bincount(labels, minlength=n)
    class_id = np.full(n, -1, dtype=np.int64)
    classes = []
    for node in range(n):
        if sizes[labels[node]] >= 2 and class_id[node] < 0:
            members = np.flatnonzero(labels == labels[node])
            class_id[members] = len(classes)
            classes.append(tuple(int(m) for m in members))

    d_c = grid.node_alpha_c[edges[:, 1]] - grid.node_alpha_c[edges[:, 0]]
    d_m = grid.node_alpha_m[edges[:, 1]] - grid.node_alpha_m[edges[:, 0]]
    violations = int(np.sum(d_c * d_m > 0))
    if violations:
        logger.warning(f"⚠️ {violations} bunch edges join types that are better in both skills")
    report = BunchingReport(
        flags=class_id >= 0, class_id=class_id, classes=tuple(classes),
        edges=edges.reshape(-1, 2), rel_tol=rel_tol, edge_law_violations=violations,
    )
    logger.info(f"✅ {report.n_bunched} of {n} nodes bunched in {len(classes)} classes")
    return report


def weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    return float(values[order][np.searchsorted(cum, 0.5 * cum[-1])])


def classify_bunching(report: BunchingReport, grid: SkillGrid) -> BunchingReport:
    """
    Labels each bunching class "blunt" or "targeted".

    A class is blunt when α_m/α_c minus its mass-weighted median is strictly
    positive for some member and strictly negative for another, i.e. the
    class spans both comparative-advantage regions.

    Returns:
        BunchingReport: The report with labels and mass shares filled in.
    """
    ratio = grid.node_alpha_m / grid.node_alpha_c
    centred = ratio - weighted_median(ratio, grid.density)
    scale = 1e-12 * max(float(np.max(np.abs(ratio))), 1.0)
    labels = []
    for members in report.classes:
        side = centred[list(members)]
        labels.append("blunt" if (side > scale).any() and (side < -scale).any() else "targeted")

    mass = grid.density
    total = float(mass.sum())
    blunt = sum(float(mass[list(m)].sum()) for m, lab in zip(report.classes, labels) if lab == "blunt")
    targeted = sum(float(mass[list(m)].sum()) for m, lab in zip(report.classes, labels) if lab == "targeted")
    shares = {"bunched": (blunt + targeted) / total, "blunt": blunt / total, "targeted": targeted / total}
    return BunchingReport(
        flags=report.flags, class_id=report.class_id, classes=report.classes, edges=report.edges,
        rel_tol=report.rel_tol, edge_law_violations=report.edge_law_violations,
        labels=tuple(labels), shares=shares,
    )


# ─────────────────────────────────────────────────────────────
# 💸 WEDGES
# ─────────────────────────────────────────────────────────────
def wedges(alloc: AllocationField, grid: SkillGrid, params: ModelParams) -> WedgeField:
    """
    Task wedges τ_s from the marginal rate between consumption and task s.

    The p-coordinate form 1 − τ = ρ·p·C′(c)·x^(1−2/ρ)/z and the skill form
    1 − τ = κρ·x_phys^(ρ−2)·C′(c)/(z·α^ρ) are evaluated separately and must
    agree node-wise. Wedges of nodes with x_s = 0 are NaN.
    """
    rho = params.rho
    c_prime = consumption_cost(params).derivative(alloc.c)
    out = {}
    for name, x, p, alpha in (
        ("tau_c", alloc.x_c, grid.node_p_c, grid.node_alpha_c),
        ("tau_m", alloc.x_m, grid.node_p_m, grid.node_alpha_m),
    ):
        defined = x > 0
        safe = np.where(defined, x, 1.0)
        via_p = rho * p * c_prime * safe ** (1.0 - 2.0 / rho) / alloc.z
        via_alpha = params.kappa_rho * (safe ** (1.0 / rho)) ** (rho - 2.0) * c_prime / (alloc.z * alpha ** rho)
        gap = np.abs(via_p - via_alpha) / np.maximum(np.abs(via_alpha), 1e-300)
        if np.any(gap[defined] > WEDGE_AGREEMENT_TOL):
            raise NumericError(f"wedge formulas disagree for {name} (max rel gap {gap[defined].max():.2e})",
                               residual=float(gap[defined].max()))
        out[name] = np.where(defined, 1.0 - via_alpha, np.nan)
    return WedgeField(tau_c=out["tau_c"], tau_m=out["tau_m"])


def wedge_strip_profile(field: WedgeField, grid: SkillGrid, fraction: float = 0.1) -> Dict[str, float]:
    """Mean |τ_s| on the top-α_s boundary strip next to the grid-interior mean."""
    ic, im = grid.node_ic, grid.node_im
    interior = (ic > 0) & (ic < grid.n_c - 1) & (im > 0) & (im < grid.n_m - 1)
    k_c = max(1, int(np.floor(fraction * grid.n_c)))
    k_m = max(1, int(np.floor(fraction * grid.n_m)))

    def mean_abs(values, mask):
        chosen = np.abs(values[mask])
        chosen = chosen[np.isfinite(chosen)]
        return float(chosen.mean()) if chosen.size else float("nan")

    return {
        "tau_c_top": mean_abs(field.tau_c, ic >= grid.n_c - k_c),
        "tau_c_interior": mean_abs(field.tau_c, interior),
        "tau_m_top": mean_abs(field.tau_m, im >= grid.n_m - k_m),
        "tau_m_interior": mean_abs(field.tau_m, interior),
    }
