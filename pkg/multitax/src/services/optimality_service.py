"""Optimality diagnostics of solved allocations.

Residuals of the interior Euler–Lagrange condition, the one-dimensional
dominance form of the ABC condition, approximation-gap bounds between
refinement levels and the implementability identity with its dominance
inequality.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from multitax.src.exceptions import ArgumentError
from multitax.src.models.fields import AllocationField, SkillGrid, WedgeField
from multitax.src.models.params import ModelParams
from multitax.src.models.run_config import ThresholdSpec
from multitax.src.services.bunching_service import wedges
from multitax.src.services.costs import consumption_cost, task_cost_function
from multitax.src.services.grid_service import indirect_utility_field
from multitax.src.services.planner_service import SolveResult

logger = logging.getLogger(__name__)


# ─────────────────────────────────────────────────────────────
# 📐 EULER–LAGRANGE RESIDUAL
# ─────────────────────────────────────────────────────────────
def _differentiated_axes(grid: SkillGrid) -> Tuple[bool, bool]:
    used = []
    for n, name in ((grid.n_c, "cognitive"), (grid.n_m, "manual")):
        if n == 2:
            raise ArgumentError(f"{name} axis has 2 nodes; central differences need at least 3")
        used.append(n >= 3)
    if not any(used):
        raise ArgumentError(f"grid {grid.n_c}x{grid.n_m} has no axis with 3 or more nodes")
    return used[0], used[1]


def el_residual(alloc: AllocationField, grid: SkillGrid, lam: float, params: ModelParams) -> np.ndarray:
    """
    Pointwise Euler–Lagrange residual π(1/u′ − λ) − Σ_s ∂_{p_s}(π/u′ · p_s·τ_s/(1 − τ_s)).

    π is the mass per p-cell area and 1/u′ = C′(c). Derivatives are central
    differences in p (nonuniform spacing allowed). An axis with a single node
    contributes no derivative term.

    Returns:
        np.ndarray: Residual per node; NaN on boundary nodes, +inf on interior
        nodes where a wedge is undefined.
    """
    use_c, use_m = _differentiated_axes(grid)
    shape = grid.shape
    width_c = np.abs(np.gradient(grid.p_c)) if use_c else np.ones(grid.n_c)
    width_m = np.abs(np.gradient(grid.p_m)) if use_m else np.ones(grid.n_m)
    dens = grid.density / (width_c[grid.node_ic] * width_m[grid.node_im])

    inv_marginal = consumption_cost(params).derivative(alloc.c)
    field = wedges(alloc, grid, params)
    with np.errstate(divide="ignore", invalid="ignore"):
        flux_c = (dens * inv_marginal * grid.node_p_c * field.tau_c / (1.0 - field.tau_c)).reshape(shape)
        flux_m = (dens * inv_marginal * grid.node_p_m * field.tau_m / (1.0 - field.tau_m)).reshape(shape)
        divergence = np.zeros(shape)
        if use_c:
            divergence += np.gradient(flux_c, grid.p_c, axis=0)
        if use_m:
            divergence += np.gradient(flux_m, grid.p_m, axis=1)
        residual = dens * (inv_marginal - lam) - divergence.reshape(-1)

    interior = np.ones(grid.n_nodes, dtype=bool)
    if use_c:
        interior &= (grid.node_ic > 0) & (grid.node_ic < grid.n_c - 1)
    if use_m:
        interior &= (grid.node_im > 0) & (grid.node_im < grid.n_m - 1)
    residual = np.where(np.isfinite(residual), residual, np.inf)
    return np.where(interior, residual, np.nan)


def el_threshold(spec: ThresholdSpec, residuals: np.ndarray, benchmark: Optional[np.ndarray] = None) -> float:
    """
    Threshold above which |residual| marks a node as bunched.

    ``relative`` scales the largest finite |residual|, ``absolute`` is the
    configured value, ``benchmark`` multiplies a quantile of benchmark
    residuals by ``factor``. Every policy is floored at ``spec.floor``.
    """
    magnitude = np.abs(np.asarray(residuals, dtype=float))
    finite = magnitude[np.isfinite(magnitude)]
    if spec.policy == "absolute":
        value = spec.value
    elif spec.policy == "relative":
        value = spec.value * (float(finite.max()) if finite.size else 0.0)
    else:
        if benchmark is None:
            raise ArgumentError("benchmark threshold policy needs benchmark residuals")
        reference = np.abs(np.asarray(benchmark, dtype=float))
        reference = reference[np.isfinite(reference)]
        value = spec.factor * (float(np.percentile(reference, spec.quantile)) if reference.size else 0.0)
    return max(float(value), spec.floor)


@dataclass(frozen=True, eq=False)
class ELFlags:
    predicted: np.ndarray
    evaluated: np.ndarray
    threshold: float
    confusion: Optional[Dict[str, int]] = None

    @property
    def agreement(self) -> Optional[float]:
        if self.confusion is None:
            return None
        total = sum(self.confusion.values())
        return (self.confusion["tp"] + self.confusion["tn"]) / total if total else None


def bunched_via_el(residuals: np.ndarray, threshold: float, detected: Optional[np.ndarray] = None) -> ELFlags:
    """
    Flags nodes with |residual| above ``threshold``.

    Boundary nodes (NaN residual) are never flagged and are left out of the
    confusion matrix against ``detected``, the allocation-based bunch flags.
    """
    residuals = np.asarray(residuals, dtype=float)
    evaluated = ~np.isnan(residuals)
    predicted = evaluated & (np.abs(np.where(evaluated, residuals, 0.0)) > threshold)
    confusion = None
    if detected is not None:
        actual = np.asarray(detected, dtype=bool)
        if actual.shape != predicted.shape:
            raise ArgumentError("detected flags and residuals differ in size")
        p, a = predicted[evaluated], actual[evaluated]
        confusion = {
            "tp": int(np.sum(p & a)), "fp": int(np.sum(p & ~a)),
            "fn": int(np.sum(~p & a)), "tn": int(np.sum(~p & ~a)),
        }
    return ELFlags(predicted=predicted, evaluated=evaluated, threshold=float(threshold), confusion=confusion)


# ─────────────────────────────────────────────────────────────
# 📊 ONE-DIMENSIONAL DOMINANCE
# ─────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class SSDResult:
    dominates: bool
    margin: float
    integrated: np.ndarray


def ssd_check_1d(f, g, p, tol: float = 1e-12) -> SSDResult:
    """
    Second-order dominance of signed measure f over g on the ascending grid p.

    f dominates g iff Σ f·û ≥ Σ g·û for every nonnegative, decreasing, convex
    û. With H = cumulative (f − g) this holds iff the total mass of f − g is
    non-negative and ∫^t H ≥ 0 at every grid point t.

    Returns:
        SSDResult: Verdict, the smallest of those quantities and ∫^t H per point.
    """
    f, g, p = (np.asarray(v, dtype=float) for v in (f, g, p))
    if not (f.shape == g.shape == p.shape) or f.ndim != 1 or f.size == 0:
        raise ArgumentError("f, g and p must be equal-length 1-D arrays")
    if np.any(np.diff(p) <= 0):
        raise ArgumentError("grid must be strictly ascending")
    cum = np.cumsum(f - g)
    integrated = np.concatenate([[0.0], np.cumsum(cum[:-1] * np.diff(p))])
    margin = min(float(integrated.min()), float(cum[-1]))
    return SSDResult(dominates=margin >= -tol, margin=margin, integrated=integrated)


@dataclass(frozen=True, eq=False)
class ABCResult:
    holds: bool
    margin: float
    slack: np.ndarray
    axis: str


def general_abc_check_1d(
    alloc: AllocationField,
    grid: SkillGrid,
    lam: float,
    params: ModelParams,
    wedges_override: Optional[WedgeField] = None,
    tol: float = 1e-9,
) -> ABCResult:
    """
    Benefits-dominate-distortions test on a one-dimensional lattice.

    Walking up in p (down in skill), the cumulated distortion
    Σ π/u′ · p·τ/(1 − τ) must stay below the double integral of the
    marginal benefit π(1/u′ − λ) at every node. The two sides coincide where
    no worker is bunched.

    Args:
        alloc (AllocationField): Solved allocation.
        grid (SkillGrid): Lattice with one axis of size 1.
        lam (float): Promise-keeping multiplier.
        params (ModelParams): Model parameters.
        wedges_override (WedgeField, optional): Wedges to test instead of the solved ones.
        tol (float): Absolute slack allowed.

    Returns:
        ABCResult: Verdict, smallest slack, per-node slack in ascending-p order.
    """
    if grid.n_c > 1 and grid.n_m > 1:
        raise ArgumentError(f"expected a one-dimensional lattice, got {grid.n_c}x{grid.n_m}")
    if grid.n_nodes < 2:
        raise ArgumentError("need at least two nodes")
    axis = "c" if grid.n_c > 1 else "m"
    field = wedges_override or wedges(alloc, grid, params)
    tau = field.tau_c if axis == "c" else field.tau_m
    p = grid.node_p_c if axis == "c" else grid.node_p_m

    order = np.argsort(p, kind="stable")
    p, tau = p[order], tau[order]
    mass = grid.density[order]
    inv_marginal = consumption_cost(params).derivative(alloc.c)[order]
    distortion = np.cumsum(mass * inv_marginal * p * np.where(np.isfinite(tau), tau / (1.0 - tau), 0.0))
    benefit_cum = np.cumsum(mass * (inv_marginal - lam))
    benefit = np.concatenate([[0.0], np.cumsum(benefit_cum[:-1] * np.diff(p))])
    slack = benefit - distortion
    margin = float(slack.min())
    return ABCResult(holds=margin >= -tol, margin=margin, slack=slack, axis=axis)


# ─────────────────────────────────────────────────────────────
# 🎯 APPROXIMATION QUALITY
# ─────────────────────────────────────────────────────────────
def approximation_gap_check(coarse: SolveResult, fine: SolveResult, tol: float = 1e-9) -> Optional[bool]:
    """
    Bound check between two refinement levels.

    The true-cost objective of ``coarse`` may exceed that of ``fine`` by at
    most the coarse error bound ε_c + max z·(ε_xc + ε_xm).

    Returns:
        Optional[bool]: Verdict, or None when either run is not proper.
    """
    if not (coarse.proper and fine.proper):
        logger.warning("⚠️ approximation gap inconclusive: a run is not proper")
        return None
    gap = coarse.true_objective - fine.true_objective
    bound = coarse.error_bound
    logger.info(f"📏 objective gap {gap:.3e} against bound {bound:.3e}")
    return bool(gap <= bound + tol * max(1.0, abs(fine.true_objective)))


@dataclass(frozen=True)
class ImplementabilityCheck:
    lhs: float
    rhs: float
    residual: float
    mode: str


def implementability_residual(result: SolveResult, grid: SkillGrid, params: ModelParams,
                              mode: str = "effective") -> ImplementabilityCheck:
    """
    Relative gap of the implementability identity at a solved optimum.

    The left side is the marginal resource cost along the ray through the
    allocation: dual-weighted tangent slopes in ``effective`` mode, exact
    derivatives Σπ(C′(c)·c + z·Σ X′(x_s)·x_s) in ``true`` mode. The right
    side is λΣπu plus the outside option times the sum of its duals. The gap
    is divided by |LP objective|.
    """
    alloc = result.alloc
    mass = grid.density
    if mode == "effective":
        s = result.slopes
        lhs = float(np.sum(s.c_weight * alloc.c + s.xc_weight * alloc.x_c + s.xm_weight * alloc.x_m))
    elif mode == "true":
        c_cost, x_cost = consumption_cost(params), task_cost_function(params)
        per_node = c_cost.derivative_times(alloc.c) + alloc.z * (
            x_cost.derivative_times(alloc.x_c) + x_cost.derivative_times(alloc.x_m))
        lhs = float(mass @ per_node)
    else:
        raise ArgumentError(f"unknown implementability mode '{mode}'")
    u = indirect_utility_field(alloc, grid)
    rhs = result.lam * float(mass[mass > 0] @ u[mass > 0]) + params.outside_option * float(
        result.slopes.outside_duals.sum())
    scale = abs(result.lp_objective) or 1.0
    return ImplementabilityCheck(lhs=lhs, rhs=rhs, residual=abs(lhs - rhs) / scale, mode=mode)


def menu_allocation(menu: AllocationField, grid: SkillGrid, z=1.0) -> AllocationField:
    """Lets every node pick its utility-maximising bundle from ``menu`` (lowest index on ties)."""
    utility = (menu.c[None, :] - np.multiply.outer(grid.node_p_c, menu.x_c)
               - np.multiply.outer(grid.node_p_m, menu.x_m))
    pick = np.argmax(utility, axis=1)
    z = np.broadcast_to(np.asarray(z, dtype=float), (grid.n_nodes,))
    return AllocationField(c=menu.c[pick], x_c=menu.x_c[pick], x_m=menu.x_m[pick], z=z)


def dominance_gap(result: SolveResult, grid: SkillGrid, candidate: AllocationField) -> float:
    """
    Σ(weights·v̂) − λΣπû for an incentive-compatible candidate v̂.

    Non-negative for every candidate with û ≥ 0 when ``result`` is proper.
    """
    s = result.slopes
    lhs = float(np.sum(s.c_weight * candidate.c + s.xc_weight * candidate.x_c + s.xm_weight * candidate.x_m))
    u = indirect_utility_field(candidate, grid)
    mass = grid.density
    return lhs - result.lam * float(mass[mass > 0] @ u[mass > 0])


def lagrangian(alloc: AllocationField, grid: SkillGrid, params: ModelParams, lam: float,
               scale: float = 1.0) -> float:
    """
    Resource cost minus λ times promise-keeping slack at the scaled allocation s·(c, x_c, x_m).

    Scaling preserves incentive compatibility, so at an optimum the derivative
    in s vanishes at s = 1.
    """
    if scale < 0:
        raise ArgumentError(f"scale must be non-negative, got {scale}")
    c_cost, x_cost = consumption_cost(params), task_cost_function(params)
    mass = grid.density
    weighted = mass > 0
    c, x_c, x_m = scale * alloc.c, scale * alloc.x_c, scale * alloc.x_m
    cost = c_cost.value(c) + alloc.z * (x_cost.value(x_c) + x_cost.value(x_m))
    utility = c - grid.node_p_c * x_c - grid.node_p_m * x_m
    welfare = 0.0 if params.promised_welfare is None else params.promised_welfare
    return float(mass[weighted] @ cost[weighted]) - lam * (float(mass[weighted] @ utility[weighted]) - welfare)
