"""Approximate planner problem on a skill lattice.

The planner minimises resource cost Σπ(C(c) + z·Σ_s X(x_s)) over menus that
are incentive compatible on the lattice, respect the outside option and
deliver the promised welfare. Costs are replaced by tangent-line envelopes,
which turns each fixed-assignment problem into an LP; precision and the
per-node boxes the tangents cover are refined until the solution is interior
and the total tangent error is below target.
"""
import logging
from dataclasses import dataclass, field, replace
from math import gcd
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import opik
from scipy.optimize import brentq

from multitax.src.exceptions import (
    ArgumentError,
    ConvergenceError,
    DomainError,
    NumericError,
    PlannerInfeasibleError,
)
from multitax.src.models.fields import (
    AllocationField,
    IrreduciblePairSet,
    RefinementRecord,
    RefinementState,
    SkillGrid,
    TangentFamily,
)
from multitax.src.models.lp import LinearProgram, LPSolution
from multitax.src.models.params import ModelParams
from multitax.src.models.run_config import AssignmentSpec, FirmSpec, SolverSpec
from multitax.src.services import io_service
from multitax.src.services.costs import ConvexCost, consumption_cost, task_cost_function
from multitax.src.services.grid_service import indirect_utility_field, p_affine
from multitax.src.services.lp_service import LPBuilder, lp_solve
from multitax.src.services.positive_service import comonotone_coupling, infer_firm, positive_equilibrium
from multitax.src.services.tangent_service import build_tangents

logger = logging.getLogger(__name__)

#: per-node variable layout: column 6k + j
NODE_VARS = ("c", "x_c", "x_m", "r", "r_c", "r_m")
_VAR_PREFIX = ("C", "XC", "XM", "R", "RC", "RM")


# ─────────────────────────────────────────────────────────────
# 🔗 INCENTIVE STRUCTURE
# ─────────────────────────────────────────────────────────────
def _offsets(grid: SkillGrid, max_offset: Optional[int]) -> List[Tuple[int, int]]:
    cap_c = grid.n_c - 1 if max_offset is None else min(max_offset, grid.n_c - 1)
    cap_m = grid.n_m - 1 if max_offset is None else min(max_offset, grid.n_m - 1)
    return [(di, dj) for di in range(-cap_c, cap_c + 1) for dj in range(-cap_m, cap_m + 1)
            if (di, dj) != (0, 0)]


def _start_positions(grid: SkillGrid, di: int, dj: int) -> Tuple[np.ndarray, np.ndarray]:
    i = np.arange(max(0, -di), grid.n_c - max(0, di))
    j = np.arange(max(0, -dj), grid.n_m - max(0, dj))
    ii, jj = np.meshgrid(i, j, indexing="ij")
    return ii.reshape(-1), jj.reshape(-1)


def _segment_reducible(grid: SkillGrid, ii: np.ndarray, jj: np.ndarray, di: int, dj: int) -> np.ndarray:
    """True where some lattice node lies strictly inside the p-segment of the pair."""
    pc, pm = grid.p_c, grid.p_m
    a_c, a_m = pc[ii], pm[jj]
    span_c, span_m = pc[ii + di] - a_c, pm[jj + dj] - a_m
    length2 = span_c ** 2 + span_m ** 2
    reducible = np.zeros(ii.size, dtype=bool)
    si, sj = (1 if di >= 0 else -1), (1 if dj >= 0 else -1)
    for ki in range(abs(di) + 1):
        for kj in range(abs(dj) + 1):
            if (ki, kj) in ((0, 0), (abs(di), abs(dj))):
                continue
            m_c, m_m = pc[ii + si * ki] - a_c, pm[jj + sj * kj] - a_m
            cross = m_c * span_m - m_m * span_c
            t = (m_c * span_c + m_m * span_m) / length2
            on_line = np.abs(cross) <= 1e-10 * length2
            reducible |= on_line & (t > 1e-12) & (t < 1 - 1e-12)
    return reducible


def enumerate_irreducible(grid: SkillGrid, max_offset: Optional[int] = None) -> IrreduciblePairSet:
    """
    Ordered node pairs whose p-segment contains no other lattice node.

    On a lattice that is equally spaced in p the test reduces to the offset
    being primitive (gcd(|Δi|, |Δj|) = 1). Otherwise every offset is checked
    against the nodes of its index box.

    Args:
        grid (SkillGrid): The lattice.
        max_offset (int, optional): Keep only offsets with max(|Δi|, |Δj|) ≤ cap.

    Returns:
        IrreduciblePairSet: Pairs (from, to) with their offsets, symmetric under swap.
    """
    affine = p_affine(grid)
    pairs, offsets = [], []
    for di, dj in _offsets(grid, max_offset):
        if affine and gcd(abs(di), abs(dj)) != 1:
            continue
        ii, jj = _start_positions(grid, di, dj)
        if ii.size == 0:
            continue
        if not affine and (abs(di) > 1 or abs(dj) > 1):
            keep = ~_segment_reducible(grid, ii, jj, di, dj)
            ii, jj = ii[keep], jj[keep]
        src = grid.node_index(ii, jj)
        dst = grid.node_index(ii + di, jj + dj)
        pairs.append(np.column_stack([src, dst]))
        offsets.append(np.tile([di, dj], (src.size, 1)))
    if pairs:
        pair_arr = np.concatenate(pairs)
        off_arr = np.concatenate(offsets)
        order = np.lexsort((pair_arr[:, 1], pair_arr[:, 0]))
        pair_arr, off_arr = pair_arr[order], off_arr[order]
    else:
        pair_arr = np.zeros((0, 2), dtype=np.int64)
        off_arr = np.zeros((0, 2), dtype=np.int64)
    logger.debug(f"🔗 {pair_arr.shape[0]} irreducible ordered pairs on a {grid.n_c}x{grid.n_m} grid")
    return IrreduciblePairSet(pairs=pair_arr, offsets=off_arr, max_offset=max_offset)


def ic_triplets(pairs: IrreduciblePairSet, grid: SkillGrid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-local triplets of u(p) − [c(q) − p·x(q)] ≥ 0 for each ordered pair (p, q)."""
    src, dst = pairs.pairs[:, 0], pairs.pairs[:, 1]
    pc, pm = grid.node_p_c[src], grid.node_p_m[src]
    n = src.size
    rows = np.repeat(np.arange(n), 6)
    cols = np.column_stack([6 * src, 6 * src + 1, 6 * src + 2, 6 * dst, 6 * dst + 1, 6 * dst + 2]).reshape(-1)
    vals = np.column_stack([np.ones(n), -pc, -pm, -np.ones(n), pc, pm]).reshape(-1)
    return rows, cols, vals


def all_pairs_ic_violation(alloc: AllocationField, grid: SkillGrid, chunk: int = 2048) -> float:
    """Largest gain any type gets from any other type's bundle (0 when fully IC)."""
    u = indirect_utility_field(alloc, grid)
    worst = 0.0
    for start in range(0, grid.n_nodes, chunk):
        sl = slice(start, start + chunk)
        mimic = alloc.c[None, :] - np.outer(grid.node_p_c[sl], alloc.x_c) - np.outer(grid.node_p_m[sl], alloc.x_m)
        worst = max(worst, float(np.max(mimic - u[sl, None])))
    return worst


# ─────────────────────────────────────────────────────────────
# 🧮 LP ASSEMBLY
# ─────────────────────────────────────────────────────────────
def assemble_planner_lp(
    grid: SkillGrid,
    z: np.ndarray,
    tangents: Sequence[Tuple[TangentFamily, TangentFamily, TangentFamily]],
    pairs: Optional[IrreduciblePairSet],
    params: ModelParams,
    state: Optional[RefinementState] = None,
    include_ic: bool = True,
) -> LinearProgram:
    """
    Builds the approximate planner LP for a fixed assignment.

    Columns are ``[c, x_c, x_m, r, r_c, r_m]`` per node. Rows are, in order,
    the tangent rows of every node (consumption, cognitive, manual), the
    incentive rows of ``pairs``, one outside-option row per node and the
    promise-keeping row ``PK``. Task boxes are the tangent intervals; the
    consumption box is the consumption interval unless C is linear, in which
    case c is free. Zero-mass nodes keep their incentive rows but carry no
    weight in the objective or in promise keeping.

    Args:
        grid (SkillGrid): The lattice with masses.
        z (np.ndarray): Project value per node, strictly positive.
        tangents: Per-node (consumption, cognitive, manual) tangent families.
        pairs (IrreduciblePairSet, optional): Incentive pairs; ignored without ICs.
        params (ModelParams): Needs ``promised_welfare`` set.
        state (RefinementState, optional): Boxes the tangents must cover.
        include_ic (bool): False drops incentive and outside-option rows.

    Returns:
        LinearProgram: The program, named ``PLANNER``.
    """
    n = grid.n_nodes
    z = np.asarray(z, dtype=float)
    if z.shape != (n,) or np.any(~(z > 0)):
        raise ArgumentError("z must hold one strictly positive project value per node")
    if len(tangents) != n:
        raise ArgumentError(f"need tangent families for {n} nodes, got {len(tangents)}")
    if params.promised_welfare is None:
        raise ArgumentError("promised welfare must be resolved before assembling the planner LP")
    if state is not None:
        _check_cover(tangents, state)
    if include_ic and pairs is None:
        raise ArgumentError("incentive rows requested without a pair set")

    linear_c = params.consumption_utility == "linear"
    mass = grid.density
    weighted = mass > 0
    lower = np.empty((n, 6))
    upper = np.empty((n, 6))
    lower[:, 3:], upper[:, 3:] = -np.inf, np.inf
    for k, (fam_c, fam_xc, fam_xm) in enumerate(tangents):
        lower[k, 0], upper[k, 0] = (-np.inf, np.inf) if linear_c else fam_c.interval
        lower[k, 1], upper[k, 1] = fam_xc.interval
        lower[k, 2], upper[k, 2] = fam_xm.interval
    cost = np.zeros((n, 6))
    cost[:, 3] = np.where(weighted, mass, 0.0)
    cost[:, 4] = cost[:, 5] = np.where(weighted, mass * z, 0.0)

    builder = LPBuilder("PLANNER")
    names = [f"{prefix}{k}" for k in range(n) for prefix in _VAR_PREFIX]
    builder.add_vars(names, lower.reshape(-1), upper.reshape(-1), cost.reshape(-1))

    # tangent rows: r − slope·v ≥ −intercept, node by node, family by family
    t_rows, t_cols, t_vals, t_rhs = [], [], [], []
    offset = 0
    for k, families in enumerate(tangents):
        for s, fam in enumerate(families):
            m = len(fam)
            local = offset + np.arange(m)
            t_rows.append(np.repeat(local, 2))
            t_cols.append(np.tile([6 * k + 3 + s, 6 * k + s], m))
            t_vals.append(np.column_stack([np.ones(m), -fam.slopes]).reshape(-1))
            t_rhs.append(-fam.intercepts)
            offset += m
    builder.add_rows([f"T{i}" for i in range(offset)], np.concatenate(t_rows), np.concatenate(t_cols),
                     np.concatenate(t_vals), "G", np.concatenate(t_rhs))

    utility_cols = np.column_stack([6 * np.arange(n), 6 * np.arange(n) + 1, 6 * np.arange(n) + 2])
    utility_vals = np.column_stack([np.ones(n), -grid.node_p_c, -grid.node_p_m])
    if include_ic:
        rows, cols, vals = ic_triplets(pairs, grid)
        builder.add_rows([f"I{j}" for j in range(len(pairs))], rows, cols, vals, "G", 0.0)
        builder.add_rows([f"O{k}" for k in range(n)], np.repeat(np.arange(n), 3), utility_cols.reshape(-1),
                         utility_vals.reshape(-1), "G", params.outside_option)

    pk_cols = utility_cols[weighted].reshape(-1)
    pk_vals = (utility_vals[weighted] * mass[weighted, None]).reshape(-1)
    builder.add_rows(["PK"], np.zeros(pk_cols.size, dtype=np.int64), pk_cols, pk_vals, "G",
                     params.promised_welfare)
    return builder.build()


def _check_cover(tangents, state: RefinementState) -> None:
    tol = 1e-12
    for k, (fam_c, fam_xc, fam_xm) in enumerate(tangents):
        boxes = ((fam_c, state.c_lo[k], state.c_hi[k]), (fam_xc, state.xc_lo[k], state.xc_hi[k]),
                 (fam_xm, state.xm_lo[k], state.xm_hi[k]))
        for fam, lo, hi in boxes:
            if np.isinf(lo) and np.isinf(hi):
                continue
            if fam.interval[0] > lo + tol * max(1.0, abs(lo)) or fam.interval[1] < hi - tol * max(1.0, abs(hi)):
                raise ArgumentError(f"tangent interval {fam.interval} does not cover box [{lo}, {hi}] at node {k}")


def node_tangents(
    state: RefinementState,
    params: ModelParams,
    max_lines: int,
    costs: Optional[Tuple[ConvexCost, ConvexCost]] = None,
) -> List[Tuple[TangentFamily, TangentFamily, TangentFamily]]:
    c_cost, x_cost = costs or (consumption_cost(params), task_cost_function(params))
    out = []
    for k in range(state.c_lo.size):
        c_interval = (0.0, 1.0) if c_cost.is_linear else (state.c_lo[k], state.c_hi[k])
        out.append((
            build_tangents(c_cost, c_interval, max(state.eps_c, 1e-300), max_lines),
            build_tangents(x_cost, (state.xc_lo[k], state.xc_hi[k]), state.eps_xc, max_lines),
            build_tangents(x_cost, (state.xm_lo[k], state.xm_hi[k]), state.eps_xm, max_lines),
        ))
    return out


# ─────────────────────────────────────────────────────────────
# 📏 BENCHMARK
# ─────────────────────────────────────────────────────────────
def _benchmark_tasks(grid: SkillGrid, z: np.ndarray, params: ModelParams, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    rho = params.rho
    scale = z / (lam * params.kappa_rho)
    x_c = (scale * grid.node_alpha_c ** rho) ** (rho / (rho - 2.0))
    x_m = (scale * grid.node_alpha_m ** rho) ** (rho / (rho - 2.0))
    return x_c, x_m


def benchmark_closed_form(grid: SkillGrid, z, params: ModelParams) -> Tuple[AllocationField, float]:
    """
    Unconstrained optimum without incentive constraints.

    Tasks solve z·x_phys = λκρ·x_phys^(ρ−1)/α^ρ node by node, task by task.
    With linear consumption λ = 1 and every node gets u = 𝒰; with log
    utility consumption is the common log λ and λ makes promise keeping bind.

    Returns:
        Tuple[AllocationField, float]: Allocation in utility units and λ.
    """
    if params.rho <= 2.0:
        raise DomainError(f"benchmark needs rho > 2, got {params.rho}")
    z = np.broadcast_to(np.asarray(z, dtype=float), (grid.n_nodes,)).copy()
    if np.any(~(z > 0)):
        raise ArgumentError("project values must be positive")
    welfare = 0.0 if params.promised_welfare is None else params.promised_welfare
    mass = grid.density

    if params.consumption_utility == "linear":
        lam = 1.0
        x_c, x_m = _benchmark_tasks(grid, z, params, lam)
        c = welfare + grid.node_p_c * x_c + grid.node_p_m * x_m
    else:
        def shortfall(log_lam: float) -> float:
            xc, xm = _benchmark_tasks(grid, z, params, np.exp(log_lam))
            return float(mass @ (log_lam - grid.node_p_c * xc - grid.node_p_m * xm)) - welfare

        lo, hi = -50.0, 50.0
        if shortfall(lo) * shortfall(hi) > 0:
            raise NumericError("benchmark multiplier is not bracketed")
        log_lam = brentq(shortfall, lo, hi, xtol=1e-14, maxiter=200)
        lam = float(np.exp(log_lam))
        x_c, x_m = _benchmark_tasks(grid, z, params, lam)
        c = np.full(grid.n_nodes, log_lam)
    return AllocationField(c=c, x_c=x_c, x_m=x_m, z=z), lam


def true_objective(alloc: AllocationField, grid: SkillGrid, params: ModelParams) -> float:
    """Σπ(C(c) + z·(X(x_c) + X(x_m))) with the exact costs."""
    c_cost, x_cost = consumption_cost(params), task_cost_function(params)
    per_node = c_cost.value(alloc.c) + alloc.z * (x_cost.value(alloc.x_c) + x_cost.value(alloc.x_m))
    weighted = grid.density > 0
    return float(grid.density[weighted] @ per_node[weighted])


# ─────────────────────────────────────────────────────────────
# 🔁 REFINEMENT
# ─────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class Binding:
    node: int
    var: str
    side: str


@dataclass(frozen=True, eq=False)
class EffectiveSlopes:
    """Dual-weighted tangent slopes: Σμφ per node and its per-unit versions."""

    c_weight: np.ndarray
    xc_weight: np.ndarray
    xm_weight: np.ndarray
    c: np.ndarray
    x_c: np.ndarray
    x_m: np.ndarray
    outside_duals: np.ndarray


@dataclass(frozen=True, eq=False)
class SolveResult:
    alloc: AllocationField
    lam: float
    lp_objective: float
    true_objective: float
    state: RefinementState
    slopes: EffectiveSlopes
    proper: bool
    error_bound: float
    lp: LinearProgram = field(repr=False)
    solution: LPSolution = field(repr=False)


def initial_state(grid: SkillGrid, z, params: ModelParams, spec: SolverSpec) -> RefinementState:
    """Boxes [0, box_scale × benchmark] for tasks; c boxed around the benchmark for log utility."""
    bench, _ = benchmark_closed_form(grid, z, params)
    n = grid.n_nodes
    if params.consumption_utility == "linear":
        c_lo, c_hi, eps_c = np.full(n, -np.inf), np.full(n, np.inf), 0.0
    else:
        half = 2.0 * np.maximum(np.abs(bench.c), 1.0)
        c_lo, c_hi, eps_c = bench.c - half, bench.c + half, spec.initial_eps
    return RefinementState(
        eps_c=eps_c, eps_xc=spec.initial_eps, eps_xm=spec.initial_eps,
        c_lo=c_lo, c_hi=c_hi,
        xc_lo=np.zeros(n), xc_hi=spec.box_scale * bench.x_c,
        xm_lo=np.zeros(n), xm_hi=spec.box_scale * bench.x_m,
    )


def proper_check(alloc: AllocationField, state: RefinementState, grid: SkillGrid) -> Tuple[bool, List[Binding]]:
    """
    Interior test of a solution against its boxes.

    A node is binding when a variable touches a box side, except a task at a
    zero lower bound. Zero-mass nodes and infinite sides never bind.

    Returns:
        Tuple[bool, List[Binding]]: Proper flag and the binding (node, var, side) list.
    """
    binding: List[Binding] = []
    active = grid.density > 0
    for var, value, lo, hi in (
        ("c", alloc.c, state.c_lo, state.c_hi),
        ("x_c", alloc.x_c, state.xc_lo, state.xc_hi),
        ("x_m", alloc.x_m, state.xm_lo, state.xm_hi),
    ):
        width = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
        tol = 1e-9 * np.maximum(width, 1.0)
        at_lo = active & np.isfinite(lo) & (value <= lo + tol) & ~((var != "c") & (lo == 0.0))
        at_hi = active & np.isfinite(hi) & (value >= hi - tol)
        binding += [Binding(int(k), var, "lo") for k in np.flatnonzero(at_lo)]
        binding += [Binding(int(k), var, "hi") for k in np.flatnonzero(at_hi)]
    binding.sort(key=lambda b: (b.node, b.var, b.side))
    return not binding, binding


def _recentered(value, lo, hi, fraction, floor_zero):
    finite = np.isfinite(lo) & np.isfinite(hi)
    half = fraction * (hi - lo)
    new_lo = np.where(finite, value - half, lo)
    new_hi = np.where(finite, value + half, hi)
    if floor_zero:
        new_lo = np.maximum(new_lo, 0.0)
    return new_lo, new_hi


def refine_state(
    state: RefinementState,
    alloc: AllocationField,
    proper: bool,
    binding: Sequence[Binding],
    spec: SolverSpec,
    record: Optional[RefinementRecord] = None,
) -> RefinementState:
    """Shrinks ε and recentres boxes after a proper solve; widens binding sides otherwise."""
    history = state.history + ((record,) if record is not None else ())
    if proper:
        c_lo, c_hi = _recentered(alloc.c, state.c_lo, state.c_hi, spec.recenter_fraction, False)
        xc_lo, xc_hi = _recentered(alloc.x_c, state.xc_lo, state.xc_hi, spec.recenter_fraction, True)
        xm_lo, xm_hi = _recentered(alloc.x_m, state.xm_lo, state.xm_hi, spec.recenter_fraction, True)
        return replace(
            state,
            eps_c=state.eps_c * spec.shrink, eps_xc=state.eps_xc * spec.shrink, eps_xm=state.eps_xm * spec.shrink,
            c_lo=c_lo, c_hi=c_hi, xc_lo=xc_lo, xc_hi=xc_hi, xm_lo=xm_lo, xm_hi=xm_hi,
            iteration=state.iteration + 1, proper=True, history=history,
        )

    boxes = {
        "c": [np.array(state.c_lo), np.array(state.c_hi)],
        "x_c": [np.array(state.xc_lo), np.array(state.xc_hi)],
        "x_m": [np.array(state.xm_lo), np.array(state.xm_hi)],
    }
    for b in binding:
        lo, hi = boxes[b.var]
        width = max(hi[b.node] - lo[b.node], 1e-12)
        if b.side == "hi":
            hi[b.node] += width
        else:
            lo[b.node] -= width
            if b.var != "c":
                lo[b.node] = max(lo[b.node], 0.0)
    return replace(
        state,
        c_lo=boxes["c"][0], c_hi=boxes["c"][1],
        xc_lo=boxes["x_c"][0], xc_hi=boxes["x_c"][1],
        xm_lo=boxes["x_m"][0], xm_hi=boxes["x_m"][1],
        iteration=state.iteration + 1, proper=False, history=history,
    )


def _effective_slopes(
    lp: LinearProgram,
    solution: LPSolution,
    tangents,
    grid: SkillGrid,
    z: np.ndarray,
) -> EffectiveSlopes:
    n = grid.n_nodes
    duals = solution.duals
    weights = np.zeros((n, 3))
    offset = 0
    for k, families in enumerate(tangents):
        for s, fam in enumerate(families):
            m = len(fam)
            weights[k, s] = duals[offset:offset + m] @ fam.slopes
            offset += m
    mass = grid.density
    with np.errstate(divide="ignore", invalid="ignore"):
        per_c = np.where(mass > 0, weights[:, 0] / mass, np.nan)
        per_xc = np.where(mass > 0, weights[:, 1] / (mass * z), np.nan)
        per_xm = np.where(mass > 0, weights[:, 2] / (mass * z), np.nan)
    outside = np.zeros(n)
    if "O0" in lp.row_names:
        first = lp.row_names.index("O0")
        outside = duals[first:first + n].copy()
    return EffectiveSlopes(
        c_weight=weights[:, 0], xc_weight=weights[:, 1], xm_weight=weights[:, 2],
        c=per_c, x_c=per_xc, x_m=per_xm, outside_duals=outside,
    )


@opik.track
def solve_fixed_assignment(
    grid: SkillGrid,
    z,
    params: ModelParams,
    spec: SolverSpec,
    state: Optional[RefinementState] = None,
    pairs: Optional[IrreduciblePairSet] = None,
    on_iteration: Optional[Callable[[int, LinearProgram], None]] = None,
) -> SolveResult:
    """
    Refinement loop for a fixed assignment.

    Each pass builds tangents on the current boxes, solves the LP and tests
    whether the solution is interior. A proper solution halves (``shrink``)
    every precision and recentres the boxes; an improper one widens the
    binding box sides. The loop stops at the first proper solution whose
    total precision ε_c + ε_xc + ε_xm is at most ``target_eps``.

    Args:
        grid (SkillGrid): Lattice with masses.
        z: Project value per node (scalar broadcasts).
        params (ModelParams): Model with promised welfare resolved.
        spec (SolverSpec): Refinement and LP options.
        state (RefinementState, optional): Starting boxes; benchmark-based if omitted.
        pairs (IrreduciblePairSet, optional): Precomputed incentive pairs.
        on_iteration (Callable, optional): Called with (iteration, lp) after assembly.

    Returns:
        SolveResult: Allocation, λ, objectives, final state and effective slopes.
    """
    z = np.broadcast_to(np.asarray(z, dtype=float), (grid.n_nodes,)).copy()
    if params.promised_welfare is None:
        raise ArgumentError("promised welfare must be resolved before solving")
    state = state or initial_state(grid, z, params, spec)
    if spec.ic and pairs is None:
        pairs = enumerate_irreducible(grid, spec.max_offset)
    costs = (consumption_cost(params), task_cost_function(params))

    for _ in range(spec.max_iterations):
        tangents = node_tangents(state, params, spec.max_tangents, costs)
        lp = assemble_planner_lp(grid, z, tangents, pairs, params, state=state, include_ic=spec.ic)
        if on_iteration is not None:
            on_iteration(state.iteration, lp)
        solution = lp_solve(lp, spec.lp)
        if solution.status == "infeasible":
            raise PlannerInfeasibleError(
                f"planner LP infeasible at iteration {state.iteration}: promised welfare "
                f"{params.promised_welfare:.6g} cannot be met inside the current boxes")
        if not solution.optimal:
            raise NumericError(f"planner LP ended with status '{solution.status}' at iteration {state.iteration}")

        x = solution.x.reshape(grid.n_nodes, 6)
        alloc = AllocationField(c=x[:, 0], x_c=np.maximum(x[:, 1], 0.0), x_m=np.maximum(x[:, 2], 0.0), z=z)
        proper, binding = proper_check(alloc, state, grid)
        true_obj = true_objective(alloc, grid, params)
        record = RefinementRecord(
            iteration=state.iteration, eps_c=state.eps_c, eps_xc=state.eps_xc, eps_xm=state.eps_xm,
            proper=proper, n_binding=len(binding), lp_objective=solution.objective,
            true_objective=true_obj, n_rows=lp.n_rows,
        )
        logger.info(
            f"🔁 iter {state.iteration}: eps=({state.eps_c:.2e}, {state.eps_xc:.2e}, {state.eps_xm:.2e}) "
            f"proper={proper} binding={len(binding)} lp={solution.objective:.10g} rows={lp.n_rows}")

        if proper and state.total_eps <= spec.target_eps:
            final = replace(state, proper=True, history=state.history + (record,))
            lam = solution.dual_of(lp, "PK")
            logger.info(f"✅ planner converged after {state.iteration + 1} iterations, λ={lam:.10g}")
            return SolveResult(
                alloc=alloc, lam=float(lam), lp_objective=solution.objective, true_objective=true_obj,
                state=final, slopes=_effective_slopes(lp, solution, tangents, grid, z), proper=True,
                error_bound=final.error_bound(z), lp=lp, solution=solution,
            )
        state = refine_state(state, alloc, proper, binding, spec, record)

    raise ConvergenceError(
        f"planner refinement did not reach eps {spec.target_eps:.1e} within {spec.max_iterations} iterations",
        history=state.history,
    )


# ─────────────────────────────────────────────────────────────
# 🏭 ASSIGNMENT
# ─────────────────────────────────────────────────────────────
def firm_distribution(spec: FirmSpec, grid: SkillGrid, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Project values and masses (unit total mass) for the assignment iteration."""
    if spec.kind == "degenerate":
        return np.array([spec.value]), np.array([1.0])
    if spec.kind == "explicit":
        masses = np.asarray(spec.masses, dtype=float)
        return np.asarray(spec.values, dtype=float), masses / masses.sum()
    eq = positive_equilibrium(grid, params)
    return np.asarray(infer_firm(eq["effective_skill"], params)), grid.density.copy()


def effective_skill_index(alloc: AllocationField, params: ModelParams) -> np.ndarray:
    """x_c_phys² + x_m_phys², i.e. −2·(X(x_c) + X(x_m))."""
    power = 2.0 / params.rho
    return alloc.x_c ** power + alloc.x_m ** power


def initial_assignment(grid, firms, params, how: str, seed: int) -> np.ndarray:
    """Project values before the first solve: sorted by benchmark effective skill, or by a seeded draw."""
    values, masses = firms
    if how == "random":
        index = np.random.default_rng(seed).random(grid.n_nodes)
    else:
        power = 2.0 * params.rho / (params.rho - 2.0)
        index = grid.node_alpha_c ** power + grid.node_alpha_m ** power
    return comonotone_coupling(index, grid.density, values, masses)


@dataclass(frozen=True, eq=False)
class AssignmentResult:
    result: SolveResult
    z: np.ndarray
    outer_iterations: int
    z_changes: Tuple[float, ...]
    objectives: Tuple[float, ...]

    @property
    def alloc(self) -> AllocationField:
        return self.result.alloc

    @property
    def lam(self) -> float:
        return self.result.lam


@opik.track
def assignment_iterate(
    grid: SkillGrid,
    firms: Tuple[np.ndarray, np.ndarray],
    params: ModelParams,
    spec: SolverSpec,
    assignment: AssignmentSpec,
    checkpoint_dir: Optional[str] = None,
    resume: bool = False,
    seed: int = 0,
    on_iteration: Optional[Callable[[int, LinearProgram], None]] = None,
) -> AssignmentResult:
    """
    Alternates the fixed-assignment solve with positive re-sorting of firms.

    Project values are re-coupled comonotonically with the effective skill
    index of the latest allocation until no node's z moves by more than
    ``assignment.tolerance``. One checkpoint is written per outer iteration
    when ``checkpoint_dir`` is set; ``resume`` continues from the latest one.

    Returns:
        AssignmentResult: Final solve, assignment and per-iteration diagnostics.
    """
    values, masses = firms
    z = initial_assignment(grid, firms, params, assignment.initial, seed)
    changes: List[float] = []
    objectives: List[float] = []
    start = 1
    if resume and checkpoint_dir:
        latest = io_service.latest_checkpoint(checkpoint_dir)
        if latest is not None:
            arrays, meta = io_service.load_checkpoint(checkpoint_dir, latest)
            changes, objectives = list(meta["z_changes"]), list(meta["objectives"])
            if changes and changes[-1] <= assignment.tolerance:
                # settled run: redo its last solve
                z, start = arrays["z"], latest
                changes, objectives = changes[:-1], objectives[:-1]
            else:
                z, start = arrays["z_next"], latest + 1
            logger.info(f"📂 resuming assignment iteration from checkpoint {latest}")

    pairs = enumerate_irreducible(grid, spec.max_offset) if spec.ic else None
    for outer in range(start, assignment.max_outer + 1):
        result = solve_fixed_assignment(grid, z, params, spec, pairs=pairs, on_iteration=on_iteration)
        z_next = comonotone_coupling(effective_skill_index(result.alloc, params), grid.density, values, masses)
        change = float(np.max(np.abs(z_next - z)))
        changes.append(change)
        objectives.append(result.true_objective)
        logger.info(f"🔁 outer {outer}: max z change {change:.3e}, objective {result.true_objective:.10g}")
        if checkpoint_dir:
            io_service.save_checkpoint(
                checkpoint_dir, outer,
                arrays={"c": result.alloc.c, "x_c": result.alloc.x_c, "x_m": result.alloc.x_m,
                        "z": z, "z_next": z_next},
                meta={"lam": result.lam, "z_changes": changes, "objectives": objectives,
                      "eps": [result.state.eps_c, result.state.eps_xc, result.state.eps_xm]},
            )
        if change <= assignment.tolerance:
            return AssignmentResult(result=result, z=z, outer_iterations=outer,
                                    z_changes=tuple(changes), objectives=tuple(objectives))
        z = z_next

    tail = ", ".join(f"{c:.2e}" for c in changes[-5:])
    raise ConvergenceError(
        f"assignment did not settle within {assignment.max_outer} outer iterations (last changes: {tail})",
        history=changes,
    )
