"""Skill lattice construction, coordinate maps and lattice-level utility checks."""
import logging
from math import gcd
from typing import List, Optional, Sequence, Tuple

import numpy as np

from multitax.src.exceptions import ArgumentError, DomainError
from multitax.src.models.fields import AllocationField, ConvexityViolation, SkillGrid
from multitax.src.models.params import ModelParams

logger = logging.getLogger(__name__)

SPACINGS = ("geometric", "uniform-alpha", "uniform-p")


# ─────────────────────────────────────────────────────────────
# 🔁 COORDINATE MAPS
# ─────────────────────────────────────────────────────────────
def alpha_to_p(alpha_s, params: ModelParams):
    """
    Maps a skill to its parameter coordinate p = κ·α^(−ρ).

    Args:
        alpha_s (float | np.ndarray): Skill level(s), strictly positive.
        params (ModelParams): Model parameters (κ, ρ).

    Returns:
        float | np.ndarray: Parameter coordinate(s), strictly decreasing in α.
    """
    alpha = np.asarray(alpha_s, dtype=float)
    if np.any(~(alpha > 0)):
        raise DomainError(f"skills must be positive, got {alpha_s}")
    p = params.kappa * alpha ** (-params.rho)
    return float(p) if p.ndim == 0 else p


def p_to_alpha(p_s, params: ModelParams):
    """Inverse of :func:`alpha_to_p`: α = (κ/p)^(1/ρ)."""
    p = np.asarray(p_s, dtype=float)
    if np.any(~(p > 0)):
        raise DomainError(f"skill parameters must be positive, got {p_s}")
    alpha = (params.kappa / p) ** (1.0 / params.rho)
    return float(alpha) if alpha.ndim == 0 else alpha


def task_cost(x_util, params: ModelParams):
    """Resource cost −½·x^(2/ρ) of providing task disutility x (utils)."""
    x = np.asarray(x_util, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"task disutility must be non-negative, got {x_util}")
    out = -0.5 * x ** (2.0 / params.rho)
    return float(out) if out.ndim == 0 else out


def physical_to_util(x_phys, params: ModelParams):
    return np.asarray(x_phys, dtype=float) ** params.rho


def util_to_physical(x_util, params: ModelParams):
    return np.asarray(x_util, dtype=float) ** (1.0 / params.rho)


# ─────────────────────────────────────────────────────────────
# 🧱 GRID CONSTRUCTION
# ─────────────────────────────────────────────────────────────
def _axis(n: int, lo: float, hi: float, spacing: str, params: ModelParams) -> np.ndarray:
    if n == 1:
        return np.array([np.sqrt(lo * hi)]) if spacing == "geometric" else np.array([0.5 * (lo + hi)])
    if not lo < hi:
        raise ArgumentError(f"skill range needs lo < hi for {n} nodes, got ({lo}, {hi})")
    if spacing == "geometric":
        return np.geomspace(lo, hi, n)
    if spacing == "uniform-alpha":
        return np.linspace(lo, hi, n)
    if spacing == "uniform-p":
        # descending p ↔ ascending α
        p = np.linspace(alpha_to_p(lo, params), alpha_to_p(hi, params), n)
        alpha = p_to_alpha(p, params)
        alpha[0], alpha[-1] = lo, hi
        return alpha
    raise ArgumentError(f"unknown spacing '{spacing}', expected one of {SPACINGS}")


def build_grid(
    n_c: int,
    n_m: int,
    alpha_c_range: Sequence[float],
    alpha_m_range: Sequence[float],
    params: ModelParams,
    spacing: str = "geometric",
    density: Optional[np.ndarray] = None,
) -> SkillGrid:
    """
    Builds a rectangular skill lattice; p-coordinates are always derived from α.

    Args:
        n_c (int): Nodes along cognitive skill.
        n_m (int): Nodes along manual skill.
        alpha_c_range (Sequence[float]): (lo, hi) cognitive skill.
        alpha_m_range (Sequence[float]): (lo, hi) manual skill.
        params (ModelParams): Model parameters.
        spacing (str): "geometric", "uniform-alpha" or "uniform-p".
        density (np.ndarray, optional): Node masses in row-major order; uniform if omitted.

    Returns:
        SkillGrid: The lattice with normalized density.
    """
    if n_c < 1 or n_m < 1:
        raise ArgumentError(f"grid sizes must be positive, got {n_c}x{n_m}")
    alpha_c = _axis(n_c, *alpha_c_range, spacing, params)
    alpha_m = _axis(n_m, *alpha_m_range, spacing, params)
    if density is None:
        density = np.full(n_c * n_m, 1.0 / (n_c * n_m))
    return make_grid(alpha_c, alpha_m, params, density, spacing=spacing)


def make_grid(alpha_c, alpha_m, params: ModelParams, density, spacing: str = "custom") -> SkillGrid:
    alpha_c = np.asarray(alpha_c, dtype=float)
    alpha_m = np.asarray(alpha_m, dtype=float)
    for name, axis in (("alpha_c", alpha_c), ("alpha_m", alpha_m)):
        if axis.ndim != 1 or axis.size == 0:
            raise ArgumentError(f"{name} must be a non-empty vector")
        if np.any(np.diff(axis) <= 0):
            raise ArgumentError(f"{name} must be strictly increasing")
    density = _normalize_density(density, alpha_c.size * alpha_m.size)
    return SkillGrid(
        alpha_c=alpha_c,
        alpha_m=alpha_m,
        p_c=alpha_to_p(alpha_c, params),
        p_m=alpha_to_p(alpha_m, params),
        density=density,
        spacing=spacing,
    )


def with_density(grid: SkillGrid, density) -> SkillGrid:
    return SkillGrid(
        alpha_c=grid.alpha_c, alpha_m=grid.alpha_m, p_c=grid.p_c, p_m=grid.p_m,
        density=_normalize_density(density, grid.n_nodes), spacing=grid.spacing,
    )


def _normalize_density(density, n_nodes: int) -> np.ndarray:
    density = np.asarray(density, dtype=float).reshape(-1)
    if density.size != n_nodes:
        raise ArgumentError(f"density has {density.size} entries for {n_nodes} nodes")
    if np.any(~np.isfinite(density)) or np.any(density < 0):
        raise ArgumentError("density masses must be finite and non-negative")
    total = density.sum()
    if total <= 0:
        raise ArgumentError("density has zero total mass")
    return density / total


def synthetic_density(
    grid: SkillGrid,
    kind: str = "lognormal",
    spread: float = 0.25,
    correlation: float = 0.0,
) -> np.ndarray:
    """
    Node masses for synthetic populations.

    "lognormal" puts a correlated bivariate normal in log-skill centred mid-grid,
    "bimodal" mixes two such bumps at the lower and upper thirds of the range,
    "uniform" gives equal mass to every node.
    """
    if kind == "uniform":
        return np.full(grid.n_nodes, 1.0 / grid.n_nodes)
    la_c, la_m = np.log(grid.node_alpha_c), np.log(grid.node_alpha_m)

    def bump(mu_c: float, mu_m: float) -> np.ndarray:
        d_c, d_m = (la_c - mu_c) / spread, (la_m - mu_m) / spread
        q = (d_c ** 2 - 2 * correlation * d_c * d_m + d_m ** 2) / (1 - correlation ** 2)
        return np.exp(-0.5 * q)

    lo_c, hi_c = np.log(grid.alpha_c[0]), np.log(grid.alpha_c[-1])
    lo_m, hi_m = np.log(grid.alpha_m[0]), np.log(grid.alpha_m[-1])
    if kind == "lognormal":
        mass = bump(0.5 * (lo_c + hi_c), 0.5 * (lo_m + hi_m))
    elif kind == "bimodal":
        mass = bump(lo_c + (hi_c - lo_c) / 3, lo_m + (hi_m - lo_m) / 3)
        mass = mass + bump(lo_c + 2 * (hi_c - lo_c) / 3, lo_m + 2 * (hi_m - lo_m) / 3)
    else:
        raise ArgumentError(f"unknown synthetic density '{kind}'")
    return mass / mass.sum()


def p_affine(grid: SkillGrid, tol: float = 1e-9) -> bool:
    """True when both p-axes are equally spaced, so lattice lines are straight in p."""
    for p in (grid.p_c, grid.p_m):
        if p.size > 2:
            step = np.diff(p)
            if np.max(np.abs(step - step[0])) > tol * np.max(np.abs(p)):
                return False
    return True


# ─────────────────────────────────────────────────────────────
# 📐 UTILITY FIELD CHECKS
# ─────────────────────────────────────────────────────────────
def indirect_utility_field(alloc: AllocationField, grid: SkillGrid) -> np.ndarray:
    """Node-wise u = c − p_c·x_c − p_m·x_m."""
    if alloc.n_nodes != grid.n_nodes:
        raise ArgumentError(
            f"allocation has {alloc.n_nodes} nodes but the grid has {grid.n_nodes}")
    return alloc.c - grid.node_p_c * alloc.x_c - grid.node_p_m * alloc.x_m


def _primitive_directions(max_offset: int) -> List[Tuple[int, int]]:
    out = []
    for di in range(0, max_offset + 1):
        for dj in range(-max_offset, max_offset + 1):
            if (di, dj) == (0, 0) or (di == 0 and dj < 0):
                continue
            if gcd(di, abs(dj)) == 1:
                out.append((di, dj))
    return out


def discrete_convexity_check(
    u: np.ndarray,
    grid: SkillGrid,
    tol: float = 1e-9,
    max_offset: Optional[int] = None,
) -> List[ConvexityViolation]:
    """
    Lattice convexity and monotonicity test of an indirect utility field.

    For every node q and primitive lattice offset d with |d| ≤ max_offset
    (default max(n_c, n_m) − 1, every offset the lattice holds), the triple
    (q − d, q, q + d) is tested when it is collinear in p; q then lies between
    its neighbours and u(q) must not exceed the linear interpolation of its
    neighbours. u must also be non-increasing in p along both axes.

    Returns:
        List[ConvexityViolation]: Empty when the field passes.
    """
    u = np.asarray(u, dtype=float).reshape(grid.shape)
    if max_offset is None:
        max_offset = max(grid.n_c, grid.n_m) - 1
    pc, pm = grid.p_c, grid.p_m
    violations: List[ConvexityViolation] = []

    for di, dj in _primitive_directions(max_offset):
        i0, i1 = di, grid.n_c - di
        j0, j1 = max(dj, -dj, 0), grid.n_m - max(dj, -dj, 0)
        if i1 <= i0 or j1 <= j0:
            continue
        ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
        lo_c, mid_c, hi_c = pc[ii - di], pc[ii], pc[ii + di]
        lo_m, mid_m, hi_m = pm[jj - dj], pm[jj], pm[jj + dj]
        span_c, span_m = hi_c - lo_c, hi_m - lo_m
        cross = (mid_c - lo_c) * span_m - (mid_m - lo_m) * span_c
        scale = np.abs(span_c) * np.abs(span_m) + span_c ** 2 + span_m ** 2
        collinear = np.abs(cross) <= 1e-9 * scale
        if not np.any(collinear):
            continue
        norm2 = span_c ** 2 + span_m ** 2
        t = ((mid_c - lo_c) * span_c + (mid_m - lo_m) * span_m) / norm2
        interp = (1 - t) * u[ii - di, jj - dj] + t * u[ii + di, jj + dj]
        excess = u[ii, jj] - interp
        bad = collinear & (excess > tol)
        for a, b, e in zip(ii[bad], jj[bad], excess[bad]):
            violations.append(ConvexityViolation(
                node=int(grid.node_index(a, b)), kind="midpoint", direction=(di, dj), excess=float(e)))

    # u non-increasing in p ⇔ non-decreasing in α index
    for axis, direction in ((0, (1, 0)), (1, (0, 1))):
        drop = -np.diff(u, axis=axis)
        for a, b in zip(*np.nonzero(drop > tol)):
            node = grid.node_index(a + (axis == 0), b + (axis == 1))
            violations.append(ConvexityViolation(
                node=int(node), kind="monotone", direction=direction, excess=float(drop[a, b])))

    if violations:
        logger.debug(f"⚠️ {len(violations)} lattice convexity violations")
    return violations
